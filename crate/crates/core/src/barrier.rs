//! Barrier bookkeeping on the estimated state.
//!
//! For a relative-degree-1 barrier `h` with Lipschitz constant `L`, safety of
//! the true state follows from `h₀(x̂, t) = h(x̂) − L·M(t) ≥ 0`. The adaptive
//! constraint is written for `h_ε = h₀ − ε`. Higher relative degrees use a
//! user-supplied chain `s₀ = h, s_k = (d/dt + λ_k) s_{k−1}` with per-level
//! Lipschitz constants, and the same constraint on `s_ε = s_{r−1}^M − ε`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{ControlAffineSystem, VectorField};
use crate::error::{check_len, Error, Result};
use crate::fat::{fat_eval, AdaptiveState, FatConfig};
use crate::observer::ErrorBoundModel;

pub type ScalarField = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// Relative-degree-1 barrier `h` with gradient and Lipschitz constant.
#[derive(Clone)]
pub struct BarrierRd1 {
    h: ScalarField,
    grad_h: VectorField,
    lipschitz: f64,
}

impl fmt::Debug for BarrierRd1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierRd1")
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl BarrierRd1 {
    pub fn new(h: ScalarField, grad_h: VectorField, lipschitz: f64) -> Result<Self> {
        check_positive("lipschitz", lipschitz)?;
        Ok(Self {
            h,
            grad_h,
            lipschitz,
        })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.h)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad_h)(x)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// The same barrier seen as a chain of length one.
    pub fn as_chain(&self) -> BarrierChain {
        BarrierChain {
            s: vec![self.h.clone()],
            grad_s: vec![self.grad_h.clone()],
            lambda: Vec::new(),
            lipschitz: vec![self.lipschitz],
        }
    }
}

/// Lifted chain `s₀ … s_{r−1}` for a barrier of relative degree `r`.
///
/// `lambda[k−1]` is the `λ_k` used to build `s_k`; the last root of the
/// characteristic polynomial is played by `μ` in the final constraint.
#[derive(Clone)]
pub struct BarrierChain {
    s: Vec<ScalarField>,
    grad_s: Vec<VectorField>,
    lambda: Vec<f64>,
    lipschitz: Vec<f64>,
}

impl fmt::Debug for BarrierChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierChain")
            .field("r", &self.s.len())
            .field("lambda", &self.lambda)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl BarrierChain {
    pub fn new(
        s: Vec<ScalarField>,
        grad_s: Vec<VectorField>,
        lambda: Vec<f64>,
        lipschitz: Vec<f64>,
    ) -> Result<Self> {
        let r = s.len();
        if r == 0 {
            return Err(Error::Argument("barrier chain needs at least s₀".into()));
        }
        check_len("chain gradients", r, grad_s.len())?;
        check_len("chain λ values", r - 1, lambda.len())?;
        check_len("chain Lipschitz constants", r, lipschitz.len())?;
        for l in &lambda {
            check_positive("lambda", *l)?;
        }
        for l in &lipschitz {
            check_positive("lipschitz", *l)?;
        }
        Ok(Self {
            s,
            grad_s,
            lambda,
            lipschitz,
        })
    }

    pub fn relative_degree(&self) -> usize {
        self.s.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lipschitz(&self, k: usize) -> Result<f64> {
        self.check_level(k)?;
        Ok(self.lipschitz[k])
    }

    pub fn gradient(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_level(k)?;
        Ok((self.grad_s[k])(x))
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k < self.s.len() {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "chain level {k} out of range for relative degree {}",
                self.s.len()
            )))
        }
    }

    fn top(&self) -> usize {
        self.s.len() - 1
    }
}

/// Either kind of barrier, as carried by a simulation config.
#[derive(Debug, Clone)]
pub enum Barrier {
    Rd1(BarrierRd1),
    Chain(BarrierChain),
}

impl Barrier {
    /// The safe-set function `h = s₀`.
    pub fn safety_value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Rd1(b) => b.value(x),
            Self::Chain(c) => (c.s[0])(x),
        }
    }

    pub fn safety_lipschitz(&self) -> f64 {
        match self {
            Self::Rd1(b) => b.lipschitz,
            Self::Chain(c) => c.lipschitz[0],
        }
    }

    /// The function the control constraint is written on (`h` or `s_{r−1}`).
    pub fn top_value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Rd1(b) => b.value(x),
            Self::Chain(c) => (c.s[c.top()])(x),
        }
    }

    pub fn top_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Rd1(b) => b.gradient(x),
            Self::Chain(c) => (c.grad_s[c.top()])(x),
        }
    }

    pub fn top_lipschitz(&self) -> f64 {
        match self {
            Self::Rd1(b) => b.lipschitz,
            Self::Chain(c) => c.lipschitz[c.top()],
        }
    }

    /// `h₀` (or `s₀^M`) at the estimate.
    pub fn h0(&self, xhat: &DVector<f64>, t: f64, bound: &ErrorBoundModel) -> Result<f64> {
        Ok(self.safety_value(xhat) - self.safety_lipschitz() * bound.value(t)?)
    }

    /// `h_ε` (or `s_ε`) at the estimate.
    pub fn shifted(
        &self,
        xhat: &DVector<f64>,
        t: f64,
        bound: &ErrorBoundModel,
        epsilon: f64,
    ) -> Result<f64> {
        Ok(self.top_value(xhat) - self.top_lipschitz() * bound.value(t)? - epsilon)
    }

    pub fn epsilon_bound(
        &self,
        xhat0: &DVector<f64>,
        bound: &ErrorBoundModel,
        state0: &AdaptiveState,
        cfg: &FatConfig,
    ) -> Result<f64> {
        match self {
            Self::Rd1(b) => epsilon_bound_rd1(b, xhat0, bound, state0, cfg),
            Self::Chain(c) => epsilon_bound_rdr(c, xhat0, bound, state0, cfg),
        }
    }

    pub fn constraint(
        &self,
        sys: &ControlAffineSystem,
        xhat: &DVector<f64>,
        t: f64,
        bound: &ErrorBoundModel,
        state: &AdaptiveState,
        cfg: &FatConfig,
    ) -> Result<ConstraintCoeffs> {
        match self {
            Self::Rd1(b) => constraint_rd1(b, sys, xhat, t, bound, state, cfg),
            Self::Chain(c) => constraint_rdr(c, sys, xhat, t, bound, state, cfg),
        }
    }
}

/// Feasible inputs satisfy `a·u + b ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCoeffs {
    pub a: DVector<f64>,
    pub b: f64,
}

impl ConstraintCoeffs {
    pub fn new(a: DVector<f64>, b: f64) -> Self {
        Self { a, b }
    }

    pub fn residual(&self, u: &DVector<f64>) -> f64 {
        self.a.dot(u) + self.b
    }
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config {
            key: key.to_owned(),
            reason: format!("must be positive, got {v}"),
        })
    }
}

/// `h(x̂) − L·M(t)`.
pub fn h0_eval(
    bar: &BarrierRd1,
    xhat: &DVector<f64>,
    t: f64,
    bound: &ErrorBoundModel,
) -> Result<f64> {
    Ok(bar.value(xhat) - bar.lipschitz * bound.value(t)?)
}

/// `h₀(x̂, t) − ε`.
pub fn h_eps_eval(
    bar: &BarrierRd1,
    xhat: &DVector<f64>,
    t: f64,
    bound: &ErrorBoundModel,
    epsilon: f64,
) -> Result<f64> {
    Ok(h0_eval(bar, xhat, t, bound)? - epsilon)
}

pub fn chain_s_eval(chain: &BarrierChain, k: usize, x: &DVector<f64>) -> Result<f64> {
    chain.check_level(k)?;
    Ok((chain.s[k])(x))
}

/// `s_k(x̂) − L_k·M(t)`.
pub fn skm_eval(
    chain: &BarrierChain,
    k: usize,
    xhat: &DVector<f64>,
    t: f64,
    bound: &ErrorBoundModel,
) -> Result<f64> {
    Ok(chain_s_eval(chain, k, xhat)? - chain.lipschitz[k] * bound.value(t)?)
}

/// `N + Σᵢ (2‖θ̂ᵢ(0)‖/θ̄ᵢ + ‖θ̂ᵢ(0)‖²/θ̄ᵢ²)`.
pub fn epsilon_denominator(state0: &AdaptiveState) -> f64 {
    let n = state0.terms() as f64;
    n + state0
        .theta_hat
        .iter()
        .zip(&state0.theta_bar)
        .map(|(th, bar)| {
            let ratio = th.norm() / bar;
            2.0 * ratio + ratio * ratio
        })
        .sum::<f64>()
}

fn check_terms(state0: &AdaptiveState, cfg: &FatConfig) -> Result<()> {
    check_len("parameter vectors", cfg.terms, state0.terms())?;
    if state0.theta_bar.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::Config {
            key: "theta_bar".into(),
            reason: "every bound must be positive".into(),
        });
    }
    Ok(())
}

/// Largest admissible `ε` for a relative-degree-1 barrier. A non-positive
/// value means no `ε` satisfies the hypothesis for this initial data.
pub fn epsilon_bound_rd1(
    bar: &BarrierRd1,
    xhat0: &DVector<f64>,
    bound: &ErrorBoundModel,
    state0: &AdaptiveState,
    cfg: &FatConfig,
) -> Result<f64> {
    check_terms(state0, cfg)?;
    Ok(h0_eval(bar, xhat0, 0.0, bound)? / epsilon_denominator(state0))
}

/// Largest admissible `ε` for a chain: `min_k s_k^M(x̂(0), 0)` over the same
/// denominator.
pub fn epsilon_bound_rdr(
    chain: &BarrierChain,
    xhat0: &DVector<f64>,
    bound: &ErrorBoundModel,
    state0: &AdaptiveState,
    cfg: &FatConfig,
) -> Result<f64> {
    check_terms(state0, cfg)?;
    let mut lowest = f64::INFINITY;
    for k in 0..chain.relative_degree() {
        lowest = lowest.min(skm_eval(chain, k, xhat0, 0.0, bound)?);
    }
    Ok(lowest / epsilon_denominator(state0))
}

/// Row of `K_BF` for `h_ε`:
///
/// `a = ∇h(x̂)ᵀ g(x̂)`,
/// `b = ∇h·(f(x̂) + Σ θ̂ᵢφᵢ) − L·Ṁ − ‖∇h‖E + μ h_ε − μNε`.
pub fn constraint_rd1(
    bar: &BarrierRd1,
    sys: &ControlAffineSystem,
    xhat: &DVector<f64>,
    t: f64,
    bound: &ErrorBoundModel,
    state: &AdaptiveState,
    cfg: &FatConfig,
) -> Result<ConstraintCoeffs> {
    assemble(
        bar.value(xhat),
        &bar.gradient(xhat),
        bar.lipschitz,
        sys,
        xhat,
        t,
        bound,
        state,
        cfg,
    )
}

/// Row of `K_BF` for `s_ε`; same assembly as [`constraint_rd1`] on the top
/// of the chain.
pub fn constraint_rdr(
    chain: &BarrierChain,
    sys: &ControlAffineSystem,
    xhat: &DVector<f64>,
    t: f64,
    bound: &ErrorBoundModel,
    state: &AdaptiveState,
    cfg: &FatConfig,
) -> Result<ConstraintCoeffs> {
    let top = chain.top();
    assemble(
        (chain.s[top])(xhat),
        &(chain.grad_s[top])(xhat),
        chain.lipschitz[top],
        sys,
        xhat,
        t,
        bound,
        state,
        cfg,
    )
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    value: f64,
    grad: &DVector<f64>,
    lipschitz: f64,
    sys: &ControlAffineSystem,
    xhat: &DVector<f64>,
    t: f64,
    bound: &ErrorBoundModel,
    state: &AdaptiveState,
    cfg: &FatConfig,
) -> Result<ConstraintCoeffs> {
    check_len("barrier gradient", sys.state_dim(), grad.len())?;
    let drift = sys.drift(xhat)? + fat_eval(state, cfg, t)?;
    let g = sys.input_matrix(xhat)?;
    let shifted = value - lipschitz * bound.value(t)? - state.epsilon;
    // ∂h_ε/∂x̂ = ∇h since M(t) and ε do not depend on x̂.
    let a = g.tr_mul(grad);
    let b =
        grad.dot(&drift) - lipschitz * bound.derivative(t)? - grad.norm() * cfg.truncation_bound
            + state.mu * shifted
            - state.mu * cfg.terms as f64 * state.epsilon;
    Ok(ConstraintCoeffs { a, b })
}

/// Sampled estimate of `sup ‖∇h‖₂` over the box `[lo, hi]`, inflated by 5%.
pub fn estimate_lipschitz<G>(
    grad: G,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<f64>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    check_len("operating box upper corner", lo.len(), hi.len())?;
    if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) || samples == 0 {
        return Err(Error::Argument(
            "operating box must satisfy lo ≤ hi and be sampled at least once".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup = 0.0f64;
    for _ in 0..samples {
        let x = DVector::from_iterator(
            lo.len(),
            lo.iter()
                .zip(hi.iter())
                .map(|(l, h)| l + (h - l) * rng.gen::<f64>()),
        );
        sup = sup.max(grad(&x).norm());
    }
    Ok(1.05 * sup)
}
