//! Function approximation with a truncated Fourier basis.
//!
//! The disturbance `Λ(t)` that the estimation error induces on the
//! estimated-state model is written as `Σᵢ θᵢ φᵢ(t) + ε_Λ` with unknown
//! vectors `θᵢ` and `‖ε_Λ‖ ≤ E`. The estimates `θ̂ᵢ` follow a leaky
//! gradient law driven by the barrier gradient.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Truncated-series settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatConfig {
    /// Number of basis terms `N` (the series starts at `φ₁`).
    pub terms: usize,
    /// Fundamental frequency `ω` in rad/s.
    pub omega: f64,
    /// Bound `E` on the truncation error norm.
    pub truncation_bound: f64,
}

impl Default for FatConfig {
    fn default() -> Self {
        Self {
            terms: 3,
            omega: 1.0,
            truncation_bound: 0.1,
        }
    }
}

impl FatConfig {
    pub fn new(terms: usize, omega: f64, truncation_bound: f64) -> Result<Self> {
        let cfg = Self {
            terms,
            omega,
            truncation_bound,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms == 0 {
            return Err(config("terms", "need at least one basis term"));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(config("omega", "must be positive"));
        }
        if !(self.truncation_bound >= 0.0 && self.truncation_bound.is_finite()) {
            return Err(config("truncation_bound", "must be non-negative"));
        }
        Ok(())
    }
}

fn config(key: &str, reason: &str) -> Error {
    Error::Config {
        key: key.to_owned(),
        reason: reason.to_owned(),
    }
}

/// `φᵢ(t)`: `1` for `i = 0`, `cos(kωt)` for `i = 2k − 1`, `sin(kωt)` for `i = 2k`.
pub fn basis(i: usize, omega: f64, t: f64) -> f64 {
    if i == 0 {
        return 1.0;
    }
    let k = i.div_ceil(2) as f64;
    if i % 2 == 1 {
        (k * omega * t).cos()
    } else {
        (k * omega * t).sin()
    }
}

/// Parameter estimates `θ̂ᵢ` with their bounds and the adaptation gains.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    pub theta_hat: Vec<DVector<f64>>,
    pub theta_bar: Vec<f64>,
    pub epsilon: f64,
    pub mu: f64,
}

impl AdaptiveState {
    pub fn new(
        theta_hat: Vec<DVector<f64>>,
        theta_bar: Vec<f64>,
        epsilon: f64,
        mu: f64,
    ) -> Result<Self> {
        let state = Self {
            theta_hat,
            theta_bar,
            epsilon,
            mu,
        };
        state.validate()?;
        Ok(state)
    }

    /// All estimates zero, every `θ̄ᵢ` equal to `theta_bar`.
    pub fn zeros(n: usize, terms: usize, theta_bar: f64, epsilon: f64, mu: f64) -> Result<Self> {
        Self::new(
            vec![DVector::zeros(n); terms],
            vec![theta_bar; terms],
            epsilon,
            mu,
        )
    }

    pub fn validate(&self) -> Result<()> {
        check_len("theta_bar", self.theta_hat.len(), self.theta_bar.len())?;
        if let Some(first) = self.theta_hat.first() {
            for th in &self.theta_hat {
                check_len("theta_hat entry", first.len(), th.len())?;
            }
        }
        if self.theta_bar.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(config("theta_bar", "every bound must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(config("epsilon", "must be positive"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(config("mu", "must be positive"));
        }
        Ok(())
    }

    pub fn terms(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.theta_hat.iter().map(|t| t.norm()).collect()
    }

    /// Estimates laid out as `N·n` contiguous reals, term by term.
    pub fn packed(&self) -> Vec<f64> {
        self.theta_hat
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    /// Copy with the estimates replaced by a packed slice.
    pub fn with_packed(&self, packed: &[f64]) -> Result<Self> {
        let n = self.theta_hat.first().map_or(0, |t| t.len());
        check_len("packed estimates", self.terms() * n, packed.len())?;
        let theta_hat = packed
            .chunks(n.max(1))
            .take(self.terms())
            .map(DVector::from_column_slice)
            .collect();
        Ok(Self {
            theta_hat,
            ..self.clone()
        })
    }
}

/// `Σ_{i=1..N} θ̂ᵢ φᵢ(t)`.
pub fn fat_eval(state: &AdaptiveState, cfg: &FatConfig, t: f64) -> Result<DVector<f64>> {
    check_len("parameter vectors", cfg.terms, state.terms())?;
    let n = state.theta_hat.first().map_or(0, |t| t.len());
    let mut sum = DVector::zeros(n);
    for (i, th) in state.theta_hat.iter().enumerate() {
        sum.axpy(basis(i + 1, cfg.omega, t), th, 1.0);
    }
    Ok(sum)
}

/// Adaptive law `θ̂̇ᵢ = −(θ̄ᵢ²/2ε)·grad·φᵢ(t) − μ θ̂ᵢ`.
///
/// `grad` is the gradient of the ε-shifted barrier with respect to `x̂`.
pub fn adaptive_rhs(
    state: &AdaptiveState,
    grad: &DVector<f64>,
    cfg: &FatConfig,
    t: f64,
) -> Result<Vec<DVector<f64>>> {
    if !(state.epsilon > 0.0) {
        return Err(config(
            "epsilon",
            "adaptive law divides by ε, which must be positive",
        ));
    }
    check_len("parameter vectors", cfg.terms, state.terms())?;
    state
        .theta_hat
        .iter()
        .zip(&state.theta_bar)
        .enumerate()
        .map(|(i, (th, bar))| {
            check_len("barrier gradient", th.len(), grad.len())?;
            let gain = -bar * bar / (2.0 * state.epsilon) * basis(i + 1, cfg.omega, t);
            Ok(grad * gain - th * state.mu)
        })
        .collect()
}
