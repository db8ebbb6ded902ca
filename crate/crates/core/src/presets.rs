//! The three example experiments as ready-to-run parameter sets.
//!
//! [`ExperimentParams`] is plain data (serializable, overridable key by key);
//! [`ExperimentParams::build`] turns it into a [`SimConfig`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{Barrier, BarrierChain, BarrierRd1, ScalarField};
use crate::dynamics::{
    example1_a, make_example1_system, make_rossler_system, RosslerParams, VectorField,
};
use crate::error::{Error, Result};
use crate::fat::{AdaptiveState, FatConfig};
use crate::observer::{make_example1_observer, EeqObserver, ErrorBoundModel, RosslerObserverGains};
use crate::simloop::{Controller, InfeasiblePolicy, SimConfig};

fn affine(c: DVector<f64>, d: f64) -> (ScalarField, VectorField) {
    let cv = c.clone();
    (
        Arc::new(move |x| cv.dot(x) + d),
        Arc::new(move |_| c.clone()),
    )
}

/// `h = x₂ − 1`.
pub fn example1a_barrier() -> BarrierRd1 {
    let (h, g) = affine(DVector::from_vec(vec![0.0, 1.0, 0.0]), -1.0);
    BarrierRd1::new(h, g, 1.0).expect("positive Lipschitz constant")
}

/// `h = x₂ + 1`.
pub fn example2_barrier() -> BarrierRd1 {
    let (h, g) = affine(DVector::from_vec(vec![0.0, 1.0, 0.0]), 1.0);
    BarrierRd1::new(h, g, 1.0).expect("positive Lipschitz constant")
}

/// Chain for an affine `h = c·x + d` on the linear drift `f = A x`.
///
/// Each level is again affine: `c_k = Aᵀ c_{k−1} + λ_k c_{k−1}`,
/// `d_k = λ_k d_{k−1}`, with `L_k = ‖c_k‖`.
pub fn linear_chain(
    a: &DMatrix<f64>,
    c0: DVector<f64>,
    d0: f64,
    lambdas: &[f64],
) -> Result<BarrierChain> {
    let mut rows = vec![(c0, d0)];
    for &lam in lambdas {
        let (c, d) = rows.last().expect("non-empty");
        rows.push((a.tr_mul(c) + c * lam, lam * d));
    }
    let lipschitz = rows.iter().map(|(c, _)| c.norm()).collect();
    let (s, grad_s) = rows.into_iter().map(|(c, d)| affine(c, d)).unzip();
    BarrierChain::new(s, grad_s, lambdas.to_vec(), lipschitz)
}

/// Example 1b as specified: `s₀ = x₁ − 1`, `s₁ = x₁ + 2x₂ − 2x₃ − 2`, `λ₁ = 2`.
///
/// Both levels have zero input coupling for the example's `B`, so the
/// resulting constraint never involves `u`.
pub fn example1b_chain_rd2() -> BarrierChain {
    linear_chain(
        &example1_a(),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        -1.0,
        &[2.0],
    )
    .expect("valid chain")
}

/// Example 1b lifted to the actual relative degree three of `x₁ − 1`:
/// adds `s₂ = −x₁ + 4x₂ − 2x₃ − 4` (`λ₂ = 2`, `L₂ = √21`).
pub fn example1b_chain() -> BarrierChain {
    linear_chain(
        &example1_a(),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        -1.0,
        &[2.0, 2.0],
    )
    .expect("valid chain")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Example1a,
    Example1b,
    Example2,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [Self::Example1a, Self::Example1b, Self::Example2];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Example1a => "example1a",
            Self::Example1b => "example1b",
            Self::Example2 => "example2",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown preset {s:?} (expected example1a, example1b or example2)"
                ))
            })
    }
}

/// Every tunable of an experiment, with the example values as defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    pub preset: PresetName,
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    pub terms: usize,
    pub omega: f64,
    pub truncation_bound: f64,
    pub theta_bar: f64,
    /// Packed `θ̂ᵢ(0)`, `terms · n` values; `None` means all zero.
    pub theta_hat0: Option<Vec<f64>>,
    pub epsilon: f64,
    pub mu: f64,
    pub bound_d: f64,
    pub bound_lambda: f64,
    /// Only `example1b` accepts values above one.
    pub relative_degree: usize,
    /// `λ₁ … λ_{r−1}`; extra entries are ignored.
    pub chain_lambdas: Vec<f64>,
    /// Constant nominal input.
    pub u_nominal: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub controller: Controller,
    pub baseline_gamma: f64,
    pub strict_feasibility: bool,
    pub infeasible_policy: InfeasiblePolicy,
    pub input_lower: Option<Vec<f64>>,
    pub input_upper: Option<Vec<f64>>,
}

impl ExperimentParams {
    pub fn preset(name: PresetName) -> Self {
        let common = Self {
            preset: name,
            x0: vec![2.0, 2.2, 2.0],
            xhat0: vec![3.0, 3.5, 3.0],
            terms: 3,
            omega: 1.0,
            truncation_bound: 0.1,
            theta_bar: 0.5,
            theta_hat0: None,
            epsilon: 0.1,
            mu: 3.5,
            bound_d: 2.0,
            bound_lambda: -0.05,
            relative_degree: 1,
            chain_lambdas: Vec::new(),
            u_nominal: vec![-2.0],
            t_end: 10.0,
            dt: 1e-3,
            controller: Controller::Proposed,
            baseline_gamma: 1.0,
            strict_feasibility: false,
            infeasible_policy: InfeasiblePolicy::Nominal,
            input_lower: None,
            input_upper: None,
        };
        match name {
            PresetName::Example1a => common,
            PresetName::Example1b => Self {
                x0: vec![2.4, -3.0, -3.0],
                xhat0: vec![3.4, -2.0, -2.0],
                mu: 10.0,
                relative_degree: 3,
                chain_lambdas: vec![2.0, 2.0],
                ..common
            },
            PresetName::Example2 => Self {
                x0: vec![-0.5, 0.5, 3.0],
                xhat0: vec![0.2, 2.0, 3.0],
                mu: 2.5,
                bound_lambda: -0.15,
                u_nominal: vec![-2.0; 3],
                ..common
            },
        }
    }

    fn barrier(&self) -> Result<Barrier> {
        let r = self.relative_degree;
        match (self.preset, r) {
            (PresetName::Example1a, 1) => Ok(Barrier::Rd1(example1a_barrier())),
            (PresetName::Example2, 1) => Ok(Barrier::Rd1(example2_barrier())),
            (PresetName::Example1b, 1..) => {
                if self.chain_lambdas.len() < r - 1 {
                    return Err(Error::Config {
                        key: "chain_lambdas".into(),
                        reason: format!(
                            "relative degree {r} needs {} values, got {}",
                            r - 1,
                            self.chain_lambdas.len()
                        ),
                    });
                }
                let chain = linear_chain(
                    &example1_a(),
                    DVector::from_vec(vec![1.0, 0.0, 0.0]),
                    -1.0,
                    &self.chain_lambdas[..r - 1],
                )
                .map_err(|e| Error::Config {
                    key: "chain_lambdas".into(),
                    reason: e.to_string(),
                })?;
                Ok(Barrier::Chain(chain))
            }
            _ => Err(Error::Config {
                key: "relative_degree".into(),
                reason: format!("{} supports relative degree 1 only, got {r}", self.preset),
            }),
        }
    }

    pub fn build(&self) -> Result<SimConfig> {
        let cfg_err = |key: &str, e: Error| Error::Config {
            key: key.into(),
            reason: e.to_string(),
        };
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(cfg_err(
                "epsilon",
                Error::Argument(format!("must be positive, got {}", self.epsilon)),
            ));
        }
        let bound = ErrorBoundModel::exponential(self.bound_d, self.bound_lambda)
            .map_err(|e| cfg_err("bound_d", e))?;
        let (system, observer): (_, EeqObserver) = match self.preset {
            PresetName::Example1a | PresetName::Example1b => {
                (make_example1_system(), make_example1_observer(bound))
            }
            PresetName::Example2 => {
                let p = RosslerParams::default();
                (
                    make_rossler_system(p.a, p.b, p.c),
                    EeqObserver::rossler(RosslerObserverGains::default(), p, bound)?,
                )
            }
        };
        let n = system.state_dim();
        let fat = FatConfig::new(self.terms, self.omega, self.truncation_bound)?;
        let mut adaptive0 =
            AdaptiveState::zeros(n, self.terms, self.theta_bar, self.epsilon, self.mu).map_err(
                |e| match e {
                    Error::Config { .. } => e,
                    other => cfg_err("theta_bar", other),
                },
            )?;
        if let Some(packed) = &self.theta_hat0 {
            adaptive0 = adaptive0
                .with_packed(packed)
                .map_err(|e| cfg_err("theta_hat0", e))?;
        }
        let input_bounds = match (&self.input_lower, &self.input_upper) {
            (None, None) => None,
            (Some(lo), Some(hi)) => {
                Some((DVector::from_vec(lo.clone()), DVector::from_vec(hi.clone())))
            }
            _ => {
                return Err(Error::Config {
                    key: "input_lower".into(),
                    reason: "input_lower and input_upper must be given together".into(),
                })
            }
        };
        let u_d = DVector::from_vec(self.u_nominal.clone());
        let cfg = SimConfig {
            barrier: self.barrier()?,
            system,
            observer,
            fat,
            adaptive0,
            x0: DVector::from_vec(self.x0.clone()),
            xhat0: DVector::from_vec(self.xhat0.clone()),
            u_nominal: Arc::new(move |_, _| u_d.clone()),
            t_end: self.t_end,
            dt: self.dt,
            controller: self.controller,
            baseline_gamma: self.baseline_gamma,
            strict_feasibility: self.strict_feasibility,
            infeasible_policy: self.infeasible_policy,
            input_bounds,
        };
        cfg.validate().map_err(|e| match e {
            Error::Dimension {
                what: "u_nominal", ..
            } => cfg_err("u_nominal", e),
            Error::Dimension { what: "x0", .. } => cfg_err("x0", e),
            Error::Dimension { what: "xhat0", .. } => cfg_err("xhat0", e),
            other => other,
        })?;
        Ok(cfg)
    }
}
