//! Closed-loop simulation of plant, observer and adaptive estimates.
//!
//! The augmented state is `[x; x̂; θ̂₁ … θ̂_N]`. At the start of every step
//! the controller sees only `x̂` (and `θ̂`), solves the safety-filter QP and
//! holds the resulting input over the step. The plant integrates the true
//! dynamics, the observer receives `y = l(x)` and the held input.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::barrier::{Barrier, ConstraintCoeffs};
use crate::dynamics::ControlAffineSystem;
use crate::error::{check_len, Error, Result};
use crate::fat::{adaptive_rhs, AdaptiveState, FatConfig};
use crate::integrator::{rk4_step, OdeProblem, TimeGrid};
use crate::observer::EeqObserver;
use crate::qp::{solve_boxed_qp, solve_halfspace_qp, QpResult};

pub type NominalControl = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    /// Adaptive constraint on `h_ε` / `s_ε` with the estimates adapted online.
    Proposed,
    /// Traditional CBF row evaluated at `x̂` as if it were the true state.
    Baseline,
}

impl Controller {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Baseline => "baseline",
        }
    }
}

/// What to apply when the QP has no solution (`a = 0`, `b < 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    Nominal,
    HoldLast,
}

#[derive(Clone)]
pub struct SimConfig {
    pub system: ControlAffineSystem,
    pub observer: EeqObserver,
    pub barrier: Barrier,
    pub fat: FatConfig,
    pub adaptive0: AdaptiveState,
    pub x0: DVector<f64>,
    pub xhat0: DVector<f64>,
    pub u_nominal: NominalControl,
    pub t_end: f64,
    pub dt: f64,
    pub controller: Controller,
    pub baseline_gamma: f64,
    pub strict_feasibility: bool,
    pub infeasible_policy: InfeasiblePolicy,
    /// Optional input box; `None` leaves `u` unconstrained.
    pub input_bounds: Option<(DVector<f64>, DVector<f64>)>,
}

impl fmt::Debug for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimConfig")
            .field("system", &self.system)
            .field("observer", &self.observer)
            .field("barrier", &self.barrier)
            .field("fat", &self.fat)
            .field("adaptive0", &self.adaptive0)
            .field("x0", &self.x0.as_slice())
            .field("xhat0", &self.xhat0.as_slice())
            .field("t_end", &self.t_end)
            .field("dt", &self.dt)
            .field("controller", &self.controller)
            .field("baseline_gamma", &self.baseline_gamma)
            .field("strict_feasibility", &self.strict_feasibility)
            .field("infeasible_policy", &self.infeasible_policy)
            .finish_non_exhaustive()
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

impl SimConfig {
    pub fn with_controller(&self, controller: Controller) -> Self {
        Self {
            controller,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        check_len("x0", n, self.x0.len())?;
        check_len("xhat0", n, self.xhat0.len())?;
        check_len("observer state", n, self.observer.state_dim())?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config_err(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(config_err(
                "t_end",
                format!("must be non-negative, got {}", self.t_end),
            ));
        }
        if !(self.baseline_gamma > 0.0 && self.baseline_gamma.is_finite()) {
            return Err(config_err("baseline_gamma", "must be positive"));
        }
        self.fat.validate()?;
        self.adaptive0.validate()?;
        check_len("theta_hat0 terms", self.fat.terms, self.adaptive0.terms())?;
        for th in &self.adaptive0.theta_hat {
            check_len("theta_hat0 entry", n, th.len())?;
        }
        check_len("u_nominal", m, (self.u_nominal)(0.0, &self.xhat0).len())?;
        if let Some((lo, hi)) = &self.input_bounds {
            check_len("input lower bound", m, lo.len())?;
            check_len("input upper bound", m, hi.len())?;
        }
        Ok(())
    }

    fn bound(&self) -> &crate::observer::ErrorBoundModel {
        self.observer.bound()
    }
}

/// One row of a trace, taken at the start of a step (and at `t_end`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    /// Input held over the following step.
    pub u: DVector<f64>,
    pub h_true: f64,
    pub h0: f64,
    /// `h_ε` or `s_ε` at `x̂`.
    pub barrier_eps: f64,
    /// `a·u + b` of the row the controller enforced.
    pub residual: f64,
    pub m_bound: f64,
    pub theta_norms: Vec<f64>,
    pub qp_active: bool,
    pub qp_feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub controller: Controller,
    pub samples: Vec<Sample>,
}

impl SimTrace {
    pub fn state_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn input_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.u.len())
    }

    pub fn terms(&self) -> usize {
        self.samples.first().map_or(0, |s| s.theta_norms.len())
    }
}

/// Outcome of the ε hypothesis check on the initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityCheck {
    pub epsilon_bound: f64,
    pub epsilon_used: f64,
}

impl FeasibilityCheck {
    pub fn ok(&self) -> bool {
        self.epsilon_bound > 0.0
            && self.epsilon_used > 0.0
            && self.epsilon_used <= self.epsilon_bound
    }

    pub fn warning(&self) -> Option<String> {
        if self.epsilon_bound <= 0.0 {
            Some(format!(
                "ε bound is non-positive ({:.6}): no ε satisfies the initial-condition hypothesis \
                 with gradient-norm Lipschitz constants; safety is not certified",
                self.epsilon_bound
            ))
        } else if !self.ok() {
            Some(format!(
                "ε = {} exceeds the admissible bound {:.6}; safety is not certified",
                self.epsilon_used, self.epsilon_bound
            ))
        } else {
            None
        }
    }
}

pub fn feasibility_check(cfg: &SimConfig) -> Result<FeasibilityCheck> {
    let epsilon_bound =
        cfg.barrier
            .epsilon_bound(&cfg.xhat0, cfg.bound(), &cfg.adaptive0, &cfg.fat)?;
    Ok(FeasibilityCheck {
        epsilon_bound,
        epsilon_used: cfg.adaptive0.epsilon,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    pub min_h_true: f64,
    pub min_h0: f64,
    pub first_violation_t: Option<f64>,
    pub bound_violations: usize,
    pub infeasible_steps: usize,
    /// Smallest `a·u + b` over samples where the QP was feasible.
    pub min_residual: Option<f64>,
    pub epsilon_bound: f64,
    pub epsilon_used: f64,
    pub epsilon_ok: bool,
}

struct ControlStep {
    u: DVector<f64>,
    row: ConstraintCoeffs,
    qp: QpResult,
}

struct Runner<'a> {
    cfg: &'a SimConfig,
    n: usize,
}

impl Runner<'_> {
    fn split(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, AdaptiveState)> {
        let n = self.n;
        let x = z.rows(0, n).into_owned();
        let xhat = z.rows(n, n).into_owned();
        let theta = self.cfg.adaptive0.with_packed(&z.as_slice()[2 * n..])?;
        Ok((x, xhat, theta))
    }

    fn row(&self, t: f64, xhat: &DVector<f64>, theta: &AdaptiveState) -> Result<ConstraintCoeffs> {
        let cfg = self.cfg;
        match cfg.controller {
            Controller::Proposed => {
                cfg.barrier
                    .constraint(&cfg.system, xhat, t, cfg.bound(), theta, &cfg.fat)
            }
            Controller::Baseline => {
                let grad = cfg.barrier.top_gradient(xhat);
                let a = cfg.system.input_matrix(xhat)?.tr_mul(&grad);
                let b = grad.dot(&cfg.system.drift(xhat)?)
                    + cfg.baseline_gamma * cfg.barrier.top_value(xhat);
                Ok(ConstraintCoeffs::new(a, b))
            }
        }
    }

    fn control(
        &self,
        t: f64,
        xhat: &DVector<f64>,
        theta: &AdaptiveState,
        last_feasible: Option<&DVector<f64>>,
    ) -> Result<ControlStep> {
        let cfg = self.cfg;
        let u_d = (cfg.u_nominal)(t, xhat);
        check_len("u_nominal", cfg.system.input_dim(), u_d.len())?;
        let row = self.row(t, xhat, theta)?;
        let qp = match &cfg.input_bounds {
            None => solve_halfspace_qp(&u_d, &row),
            Some((lo, hi)) => solve_boxed_qp(&u_d, &row, lo, hi)?,
        };
        let u = if qp.feasible {
            qp.u.clone()
        } else {
            match (cfg.infeasible_policy, last_feasible) {
                (InfeasiblePolicy::HoldLast, Some(u)) => u.clone(),
                _ => u_d,
            }
        };
        Ok(ControlStep { u, row, qp })
    }

    fn sample(&self, t: f64, z: &DVector<f64>, step: &ControlStep) -> Result<Sample> {
        let cfg = self.cfg;
        let (x, xhat, theta) = self.split(z)?;
        Ok(Sample {
            t,
            h_true: cfg.barrier.safety_value(&x),
            h0: cfg.barrier.h0(&xhat, t, cfg.bound())?,
            barrier_eps: cfg
                .barrier
                .shifted(&xhat, t, cfg.bound(), cfg.adaptive0.epsilon)?,
            residual: step.row.residual(&step.u),
            m_bound: cfg.bound().value(t)?,
            theta_norms: theta.norms(),
            qp_active: step.qp.active,
            qp_feasible: step.qp.feasible,
            x,
            xhat,
            u: step.u.clone(),
        })
    }

    fn augmented_rhs(&self, t: f64, z: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let cfg = self.cfg;
        let (x, xhat, theta) = self.split(z)?;
        let dx = cfg.system.vector_field(&x, u)?;
        let y = cfg.system.output(&x)?;
        let dxhat = cfg.observer.rhs(&xhat, &y, u, t)?;
        let mut out = DVector::zeros(z.len());
        out.rows_mut(0, self.n).copy_from(&dx);
        out.rows_mut(self.n, self.n).copy_from(&dxhat);
        if cfg.controller == Controller::Proposed {
            let grad = cfg.barrier.top_gradient(&xhat);
            let dtheta = adaptive_rhs(&theta, &grad, &cfg.fat, t)?;
            for (i, d) in dtheta.iter().enumerate() {
                out.rows_mut(2 * self.n + i * self.n, self.n).copy_from(d);
            }
        }
        Ok(out)
    }
}

/// Runs one closed-loop simulation over `[0, t_end]`.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    if cfg.strict_feasibility && cfg.controller == Controller::Proposed {
        let check = feasibility_check(cfg)?;
        if let Some(w) = check.warning() {
            return Err(Error::Feasibility(w));
        }
    }
    let n = cfg.system.state_dim();
    let runner = Runner { cfg, n };
    let dim = 2 * n + cfg.adaptive0.packed().len();
    let mut z = DVector::from_iterator(
        dim,
        cfg.x0
            .iter()
            .chain(cfg.xhat0.iter())
            .copied()
            .chain(cfg.adaptive0.packed()),
    );

    let grid = TimeGrid::new(0.0, cfg.t_end, cfg.dt)?;
    let mut samples = Vec::with_capacity(grid.steps() + 1);
    let mut last_feasible: Option<DVector<f64>> = None;

    for k in 0..=grid.steps() {
        let t = grid.node(k);
        let (_, xhat, theta) = runner.split(&z)?;
        let step = runner.control(t, &xhat, &theta, last_feasible.as_ref())?;
        if step.qp.feasible {
            last_feasible = Some(step.u.clone());
        }
        let sample = runner.sample(t, &z, &step)?;
        if k == grid.steps() {
            samples.push(sample);
            break;
        }

        let failure = RefCell::new(None);
        let problem = OdeProblem::new(dim, |ts, zs: &DVector<f64>| {
            match runner.augmented_rhs(ts, zs, &step.u) {
                Ok(d) => d,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    DVector::from_element(dim, f64::NAN)
                }
            }
        });
        let next = rk4_step(&problem, t, &z, grid.node(k + 1) - t);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        match next {
            Ok(zn) if zn.iter().all(|v| v.is_finite()) => z = zn,
            Ok(_) | Err(Error::Integration { .. }) => {
                return Err(Error::Diverged {
                    last: Box::new(sample),
                })
            }
            Err(e) => return Err(e),
        }
        samples.push(sample);
    }

    Ok(SimTrace {
        controller: cfg.controller,
        samples,
    })
}

pub fn safety_report(trace: &SimTrace, cfg: &SimConfig) -> Result<SafetyReport> {
    if trace.samples.is_empty() {
        return Err(Error::Argument(
            "safety report needs a non-empty trace".into(),
        ));
    }
    let check = feasibility_check(cfg)?;
    let s = &trace.samples;
    let min_h_true = s.iter().map(|x| x.h_true).fold(f64::INFINITY, f64::min);
    let min_h0 = s.iter().map(|x| x.h0).fold(f64::INFINITY, f64::min);
    let min_residual = s
        .iter()
        .filter(|x| x.qp_feasible)
        .map(|x| x.residual)
        .reduce(f64::min);
    Ok(SafetyReport {
        min_h_true,
        min_h0,
        first_violation_t: s.iter().find(|x| x.h_true < 0.0).map(|x| x.t),
        bound_violations: s
            .iter()
            .filter(|x| (&x.xhat - &x.x).norm() > x.m_bound)
            .count(),
        infeasible_steps: s.iter().filter(|x| !x.qp_feasible).count(),
        min_residual,
        epsilon_bound: check.epsilon_bound,
        epsilon_used: check.epsilon_used,
        epsilon_ok: check.ok(),
    })
}

/// Proposed and baseline runs on identical data, executed concurrently.
pub fn run_pair(cfg: &SimConfig) -> Result<(SimTrace, SimTrace)> {
    let proposed = cfg.with_controller(Controller::Proposed);
    let baseline = cfg.with_controller(Controller::Baseline);
    let (p, b) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| run_simulation(&baseline));
        let p = run_simulation(&proposed);
        let b = handle.join().expect("baseline run panicked");
        (p, b)
    });
    Ok((p?, b?))
}
