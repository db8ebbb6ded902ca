//! Fixed-step classical Runge–Kutta integration.
//!
//! Controls are expected to be baked into the right-hand side as
//! piecewise-constant values chosen by the caller at each step start.

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};

/// `ẋ = rhs(t, x)` with `x ∈ ℝ^dim`.
pub struct OdeProblem<F> {
    dim: usize,
    rhs: F,
}

impl<F> OdeProblem<F>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    pub fn new(dim: usize, rhs: F) -> Self {
        Self { dim, rhs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, state: &DVector<f64>) -> Result<DVector<f64>> {
        let d = (self.rhs)(t, state);
        check_len("rhs output", self.dim, d.len())?;
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(Error::Integration {
                t,
                state: state.clone(),
            })
        }
    }
}

/// One classical four-stage RK4 update.
pub fn rk4_step<F>(
    problem: &OdeProblem<F>,
    t: f64,
    state: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!(
            "step size must be positive, got {dt}"
        )));
    }
    check_len("state", problem.dim, state.len())?;
    let half = 0.5 * dt;
    let k1 = problem.eval(t, state)?;
    let k2 = problem.eval(t + half, &(state + &k1 * half))?;
    let k3 = problem.eval(t + half, &(state + &k2 * half))?;
    let k4 = problem.eval(t + dt, &(state + &k3 * dt))?;
    Ok(state + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

/// Step schedule over `[t0, t_end]` with nominal step `dt`.
///
/// Step `k` starts at `t0 + k·dt`; the last step is shortened (or absorbs
/// floating-point noise) so that the schedule ends exactly at `t_end`.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!(
                "step size must be positive, got {dt}"
            )));
        }
        if !(t_end >= t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::Argument(format!(
                "integration interval [{t0}, {t_end}] is empty or non-finite"
            )));
        }
        let ratio = (t_end - t0) / dt;
        let steps = if ratio == 0.0 {
            0
        } else {
            ((ratio - 1e-9).ceil() as usize).max(1)
        };
        Ok(Self {
            t0,
            t_end,
            dt,
            steps,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Time at grid node `k`, `0 ≤ k ≤ steps`.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    /// `(start, length)` of every step.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.steps).map(move |k| {
            let start = self.node(k);
            (start, self.node(k + 1) - start)
        })
    }
}

/// Integrates from `t0` to `t_end`, calling `on_sample` at `t0` and after
/// every accepted step (so also at `t_end`).
pub fn integrate<F, S>(
    problem: &OdeProblem<F>,
    t0: f64,
    state0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    mut on_sample: S,
) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    S: FnMut(f64, &DVector<f64>),
{
    let grid = TimeGrid::new(t0, t_end, dt)?;
    check_len("state", problem.dim, state0.len())?;
    let mut state = state0.clone();
    on_sample(t0, &state);
    for (k, (t, h)) in grid.iter().enumerate() {
        state = rk4_step(problem, t, &state, h)?;
        on_sample(grid.node(k + 1), &state);
    }
    Ok(state)
}
