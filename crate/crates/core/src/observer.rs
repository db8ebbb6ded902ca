//! Estimation-error-quantified observers.
//!
//! An [`EeqObserver`] is an observer vector field `ẋ̂ = v(x̂, y, u)` paired
//! with an [`ErrorBoundModel`] that supplies a known `M(t)` such that
//! `‖x̂(t) − x(t)‖ ≤ M(t)`. The bound is configuration data: nothing here
//! derives it from the observer, and the simulation loop only checks it
//! after the fact.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{example1_a, example1_b, example1_c, RosslerParams};
use crate::error::{check_len, Error, Result};

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ObserverField =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;

/// Known bound `M(t)` on the estimation error norm, with its time derivative.
#[derive(Clone)]
pub enum ErrorBoundModel {
    /// `M(t) = D·exp(−λt)`, taken literally for any sign of `λ`.
    Exponential { d: f64, lambda: f64 },
    /// `M(t) = β`, e.g. the generalization bound of a learned observer.
    Constant { beta: f64 },
    /// `M(t) = ½·w(t)` where `w(t) = ‖x̄(t) − x̲(t)‖` comes from an interval
    /// observer. `width_rate` must be `dw/dt`.
    Interval { width: TimeFn, width_rate: TimeFn },
}

impl fmt::Debug for ErrorBoundModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { d, lambda } => f
                .debug_struct("Exponential")
                .field("d", d)
                .field("lambda", lambda)
                .finish(),
            Self::Constant { beta } => f.debug_struct("Constant").field("beta", beta).finish(),
            Self::Interval { .. } => f.write_str("Interval { .. }"),
        }
    }
}

impl ErrorBoundModel {
    pub fn exponential(d: f64, lambda: f64) -> Result<Self> {
        if !(d >= 0.0 && d.is_finite()) || !lambda.is_finite() {
            return Err(Error::Argument(format!(
                "exponential bound needs finite D ≥ 0 and λ, got D = {d}, λ = {lambda}"
            )));
        }
        Ok(Self::Exponential { d, lambda })
    }

    pub fn constant(beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Argument(format!(
                "constant bound needs β ≥ 0, got {beta}"
            )));
        }
        Ok(Self::Constant { beta })
    }

    pub fn interval(width: TimeFn, width_rate: TimeFn) -> Self {
        Self::Interval { width, width_rate }
    }

    /// `M(t)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match self {
            Self::Exponential { d, lambda } => d * (-lambda * t).exp(),
            Self::Constant { beta } => *beta,
            Self::Interval { width, .. } => 0.5 * width(t),
        })
    }

    /// `dM/dt`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match self {
            Self::Exponential { d, lambda } => -lambda * d * (-lambda * t).exp(),
            Self::Constant { .. } => 0.0,
            Self::Interval { width_rate, .. } => 0.5 * width_rate(t),
        })
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "error bound queried at negative time {t}"
        )))
    }
}

/// `½‖x̄ − x̲‖₂`, the error bound of the interval midpoint estimate.
pub fn interval_bound(upper: &DVector<f64>, lower: &DVector<f64>) -> Result<f64> {
    check_len("interval lower bound", upper.len(), lower.len())?;
    if let Some(i) = upper.iter().zip(lower.iter()).position(|(u, l)| u < l) {
        return Err(Error::Argument(format!(
            "interval bounds out of order at component {i}: {} < {}",
            upper[i], lower[i]
        )));
    }
    Ok(0.5 * (upper - lower).norm())
}

#[derive(Clone)]
pub struct EeqObserver {
    n: usize,
    k: usize,
    m: usize,
    field: ObserverField,
    bound: ErrorBoundModel,
}

impl fmt::Debug for EeqObserver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EeqObserver")
            .field("n", &self.n)
            .field("k", &self.k)
            .field("m", &self.m)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl EeqObserver {
    /// `n`, `k`, `m` are the state, output and input dimensions.
    pub fn new(n: usize, k: usize, m: usize, field: ObserverField, bound: ErrorBoundModel) -> Self {
        Self {
            n,
            k,
            m,
            field,
            bound,
        }
    }

    /// Luenberger observer `A x̂ + B u + G (y − C x̂)`.
    pub fn luenberger(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        gain: DMatrix<f64>,
        bound: ErrorBoundModel,
    ) -> Result<Self> {
        let n = a.nrows();
        check_len("A columns", n, a.ncols())?;
        check_len("B rows", n, b.nrows())?;
        check_len("C columns", n, c.ncols())?;
        check_len("gain rows", n, gain.nrows())?;
        check_len("gain columns", c.nrows(), gain.ncols())?;
        let (m, k) = (b.ncols(), c.nrows());
        let field: ObserverField =
            Arc::new(move |xh, y, u, _t| &a * xh + &b * u + &gain * (y - &c * xh));
        Ok(Self::new(n, k, m, field, bound))
    }

    /// The Rössler observer with linear and `power`-th order innovation
    /// terms in `x₁ − x̂₁`, plus the input added componentwise.
    pub fn rossler(
        gains: RosslerObserverGains,
        params: RosslerParams,
        bound: ErrorBoundModel,
    ) -> Result<Self> {
        if gains.power == 0 || gains.power.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "innovation exponent must be a positive odd integer, got {}",
                gains.power
            )));
        }
        let g = gains;
        let field: ObserverField = Arc::new(move |xh, y, u, _t| {
            let d = y[0] - xh[0];
            let dp = d.powi(g.power as i32);
            let mut out = params.drift(xh);
            out[0] += g.q1 * d + g.q2 * dp + u[0];
            out[1] += g.s1 * d + g.s2 * dp + u[1];
            out[2] += g.r1 * d + g.r2 * dp + u[2];
            out
        });
        Ok(Self::new(3, 1, 3, field, bound))
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn bound(&self) -> &ErrorBoundModel {
        &self.bound
    }

    pub fn with_bound(mut self, bound: ErrorBoundModel) -> Self {
        self.bound = bound;
        self
    }

    /// `v(x̂, y, u)`; `t` is forwarded to the field.
    pub fn rhs(
        &self,
        xhat: &DVector<f64>,
        y: &DVector<f64>,
        u: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>> {
        check_len("estimated state", self.n, xhat.len())?;
        check_len("output", self.k, y.len())?;
        check_len("input", self.m, u.len())?;
        Ok((self.field)(xhat, y, u, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosslerObserverGains {
    pub q1: f64,
    pub s1: f64,
    pub r1: f64,
    pub q2: f64,
    pub s2: f64,
    pub r2: f64,
    pub power: u32,
}

impl Default for RosslerObserverGains {
    fn default() -> Self {
        Self {
            q1: 3.0,
            s1: -3.0,
            r1: 3.0,
            q2: 10.0,
            s2: 10.0,
            r2: 10.0,
            power: 3,
        }
    }
}

/// Observer gain column as printed for the linear example.
pub const EXAMPLE1_PRINTED_GAIN: [f64; 3] = [-2.23029, 0.190287, 0.232326];

/// Gain used by the linear-example observer.
///
/// The printed column makes `A − L·C` unstable; its negation is the
/// stabilizing gain, so the innovation enters as `−L·(y − C x̂)`.
pub fn example1_observer_gain() -> DMatrix<f64> {
    -DMatrix::from_column_slice(3, 1, &EXAMPLE1_PRINTED_GAIN)
}

pub fn make_example1_observer(bound: ErrorBoundModel) -> EeqObserver {
    EeqObserver::luenberger(
        example1_a(),
        example1_b(),
        example1_c(),
        example1_observer_gain(),
        bound,
    )
    .expect("example matrices are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_example1_system, make_rossler_system};
    use crate::integrator::{integrate, OdeProblem};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn example_bound() -> ErrorBoundModel {
        ErrorBoundModel::exponential(2.0, -0.05).unwrap()
    }

    #[test]
    fn exponential_and_constant_values() {
        let m = example_bound();
        assert_eq!(m.value(0.0).unwrap(), 2.0);
        assert_relative_eq!(
            m.value(10.0).unwrap(),
            2.0 * 0.5f64.exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(m.value(10.0).unwrap(), 3.2974, max_relative = 2e-5);
        let c = ErrorBoundModel::constant(0.3).unwrap();
        assert_eq!(c.value(0.0).unwrap(), 0.3);
        assert_eq!(c.value(123.0).unwrap(), 0.3);
        assert_eq!(c.derivative(4.0).unwrap(), 0.0);
    }

    #[test]
    fn exponential_derivative_is_consistent() {
        for (d, lambda) in [(2.0, -0.05), (2.0, -0.15), (0.7, 1.3)] {
            let m = ErrorBoundModel::exponential(d, lambda).unwrap();
            for t in [0.0, 0.5, 3.0, 9.0] {
                let expected = -lambda * m.value(t).unwrap();
                assert_relative_eq!(m.derivative(t).unwrap(), expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let models = [
            example_bound(),
            ErrorBoundModel::exponential(1.5, 0.8).unwrap(),
            ErrorBoundModel::constant(0.3).unwrap(),
            ErrorBoundModel::interval(Arc::new(|t: f64| 2.0 + t.sin()), Arc::new(|t: f64| t.cos())),
        ];
        let h = 1e-5;
        for m in &models {
            for t in [0.1, 1.0, 5.0] {
                let fd = (m.value(t + h).unwrap() - m.value(t - h).unwrap()) / (2.0 * h);
                let exact = m.derivative(t).unwrap();
                if exact == 0.0 {
                    assert!(fd.abs() < 1e-12);
                } else {
                    assert_relative_eq!(fd, exact, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn negative_time_and_bad_parameters() {
        assert!(example_bound().value(-1.0).is_err());
        assert!(example_bound().derivative(-1e-9).is_err());
        assert!(ErrorBoundModel::exponential(-1.0, 0.1).is_err());
        assert!(ErrorBoundModel::constant(-0.1).is_err());
    }

    #[test]
    fn interval_bound_examples() {
        assert_eq!(
            interval_bound(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(),
            0.0
        );
        assert_relative_eq!(
            interval_bound(&v(&[1.0, 1.0]), &v(&[-1.0, -1.0])).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-15
        );
        assert_eq!(
            interval_bound(&v(&[3.0, 0.0, 4.0]), &v(&[0.0, 0.0, 0.0])).unwrap(),
            2.5
        );
        assert!(interval_bound(&v(&[0.0, 1.0]), &v(&[1.0, 0.0])).is_err());
        assert!(interval_bound(&v(&[0.0]), &v(&[0.0, 0.0])).is_err());
    }

    proptest! {
        #[test]
        fn interval_bound_depends_only_on_width(
            mid in prop::array::uniform3(-10.0f64..10.0),
            lo in prop::array::uniform3(0.0f64..5.0),
            hi in prop::array::uniform3(0.0f64..5.0),
        ) {
            let c = v(&mid);
            let (lo, hi) = (v(&lo), v(&hi));
            let a = interval_bound(&(&c + &hi), &(&c - &lo)).unwrap();
            let b = interval_bound(&(&c + &lo), &(&c - &hi)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }
    }

    #[test]
    fn luenberger_with_printed_gain() {
        let gain = DMatrix::from_column_slice(3, 1, &EXAMPLE1_PRINTED_GAIN);
        let obs = EeqObserver::luenberger(
            example1_a(),
            example1_b(),
            example1_c(),
            gain.clone(),
            example_bound(),
        )
        .unwrap();
        let xh = v(&[3.0, 3.5, 3.0]);
        let out = obs.rhs(&xh, &v(&[4.2]), &v(&[0.0]), 0.0).unwrap();
        let expected = example1_a() * &xh + gain.column(0) * (4.2 - 6.5);
        assert_abs_diff_eq!(out, expected, epsilon = 1e-12);
    }

    #[test]
    fn luenberger_trivial_cases() {
        let obs = make_example1_observer(example_bound());
        let zero = v(&[0.0; 3]);
        assert_eq!(obs.rhs(&zero, &v(&[0.0]), &v(&[0.0]), 0.0).unwrap(), zero);

        let xh = v(&[0.3, -1.0, 2.0]);
        let y = example1_c() * &xh;
        let u = v(&[0.7]);
        let expected = example1_a() * &xh + example1_b() * &u;
        assert_abs_diff_eq!(
            obs.rhs(&xh, &y, &u, 1.0).unwrap(),
            expected,
            epsilon = 1e-12
        );

        let open = EeqObserver::luenberger(
            example1_a(),
            example1_b(),
            example1_c(),
            DMatrix::zeros(3, 1),
            example_bound(),
        )
        .unwrap();
        assert_abs_diff_eq!(
            open.rhs(&xh, &v(&[100.0]), &u, 0.0).unwrap(),
            expected,
            epsilon = 1e-12
        );

        assert!(obs.rhs(&v(&[0.0; 2]), &v(&[0.0]), &v(&[0.0]), 0.0).is_err());
        assert!(obs.rhs(&zero, &v(&[0.0, 1.0]), &v(&[0.0]), 0.0).is_err());
        assert!(EeqObserver::luenberger(
            example1_a(),
            example1_b(),
            example1_c(),
            DMatrix::zeros(2, 1),
            example_bound()
        )
        .is_err());
    }

    #[test]
    fn preset_gain_is_stabilizing() {
        let closed = example1_a() - example1_observer_gain() * example1_c();
        for ev in closed.complex_eigenvalues().iter() {
            assert!(
                ev.re < 0.0,
                "eigenvalue {ev} is not in the open left half-plane"
            );
        }
        // The printed gain, read with the + sign, is not.
        let printed = DMatrix::from_column_slice(3, 1, &EXAMPLE1_PRINTED_GAIN);
        let bad = example1_a() - printed * example1_c();
        assert!(bad.complex_eigenvalues().iter().any(|ev| ev.re > 0.0));
    }

    #[test]
    fn rossler_observer() {
        let params = RosslerParams::default();
        let obs = EeqObserver::rossler(
            RosslerObserverGains::default(),
            params,
            ErrorBoundModel::exponential(2.0, -0.15).unwrap(),
        )
        .unwrap();
        let xh = v(&[0.4, -1.2, 2.5]);
        let u = v(&[0.1, 0.2, 0.3]);
        let out = obs.rhs(&xh, &v(&[0.4]), &u, 0.0).unwrap();
        assert_abs_diff_eq!(out, params.drift(&xh) + &u, epsilon = 1e-14);

        let zero = v(&[0.0; 3]);
        let out = obs.rhs(&zero, &v(&[1.0]), &zero, 0.0).unwrap();
        assert_abs_diff_eq!(out, v(&[13.0, 7.0, 13.2]), epsilon = 1e-14);

        let plant = make_rossler_system(0.2, 0.2, 5.0);
        let x = v(&[1.0, 2.0, -0.5]);
        let y = plant.output(&x).unwrap();
        assert_abs_diff_eq!(
            obs.rhs(&x, &y, &zero, 0.0).unwrap(),
            plant.drift(&x).unwrap(),
            epsilon = 1e-14
        );

        let even = RosslerObserverGains {
            power: 2,
            ..Default::default()
        };
        assert!(EeqObserver::rossler(even, params, example_bound()).is_err());
    }

    #[test]
    fn example1_error_stays_within_bound_open_loop() {
        let plant = make_example1_system();
        let obs = make_example1_observer(example_bound());
        let problem = OdeProblem::new(6, |t, z: &DVector<f64>| {
            let x = z.rows(0, 3).into_owned();
            let xh = z.rows(3, 3).into_owned();
            let u = v(&[0.0]);
            let dx = plant.vector_field(&x, &u).unwrap();
            let dxh = obs.rhs(&xh, &plant.output(&x).unwrap(), &u, t).unwrap();
            DVector::from_iterator(6, dx.iter().chain(dxh.iter()).copied())
        });
        let z0 = v(&[2.0, 2.2, 2.0, 3.0, 3.5, 3.0]);
        let mut worst = f64::NEG_INFINITY;
        integrate(&problem, 0.0, &z0, 10.0, 1e-3, |t, z| {
            let e = (z.rows(3, 3) - z.rows(0, 3)).norm();
            worst = worst.max(e - example_bound().value(t).unwrap());
        })
        .unwrap();
        assert!(worst <= 0.0, "bound exceeded by {worst}");
    }
}
