//! Safety-filter QPs `min ‖u − u_d‖²` subject to one halfspace `a·u + b ≥ 0`.

use nalgebra::DVector;

use crate::barrier::ConstraintCoeffs;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub u: DVector<f64>,
    /// The halfspace row binds at `u`.
    pub active: bool,
    pub feasible: bool,
}

/// Euclidean projection of `u_d` onto `{u : a·u + b ≥ 0}`.
///
/// With `a = 0` and `b < 0` the set is empty; the result is marked
/// infeasible and carries `u_d` unchanged.
pub fn solve_halfspace_qp(u_d: &DVector<f64>, c: &ConstraintCoeffs) -> QpResult {
    let slack = c.residual(u_d);
    if slack >= 0.0 {
        return QpResult {
            u: u_d.clone(),
            active: false,
            feasible: true,
        };
    }
    let norm2 = c.a.norm_squared();
    if norm2 > 0.0 {
        QpResult {
            u: u_d + &c.a * (-slack / norm2),
            active: true,
            feasible: true,
        }
    } else {
        QpResult {
            u: u_d.clone(),
            active: false,
            feasible: false,
        }
    }
}

/// Largest input dimension accepted by [`solve_boxed_qp`].
pub const MAX_BOXED_DIM: usize = 4;

/// Exact minimizer of `‖u − u_d‖²` over the halfspace intersected with the
/// box `lo ≤ u ≤ hi`.
///
/// Every combination of free/lower/upper per coordinate is tried, with and
/// without the halfspace row as an equality; the optimum is the projection
/// of `u_d` onto the affine hull of its active set, so it is among the
/// candidates.
pub fn solve_boxed_qp(
    u_d: &DVector<f64>,
    c: &ConstraintCoeffs,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<QpResult> {
    let m = u_d.len();
    if m > MAX_BOXED_DIM {
        return Err(Error::UnsupportedDimension(m));
    }
    check_len("constraint row", m, c.a.len())?;
    check_len("lower bound", m, lo.len())?;
    check_len("upper bound", m, hi.len())?;
    if let Some(i) = (0..m).find(|&i| !(lo[i] <= hi[i])) {
        return Err(Error::Argument(format!(
            "box bound {i} is empty: lo = {}, hi = {}",
            lo[i], hi[i]
        )));
    }

    let scale = 1.0 + c.a.amax() * (u_d.amax() + lo.amax() + hi.amax()) + c.b.abs();
    let tol = 1e-12 * scale;
    let box_tol = 1e-12 * (1.0 + lo.amax() + hi.amax());

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut consider = |u: DVector<f64>| {
        let in_box = (0..m).all(|i| u[i] >= lo[i] - box_tol && u[i] <= hi[i] + box_tol);
        if !in_box || c.residual(&u) < -tol {
            return;
        }
        let obj = (&u - u_d).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, u));
        }
    };

    for code in 0..3usize.pow(m as u32) {
        let mut u = u_d.clone();
        let mut free = Vec::with_capacity(m);
        let mut rest = code;
        for i in 0..m {
            match rest % 3 {
                0 => free.push(i),
                1 => u[i] = lo[i],
                _ => u[i] = hi[i],
            }
            rest /= 3;
        }
        consider(u.clone());

        let slack = c.residual(&u);
        let free_norm2: f64 = free.iter().map(|&i| c.a[i] * c.a[i]).sum();
        if free_norm2 > 0.0 {
            let nu = -slack / free_norm2;
            for &i in &free {
                u[i] += nu * c.a[i];
            }
            consider(u);
        }
    }

    let clamped = DVector::from_iterator(m, (0..m).map(|i| u_d[i].clamp(lo[i], hi[i])));
    let active = c.residual(&clamped) < 0.0;
    Ok(match best {
        Some((_, u)) => QpResult {
            u: DVector::from_iterator(m, (0..m).map(|i| u[i].clamp(lo[i], hi[i]))),
            active,
            feasible: true,
        },
        None => QpResult {
            u: u_d.clone(),
            active: false,
            feasible: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn row(a: &[f64], b: f64) -> ConstraintCoeffs {
        ConstraintCoeffs::new(v(a), b)
    }

    #[test]
    fn halfspace_examples() {
        let r = solve_halfspace_qp(&v(&[0.0]), &row(&[1.0], -0.35));
        assert!(r.active && r.feasible);
        assert_abs_diff_eq!(r.u[0], 0.35, epsilon = 1e-15);

        let r = solve_halfspace_qp(&v(&[5.0]), &row(&[1.0], 0.0));
        assert_eq!(
            r,
            QpResult {
                u: v(&[5.0]),
                active: false,
                feasible: true
            }
        );

        let r = solve_halfspace_qp(&v(&[1.0, 1.0]), &row(&[1.0, 0.0], -2.0));
        assert!(r.active);
        assert_abs_diff_eq!(r.u, v(&[2.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn zero_row_is_infeasible_only_when_b_negative() {
        let r = solve_halfspace_qp(&v(&[0.3, -1.0]), &row(&[0.0, 0.0], -0.1));
        assert!(!r.feasible && !r.active);
        assert_eq!(r.u, v(&[0.3, -1.0]));
        let r = solve_halfspace_qp(&v(&[0.3, -1.0]), &row(&[0.0, 0.0], 0.1));
        assert!(r.feasible && !r.active);
    }

    #[test]
    fn active_solution_is_on_the_boundary_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 1000 {
            let m = rng.gen_range(1..=3);
            let u_d = DVector::from_fn(m, |_, _| rng.gen_range(-3.0..3.0));
            let a = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let c = ConstraintCoeffs::new(a, rng.gen_range(-3.0..3.0));
            let r = solve_halfspace_qp(&u_d, &c);
            if !r.feasible {
                continue;
            }
            if r.active {
                assert!(c.residual(&r.u).abs() <= 1e-10);
            } else {
                assert_eq!(r.u, u_d);
            }
            let base = (&r.u - &u_d).norm();
            for _ in 0..20 {
                let dir = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
                if dir.norm() == 0.0 {
                    continue;
                }
                let delta = dir.normalize() * 1e-4;
                let cand = &r.u + &delta;
                if c.residual(&cand) >= 0.0 {
                    assert!((&cand - &u_d).norm() >= base - 1e-9);
                }
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_scale_free(
            u_d in prop::collection::vec(-5.0f64..5.0, 1..4),
            a_seed in prop::collection::vec(-2.0f64..2.0, 3),
            b in -5.0f64..5.0,
            alpha in 0.01f64..100.0,
        ) {
            let m = u_d.len();
            let u_d = v(&u_d);
            let c = ConstraintCoeffs::new(v(&a_seed[..m]), b);
            prop_assume!(c.a.norm() > 1e-3);
            let r = solve_halfspace_qp(&u_d, &c);
            let again = solve_halfspace_qp(&r.u, &c);
            prop_assert!(!again.active || c.residual(&r.u).abs() < 1e-12);
            prop_assert!((&again.u - &r.u).amax() <= 1e-12);

            let scaled = ConstraintCoeffs::new(&c.a * alpha, c.b * alpha);
            let rs = solve_halfspace_qp(&u_d, &scaled);
            prop_assert_eq!(rs.active, r.active);
            prop_assert!((&rs.u - &r.u).amax() <= 1e-10 * (1.0 + r.u.amax()));
        }
    }

    #[test]
    fn boxed_matches_halfspace_when_box_is_loose() {
        let c = row(&[1.0, -0.5], -1.0);
        let u_d = v(&[0.2, 0.4]);
        let free = solve_halfspace_qp(&u_d, &c);
        let boxed = solve_boxed_qp(&u_d, &c, &v(&[-10.0, -10.0]), &v(&[10.0, 10.0])).unwrap();
        assert!(boxed.feasible && boxed.active);
        assert_abs_diff_eq!(boxed.u, free.u, epsilon = 1e-12);
    }

    #[test]
    fn boxed_infeasible_and_errors() {
        let r = solve_boxed_qp(&v(&[0.0]), &row(&[1.0], -2.0), &v(&[-5.0]), &v(&[1.0])).unwrap();
        assert!(!r.feasible);
        let five = DVector::zeros(5);
        assert!(matches!(
            solve_boxed_qp(
                &five,
                &ConstraintCoeffs::new(five.clone(), 0.0),
                &five,
                &five
            ),
            Err(Error::UnsupportedDimension(5))
        ));
        assert!(solve_boxed_qp(&v(&[0.0]), &row(&[1.0], 0.0), &v(&[1.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn boxed_clamps_when_halfspace_is_slack() {
        let r = solve_boxed_qp(
            &v(&[3.0, -3.0]),
            &row(&[1.0, 1.0], 10.0),
            &v(&[-1.0, -1.0]),
            &v(&[1.0, 1.0]),
        )
        .unwrap();
        assert!(r.feasible && !r.active);
        assert_eq!(r.u, v(&[1.0, -1.0]));
    }

    /// Brute force for m = 2: the clamp of `u_d` if it satisfies the row,
    /// otherwise the best point of a dense 1-D grid along the constraint
    /// line clipped to the box.
    fn boxed_grid_oracle(
        u_d: &DVector<f64>,
        c: &ConstraintCoeffs,
        lo: f64,
        hi: f64,
    ) -> Option<DVector<f64>> {
        let clamp = u_d.map(|x| x.clamp(lo, hi));
        if c.residual(&clamp) >= 0.0 {
            return Some(clamp);
        }
        let (pivot, other) = if c.a[0].abs() >= c.a[1].abs() {
            (0, 1)
        } else {
            (1, 0)
        };
        if c.a[pivot] == 0.0 {
            return None;
        }
        let pitch = 1e-6;
        let steps = ((hi - lo) / pitch).round() as usize;
        let mut best: Option<(f64, DVector<f64>)> = None;
        for s in 0..=steps {
            let w = lo + s as f64 * pitch;
            let p = -(c.b + c.a[other] * w) / c.a[pivot];
            if p < lo || p > hi {
                continue;
            }
            let mut u = DVector::zeros(2);
            u[other] = w;
            u[pivot] = p;
            let obj = (&u - u_d).norm_squared();
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, u));
            }
        }
        best.map(|(_, u)| u)
    }

    #[test]
    fn boxed_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (lo, hi) = (-1.0, 1.0);
        for _ in 0..25 {
            let u_d = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let c = ConstraintCoeffs::new(
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
                rng.gen_range(-2.0..2.0),
            );
            let r = solve_boxed_qp(&u_d, &c, &v(&[lo, lo]), &v(&[hi, hi])).unwrap();
            match boxed_grid_oracle(&u_d, &c, lo, hi) {
                Some(g) => {
                    assert!(r.feasible);
                    assert!((&r.u - &g).amax() <= 2e-3, "{} vs {}", r.u, g);
                }
                None => assert!(!r.feasible),
            }
        }
    }
}
