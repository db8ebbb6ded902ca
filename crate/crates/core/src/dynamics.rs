//! Control-affine plants `ẋ = f(x) + g(x)u`, `y = l(x)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result};

pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A plant with drift `f`, input map `g` and output map `l`.
///
/// The callables must be pure; the struct is immutable after construction
/// and cheap to clone.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    k: usize,
    drift: VectorField,
    input_map: MatrixField,
    output_map: VectorField,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem {
    pub fn new(
        n: usize,
        m: usize,
        k: usize,
        drift: VectorField,
        input_map: MatrixField,
        output_map: VectorField,
    ) -> Self {
        Self {
            n,
            m,
            k,
            drift,
            input_map,
            output_map,
        }
    }

    /// `ẋ = A x + B u`, `y = C x`.
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        check_len("A columns", n, a.ncols())?;
        check_len("B rows", n, b.nrows())?;
        check_len("C columns", n, c.ncols())?;
        let (m, k) = (b.ncols(), c.nrows());
        Ok(Self::new(
            n,
            m,
            k,
            Arc::new(move |x| &a * x),
            Arc::new(move |_| b.clone()),
            Arc::new(move |x| &c * x),
        ))
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.k
    }

    pub fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("state", self.n, x.len())?;
        Ok((self.drift)(x))
    }

    pub fn input_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len("state", self.n, x.len())?;
        Ok((self.input_map)(x))
    }

    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("state", self.n, x.len())?;
        Ok((self.output_map)(x))
    }

    /// `f(x) + g(x) u`.
    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("input", self.m, u.len())?;
        Ok(self.drift(x)? + self.input_matrix(x)? * u)
    }
}

/// State matrix of the linear example.
pub fn example1_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, -2.0, 0.0, -1.0, 1.0, 1.0, 0.0, -1.0])
}

pub fn example1_b() -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 1.0])
}

pub fn example1_c() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0])
}

pub fn make_example1_system() -> ControlAffineSystem {
    ControlAffineSystem::linear(example1_a(), example1_b(), example1_c())
        .expect("example matrices are consistent")
}

/// Rössler parameters `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosslerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for RosslerParams {
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.2,
            c: 5.0,
        }
    }
}

impl RosslerParams {
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let Self { a, b, c } = *self;
        DVector::from_vec(vec![-x[1] - x[2], x[0] + a * x[1], b + x[2] * (x[0] - c)])
    }
}

/// Rössler plant with identity input map and output `y = x₁`.
pub fn make_rossler_system(a: f64, b: f64, c: f64) -> ControlAffineSystem {
    let params = RosslerParams { a, b, c };
    ControlAffineSystem::new(
        3,
        3,
        1,
        Arc::new(move |x| params.drift(x)),
        Arc::new(|_| DMatrix::identity(3, 3)),
        Arc::new(|x| DVector::from_element(1, x[0])),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn example1_drift() {
        let sys = make_example1_system();
        assert_eq!(
            sys.drift(&v(&[0.0, 0.0, 0.0])).unwrap(),
            v(&[0.0, 0.0, 0.0])
        );
        let fx = sys.drift(&v(&[2.0, 2.2, 2.0])).unwrap();
        assert_abs_diff_eq!(fx, v(&[-1.6, -0.2, 0.0]), epsilon = 1e-12);
        assert_eq!(
            sys.drift(&v(&[1.0, 0.0, 0.0])).unwrap(),
            v(&[-1.0, 0.0, 1.0])
        );
    }

    #[test]
    fn example1_shape_and_output() {
        let sys = make_example1_system();
        assert_eq!(
            (sys.state_dim(), sys.input_dim(), sys.output_dim()),
            (3, 1, 1)
        );
        assert_abs_diff_eq!(
            sys.output(&v(&[2.0, 2.2, 2.0])).unwrap()[0],
            4.2,
            epsilon = 1e-12
        );
        assert_eq!(sys.output(&v(&[0.0, 0.0, 5.0])).unwrap()[0], 0.0);
        assert_eq!(sys.output(&v(&[1.0, 1.0, 0.0])).unwrap()[0], 2.0);
        let g = sys.input_matrix(&v(&[7.0, -1.0, 3.0])).unwrap();
        assert_eq!(g, DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 1.0]));
    }

    #[test]
    fn rossler_drift_and_maps() {
        let sys = make_rossler_system(0.2, 0.2, 5.0);
        assert_abs_diff_eq!(
            sys.drift(&v(&[0.0, 0.0, 0.0])).unwrap(),
            v(&[0.0, 0.0, 0.2]),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            sys.drift(&v(&[5.0, 0.0, 1.0])).unwrap(),
            v(&[-1.0, 5.0, 0.2]),
            epsilon = 1e-15
        );
        let no_b = make_rossler_system(0.2, 0.0, 5.0);
        assert_eq!(
            no_b.drift(&v(&[0.0, 0.0, 0.0])).unwrap(),
            v(&[0.0, 0.0, 0.0])
        );
        assert_eq!(
            sys.input_matrix(&v(&[1.0, 2.0, 3.0])).unwrap(),
            DMatrix::identity(3, 3)
        );
        assert_eq!(sys.output(&v(&[1.0, 2.0, 3.0])).unwrap(), v(&[1.0]));
    }

    #[test]
    fn zero_input_map() {
        let sys = ControlAffineSystem::new(
            2,
            3,
            1,
            Arc::new(|x| x.clone()),
            Arc::new(|_| DMatrix::zeros(2, 3)),
            Arc::new(|x| v(&[x[0]])),
        );
        assert_eq!(
            sys.input_matrix(&v(&[1.0, 1.0])).unwrap(),
            DMatrix::zeros(2, 3)
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sys = make_example1_system();
        assert!(sys.drift(&v(&[1.0, 2.0])).is_err());
        assert!(sys.input_matrix(&v(&[1.0])).is_err());
        assert!(sys.output(&v(&[1.0, 2.0, 3.0, 4.0])).is_err());
        assert!(
            ControlAffineSystem::linear(example1_a(), DMatrix::zeros(2, 1), example1_c()).is_err()
        );
    }

    proptest! {
        #[test]
        fn example1_drift_is_linear(
            x in prop::array::uniform3(-100.0f64..100.0),
            z in prop::array::uniform3(-100.0f64..100.0),
            alpha in -10.0f64..10.0,
            beta in -10.0f64..10.0,
        ) {
            let sys = make_example1_system();
            let (x, z) = (v(&x), v(&z));
            let lhs = sys.drift(&(&x * alpha + &z * beta)).unwrap();
            let rhs = sys.drift(&x).unwrap() * alpha + sys.drift(&z).unwrap() * beta;
            let scale = 1.0 + lhs.amax();
            prop_assert!((lhs - rhs).amax() <= 1e-12 * scale);
        }

        #[test]
        fn preset_input_maps_are_state_independent(
            states in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 100)
        ) {
            let lin = make_example1_system();
            let ros = make_rossler_system(0.2, 0.2, 5.0);
            let g_lin = lin.input_matrix(&v(&[0.0; 3])).unwrap();
            let g_ros = ros.input_matrix(&v(&[0.0; 3])).unwrap();
            for s in &states {
                prop_assert_eq!(&lin.input_matrix(&v(s)).unwrap(), &g_lin);
                prop_assert_eq!(&ros.input_matrix(&v(s)).unwrap(), &g_ros);
            }
        }
    }
}
