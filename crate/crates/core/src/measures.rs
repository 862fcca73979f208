//! Gaussian measures on discretized path space and their logarithmic derivatives.
//!
//! Differentiation along a vector `k` uses the shift `S(t) x = x - t k`, so for a
//! Gaussian with mean `m` and precision `P`
//!
//! ```text
//! beta(k, x) = -(x - m)^T P k
//! ```
//!
//! Along a vector field `h` (shift `S(t) x = x - t h(x)`) the log-derivative picks
//! up the trace of the Jacobian: `beta_h(x) = beta(h(x), x) + tr h'(x)`. The
//! matching integration-by-parts identity
//!
//! ```text
//! E[phi'(x) h(x)] + E[phi(x) beta_h(x)] = 0
//! ```
//!
//! is what [`ibp_residual`] measures.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::flows::VectorField;
use crate::lattice::TimeLattice;
use crate::numdiff;
use crate::quadrature::{self, Estimate, QuadratureSpec};

/// Multivariate normal stored by its precision matrix and Cholesky factor.
#[derive(Clone)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    /// Lower Cholesky factor `L` with `P = L L^T`.
    chol: DMatrix<f64>,
    /// Number of nonzero sub-diagonals of `chol`.
    bandwidth: usize,
    log_norm_const: f64,
}

impl fmt::Debug for GaussianMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianMeasure")
            .field("dim", &self.dim())
            .field("bandwidth", &self.bandwidth)
            .field("log_norm_const", &self.log_norm_const)
            .finish()
    }
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("measure dimension must be >= 1".into()));
        }
        if precision.nrows() != dim || precision.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: precision.nrows(),
            });
        }
        let scale = precision.amax().max(f64::MIN_POSITIVE);
        let asym = (&precision - precision.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "precision not symmetric (max asymmetry {asym:e})"
            )));
        }
        let precision = (&precision + precision.transpose()) * 0.5;
        let chol = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?
            .unpack();
        let mut bandwidth = 0;
        for c in 0..dim {
            for r in (c + 1)..dim {
                if chol[(r, c)] != 0.0 {
                    bandwidth = bandwidth.max(r - c);
                }
            }
        }
        let log_det: f64 = chol.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_norm_const =
            -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_det;
        Ok(Self {
            mean,
            precision,
            chol,
            bandwidth,
            log_norm_const,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
            .expect("identity precision is positive-definite")
    }

    pub fn from_covariance(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let inv = covariance
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?
            .inverse();
        Self::new(mean, inv)
    }

    /// Discretized Wiener measure: mean zero, precision = Cameron-Martin Gram matrix.
    pub fn wiener(lattice: &TimeLattice) -> Self {
        Self::new(
            DVector::zeros(lattice.state_dim()),
            lattice.cameron_martin_gram().gram,
        )
        .expect("Cameron-Martin Gram matrix is positive-definite")
    }

    /// Wiener measure whose energy is the kinetic term `b(v) = v^T B v / 2`.
    pub fn kinetic_wiener(lattice: &TimeLattice, kinetic: &DMatrix<f64>) -> Result<Self> {
        Self::new(
            DVector::zeros(lattice.state_dim()),
            lattice.kinetic_gram(kinetic)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_norm_const(&self) -> f64 {
        self.log_norm_const
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        nalgebra::Cholesky::new(self.precision.clone())
            .expect("precision factorized at construction")
            .inverse()
    }

    /// `sum_i log L_ii`, i.e. half the log-determinant of the precision.
    pub fn half_log_det_precision(&self) -> f64 {
        self.chol.diagonal().iter().map(|d| d.ln()).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let r = DVector::from_column_slice(x) - &self.mean;
        Ok(self.log_norm_const - 0.5 * r.dot(&(&self.precision * &r)))
    }

    /// Maps a standard normal vector to `mean + L^{-T} z`, a draw from this measure.
    pub fn transform_standard(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let l = self.chol.as_slice();
        // back substitution for L^T y = z; column i of L is contiguous
        for i in (0..n).rev() {
            let col = &l[i * n..(i + 1) * n];
            let upper = (i + self.bandwidth).min(n - 1);
            let mut acc = z[i];
            for k in (i + 1)..=upper {
                acc -= col[k] * out[k];
            }
            out[i] = acc / col[i];
        }
        for (o, m) in out.iter_mut().zip(self.mean.iter()) {
            *o += m;
        }
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let mut rng = quadrature::worker_rng(seed, 0);
        let mut z = vec![0.0; self.dim()];
        Ok((0..n)
            .map(|_| {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                let mut x = vec![0.0; self.dim()];
                self.transform_standard(&z, &mut x);
                x
            })
            .collect())
    }

    /// `beta(k, x) = -(x - mean)^T P k`.
    pub fn log_derivative_along_vector(&self, k: &[f64], x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), k.len())?;
        check_dim(self.dim(), x.len())?;
        Ok(self.log_derivative_unchecked(k, x))
    }

    fn log_derivative_unchecked(&self, k: &[f64], x: &[f64]) -> f64 {
        let n = self.dim();
        let p = self.precision.as_slice();
        let mut acc = 0.0;
        for (c, &kc) in k.iter().enumerate() {
            if kc == 0.0 {
                continue;
            }
            let col = &p[c * n..(c + 1) * n];
            let mut dot = 0.0;
            for r in 0..n {
                dot += (x[r] - self.mean[r]) * col[r];
            }
            acc += dot * kc;
        }
        -acc
    }

    /// `beta_h(x) = beta(h(x), x) + tr h'(x)` with both summands kept.
    pub fn log_derivative_along_field(
        &self,
        h: &VectorField,
        x: &[f64],
    ) -> Result<FieldLogDerivative> {
        check_dim(self.dim(), h.dim())?;
        check_dim(self.dim(), x.len())?;
        let hx = h.eval(x);
        let vector_term = self.log_derivative_unchecked(&hx, x);
        let trace_term = h.jacobian_trace(x)?;
        Ok(FieldLogDerivative::new(vector_term, trace_term))
    }
}

/// The two summands of a field log-derivative and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldLogDerivative {
    pub vector_term: f64,
    pub trace_term: f64,
    pub total: f64,
}

impl FieldLogDerivative {
    pub fn new(vector_term: f64, trace_term: f64) -> Self {
        Self {
            vector_term,
            trace_term,
            total: vector_term + trace_term,
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Smooth scalar function with a user-supplied gradient.
#[derive(Clone)]
pub struct TestFunction {
    dim: usize,
    label: String,
    value: ScalarFn,
    gradient: VectorFn,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({}, dim {})", self.label, self.dim)
    }
}

impl TestFunction {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, format!("{c}"), move |_| c, move |_| vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }

    /// Relative disagreement between the supplied gradient and central differences.
    pub fn gradient_discrepancy(&self, x: &[f64]) -> f64 {
        let fd = numdiff::central_gradient(&|p: &[f64]| self.value(p), x, 1e-6);
        numdiff::relative_discrepancy(&self.gradient(x), &fd)
    }
}

pub fn expectation<F>(m: &GaussianMeasure, f: F, q: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    quadrature::integrate(m, q, f)
}

/// Terms of the integration-by-parts identity for `(phi, h)` under `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpResidual {
    /// `E[phi'(x) h(x)]`
    pub gradient_term: Estimate,
    /// `E[phi(x) (beta(h(x), x) + tr h'(x))]`
    pub log_derivative_term: Estimate,
    /// Sum of the two, estimated per sample so Monte Carlo errors are paired.
    pub residual: Estimate,
}

pub fn ibp_residual(
    m: &GaussianMeasure,
    phi: &TestFunction,
    h: &VectorField,
    q: &QuadratureSpec,
) -> Result<IbpResidual> {
    check_dim(m.dim(), phi.dim())?;
    check_dim(m.dim(), h.dim())?;
    if !h.has_jacobian() {
        return Err(Error::JacobianUnavailable(h.label().to_string()));
    }
    let est = quadrature::integrate_many(m, q, 3, |x, out| {
        let hx = h.eval(x);
        let grad = phi.gradient(x);
        let directional: f64 = grad.iter().zip(&hx).map(|(g, v)| g * v).sum();
        let beta = m.log_derivative_unchecked(&hx, x)
            + h.jacobian_trace(x).expect("jacobian checked above");
        let log_term = phi.value(x) * beta;
        out[0] = directional;
        out[1] = log_term;
        out[2] = directional + log_term;
    })?;
    Ok(IbpResidual {
        gradient_term: est[0],
        log_derivative_term: est[1],
        residual: est[2],
    })
}
