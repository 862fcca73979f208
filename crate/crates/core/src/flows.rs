//! Vector fields, one-parameter transformation families, and how Gaussian
//! measures move under them.
//!
//! Sign convention: the generator of a family is `h_S = -d/dalpha S(alpha)|_0`,
//! so the shift `S(t) x = x - t k` has generator `k` and the scaling
//! `S(alpha) x = e^{-alpha} x` has generator `h(x) = x`. With this convention
//! the log-derivative of `nu` along `S` equals the field log-derivative along
//! `h_S`, and the log-Jacobian of a flow is `-int tr h'` along trajectories.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::lattice::TimeLattice;
use crate::measures::{GaussianMeasure, ScalarFn, TestFunction, VectorFn};
use crate::numdiff;
use crate::quadrature::{self, Estimate, QuadratureSpec};

pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type FamilyFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type FamilyJacobianFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
pub type FamilyTraceFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Base step for differences in the family parameter.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Step for doubly nested differences (parameter, then state).
const NESTED_FD_STEP: f64 = 1e-4;

/// A map `h: R^dim -> R^dim` with an optional Jacobian.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    label: String,
    eval: VectorFn,
    jacobian: Option<MatrixFn>,
    trace: Option<ScalarFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({}, dim {})", self.label, self.dim)
    }
}

impl VectorField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
            jacobian: Some(Arc::new(jacobian)),
            trace: None,
        }
    }

    pub fn without_jacobian(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
            jacobian: None,
            trace: None,
        }
    }

    /// Attaches a direct formula for `tr h'(x)`, skipping the dense Jacobian.
    pub fn with_trace(mut self, trace: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.trace = Some(Arc::new(trace));
        self
    }

    /// Replaces a missing Jacobian with central differences of `eval`.
    pub fn with_fd_jacobian(mut self) -> Self {
        if self.jacobian.is_none() {
            let eval = self.eval.clone();
            let dim = self.dim;
            self.jacobian = Some(Arc::new(move |x: &[f64]| {
                numdiff::central_jacobian(&|p: &[f64]| eval(p), x, dim, 1e-6)
            }));
        }
        self
    }

    pub fn constant(k: Vec<f64>) -> Self {
        let dim = k.len();
        Self::new(dim, "constant", move |_| k.clone(), move |_| DMatrix::zeros(dim, dim))
            .with_trace(|_| 0.0)
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim]).relabel("zero")
    }

    /// `h(x) = A x`.
    pub fn linear(a: DMatrix<f64>) -> Self {
        let dim = a.nrows();
        let tr = a.trace();
        let a_eval = a.clone();
        Self::new(
            dim,
            "linear",
            move |x| (&a_eval * DVector::from_column_slice(x)).data.into(),
            move |_| a.clone(),
        )
        .with_trace(move |_| tr)
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.jacobian
            .as_ref()
            .map(|j| j(x))
            .ok_or_else(|| Error::JacobianUnavailable(self.label.clone()))
    }

    pub fn jacobian_trace(&self, x: &[f64]) -> Result<f64> {
        match &self.trace {
            Some(t) => Ok(t(x)),
            None => Ok(self.jacobian(x)?.trace()),
        }
    }

    /// Relative disagreement between the Jacobian and central differences of `eval`.
    pub fn jacobian_discrepancy(&self, x: &[f64]) -> Result<f64> {
        let analytic = self.jacobian(x)?;
        let fd = numdiff::central_jacobian(&|p: &[f64]| self.eval(p), x, self.dim, NESTED_FD_STEP);
        Ok(numdiff::relative_discrepancy(analytic.as_slice(), fd.as_slice()))
    }
}

/// A family `S(alpha)` of self-maps of `R^dim` with `S(0) = id`.
#[derive(Clone)]
pub struct TransformationFamily {
    dim: usize,
    label: String,
    eval: FamilyFn,
    alpha_jacobian: Option<FamilyJacobianFn>,
    alpha_jacobian_trace: Option<FamilyTraceFn>,
    analytic_generator: Option<VectorField>,
    group: bool,
}

impl fmt::Debug for TransformationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TransformationFamily({}, dim {})", self.label, self.dim)
    }
}

impl TransformationFamily {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
            alpha_jacobian: None,
            alpha_jacobian_trace: None,
            analytic_generator: None,
            group: false,
        }
    }

    /// Supplies `d S(alpha)(x) / dx` analytically.
    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.alpha_jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Supplies `tr dS(alpha)(x)/dx` without forming the Jacobian.
    pub fn with_jacobian_trace(
        mut self,
        trace: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.alpha_jacobian_trace = Some(Arc::new(trace));
        self
    }

    /// Records the generator in closed form; [`generator`] still differentiates numerically.
    pub fn with_generator(mut self, h: VectorField) -> Self {
        self.analytic_generator = Some(h);
        self
    }

    /// Declares `S` a one-parameter group, `S(a + b) = S(a) S(b)`, generated by `h`.
    /// Velocities and instantaneous traces then come from `h` at `S(alpha) x`
    /// instead of differences in `alpha`.
    pub fn with_group_generator(mut self, h: VectorField) -> Self {
        self.analytic_generator = Some(h);
        self.group = true;
        self
    }

    pub fn is_group(&self) -> bool {
        self.group
    }

    pub fn analytic_generator(&self) -> Option<&VectorField> {
        self.analytic_generator.as_ref()
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, "identity", |_, x| x.to_vec())
            .with_jacobian(move |_, _| DMatrix::identity(dim, dim))
            .with_group_generator(VectorField::zero(dim))
    }

    /// `S(alpha) x = x - alpha k`.
    pub fn translation(k: Vec<f64>) -> Self {
        let dim = k.len();
        let h = VectorField::constant(k.clone());
        Self::new(dim, "translation", move |a, x| {
            x.iter().zip(&k).map(|(xi, ki)| xi - a * ki).collect()
        })
        .with_jacobian(move |_, _| DMatrix::identity(dim, dim))
        .with_group_generator(h)
    }

    /// `S(alpha) x = x - alpha k + alpha^2 w`; same generator as the translation by `k`.
    pub fn curved_translation(k: Vec<f64>, w: Vec<f64>) -> Self {
        let dim = k.len();
        let h = VectorField::constant(k.clone());
        Self::new(dim, "curved_translation", move |a, x| {
            x.iter()
                .zip(k.iter().zip(&w))
                .map(|(xi, (ki, wi))| xi - a * ki + a * a * wi)
                .collect()
        })
        .with_jacobian(move |_, _| DMatrix::identity(dim, dim))
        .with_generator(h)
    }

    /// `S(alpha) x = e^{rate alpha} x`.
    pub fn scaling(dim: usize, rate: f64) -> Self {
        Self::new(dim, "scaling", move |a, x| {
            let s = (rate * a).exp();
            x.iter().map(|v| s * v).collect()
        })
        .with_jacobian(move |a, _| DMatrix::identity(dim, dim) * (rate * a).exp())
        .with_group_generator(VectorField::linear(DMatrix::identity(dim, dim) * -rate))
    }

    /// Linear flow `S(alpha) x = exp(alpha A) x`.
    pub fn linear_flow(a: DMatrix<f64>, label: impl Into<String>) -> Self {
        let dim = a.nrows();
        let h = VectorField::linear(-&a);
        let norm1 = a
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let eigenvalues = a.clone().complex_eigenvalues();
        let a_eval = a.clone();
        Self::new(dim, label, move |alpha, x| expm_apply(&a_eval, norm1, alpha, x))
            .with_jacobian(move |alpha, _| (&a * alpha).exp())
            .with_jacobian_trace(move |alpha, _| {
                eigenvalues.iter().map(|l| (l * alpha).exp().re).sum()
            })
            .with_group_generator(h)
    }

    /// Rotation by `rate * alpha` in the `(i, j)` coordinate plane.
    pub fn rotation(dim: usize, i: usize, j: usize, rate: f64) -> Self {
        let mut a = DMatrix::zeros(dim, dim);
        a[(i, j)] = -rate;
        a[(j, i)] = rate;
        Self::linear_flow(a, "rotation")
    }

    /// `S(alpha) x = x + alpha * rate * x_j e_i` (nilpotent generator).
    pub fn shear(dim: usize, i: usize, j: usize, rate: f64) -> Self {
        let mut a = DMatrix::zeros(dim, dim);
        a[(i, j)] = rate;
        Self::linear_flow(a, "shear")
    }

    /// `S(alpha) x = x + alpha * amplitude * sin(x_{(i+1) mod dim})` componentwise.
    /// Not a flow: `S(a) . S(b) != S(a + b)`.
    pub fn sine_perturbation(dim: usize, amplitude: f64) -> Self {
        let h = VectorField::new(
            dim,
            "sine",
            move |x| (0..dim).map(|i| -amplitude * x[(i + 1) % dim].sin()).collect(),
            move |x| {
                let mut j = DMatrix::zeros(dim, dim);
                for i in 0..dim {
                    let c = (i + 1) % dim;
                    j[(i, c)] -= amplitude * x[c].cos();
                }
                j
            },
        );
        Self::new(dim, "sine_perturbation", move |a, x| {
            (0..dim)
                .map(|i| x[i] + a * amplitude * x[(i + 1) % dim].sin())
                .collect()
        })
        .with_jacobian(move |a, x| {
            let mut j = DMatrix::identity(dim, dim);
            for i in 0..dim {
                let c = (i + 1) % dim;
                j[(i, c)] += a * amplitude * x[c].cos();
            }
            j
        })
        .with_generator(h)
    }

    /// Applies a linear flow `exp(alpha A_q)` to every node of a path.
    pub fn pointwise_linear(
        lattice: &TimeLattice,
        a_q: &DMatrix<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let d = lattice.dim_q();
        if a_q.nrows() != d || a_q.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a_q.nrows(),
            });
        }
        let n = lattice.state_dim();
        let mut a = DMatrix::zeros(n, n);
        for j in 0..lattice.n_steps() {
            a.view_mut((j * d, j * d), (d, d)).copy_from(a_q);
        }
        Ok(Self::linear_flow(a, label))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn has_jacobian(&self) -> bool {
        self.alpha_jacobian.is_some()
    }

    pub fn eval(&self, alpha: f64, x: &[f64]) -> Vec<f64> {
        (self.eval)(alpha, x)
    }

    /// `d S(alpha)(x) / dx`, analytic when supplied, central differences otherwise.
    pub fn jacobian(&self, alpha: f64, x: &[f64]) -> DMatrix<f64> {
        match &self.alpha_jacobian {
            Some(j) => j(alpha, x),
            None => numdiff::central_jacobian(&|p: &[f64]| self.eval(alpha, p), x, self.dim, 1e-6),
        }
    }

    /// `d/dalpha S(alpha)(x)`: `-h(S(alpha) x)` for groups, central differences otherwise.
    pub fn velocity(&self, alpha: f64, x: &[f64]) -> Vec<f64> {
        if let (true, Some(gen)) = (self.group, &self.analytic_generator) {
            return gen.eval(&self.eval(alpha, x)).iter().map(|v| -v).collect();
        }
        let h = DEFAULT_FD_STEP * (1.0 + alpha.abs());
        let up = self.eval(alpha + h, x);
        let down = self.eval(alpha - h, x);
        up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect()
    }
}

/// `exp(alpha A) x` by Taylor series on `s` substeps with `||alpha A / s||_1 <= 1/2`.
fn expm_apply(a: &DMatrix<f64>, norm1: f64, alpha: f64, x: &[f64]) -> Vec<f64> {
    let steps = (2.0 * alpha.abs() * norm1).ceil().max(1.0) as usize;
    let tau = alpha / steps as f64;
    let mut v = DVector::from_column_slice(x);
    let mut term = DVector::zeros(x.len());
    for _ in 0..steps {
        let mut acc = v.clone();
        term.copy_from(&v);
        for k in 1..=40 {
            term = a * &term * (tau / k as f64);
            acc += &term;
            if term.amax() <= f64::EPSILON * acc.amax() {
                break;
            }
        }
        v = acc;
    }
    v.data.into()
}

fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The generator `h_S(x) = -d/dalpha S(alpha)(x)|_0` as a vector field.
///
/// The parameter step is `fd_step * (1 + |x|)`. The Jacobian differentiates the
/// family's analytic Jacobian in `alpha` when one is supplied and falls back to
/// nested differences otherwise.
pub fn generator(family: &TransformationFamily, fd_step: f64) -> VectorField {
    let dim = family.dim;
    let fam = family.clone();
    let eval = move |x: &[f64]| {
        let h = fd_step * (1.0 + euclidean_norm(x));
        let up = fam.eval(h, x);
        let down = fam.eval(-h, x);
        up.iter().zip(&down).map(|(u, d)| -(u - d) / (2.0 * h)).collect::<Vec<f64>>()
    };
    let label = format!("generator({})", family.label);
    let field = match &family.alpha_jacobian {
        Some(jac) => {
            let jac = jac.clone();
            let jacobian = move |x: &[f64]| {
                let h = fd_step * (1.0 + euclidean_norm(x));
                -(jac(h, x) - jac(-h, x)) / (2.0 * h)
            };
            VectorField::new(dim, label, eval, jacobian)
        }
        None => {
            let fam = family.clone();
            let jacobian = move |x: &[f64]| {
                let nested = |p: &[f64]| {
                    let h = NESTED_FD_STEP * (1.0 + euclidean_norm(p));
                    let up = fam.eval(h, p);
                    let down = fam.eval(-h, p);
                    up.iter().zip(&down).map(|(u, d)| -(u - d) / (2.0 * h)).collect()
                };
                numdiff::central_jacobian(&nested, x, dim, NESTED_FD_STEP)
            };
            VectorField::new(dim, label, eval, jacobian)
        }
    };
    match &family.alpha_jacobian_trace {
        Some(tr) => {
            let tr = tr.clone();
            field.with_trace(move |x| {
                let h = fd_step * (1.0 + euclidean_norm(x));
                -(tr(h, x) - tr(-h, x)) / (2.0 * h)
            })
        }
        None => field,
    }
}

/// `log |det dS(alpha)(x)/dx|`.
pub fn jacobian_log_det(family: &TransformationFamily, alpha: f64, x: &[f64]) -> Result<f64> {
    check_dim(family.dim, x.len())?;
    let det = family.jacobian(alpha, x).lu().determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularJacobian { alpha });
    }
    Ok(det.abs().ln())
}

/// `tr h_alpha'(y)` at `y = S(alpha) x`, where `h_alpha = -dS/dalpha o S(alpha)^{-1}`
/// is the instantaneous generator. Equals `-tr(J'(alpha) J(alpha)^{-1})` with
/// `J(alpha) = dS(alpha)(x)/dx`; for a group it is `tr h_S'(S(alpha) x)`, which is
/// what gets evaluated when the family carries a group generator.
pub fn generator_trace_along_flow(
    family: &TransformationFamily,
    alpha: f64,
    x: &[f64],
) -> Result<f64> {
    check_dim(family.dim, x.len())?;
    if let (true, Some(gen)) = (family.group, &family.analytic_generator) {
        if gen.has_jacobian() {
            return gen.jacobian_trace(&family.eval(alpha, x));
        }
    }
    let h = DEFAULT_FD_STEP * (1.0 + alpha.abs());
    let dj = (family.jacobian(alpha + h, x) - family.jacobian(alpha - h, x)) / (2.0 * h);
    let lu = family.jacobian(alpha, x).lu();
    let solved = lu.solve(&dj).ok_or(Error::SingularJacobian { alpha })?;
    Ok(-solved.trace())
}

/// `int_0^alpha tr h_s'(S(s) x) ds` by composite Simpson on `n_grid` intervals.
pub fn trace_integral_along_flow(
    family: &TransformationFamily,
    alpha: f64,
    x: &[f64],
    n_grid: usize,
) -> Result<f64> {
    if n_grid == 0 {
        return Err(Error::InvalidArgument("n_grid must be >= 1".into()));
    }
    let step = alpha / n_grid as f64;
    let mut acc = 0.0;
    for i in 0..n_grid {
        let a0 = i as f64 * step;
        let f0 = generator_trace_along_flow(family, a0, x)?;
        let fm = generator_trace_along_flow(family, a0 + 0.5 * step, x)?;
        let f1 = generator_trace_along_flow(family, a0 + step, x)?;
        acc += step / 6.0 * (f0 + 4.0 * fm + f1);
    }
    Ok(acc)
}

/// `log|det dS(alpha)| + int_0^alpha tr h_s' ds`, zero in exact arithmetic.
pub fn determinant_trace_residual(
    family: &TransformationFamily,
    alpha: f64,
    x: &[f64],
    n_grid: usize,
) -> Result<f64> {
    Ok(jacobian_log_det(family, alpha, x)? + trace_integral_along_flow(family, alpha, x, n_grid)?)
}

/// `d/dalpha int phi(S(alpha) x) nu(dx)` at 0 by a central difference, with the
/// same quadrature nodes at `+alpha` and `-alpha`.
pub fn pushforward_derivative(
    m: &GaussianMeasure,
    family: &TransformationFamily,
    phi: &TestFunction,
    q: &QuadratureSpec,
) -> Result<Estimate> {
    check_dim(m.dim(), family.dim)?;
    check_dim(m.dim(), phi.dim())?;
    let h = DEFAULT_FD_STEP;
    quadrature::integrate(m, q, |x| {
        (phi.value(&family.eval(h, x)) - phi.value(&family.eval(-h, x))) / (2.0 * h)
    })
}

/// Both sides of the pushforward/generator identity.
///
/// `lhs = d/dalpha int phi o S(alpha) dnu`, `rhs = int phi' h_S dnu`. Under the
/// generator convention `lhs = -rhs`, so `difference = lhs + rhs` vanishes.
/// `log_derivative_route = int phi beta_{h_S} dnu` is a third estimate of `lhs`.
/// Stochastic rules draw each term from an independent stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposition1Check {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub log_derivative_route: Estimate,
    pub difference: f64,
    pub difference_std_error: Option<f64>,
}

impl Proposition1Check {
    /// `|difference| <= abs_tol`, or within `n_se` combined standard errors when stochastic.
    pub fn agrees(&self, abs_tol: f64, n_se: f64) -> bool {
        match self.difference_std_error {
            Some(se) => self.difference.abs() <= n_se * se,
            None => self.difference.abs() <= abs_tol,
        }
    }
}

pub fn proposition1_check(
    m: &GaussianMeasure,
    family: &TransformationFamily,
    phi: &TestFunction,
    q: &QuadratureSpec,
) -> Result<Proposition1Check> {
    let lhs = pushforward_derivative(m, family, phi, q)?;
    let h = generator(family, DEFAULT_FD_STEP);
    let rhs_spec = if q.is_stochastic() { q.derived(1) } else { *q };
    let rhs = quadrature::integrate(m, &rhs_spec, |x| {
        let hx = h.eval(x);
        phi.gradient(x).iter().zip(&hx).map(|(g, v)| g * v).sum()
    })?;
    let route_spec = if q.is_stochastic() { q.derived(2) } else { *q };
    let log_derivative_route = quadrature::integrate(m, &route_spec, |x| {
        let beta = m
            .log_derivative_along_field(&h, x)
            .expect("generator carries a Jacobian");
        phi.value(x) * beta.total
    })?;
    let difference_std_error = match (lhs.std_error, rhs.std_error) {
        (Some(a), Some(b)) => Some(a.hypot(b)),
        _ => None,
    };
    Ok(Proposition1Check {
        lhs,
        rhs,
        log_derivative_route,
        difference: lhs.value + rhs.value,
        difference_std_error,
    })
}

/// Density of `S(alpha)_* nu` relative to `nu`, sampled along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub probe: Vec<f64>,
}

/// Growth rate of the density ratio at parameter `alpha` along the probe's
/// trajectory: `beta(h_alpha(y), y) + tr h_alpha'(y)` with `y = S(alpha) x`.
pub fn density_growth_rate(
    m: &GaussianMeasure,
    family: &TransformationFamily,
    alpha: f64,
    x: &[f64],
) -> Result<f64> {
    let y = family.eval(alpha, x);
    let h: Vec<f64> = family.velocity(alpha, x).iter().map(|v| -v).collect();
    Ok(m.log_derivative_along_vector(&h, &y)? + generator_trace_along_flow(family, alpha, x)?)
}

/// Integrates `g' = beta_{S(alpha)} g`, `g(0) = 1`, with classical RK4 on
/// `n_grid` uniform steps. `g(alpha)` is the Radon-Nikodym derivative of
/// `S(alpha)_* nu` with respect to `nu` at the point `S(alpha) x_probe`.
pub fn solve_density_ode(
    m: &GaussianMeasure,
    family: &TransformationFamily,
    alpha_max: f64,
    n_grid: usize,
    x_probe: &[f64],
) -> Result<DensityCurve> {
    check_dim(m.dim(), family.dim)?;
    check_dim(m.dim(), x_probe.len())?;
    if n_grid == 0 {
        return Err(Error::InvalidArgument("n_grid must be >= 1".into()));
    }
    let step = alpha_max / n_grid as f64;
    if !step.is_finite() || (step == 0.0 && alpha_max != 0.0) {
        return Err(Error::StepUnderflow { alpha: 0.0 });
    }
    let rate = |a: f64| density_growth_rate(m, family, a, x_probe);
    let mut alphas = Vec::with_capacity(n_grid + 1);
    let mut values = Vec::with_capacity(n_grid + 1);
    let mut g = 1.0;
    alphas.push(0.0);
    values.push(g);
    for i in 0..n_grid {
        let a = i as f64 * step;
        if step != 0.0 && a + step == a {
            return Err(Error::StepUnderflow { alpha: a });
        }
        let b0 = rate(a)?;
        let bm = rate(a + 0.5 * step)?;
        let b1 = rate(a + step)?;
        let k1 = b0 * g;
        let k2 = bm * (g + 0.5 * step * k1);
        let k3 = bm * (g + 0.5 * step * k2);
        let k4 = b1 * (g + step * k3);
        g += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        alphas.push((i + 1) as f64 * step);
        values.push(g);
    }
    Ok(DensityCurve {
        alphas,
        values,
        probe: x_probe.to_vec(),
    })
}

/// Change-of-variables value of the same density ratio:
/// `rho(x) / (rho(S(alpha) x) |det dS(alpha)(x)|)`.
pub fn pushforward_density_ratio(
    m: &GaussianMeasure,
    family: &TransformationFamily,
    alpha: f64,
    x: &[f64],
) -> Result<f64> {
    let y = family.eval(alpha, x);
    let log_ratio = m.log_density(x)? - m.log_density(&y)? - jacobian_log_det(family, alpha, x)?;
    Ok(log_ratio.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_of_translation_is_the_shift_vector() {
        let k = vec![0.5, -2.0];
        let h = generator(&TransformationFamily::translation(k.clone()), DEFAULT_FD_STEP);
        let hx = h.eval(&[3.0, 1.0]);
        assert!(numdiff::relative_discrepancy(&hx, &k) < 1e-9);
        assert!(h.jacobian(&[3.0, 1.0]).unwrap().amax() < 1e-9);
    }

    #[test]
    fn generator_of_exponential_scaling() {
        let h = generator(&TransformationFamily::scaling(3, 1.0), DEFAULT_FD_STEP);
        let x = [0.3, -1.2, 2.0];
        let hx = h.eval(&x);
        let want: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(numdiff::relative_discrepancy(&hx, &want) < 1e-9);
        let j = h.jacobian(&x).unwrap();
        assert!((j + DMatrix::<f64>::identity(3, 3)).amax() < 1e-9);
        assert!(h.jacobian_discrepancy(&x).unwrap() < 1e-6);
    }

    #[test]
    fn group_velocity_and_trace_match_differences() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 0.4, 0.1]);
        let x = [0.7, -1.1];
        let exact = TransformationFamily::linear_flow(a.clone(), "g");
        let plain = TransformationFamily::new(2, "p", move |t, x| {
            ((&a * t).exp() * DVector::from_column_slice(x)).data.into()
        });
        assert!(exact.is_group() && !plain.is_group());
        for alpha in [0.0, 0.2, -0.6] {
            let v = exact.velocity(alpha, &x);
            assert!(numdiff::relative_discrepancy(&v, &plain.velocity(alpha, &x)) < 1e-8);
            let t = generator_trace_along_flow(&exact, alpha, &x).unwrap();
            let fd = generator_trace_along_flow(&plain, alpha, &x).unwrap();
            assert!((t - fd).abs() < 1e-5, "{t} vs {fd}");
        }
    }

    #[test]
    fn analytic_generators_agree_with_differences() {
        let families = [
            TransformationFamily::translation(vec![1.0, -0.5, 2.0]),
            TransformationFamily::curved_translation(vec![1.0, 0.0, 2.0], vec![3.0, 1.0, -1.0]),
            TransformationFamily::scaling(3, 0.7),
            TransformationFamily::rotation(3, 0, 2, 1.3),
            TransformationFamily::shear(3, 1, 0, -0.4),
            TransformationFamily::sine_perturbation(3, 0.8),
            TransformationFamily::identity(3),
        ];
        let x = [0.4, -1.1, 0.9];
        for fam in &families {
            let exact = fam.analytic_generator().unwrap();
            let fd = generator(fam, DEFAULT_FD_STEP);
            assert!(
                numdiff::relative_discrepancy(&exact.eval(&x), &fd.eval(&x)) < 1e-9,
                "{}",
                fam.label()
            );
            let (je, jf) = (exact.jacobian(&x).unwrap(), fd.jacobian(&x).unwrap());
            assert!((je - jf).amax() < 1e-8, "{}", fam.label());
        }
    }

    #[test]
    fn generator_of_identity_is_zero() {
        let h = generator(&TransformationFamily::identity(2), DEFAULT_FD_STEP);
        assert_eq!(h.eval(&[1.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(h.jacobian_trace(&[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn nested_difference_jacobian_without_analytic_family_jacobian() {
        let fam = TransformationFamily::new(2, "quad", |a, x: &[f64]| {
            vec![x[0] - a * x[1] * x[1], x[1] + a * x[0]]
        });
        let h = generator(&fam, DEFAULT_FD_STEP);
        // h(x) = (x1^2, -x0), h' = [[0, 2 x1], [-1, 0]]
        let j = h.jacobian(&[0.4, 0.9]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.8, -1.0, 0.0]);
        assert!((j - want).amax() < 1e-7);
    }

    #[test]
    fn log_det_of_linear_flow_is_alpha_trace() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -0.5, 0.2]);
        let fam = TransformationFamily::linear_flow(a.clone(), "linear");
        for alpha in [0.0, 0.1, -0.7, 1.3] {
            let ld = jacobian_log_det(&fam, alpha, &[0.2, 0.3]).unwrap();
            assert!((ld - alpha * a.trace()).abs() < 1e-12);
        }
        let tr = TransformationFamily::translation(vec![1.0, 2.0]);
        assert_eq!(jacobian_log_det(&tr, 0.8, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn sine_perturbation_log_det_matches_difference_determinant() {
        let fam = TransformationFamily::sine_perturbation(2, 1.0);
        let x = [0.3, 0.7];
        let eval = |p: &[f64]| fam.eval(0.1, p);
        let fd = numdiff::central_jacobian(&eval, &x, 2, 1e-6);
        let oracle = (fd[(0, 0)] * fd[(1, 1)] - fd[(0, 1)] * fd[(1, 0)]).abs().ln();
        let got = jacobian_log_det(&fam, 0.1, &x).unwrap();
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let fam = TransformationFamily::new(1, "collapse", |a, x: &[f64]| vec![(1.0 - a) * x[0]])
            .with_jacobian(|a, _| DMatrix::from_element(1, 1, 1.0 - a));
        assert_eq!(
            jacobian_log_det(&fam, 1.0, &[0.5]),
            Err(Error::SingularJacobian { alpha: 1.0 })
        );
    }

    #[test]
    fn density_curve_for_identity_family_is_one() {
        let m = GaussianMeasure::standard(2);
        let c = solve_density_ode(&m, &TransformationFamily::identity(2), 0.5, 8, &[0.3, 0.1])
            .unwrap();
        assert_eq!(c.alphas.len(), 9);
        assert!(c.values.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn density_ode_rejects_empty_grid() {
        let m = GaussianMeasure::standard(1);
        assert!(solve_density_ode(&m, &TransformationFamily::identity(1), 0.5, 0, &[0.0]).is_err());
    }

    #[test]
    fn closed_form_ratio_for_scaling() {
        let m = GaussianMeasure::standard(1);
        let fam = TransformationFamily::scaling(1, 1.0);
        let (a, x) = (0.4f64, 1.3f64);
        let y = a.exp() * x;
        let want = (-0.5 * x * x + 0.5 * y * y - a).exp();
        let got = pushforward_density_ratio(&m, &fam, a, &[x]).unwrap();
        assert!((got - want).abs() < 1e-13 * want);
    }
}
