//! Lagrangians `L(q1, q2) = eta(q1, q2) + 1/2 q2^T B q2`, the discrete classical
//! action on a [`TimeLattice`], and the log-derivative of the action-weighted
//! path measure.
//!
//! Both the action and its variation use the left-endpoint rule
//!
//! ```text
//! A(psi) = sum_j L(psi_{j-1} + q, (psi_j - psi_{j-1}) / dt) dt,   psi_{-1} = 0
//! ```
//!
//! which makes the variation the exact derivative of the discrete action.
//!
//! `eta` carries the Lagrangian sign: a potential `V` enters as `eta = -V`. The
//! path weight is `exp(c * sum_j eta dt)` with `c = i` in real time and `c = 1`
//! after Wick rotation, which turns `exp(-int V)` into the Feynman-Kac weight.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};
use crate::flows::VectorField;
use crate::lattice::{Path, TimeLattice};
use crate::numdiff;

pub type EtaFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type EtaGradientFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// `eta(q1, .) = 1/2 q1^T H q1 + g^T q1 + c`, independent of velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadraticPotential {
    pub fn zero(dim_q: usize) -> Self {
        Self {
            hessian: DMatrix::zeros(dim_q, dim_q),
            linear: DVector::zeros(dim_q),
            constant: 0.0,
        }
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        let q = DVector::from_column_slice(q);
        0.5 * q.dot(&(&self.hessian * &q)) + self.linear.dot(&q) + self.constant
    }

    pub fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let q = DVector::from_column_slice(q);
        (&self.hessian * q + &self.linear).data.into()
    }
}

#[derive(Clone)]
pub struct Lagrangian {
    dim_q: usize,
    label: String,
    eta: EtaFn,
    eta_d1: EtaGradientFn,
    eta_d2: EtaGradientFn,
    kinetic: DMatrix<f64>,
    quadratic: Option<QuadraticPotential>,
}

impl fmt::Debug for Lagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lagrangian({}, dim_q {})", self.label, self.dim_q)
    }
}

fn check_kinetic(dim_q: usize, kinetic: &DMatrix<f64>) -> Result<()> {
    if kinetic.nrows() != dim_q || kinetic.ncols() != dim_q {
        return Err(Error::DimensionMismatch {
            expected: dim_q,
            got: kinetic.nrows(),
        });
    }
    let scale = kinetic.amax().max(f64::MIN_POSITIVE);
    if (kinetic - kinetic.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite("kinetic matrix is not symmetric".into()));
    }
    if kinetic.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("kinetic matrix".into()));
    }
    Ok(())
}

impl Lagrangian {
    /// General Lagrangian from `eta` and its partial gradients in position and velocity.
    pub fn new(
        dim_q: usize,
        label: impl Into<String>,
        eta: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        eta_d1: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        eta_d2: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        kinetic: DMatrix<f64>,
    ) -> Result<Self> {
        check_kinetic(dim_q, &kinetic)?;
        Ok(Self {
            dim_q,
            label: label.into(),
            eta: Arc::new(eta),
            eta_d1: Arc::new(eta_d1),
            eta_d2: Arc::new(eta_d2),
            kinetic,
            quadratic: None,
        })
    }

    /// Velocity-independent quadratic `eta`, which the exact Gaussian propagator accepts.
    pub fn quadratic(
        label: impl Into<String>,
        potential: QuadraticPotential,
        kinetic: DMatrix<f64>,
    ) -> Result<Self> {
        let dim_q = potential.linear.len();
        if potential.hessian.nrows() != dim_q || potential.hessian.ncols() != dim_q {
            return Err(Error::DimensionMismatch {
                expected: dim_q,
                got: potential.hessian.nrows(),
            });
        }
        let (e, g) = (potential.clone(), potential.clone());
        let mut l = Self::new(
            dim_q,
            label,
            move |q, _| e.eval(q),
            move |q, _| g.gradient(q),
            move |_, _| vec![0.0; dim_q],
            kinetic,
        )?;
        l.quadratic = Some(potential);
        Ok(l)
    }

    /// `eta = 0`, unit mass.
    pub fn free(dim_q: usize) -> Self {
        Self::quadratic("free", QuadraticPotential::zero(dim_q), DMatrix::identity(dim_q, dim_q))
            .expect("identity kinetic matrix")
    }

    /// `eta = -omega^2 |q1|^2 / 2`, unit mass.
    pub fn harmonic(dim_q: usize, omega: f64) -> Self {
        let potential = QuadraticPotential {
            hessian: DMatrix::identity(dim_q, dim_q) * -(omega * omega),
            ..QuadraticPotential::zero(dim_q)
        };
        Self::quadratic("harmonic", potential, DMatrix::identity(dim_q, dim_q))
            .expect("identity kinetic matrix")
    }

    /// `eta = -lambda |q1|^4`, unit mass.
    pub fn quartic(dim_q: usize, lambda: f64) -> Self {
        Self::new(
            dim_q,
            "quartic",
            move |q, _| {
                let r2: f64 = q.iter().map(|v| v * v).sum();
                -lambda * r2 * r2
            },
            move |q, _| {
                let r2: f64 = q.iter().map(|v| v * v).sum();
                q.iter().map(|v| -4.0 * lambda * r2 * v).collect()
            },
            move |_, _| vec![0.0; dim_q],
            DMatrix::identity(dim_q, dim_q),
        )
        .expect("identity kinetic matrix")
    }

    pub fn with_kinetic(mut self, kinetic: DMatrix<f64>) -> Result<Self> {
        check_kinetic(self.dim_q, &kinetic)?;
        self.kinetic = kinetic;
        Ok(self)
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim_q(&self) -> usize {
        self.dim_q
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kinetic_matrix(&self) -> &DMatrix<f64> {
        &self.kinetic
    }

    pub fn quadratic_potential(&self) -> Option<&QuadraticPotential> {
        self.quadratic.as_ref()
    }

    pub fn eta(&self, q1: &[f64], q2: &[f64]) -> f64 {
        (self.eta)(q1, q2)
    }

    pub fn eta_d1(&self, q1: &[f64], q2: &[f64]) -> Vec<f64> {
        (self.eta_d1)(q1, q2)
    }

    pub fn eta_d2(&self, q1: &[f64], q2: &[f64]) -> Vec<f64> {
        (self.eta_d2)(q1, q2)
    }

    /// `1/2 q2^T B q2`.
    pub fn kinetic_energy(&self, q2: &[f64]) -> f64 {
        let v = DVector::from_column_slice(q2);
        0.5 * v.dot(&(&self.kinetic * &v))
    }

    pub fn value(&self, q1: &[f64], q2: &[f64]) -> f64 {
        self.eta(q1, q2) + self.kinetic_energy(q2)
    }

    /// Worst relative disagreement of `eta_d1`, `eta_d2` with central differences of `eta`.
    pub fn derivative_discrepancy(&self, q1: &[f64], q2: &[f64]) -> f64 {
        let d1 = numdiff::central_gradient(&|p: &[f64]| self.eta(p, q2), q1, 1e-6);
        let d2 = numdiff::central_gradient(&|p: &[f64]| self.eta(q1, p), q2, 1e-6);
        numdiff::relative_discrepancy(&self.eta_d1(q1, q2), &d1)
            .max(numdiff::relative_discrepancy(&self.eta_d2(q1, q2), &d2))
    }
}

/// Weight factor in front of `sum eta dt` in the path weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WLogDerivativeMode {
    /// Factor `i`, the oscillatory weight.
    RealTime,
    /// Factor `1`, the Wick-rotated (Feynman-Kac) weight.
    Euclidean,
}

impl WLogDerivativeMode {
    pub fn factor(self) -> Complex64 {
        match self {
            Self::RealTime => Complex64::i(),
            Self::Euclidean => Complex64::new(1.0, 0.0),
        }
    }
}

/// Summands of the log-derivative of the weighted path measure along a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WFieldLogDerivative {
    /// Weight factor times the `eta` part of the action variation along `h(psi)`.
    pub eta_term: Complex64,
    /// `tr h'(psi)`; depends only on the field.
    pub trace_term: f64,
    pub total: Complex64,
}

/// The discrete action of a Lagrangian on paths started at `q_offset`.
#[derive(Debug, Clone)]
pub struct DiscreteAction {
    lagrangian: Lagrangian,
    lattice: TimeLattice,
    q_offset: Vec<f64>,
}

impl DiscreteAction {
    pub fn new(lagrangian: Lagrangian, lattice: TimeLattice, q_offset: Vec<f64>) -> Result<Self> {
        check_dim(lattice.dim_q(), lagrangian.dim_q())?;
        check_dim(lattice.dim_q(), q_offset.len())?;
        Ok(Self {
            lagrangian,
            lattice,
            q_offset,
        })
    }

    pub fn lagrangian(&self) -> &Lagrangian {
        &self.lagrangian
    }

    pub fn lattice(&self) -> &TimeLattice {
        &self.lattice
    }

    pub fn q_offset(&self) -> &[f64] {
        &self.q_offset
    }

    fn check_path(&self, p: &Path) -> Result<()> {
        if p.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(())
    }

    /// Calls `f(j, position, velocity, previous)` for each interval `j`, where
    /// `position = psi_{j-1} + q` and `previous = psi_{j-1}` (zero for `j = 0`).
    fn for_each_interval(&self, psi: &[f64], mut f: impl FnMut(usize, &[f64], &[f64])) {
        let d = self.lattice.dim_q();
        let dt = self.lattice.dt();
        let mut pos = vec![0.0; d];
        let mut vel = vec![0.0; d];
        for j in 0..self.lattice.n_steps() {
            for c in 0..d {
                let prev = if j == 0 { 0.0 } else { psi[(j - 1) * d + c] };
                pos[c] = prev + self.q_offset[c];
                vel[c] = (psi[j * d + c] - prev) / dt;
            }
            f(j, &pos, &vel);
        }
    }

    /// `sum_j eta(psi_{j-1} + q, v_j) dt` on raw path coordinates.
    pub fn eta_sum(&self, psi: &[f64]) -> f64 {
        let dt = self.lattice.dt();
        let mut acc = 0.0;
        self.for_each_interval(psi, |_, pos, vel| acc += self.lagrangian.eta(pos, vel) * dt);
        acc
    }

    pub fn action_value(&self, psi: &Path) -> Result<f64> {
        self.check_path(psi)?;
        let dt = self.lattice.dt();
        let mut acc = 0.0;
        self.for_each_interval(psi.values(), |_, pos, vel| {
            acc += self.lagrangian.value(pos, vel) * dt
        });
        Ok(acc)
    }

    /// Variation of the action (`with_kinetic = true`) or of its `eta` part alone.
    fn variation(&self, psi: &[f64], k: &[f64], with_kinetic: bool) -> f64 {
        let d = self.lattice.dim_q();
        let dt = self.lattice.dt();
        let mut acc = 0.0;
        self.for_each_interval(psi, |j, pos, vel| {
            let d1 = self.lagrangian.eta_d1(pos, vel);
            let mut d2 = self.lagrangian.eta_d2(pos, vel);
            if with_kinetic {
                let bv = &self.lagrangian.kinetic * DVector::from_column_slice(vel);
                d2.iter_mut().zip(bv.iter()).for_each(|(a, b)| *a += b);
            }
            for c in 0..d {
                let k_prev = if j == 0 { 0.0 } else { k[(j - 1) * d + c] };
                let k_dot = (k[j * d + c] - k_prev) / dt;
                acc += (d1[c] * k_prev + d2[c] * k_dot) * dt;
            }
        });
        acc
    }

    /// Directional derivative of [`Self::action_value`] at `psi` along `k`.
    pub fn action_first_variation(&self, psi: &Path, k: &Path) -> Result<f64> {
        self.check_path(psi)?;
        self.check_path(k)?;
        Ok(self.variation(psi.values(), k.values(), true))
    }

    /// Directional derivative of `sum eta dt` only.
    pub fn eta_variation(&self, psi: &Path, k: &Path) -> Result<f64> {
        self.check_path(psi)?;
        self.check_path(k)?;
        Ok(self.variation(psi.values(), k.values(), false))
    }

    /// `factor(mode) * eta_variation(psi, k)`. The kinetic part belongs to the
    /// Gaussian path measure and is not included.
    pub fn w_log_derivative_vector(
        &self,
        mode: WLogDerivativeMode,
        k: &Path,
        psi: &Path,
    ) -> Result<Complex64> {
        Ok(mode.factor() * self.eta_variation(psi, k)?)
    }

    /// `factor(mode) * eta_variation(psi, h(psi)) + tr h'(psi)`.
    pub fn w_log_derivative_field(
        &self,
        mode: WLogDerivativeMode,
        h: &VectorField,
        psi: &Path,
    ) -> Result<WFieldLogDerivative> {
        self.check_path(psi)?;
        check_dim(self.lattice.state_dim(), h.dim())?;
        let k = h.eval(psi.values());
        check_dim(self.lattice.state_dim(), k.len())?;
        let eta_term = mode.factor() * self.variation(psi.values(), &k, false);
        let trace_term = h.jacobian_trace(psi.values())?;
        Ok(WFieldLogDerivative {
            eta_term,
            trace_term,
            total: eta_term + trace_term,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{generator, TransformationFamily, DEFAULT_FD_STEP};

    fn linear_path(lattice: TimeLattice, v: f64) -> Path {
        Path::from_fn(lattice, |t| vec![v * t]).unwrap()
    }

    #[test]
    fn free_action_of_linear_path() {
        for n in [1, 3, 16] {
            let lat = TimeLattice::new(n, 2.0, 1).unwrap();
            let a = DiscreteAction::new(Lagrangian::free(1), lat, vec![0.0]).unwrap();
            let value = a.action_value(&linear_path(lat, 1.5)).unwrap();
            assert!((value - 0.5 * 1.5 * 1.5 * 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_path_free_action_is_zero() {
        let lat = TimeLattice::new(4, 1.0, 2).unwrap();
        let a = DiscreteAction::new(Lagrangian::free(2), lat, vec![0.0, 0.0]).unwrap();
        assert_eq!(a.action_value(&Path::zeros(lat)).unwrap(), 0.0);
    }

    #[test]
    fn harmonic_two_step_hand_sum() {
        // nodes 0, 0.5, 1 with left positions 0 and 0.5:
        // kinetic 2 * 0.5 * 0.5 = 0.5, potential -(0 + 0.125) * 0.5 = -0.0625
        let lat = TimeLattice::new(2, 1.0, 1).unwrap();
        let a = DiscreteAction::new(Lagrangian::harmonic(1, 1.0), lat, vec![0.0]).unwrap();
        let value = a.action_value(&linear_path(lat, 1.0)).unwrap();
        assert!((value - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn w_log_derivative_hand_sum_and_factors() {
        let lat = TimeLattice::new(2, 1.0, 1).unwrap();
        let a = DiscreteAction::new(Lagrangian::harmonic(1, 1.0), lat, vec![0.0]).unwrap();
        let psi = linear_path(lat, 1.0);
        let k = Path::new(lat, vec![1.0, 1.0]).unwrap();
        // eta_d1 at left nodes (0, 0.5) is (0, -0.5); k at left nodes is (0, 1)
        let want = -0.5 * 1.0 * 0.5;
        let e = a.w_log_derivative_vector(WLogDerivativeMode::Euclidean, &k, &psi).unwrap();
        let r = a.w_log_derivative_vector(WLogDerivativeMode::RealTime, &k, &psi).unwrap();
        assert_eq!(e, Complex64::new(want, 0.0));
        assert_eq!(r, Complex64::new(0.0, want));
    }

    #[test]
    fn free_particle_eta_term_vanishes() {
        let lat = TimeLattice::new(5, 1.0, 2).unwrap();
        let a = DiscreteAction::new(Lagrangian::free(2), lat, vec![0.3, -0.1]).unwrap();
        let psi = Path::new(lat, (0..10).map(|i| (i as f64).sin()).collect()).unwrap();
        let h = VectorField::linear(DMatrix::identity(10, 10));
        let w = a.w_log_derivative_field(WLogDerivativeMode::Euclidean, &h, &psi).unwrap();
        assert_eq!(w.eta_term, Complex64::new(0.0, 0.0));
        assert_eq!(w.trace_term, 10.0);
    }

    #[test]
    fn kinetic_part_of_variation_is_the_cameron_martin_pairing() {
        let lat = TimeLattice::new(6, 1.5, 1).unwrap();
        let a = DiscreteAction::new(Lagrangian::free(1), lat, vec![0.0]).unwrap();
        let psi = Path::new(lat, vec![0.1, 0.4, -0.2, 0.3, 0.9, 1.0]).unwrap();
        let k = Path::new(lat, vec![1.0, -1.0, 0.5, 0.0, 2.0, 0.3]).unwrap();
        let var = a.action_first_variation(&psi, &k).unwrap();
        assert!((var - psi.cm_inner(&k).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn variation_matches_difference_quotient_with_velocity_coupling() {
        let lat = TimeLattice::new(16, 1.0, 2).unwrap();
        let l = Lagrangian::new(
            2,
            "coupled",
            |q, v| q[0] * v[1] - q[1] * v[0] - 0.3 * q[0].powi(4) + 0.1 * v[0] * v[0] * q[1],
            |q, v| vec![v[1] - 1.2 * q[0].powi(3), -v[0] + 0.1 * v[0] * v[0]],
            |q, v| vec![-q[1] + 0.2 * v[0] * q[1], q[0]],
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        assert!(l.derivative_discrepancy(&[0.4, -0.7], &[1.1, 0.2]) < 1e-7);
        let a = DiscreteAction::new(l, lat, vec![0.2, 0.1]).unwrap();
        let psi_v: Vec<f64> = (0..32).map(|i| (0.37 * i as f64).sin()).collect();
        let k_v: Vec<f64> = (0..32).map(|i| (0.11 * i as f64).cos()).collect();
        let psi = Path::new(lat, psi_v.clone()).unwrap();
        let k = Path::new(lat, k_v.clone()).unwrap();
        let eps = 1e-5;
        let shift = |s: f64| {
            let v: Vec<f64> = psi_v.iter().zip(&k_v).map(|(p, q)| p + s * q).collect();
            a.action_value(&Path::new(lat, v).unwrap()).unwrap()
        };
        let fd = (shift(eps) - shift(-eps)) / (2.0 * eps);
        let var = a.action_first_variation(&psi, &k).unwrap();
        assert!((var - fd).abs() <= 1e-8 * (1.0 + var.abs()), "{var} vs {fd}");
    }

    #[test]
    fn rotation_is_a_symmetry_without_trace() {
        let lat = TimeLattice::new(8, 1.0, 2).unwrap();
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let fam = TransformationFamily::pointwise_linear(&lat, &skew, "rotation").unwrap();
        let h = generator(&fam, DEFAULT_FD_STEP);
        let psi = Path::new(lat, (0..16).map(|i| (1.3 * i as f64).cos()).collect()).unwrap();
        for l in [Lagrangian::harmonic(2, 1.0), Lagrangian::quartic(2, 0.5)] {
            let a = DiscreteAction::new(l, lat, vec![0.0, 0.0]).unwrap();
            let w = a.w_log_derivative_field(WLogDerivativeMode::Euclidean, &h, &psi).unwrap();
            assert!(w.eta_term.norm() < 1e-10, "{:?}", w.eta_term);
            assert!(w.trace_term.abs() < 1e-9);
        }
    }

    #[test]
    fn trace_term_does_not_see_the_lagrangian() {
        let lat = TimeLattice::new(4, 1.0, 1).unwrap();
        let h = generator(&TransformationFamily::scaling(4, -1.0), DEFAULT_FD_STEP);
        let psi = Path::new(lat, vec![0.2, -0.5, 0.7, 1.0]).unwrap();
        let traces: Vec<f64> = [Lagrangian::free(1), Lagrangian::harmonic(1, 2.0)]
            .into_iter()
            .map(|l| {
                let a = DiscreteAction::new(l, lat, vec![0.0]).unwrap();
                a.w_log_derivative_field(WLogDerivativeMode::RealTime, &h, &psi)
                    .unwrap()
                    .trace_term
            })
            .collect();
        assert_eq!(traces[0].to_bits(), traces[1].to_bits());
        assert!((traces[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_foreign_lattice_and_bad_kinetic_matrix() {
        let lat = TimeLattice::new(2, 1.0, 1).unwrap();
        let other = TimeLattice::new(3, 1.0, 1).unwrap();
        let a = DiscreteAction::new(Lagrangian::free(1), lat, vec![0.0]).unwrap();
        assert_eq!(a.action_value(&Path::zeros(other)), Err(Error::LatticeMismatch));
        let bad = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(Lagrangian::free(1).with_kinetic(bad).is_err());
    }
}
