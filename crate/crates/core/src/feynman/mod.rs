//! Propagators for `i u_t = (-1/2 div B^{-1} grad - eta) u` and its Wick-rotated
//! heat form, computed by a PDE solver, by path integrals on a [`TimeLattice`]
//! (Monte Carlo and exact Gaussian), and by direct oscillatory quadrature.
//!
//! Path integrals follow the time-sliced representation
//!
//! ```text
//! u(t, q) = E[ exp(c * sum_j eta(psi_{j-1} + q) dt) f0(psi_{n-1} + q) ]
//! ```
//!
//! where `psi` is Brownian motion with covariance `B^{-1}` sampled on the
//! lattice, and `c` is the mode factor of [`WLogDerivativeMode`].

mod anomaly;
mod oscillatory;
mod path_integral;
mod pde;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::action::{Lagrangian, WLogDerivativeMode};
use crate::error::{check_dim, Error, Result};
use crate::poly::Polynomial;

pub use anomaly::{
    anomaly_experiment, AnomalyReport, AnomalySetup, AnomalyTolerances, DensityCheck,
    DeterminantRow, LagrangianSummary, SymmetryClass, VariationRow,
};
pub use oscillatory::{
    fresnel_free_particle, oscillatory_check, OscillatoryValue, MAX_OSCILLATORY_STEPS,
};
pub use path_integral::{
    euclidean_weight_measure, exact_gaussian_points, exact_gaussian_propagator, feynman_mc,
    feynman_mc_points, ComplexEstimate,
};
pub use pde::{pde_solve, BOUNDARY_MASS_WARNING};

/// Initial condition `f0` of the Cauchy problem.
#[derive(Clone)]
pub enum InitialCondition {
    /// `f0(q) = p(q) exp(-1/2 (q - c)^T L (q - c))` with `L` positive semidefinite.
    GaussianPolynomial {
        center: Vec<f64>,
        precision: DMatrix<f64>,
        polynomial: Polynomial,
    },
    Custom {
        label: String,
        eval: Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>,
    },
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GaussianPolynomial { center, .. } => {
                write!(f, "GaussianPolynomial(center {center:?})")
            }
            Self::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

impl InitialCondition {
    /// Unit-height bump `exp(-|q - c|^2 / (2 sigma^2))`.
    pub fn gaussian(center: Vec<f64>, sigma: f64) -> Self {
        let d = center.len();
        Self::GaussianPolynomial {
            center,
            precision: DMatrix::identity(d, d) / (sigma * sigma),
            polynomial: Polynomial::constant(d, 1.0),
        }
    }

    pub fn constant(dim_q: usize, value: f64) -> Self {
        Self::GaussianPolynomial {
            center: vec![0.0; dim_q],
            precision: DMatrix::zeros(dim_q, dim_q),
            polynomial: Polynomial::constant(dim_q, value),
        }
    }

    pub fn custom(
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self::Custom {
            label: label.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, q: &[f64]) -> Complex64 {
        match self {
            Self::GaussianPolynomial {
                center,
                precision,
                polynomial,
            } => {
                let r = DVector::from_iterator(q.len(), q.iter().zip(center).map(|(a, b)| a - b));
                let quad = r.dot(&(precision * &r));
                Complex64::new(polynomial.eval(q) * (-0.5 * quad).exp(), 0.0)
            }
            Self::Custom { eval, .. } => eval(q),
        }
    }
}

/// Cauchy problem for a Lagrangian's quantization. Only `eta(q, 0)` enters the
/// PDE, so velocity-dependent `eta` is outside its scope.
#[derive(Debug, Clone)]
pub struct SchrodingerProblem {
    pub lagrangian: Lagrangian,
    pub f0: InitialCondition,
    pub t_final: f64,
    pub label: String,
}

impl SchrodingerProblem {
    pub fn new(
        lagrangian: Lagrangian,
        f0: InitialCondition,
        t_final: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument("t_final must be positive".into()));
        }
        if let InitialCondition::GaussianPolynomial {
            center,
            precision,
            polynomial,
        } = &f0
        {
            let d = lagrangian.dim_q();
            check_dim(d, center.len())?;
            check_dim(d, precision.nrows())?;
            check_dim(d, polynomial.dim())?;
        }
        Ok(Self {
            lagrangian,
            f0,
            t_final,
            label: label.into(),
        })
    }

    pub fn dim_q(&self) -> usize {
        self.lagrangian.dim_q()
    }

    /// `eta(q, 0)`.
    pub fn potential_term(&self, q: &[f64]) -> f64 {
        self.lagrangian.eta(q, &vec![0.0; q.len()])
    }
}

/// Uniform tensor grid on `[-extent, extent]^dim_q`, first axis slowest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    dim_q: usize,
    extent: f64,
    n_points: usize,
}

impl SpaceGrid {
    pub fn new(dim_q: usize, extent: f64, n_points: usize) -> Result<Self> {
        if dim_q == 0 {
            return Err(Error::InvalidArgument("dim_q must be >= 1".into()));
        }
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "n_points must be odd and >= 3, got {n_points}"
            )));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidArgument("extent must be positive".into()));
        }
        Ok(Self {
            dim_q,
            extent,
            n_points,
        })
    }

    pub fn dim_q(&self) -> usize {
        self.dim_q
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.n_points - 1) as f64
    }

    pub fn axis(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n_points)
            .map(|i| -self.extent + i as f64 * h)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.n_points.pow(self.dim_q as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let axis = self.axis();
        (0..self.len())
            .map(|flat| {
                let mut rem = flat;
                let mut p = vec![0.0; self.dim_q];
                for c in (0..self.dim_q).rev() {
                    p[c] = axis[rem % self.n_points];
                    rem /= self.n_points;
                }
                p
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorMethod {
    Pde,
    McEuclidean,
    ExactGaussian,
    OscillatoryQuadrature,
}

impl PropagatorMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pde => "pde",
            Self::McEuclidean => "mc_euclidean",
            Self::ExactGaussian => "exact_gaussian",
            Self::OscillatoryQuadrature => "oscillatory_quadrature",
        }
    }
}

/// Propagator values at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorResult {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
    pub method: PropagatorMethod,
    pub mode: WLogDerivativeMode,
    /// Standard error (Monte Carlo), quadrature error bound, or 0 where none applies.
    pub error_estimate: f64,
    pub wall_time: f64,
    pub seed: Option<u64>,
    /// Fraction of `sum |u|` in the outer band of the box (PDE only).
    pub boundary_mass: Option<f64>,
    pub warnings: Vec<String>,
}

impl PropagatorResult {
    /// `||a - b||_2 / ||b||_2` over shared points.
    pub fn relative_l2_error(&self, reference: &PropagatorResult) -> Result<f64> {
        check_dim(reference.values.len(), self.values.len())?;
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in self.values.iter().zip(&reference.values) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
        Ok((num / den).sqrt())
    }

    /// Linear interpolation of a 1-D grid result at `q`.
    pub fn interpolate_1d(&self, q: f64) -> Result<Complex64> {
        if self.points.is_empty() || self.points[0].len() != 1 {
            return Err(Error::Unsupported("interpolation needs a 1-D grid".into()));
        }
        let xs: Vec<f64> = self.points.iter().map(|p| p[0]).collect();
        if q < xs[0] || q > xs[xs.len() - 1] {
            return Err(Error::InvalidArgument(format!("{q} outside the grid")));
        }
        let i = xs.partition_point(|&x| x <= q).clamp(1, xs.len() - 1);
        let w = (q - xs[i - 1]) / (xs[i] - xs[i - 1]);
        Ok(self.values[i - 1] * (1.0 - w) + self.values[i] * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = SpaceGrid::new(2, 1.0, 3).unwrap();
        assert_eq!(g.spacing(), 1.0);
        let pts = g.points();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1], vec![-1.0, 0.0]);
        assert_eq!(pts[3], vec![0.0, -1.0]);
        assert!(SpaceGrid::new(1, 1.0, 4).is_err());
        assert!(SpaceGrid::new(1, 0.0, 5).is_err());
    }

    #[test]
    fn initial_conditions() {
        let g = InitialCondition::gaussian(vec![1.0], 0.5);
        assert_eq!(g.eval(&[1.0]), Complex64::new(1.0, 0.0));
        assert!((g.eval(&[1.5]).re - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(InitialCondition::constant(2, 3.0).eval(&[4.0, -1.0]).re, 3.0);
    }

    #[test]
    fn problem_validation() {
        let f0 = InitialCondition::gaussian(vec![0.0, 0.0], 1.0);
        assert!(SchrodingerProblem::new(Lagrangian::free(1), f0.clone(), 1.0, "x").is_err());
        assert!(SchrodingerProblem::new(Lagrangian::free(2), f0, -1.0, "x").is_err());
    }
}
