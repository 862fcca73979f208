//! Euclidean path integrals on a time lattice: Monte Carlo over Brownian paths
//! and the exact Gaussian integral for quadratic `eta`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{InitialCondition, PropagatorMethod, PropagatorResult, SchrodingerProblem};
use crate::action::{DiscreteAction, Lagrangian, QuadraticPotential, WLogDerivativeMode};
use crate::error::{check_dim, Error, Result};
use crate::lattice::TimeLattice;
use crate::measures::GaussianMeasure;
use crate::quadrature::{self, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub value: Complex64,
    /// `sqrt(se_re^2 + se_im^2)`; zero for deterministic rules.
    pub std_error: f64,
    pub n_evaluations: usize,
}

/// Euclidean `E[exp(sum_j eta(psi_{j-1} + q) dt) f0(psi_{n-1} + q)]` over
/// Brownian paths with covariance `B^{-1}`.
pub fn feynman_mc(
    p: &SchrodingerProblem,
    q_point: &[f64],
    lattice: &TimeLattice,
    mc: &QuadratureSpec,
) -> Result<ComplexEstimate> {
    check_dim(p.dim_q(), q_point.len())?;
    check_time(p, lattice)?;
    let measure = GaussianMeasure::kinetic_wiener(lattice, p.lagrangian.kinetic_matrix())?;
    let action = DiscreteAction::new(p.lagrangian.clone(), *lattice, q_point.to_vec())?;
    let d = lattice.dim_q();
    let end = (lattice.n_steps() - 1) * d;
    let est = quadrature::integrate_many(&measure, mc, 2, |psi, out| {
        let y: Vec<f64> = psi[end..].iter().zip(q_point).map(|(a, b)| a + b).collect();
        let v = p.f0.eval(&y) * action.eta_sum(psi).exp();
        out[0] = v.re;
        out[1] = v.im;
    })?;
    Ok(ComplexEstimate {
        value: Complex64::new(est[0].value, est[1].value),
        std_error: est[0].std_error_or_zero().hypot(est[1].std_error_or_zero()),
        n_evaluations: est[0].n_evaluations,
    })
}

/// [`feynman_mc`] at several points; every point reuses the same random stream.
pub fn feynman_mc_points(
    p: &SchrodingerProblem,
    points: &[Vec<f64>],
    lattice: &TimeLattice,
    mc: &QuadratureSpec,
) -> Result<PropagatorResult> {
    let start = Instant::now();
    let estimates = points
        .iter()
        .map(|q| feynman_mc(p, q, lattice, mc))
        .collect::<Result<Vec<_>>>()?;
    Ok(PropagatorResult {
        points: points.to_vec(),
        values: estimates.iter().map(|e| e.value).collect(),
        method: PropagatorMethod::McEuclidean,
        mode: WLogDerivativeMode::Euclidean,
        error_estimate: estimates.iter().map(|e| e.std_error).fold(0.0, f64::max),
        wall_time: start.elapsed().as_secs_f64(),
        seed: mc.is_stochastic().then_some(mc.seed),
        boundary_mass: None,
        warnings: Vec::new(),
    })
}

fn check_time(p: &SchrodingerProblem, lattice: &TimeLattice) -> Result<()> {
    check_dim(p.dim_q(), lattice.dim_q())?;
    if (lattice.t_final() - p.t_final).abs() > 1e-12 * p.t_final {
        return Err(Error::InvalidArgument(format!(
            "lattice covers t = {} but the problem asks for t = {}",
            lattice.t_final(),
            p.t_final
        )));
    }
    Ok(())
}

fn quadratic_part(lagrangian: &Lagrangian) -> Result<&QuadraticPotential> {
    lagrangian.quadratic_potential().ok_or_else(|| {
        Error::Unsupported(format!(
            "exact Gaussian evaluation needs a quadratic eta, got {}",
            lagrangian.label()
        ))
    })
}

/// Precision of `exp(sum_j eta dt) phi_t(dpsi)` in path coordinates:
/// the kinetic Gram matrix minus `dt H` on every node that enters `eta`.
fn weighted_precision(lattice: &TimeLattice, lagrangian: &Lagrangian) -> Result<DMatrix<f64>> {
    let pot = quadratic_part(lagrangian)?;
    let d = lattice.dim_q();
    let mut a = lattice.kinetic_gram(lagrangian.kinetic_matrix())?;
    for j in 0..lattice.n_steps() - 1 {
        let mut block = a.view_mut((j * d, j * d), (d, d));
        block -= &pot.hessian * lattice.dt();
    }
    Ok(a)
}

/// Linear coefficient `dt (H q + g)` on the nodes that enter `eta`.
fn weighted_linear(lattice: &TimeLattice, pot: &QuadraticPotential, q: &[f64]) -> DVector<f64> {
    let d = lattice.dim_q();
    let slope = (&pot.hessian * DVector::from_column_slice(q) + &pot.linear) * lattice.dt();
    let mut b = DVector::zeros(lattice.state_dim());
    for j in 0..lattice.n_steps() - 1 {
        b.rows_mut(j * d, d).copy_from(&slope);
    }
    b
}

/// The Euclidean weighted path measure for a quadratic `eta`, normalized to a
/// probability measure.
pub fn euclidean_weight_measure(
    lagrangian: &Lagrangian,
    lattice: &TimeLattice,
    q_offset: &[f64],
) -> Result<GaussianMeasure> {
    check_dim(lattice.dim_q(), q_offset.len())?;
    let a = weighted_precision(lattice, lagrangian)?;
    let b = weighted_linear(lattice, quadratic_part(lagrangian)?, q_offset);
    let chol = a.clone().cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite("weighted path precision (time step too large?)".into())
    })?;
    GaussianMeasure::new(chol.solve(&b), a)
}

fn log_det_spd(m: &DMatrix<f64>, what: &str) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((log_det, chol))
}

/// Gaussian integral of `exp(-1/2 psi^T A psi + b(q)^T psi + c(q)) poly(psi_end + q)`
/// against the normalized lattice Brownian measure, with `A` fixed across `q`.
struct ExactGaussian {
    lattice: TimeLattice,
    potential: QuadraticPotential,
    center: Vec<f64>,
    f0_precision: DMatrix<f64>,
    polynomial: crate::poly::Polynomial,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    half_log_det_ratio: f64,
    end_covariance: DMatrix<f64>,
}

impl ExactGaussian {
    fn new(p: &SchrodingerProblem, lattice: &TimeLattice) -> Result<Self> {
        check_time(p, lattice)?;
        let InitialCondition::GaussianPolynomial {
            center,
            precision,
            polynomial,
        } = &p.f0
        else {
            return Err(Error::Unsupported(
                "exact Gaussian evaluation needs a Gaussian-times-polynomial f0".into(),
            ));
        };
        let d = lattice.dim_q();
        let n = lattice.n_steps();
        let (log_det_kinetic, _) = log_det_spd(
            &lattice.kinetic_gram(p.lagrangian.kinetic_matrix())?,
            "kinetic Gram matrix",
        )?;
        let mut a = weighted_precision(lattice, &p.lagrangian)?;
        {
            let mut block = a.view_mut(((n - 1) * d, (n - 1) * d), (d, d));
            block += precision;
        }
        let (log_det_a, chol) = log_det_spd(&a, "path-integral precision (time step too large?)")?;
        let mut selector = DMatrix::zeros(n * d, d);
        for c in 0..d {
            selector[((n - 1) * d + c, c)] = 1.0;
        }
        let solved = chol.solve(&selector);
        let end_covariance = solved.rows((n - 1) * d, d).into_owned();
        Ok(Self {
            lattice: *lattice,
            potential: quadratic_part(&p.lagrangian)?.clone(),
            center: center.clone(),
            f0_precision: precision.clone(),
            polynomial: polynomial.clone(),
            chol,
            half_log_det_ratio: 0.5 * (log_det_kinetic - log_det_a),
            end_covariance,
        })
    }

    fn value(&self, q: &[f64]) -> Result<Complex64> {
        let d = self.lattice.dim_q();
        let n = self.lattice.n_steps();
        let mut b = weighted_linear(&self.lattice, &self.potential, q);
        let shift =
            DVector::from_iterator(d, q.iter().zip(&self.center).map(|(a, c)| a - c));
        let pull = -(&self.f0_precision * &shift);
        b.rows_mut((n - 1) * d, d).copy_from(&pull);
        let c = n as f64 * self.lattice.dt() * self.potential.eval(q)
            - 0.5 * shift.dot(&(&self.f0_precision * &shift));
        let mean = self.chol.solve(&b);
        let exponent = c + 0.5 * b.dot(&mean);
        let end_mean =
            DVector::from_iterator(d, (0..d).map(|k| mean[(n - 1) * d + k] + q[k]));
        let order = (self.polynomial.degree() as usize / 2 + 1).max(1);
        let poly_mean = if self.polynomial.degree() == 0 {
            self.polynomial.eval(end_mean.as_slice())
        } else {
            let law = GaussianMeasure::from_covariance(end_mean, self.end_covariance.clone())?;
            quadrature::integrate(&law, &QuadratureSpec::gauss_hermite(order), |y| {
                self.polynomial.eval(y)
            })?
            .value
        };
        Ok(Complex64::new(
            (self.half_log_det_ratio + exponent).exp() * poly_mean,
            0.0,
        ))
    }
}

/// Euclidean lattice path integral for quadratic `eta` and Gaussian-times-polynomial
/// `f0`, evaluated in closed form (no sampling error).
pub fn exact_gaussian_propagator(
    p: &SchrodingerProblem,
    q_point: &[f64],
    lattice: &TimeLattice,
) -> Result<Complex64> {
    check_dim(p.dim_q(), q_point.len())?;
    ExactGaussian::new(p, lattice)?.value(q_point)
}

/// [`exact_gaussian_propagator`] at several points sharing one factorization.
pub fn exact_gaussian_points(
    p: &SchrodingerProblem,
    points: &[Vec<f64>],
    lattice: &TimeLattice,
) -> Result<PropagatorResult> {
    let start = Instant::now();
    let exact = ExactGaussian::new(p, lattice)?;
    let values = points
        .iter()
        .map(|q| {
            check_dim(p.dim_q(), q.len())?;
            exact.value(q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropagatorResult {
        points: points.to_vec(),
        values,
        method: PropagatorMethod::ExactGaussian,
        mode: WLogDerivativeMode::Euclidean,
        error_estimate: 0.0,
        wall_time: start.elapsed().as_secs_f64(),
        seed: None,
        boundary_mass: None,
        warnings: Vec::new(),
    })
}
