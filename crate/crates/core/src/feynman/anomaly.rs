//! Separation of the log-derivative of the weighted path measure along a
//! transformation family into an action part and a Jacobian-trace part.
//!
//! For each Lagrangian and sampled path the report lists the action variation
//! along the generator (zero when the Lagrangian is invariant) and `tr h'`
//! (which never looks at the Lagrangian). The log-determinant of the family is
//! checked against the integrated trace, and the density ODE shows that the
//! weighted measure moves even when the action does not.

use num_complex::Complex64;

use super::path_integral::euclidean_weight_measure;
use crate::action::{DiscreteAction, Lagrangian, WLogDerivativeMode};
use crate::error::{check_dim, Error, Result};
use crate::flows::{
    generator, jacobian_log_det, pushforward_density_ratio, solve_density_ode,
    trace_integral_along_flow, TransformationFamily, DEFAULT_FD_STEP,
};
use crate::lattice::{Path, TimeLattice};
use crate::measures::GaussianMeasure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyTolerances {
    /// Action variations below this count as zero.
    pub eta: f64,
    /// Traces below this count as zero.
    pub trace: f64,
    /// Bound on `|log det + int tr h'|`.
    pub duality: f64,
    /// Bound on the density ODE against the change-of-variables ratio.
    pub density: f64,
}

impl Default for AnomalyTolerances {
    fn default() -> Self {
        Self {
            eta: 1e-8,
            trace: 1e-8,
            duality: 1e-6,
            density: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnomalySetup {
    pub family: TransformationFamily,
    pub lagrangians: Vec<Lagrangian>,
    pub lattice: TimeLattice,
    pub q_offset: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    /// Parameters at which the log-determinant is compared with the trace integral.
    pub alphas: Vec<f64>,
    /// Steps of the trace quadrature and of the density ODE.
    pub ode_grid: usize,
    pub mode: WLogDerivativeMode,
    pub tolerances: AnomalyTolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryClass {
    /// Action variation and trace both vanish: the weighted measure is invariant.
    Invariant,
    /// Action variation vanishes but the trace does not.
    Anomalous,
    /// The action itself is not invariant.
    Broken,
}

impl SymmetryClass {
    pub fn name(self) -> &'static str {
        match self {
            Self::Invariant => "invariant",
            Self::Anomalous => "anomalous",
            Self::Broken => "broken",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "invariant" => Some(Self::Invariant),
            "anomalous" => Some(Self::Anomalous),
            "broken" => Some(Self::Broken),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationRow {
    pub lagrangian: String,
    pub path: usize,
    /// Mode factor times the action variation along `h(psi)`.
    pub eta_term: Complex64,
    /// `tr h'(psi)` from the generator used for the report.
    pub trace_term: f64,
    /// `tr h'(psi)` from the differenced generator, as a cross-check.
    pub trace_term_fd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterminantRow {
    pub path: usize,
    pub alpha: f64,
    pub log_det: f64,
    pub trace_integral: f64,
    /// `log_det + trace_integral`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSummary {
    pub lagrangian: String,
    pub max_abs_eta: f64,
    pub min_abs_trace: f64,
    pub max_abs_trace: f64,
    pub class: SymmetryClass,
}

/// Density of the pushed-forward weighted measure at the end of the family's
/// parameter range, by the ODE and by change of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCheck {
    pub lagrangian: String,
    pub alpha: f64,
    pub ode_value: f64,
    pub closed_form: f64,
    pub discrepancy: f64,
    /// `|g(alpha) - 1|`; nonzero means the weighted measure is not invariant.
    pub deviation_from_one: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub generator_source: &'static str,
    pub variations: Vec<VariationRow>,
    pub determinants: Vec<DeterminantRow>,
    pub summaries: Vec<LagrangianSummary>,
    pub densities: Vec<DensityCheck>,
    /// Trace columns agree bit for bit across Lagrangians.
    pub traces_identical: bool,
    pub max_duality_residual: f64,
    pub max_density_discrepancy: f64,
}

fn classify(max_eta: f64, max_trace: f64, tol: &AnomalyTolerances) -> SymmetryClass {
    if max_eta > tol.eta {
        SymmetryClass::Broken
    } else if max_trace > tol.trace {
        SymmetryClass::Anomalous
    } else {
        SymmetryClass::Invariant
    }
}

pub fn anomaly_experiment(setup: &AnomalySetup) -> Result<AnomalyReport> {
    let lattice = &setup.lattice;
    check_dim(lattice.state_dim(), setup.family.dim())?;
    if setup.lagrangians.len() < 2 {
        return Err(Error::InvalidArgument(
            "the experiment compares at least two Lagrangians".into(),
        ));
    }
    if setup.n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
    }
    let fd_generator = generator(&setup.family, DEFAULT_FD_STEP);
    let (h, generator_source) = match setup.family.analytic_generator() {
        Some(h) => (h.clone(), "analytic"),
        None => (fd_generator.clone(), "finite-difference"),
    };
    let wiener = GaussianMeasure::wiener(lattice);
    let paths = wiener
        .sample(setup.n_paths, setup.seed)?
        .into_iter()
        .map(|v| Path::new(*lattice, v))
        .collect::<Result<Vec<_>>>()?;

    let mut variations = Vec::new();
    let mut summaries = Vec::new();
    let mut trace_columns: Vec<Vec<u64>> = Vec::new();
    for lagrangian in &setup.lagrangians {
        let action = DiscreteAction::new(lagrangian.clone(), *lattice, setup.q_offset.clone())?;
        let mut column = Vec::with_capacity(paths.len());
        let (mut max_eta, mut min_tr, mut max_tr) = (0.0f64, f64::INFINITY, 0.0f64);
        for (i, psi) in paths.iter().enumerate() {
            let w = action.w_log_derivative_field(setup.mode, &h, psi)?;
            let trace_term_fd = fd_generator.jacobian_trace(psi.values())?;
            max_eta = max_eta.max(w.eta_term.norm());
            min_tr = min_tr.min(w.trace_term.abs());
            max_tr = max_tr.max(w.trace_term.abs());
            column.push(w.trace_term.to_bits());
            variations.push(VariationRow {
                lagrangian: lagrangian.label().to_string(),
                path: i,
                eta_term: w.eta_term,
                trace_term: w.trace_term,
                trace_term_fd,
            });
        }
        trace_columns.push(column);
        summaries.push(LagrangianSummary {
            lagrangian: lagrangian.label().to_string(),
            max_abs_eta: max_eta,
            min_abs_trace: min_tr,
            max_abs_trace: max_tr,
            class: classify(max_eta, max_tr, &setup.tolerances),
        });
    }
    let traces_identical = trace_columns.windows(2).all(|w| w[0] == w[1]);

    let mut determinants = Vec::new();
    let mut max_duality_residual = 0.0f64;
    for (i, psi) in paths.iter().enumerate() {
        for &alpha in &setup.alphas {
            let log_det = jacobian_log_det(&setup.family, alpha, psi.values())?;
            let trace_integral =
                trace_integral_along_flow(&setup.family, alpha, psi.values(), setup.ode_grid)?;
            let residual = log_det + trace_integral;
            max_duality_residual = max_duality_residual.max(residual.abs());
            determinants.push(DeterminantRow {
                path: i,
                alpha,
                log_det,
                trace_integral,
                residual,
            });
        }
    }

    let alpha_max = setup.alphas.iter().cloned().fold(0.0f64, |a, b| {
        if b.abs() > a.abs() {
            b
        } else {
            a
        }
    });
    let mut densities = Vec::new();
    let mut max_density_discrepancy = 0.0f64;
    if alpha_max != 0.0 {
        let probe = paths[0].values();
        for lagrangian in &setup.lagrangians {
            if setup.mode != WLogDerivativeMode::Euclidean
                || lagrangian.quadratic_potential().is_none()
            {
                continue;
            }
            let measure = euclidean_weight_measure(lagrangian, lattice, &setup.q_offset)?;
            let curve = solve_density_ode(&measure, &setup.family, alpha_max, setup.ode_grid, probe)?;
            let ode_value = *curve.values.last().expect("grid is non-empty");
            let closed_form = pushforward_density_ratio(&measure, &setup.family, alpha_max, probe)?;
            let discrepancy = (ode_value - closed_form).abs() / closed_form.abs().max(1.0);
            max_density_discrepancy = max_density_discrepancy.max(discrepancy);
            densities.push(DensityCheck {
                lagrangian: lagrangian.label().to_string(),
                alpha: alpha_max,
                ode_value,
                closed_form,
                discrepancy,
                deviation_from_one: (ode_value - 1.0).abs(),
            });
        }
    }

    Ok(AnomalyReport {
        generator_source,
        variations,
        determinants,
        summaries,
        densities,
        traces_identical,
        max_duality_residual,
        max_density_discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn scaling_is_anomalous_for_the_free_particle() {
        let lattice = TimeLattice::new(8, 1.0, 1).unwrap();
        let setup = AnomalySetup {
            family: TransformationFamily::scaling(8, -1.0),
            lagrangians: vec![Lagrangian::free(1), Lagrangian::harmonic(1, 1.0)],
            lattice,
            q_offset: vec![0.0],
            n_paths: 4,
            seed: 3,
            alphas: vec![0.1, 0.25],
            ode_grid: 32,
            mode: WLogDerivativeMode::Euclidean,
            tolerances: AnomalyTolerances::default(),
        };
        let r = anomaly_experiment(&setup).unwrap();
        assert!(r.traces_identical);
        assert!(r.variations.iter().all(|v| v.trace_term == 8.0));
        assert_eq!(r.summaries[0].class, SymmetryClass::Anomalous);
        assert_eq!(r.summaries[1].class, SymmetryClass::Broken);
        assert!(r.max_duality_residual < 1e-6);
        assert!(r.max_density_discrepancy < 1e-6);
        assert!(r.densities.iter().all(|d| d.deviation_from_one > 1e-3));
    }

    #[test]
    fn rotation_is_a_true_symmetry() {
        let lattice = TimeLattice::new(6, 1.0, 2).unwrap();
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let setup = AnomalySetup {
            family: TransformationFamily::pointwise_linear(&lattice, &skew, "rotation").unwrap(),
            lagrangians: vec![Lagrangian::free(2), Lagrangian::harmonic(2, 1.0)],
            lattice,
            q_offset: vec![0.0, 0.0],
            n_paths: 3,
            seed: 5,
            alphas: vec![0.25],
            ode_grid: 16,
            mode: WLogDerivativeMode::Euclidean,
            tolerances: AnomalyTolerances::default(),
        };
        let r = anomaly_experiment(&setup).unwrap();
        assert!(r.summaries.iter().all(|s| s.class == SymmetryClass::Invariant));
        assert!(r.densities.iter().all(|d| d.deviation_from_one < 1e-8));
    }
}
