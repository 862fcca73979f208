//! Experiment runners. Each one validates its parameters and builds every
//! engine object up front, returning a [`Plan`] that does the computation.

mod anomaly;
mod density;
mod ibp;
mod propagators;

use nalgebra::{DMatrix, DVector};

use logderiv::action::{Lagrangian, WLogDerivativeMode};
use logderiv::feynman::{InitialCondition, SchrodingerProblem};
use logderiv::flows::TransformationFamily;
use logderiv::lattice::TimeLattice;
use logderiv::measures::GaussianMeasure;
use logderiv::quadrature::{QuadratureSpec, MAX_GAUSS_HERMITE_DIM};

use crate::config::{
    ConfigError, ExperimentConfig, ExperimentKind, FamilyConfig, InitialConfig, LagrangianConfig,
    MeasureKind, ModeConfig, ProblemConfig, QuadratureConfig,
};
use crate::table::Table;

pub type Plan = Box<dyn FnOnce() -> logderiv::Result<Outcome>>;

/// A declared check with the number it was decided on.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub relation: &'static str,
    pub tolerance: f64,
}

impl Assertion {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            relation: "<=",
            tolerance,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= tolerance,
            value,
            relation: ">=",
            tolerance,
        }
    }

    /// Passes when no item failed; `value` is the failure count.
    pub fn no_failures(name: impl Into<String>, failures: usize) -> Self {
        Self {
            name: name.into(),
            passed: failures == 0,
            value: failures as f64,
            relation: "==",
            tolerance: 0.0,
        }
    }
}

pub struct Outcome {
    pub table: Table,
    pub assertions: Vec<Assertion>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

pub fn columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::IbpCheck => ibp::IBP_COLUMNS,
        ExperimentKind::Theorem1Check => ibp::THEOREM1_COLUMNS,
        ExperimentKind::Prop1Check => ibp::PROP1_COLUMNS,
        ExperimentKind::FlowDensity => density::COLUMNS,
        ExperimentKind::Solve => propagators::SOLVE_COLUMNS,
        ExperimentKind::Compare => propagators::COMPARE_COLUMNS,
        ExperimentKind::AnomalyScan => anomaly::COLUMNS,
        ExperimentKind::OscillatoryCheck => propagators::OSCILLATORY_COLUMNS,
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    match cfg.experiment {
        ExperimentKind::IbpCheck => ibp::prepare_ibp(cfg),
        ExperimentKind::Theorem1Check => ibp::prepare_theorem1(cfg),
        ExperimentKind::Prop1Check => ibp::prepare_prop1(cfg),
        ExperimentKind::FlowDensity => density::prepare(cfg),
        ExperimentKind::Solve => propagators::prepare_solve(cfg),
        ExperimentKind::Compare => propagators::prepare_compare(cfg),
        ExperimentKind::AnomalyScan => anomaly::prepare(cfg),
        ExperimentKind::OscillatoryCheck => propagators::prepare_oscillatory(cfg),
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn require(cond: bool, msg: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(invalid(msg))
    }
}

fn require_positive(name: &str, v: f64) -> Result<(), ConfigError> {
    require(v > 0.0 && v.is_finite(), format!("{name} must be positive"))
}

pub fn measure_name(kind: MeasureKind) -> &'static str {
    match kind {
        MeasureKind::Standard => "standard",
        MeasureKind::Wiener => "wiener",
        MeasureKind::ShiftedWiener => "shifted-wiener",
    }
}

fn build_measure(kind: MeasureKind, dim: usize) -> Result<GaussianMeasure, ConfigError> {
    require(dim >= 1, "dimensions must be >= 1")?;
    Ok(match kind {
        MeasureKind::Standard => GaussianMeasure::standard(dim),
        MeasureKind::Wiener => GaussianMeasure::wiener(&TimeLattice::new(dim, 1.0, 1)?),
        MeasureKind::ShiftedWiener => {
            let lattice = TimeLattice::new(dim, 1.0, 1)?;
            let mean = DVector::from_fn(dim, |i, _| 0.5 * ((i + 1) as f64).sin());
            GaussianMeasure::new(mean, lattice.cameron_martin_gram().gram)?
        }
    })
}

fn build_quadrature(
    q: &QuadratureConfig,
    max_dim: usize,
    seed: u64,
    workers: usize,
) -> Result<QuadratureSpec, ConfigError> {
    match *q {
        QuadratureConfig::GaussHermite { order } => {
            require(order >= 1, "Gauss-Hermite order must be >= 1")?;
            require(
                max_dim <= MAX_GAUSS_HERMITE_DIM,
                format!("Gauss-Hermite quadrature needs dim <= {MAX_GAUSS_HERMITE_DIM}"),
            )?;
            Ok(QuadratureSpec::gauss_hermite(order))
        }
        QuadratureConfig::MonteCarlo { n_samples } => {
            require(n_samples >= 2, "n_samples must be >= 2")?;
            Ok(QuadratureSpec::monte_carlo(n_samples, seed).with_workers(workers))
        }
    }
}

fn square_matrix(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>, ConfigError> {
    require(
        rows.len() == dim && rows.iter().all(|r| r.len() == dim),
        format!("matrix must be {dim}x{dim}"),
    )?;
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn plane(name: &str, dim: usize, i: usize, j: usize) -> Result<(), ConfigError> {
    require(
        i < dim && j < dim && i != j,
        format!("{name} needs distinct axes below {dim}, got ({i}, {j})"),
    )
}

pub fn family_name(f: &FamilyConfig) -> &'static str {
    match f {
        FamilyConfig::Translation { .. } => "translation",
        FamilyConfig::Scaling { .. } => "scaling",
        FamilyConfig::Rotation { .. } => "rotation",
        FamilyConfig::Shear { .. } => "shear",
        FamilyConfig::Sine { .. } => "sine",
        FamilyConfig::Linear { .. } => "linear",
        FamilyConfig::Pointwise { .. } => "pointwise",
    }
}

/// Builds a family on `dim` coordinates; `pointwise` also needs the lattice.
fn build_family(
    f: &FamilyConfig,
    dim: usize,
    lattice: Option<&TimeLattice>,
) -> Result<TransformationFamily, ConfigError> {
    Ok(match f {
        FamilyConfig::Translation { direction } => {
            let k = match direction {
                Some(k) => {
                    require(k.len() == dim, format!("translation direction must have {dim} entries"))?;
                    k.clone()
                }
                None => (0..dim).map(|i| 1.0 / (i + 1) as f64).collect(),
            };
            TransformationFamily::translation(k)
        }
        FamilyConfig::Scaling { rate } => TransformationFamily::scaling(dim, *rate),
        FamilyConfig::Rotation { i, j, rate } => {
            plane("rotation", dim, *i, *j)?;
            TransformationFamily::rotation(dim, *i, *j, *rate)
        }
        FamilyConfig::Shear { i, j, rate } => {
            plane("shear", dim, *i, *j)?;
            TransformationFamily::shear(dim, *i, *j, *rate)
        }
        FamilyConfig::Sine { amplitude } => TransformationFamily::sine_perturbation(dim, *amplitude),
        FamilyConfig::Linear { matrix } => {
            TransformationFamily::linear_flow(square_matrix(matrix, dim)?, "linear")
        }
        FamilyConfig::Pointwise { matrix } => {
            let lattice = lattice.ok_or_else(|| invalid("pointwise families act on paths only"))?;
            let a = square_matrix(matrix, lattice.dim_q())?;
            TransformationFamily::pointwise_linear(lattice, &a, "pointwise")?
        }
    })
}

pub fn lagrangian_label(l: &LagrangianConfig) -> String {
    let (base, mass) = match l {
        LagrangianConfig::Free { mass } => ("free".to_string(), *mass),
        LagrangianConfig::Harmonic { omega, mass } => (format!("harmonic(omega={omega})"), *mass),
        LagrangianConfig::Quartic { lambda, mass } => (format!("quartic(lambda={lambda})"), *mass),
    };
    if mass == 1.0 {
        base
    } else {
        format!("{base}[mass={mass}]")
    }
}

fn build_lagrangian(l: &LagrangianConfig, dim_q: usize) -> Result<Lagrangian, ConfigError> {
    require(dim_q >= 1, "dim_q must be >= 1")?;
    let (base, mass) = match *l {
        LagrangianConfig::Free { mass } => (Lagrangian::free(dim_q), mass),
        LagrangianConfig::Harmonic { omega, mass } => (Lagrangian::harmonic(dim_q, omega), mass),
        LagrangianConfig::Quartic { lambda, mass } => (Lagrangian::quartic(dim_q, lambda), mass),
    };
    require_positive("mass", mass)?;
    Ok(base
        .with_kinetic(DMatrix::identity(dim_q, dim_q) * mass)?
        .relabel(lagrangian_label(l)))
}

fn build_initial(f: &InitialConfig, dim_q: usize) -> Result<InitialCondition, ConfigError> {
    Ok(match f {
        InitialConfig::Gaussian { center, sigma } => {
            require_positive("sigma", *sigma)?;
            let c = center.clone().unwrap_or_else(|| vec![0.0; dim_q]);
            require(c.len() == dim_q, format!("f0 center must have {dim_q} entries"))?;
            InitialCondition::gaussian(c, *sigma)
        }
        InitialConfig::Constant { value } => InitialCondition::constant(dim_q, *value),
    })
}

fn build_problem(
    lagrangian: &LagrangianConfig,
    f0: &InitialConfig,
    t_final: f64,
    dim_q: usize,
) -> Result<SchrodingerProblem, ConfigError> {
    require_positive("t_final", t_final)?;
    Ok(SchrodingerProblem::new(
        build_lagrangian(lagrangian, dim_q)?,
        build_initial(f0, dim_q)?,
        t_final,
        lagrangian_label(lagrangian),
    )?)
}

fn build_problem_config(p: &ProblemConfig) -> Result<SchrodingerProblem, ConfigError> {
    build_problem(&p.lagrangian, &p.f0, p.t_final, p.dim_q)
}

fn mode(m: ModeConfig) -> WLogDerivativeMode {
    match m {
        ModeConfig::Euclidean => WLogDerivativeMode::Euclidean,
        ModeConfig::RealTime => WLogDerivativeMode::RealTime,
    }
}
