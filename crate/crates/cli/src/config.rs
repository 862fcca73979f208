//! Experiment configuration: the JSON file, `--set` overrides, and the typed
//! parameter records each experiment validates before it computes anything.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("{0}")]
    Invalid(String),
}

impl From<logderiv::Error> for ConfigError {
    fn from(e: logderiv::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    IbpCheck,
    Theorem1Check,
    Prop1Check,
    FlowDensity,
    Solve,
    Compare,
    AnomalyScan,
    OscillatoryCheck,
}

impl ExperimentKind {
    pub const ALL: [Self; 8] = [
        Self::IbpCheck,
        Self::Theorem1Check,
        Self::Prop1Check,
        Self::FlowDensity,
        Self::Solve,
        Self::Compare,
        Self::AnomalyScan,
        Self::OscillatoryCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::IbpCheck => "ibp-check",
            Self::Theorem1Check => "theorem1-check",
            Self::Prop1Check => "prop1-check",
            Self::FlowDensity => "flow-density",
            Self::Solve => "solve",
            Self::Compare => "compare",
            Self::AnomalyScan => "anomaly-scan",
            Self::OscillatoryCheck => "oscillatory-check",
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    pub parameters: Value,
}

impl ExperimentConfig {
    /// Reads `path`, applies `key=value` overrides (dotted keys, JSON values
    /// with bare strings accepted), and checks the envelope.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut raw: Value = serde_json::from_str(&text)?;
        for o in overrides {
            apply_override(&mut raw, o)?;
        }
        let cfg: Self = serde_json::from_value(raw)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                cfg.schema
            )));
        }
        if cfg.workers == 0 {
            return Err(ConfigError::Invalid("workers must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn parameters<T: DeserializeOwned>(&self) -> Result<T, ConfigError> {
        serde_json::from_value(self.parameters.clone())
            .map_err(|e| ConfigError::Invalid(format!("parameters: {e}")))
    }
}

fn apply_override(root: &mut Value, o: &str) -> Result<(), ConfigError> {
    let (key, value) = o
        .split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| ConfigError::Override(o.to_string()))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| ConfigError::Override(o.to_string()))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| ConfigError::Override(o.to_string()))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(ConfigError::Override(o.to_string())),
        };
    }
    unreachable!("split always yields a part")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Standard,
    Wiener,
    ShiftedWiener,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadratureConfig {
    GaussHermite { order: usize },
    MonteCarlo { n_samples: usize },
}

fn unit() -> f64 {
    1.0
}

fn second_axis() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyConfig {
    Translation {
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    Scaling {
        #[serde(default = "unit")]
        rate: f64,
    },
    Rotation {
        #[serde(default)]
        i: usize,
        #[serde(default = "second_axis")]
        j: usize,
        #[serde(default = "unit")]
        rate: f64,
    },
    Shear {
        #[serde(default)]
        i: usize,
        #[serde(default = "second_axis")]
        j: usize,
        #[serde(default = "unit")]
        rate: f64,
    },
    Sine {
        #[serde(default = "unit")]
        amplitude: f64,
    },
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    /// The same `dim_q x dim_q` generator applied at every lattice node.
    Pointwise {
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LagrangianConfig {
    Free {
        #[serde(default = "unit")]
        mass: f64,
    },
    Harmonic {
        omega: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
    Quartic {
        lambda: f64,
        #[serde(default = "unit")]
        mass: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Gaussian {
        #[serde(default)]
        center: Option<Vec<f64>>,
        sigma: f64,
    },
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    Euclidean,
    RealTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodConfig {
    Pde,
    MonteCarlo,
    ExactGaussian,
    Oscillatory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "one")]
    pub dim_q: usize,
    pub lagrangian: LagrangianConfig,
    pub f0: InitialConfig,
    pub t_final: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extent: f64,
    pub n_points: usize,
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbpParams {
    pub dims: Vec<usize>,
    pub measures: Vec<MeasureKind>,
    pub library_size: usize,
    #[serde(default)]
    pub library_seed: u64,
    pub quadrature: QuadratureConfig,
    pub tolerance: f64,
    #[serde(default = "three")]
    pub n_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Params {
    pub dims: Vec<usize>,
    pub measure: MeasureKind,
    pub pairs_per_dim: usize,
    #[serde(default)]
    pub library_seed: u64,
    pub n_samples: usize,
    pub n_seeds: usize,
    #[serde(default = "three")]
    pub n_se: f64,
    pub min_pass_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop1Params {
    pub dims: Vec<usize>,
    pub measure: MeasureKind,
    pub families: Vec<FamilyConfig>,
    pub library_size: usize,
    #[serde(default)]
    pub library_seed: u64,
    pub quadrature: QuadratureConfig,
    pub abs_tolerance: f64,
    #[serde(default = "three")]
    pub n_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityCase {
    pub family: FamilyConfig,
    pub probe: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDensityParams {
    pub measure: MeasureKind,
    pub dim: usize,
    pub cases: Vec<DensityCase>,
    pub alpha_max: f64,
    pub grids: Vec<usize>,
    pub tolerance: f64,
    pub min_order: f64,
    /// Errors below this are treated as converged when estimating the order.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    pub mode: ModeConfig,
    pub n_steps: usize,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub n_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareParams {
    pub lagrangians: Vec<LagrangianConfig>,
    pub f0: InitialConfig,
    pub t_final: f64,
    pub n_steps: usize,
    pub pde_steps: usize,
    pub grid: GridConfig,
    pub probes: Vec<f64>,
    pub n_samples: usize,
    pub l2_tolerance: f64,
    #[serde(default = "three")]
    pub n_se: f64,
    /// Discretization allowance added to the Monte Carlo bound.
    pub allowance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyTolerancesConfig {
    pub eta: f64,
    pub trace: f64,
    pub duality: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyParams {
    pub family: FamilyConfig,
    pub lagrangians: Vec<LagrangianConfig>,
    pub dim_q: usize,
    pub n_steps: usize,
    pub t_final: f64,
    #[serde(default)]
    pub q_offset: Option<Vec<f64>>,
    pub n_paths: usize,
    pub alphas: Vec<f64>,
    pub ode_grid: usize,
    pub mode: ModeConfig,
    pub tolerances: AnomalyTolerancesConfig,
    /// One class name per Lagrangian, in order.
    #[serde(default)]
    pub expected_classes: Option<Vec<String>>,
    #[serde(default)]
    pub expected_trace: Option<f64>,
    /// Lower bound on `|g(alpha) - 1|` for Lagrangians classed anomalous.
    #[serde(default)]
    pub min_density_deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatoryParams {
    pub lagrangian: LagrangianConfig,
    pub f0: InitialConfig,
    pub t_final: f64,
    pub n_steps: Vec<usize>,
    pub probes: Vec<f64>,
    pub tolerance: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_walk_objects_and_arrays() {
        let mut v: Value = serde_json::json!({"parameters": {"dims": [1, 2]}});
        apply_override(&mut v, "parameters.dims.1=5").unwrap();
        apply_override(&mut v, "parameters.label=abc").unwrap();
        apply_override(&mut v, "seed=7").unwrap();
        assert_eq!(v["parameters"]["dims"][1], 5);
        assert_eq!(v["parameters"]["label"], "abc");
        assert_eq!(v["seed"], 7);
        assert!(apply_override(&mut v, "noequals").is_err());
        assert!(apply_override(&mut v, "parameters.dims.9=1").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = serde_json::json!({"kind": "gauss-hermite", "order": 4, "extra": 1});
        assert!(serde_json::from_value::<QuadratureConfig>(bad).is_err());
        let missing = serde_json::json!({"lagrangian": {"name": "free"}, "f0": {"kind": "constant", "value": 1.0}});
        assert!(serde_json::from_value::<ProblemConfig>(missing).is_err());
    }
}
