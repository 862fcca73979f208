use logderiv::flows::proposition1_check;
use logderiv::measures::ibp_residual;
use logderiv::poly::ibp_library;
use logderiv::quadrature::QuadratureSpec;

use super::{
    build_family, build_measure, build_quadrature, family_name, measure_name, require, Assertion,
    Outcome, Plan,
};
use crate::config::{ConfigError, ExperimentConfig, IbpParams, Prop1Params, Theorem1Params};
use crate::table::{Cell, Table};

pub const IBP_COLUMNS: &[&str] = &[
    "dim",
    "measure",
    "pair",
    "gradient_term",
    "log_derivative_term",
    "residual",
    "std_error",
    "z_score",
];

pub const THEOREM1_COLUMNS: &[&str] = &[
    "seed",
    "dim",
    "measure",
    "pair",
    "residual",
    "std_error",
    "z_score",
    "within_bound",
];

pub const PROP1_COLUMNS: &[&str] = &[
    "dim",
    "family",
    "test_function",
    "lhs",
    "lhs_std_error",
    "rhs",
    "rhs_std_error",
    "log_derivative_route",
    "log_derivative_route_std_error",
    "difference",
    "difference_std_error",
];

fn case_salt(parts: &[usize]) -> u64 {
    parts.iter().fold(0u64, |acc, &p| acc.wrapping_mul(1_000_003).wrapping_add(p as u64))
}

pub fn prepare_ibp(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: IbpParams = cfg.parameters()?;
    require(!p.dims.is_empty() && !p.measures.is_empty(), "dims and measures must be non-empty")?;
    require(p.library_size >= 1, "library_size must be >= 1")?;
    let max_dim = p.dims.iter().copied().max().unwrap_or(0);
    let spec = build_quadrature(&p.quadrature, max_dim, cfg.seed, cfg.workers)?;
    let mut cases = Vec::new();
    for &dim in &p.dims {
        for &kind in &p.measures {
            cases.push((dim, kind, build_measure(kind, dim)?));
        }
    }
    Ok(Box::new(move || {
        let mut table = Table::new(IBP_COLUMNS);
        let mut worst: f64 = 0.0;
        for (ci, (dim, kind, m)) in cases.iter().enumerate() {
            for (pi, pair) in ibp_library(*dim, p.library_size, p.library_seed).iter().enumerate() {
                let q = case_spec(&spec, &[ci, pi]);
                let r = ibp_residual(
                    m,
                    &pair.phi.to_test_function(pair.label.clone()),
                    &pair.field.to_vector_field(pair.label.clone()),
                    &q,
                )?;
                let score = if spec.is_stochastic() {
                    r.residual.z_score()
                } else {
                    r.residual.value.abs()
                };
                worst = worst.max(score);
                table.push(vec![
                    (*dim).into(),
                    measure_name(*kind).into(),
                    pair.label.clone().into(),
                    r.gradient_term.value.into(),
                    r.log_derivative_term.value.into(),
                    r.residual.value.into(),
                    r.residual.std_error.into(),
                    r.residual.std_error.map(|_| r.residual.z_score()).into(),
                ]);
            }
        }
        let assertion = if spec.is_stochastic() {
            Assertion::at_most("max residual z-score", worst, p.n_se)
        } else {
            Assertion::at_most("max |residual|", worst, p.tolerance)
        };
        Ok(Outcome {
            table,
            assertions: vec![assertion],
            warnings: Vec::new(),
        })
    }))
}

/// Stochastic rules get an independent stream per case; deterministic ones are unchanged.
fn case_spec(spec: &QuadratureSpec, parts: &[usize]) -> QuadratureSpec {
    if spec.is_stochastic() {
        spec.derived(case_salt(parts))
    } else {
        *spec
    }
}

pub fn prepare_theorem1(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: Theorem1Params = cfg.parameters()?;
    require(!p.dims.is_empty(), "dims must be non-empty")?;
    require(p.pairs_per_dim >= 1 && p.n_seeds >= 1, "pairs_per_dim and n_seeds must be >= 1")?;
    require(
        (0.0..=1.0).contains(&p.min_pass_fraction),
        "min_pass_fraction must lie in [0, 1]",
    )?;
    require(p.n_samples >= 2, "n_samples must be >= 2")?;
    let measures = p
        .dims
        .iter()
        .map(|&d| build_measure(p.measure, d))
        .collect::<Result<Vec<_>, _>>()?;
    let (seed, workers) = (cfg.seed, cfg.workers);
    Ok(Box::new(move || {
        let mut table = Table::new(THEOREM1_COLUMNS);
        let (mut total, mut within) = (0usize, 0usize);
        for s in 0..p.n_seeds {
            let run_seed = seed.wrapping_add(s as u64);
            let base = QuadratureSpec::monte_carlo(p.n_samples, run_seed).with_workers(workers);
            for (dim, m) in p.dims.iter().zip(&measures) {
                for (pi, pair) in ibp_library(*dim, p.pairs_per_dim, p.library_seed).iter().enumerate() {
                    let r = ibp_residual(
                        m,
                        &pair.phi.to_test_function(pair.label.clone()),
                        &pair.field.to_vector_field(pair.label.clone()),
                        &base.derived(case_salt(&[*dim, pi])),
                    )?;
                    let z = r.residual.z_score();
                    let ok = z <= p.n_se;
                    total += 1;
                    within += ok as usize;
                    table.push(vec![
                        run_seed.into(),
                        (*dim).into(),
                        measure_name(p.measure).into(),
                        pair.label.clone().into(),
                        r.residual.value.into(),
                        r.residual.std_error.into(),
                        z.into(),
                        ok.into(),
                    ]);
                }
            }
        }
        let fraction = within as f64 / total as f64;
        Ok(Outcome {
            table,
            assertions: vec![Assertion::at_least(
                format!("fraction of residuals within {} standard errors", p.n_se),
                fraction,
                p.min_pass_fraction,
            )],
            warnings: Vec::new(),
        })
    }))
}

pub fn prepare_prop1(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: Prop1Params = cfg.parameters()?;
    require(!p.dims.is_empty() && !p.families.is_empty(), "dims and families must be non-empty")?;
    require(p.library_size >= 1, "library_size must be >= 1")?;
    let max_dim = p.dims.iter().copied().max().unwrap_or(0);
    let spec = build_quadrature(&p.quadrature, max_dim, cfg.seed, cfg.workers)?;
    let mut cases = Vec::new();
    for &dim in &p.dims {
        let m = build_measure(p.measure, dim)?;
        let families = p
            .families
            .iter()
            .map(|f| Ok((family_name(f), build_family(f, dim, None)?)))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        cases.push((dim, m, families));
    }
    Ok(Box::new(move || {
        let mut table = Table::new(PROP1_COLUMNS);
        let mut worst: f64 = 0.0;
        for (dim, m, families) in &cases {
            let library = ibp_library(*dim, p.library_size, p.library_seed);
            for (fi, (name, family)) in families.iter().enumerate() {
                for (pi, pair) in library.iter().enumerate() {
                    let phi = pair.phi.to_test_function(pair.label.clone());
                    let c = proposition1_check(m, family, &phi, &case_spec(&spec, &[*dim, fi, pi]))?;
                    let score = match c.difference_std_error {
                        Some(se) if se > 0.0 => c.difference.abs() / se,
                        Some(_) if c.difference == 0.0 => 0.0,
                        Some(_) => f64::INFINITY,
                        None => c.difference.abs(),
                    };
                    worst = worst.max(score);
                    table.push(vec![
                        (*dim).into(),
                        Cell::from(*name),
                        pair.label.clone().into(),
                        c.lhs.value.into(),
                        c.lhs.std_error.into(),
                        c.rhs.value.into(),
                        c.rhs.std_error.into(),
                        c.log_derivative_route.value.into(),
                        c.log_derivative_route.std_error.into(),
                        c.difference.into(),
                        c.difference_std_error.into(),
                    ]);
                }
            }
        }
        let assertion = if spec.is_stochastic() {
            Assertion::at_most("max |lhs + rhs| in standard errors", worst, p.n_se)
        } else {
            Assertion::at_most("max |lhs + rhs|", worst, p.abs_tolerance)
        };
        Ok(Outcome {
            table,
            assertions: vec![assertion],
            warnings: Vec::new(),
        })
    }))
}
