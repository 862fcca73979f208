use logderiv::flows::{pushforward_density_ratio, solve_density_ode};

use super::{build_family, build_measure, family_name, require, Assertion, Outcome, Plan};
use crate::config::{ConfigError, ExperimentConfig, FlowDensityParams};
use crate::table::Table;

pub const COLUMNS: &[&str] = &[
    "case",
    "family",
    "grid",
    "alpha",
    "ode_value",
    "closed_form",
    "final_abs_error",
    "max_abs_error",
    "pairwise_order",
];

fn pair_order(coarse: f64, fine: f64, n_coarse: usize, n_fine: usize) -> f64 {
    (coarse / fine).log2() / (n_fine as f64 / n_coarse as f64).log2()
}

/// Least-squares slope of `-log err` against `log n` over grids whose error is
/// above the noise floor; NaN (a failed check) with fewer than two such grids.
fn fitted_order(grids: &[usize], errors: &[f64], floor: f64) -> f64 {
    let pts: Vec<(f64, f64)> = grids
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > floor)
        .map(|(&n, &e)| ((n as f64).ln(), -e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: FlowDensityParams = cfg.parameters()?;
    require(!p.cases.is_empty(), "cases must be non-empty")?;
    require(
        !p.grids.is_empty() && p.grids.iter().all(|&n| n >= 1),
        "grids must be non-empty and positive",
    )?;
    require(
        p.grids.windows(2).all(|w| w[0] < w[1]),
        "grids must be strictly increasing",
    )?;
    require(p.alpha_max.is_finite() && p.alpha_max != 0.0, "alpha_max must be nonzero")?;
    let m = build_measure(p.measure, p.dim)?;
    let cases = p
        .cases
        .iter()
        .map(|c| {
            require(c.probe.len() == p.dim, format!("probe must have {} entries", p.dim))?;
            Ok((family_name(&c.family), build_family(&c.family, p.dim, None)?, c.probe.clone()))
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Ok(Box::new(move || {
        let mut table = Table::new(COLUMNS);
        let mut assertions = Vec::new();
        for (ci, (name, family, probe)) in cases.iter().enumerate() {
            let mut errors: Vec<f64> = Vec::new();
            let mut finest_max = 0.0;
            for (gi, &n) in p.grids.iter().enumerate() {
                let curve = solve_density_ode(&m, family, p.alpha_max, n, probe)?;
                let mut max_err: f64 = 0.0;
                for (a, g) in curve.alphas.iter().zip(&curve.values) {
                    let exact = pushforward_density_ratio(&m, family, *a, probe)?;
                    max_err = max_err.max((g - exact).abs());
                }
                let closed = pushforward_density_ratio(&m, family, p.alpha_max, probe)?;
                let ode = curve.values[n];
                let order = (gi > 0 && errors[gi - 1] > p.noise_floor && max_err > p.noise_floor)
                    .then(|| pair_order(errors[gi - 1], max_err, p.grids[gi - 1], n));
                errors.push(max_err);
                finest_max = max_err;
                table.push(vec![
                    ci.into(),
                    (*name).into(),
                    n.into(),
                    p.alpha_max.into(),
                    ode.into(),
                    closed.into(),
                    (ode - closed).abs().into(),
                    max_err.into(),
                    order.into(),
                ]);
            }
            assertions.push(Assertion::at_most(
                format!("case {ci} ({name}): finest-grid max error"),
                finest_max,
                p.tolerance,
            ));
            assertions.push(Assertion::at_least(
                format!("case {ci} ({name}): fitted convergence order"),
                fitted_order(&p.grids, &errors, p.noise_floor),
                p.min_order,
            ));
        }
        Ok(Outcome {
            table,
            assertions,
            warnings: Vec::new(),
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_order_recovers_power_laws() {
        let grids = [4, 8, 16, 32];
        let errors: Vec<f64> = grids.iter().map(|&n| 3.0 * (n as f64).powi(-4)).collect();
        assert!((fitted_order(&grids, &errors, 0.0) - 4.0).abs() < 1e-12);
        assert!(fitted_order(&grids, &errors, 1.0).is_nan());
        assert!((pair_order(1.0, 0.25, 8, 16) - 2.0).abs() < 1e-15);
    }
}
