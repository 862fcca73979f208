use logderiv::feynman::{anomaly_experiment, AnomalySetup, AnomalyTolerances, SymmetryClass};
use logderiv::lattice::TimeLattice;

use super::{build_family, build_lagrangian, mode, require, require_positive, Assertion, Outcome, Plan};
use crate::config::{AnomalyParams, ConfigError, ExperimentConfig};
use crate::table::{Cell, Table};

/// One table for all sections; cells that do not apply to a section are empty.
pub const COLUMNS: &[&str] = &[
    "section",
    "lagrangian",
    "path",
    "alpha",
    "eta_re",
    "eta_im",
    "trace",
    "trace_fd",
    "log_det",
    "trace_integral",
    "residual",
    "ode_value",
    "closed_form",
    "discrepancy",
    "deviation_from_one",
    "max_abs_eta",
    "min_abs_trace",
    "max_abs_trace",
    "class",
];

fn row(section: &str, lagrangian: Option<&str>, fill: &[(&str, Cell)]) -> Vec<Cell> {
    COLUMNS
        .iter()
        .map(|&c| match c {
            "section" => section.into(),
            "lagrangian" => lagrangian.map_or(Cell::Empty, Cell::from),
            _ => fill
                .iter()
                .find(|(k, _)| *k == c)
                .map_or(Cell::Empty, |(_, v)| v.clone()),
        })
        .collect()
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: AnomalyParams = cfg.parameters()?;
    require(p.lagrangians.len() >= 2, "anomaly-scan compares at least two Lagrangians")?;
    require(p.n_paths >= 1, "n_paths must be >= 1")?;
    require(p.ode_grid >= 1, "ode_grid must be >= 1")?;
    require_positive("t_final", p.t_final)?;
    let lattice = TimeLattice::new(p.n_steps, p.t_final, p.dim_q)?;
    let family = build_family(&p.family, lattice.state_dim(), Some(&lattice))?;
    let lagrangians = p
        .lagrangians
        .iter()
        .map(|l| build_lagrangian(l, p.dim_q))
        .collect::<Result<Vec<_>, _>>()?;
    let q_offset = p.q_offset.clone().unwrap_or_else(|| vec![0.0; p.dim_q]);
    require(q_offset.len() == p.dim_q, format!("q_offset must have {} entries", p.dim_q))?;
    let expected = match &p.expected_classes {
        Some(names) => {
            require(
                names.len() == lagrangians.len(),
                "expected_classes needs one entry per Lagrangian",
            )?;
            Some(
                names
                    .iter()
                    .map(|n| {
                        SymmetryClass::parse(n)
                            .ok_or_else(|| super::invalid(format!("unknown class `{n}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
        None => None,
    };
    let t = p.tolerances.clone();
    let setup = AnomalySetup {
        family,
        lagrangians,
        lattice,
        q_offset,
        n_paths: p.n_paths,
        seed: cfg.seed,
        alphas: p.alphas.clone(),
        ode_grid: p.ode_grid,
        mode: mode(p.mode),
        tolerances: AnomalyTolerances {
            eta: t.eta,
            trace: t.trace,
            duality: t.duality,
            density: t.density,
        },
    };
    Ok(Box::new(move || {
        let r = anomaly_experiment(&setup)?;
        let mut table = Table::new(COLUMNS);
        for v in &r.variations {
            table.push(row(
                "variation",
                Some(&v.lagrangian),
                &[
                    ("path", v.path.into()),
                    ("eta_re", v.eta_term.re.into()),
                    ("eta_im", v.eta_term.im.into()),
                    ("trace", v.trace_term.into()),
                    ("trace_fd", v.trace_term_fd.into()),
                ],
            ));
        }
        for d in &r.determinants {
            table.push(row(
                "determinant",
                None,
                &[
                    ("path", d.path.into()),
                    ("alpha", d.alpha.into()),
                    ("log_det", d.log_det.into()),
                    ("trace_integral", d.trace_integral.into()),
                    ("residual", d.residual.into()),
                ],
            ));
        }
        for d in &r.densities {
            table.push(row(
                "density",
                Some(&d.lagrangian),
                &[
                    ("path", 0usize.into()),
                    ("alpha", d.alpha.into()),
                    ("ode_value", d.ode_value.into()),
                    ("closed_form", d.closed_form.into()),
                    ("discrepancy", d.discrepancy.into()),
                    ("deviation_from_one", d.deviation_from_one.into()),
                ],
            ));
        }
        for s in &r.summaries {
            table.push(row(
                "summary",
                Some(&s.lagrangian),
                &[
                    ("max_abs_eta", s.max_abs_eta.into()),
                    ("min_abs_trace", s.min_abs_trace.into()),
                    ("max_abs_trace", s.max_abs_trace.into()),
                    ("class", s.class.name().into()),
                ],
            ));
        }

        let mut assertions = vec![
            Assertion::no_failures(
                "trace columns differing across Lagrangians",
                (!r.traces_identical) as usize,
            ),
            Assertion::at_most(
                "max |log det + integrated trace|",
                r.max_duality_residual,
                t.duality,
            ),
        ];
        if let Some(want) = p.expected_trace {
            let off = r
                .variations
                .iter()
                .filter(|v| v.trace_term.to_bits() != want.to_bits())
                .count();
            assertions.push(Assertion::no_failures(
                format!("trace entries not bitwise equal to {want}"),
                off,
            ));
        }
        if !r.densities.is_empty() {
            assertions.push(Assertion::at_most(
                "max density ODE vs change-of-variables discrepancy",
                r.max_density_discrepancy,
                t.density,
            ));
        }
        if let Some(classes) = &expected {
            let wrong = r
                .summaries
                .iter()
                .zip(classes)
                .filter(|(s, c)| s.class != **c)
                .count();
            assertions.push(Assertion::no_failures("Lagrangians with unexpected class", wrong));
        }
        for s in &r.summaries {
            let Some(d) = r.densities.iter().find(|d| d.lagrangian == s.lagrangian) else {
                continue;
            };
            match s.class {
                SymmetryClass::Anomalous => {
                    if let Some(min) = p.min_density_deviation {
                        assertions.push(Assertion::at_least(
                            format!("{}: |g(alpha) - 1| (measure moves)", s.lagrangian),
                            d.deviation_from_one,
                            min,
                        ));
                    }
                }
                SymmetryClass::Invariant => assertions.push(Assertion::at_most(
                    format!("{}: |g(alpha) - 1| (measure stays)", s.lagrangian),
                    d.deviation_from_one,
                    t.density,
                )),
                SymmetryClass::Broken => {}
            }
        }
        Ok(Outcome {
            table,
            assertions,
            warnings: Vec::new(),
        })
    }))
}
