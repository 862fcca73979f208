use num_complex::Complex64;

use logderiv::action::WLogDerivativeMode;
use logderiv::feynman::{
    exact_gaussian_points, feynman_mc, fresnel_free_particle, oscillatory_check, pde_solve,
    SpaceGrid, MAX_OSCILLATORY_STEPS,
};
use logderiv::lattice::TimeLattice;
use logderiv::quadrature::QuadratureSpec;

use super::{
    build_problem, build_problem_config, lagrangian_label, mode, require, require_positive,
    Assertion, Outcome, Plan,
};
use crate::config::{
    CompareParams, ConfigError, ExperimentConfig, InitialConfig, LagrangianConfig, MethodConfig,
    OscillatoryParams, SolveParams,
};
use crate::table::{Cell, Table};

pub const SOLVE_COLUMNS: &[&str] = &["q0", "q1", "value_re", "value_im", "error_estimate"];

pub const COMPARE_COLUMNS: &[&str] = &[
    "lagrangian",
    "method",
    "q",
    "value_re",
    "value_im",
    "reference_re",
    "reference_im",
    "abs_diff",
    "std_error",
    "bound",
];

pub const OSCILLATORY_COLUMNS: &[&str] = &[
    "n_steps",
    "q",
    "value_re",
    "value_im",
    "error_bound",
    "reference_re",
    "reference_im",
    "abs_diff",
];

fn coord(q: &[f64], i: usize) -> Cell {
    q.get(i).copied().map_or(Cell::Empty, Cell::Float)
}

pub fn prepare_solve(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: SolveParams = cfg.parameters()?;
    let problem = build_problem_config(&p.problem)?;
    let dim_q = problem.dim_q();
    require(p.n_steps >= 1, "n_steps must be >= 1")?;
    let lattice = TimeLattice::new(p.n_steps, problem.t_final, dim_q)?;
    let m = mode(p.mode);
    let grid = p
        .grid
        .as_ref()
        .map(|g| SpaceGrid::new(dim_q, g.extent, g.n_points))
        .transpose()?;
    let points = match (&p.points, &grid) {
        (Some(pts), _) => {
            require(pts.iter().all(|q| q.len() == dim_q), format!("points must have {dim_q} coordinates"))?;
            pts.clone()
        }
        (None, Some(g)) => g.points(),
        (None, None) => return Err(super::invalid("give a grid or a list of points")),
    };
    match p.method {
        MethodConfig::Pde => {
            require(grid.is_some(), "the pde method needs a grid")?;
            require(p.points.is_none(), "the pde method reports on its grid; drop points")?;
        }
        MethodConfig::MonteCarlo | MethodConfig::ExactGaussian => {
            require(m == WLogDerivativeMode::Euclidean, "path integrals are evaluated in euclidean mode")?;
        }
        MethodConfig::Oscillatory => {
            require(m == WLogDerivativeMode::RealTime, "oscillatory quadrature is real-time")?;
            require(dim_q == 1, "oscillatory quadrature needs dim_q = 1")?;
            require(
                p.n_steps <= MAX_OSCILLATORY_STEPS,
                format!("oscillatory quadrature handles at most {MAX_OSCILLATORY_STEPS} slices"),
            )?;
        }
    }
    if p.method == MethodConfig::ExactGaussian {
        require(
            problem.lagrangian.quadratic_potential().is_some(),
            "exact Gaussian evaluation needs a quadratic eta",
        )?;
    }
    let mc = match p.method {
        MethodConfig::MonteCarlo => {
            let n = p.n_samples.ok_or_else(|| super::invalid("monte-carlo needs n_samples"))?;
            require(n >= 2, "n_samples must be >= 2")?;
            Some(QuadratureSpec::monte_carlo(n, cfg.seed).with_workers(cfg.workers))
        }
        _ => {
            require(p.n_samples.is_none(), "n_samples only applies to monte-carlo")?;
            None
        }
    };
    Ok(Box::new(move || {
        let (values, errors, warnings): (Vec<Complex64>, Vec<Option<f64>>, Vec<String>) =
            match p.method {
                MethodConfig::Pde => {
                    let r = pde_solve(&problem, &grid.expect("checked"), &lattice, m)?;
                    (r.values, vec![None; points.len()], r.warnings)
                }
                MethodConfig::MonteCarlo => {
                    let spec = mc.expect("checked");
                    let est = points
                        .iter()
                        .map(|q| feynman_mc(&problem, q, &lattice, &spec))
                        .collect::<logderiv::Result<Vec<_>>>()?;
                    (
                        est.iter().map(|e| e.value).collect(),
                        est.iter().map(|e| Some(e.std_error)).collect(),
                        Vec::new(),
                    )
                }
                MethodConfig::ExactGaussian => {
                    let r = exact_gaussian_points(&problem, &points, &lattice)?;
                    (r.values, vec![None; points.len()], r.warnings)
                }
                MethodConfig::Oscillatory => {
                    let v = points
                        .iter()
                        .map(|q| oscillatory_check(&problem, q[0], &lattice))
                        .collect::<logderiv::Result<Vec<_>>>()?;
                    (
                        v.iter().map(|o| o.value).collect(),
                        v.iter().map(|o| Some(o.error_bound)).collect(),
                        Vec::new(),
                    )
                }
            };
        let mut table = Table::new(SOLVE_COLUMNS);
        for ((q, v), e) in points.iter().zip(&values).zip(&errors) {
            table.push(vec![coord(q, 0), coord(q, 1), v.re.into(), v.im.into(), (*e).into()]);
        }
        let bad = values.iter().filter(|v| !v.is_finite()).count();
        Ok(Outcome {
            table,
            assertions: vec![Assertion::no_failures("non-finite values", bad)],
            warnings,
        })
    }))
}

pub fn prepare_compare(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: CompareParams = cfg.parameters()?;
    require(!p.lagrangians.is_empty(), "lagrangians must be non-empty")?;
    require(!p.probes.is_empty(), "probes must be non-empty")?;
    require(p.n_steps >= 1 && p.pde_steps >= 1, "n_steps and pde_steps must be >= 1")?;
    require(p.n_samples >= 2, "n_samples must be >= 2")?;
    require_positive("t_final", p.t_final)?;
    let grid = SpaceGrid::new(1, p.grid.extent, p.grid.n_points)?;
    require(
        p.probes.iter().all(|q| q.abs() <= p.grid.extent),
        "probes must lie inside the grid",
    )?;
    let problems = p
        .lagrangians
        .iter()
        .map(|l| {
            let problem = build_problem(l, &p.f0, p.t_final, 1)?;
            require(
                problem.lagrangian.quadratic_potential().is_some(),
                "compare needs quadratic Lagrangians",
            )?;
            Ok(problem)
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let lattice = TimeLattice::new(p.n_steps, p.t_final, 1)?;
    let pde_lattice = TimeLattice::new(p.pde_steps, p.t_final, 1)?;
    let base = QuadratureSpec::monte_carlo(p.n_samples, cfg.seed).with_workers(cfg.workers);
    Ok(Box::new(move || {
        let mut table = Table::new(COMPARE_COLUMNS);
        let mut assertions = Vec::new();
        let mut warnings = Vec::new();
        for (li, problem) in problems.iter().enumerate() {
            let label = problem.label.clone();
            let pde = pde_solve(problem, &grid, &pde_lattice, WLogDerivativeMode::Euclidean)?;
            warnings.extend(pde.warnings.iter().map(|w| format!("{label}: {w}")));
            let exact = exact_gaussian_points(problem, &pde.points, &lattice)?;
            assertions.push(Assertion::at_most(
                format!("{label}: exact_gaussian vs pde relative L2 error"),
                exact.relative_l2_error(&pde)?,
                p.l2_tolerance,
            ));
            let spec = base.derived(li as u64);
            let mut excess: f64 = f64::NEG_INFINITY;
            for &q in &p.probes {
                let reference = pde.interpolate_1d(q)?;
                let e = exact_gaussian_points(problem, &[vec![q]], &lattice)?.values[0];
                table.push(vec![
                    label.clone().into(),
                    "exact_gaussian".into(),
                    q.into(),
                    e.re.into(),
                    e.im.into(),
                    reference.re.into(),
                    reference.im.into(),
                    (e - reference).norm().into(),
                    Cell::Empty,
                    Cell::Empty,
                ]);
                let mc = feynman_mc(problem, &[q], &lattice, &spec)?;
                let diff = (mc.value - reference).norm();
                excess = excess.max(diff - p.n_se * mc.std_error);
                table.push(vec![
                    label.clone().into(),
                    "mc_euclidean".into(),
                    q.into(),
                    mc.value.re.into(),
                    mc.value.im.into(),
                    reference.re.into(),
                    reference.im.into(),
                    diff.into(),
                    mc.std_error.into(),
                    (p.n_se * mc.std_error + p.allowance).into(),
                ]);
            }
            assertions.push(Assertion::at_most(
                format!("{label}: max(|mc - pde| - {} SE) over probes", p.n_se),
                excess,
                p.allowance,
            ));
        }
        Ok(Outcome {
            table,
            assertions,
            warnings,
        })
    }))
}

pub fn prepare_oscillatory(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let p: OscillatoryParams = cfg.parameters()?;
    require(!p.n_steps.is_empty() && !p.probes.is_empty(), "n_steps and probes must be non-empty")?;
    require(
        p.n_steps.iter().all(|&n| (1..=MAX_OSCILLATORY_STEPS).contains(&n)),
        format!("n_steps entries must lie in 1..={MAX_OSCILLATORY_STEPS}"),
    )?;
    let InitialConfig::Gaussian { center, sigma } = &p.f0 else {
        return Err(super::invalid("oscillatory quadrature needs a Gaussian f0"));
    };
    let problem = build_problem(&p.lagrangian, &p.f0, p.t_final, 1)?;
    require(
        problem.lagrangian.quadratic_potential().is_some(),
        "oscillatory quadrature needs a quadratic eta",
    )?;
    let lattices = p
        .n_steps
        .iter()
        .map(|&n| TimeLattice::new(n, p.t_final, 1))
        .collect::<logderiv::Result<Vec<_>>>()?;
    let fresnel = match p.lagrangian {
        LagrangianConfig::Free { mass } => {
            let c = center.as_ref().map_or(0.0, |c| c[0]);
            Some((mass, *sigma, c))
        }
        _ => None,
    };
    let label = lagrangian_label(&p.lagrangian);
    Ok(Box::new(move || {
        let mut table = Table::new(OSCILLATORY_COLUMNS);
        let mut worst: f64 = 0.0;
        let mut bad = 0usize;
        for lattice in &lattices {
            for &q in &p.probes {
                let v = oscillatory_check(&problem, q, lattice)?;
                bad += (!v.value.is_finite()) as usize;
                let reference = fresnel.map(|(mass, s, c)| fresnel_free_particle(mass, s, c, p.t_final, q));
                let diff = reference.map(|r| (v.value - r).norm());
                if let Some(d) = diff {
                    worst = worst.max(d);
                }
                table.push(vec![
                    lattice.n_steps().into(),
                    q.into(),
                    v.value.re.into(),
                    v.value.im.into(),
                    v.error_bound.into(),
                    reference.map(|r| r.re).into(),
                    reference.map(|r| r.im).into(),
                    diff.into(),
                ]);
            }
        }
        let mut assertions = vec![Assertion::no_failures("non-finite values", bad)];
        if fresnel.is_some() {
            assertions.push(Assertion::at_most(
                format!("{label}: max |quadrature - Fresnel closed form|"),
                worst,
                p.tolerance,
            ));
        }
        Ok(Outcome {
            table,
            assertions,
            warnings: Vec::new(),
        })
    }))
}
