use logderiv::action::{Lagrangian, WLogDerivativeMode};
use logderiv::feynman::{
    exact_gaussian_points, feynman_mc, fresnel_free_particle, oscillatory_check, pde_solve,
    InitialCondition, SchrodingerProblem, SpaceGrid,
};
use logderiv::lattice::TimeLattice;
use logderiv::quadrature::QuadratureSpec;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

fn heat_kernel(sigma: f64, t: f64, q: f64) -> f64 {
    let s2 = sigma * sigma;
    (s2 / (s2 + t)).sqrt() * (-q * q / (2.0 * (s2 + t))).exp()
}

/// Euclidean harmonic oscillator (unit mass and frequency) started from a
/// centred Gaussian of width `s`, integrated against the Mehler kernel.
fn mehler(s: f64, t: f64, x: f64) -> f64 {
    let coth = 1.0 / t.tanh();
    let a = coth + 1.0 / (s * s);
    let b = x / t.sinh();
    (a * t.sinh()).powf(-0.5) * (b * b / (2.0 * a) - 0.5 * x * x * coth).exp()
}

#[test]
fn free_pde_matches_heat_kernel() {
    let (sigma, t) = (0.5, 0.25);
    let p = SchrodingerProblem::new(
        Lagrangian::free(1),
        InitialCondition::gaussian(vec![0.0], sigma),
        t,
        "heat",
    )
    .unwrap();
    let grid = SpaceGrid::new(1, 8.0, 257).unwrap();
    let lattice = TimeLattice::new(256, t, 1).unwrap();
    let r = pde_solve(&p, &grid, &lattice, WLogDerivativeMode::Euclidean).unwrap();
    let worst = r
        .points
        .iter()
        .zip(&r.values)
        .map(|(q, u)| (u - Complex64::new(heat_kernel(sigma, t, q[0]), 0.0)).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
    assert!(r.warnings.is_empty());
}

#[test]
fn discrete_ground_state_decays_at_its_energy() {
    let (extent, n_points, t) = (8.0, 257, 1.0);
    let grid = SpaceGrid::new(1, extent, n_points).unwrap();
    let h = grid.spacing();
    let axis = grid.axis();
    let inner = n_points - 2;
    let mut ham = DMatrix::zeros(inner, inner);
    for i in 0..inner {
        let q = axis[i + 1];
        ham[(i, i)] = 1.0 / (h * h) + 0.5 * q * q;
        if i + 1 < inner {
            ham[(i, i + 1)] = -0.5 / (h * h);
            ham[(i + 1, i)] = -0.5 / (h * h);
        }
    }
    let eig = SymmetricEigen::new(ham);
    let k = eig.eigenvalues.imin();
    let energy = eig.eigenvalues[k];
    assert!((energy - 0.5).abs() < 1e-3, "{energy}");
    let mut mode: Vec<f64> = eig.eigenvectors.column(k).iter().cloned().collect();
    let peak = mode[inner / 2];
    mode.iter_mut().for_each(|v| *v /= peak);
    let table = mode.clone();
    let f0 = InitialCondition::custom("ground state", move |q: &[f64]| {
        let i = ((q[0] + extent) / h).round() as usize;
        let v = if i == 0 || i > inner { 0.0 } else { table[i - 1] };
        Complex64::new(v, 0.0)
    });
    let p = SchrodingerProblem::new(Lagrangian::harmonic(1, 1.0), f0, t, "ground").unwrap();
    let lattice = TimeLattice::new(400, t, 1).unwrap();
    let r = pde_solve(&p, &grid, &lattice, WLogDerivativeMode::Euclidean).unwrap();
    let decay = (-energy * t).exp();
    for (i, m) in mode.iter().enumerate() {
        let u = r.values[i + 1];
        assert!((u.re - decay * m).abs() < 1e-4 && u.im == 0.0);
    }
}

#[test]
fn exact_lattice_integral_extrapolates_to_mehler() {
    for t in [0.5, 1.0] {
        extrapolate_to_mehler(0.7, t);
    }
}

fn extrapolate_to_mehler(s: f64, t: f64) {
    let p = SchrodingerProblem::new(
        Lagrangian::harmonic(1, 1.0),
        InitialCondition::gaussian(vec![0.0], s),
        t,
        "mehler",
    )
    .unwrap();
    let points: Vec<Vec<f64>> = (-8..=8).map(|i| vec![0.25 * i as f64]).collect();
    let coarse = exact_gaussian_points(&p, &points, &TimeLattice::new(64, t, 1).unwrap()).unwrap();
    let fine = exact_gaussian_points(&p, &points, &TimeLattice::new(128, t, 1).unwrap()).unwrap();
    for ((q, a), b) in points.iter().zip(&coarse.values).zip(&fine.values) {
        let want = mehler(s, t, q[0]);
        let extrapolated = 2.0 * b.re - a.re;
        assert!((extrapolated - want).abs() < 1e-4, "{q:?}: {extrapolated} vs {want}");
        assert!((b.re - want).abs() < (a.re - want).abs() + 1e-12);
    }
}

#[test]
fn monte_carlo_free_particle_matches_heat_kernel() {
    let (sigma, t) = (0.5, 0.25);
    let p = SchrodingerProblem::new(
        Lagrangian::free(1),
        InitialCondition::gaussian(vec![0.0], sigma),
        t,
        "heat",
    )
    .unwrap();
    let lattice = TimeLattice::new(4, t, 1).unwrap();
    for q in [-0.8, 0.0, 0.3] {
        let est = feynman_mc(&p, &[q], &lattice, &QuadratureSpec::monte_carlo(100_000, 21)).unwrap();
        let err = (est.value - Complex64::new(heat_kernel(sigma, t, q), 0.0)).norm();
        assert!(err <= 3.0 * est.std_error, "{q}: {err} vs se {}", est.std_error);
        let again = feynman_mc(&p, &[q], &lattice, &QuadratureSpec::monte_carlo(100_000, 21)).unwrap();
        assert_eq!(est.value, again.value);
    }
}

#[test]
fn oscillatory_quadrature_reproduces_fresnel_spreading() {
    let (sigma, t) = (0.8, 0.5);
    let p = SchrodingerProblem::new(
        Lagrangian::free(1),
        InitialCondition::gaussian(vec![0.2], sigma),
        t,
        "fresnel",
    )
    .unwrap();
    let one = TimeLattice::new(1, t, 1).unwrap();
    let two = TimeLattice::new(2, t, 1).unwrap();
    for q in [-1.0, 0.2, 0.9] {
        let a = oscillatory_check(&p, q, &one).unwrap();
        let b = oscillatory_check(&p, q, &two).unwrap();
        let want = fresnel_free_particle(1.0, sigma, 0.2, t, q);
        assert!((a.value - want).norm() < 1e-6, "{q}: {} vs {want}", a.value);
        assert!((b.value - want).norm() < 1e-6, "{q}: {} vs {want}", b.value);
        assert!((a.value - b.value).norm() < 1e-6);
    }
}

#[test]
fn oscillatory_quadrature_respects_reflection() {
    let p = SchrodingerProblem::new(
        Lagrangian::harmonic(1, 1.3),
        InitialCondition::gaussian(vec![0.0], 0.6),
        0.4,
        "reflect",
    )
    .unwrap();
    let lattice = TimeLattice::new(3, 0.4, 1).unwrap();
    let a = oscillatory_check(&p, 0.7, &lattice).unwrap();
    let b = oscillatory_check(&p, -0.7, &lattice).unwrap();
    assert!((a.value - b.value).norm() < 1e-9);
    assert!(a.value.im.abs() > 1e-3);
}

#[test]
fn real_time_pde_matches_fresnel() {
    let (sigma, t) = (0.5, 0.25);
    let p = SchrodingerProblem::new(
        Lagrangian::free(1),
        InitialCondition::gaussian(vec![0.0], sigma),
        t,
        "fresnel",
    )
    .unwrap();
    let grid = SpaceGrid::new(1, 8.0, 513).unwrap();
    let lattice = TimeLattice::new(512, t, 1).unwrap();
    let r = pde_solve(&p, &grid, &lattice, WLogDerivativeMode::RealTime).unwrap();
    let worst = r
        .points
        .iter()
        .zip(&r.values)
        .map(|(q, u)| (u - fresnel_free_particle(1.0, sigma, 0.0, t, q[0])).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}
