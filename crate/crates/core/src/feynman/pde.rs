//! Crank-Nicolson (implicit midpoint) stepping of `u_t = c L u` with
//! `L = 1/2 div B^{-1} grad + eta(q, 0)` and zero values on the box boundary.
//! `c = 1` gives the heat form, `c = i` the Schrödinger equation.

use std::time::Instant;

use num_complex::Complex64;

use super::{PropagatorMethod, PropagatorResult, SchrodingerProblem, SpaceGrid};
use crate::action::WLogDerivativeMode;
use crate::error::{check_dim, Error, Result};
use crate::lattice::TimeLattice;

/// Boundary-band mass fraction above which a result carries a warning.
pub const BOUNDARY_MASS_WARNING: f64 = 1e-6;

pub fn pde_solve(
    p: &SchrodingerProblem,
    g: &SpaceGrid,
    lattice: &TimeLattice,
    mode: WLogDerivativeMode,
) -> Result<PropagatorResult> {
    let start = Instant::now();
    check_dim(p.dim_q(), g.dim_q())?;
    check_dim(p.dim_q(), lattice.dim_q())?;
    if (lattice.t_final() - p.t_final).abs() > 1e-12 * p.t_final {
        return Err(Error::InvalidArgument(format!(
            "lattice covers t = {} but the problem asks for t = {}",
            lattice.t_final(),
            p.t_final
        )));
    }
    let points = g.points();
    let n = g.n_points();
    let mut u: Vec<Complex64> = points
        .iter()
        .enumerate()
        .map(|(flat, q)| {
            if on_boundary(flat, n, g.dim_q()) {
                Complex64::new(0.0, 0.0)
            } else {
                p.f0.eval(q)
            }
        })
        .collect();
    let eta: Vec<f64> = points.iter().map(|q| p.potential_term(q)).collect();
    let b = p.lagrangian.kinetic_matrix();
    let h = g.spacing();
    let coupling: Vec<f64> = (0..g.dim_q()).map(|k| 0.5 / (b[(k, k)] * h * h)).collect();
    match (g.dim_q(), mode) {
        (1, _) => step_1d(&mut u, &eta, coupling[0], lattice, mode.factor()),
        (2, WLogDerivativeMode::Euclidean) => {
            if b[(0, 1)] != 0.0 || b[(1, 0)] != 0.0 {
                return Err(Error::Unsupported(
                    "2-D PDE solver needs a diagonal kinetic matrix".into(),
                ));
            }
            step_2d(&mut u, &eta, &coupling, n, lattice)?;
        }
        (2, WLogDerivativeMode::RealTime) => {
            return Err(Error::Unsupported(
                "real-time PDE solver is 1-D only".into(),
            ))
        }
        (d, _) => {
            return Err(Error::Unsupported(format!(
                "PDE solver supports dim_q 1 or 2, got {d}"
            )))
        }
    }
    let boundary_mass = boundary_mass(&u, n, g.dim_q());
    let mut warnings = Vec::new();
    if boundary_mass > BOUNDARY_MASS_WARNING {
        warnings.push(format!(
            "boundary band holds {boundary_mass:.3e} of the solution mass; enlarge the box"
        ));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergent("PDE solution is not finite".into()));
    }
    Ok(PropagatorResult {
        points,
        values: u,
        method: PropagatorMethod::Pde,
        mode,
        error_estimate: 0.0,
        wall_time: start.elapsed().as_secs_f64(),
        seed: None,
        boundary_mass: Some(boundary_mass),
        warnings,
    })
}

fn axis_indices(flat: usize, n: usize, dim: usize) -> impl Iterator<Item = usize> {
    let mut rem = flat;
    (0..dim).map(move |_| {
        let i = rem % n;
        rem /= n;
        i
    })
}

fn on_boundary(flat: usize, n: usize, dim: usize) -> bool {
    axis_indices(flat, n, dim).any(|i| i == 0 || i == n - 1)
}

/// Share of `sum |u|` on points within `max(1, n / 20)` nodes of the box edge.
fn boundary_mass(u: &[Complex64], n: usize, dim: usize) -> f64 {
    let band = (n / 20).max(1);
    let (mut edge, mut total) = (0.0, 0.0);
    for (flat, v) in u.iter().enumerate() {
        let a = v.norm();
        total += a;
        if axis_indices(flat, n, dim).any(|i| i < band || i >= n - band) {
            edge += a;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        edge / total
    }
}

/// Tridiagonal Crank-Nicolson steps on the interior nodes.
fn step_1d(u: &mut [Complex64], eta: &[f64], a: f64, lattice: &TimeLattice, c: Complex64) {
    let n = u.len();
    let m = n - 2;
    let half = c * (0.5 * lattice.dt());
    let off = -half * a;
    let diag: Vec<Complex64> = (1..n - 1)
        .map(|i| Complex64::new(1.0, 0.0) - half * (eta[i] - 2.0 * a))
        .collect();
    // Thomas elimination with constant off-diagonals, factored once
    let mut upper = vec![Complex64::new(0.0, 0.0); m];
    let mut pivot = vec![Complex64::new(0.0, 0.0); m];
    pivot[0] = diag[0];
    upper[0] = off / pivot[0];
    for i in 1..m {
        pivot[i] = diag[i] - off * upper[i - 1];
        upper[i] = off / pivot[i];
    }
    let mut rhs = vec![Complex64::new(0.0, 0.0); m];
    for _ in 0..lattice.n_steps() {
        for i in 0..m {
            let k = i + 1;
            let lap = u[k - 1] - u[k] * 2.0 + u[k + 1];
            rhs[i] = u[k] + half * (a * lap + eta[k] * u[k]);
        }
        rhs[0] /= pivot[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - off * rhs[i - 1]) / pivot[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] = rhs[i] - upper[i] * rhs[i + 1];
        }
        u[1..n - 1].copy_from_slice(&rhs);
    }
}

/// `L u` on a 2-D grid with zero boundary values.
fn apply_operator(u: &[Complex64], eta: &[f64], a: &[f64], n: usize, out: &mut [Complex64]) {
    for r in 0..n {
        for s in 0..n {
            let k = r * n + s;
            if r == 0 || s == 0 || r == n - 1 || s == n - 1 {
                out[k] = Complex64::new(0.0, 0.0);
                continue;
            }
            let lap0 = u[k - n] - u[k] * 2.0 + u[k + n];
            let lap1 = u[k - 1] - u[k] * 2.0 + u[k + 1];
            out[k] = lap0 * a[0] + lap1 * a[1] + u[k] * eta[k];
        }
    }
}

fn dot(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Crank-Nicolson on a 2-D grid; each step solves the symmetric positive
/// definite system `(I - dt/2 L) u' = (I + dt/2 L) u` by conjugate gradients.
fn step_2d(
    u: &mut [Complex64],
    eta: &[f64],
    a: &[f64],
    n: usize,
    lattice: &TimeLattice,
) -> Result<()> {
    let half = 0.5 * lattice.dt();
    let eta_max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if half * eta_max >= 1.0 {
        return Err(Error::NotPositiveDefinite(
            "time step too large for the implicit system; refine the lattice".into(),
        ));
    }
    let len = u.len();
    let interior = |k: usize| {
        let (r, s) = (k / n, k % n);
        r > 0 && s > 0 && r < n - 1 && s < n - 1
    };
    let mut lu = vec![Complex64::new(0.0, 0.0); len];
    let mut rhs = vec![Complex64::new(0.0, 0.0); len];
    let mut x = vec![Complex64::new(0.0, 0.0); len];
    let mut r = vec![Complex64::new(0.0, 0.0); len];
    let mut d = vec![Complex64::new(0.0, 0.0); len];
    let mut md = vec![Complex64::new(0.0, 0.0); len];
    for _ in 0..lattice.n_steps() {
        apply_operator(u, eta, a, n, &mut lu);
        for k in 0..len {
            rhs[k] = if interior(k) { u[k] + lu[k] * half } else { Complex64::new(0.0, 0.0) };
        }
        x.copy_from_slice(u);
        apply_operator(&x, eta, a, n, &mut lu);
        for k in 0..len {
            let mx = if interior(k) { x[k] - lu[k] * half } else { x[k] };
            r[k] = rhs[k] - mx;
        }
        d.copy_from_slice(&r);
        let rhs_norm = dot(&rhs, &rhs).sqrt().max(f64::MIN_POSITIVE);
        let mut rr = dot(&r, &r);
        let mut converged = rr.sqrt() <= 1e-13 * rhs_norm;
        for _ in 0..10 * len {
            if converged {
                break;
            }
            apply_operator(&d, eta, a, n, &mut lu);
            for k in 0..len {
                md[k] = if interior(k) { d[k] - lu[k] * half } else { d[k] };
            }
            let alpha = rr / dot(&d, &md);
            for k in 0..len {
                x[k] += d[k] * alpha;
                r[k] -= md[k] * alpha;
            }
            let rr_new = dot(&r, &r);
            converged = rr_new.sqrt() <= 1e-13 * rhs_norm;
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..len {
                d[k] = r[k] + d[k] * beta;
            }
        }
        if !converged {
            return Err(Error::Divergent("conjugate gradients did not converge".into()));
        }
        u.copy_from_slice(&x);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Lagrangian;
    use crate::feynman::InitialCondition;

    #[test]
    fn constant_initial_data_stays_constant_inside() {
        let p = SchrodingerProblem::new(
            Lagrangian::free(1),
            InitialCondition::constant(1, 1.0),
            0.25,
            "flat",
        )
        .unwrap();
        let g = SpaceGrid::new(1, 20.0, 401).unwrap();
        let lat = TimeLattice::new(64, 0.25, 1).unwrap();
        let r = pde_solve(&p, &g, &lat, WLogDerivativeMode::Euclidean).unwrap();
        for (q, v) in r.points.iter().zip(&r.values) {
            if q[0].abs() < 10.0 {
                assert!((v.re - 1.0).abs() < 1e-6 && v.im == 0.0, "{q:?} {v}");
            }
        }
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn real_time_evolution_preserves_norm() {
        let p = SchrodingerProblem::new(
            Lagrangian::harmonic(1, 1.0),
            InitialCondition::gaussian(vec![0.5], 0.7),
            1.0,
            "packet",
        )
        .unwrap();
        let g = SpaceGrid::new(1, 10.0, 201).unwrap();
        let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let initial: Vec<Complex64> = g.points().iter().map(|q| p.f0.eval(q)).collect();
        let lat = TimeLattice::new(50, 1.0, 1).unwrap();
        let r = pde_solve(&p, &g, &lat, WLogDerivativeMode::RealTime).unwrap();
        assert!((norm(&r.values) / norm(&initial) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_separable_heat_flow() {
        // Crank-Nicolson does not factor across axes, so products of 1-D
        // solutions agree only up to O(dt^2)
        let f0 = InitialCondition::gaussian(vec![0.0, 0.0], 0.6);
        let p2 = SchrodingerProblem::new(Lagrangian::free(2), f0, 0.2, "2d").unwrap();
        let p1 = SchrodingerProblem::new(
            Lagrangian::free(1),
            InitialCondition::gaussian(vec![0.0], 0.6),
            0.2,
            "1d",
        )
        .unwrap();
        let g2 = SpaceGrid::new(2, 5.0, 51).unwrap();
        let g1 = SpaceGrid::new(1, 5.0, 51).unwrap();
        let r2 = pde_solve(&p2, &g2, &TimeLattice::new(40, 0.2, 2).unwrap(), WLogDerivativeMode::Euclidean).unwrap();
        let r1 = pde_solve(&p1, &g1, &TimeLattice::new(40, 0.2, 1).unwrap(), WLogDerivativeMode::Euclidean).unwrap();
        for i in 0..51 {
            for j in 0..51 {
                let want = r1.values[i] * r1.values[j];
                assert!((r2.values[i * 51 + j] - want).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn rejects_mismatched_time() {
        let p = SchrodingerProblem::new(
            Lagrangian::free(1),
            InitialCondition::constant(1, 1.0),
            0.5,
            "flat",
        )
        .unwrap();
        let g = SpaceGrid::new(1, 4.0, 11).unwrap();
        let lat = TimeLattice::new(4, 1.0, 1).unwrap();
        assert!(pde_solve(&p, &g, &lat, WLogDerivativeMode::Euclidean).is_err());
    }
}
