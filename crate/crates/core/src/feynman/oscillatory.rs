//! Real-time time-sliced path integral on at most three slices, by nested
//! adaptive Gauss-Kronrod quadrature.
//!
//! With absolute positions `x_j = psi_j + q` and `x_{-1} = q`,
//!
//! ```text
//! u(t, q) = int prod_j sqrt(m / (2 pi i dt)) exp(i m (x_j - x_{j-1})^2 / (2 dt) + i eta(x_{j-1}) dt)
//!           f0(x_{n-1}) dx_0 ... dx_{n-1}
//! ```
//!
//! The integrals converge only conditionally on the real axis. Every variable is
//! moved to the line `x = q + e^{i pi/4} s`, where the kinetic factor becomes the
//! real Gaussian `exp(-m (s_j - s_{j-1})^2 / (2 dt))`; this is legitimate for the
//! entire integrands allowed here (quadratic `eta`, Gaussian-times-polynomial `f0`).

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use super::{InitialCondition, SchrodingerProblem};
use crate::error::{check_dim, Error, Result};
use crate::lattice::TimeLattice;
use crate::poly::Polynomial;

pub const MAX_OSCILLATORY_STEPS: usize = 3;

const REL_TOL: f64 = 1e-11;
const ABS_TOL: f64 = 1e-14;
const MAX_INTERVALS: usize = 400;

/// Value and accumulated error bound of the nested quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatoryValue {
    pub value: Complex64,
    pub error_bound: f64,
    pub evaluations: usize,
}

/// Real-time propagator of a free particle of mass `m` from `f0 = exp(-(x - c)^2 / (2 sigma^2))`.
pub fn fresnel_free_particle(mass: f64, sigma: f64, center: f64, t: f64, q: f64) -> Complex64 {
    let spread = Complex64::new(sigma * sigma, t / mass);
    let r = q - center;
    (Complex64::new(sigma * sigma, 0.0) / spread).sqrt() * (-(r * r) / (spread * 2.0)).exp()
}

fn complex_poly(p: &Polynomial, z: Complex64) -> Complex64 {
    p.terms()
        .iter()
        .map(|t| {
            t.powers
                .iter()
                .fold(Complex64::new(t.coef, 0.0), |acc, &(_, k)| acc * z.powu(k))
        })
        .sum()
}

pub fn oscillatory_check(
    p: &SchrodingerProblem,
    q_point: f64,
    lattice: &TimeLattice,
) -> Result<OscillatoryValue> {
    check_dim(1, p.dim_q())?;
    check_dim(1, lattice.dim_q())?;
    let n = lattice.n_steps();
    if n > MAX_OSCILLATORY_STEPS {
        return Err(Error::InvalidArgument(format!(
            "oscillatory quadrature handles at most {MAX_OSCILLATORY_STEPS} slices, got {n}"
        )));
    }
    if (lattice.t_final() - p.t_final).abs() > 1e-12 * p.t_final {
        return Err(Error::InvalidArgument("lattice and problem times differ".into()));
    }
    let pot = p.lagrangian.quadratic_potential().ok_or_else(|| {
        Error::Unsupported("oscillatory quadrature needs a quadratic eta".into())
    })?;
    let InitialCondition::GaussianPolynomial {
        center,
        precision,
        polynomial,
    } = &p.f0
    else {
        return Err(Error::Unsupported(
            "oscillatory quadrature needs a Gaussian-times-polynomial f0".into(),
        ));
    };
    let mass = p.lagrangian.kinetic_matrix()[(0, 0)];
    let dt = lattice.dt();
    let (h, g, c) = (pot.hessian[(0, 0)], pot.linear[0], pot.constant);
    let eta = |z: Complex64| z * z * (0.5 * h) + z * g + c;
    let (lambda, c0) = (precision[(0, 0)], center[0]);
    // f0 = poly * exp(f0_exponent); the exponent is merged with the kinetic
    // one before exponentiating, since either alone can overflow on the contour
    let f0_exponent = |z: Complex64| {
        let r = z - c0;
        -(r * r) * (0.5 * lambda)
    };
    let rot = Complex64::from_polar(1.0, FRAC_PI_4);
    // sqrt(m / (2 pi i dt)) * e^{i pi / 4}: real after the contour rotation
    let norm = (mass / (2.0 * PI * dt)).sqrt();
    let scale = (dt / mass).sqrt();
    let mut evaluations = 0usize;

    // integrates over s_level given s_0..s_{level-1}; the error adds the
    // Kronrod estimate to twice the largest inner error times the map's Jacobian
    fn nested(
        level: usize,
        n: usize,
        prefix: &mut Vec<f64>,
        leaf: &mut dyn FnMut(&[f64]) -> Complex64,
        scale: f64,
    ) -> (Complex64, f64) {
        let mut inner_max: f64 = 0.0;
        let mut integrand = |u: f64| {
            let s = scale * u / (1.0 - u * u);
            let ds = scale * (1.0 + u * u) / ((1.0 - u * u) * (1.0 - u * u));
            prefix.push(s);
            let v = if level + 1 == n {
                leaf(prefix)
            } else {
                let (v, e) = nested(level + 1, n, prefix, leaf, scale);
                inner_max = inner_max.max(e * ds);
                v
            };
            prefix.pop();
            v * ds
        };
        let (value, err) = adaptive_kronrod(&mut integrand, -1.0, 1.0);
        (value, err + 2.0 * inner_max)
    }

    let mut leaf = |s: &[f64]| {
        evaluations += 1;
        let mut phase = Complex64::new(0.0, 0.0);
        let mut prev_s = 0.0;
        let mut weight = 1.0;
        for (j, &sj) in s.iter().enumerate() {
            let prev_x = Complex64::new(q_point, 0.0) + rot * prev_s;
            let ds = sj - prev_s;
            weight *= norm;
            phase += Complex64::new(-mass * ds * ds / (2.0 * dt), 0.0);
            let left = if j == 0 { Complex64::new(q_point, 0.0) } else { prev_x };
            phase += Complex64::i() * eta(left) * dt;
            prev_s = sj;
        }
        let end = Complex64::new(q_point, 0.0) + rot * prev_s;
        complex_poly(polynomial, end) * (phase + f0_exponent(end)).exp() * weight
    };
    let mut prefix = Vec::with_capacity(n);
    let (value, error_bound) = nested(0, n, &mut prefix, &mut leaf, scale);
    Ok(OscillatoryValue {
        value,
        error_bound,
        evaluations,
    })
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod_15(f: &mut dyn FnMut(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += sum * WGK[j];
        if j % 2 == 1 {
            gauss += sum * WG[j / 2];
        }
    }
    ((kronrod * half), ((kronrod - gauss) * half).norm())
}

/// Globally adaptive bisection of the interval with the largest error estimate.
fn adaptive_kronrod(f: &mut dyn FnMut(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let mut intervals: Vec<(f64, f64, Complex64, f64)> = Vec::new();
    let pieces = 8;
    let width = (b - a) / pieces as f64;
    for k in 0..pieces {
        let (lo, hi) = (a + k as f64 * width, a + (k + 1) as f64 * width);
        let (v, e) = kronrod_15(f, lo, hi);
        intervals.push((lo, hi, v, e));
    }
    loop {
        let total: Complex64 = intervals.iter().map(|iv| iv.2).sum();
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        if error <= ABS_TOL.max(REL_TOL * total.norm()) || intervals.len() >= MAX_INTERVALS {
            return (total, error);
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod_15(f, lo, mid);
        let (v2, e2) = kronrod_15(f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}
