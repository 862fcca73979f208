//! Central finite differences used by self-checks and fallback Jacobians.

use nalgebra::DMatrix;

/// Step `base * (1 + |x|)` per coordinate.
fn step(base: f64, x: f64) -> f64 {
    base * (1.0 + x.abs())
}

pub fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], base_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(base_step, x[i]);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Column `j` holds the central difference of `f` along coordinate `j`.
pub fn central_jacobian(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    out_dim: usize,
    base_step: f64,
) -> DMatrix<f64> {
    let mut probe = x.to_vec();
    let mut jac = DMatrix::zeros(out_dim, x.len());
    for j in 0..x.len() {
        let h = step(base_step, x[j]);
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        for i in 0..out_dim {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// `max_i |a_i - b_i| / max(1, |a_i|)`.
pub fn relative_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}
