//! Uniform time discretization of pinned path spaces.
//!
//! A path on `[0, t]` with values in `R^dim_q` and `psi(0) = 0` is stored by its
//! nodes `tau_j = (j + 1) * dt`, `j = 0..n_steps`, flattened time-major. The same
//! forward-difference operator (with the implicit zero left boundary) defines
//! the Cameron-Martin norm, the kinetic part of the action, and the precision
//! matrix of the discretized Wiener measure.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeLattice {
    n_steps: usize,
    t_final: f64,
    dim_q: usize,
    dt: f64,
}

impl TimeLattice {
    pub fn new(n_steps: usize, t_final: f64, dim_q: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        if dim_q == 0 {
            return Err(Error::InvalidArgument("dim_q must be >= 1".into()));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_final must be positive and finite, got {t_final}"
            )));
        }
        Ok(Self {
            n_steps,
            t_final,
            dim_q,
            dt: t_final / n_steps as f64,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dim_q(&self) -> usize {
        self.dim_q
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of stored path coordinates, `n_steps * dim_q`.
    pub fn state_dim(&self) -> usize {
        self.n_steps * self.dim_q
    }

    /// Node times `tau_j = (j + 1) dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_steps).map(|j| (j + 1) as f64 * self.dt).collect()
    }

    /// Plain forward-difference matrix on flattened coordinates:
    /// `(D psi)_j = psi_j - psi_{j-1}` per coordinate, `psi_{-1} = 0`.
    /// Lower block-bidiagonal with unit diagonal, hence invertible.
    pub fn difference_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let d = self.dim_q;
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                1.0
            } else if r >= d && c == r - d {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// Gram matrix of the Cameron-Martin inner product on stored coordinates.
    pub fn cameron_martin_gram(&self) -> CameronMartinGram {
        let d = self.difference_matrix();
        let gram = d.transpose() * &d / self.dt;
        CameronMartinGram {
            lattice: *self,
            gram,
        }
    }

    /// `(1/dt) D^T (I_n (x) B) D`: the precision of the Gaussian whose energy is
    /// the discretized kinetic term `sum_j b(dpsi_j / dt) dt` with
    /// `b(v) = v^T B v / 2`.
    pub fn kinetic_gram(&self, kinetic: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim_q;
        if kinetic.nrows() != d || kinetic.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: kinetic.nrows(),
            });
        }
        let n = self.state_dim();
        let mut block = DMatrix::zeros(n, n);
        for j in 0..self.n_steps {
            block
                .view_mut((j * d, j * d), (d, d))
                .copy_from(kinetic);
        }
        let diff = self.difference_matrix();
        Ok(diff.transpose() * block * diff / self.dt)
    }
}

/// The Cameron-Martin inner product as an explicit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CameronMartinGram {
    pub lattice: TimeLattice,
    pub gram: DMatrix<f64>,
}

impl CameronMartinGram {
    pub fn inner(&self, f: &Path, g: &Path) -> Result<f64> {
        if f.lattice != self.lattice || g.lattice != self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let fv = nalgebra::DVector::from_column_slice(&f.values);
        let gv = nalgebra::DVector::from_column_slice(&g.values);
        Ok(fv.dot(&(&self.gram * gv)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    lattice: TimeLattice,
    values: Vec<f64>,
}

impl Path {
    pub fn new(lattice: TimeLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: lattice.state_dim(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "path values must be finite, found {bad}"
            )));
        }
        Ok(Self { lattice, values })
    }

    pub fn zeros(lattice: TimeLattice) -> Self {
        Self {
            lattice,
            values: vec![0.0; lattice.state_dim()],
        }
    }

    /// Samples `f(tau_j)` at every node.
    pub fn from_fn(lattice: TimeLattice, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(lattice.state_dim());
        for tau in lattice.times() {
            let v = f(tau);
            if v.len() != lattice.dim_q() {
                return Err(Error::DimensionMismatch {
                    expected: lattice.dim_q(),
                    got: v.len(),
                });
            }
            values.extend(v);
        }
        Self::new(lattice, values)
    }

    pub fn lattice(&self) -> &TimeLattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `psi(tau_j)`.
    pub fn node(&self, j: usize) -> &[f64] {
        let d = self.lattice.dim_q;
        &self.values[j * d..(j + 1) * d]
    }

    /// `psi(t)`, the last stored block.
    pub fn endpoint(&self) -> &[f64] {
        self.node(self.lattice.n_steps - 1)
    }

    /// Entry `j` is `(psi(tau_j) - psi(tau_{j-1})) / dt` with `psi(tau_{-1}) = 0`.
    pub fn derivative(&self) -> Vec<f64> {
        let d = self.lattice.dim_q;
        let dt = self.lattice.dt;
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let prev = if i >= d { self.values[i - d] } else { 0.0 };
                (v - prev) / dt
            })
            .collect()
    }

    /// Discretized `int_0^t <f'(tau), g'(tau)> dtau`.
    pub fn cm_inner(&self, other: &Path) -> Result<f64> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        let dt = self.lattice.dt;
        let sum: f64 = self
            .derivative()
            .iter()
            .zip(other.derivative())
            .map(|(a, b)| a * b)
            .sum();
        Ok(sum * dt)
    }

    pub fn cm_norm_squared(&self) -> f64 {
        let dt = self.lattice.dt;
        self.derivative().iter().map(|v| v * v).sum::<f64>() * dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_spacing() {
        assert_eq!(TimeLattice::new(4, 1.0, 1).unwrap().dt(), 0.25);
        let l = TimeLattice::new(1, 2.0, 3).unwrap();
        assert_eq!(l.dt(), 2.0);
        assert_eq!(l.state_dim(), 3);
        assert_eq!(TimeLattice::new(64, 1.0, 1).unwrap().dt(), 0.015625);
    }

    #[test]
    fn lattice_rejects_bad_arguments() {
        assert!(TimeLattice::new(0, 1.0, 1).is_err());
        assert!(TimeLattice::new(4, 0.0, 1).is_err());
        assert!(TimeLattice::new(4, -1.0, 1).is_err());
        assert!(TimeLattice::new(4, 1.0, 0).is_err());
        assert!(TimeLattice::new(4, f64::NAN, 1).is_err());
    }

    #[test]
    fn dt_times_steps_recovers_t_final() {
        for &(n, t) in &[(3usize, 1.0f64), (7, 0.3), (64, 0.5), (1000, 2.7)] {
            let l = TimeLattice::new(n, t, 1).unwrap();
            let back = l.dt() * n as f64;
            assert!((back - t).abs() <= t * f64::EPSILON, "{n} {t} {back}");
        }
    }

    #[test]
    fn derivative_of_linear_path_is_constant() {
        let l = TimeLattice::new(8, 2.0, 2).unwrap();
        let p = Path::from_fn(l, |tau| vec![3.0 * tau, -0.5 * tau]).unwrap();
        for (i, v) in p.derivative().iter().enumerate() {
            let want = if i % 2 == 0 { 3.0 } else { -0.5 };
            assert!((v - want).abs() < 1e-12);
        }
        assert!(Path::zeros(l).derivative().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_two_step_hand_value() {
        let l = TimeLattice::new(2, 1.0, 1).unwrap();
        let p = Path::new(l, vec![1.0, 1.0]).unwrap();
        assert_eq!(p.derivative(), vec![2.0, 0.0]);
    }

    #[test]
    fn cm_norm_of_identity_path_is_t() {
        for n in [1, 2, 5, 64] {
            let l = TimeLattice::new(n, 1.7, 1).unwrap();
            let p = Path::from_fn(l, |tau| vec![tau]).unwrap();
            assert!((p.cm_inner(&p).unwrap() - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn cm_inner_two_step_brute_force() {
        // f = tau, g = tau^2 at tau = 0.5, 1: increments (0.5, 0.5) and (0.25, 0.75)
        let l = TimeLattice::new(2, 1.0, 1).unwrap();
        let f = Path::from_fn(l, |tau| vec![tau]).unwrap();
        let g = Path::from_fn(l, |tau| vec![tau * tau]).unwrap();
        let brute = (0.5 / 0.5) * (0.25 / 0.5) * 0.5 + (0.5 / 0.5) * (0.75 / 0.5) * 0.5;
        assert!((f.cm_inner(&g).unwrap() - brute).abs() < 1e-15);
        assert_eq!(brute, 1.0);
        assert_eq!(Path::zeros(l).cm_inner(&g).unwrap(), 0.0);
    }

    #[test]
    fn lattice_mismatch_is_rejected() {
        let a = TimeLattice::new(2, 1.0, 1).unwrap();
        let b = TimeLattice::new(2, 2.0, 1).unwrap();
        assert_eq!(
            Path::zeros(a).cm_inner(&Path::zeros(b)),
            Err(Error::LatticeMismatch)
        );
    }

    #[test]
    fn path_rejects_non_finite_and_wrong_length() {
        let l = TimeLattice::new(2, 1.0, 1).unwrap();
        assert!(Path::new(l, vec![1.0]).is_err());
        assert!(Path::new(l, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn gram_is_scaled_difference_product_in_one_dimension() {
        let l = TimeLattice::new(5, 1.0, 1).unwrap();
        let g = l.cameron_martin_gram();
        let d = l.difference_matrix();
        let expected = d.transpose() * &d * (1.0 / l.dt());
        assert!((&g.gram - expected).amax() < 1e-12);
        assert!((&g.gram - g.gram.transpose()).amax() == 0.0);
        let eig = g.gram.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn kinetic_gram_with_identity_matches_cm_gram() {
        let l = TimeLattice::new(4, 0.8, 2).unwrap();
        let k = l.kinetic_gram(&DMatrix::identity(2, 2)).unwrap();
        assert!((k - l.cameron_martin_gram().gram).amax() < 1e-12);
    }
}
