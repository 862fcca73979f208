//! Sparse multivariate polynomials with exact gradients, and the seeded
//! library of `(phi, h)` pairs used to exercise integration by parts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flows::VectorField;
use crate::measures::TestFunction;
use crate::quadrature::splitmix64;

/// `coef * prod_i x[var_i]^pow_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<(usize, u32)>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.powers.iter().map(|&(_, p)| p).sum()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.powers
            .iter()
            .fold(self.coef, |acc, &(i, p)| acc * x[i].powi(p as i32))
    }

    fn add_gradient(&self, x: &[f64], grad: &mut [f64]) {
        for (slot, &(i, p)) in self.powers.iter().enumerate() {
            if p == 0 {
                continue;
            }
            let mut d = self.coef * p as f64 * x[i].powi(p as i32 - 1);
            for (other, &(j, q)) in self.powers.iter().enumerate() {
                if other != slot {
                    d *= x[j].powi(q as i32);
                }
            }
            grad[i] += d;
        }
    }

    fn partial(&self, x: &[f64], var: usize) -> f64 {
        let p = match self.powers.iter().find(|&&(i, _)| i == var) {
            Some(&(_, p)) if p > 0 => p,
            _ => return 0.0,
        };
        self.powers.iter().fold(self.coef, |acc, &(i, q)| {
            if i == var {
                acc * p as f64 * x[i].powi(q as i32 - 1)
            } else {
                acc * x[i].powi(q as i32)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            if let Some(&(i, _)) = t.powers.iter().find(|&&(i, _)| i >= dim) {
                return Err(Error::InvalidArgument(format!(
                    "variable index {i} out of range for dimension {dim}"
                )));
            }
            let mut vars: Vec<usize> = t.powers.iter().map(|&(i, _)| i).collect();
            vars.sort_unstable();
            vars.dedup();
            if vars.len() != t.powers.len() {
                return Err(Error::InvalidArgument("repeated variable in monomial".into()));
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            dim,
            terms: vec![Monomial {
                coef: c,
                powers: vec![],
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim];
        for t in &self.terms {
            t.add_gradient(x, &mut grad);
        }
        grad
    }

    pub fn partial(&self, x: &[f64], var: usize) -> f64 {
        self.terms.iter().map(|t| t.partial(x, var)).sum()
    }

    /// Random polynomial: a constant plus `n_terms` monomials of degree
    /// `1..=max_degree` with coefficients uniform in `[-1, 1]`.
    pub fn random(dim: usize, max_degree: u32, n_terms: usize, rng: &mut impl Rng) -> Self {
        let mut terms = vec![Monomial {
            coef: rng.random_range(-1.0..1.0),
            powers: vec![],
        }];
        for _ in 0..n_terms {
            let degree = rng.random_range(1..=max_degree);
            let mut powers: Vec<(usize, u32)> = Vec::new();
            for _ in 0..degree {
                let var = rng.random_range(0..dim);
                match powers.iter_mut().find(|(i, _)| *i == var) {
                    Some((_, p)) => *p += 1,
                    None => powers.push((var, 1)),
                }
            }
            terms.push(Monomial {
                coef: rng.random_range(-1.0..1.0),
                powers,
            });
        }
        Self { dim, terms }
    }

    pub fn to_test_function(&self, label: impl Into<String>) -> TestFunction {
        let (v, g) = (self.clone(), self.clone());
        TestFunction::new(self.dim, label, move |x| v.eval(x), move |x| g.gradient(x))
    }
}

/// Vector field with polynomial components.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialField {
    components: Vec<Polynomial>,
}

impl PolynomialField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 || components.iter().any(|c| c.dim != dim) {
            return Err(Error::InvalidArgument(
                "field needs one component per coordinate".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// Sparse random field: each component is a constant plus a few linear and
    /// quadratic monomials, which keeps evaluation cheap in high dimension.
    pub fn random(dim: usize, max_degree: u32, rng: &mut impl Rng) -> Self {
        let components = (0..dim)
            .map(|_| Polynomial::random(dim, max_degree, 2, rng))
            .collect();
        Self { components }
    }

    pub fn to_vector_field(&self, label: impl Into<String>) -> VectorField {
        let dim = self.dim();
        let (e, j, t) = (self.clone(), self.clone(), self.clone());
        VectorField::new(
            dim,
            label,
            move |x| e.components.iter().map(|c| c.eval(x)).collect(),
            move |x| {
                let mut m = nalgebra::DMatrix::zeros(dim, dim);
                for (r, c) in j.components.iter().enumerate() {
                    for (col, g) in c.gradient(x).into_iter().enumerate() {
                        m[(r, col)] = g;
                    }
                }
                m
            },
        )
        .with_trace(move |x| {
            t.components
                .iter()
                .enumerate()
                .map(|(i, c)| c.partial(x, i))
                .sum()
        })
    }
}

/// One `(phi, h)` case of the integration-by-parts library.
#[derive(Debug, Clone)]
pub struct PolynomialPair {
    pub label: String,
    pub phi: Polynomial,
    pub field: PolynomialField,
}

/// `count` reproducible pairs in dimension `dim` with `deg phi <= 4`, `deg h <= 2`.
pub fn ibp_library(dim: usize, count: usize, seed: u64) -> Vec<PolynomialPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ ((dim as u64) << 32)));
    (0..count)
        .map(|i| PolynomialPair {
            label: format!("d{dim}-p{i}"),
            phi: Polynomial::random(dim, 4, 4, &mut rng),
            field: PolynomialField::random(dim, 2, &mut rng),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff;

    #[test]
    fn evaluates_and_differentiates_hand_polynomial() {
        // 2 x0^2 x1 - x1^3 + 0.5
        let p = Polynomial::new(
            2,
            vec![
                Monomial { coef: 2.0, powers: vec![(0, 2), (1, 1)] },
                Monomial { coef: -1.0, powers: vec![(1, 3)] },
                Monomial { coef: 0.5, powers: vec![] },
            ],
        )
        .unwrap();
        let x = [1.5, -2.0];
        assert_eq!(p.eval(&x), 2.0 * 2.25 * -2.0 + 8.0 + 0.5);
        assert_eq!(p.gradient(&x), vec![4.0 * 1.5 * -2.0, 2.0 * 2.25 - 12.0]);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn rejects_out_of_range_and_repeated_variables() {
        let bad = Monomial { coef: 1.0, powers: vec![(2, 1)] };
        assert!(Polynomial::new(2, vec![bad]).is_err());
        let rep = Monomial { coef: 1.0, powers: vec![(0, 1), (0, 1)] };
        assert!(Polynomial::new(2, vec![rep]).is_err());
    }

    #[test]
    fn library_respects_degrees_and_is_reproducible() {
        let a = ibp_library(3, 8, 7);
        let b = ibp_library(3, 8, 7);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.phi, q.phi);
            assert_eq!(p.field, q.field);
            assert!(p.phi.degree() <= 4);
            assert!(p.field.degree() <= 2);
        }
        assert_ne!(ibp_library(3, 1, 8)[0].phi, a[0].phi);
    }

    #[test]
    fn field_jacobian_and_trace_match_differences() {
        let pair = &ibp_library(4, 1, 3)[0];
        let h = pair.field.to_vector_field("h");
        let x = [0.3, -0.8, 1.1, 0.4];
        assert!(h.jacobian_discrepancy(&x).unwrap() < 1e-7);
        let tr = h.jacobian(&x).unwrap().trace();
        assert!((h.jacobian_trace(&x).unwrap() - tr).abs() < 1e-13);
        let phi = pair.phi.to_test_function("phi");
        let fd = numdiff::central_gradient(&|p: &[f64]| phi.value(p), &x, 1e-6);
        assert!(numdiff::relative_discrepancy(&phi.gradient(&x), &fd) < 1e-7);
    }
}
