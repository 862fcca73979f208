//! Expectations under a [`GaussianMeasure`].
//!
//! Gauss-Hermite tensor grids certify polynomial identities exactly (a rule of
//! order `n` integrates polynomials of degree `<= 2n - 1` in each variable).
//! Monte Carlo scales to high dimension and always reports a standard error.
//!
//! Monte Carlo work is split into `workers` independent streams. Stream `w`
//! draws from ChaCha8 seeded with `seed` on stream number `w`; partial sums are
//! merged in worker order, so results depend only on `(seed, workers, n)`.

use gauss_quad::GaussHermite;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::GaussianMeasure;

/// Largest dimension for which a tensor Gauss-Hermite grid is accepted.
pub const MAX_GAUSS_HERMITE_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    MonteCarlo,
    GaussHermite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    pub kind: QuadratureKind,
    /// Sample count (Monte Carlo) or order per axis (Gauss-Hermite).
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
}

impl QuadratureSpec {
    pub fn gauss_hermite(order: usize) -> Self {
        Self {
            kind: QuadratureKind::GaussHermite,
            n: order,
            seed: 0,
            workers: 1,
        }
    }

    pub fn monte_carlo(n_samples: usize, seed: u64) -> Self {
        Self {
            kind: QuadratureKind::MonteCarlo,
            n: n_samples,
            seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    /// Same settings on a statistically independent seed.
    pub fn derived(&self, salt: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..*self
        }
    }

    pub fn is_stochastic(&self) -> bool {
        self.kind == QuadratureKind::MonteCarlo
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument(
                "quadrature needs at least one sample/node".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be >= 1".into()));
        }
        if self.kind == QuadratureKind::GaussHermite && dim > MAX_GAUSS_HERMITE_DIM {
            return Err(Error::QuadratureGuard {
                dim,
                max: MAX_GAUSS_HERMITE_DIM,
            });
        }
        Ok(())
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A quadrature value; `std_error` is present exactly when the rule is stochastic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: Option<f64>,
    pub n_evaluations: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: None,
            n_evaluations: 0,
        }
    }

    pub fn std_error_or_zero(&self) -> f64 {
        self.std_error.unwrap_or(0.0)
    }

    /// `|value| / std_error`, infinite for a nonzero deterministic value.
    pub fn z_score(&self) -> f64 {
        match self.std_error {
            Some(se) if se > 0.0 => self.value.abs() / se,
            _ if self.value == 0.0 => 0.0,
            _ => f64::INFINITY,
        }
    }
}

/// Nodes and weights of the probabilists' rule: `sum w_i f(z_i) ~ E f(Z)`, `Z ~ N(0,1)`.
pub fn standard_normal_rule(order: usize) -> Result<Vec<(f64, f64)>> {
    match order {
        0 => Err(Error::InvalidArgument("Gauss-Hermite order must be >= 1".into())),
        1 => Ok(vec![(0.0, 1.0)]),
        _ => {
            let rule = GaussHermite::new(order)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let norm = std::f64::consts::PI.sqrt();
            let sqrt2 = std::f64::consts::SQRT_2;
            let mut pairs: Vec<(f64, f64)> = rule
                .iter()
                .map(|&(x, w)| (x * sqrt2, w / norm))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(pairs)
        }
    }
}

#[derive(Clone, Copy)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Self = Self {
        count: 0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Self { count, mean, m2 }
    }

    fn estimate(&self) -> Estimate {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        Estimate {
            value: self.mean,
            std_error: Some((var / self.count as f64).sqrt()),
            n_evaluations: self.count,
        }
    }
}

/// Integrates the `n_out` components written by `f(x, out)` against `measure`.
pub fn integrate_many<F>(
    measure: &GaussianMeasure,
    spec: &QuadratureSpec,
    n_out: usize,
    f: F,
) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    spec.validate(measure.dim())?;
    match spec.kind {
        QuadratureKind::GaussHermite => gauss_hermite(measure, spec.n, n_out, &f),
        QuadratureKind::MonteCarlo => monte_carlo(measure, spec, n_out, &f),
    }
}

pub fn integrate<F>(measure: &GaussianMeasure, spec: &QuadratureSpec, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut est = integrate_many(measure, spec, 1, |x, out| out[0] = f(x))?;
    Ok(est.remove(0))
}

fn gauss_hermite(
    measure: &GaussianMeasure,
    order: usize,
    n_out: usize,
    f: &(dyn Fn(&[f64], &mut [f64]) + Sync),
) -> Result<Vec<Estimate>> {
    let dim = measure.dim();
    let rule = standard_normal_rule(order)?;
    let total = order.pow(dim as u32);
    let mut index = vec![0usize; dim];
    let mut z = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    let mut out = vec![0.0; n_out];
    let mut acc = vec![0.0; n_out];
    for _ in 0..total {
        let mut weight = 1.0;
        for (k, &i) in index.iter().enumerate() {
            z[k] = rule[i].0;
            weight *= rule[i].1;
        }
        measure.transform_standard(&z, &mut x);
        out.iter_mut().for_each(|o| *o = 0.0);
        f(&x, &mut out);
        for (a, o) in acc.iter_mut().zip(&out) {
            *a += weight * o;
        }
        // odometer increment
        for slot in index.iter_mut() {
            *slot += 1;
            if *slot < order {
                break;
            }
            *slot = 0;
        }
    }
    Ok(acc
        .into_iter()
        .map(|value| Estimate {
            value,
            std_error: None,
            n_evaluations: total,
        })
        .collect())
}

/// Sample counts per worker: the first `n % workers` streams take one extra draw.
pub(crate) fn worker_shares(n: usize, workers: usize) -> Vec<usize> {
    (0..workers)
        .map(|w| n / workers + usize::from(w < n % workers))
        .collect()
}

pub(crate) fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

fn monte_carlo(
    measure: &GaussianMeasure,
    spec: &QuadratureSpec,
    n_out: usize,
    f: &(dyn Fn(&[f64], &mut [f64]) + Sync),
) -> Result<Vec<Estimate>> {
    let dim = measure.dim();
    let shares = worker_shares(spec.n, spec.workers);
    let partials: Vec<Vec<Moments>> = shares
        .par_iter()
        .enumerate()
        .map(|(worker, &share)| {
            let mut rng = worker_rng(spec.seed, worker);
            let mut z = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            let mut out = vec![0.0; n_out];
            let mut moments = vec![Moments::EMPTY; n_out];
            for _ in 0..share {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                measure.transform_standard(&z, &mut x);
                out.iter_mut().for_each(|o| *o = 0.0);
                f(&x, &mut out);
                for (m, &o) in moments.iter_mut().zip(&out) {
                    m.push(o);
                }
            }
            moments
        })
        .collect();
    let mut total = vec![Moments::EMPTY; n_out];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t = t.merge(p);
        }
    }
    Ok(total.iter().map(Moments::estimate).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_reproduces_normal_moments() {
        let rule = standard_normal_rule(5).unwrap();
        let moment = |p: i32| rule.iter().map(|(z, w)| w * z.powi(p)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-12);
        assert!((moment(6) - 15.0).abs() < 1e-11);
        assert!((moment(8) - 105.0).abs() < 1e-10);
        assert!(moment(3).abs() < 1e-12);
    }

    #[test]
    fn order_one_rule_is_the_mean() {
        assert_eq!(standard_normal_rule(1).unwrap(), vec![(0.0, 1.0)]);
        assert!(standard_normal_rule(0).is_err());
    }

    #[test]
    fn worker_shares_cover_all_samples() {
        assert_eq!(worker_shares(10, 3), vec![4, 3, 3]);
        assert_eq!(worker_shares(2, 4), vec![1, 1, 0, 0]);
        assert_eq!(worker_shares(9, 1), vec![9]);
    }

    #[test]
    fn merged_moments_match_sequential() {
        let data: Vec<f64> = (0..57).map(|i| ((i * 37) % 11) as f64 - 3.5).collect();
        let mut seq = Moments::EMPTY;
        data.iter().for_each(|&x| seq.push(x));
        let (a, b) = data.split_at(20);
        let mut ma = Moments::EMPTY;
        let mut mb = Moments::EMPTY;
        a.iter().for_each(|&x| ma.push(x));
        b.iter().for_each(|&x| mb.push(x));
        let merged = ma.merge(mb);
        assert!((merged.mean - seq.mean).abs() < 1e-13);
        assert!((merged.m2 - seq.m2).abs() < 1e-10);
    }

    #[test]
    fn guard_rejects_large_gauss_hermite() {
        let m = GaussianMeasure::standard(7);
        let err = integrate(&m, &QuadratureSpec::gauss_hermite(2), |_| 1.0).unwrap_err();
        assert_eq!(err, Error::QuadratureGuard { dim: 7, max: 6 });
    }

    #[test]
    fn z_score_conventions() {
        assert_eq!(Estimate::exact(0.0).z_score(), 0.0);
        assert!(Estimate::exact(1e-20).z_score().is_infinite());
        let e = Estimate {
            value: -0.3,
            std_error: Some(0.1),
            n_evaluations: 10,
        };
        assert!((e.z_score() - 3.0).abs() < 1e-12);
    }
}
