//! Seedable random streams and the variate generators used by the sampler.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed and positioned
//! on a 64-bit stream id. The sampler derives stream ids from
//! `(iteration, step, unit)` so that each block of a sweep consumes its own
//! sequence, independent of how the blocks are scheduled.

mod polya_gamma;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub use polya_gamma::{sample_polya_gamma, PolyaGamma};

/// A reproducible random sequence identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream for a keyed sub-block, e.g. `(iteration, step, unit)`.
    pub fn keyed(seed: u64, key: &[u64]) -> Self {
        Self::new(seed, stream_key(key))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Folds a key into a stream id with the SplitMix64 finalizer.
pub fn stream_key(key: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    key.iter().fold(0x9e37_79b9_7f4a_7c15, |acc, &k| {
        mix(acc.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix(k))
    })
}

/// `log(sum(exp(x)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let mut total = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w.is_nan() || w < 0.0 {
            return Err(Error::Sampling(format!(
                "invalid categorical weight {w} at {j}"
            )));
        }
        total += w;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Sampling(format!(
            "categorical weights must have a positive finite sum, got {total}"
        )));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = j;
            if target < acc {
                return Ok(j);
            }
        }
    }
    Ok(last)
}

/// Draws an index from unnormalized log-weights, normalizing with the
/// log-sum-exp shift.
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    if let Some(j) = log_weights.iter().position(|w| w.is_nan()) {
        return Err(Error::Sampling(format!("NaN log-weight at {j}")));
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Sampling("all log-weights are -inf".into()));
    }
    if max == f64::INFINITY {
        return Err(Error::Sampling("infinite log-weight".into()));
    }
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    sample_categorical(&weights, rng)
}

pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::Precondition(format!(
            "gamma needs positive finite shape and rate, got ({shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Precondition(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

/// Log of a unit-rate gamma draw; stays finite for very small shapes.
fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).unwrap().sample(rng).ln()
    } else {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        let g = Gamma::new(shape + 1.0, 1.0).unwrap().sample(rng).ln();
        let u: f64 = rng.random::<f64>();
        g + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::Precondition(
            "dirichlet needs at least one parameter".into(),
        ));
    }
    if let Some(a) = alpha.iter().find(|&&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::Precondition(format!(
            "dirichlet parameters must be positive, got {a}"
        )));
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| sample_log_gamma(a, rng)).collect();
    let norm = log_sum_exp(&logs);
    let mut p: Vec<f64> = logs.iter().map(|&g| (g - norm).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Ok(p)
}

pub fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_gaussian<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::Precondition(format!(
            "gaussian needs finite mean and positive variance, got ({mean}, {variance})"
        )));
    }
    Ok(mean + variance.sqrt() * sample_standard_normal(rng))
}

/// Independent Gaussian draws with the given means and variances.
pub fn sample_gaussian_diag<R: Rng + ?Sized>(
    means: &[f64],
    variances: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if means.len() != variances.len() {
        return Err(Error::Dimension(format!(
            "{} means but {} variances",
            means.len(),
            variances.len()
        )));
    }
    means
        .iter()
        .zip(variances)
        .map(|(&m, &v)| sample_gaussian(m, v, rng))
        .collect()
}

/// Draws from `N(Q^{-1} eta, Q^{-1})` given the precision `Q` and the
/// linear term `eta`. Returns `(draw, mean)`.
pub fn sample_gaussian_canonical<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    eta: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dim = precision.nrows();
    if precision.ncols() != dim || eta.len() != dim {
        return Err(Error::Dimension(format!(
            "precision is {}x{}, linear term has length {}",
            precision.nrows(),
            precision.ncols(),
            eta.len()
        )));
    }
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("precision matrix is not positive definite".into()))?;
    let mean = chol.solve(eta);
    // x = mean + L^{-T} z has covariance (L L^T)^{-1}
    let z = DVector::from_fn(dim, |_, _| sample_standard_normal(rng));
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    Ok((&mean + offset, mean))
}

/// Multinomial counts of `n` trials over `probs`, by sequential binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(n: u32, probs: &[f64], rng: &mut R) -> Result<Vec<u32>> {
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Precondition(
            "multinomial probabilities must be finite and non-negative".into(),
        ));
    }
    let mut rest: f64 = probs.iter().sum();
    if !(rest > 0.0) {
        return Err(Error::Precondition(
            "multinomial probabilities sum to zero".into(),
        ));
    }
    let mut left = n as u64;
    let mut out = vec![0u32; probs.len()];
    for (c, &p) in out.iter_mut().zip(probs) {
        if left == 0 {
            break;
        }
        let q = (p / rest).clamp(0.0, 1.0);
        let x = Binomial::new(left, q)
            .map_err(|e| Error::Precondition(format!("binomial({left}, {q}): {e}")))?
            .sample(rng);
        *c = x as u32;
        left -= x;
        rest -= p;
    }
    if left > 0 {
        // Rounding left mass unassigned; give it to the last positive cell.
        if let Some(j) = probs.iter().rposition(|&p| p > 0.0) {
            out[j] += left as u32;
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod moments {
    /// Mean and standard error of the mean.
    pub fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    /// Sample variance and its standard error, `sqrt((m4 - s^4) / n)`.
    pub fn var_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        (var, ((m4 - var * var) / n).sqrt())
    }

    pub fn within(value: f64, target: f64, se: f64, k: f64) -> bool {
        (value - target).abs() <= k * se
    }
}

#[cfg(test)]
mod tests {
    use super::moments::*;
    use super::*;

    const N: usize = 100_000;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(7, 3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(7, 3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RngStream::new(7, 4);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(stream_key(&[1, 2, 3]), stream_key(&[1, 3, 2]));
        assert_ne!(stream_key(&[0]), stream_key(&[0, 0]));
    }

    #[test]
    fn categorical_examples() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], &mut rng).unwrap(), 1);
        }
        let xs: Vec<f64> = (0..N)
            .map(|_| sample_categorical(&[1.0, 1.0], &mut rng).unwrap() as f64)
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(within(m, 0.5, se, 4.0), "{m}");

        let xs: Vec<f64> = (0..N)
            .map(|_| sample_categorical_log(&[0.0, 3f64.ln()], &mut rng).unwrap() as f64)
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(within(m, 0.75, se, 4.0), "{m}");
    }

    #[test]
    fn categorical_errors() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(sample_categorical(&[f64::NAN, 1.0], &mut rng).is_err());
        assert!(sample_categorical_log(&[f64::NEG_INFINITY; 3], &mut rng).is_err());
        // Log weights far below underflow still sample correctly.
        assert_eq!(
            sample_categorical_log(&[-2000.0, -1e6], &mut rng).unwrap(),
            0
        );
    }

    #[test]
    fn dirichlet_moments_and_support() {
        let mut rng = RngStream::new(2, 0);
        let draws: Vec<Vec<f64>> = (0..N)
            .map(|_| sample_dirichlet(&[2.0, 1.0, 1.0], &mut rng).unwrap())
            .collect();
        for d in &draws {
            assert!(d.iter().all(|&x| x >= 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for (j, target) in [0.5, 0.25, 0.25].into_iter().enumerate() {
            let xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let (m, se) = mean_se(&xs);
            assert!(within(m, target, se, 4.0), "component {j}: {m}");
        }
        let xs: Vec<f64> = (0..N)
            .map(|_| sample_dirichlet(&[1.0, 1.0], &mut rng).unwrap()[0])
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(within(m, 0.5, se, 4.0));
    }

    #[test]
    fn dirichlet_tiny_parameters_stay_on_simplex() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..1000 {
            let d = sample_dirichlet(&[1.0 / 15.0; 15], &mut rng).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
        assert!(sample_dirichlet(&[1.0, 0.0], &mut rng).is_err());
        assert!(sample_dirichlet(&[1.0, -1.0], &mut rng).is_err());
    }

    #[test]
    fn multinomial_counts_and_moments() {
        let mut rng = RngStream::new(31, 0);
        let p = [0.5, 0.0, 0.2, 0.3];
        let mut first = Vec::new();
        for _ in 0..20_000 {
            let x = sample_multinomial(40, &p, &mut rng).unwrap();
            assert_eq!(x.iter().sum::<u32>(), 40);
            assert_eq!(x[1], 0);
            first.push(x[2] as f64);
        }
        let (m, se) = mean_se(&first);
        assert!(within(m, 8.0, se, 4.0), "{m}");
        assert_eq!(
            sample_multinomial(7, &[0.0, 1.0], &mut rng).unwrap(),
            vec![0, 7]
        );
        assert!(sample_multinomial(3, &[0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn gamma_moments() {
        let mut rng = RngStream::new(4, 0);
        let xs: Vec<f64> = (0..N)
            .map(|_| sample_gamma(2.5, 1.0, &mut rng).unwrap())
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(within(m, 2.5, se, 4.0), "{m}");
        let xs: Vec<f64> = (0..N)
            .map(|_| sample_gamma(1.0, 1.0, &mut rng).unwrap())
            .collect();
        let (m, se) = mean_se(&xs);
        assert!(within(m, 1.0, se, 4.0), "{m}");
        let xs: Vec<f64> = (0..N)
            .map(|_| sample_gamma(3.5, 2.0, &mut rng).unwrap())
            .collect();
        let (v, se) = var_se(&xs);
        assert!(within(v, 0.875, se, 4.0), "{v}");
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(5, 0);
        let xs: Vec<f64> = (0..N)
            .map(|_| sample_gaussian(0.0, 10.0, &mut rng).unwrap())
            .collect();
        let (v, se) = var_se(&xs);
        assert!(within(v, 10.0, se, 4.0), "{v}");
        assert!(sample_gaussian(0.0, 0.0, &mut rng).is_err());
    }

    fn empirical_cov(draws: &[DVector<f64>]) -> DMatrix<f64> {
        let n = draws.len() as f64;
        let dim = draws[0].len();
        let mean = draws.iter().fold(DVector::zeros(dim), |a, d| a + d) / n;
        draws.iter().fold(DMatrix::zeros(dim, dim), |a, d| {
            let c = d - &mean;
            a + &c * c.transpose()
        }) / (n - 1.0)
    }

    #[test]
    fn canonical_gaussian_moments() {
        let mut rng = RngStream::new(6, 0);
        let eye = DMatrix::<f64>::identity(3, 3);
        let eta = DVector::zeros(3);
        let draws: Vec<_> = (0..N)
            .map(|_| sample_gaussian_canonical(&eye, &eta, &mut rng).unwrap().0)
            .collect();
        let cov = empirical_cov(&draws);
        // Entries of a sample covariance of N(0, I): var(s_jj) = 2/n, var(s_jk) = 1/n.
        for j in 0..3 {
            for k in 0..3 {
                let target = if j == k { 1.0 } else { 0.0 };
                let se = if j == k {
                    (2.0 / N as f64).sqrt()
                } else {
                    (1.0 / N as f64).sqrt()
                };
                assert!(
                    within(cov[(j, k)], target, se, 4.0),
                    "({j},{k}) {}",
                    cov[(j, k)]
                );
            }
        }

        let prec = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let eta = DVector::from_vec(vec![2.0, -1.0]);
        let draws: Vec<_> = (0..N)
            .map(|_| sample_gaussian_canonical(&prec, &eta, &mut rng).unwrap())
            .collect();
        assert!((draws[0].1[0] - 0.5).abs() < 1e-14 && (draws[0].1[1] + 1.0).abs() < 1e-14);
        for (j, target) in [0.25, 1.0].into_iter().enumerate() {
            let xs: Vec<f64> = draws.iter().map(|d| d.0[j]).collect();
            let (v, se) = var_se(&xs);
            assert!(within(v, target, se, 4.0), "{j}: {v}");
        }
    }

    #[test]
    fn canonical_gaussian_rejects_indefinite() {
        let mut rng = RngStream::new(6, 1);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let eta = DVector::zeros(2);
        assert!(matches!(
            sample_gaussian_canonical(&bad, &eta, &mut rng),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
