//! Deterministic numerical substrate: stable reductions, seeded randomness,
//! and correlated-Gaussian batch sampling.
//!
//! Everything here is pure given an explicit [`SeededRng`]; there is no hidden
//! global randomness. The generator is ChaCha8 keyed through
//! `SeedableRng::seed_from_u64`, and normal variates come from the ziggurat
//! sampler in `rand_distr`. Both are fixed so that a seed produces the same
//! stream on every platform.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Dense row-major matrix of 64-bit floats.
pub type Matrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("logsumexp of an empty list is undefined")]
    EmptyInput,
    #[error("correlation must lie in [0, 1), got {0}")]
    InvalidCorrelation(f64),
    #[error("dimension and batch counts must be at least 1")]
    EmptyShape,
}

/// Deterministic random stream.
///
/// Two streams built from the same seed yield bitwise-identical samples, so
/// every experiment in this crate can be replayed exactly.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed this stream was created with (the counter state is not exposed).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent stream; `label` separates consumers that must
    /// not share a sample sequence.
    pub fn fork(&self, label: u64) -> Self {
        Self::new(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(label))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn uniform_index(&mut self, bound: usize) -> usize {
        self.inner.random_range(0..bound)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..hi)
    }
}

impl rand::RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// log Σ exp(vᵢ), computed with a max shift so large magnitudes cannot
/// overflow. Exact for a single element.
///
/// ```
/// use micontrast::numerics::logsumexp;
/// assert_eq!(logsumexp(&[0.0]).unwrap(), 0.0);
/// let huge = logsumexp(&[1000.0, 1000.0]).unwrap();
/// assert!((huge - (1000.0 + 2.0_f64.ln())).abs() < 1e-12);
/// ```
pub fn logsumexp(values: &[f64]) -> Result<f64, NumericsError> {
    if values.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    Ok(logsumexp_slice(values))
}

/// Max-shifted logsumexp over a nonempty slice; callers guarantee nonemptiness.
pub(crate) fn logsumexp_slice(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        // all -inf (empty weights); exp(-inf) sums to 0
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Paired batches `(x, y)` of shape `batch × d`, each dimension an
/// independent zero-mean unit-variance pair with correlation `rho`.
///
/// Generated as `y = rho·x + sqrt(1 − rho²)·z` with `x`, `z` standard normal.
pub fn sample_correlated_gaussian(
    rng: &mut SeededRng,
    d: usize,
    rho: f64,
    batch: usize,
) -> Result<(Matrix, Matrix), NumericsError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(NumericsError::InvalidCorrelation(rho));
    }
    if d == 0 || batch == 0 {
        return Err(NumericsError::EmptyShape);
    }
    let noise = (1.0 - rho * rho).sqrt();
    let mut x = Matrix::zeros((batch, d));
    let mut y = Matrix::zeros((batch, d));
    for i in 0..batch {
        for k in 0..d {
            let xv = rng.standard_normal();
            let zv = rng.standard_normal();
            x[[i, k]] = xv;
            y[[i, k]] = rho * xv + noise * zv;
        }
    }
    Ok((x, y))
}

/// Uniform row indices (with replacement) for marginal resampling: entry
/// (i, j) is the source row of the j-th resample attached to row i. Drawn in
/// row-major order, so [`marginal_shuffle`] and index-based consumers see the
/// same stream.
pub fn resample_indices(rng: &mut SeededRng, n_rows: usize, copies: usize) -> Array2<usize> {
    assert!(copies >= 1, "copies must be at least 1");
    assert!(n_rows >= 1, "cannot resample from an empty matrix");
    let mut idx = Array2::<usize>::zeros((n_rows, copies));
    for i in 0..n_rows {
        for j in 0..copies {
            idx[[i, j]] = rng.uniform_index(n_rows);
        }
    }
    idx
}

/// Rows resampled uniformly (with replacement) from `y`, simulating draws
/// from the marginal distribution of `y`'s rows.
///
/// The output has `copies · nrows(y)` rows; slot `i·copies + j` holds the
/// j-th resample attached to source row `i`.
pub fn marginal_shuffle(rng: &mut SeededRng, y: &Matrix, copies: usize) -> Matrix {
    let idx = resample_indices(rng, y.nrows(), copies);
    let mut out = Matrix::zeros((copies * y.nrows(), y.ncols()));
    for i in 0..y.nrows() {
        for j in 0..copies {
            out.row_mut(i * copies + j).assign(&y.row(idx[[i, j]]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logsumexp_single_element_is_exact() {
        assert_eq!(logsumexp(&[0.0]).unwrap(), 0.0);
        assert_eq!(logsumexp(&[-3.5]).unwrap(), -3.5);
    }

    #[test]
    fn logsumexp_identical_terms() {
        let two = 2.0_f64.ln();
        let got = logsumexp(&[two, two]).unwrap();
        assert!((got - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_large_inputs_do_not_overflow() {
        let got = logsumexp(&[1000.0, 1000.0]).unwrap();
        let expected = 1000.0 + 2.0_f64.ln();
        assert!(got.is_finite());
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_empty_is_domain_error() {
        assert!(matches!(logsumexp(&[]), Err(NumericsError::EmptyInput)));
    }

    proptest! {
        #[test]
        fn logsumexp_bracketed_by_max(v in proptest::collection::vec(-50.0..50.0f64, 1..20)) {
            let lse = logsumexp(&v).unwrap();
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lse >= max - 1e-12);
            prop_assert!(lse <= max + (v.len() as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn correlated_gaussian_matches_requested_rho() {
        // batch·d = 1e5 samples; 3/sqrt(N) tolerance on the empirical correlation
        for &rho in &[0.0, 0.5] {
            let mut rng = SeededRng::new(7);
            let (x, y) = sample_correlated_gaussian(&mut rng, 10, rho, 10_000).unwrap();
            let n = (x.len()) as f64;
            let mean_x = x.sum() / n;
            let mean_y = y.sum() / n;
            let mut cov = 0.0;
            let mut var_x = 0.0;
            let mut var_y = 0.0;
            for (a, b) in x.iter().zip(y.iter()) {
                cov += (a - mean_x) * (b - mean_y);
                var_x += (a - mean_x).powi(2);
                var_y += (b - mean_y).powi(2);
            }
            let corr = cov / (var_x.sqrt() * var_y.sqrt());
            assert!(
                (corr - rho).abs() < 3.0 / n.sqrt(),
                "empirical corr {corr} too far from {rho}"
            );
            // marginal sanity: zero mean, unit variance
            assert!(mean_x.abs() < 4.0 / n.sqrt());
            assert!(mean_y.abs() < 4.0 / n.sqrt());
            assert!((var_x / n - 1.0).abs() < 8.0 / n.sqrt());
            assert!((var_y / n - 1.0).abs() < 8.0 / n.sqrt());
        }
    }

    #[test]
    fn correlated_gaussian_rejects_bad_rho() {
        let mut rng = SeededRng::new(0);
        assert!(sample_correlated_gaussian(&mut rng, 2, 1.0, 4).is_err());
        assert!(sample_correlated_gaussian(&mut rng, 2, -0.1, 4).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        let (xa, ya) = sample_correlated_gaussian(&mut a, 3, 0.3, 5).unwrap();
        let (xb, yb) = sample_correlated_gaussian(&mut b, 3, 0.3, 5).unwrap();
        assert_eq!(xa, xb);
        assert_eq!(ya, yb);

        let sa = marginal_shuffle(&mut a, &ya, 4);
        let sb = marginal_shuffle(&mut b, &yb, 4);
        assert_eq!(sa, sb);
    }

    #[test]
    fn shuffle_single_row_returns_that_row() {
        let mut rng = SeededRng::new(1);
        let y = Matrix::from_shape_vec((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let out = marginal_shuffle(&mut rng, &y, 1);
        assert_eq!(out, y);
    }

    #[test]
    fn shuffle_frequencies_are_uniform() {
        // 1e5 draws over 4 distinct rows: each within 3 sigma of 1/4
        let mut rng = SeededRng::new(11);
        let y = Matrix::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = marginal_shuffle(&mut rng, &y, 25_000);
        let total = out.nrows() as f64;
        let mut counts = [0usize; 4];
        for row in out.rows() {
            counts[row[0] as usize] += 1;
        }
        let sigma = (total * 0.25 * 0.75).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - total * 0.25).abs() < 3.0 * sigma,
                "row frequency {c} outside 3 sigma"
            );
        }
    }
}
