//! Exact and statistical ground truth for the estimator family.
//!
//! The two-point world (`X = Y`, both Bernoulli) admits closed-form estimator
//! statistics: a batch's objective value depends only on a couple of match
//! counts, and those counts are binomial, so the mean and variance of the
//! single-batch estimate can be summed exactly. This gives an independent
//! route to the same quantities the sampled estimators approximate, including
//! the re-weighted CPC value that overshoots the true mutual information.
//!
//! Also here: the correlated-Gaussian MI formula used by the benchmark
//! levels, and Monte-Carlo verifiers for the exchangeability inequalities
//! that the multi-label bound rests on.

use crate::numerics::{Matrix, SeededRng};
use crate::objectives::LogitMatrix;
use rand_distr::{Distribution, Exp, LogNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("alpha {alpha} outside (0, {m}) for m = {m} classes")]
    InvalidAlpha { alpha: f64, m: usize },
    #[error("batch size must be at least {min}, got {got}")]
    BatchTooSmall { min: usize, got: usize },
    #[error("class count m must be at least 2, got {0}")]
    TooFewClasses(usize),
    #[error("correlation must lie in [0, 1), got {0}")]
    InvalidCorrelation(f64),
    #[error("sampler produced a non-positive value {0}; positives are required")]
    NonPositiveSample(f64),
    #[error("sampling batches requires finite logits; this critic scores mismatches at -inf")]
    HardCriticUnsampleable,
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
}

/// The two-point joint distribution `Pr(X=1, Y=1) = p`, `Pr(X=0, Y=0) = 1−p`
/// together with a two-level critic: `match_logit` scores pairs with x = y
/// and `mismatch_logit` pairs with x ≠ y.
///
/// The hard critic of the overshoot example scores mismatches at −∞ (weight
/// exactly zero); any finite `mismatch_logit` gives a soft critic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryWorld {
    pub p: f64,
    pub match_logit: f64,
    pub mismatch_logit: f64,
}

impl BinaryWorld {
    /// Hard critic: matched pairs score 1, mismatched pairs 0.
    pub fn hard(p: f64) -> Result<Self, OracleError> {
        Self::new(p, 0.0, f64::NEG_INFINITY)
    }

    /// Soft critic with finite log-scores for both pair classes.
    pub fn soft(p: f64, match_logit: f64, mismatch_logit: f64) -> Result<Self, OracleError> {
        Self::new(p, match_logit, mismatch_logit)
    }

    fn new(p: f64, match_logit: f64, mismatch_logit: f64) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(OracleError::InvalidProbability(p));
        }
        assert!(
            match_logit.is_finite(),
            "match weight exp(match_logit) must be positive and finite"
        );
        Ok(Self {
            p,
            match_logit,
            mismatch_logit,
        })
    }

    /// Mismatch-to-match score ratio; exactly 0 for the hard critic.
    fn score_ratio(&self) -> f64 {
        (self.mismatch_logit - self.match_logit).exp()
    }

    pub fn is_hard(&self) -> bool {
        self.mismatch_logit == f64::NEG_INFINITY
    }
}

/// Mean and variance of a single-batch empirical estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStats {
    pub mean: f64,
    pub variance: f64,
}

/// True MI of the two-point world: the entropy of the Bernoulli(p) marginal,
/// since X determines Y.
///
/// ```
/// use micontrast::oracles::binary_true_mi;
/// assert!((binary_true_mi(0.5).unwrap() - 2.0_f64.ln()).abs() < 1e-15);
/// assert_eq!(binary_true_mi(0.0).unwrap(), 0.0);
/// ```
pub fn binary_true_mi(p: f64) -> Result<f64, OracleError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(OracleError::InvalidProbability(p));
    }
    let term = |q: f64| if q == 0.0 { 0.0 } else { -q * q.ln() };
    Ok(term(p) + term(1.0 - p))
}

/// Binomial(n, p) probability mass as a dense vector, exact at p ∈ {0, 1}.
fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    if p == 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p == 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    // ln C(n, t) from a cumulative log-factorial table
    let mut ln_fact = vec![0.0; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    for (t, slot) in pmf.iter_mut().enumerate() {
        let ln_choose = ln_fact[n] - ln_fact[t] - ln_fact[n - t];
        *slot = (ln_choose + t as f64 * lp + (n - t) as f64 * lq).exp();
    }
    pmf
}

fn check_alpha(alpha: f64, m: usize) -> Result<f64, OracleError> {
    if m < 2 {
        return Err(OracleError::TooFewClasses(m));
    }
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= m as f64 {
        return Err(OracleError::InvalidAlpha { alpha, m });
    }
    Ok((m as f64 - alpha) / (m as f64 - 1.0))
}

/// Exact mean and variance of the re-weighted CPC estimate on the two-point
/// world, with negatives tied to the other batch labels (m = n).
///
/// A batch with `t` ones contributes
/// `(1/n)·[t·ln(n / (α + β·(t−1+(n−t)·r))) + (n−t)·ln(n / (α + β·(n−t−1+t·r)))]`
/// where `β = (n−α)/(n−1)` and `r` is the mismatch score ratio (0 for the
/// hard critic); `t` is Binomial(n, p) and the empty group convention is
/// `0·ln(·) = 0`.
pub fn binary_cpc_oracle(
    world: &BinaryWorld,
    n: usize,
    alpha: f64,
) -> Result<OracleStats, OracleError> {
    if n < 2 {
        return Err(OracleError::BatchTooSmall { min: 2, got: n });
    }
    let beta = check_alpha(alpha, n)?;
    let r = world.score_ratio();
    let ln_n = (n as f64).ln();
    let pmf = binomial_pmf(n, world.p);

    let batch_value = |t: usize| -> f64 {
        let tf = t as f64;
        let rest = (n - t) as f64;
        let mut acc = 0.0;
        if t > 0 {
            acc += tf * (ln_n - (alpha + beta * ((tf - 1.0) + rest * r)).ln());
        }
        if t < n {
            acc += rest * (ln_n - (alpha + beta * ((rest - 1.0) + tf * r)).ln());
        }
        acc / n as f64
    };

    let mut mean = 0.0;
    let mut second = 0.0;
    for (t, &w) in pmf.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let v = batch_value(t);
        mean += w * v;
        second += w * v * v;
    }
    Ok(OracleStats {
        mean,
        variance: (second - mean * mean).max(0.0),
    })
}

/// Exact mean and variance of the re-weighted ML-CPC estimate on the
/// two-point world, with the n(m−1) negatives drawn independently from the
/// Bernoulli(p) marginal.
///
/// Sufficient statistics: `t` ones among the positives (Binomial(n, p)),
/// `s₁` matching negatives on the x = 1 rows (Binomial(t(m−1), p)) and `s₂`
/// matching negatives on the x = 0 rows (Binomial((n−t)(m−1), 1−p)). Every
/// row of such a batch contributes the same value
/// `ln(nm) − ln(α·n + β·(s + (n(m−1)−s)·r))` with `s = s₁+s₂`.
pub fn binary_mlcpc_oracle(
    world: &BinaryWorld,
    n: usize,
    m: usize,
    alpha: f64,
) -> Result<OracleStats, OracleError> {
    if n < 1 {
        return Err(OracleError::BatchTooSmall { min: 1, got: n });
    }
    let beta = check_alpha(alpha, m)?;
    let r = world.score_ratio();
    let ln_nm = (n as f64 * m as f64).ln();
    let neg_total = n * (m - 1);
    let pos_pmf = binomial_pmf(n, world.p);

    let mut mean = 0.0;
    let mut second = 0.0;
    for (t, &wt) in pos_pmf.iter().enumerate() {
        if wt == 0.0 {
            continue;
        }
        let ones_slots = t * (m - 1);
        let zeros_slots = (n - t) * (m - 1);
        let pmf1 = binomial_pmf(ones_slots, world.p);
        let pmf2 = binomial_pmf(zeros_slots, 1.0 - world.p);
        for (s1, &w1) in pmf1.iter().enumerate() {
            if w1 == 0.0 {
                continue;
            }
            for (s2, &w2) in pmf2.iter().enumerate() {
                if w2 == 0.0 {
                    continue;
                }
                let s = (s1 + s2) as f64;
                let miss = (neg_total - s1 - s2) as f64;
                let v = ln_nm - (alpha * n as f64 + beta * (s + miss * r)).ln();
                let w = wt * w1 * w2;
                mean += w * v;
                second += w * v * v;
            }
        }
    }
    Ok(OracleStats {
        mean,
        variance: (second - mean * mean).max(0.0),
    })
}

/// True MI of a d-dimensional correlated Gaussian with per-dimension
/// correlation `rho`: `−(d/2)·ln(1 − rho²)`.
///
/// ```
/// use micontrast::oracles::gaussian_true_mi;
/// assert_eq!(gaussian_true_mi(5, 0.0).unwrap(), 0.0);
/// let rho = (1.0 - (-0.2_f64).exp()).sqrt();
/// assert!((gaussian_true_mi(20, rho).unwrap() - 2.0).abs() < 1e-12);
/// ```
pub fn gaussian_true_mi(d: usize, rho: f64) -> Result<f64, OracleError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(OracleError::InvalidCorrelation(rho));
    }
    Ok(-(d as f64 / 2.0) * (1.0 - rho * rho).ln())
}

/// Per-dimension correlation that realizes a target MI at dimension d;
/// inverse of [`gaussian_true_mi`].
pub fn rho_for_target_mi(d: usize, target_mi: f64) -> f64 {
    (1.0 - (-2.0 * target_mi / d as f64).exp()).sqrt()
}

/// Distribution of the i.i.d. positive draws fed to the exchangeability
/// verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveSampler {
    /// Exp(1)
    Exponential,
    /// LogNormal(0, 1)
    LogNormal,
}

impl PositiveSampler {
    fn draw(&self, rng: &mut SeededRng) -> f64 {
        match self {
            PositiveSampler::Exponential => Exp::new(1.0).unwrap().sample(rng),
            PositiveSampler::LogNormal => LogNormal::new(0.0, 1.0).unwrap().sample(rng),
        }
    }
}

/// Monte-Carlo estimate (with standard error) of
/// `E[(1/n)·Σᵢ m·Xᵢ / (α·Xᵢ + β·Σⱼ X̄ᵢⱼ)]`
/// over i.i.d. strictly positive draws; i.i.d. collections are exchangeable,
/// so the estimate must fall below 1/α (for α up to 2m/(m+1)) and below 1
/// (for α in [1, m/2]).
pub fn exchangeable_bound_mc(
    rng: &mut SeededRng,
    n: usize,
    m: usize,
    alpha: f64,
    sampler: PositiveSampler,
    trials: usize,
) -> Result<(f64, f64), OracleError> {
    if n < 1 {
        return Err(OracleError::BatchTooSmall { min: 1, got: n });
    }
    let beta = check_alpha(alpha, m)?;
    assert!(trials >= 2, "standard error needs at least 2 trials");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let mut stat = 0.0;
        for _ in 0..n {
            let x = sampler.draw(rng);
            if x <= 0.0 {
                return Err(OracleError::NonPositiveSample(x));
            }
            let mut neg = 0.0;
            for _ in 0..m - 1 {
                let v = sampler.draw(rng);
                if v <= 0.0 {
                    return Err(OracleError::NonPositiveSample(v));
                }
                neg += v;
            }
            stat += m as f64 * x / (alpha * x + beta * neg);
        }
        stat /= n as f64;
        sum += stat;
        sum_sq += stat * stat;
    }
    let mean = sum / trials as f64;
    let var = (sum_sq / trials as f64 - mean * mean).max(0.0);
    Ok((mean, (var / trials as f64).sqrt()))
}

/// Sample one tied-negative batch of the two-point world as a logit matrix
/// (CPC layout, m = n): row i's negatives are the other rows' labels.
///
/// Requires a soft critic; the hard critic's −∞ mismatch logit cannot be
/// represented in a [`LogitMatrix`].
pub fn sample_cpc_batch(
    rng: &mut SeededRng,
    world: &BinaryWorld,
    n: usize,
) -> Result<LogitMatrix, OracleError> {
    if world.is_hard() {
        return Err(OracleError::HardCriticUnsampleable);
    }
    if n < 2 {
        return Err(OracleError::BatchTooSmall { min: 2, got: n });
    }
    let labels: Vec<bool> = (0..n).map(|_| rng.uniform(0.0, 1.0) < world.p).collect();
    let mut logits = Matrix::zeros((n, n));
    for i in 0..n {
        logits[[i, 0]] = world.match_logit;
        let mut col = 1;
        for j in 0..n {
            if j != i {
                logits[[i, col]] = if labels[i] == labels[j] {
                    world.match_logit
                } else {
                    world.mismatch_logit
                };
                col += 1;
            }
        }
    }
    Ok(LogitMatrix::new(logits)?)
}

/// Sample one independent-negative batch of the two-point world as a logit
/// matrix (ML-CPC layout): every negative label is a fresh Bernoulli(p) draw.
pub fn sample_mlcpc_batch(
    rng: &mut SeededRng,
    world: &BinaryWorld,
    n: usize,
    m: usize,
) -> Result<LogitMatrix, OracleError> {
    if world.is_hard() {
        return Err(OracleError::HardCriticUnsampleable);
    }
    if m < 2 {
        return Err(OracleError::TooFewClasses(m));
    }
    let mut logits = Matrix::zeros((n, m));
    for i in 0..n {
        let label = rng.uniform(0.0, 1.0) < world.p;
        logits[[i, 0]] = world.match_logit;
        for j in 1..m {
            let neg = rng.uniform(0.0, 1.0) < world.p;
            logits[[i, j]] = if neg == label {
                world.match_logit
            } else {
                world.mismatch_logit
            };
        }
    }
    Ok(LogitMatrix::new(logits)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::alpha_min;

    #[test]
    fn binary_mi_examples() {
        assert!((binary_true_mi(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(binary_true_mi(0.0).unwrap(), 0.0);
        assert_eq!(binary_true_mi(1.0).unwrap(), 0.0);
        let h = binary_true_mi(0.25).unwrap();
        let expected = -0.25 * 0.25_f64.ln() - 0.75 * 0.75_f64.ln();
        assert!((h - expected).abs() < 1e-15);
        assert!((h - 0.5623).abs() < 1e-4);
        assert!(binary_true_mi(1.5).is_err());
    }

    #[test]
    fn overshoot_example_value_is_exact() {
        // p = 0.5, n = 3, alpha = 0.5, hard critic: 0.717438 > ln 2
        let world = BinaryWorld::hard(0.5).unwrap();
        let stats = binary_cpc_oracle(&world, 3, 0.5).unwrap();
        assert!((stats.mean - 0.717_438_117_673_357_2).abs() < 1e-12);
        assert!(stats.mean > std::f64::consts::LN_2);
    }

    #[test]
    fn unweighted_cpc_stays_below_true_mi_here() {
        let world = BinaryWorld::hard(0.5).unwrap();
        let stats = binary_cpc_oracle(&world, 3, 1.0).unwrap();
        assert!((stats.mean - 0.477_385_626_221_109_7).abs() < 1e-12);
        assert!(stats.mean <= std::f64::consts::LN_2);
    }

    #[test]
    fn degenerate_world_has_zero_mean_and_variance() {
        let world = BinaryWorld::hard(1.0).unwrap();
        let cpc = binary_cpc_oracle(&world, 4, 0.7).unwrap();
        assert_eq!(cpc.mean, 0.0);
        assert_eq!(cpc.variance, 0.0);
        let ml = binary_mlcpc_oracle(&world, 4, 5, 1.0).unwrap();
        assert!(ml.mean.abs() < 1e-12);
        assert!(ml.variance < 1e-20);
    }

    #[test]
    fn mlcpc_oracle_respects_lower_bound_at_valid_alpha() {
        let world = BinaryWorld::hard(0.5).unwrap();
        let a = alpha_min(3, 3).unwrap();
        let stats = binary_mlcpc_oracle(&world, 3, 3, a).unwrap();
        assert!(stats.mean <= binary_true_mi(0.5).unwrap() + 1e-9);
    }

    #[test]
    fn smaller_alpha_trades_bias_for_variance() {
        let world = BinaryWorld::hard(0.5).unwrap();
        let mi = binary_true_mi(0.5).unwrap();
        let a_min = alpha_min(3, 3).unwrap();
        let low = binary_mlcpc_oracle(&world, 3, 3, a_min).unwrap();
        let one = binary_mlcpc_oracle(&world, 3, 3, 1.0).unwrap();
        let bias_low = mi - low.mean;
        let bias_one = mi - one.mean;
        assert!(bias_low < bias_one, "{bias_low} vs {bias_one}");
        assert!(low.variance >= one.variance);
    }

    #[test]
    fn oracle_rejects_invalid_alpha() {
        let world = BinaryWorld::hard(0.5).unwrap();
        assert!(matches!(
            binary_cpc_oracle(&world, 3, 3.0),
            Err(OracleError::InvalidAlpha { .. })
        ));
        assert!(matches!(
            binary_mlcpc_oracle(&world, 3, 4, 0.0),
            Err(OracleError::InvalidAlpha { .. })
        ));
        assert!(matches!(
            binary_cpc_oracle(&world, 1, 0.5),
            Err(OracleError::BatchTooSmall { .. })
        ));
    }

    #[test]
    fn gaussian_mi_formula() {
        assert_eq!(gaussian_true_mi(7, 0.0).unwrap(), 0.0);
        let v = gaussian_true_mi(1, 0.5).unwrap();
        assert!((v - (-0.5 * 0.75_f64.ln())).abs() < 1e-15);
        assert!((v - 0.1438).abs() < 1e-4);
        assert!(gaussian_true_mi(3, 1.0).is_err());
        // strictly increasing in rho, linear in d
        let mut prev = -1.0;
        for k in 0..9 {
            let rho = k as f64 / 10.0;
            let mi = gaussian_true_mi(4, rho).unwrap();
            assert!(mi > prev || (k == 0 && mi == 0.0));
            assert!((gaussian_true_mi(8, rho).unwrap() - 2.0 * mi).abs() < 1e-12);
            prev = mi;
        }
    }

    #[test]
    fn rho_inverts_the_mi_formula() {
        for &(d, mi) in &[(20, 2.0), (20, 6.0), (10, 1.0)] {
            let rho = rho_for_target_mi(d, mi);
            assert!((gaussian_true_mi(d, rho).unwrap() - mi).abs() < 1e-12);
        }
        assert!((rho_for_target_mi(20, 2.0) - 0.4257).abs() < 1e-4);
    }

    #[test]
    fn exchangeable_statistic_is_one_for_two_symmetric_draws() {
        // m=2, n=1, alpha=1: E[2X/(X+Y)] = 1 by exchange symmetry
        let mut rng = SeededRng::new(31);
        let (est, se) =
            exchangeable_bound_mc(&mut rng, 1, 2, 1.0, PositiveSampler::Exponential, 200_000)
                .unwrap();
        assert!((est - 1.0).abs() < 3.0 * se, "estimate {est} stderr {se}");
    }

    #[test]
    fn sampled_batches_need_soft_critics() {
        let hard = BinaryWorld::hard(0.5).unwrap();
        let mut rng = SeededRng::new(4);
        assert!(matches!(
            sample_cpc_batch(&mut rng, &hard, 3),
            Err(OracleError::HardCriticUnsampleable)
        ));
        let soft = BinaryWorld::soft(0.5, 1.0, -2.0).unwrap();
        let batch = sample_cpc_batch(&mut rng, &soft, 3).unwrap();
        assert_eq!((batch.n(), batch.m()), (3, 3));
        let ml = sample_mlcpc_batch(&mut rng, &soft, 2, 4).unwrap();
        assert_eq!((ml.n(), ml.m()), (2, 4));
    }
}
