//! End-to-end benchmark harness: the correlated-Gaussian staircase
//! estimation run, exact bias-variance sweeps over the two-point world, and
//! CPC vs ML-CPC timing parity.
//!
//! A staircase run trains a critic by stochastic ascent on the selected
//! objective while the true mutual information of the data stream increases
//! in fixed steps; the per-iteration objective value is the MI estimate. The
//! whole run is a pure function of its configuration: data, initialization
//! and negatives all derive from the one seed.

use crate::critics::{
    adam_step, critic_backward_into, critic_logits_resampled, AdamState, CriticConfig, CriticGrads,
    CriticKind, CriticModel, ForwardCache,
};
use crate::numerics::{resample_indices, sample_correlated_gaussian, SeededRng};
use crate::objectives::{
    alpha_min, objective_grad_logits, AlphaSchedule, EstimatorKind, ObjectiveSpec,
};
use crate::oracles::{
    binary_cpc_oracle, binary_mlcpc_oracle, binary_true_mi, rho_for_target_mi, BinaryWorld,
};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective became non-finite ({value}) at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, value: f64 },
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Critic(#[from] crate::critics::CriticError),
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
    #[error(transparent)]
    Oracle(#[from] crate::oracles::OracleError),
}

/// Either a fixed re-weight or a geometric curriculum over the run.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveRun {
    Fixed(ObjectiveSpec),
    Scheduled {
        kind: EstimatorKind,
        schedule: AlphaSchedule,
    },
}

impl ObjectiveRun {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            ObjectiveRun::Fixed(spec) => spec.kind,
            ObjectiveRun::Scheduled { kind, .. } => *kind,
        }
    }

    fn alpha_at(&self, step: usize) -> Result<f64, ExperimentError> {
        match self {
            ObjectiveRun::Fixed(spec) => Ok(spec.alpha),
            ObjectiveRun::Scheduled { schedule, .. } => Ok(schedule.at(step)?),
        }
    }
}

/// Configuration of one staircase estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseConfig {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    /// Target MI per level, strictly increasing; each level maps to the
    /// correlation that realizes it.
    pub levels: Vec<f64>,
    pub iters_per_level: usize,
    pub critic: CriticKind,
    pub critic_config: CriticConfig,
    pub objective: ObjectiveRun,
    pub lr: f64,
    pub seed: u64,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        Self {
            d: 20,
            n: 128,
            m: 128,
            levels: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            iters_per_level: 1000,
            critic: CriticKind::Joint,
            critic_config: CriticConfig::default(),
            objective: ObjectiveRun::Fixed(ObjectiveSpec {
                kind: EstimatorKind::Cpc,
                alpha: 1.0,
            }),
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl StaircaseConfig {
    pub fn total_iters(&self) -> usize {
        self.levels.len() * self.iters_per_level
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.d == 0 || self.n == 0 || self.m < 2 {
            return Err(ExperimentError::InvalidConfig(format!(
                "need d ≥ 1, n ≥ 1, m ≥ 2; got d={}, n={}, m={}",
                self.d, self.n, self.m
            )));
        }
        if self.levels.is_empty() || self.iters_per_level == 0 {
            return Err(ExperimentError::InvalidConfig(
                "need at least one level and one iteration per level".into(),
            ));
        }
        let mut prev = -f64::INFINITY;
        for &mi in &self.levels {
            if !mi.is_finite() || mi < 0.0 || mi <= prev {
                return Err(ExperimentError::InvalidConfig(format!(
                    "levels must be finite, non-negative and strictly increasing; got {:?}",
                    self.levels
                )));
            }
            prev = mi;
        }
        if !(self.lr > 0.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// One per-iteration record of a staircase run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Raw objective value on this batch: the MI estimate.
    pub estimate: f64,
    /// Exponential moving average of the estimate (decay 0.99).
    pub smoothed: f64,
    pub true_mi: f64,
    pub alpha: f64,
    /// Wall-clock cost of this update; measurement, excluded from the
    /// determinism contract.
    pub wall_ms: f64,
}

/// Full per-iteration trace of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrace {
    pub records: Vec<TraceRecord>,
}

impl EstimateTrace {
    /// Mean and standard error of the raw estimates over the `window`
    /// iterations ending just before `end` (exclusive).
    pub fn trailing_stats(&self, end: usize, window: usize) -> (f64, f64) {
        let lo = end.saturating_sub(window);
        let slice: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.iteration >= lo && r.iteration < end)
            .map(|r| r.estimate)
            .collect();
        let k = slice.len() as f64;
        let mean = slice.iter().sum::<f64>() / k;
        let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
        (mean, (var / k).sqrt())
    }
}

/// Train a critic on the staircase and record the estimate trajectory.
///
/// Per iteration: draw a correlated batch, resample negatives from the batch
/// marginal, evaluate all critic scores, take the objective value as the MI
/// estimate, and ascend its gradient with one Adam step.
pub fn run_staircase(cfg: &StaircaseConfig) -> Result<EstimateTrace, ExperimentError> {
    cfg.validate()?;

    let mut data_rng = SeededRng::new(cfg.seed).fork(2);
    let mut model = CriticModel::new(cfg.critic, cfg.d, cfg.critic_config, cfg.seed ^ 0x5eed);
    let mut adam = AdamState::new(&model, cfg.lr);
    let mut cache = ForwardCache::new();
    let mut grads = CriticGrads::zeros_like(&model);
    let kind = cfg.objective.kind();

    let mut records = Vec::with_capacity(cfg.total_iters());
    let mut smoothed = 0.0;
    let mut iteration = 0usize;
    for &target_mi in &cfg.levels {
        let rho = rho_for_target_mi(cfg.d, target_mi);
        for _ in 0..cfg.iters_per_level {
            let t0 = Instant::now();
            let alpha = cfg.objective.alpha_at(iteration)?;
            let spec = ObjectiveSpec::new(kind, alpha)?;

            let (x, y) = sample_correlated_gaussian(&mut data_rng, cfg.d, rho, cfg.n)?;
            let neg_idx = resample_indices(&mut data_rng, cfg.n, cfg.m - 1);
            let logits = critic_logits_resampled(&model, &x, &y, &neg_idx, &mut cache)?;

            let estimate = spec.value(&logits)?;
            if !estimate.is_finite() {
                return Err(ExperimentError::NonFiniteLoss {
                    iteration,
                    value: estimate,
                });
            }

            // ascend the objective: feed the gradient of its negation to Adam
            let mut d_logits = objective_grad_logits(&logits, &spec)?;
            d_logits.mapv_inplace(|v| -v);
            critic_backward_into(&model, &mut cache, &d_logits, &mut grads)?;
            adam_step(&mut model, &grads, &mut adam)?;

            smoothed = if iteration == 0 {
                estimate
            } else {
                0.99 * smoothed + 0.01 * estimate
            };
            records.push(TraceRecord {
                iteration,
                estimate,
                smoothed,
                true_mi: target_mi,
                alpha,
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            });
            iteration += 1;
        }
    }
    Ok(EstimateTrace { records })
}

/// One cell of a bias-variance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub objective: EstimatorKind,
    /// true MI − oracle mean
    pub bias: f64,
    /// sqrt of the single-batch variance
    pub std: f64,
}

/// Exact sweep output plus any skipped-cell diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub true_mi: f64,
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

/// Exact bias/std per (size, alpha, objective) cell from the two-point
/// oracles with the hard critic; no sampling is involved.
///
/// CPC cells require the tied-negative construction (m = n); cells that the
/// oracles reject are recorded as warnings rather than failing the sweep.
pub fn run_bias_variance_sweep(
    p: f64,
    sizes: &[(usize, usize)],
    alphas: &[f64],
) -> Result<SweepResult, ExperimentError> {
    if sizes.is_empty() || alphas.is_empty() {
        return Err(ExperimentError::InvalidConfig(
            "need at least one size and one alpha".into(),
        ));
    }
    let world = BinaryWorld::hard(p)?;
    let true_mi = binary_true_mi(p)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &(n, m) in sizes {
        for &alpha in alphas {
            if m == n {
                match binary_cpc_oracle(&world, n, alpha) {
                    Ok(stats) => rows.push(SweepRow {
                        n,
                        m,
                        alpha,
                        objective: EstimatorKind::Cpc,
                        bias: true_mi - stats.mean,
                        std: stats.variance.sqrt(),
                    }),
                    Err(e) => warnings.push(format!("cpc n={n} m={m} alpha={alpha}: {e}")),
                }
            } else {
                warnings.push(format!(
                    "cpc n={n} m={m}: tied-negative construction needs m = n; skipped"
                ));
            }
            match binary_mlcpc_oracle(&world, n, m, alpha) {
                Ok(stats) => rows.push(SweepRow {
                    n,
                    m,
                    alpha,
                    objective: EstimatorKind::MlCpc,
                    bias: true_mi - stats.mean,
                    std: stats.variance.sqrt(),
                }),
                Err(e) => warnings.push(format!("mlcpc n={n} m={m} alpha={alpha}: {e}")),
            }
        }
    }
    Ok(SweepResult {
        true_mi,
        rows,
        warnings,
    })
}

/// Median wall-clock milliseconds per update for CPC and ML-CPC with
/// identical critic, batch sizes and sample streams.
///
/// The first 10 updates of each run are discarded as warm-up; `updates`
/// must be at least 50 so the median rests on a stable population.
pub fn run_timing_parity(
    cfg: &StaircaseConfig,
    updates: usize,
) -> Result<(f64, f64), ExperimentError> {
    cfg.validate()?;
    if updates < 50 {
        return Err(ExperimentError::InvalidConfig(format!(
            "timing needs at least 50 updates, got {updates}"
        )));
    }
    let alpha = cfg.objective.alpha_at(0)?;
    let rho = rho_for_target_mi(cfg.d, cfg.levels[0]);

    let mut medians = [0.0; 2];
    for (slot, kind) in [EstimatorKind::Cpc, EstimatorKind::MlCpc].into_iter().enumerate() {
        let spec = ObjectiveSpec::new(kind, alpha)?;
        let mut data_rng = SeededRng::new(cfg.seed).fork(2);
        let mut model = CriticModel::new(cfg.critic, cfg.d, cfg.critic_config, cfg.seed ^ 0x5eed);
        let mut adam = AdamState::new(&model, cfg.lr);
        let mut cache = ForwardCache::new();
        let mut grads = CriticGrads::zeros_like(&model);
        let mut times = Vec::with_capacity(updates);
        for _ in 0..updates {
            let t0 = Instant::now();
            let (x, y) = sample_correlated_gaussian(&mut data_rng, cfg.d, rho, cfg.n)?;
            let neg_idx = resample_indices(&mut data_rng, cfg.n, cfg.m - 1);
            let logits = critic_logits_resampled(&model, &x, &y, &neg_idx, &mut cache)?;
            let value = spec.value(&logits)?;
            if !value.is_finite() {
                return Err(ExperimentError::NonFiniteLoss {
                    iteration: times.len(),
                    value,
                });
            }
            let mut d_logits = objective_grad_logits(&logits, &spec)?;
            d_logits.mapv_inplace(|v| -v);
            critic_backward_into(&model, &mut cache, &d_logits, &mut grads)?;
            adam_step(&mut model, &grads, &mut adam)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        let mut body = times.split_off(10);
        body.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians[slot] = body[body.len() / 2];
    }
    Ok((medians[0], medians[1]))
}

/// Convenience: the canonical low-bias valid weight for a run's geometry.
pub fn auto_alpha(n: usize, m: usize) -> Result<f64, ExperimentError> {
    Ok(alpha_min(n, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> StaircaseConfig {
        StaircaseConfig {
            d: 4,
            n: 16,
            m: 16,
            levels: vec![1.0],
            iters_per_level: 60,
            critic: CriticKind::Joint,
            critic_config: CriticConfig {
                hidden_width: 32,
                hidden_layers: 2,
                embed_dim: 8,
            },
            objective: ObjectiveRun::Fixed(ObjectiveSpec {
                kind: EstimatorKind::Cpc,
                alpha: 1.0,
            }),
            lr: 1e-3,
            seed: 7,
        }
    }

    #[test]
    fn staircase_is_deterministic_modulo_wall_time() {
        let cfg = tiny_config();
        let a = run_staircase(&cfg).unwrap();
        let b = run_staircase(&cfg).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.iteration, rb.iteration);
            assert_eq!(ra.estimate, rb.estimate);
            assert_eq!(ra.smoothed, rb.smoothed);
            assert_eq!(ra.true_mi, rb.true_mi);
            assert_eq!(ra.alpha, rb.alpha);
        }
    }

    #[test]
    fn independent_level_converges_to_zero() {
        let mut cfg = tiny_config();
        cfg.levels = vec![0.0];
        cfg.iters_per_level = 400;
        let trace = run_staircase(&cfg).unwrap();
        let (mean, _) = trace.trailing_stats(400, 200);
        assert!(mean.abs() <= 0.05, "trailing mean {mean}");
    }

    #[test]
    fn estimates_never_exceed_cap_at_alpha_one() {
        let mut cfg = tiny_config();
        cfg.levels = vec![2.0 * (cfg.m as f64).ln()];
        cfg.iters_per_level = 300;
        let cap = (cfg.m as f64).ln();
        for kind in [EstimatorKind::Cpc, EstimatorKind::MlCpc] {
            cfg.objective = ObjectiveRun::Fixed(ObjectiveSpec { kind, alpha: 1.0 });
            let trace = run_staircase(&cfg).unwrap();
            for r in &trace.records {
                assert!(r.estimate <= cap + 1e-9);
            }
            let (mean, _) = trace.trailing_stats(300, 200);
            assert!(mean <= cap + 0.02);
        }
    }

    #[test]
    fn training_keeps_parameters_finite() {
        // smoke property: 100 steps at lr 1e-2 stay finite
        let mut cfg = tiny_config();
        cfg.iters_per_level = 100;
        cfg.lr = 1e-2;
        for kind in [CriticKind::Joint, CriticKind::Separable] {
            cfg.critic = kind;
            let trace = run_staircase(&cfg).unwrap();
            assert!(trace.records.iter().all(|r| r.estimate.is_finite()));
        }
    }

    #[test]
    fn schedule_is_recorded_in_the_trace() {
        let mut cfg = tiny_config();
        cfg.iters_per_level = 64;
        cfg.objective = ObjectiveRun::Scheduled {
            kind: EstimatorKind::MlCpc,
            schedule: AlphaSchedule::new(2.0, 0.5, 64).unwrap(),
        };
        let trace = run_staircase(&cfg).unwrap();
        assert_eq!(trace.records[0].alpha, 2.0);
        assert_eq!(trace.records[32].alpha, 1.0);
        assert!(trace.records[63].alpha > 0.5 && trace.records[63].alpha < 0.53);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_config();
        cfg.levels = vec![2.0, 1.0];
        assert!(matches!(
            run_staircase(&cfg),
            Err(ExperimentError::InvalidConfig(_))
        ));
        let mut cfg = tiny_config();
        cfg.m = 1;
        assert!(run_staircase(&cfg).is_err());
        let cfg = tiny_config();
        assert!(run_timing_parity(&cfg, 10).is_err());
    }

    #[test]
    fn sweep_matches_direct_oracle_calls() {
        let result = run_bias_variance_sweep(0.5, &[(3, 3)], &[1.0]).unwrap();
        assert_eq!(result.rows.len(), 2);
        let cpc_row = result
            .rows
            .iter()
            .find(|r| r.objective == EstimatorKind::Cpc)
            .unwrap();
        // ln 2 − 0.477386 ≈ 0.215762
        assert!((cpc_row.bias - (std::f64::consts::LN_2 - 0.477_385_626_221_109_7)).abs() < 1e-12);
        assert!(result.warnings.is_empty());
    }

    #[test]
    fn sweep_skips_untiable_cpc_cells() {
        let result = run_bias_variance_sweep(0.5, &[(2, 4)], &[1.0]).unwrap();
        assert_eq!(result.rows.len(), 1);
        assert_eq!(result.rows[0].objective, EstimatorKind::MlCpc);
        assert_eq!(result.warnings.len(), 1);
    }

    #[test]
    fn degenerate_p_gives_zero_bias_and_std() {
        for p in [0.0, 1.0] {
            let result = run_bias_variance_sweep(p, &[(3, 3)], &[1.0]).unwrap();
            for row in &result.rows {
                assert!(row.bias.abs() < 1e-12, "bias {}", row.bias);
                assert!(row.std < 1e-10);
            }
        }
    }
}
