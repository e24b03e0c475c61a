//! The contrastive estimator family: CPC and ML-CPC with positive-sample
//! re-weighting, exact logit gradients, the validity threshold for the
//! multi-label weight, and geometric weight schedules.
//!
//! Both estimators consume an n×m [`LogitMatrix`] whose column 0 scores the
//! positive pair of each row and whose remaining columns score that row's
//! m−1 negative pairs. With re-weight `alpha` the positive score enters each
//! normalizer with weight `alpha` and every negative with weight
//! `(m − alpha)/(m − 1)`, so the weights always sum to `m` per row.
//!
//! The two estimators differ only in how the normalizer pools scores:
//!
//! * CPC normalizes each row by its own m weighted scores (an m-way
//!   classification per row), capping the value at `ln(m/alpha)`.
//! * ML-CPC normalizes every row by one shared sum over all n·m weighted
//!   scores (one n-out-of-n·m multi-label problem). The cap is the same
//!   `ln(m/alpha)`, but the estimator stays a lower bound on mutual
//!   information for every `alpha` down to [`alpha_min`], far below the
//!   `alpha = 1` point where CPC's guarantee stops.
//!
//! All arithmetic is carried out in the log domain with one max-shifted
//! logsumexp per normalizer, so logits of any magnitude are safe.

use crate::numerics::logsumexp_slice;
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("logit matrix needs at least 1 row and 2 columns, got {rows}x{cols}")]
    DegenerateShape { rows: usize, cols: usize },
    #[error("logit at ({row}, {col}) is not finite")]
    NonFiniteLogit { row: usize, col: usize },
    #[error("alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("alpha {alpha} must be below the class count m = {m} (negative weight would vanish)")]
    AlphaTooLarge { alpha: f64, m: usize },
    #[error("class count m must be at least 2, got {0}")]
    TooFewClasses(usize),
    #[error("step {step} outside schedule range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("schedule endpoints must be positive, got {start} -> {end}")]
    BadScheduleEndpoints { start: f64, end: f64 },
}

/// n×m grid of critic log-scores. Column 0 is the positive pair of each row;
/// columns 1..m−1 are that row's negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    values: Array2<f64>,
}

impl LogitMatrix {
    /// Validates shape (n ≥ 1, m ≥ 2) and that every entry is finite.
    pub fn new(values: Array2<f64>) -> Result<Self, ObjectiveError> {
        let (rows, cols) = values.dim();
        if rows < 1 || cols < 2 {
            return Err(ObjectiveError::DegenerateShape { rows, cols });
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(ObjectiveError::NonFiniteLogit { row, col });
            }
        }
        Ok(Self { values })
    }

    /// Batch size n.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Classes per row m (1 positive + m−1 negatives).
    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Which classification problem the estimator poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Per-row m-class problem; value capped at ln(m/alpha), lower bound on
    /// MI only at alpha = 1.
    Cpc,
    /// Pooled n-label problem over all n·m scores; lower bound on MI for
    /// alpha in [alpha_min(n, m), 1].
    MlCpc,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Cpc => write!(f, "cpc"),
            EstimatorKind::MlCpc => write!(f, "mlcpc"),
        }
    }
}

/// Estimator kind plus its positive-sample weight.
///
/// Any `alpha > 0` is accepted so that deliberately invalid weights can be
/// studied; [`ObjectiveSpec::bound_valid`] reports whether the combination
/// is certified to stay below the true mutual information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: EstimatorKind,
    pub alpha: f64,
}

impl ObjectiveSpec {
    pub fn new(kind: EstimatorKind, alpha: f64) -> Result<Self, ObjectiveError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(ObjectiveError::NonPositiveAlpha(alpha));
        }
        Ok(Self { kind, alpha })
    }

    /// Whether the estimator is certified as a lower bound on MI at this
    /// batch geometry: alpha = 1 for CPC, alpha in [alpha_min(n, m), 1]
    /// for ML-CPC.
    pub fn bound_valid(&self, n: usize, m: usize) -> bool {
        match self.kind {
            EstimatorKind::Cpc => self.alpha == 1.0,
            EstimatorKind::MlCpc => match alpha_min(n, m) {
                Ok(lo) => self.alpha >= lo && self.alpha <= 1.0,
                Err(_) => false,
            },
        }
    }

    /// Objective value on a logit matrix.
    pub fn value(&self, logits: &LogitMatrix) -> Result<f64, ObjectiveError> {
        match self.kind {
            EstimatorKind::Cpc => cpc_value(logits, self.alpha),
            EstimatorKind::MlCpc => ml_cpc_value(logits, self.alpha),
        }
    }
}

/// Smallest multi-label weight that keeps ML-CPC a lower bound on MI:
/// `m / (n(m−1) + 1)`. Always in (0, 1].
///
/// ```
/// use micontrast::objectives::alpha_min;
/// assert_eq!(alpha_min(1, 2).unwrap(), 1.0);
/// assert!((alpha_min(128, 128).unwrap() - 128.0 / 16257.0).abs() < 1e-15);
/// ```
pub fn alpha_min(n: usize, m: usize) -> Result<f64, ObjectiveError> {
    if m < 2 {
        return Err(ObjectiveError::TooFewClasses(m));
    }
    if n < 1 {
        return Err(ObjectiveError::DegenerateShape { rows: n, cols: m });
    }
    Ok(m as f64 / (n as f64 * (m as f64 - 1.0) + 1.0))
}

fn check_alpha(alpha: f64, m: usize) -> Result<(f64, f64), ObjectiveError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ObjectiveError::NonPositiveAlpha(alpha));
    }
    if alpha >= m as f64 {
        return Err(ObjectiveError::AlphaTooLarge { alpha, m });
    }
    // ln of the positive and negative weights
    let ln_alpha = alpha.ln();
    let ln_beta = ((m as f64 - alpha) / (m as f64 - 1.0)).ln();
    Ok((ln_alpha, ln_beta))
}

/// Weighted-CPC value: each row is an m-class problem with its own
/// normalizer.
///
/// Per row i the contribution is
/// `ln m + l[i,0] − logsumexp(ln α + l[i,0], {ln β + l[i,j]})` with
/// `β = (m − α)/(m − 1)`, averaged over rows.
pub fn cpc_value(logits: &LogitMatrix, alpha: f64) -> Result<f64, ObjectiveError> {
    let (n, m) = (logits.n(), logits.m());
    let (ln_alpha, ln_beta) = check_alpha(alpha, m)?;
    let ln_m = (m as f64).ln();
    let mut acc = 0.0;
    let mut row_buf = vec![0.0; m];
    for i in 0..n {
        let row = logits.values().row(i);
        row_buf[0] = ln_alpha + row[0];
        for j in 1..m {
            row_buf[j] = ln_beta + row[j];
        }
        acc += ln_m + row[0] - logsumexp_slice(&row_buf);
    }
    Ok(acc / n as f64)
}

/// Weighted ML-CPC value: one shared normalizer over all n positives and
/// n(m−1) negatives.
///
/// Per row i the contribution is `ln(nm) + l[i,0] − Z` where `Z` is the
/// logsumexp of every weighted score in the matrix (positives shifted by
/// ln α, negatives by ln β), averaged over rows. Reduces to [`cpc_value`]
/// exactly when n = 1.
pub fn ml_cpc_value(logits: &LogitMatrix, alpha: f64) -> Result<f64, ObjectiveError> {
    let (n, m) = (logits.n(), logits.m());
    let (ln_alpha, ln_beta) = check_alpha(alpha, m)?;
    let z = ml_normalizer(logits, ln_alpha, ln_beta);
    let ln_nm = (n as f64 * m as f64).ln();
    let mut acc = 0.0;
    for i in 0..n {
        acc += ln_nm + logits.values()[[i, 0]] - z;
    }
    Ok(acc / n as f64)
}

/// Shared ML-CPC log-normalizer. Weighted scores are laid out row by row
/// (positive first, then that row's negatives) so the n = 1 case reproduces
/// the CPC row reduction term for term.
fn ml_normalizer(logits: &LogitMatrix, ln_alpha: f64, ln_beta: f64) -> f64 {
    let (n, m) = (logits.n(), logits.m());
    let mut all = Vec::with_capacity(n * m);
    for i in 0..n {
        let row = logits.values().row(i);
        all.push(ln_alpha + row[0]);
        for j in 1..m {
            all.push(ln_beta + row[j]);
        }
    }
    logsumexp_slice(&all)
}

/// Exact gradient of the objective value with respect to every logit.
///
/// For CPC the negative part is the per-row softmax of weighted logits
/// scaled by −1/n; for ML-CPC it is the softmax over the entire weighted
/// matrix scaled by −1. Both add 1/n on column 0. ML-CPC gradients sum to
/// zero over the whole matrix (the objective is translation invariant).
pub fn objective_grad_logits(
    logits: &LogitMatrix,
    spec: &ObjectiveSpec,
) -> Result<Array2<f64>, ObjectiveError> {
    let (n, m) = (logits.n(), logits.m());
    let (ln_alpha, ln_beta) = check_alpha(spec.alpha, m)?;
    let inv_n = 1.0 / n as f64;
    let mut grad = Array2::<f64>::zeros((n, m));
    match spec.kind {
        EstimatorKind::Cpc => {
            let mut row_buf = vec![0.0; m];
            for i in 0..n {
                let row = logits.values().row(i);
                row_buf[0] = ln_alpha + row[0];
                for j in 1..m {
                    row_buf[j] = ln_beta + row[j];
                }
                let z = logsumexp_slice(&row_buf);
                grad[[i, 0]] = inv_n * (1.0 - (row_buf[0] - z).exp());
                for j in 1..m {
                    grad[[i, j]] = -inv_n * (row_buf[j] - z).exp();
                }
            }
        }
        EstimatorKind::MlCpc => {
            let z = ml_normalizer(logits, ln_alpha, ln_beta);
            for i in 0..n {
                let row = logits.values().row(i);
                grad[[i, 0]] = inv_n - (ln_alpha + row[0] - z).exp();
                for j in 1..m {
                    grad[[i, j]] = -(ln_beta + row[j] - z).exp();
                }
            }
        }
    }
    Ok(grad)
}

/// Geometric interpolation of the re-weight coefficient from `alpha_start`
/// to `alpha_end` over `total_steps` steps.
///
/// For a schedule with `alpha_start · alpha_end = 1` (all the curriculum
/// schedules used with ML-CPC: 2→0.5, 5→0.2, 10→0.1) the half-way value is
/// exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub total_steps: usize,
}

impl AlphaSchedule {
    pub fn new(alpha_start: f64, alpha_end: f64, total_steps: usize) -> Result<Self, ObjectiveError> {
        if !(alpha_start > 0.0) || !(alpha_end > 0.0) {
            return Err(ObjectiveError::BadScheduleEndpoints {
                start: alpha_start,
                end: alpha_end,
            });
        }
        Ok(Self {
            alpha_start,
            alpha_end,
            total_steps,
        })
    }

    /// Value at `step`: `alpha_start · (alpha_end/alpha_start)^(step/total)`.
    ///
    /// The even-midpoint case is computed as `sqrt(start · end)` so the
    /// curriculum's crossing through 1 is exact rather than within an ulp.
    pub fn at(&self, step: usize) -> Result<f64, ObjectiveError> {
        if step > self.total_steps {
            return Err(ObjectiveError::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        if step == 0 {
            return Ok(self.alpha_start);
        }
        if step == self.total_steps {
            return Ok(self.alpha_end);
        }
        if 2 * step == self.total_steps {
            return Ok((self.alpha_start * self.alpha_end).sqrt());
        }
        let frac = step as f64 / self.total_steps as f64;
        Ok(self.alpha_start * (self.alpha_end / self.alpha_start).powf(frac))
    }
}

/// Free-function form of [`AlphaSchedule::at`].
pub fn schedule_alpha(schedule: &AlphaSchedule, step: usize) -> Result<f64, ObjectiveError> {
    schedule.at(step)
}
