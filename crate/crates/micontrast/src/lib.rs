//! # micontrast
//!
//! Contrastive mutual-information estimation with the CPC / ML-CPC family:
//! re-weighted multi-class and multi-label objectives, trainable MLP critics,
//! closed-form oracles on a two-point world, and reproducible synthetic
//! benchmarks for bias-variance characterization.
//!
//! ## The estimator family
//!
//! Both estimators score n positive pairs against m−1 negatives per row with
//! a positive critic `g = exp(logit)` and report a classification-style
//! objective whose expectation sits below the true mutual information:
//!
//! | Estimator | Normalizer | Value cap | Lower bound on MI |
//! |-----------|------------|-----------|-------------------|
//! | CPC       | per row (m-class)        | ln(m/α) | α = 1 only |
//! | ML-CPC    | pooled (n-of-n·m labels) | ln(m/α) | α ∈ [m/(n(m−1)+1), 1] |
//!
//! Shrinking α raises the cap and cuts bias at the cost of variance; ML-CPC
//! is the variant that keeps the lower-bound guarantee while doing so.
//!
//! ## Quick start
//!
//! ```
//! use micontrast::objectives::{alpha_min, cpc_value, ml_cpc_value, LogitMatrix};
//! use ndarray::array;
//!
//! // one positive (column 0) against one negative, scored 2:1
//! let logits = LogitMatrix::new(array![[2.0_f64.ln(), 0.0]]).unwrap();
//! let nats = cpc_value(&logits, 1.0).unwrap();
//! assert!((nats - (4.0_f64 / 3.0).ln()).abs() < 1e-12);
//!
//! // the smallest multi-label weight that is still a valid lower bound
//! let a = alpha_min(128, 128).unwrap();
//! assert!(a < 0.008);
//! let pooled = ml_cpc_value(&logits, 0.5).unwrap();
//! assert!(pooled > nats); // smaller alpha, larger value
//! ```
//!
//! The `micontrast` binary drives the same library: `estimate` runs the
//! Gaussian staircase benchmark, `oracle` prints closed-form or Monte-Carlo
//! ground truth, and `sweep` tabulates exact bias-variance trade-offs.

pub mod cli;
pub mod critics;
pub mod experiments;
pub mod numerics;
pub mod objectives;
pub mod oracles;

pub use critics::{AdamState, CriticConfig, CriticKind, CriticModel, MlpParams};
pub use experiments::{EstimateTrace, StaircaseConfig, SweepResult};
pub use numerics::{Matrix, SeededRng};
pub use objectives::{AlphaSchedule, EstimatorKind, LogitMatrix, ObjectiveSpec};
pub use oracles::{BinaryWorld, OracleStats};

// The guide chapters double as doctests so the book and the library cannot
// drift apart: `cargo test --doc` compiles and runs every snippet.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(estimators, "../../../book/src/estimators.md");
    chapter!(validity, "../../../book/src/validity.md");
    chapter!(critics, "../../../book/src/critics.md");
    chapter!(benchmarks, "../../../book/src/benchmarks.md");
    chapter!(cli, "../../../book/src/cli.md");
}
