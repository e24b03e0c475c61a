//! Trainable critics: joint and separable MLP architectures with hand-written
//! reverse-mode gradients and an Adam optimizer.
//!
//! Critics parameterize the *log* of the score function, so the score itself
//! is positive by construction and the estimator math can stay in the log
//! domain end to end. The joint architecture maps `concat(x, y)` through an
//! MLP to a scalar logit; the separable architecture embeds `x` and `y`
//! through two MLPs and takes the inner product of the embeddings.
//!
//! Backpropagation is written out for these two fixed topologies rather than
//! routed through a general autodiff graph. Weight initialization is
//! fan-in-scaled uniform (`U(±sqrt(6/fan_in))`) from a fixed seed; biases
//! start at zero.
//!
//! Two forward entry points feed the same backward machinery:
//!
//! * [`critic_logits`] takes explicitly materialized negative rows, one per
//!   (row, negative) slot.
//! * [`critic_logits_resampled`] takes negatives as row indices into the
//!   batch's own `y` matrix (the in-batch resampling scheme of the benchmark
//!   harness) and evaluates each distinct (x row, y row) pair once, however
//!   many slots reference it. Resampling with replacement makes collisions
//!   common, so this trims roughly a third of the matrix work at the
//!   benchmark sizes without changing any logit value.
//!
//! The [`ForwardCache`] passed between forward and backward owns all large
//! buffers and is meant to be reused across iterations of a training loop;
//! reusing it avoids re-faulting tens of megabytes of activations per step.

use crate::numerics::{Matrix, SeededRng};
use crate::objectives::LogitMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("forward cache does not correspond to this call ({0})")]
    StaleCache(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
}

/// One dense layer; `weight` is `in_dim × out_dim`, applied as `a · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// A stack of dense layers with rectifier activations between hidden layers
/// and an identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// New MLP with the given layer widths, e.g. `[40, 256, 256, 1]`.
    pub fn new(dims: &[usize], rng: &mut SeededRng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.uniform(-limit, limit));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.ncols()));
        dims
    }

    /// Forward over the first `ws.rows` rows of `ws.activations[0]`, which
    /// the caller has already filled.
    fn forward_ws(&self, ws: &mut MlpWorkspace) {
        let rows = ws.rows;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.activations.split_at_mut(k + 1);
            let a_in = head[k].slice(s![..rows, ..]);
            let mut a_out = tail[0].slice_mut(s![..rows, ..]);
            general_mat_mul(1.0, &a_in, &layer.weight, 0.0, &mut a_out);
            if k < last {
                Zip::from(&mut a_out)
                    .and_broadcast(&layer.bias)
                    .for_each(|o, &b| {
                        let v = *o + b;
                        *o = if v > 0.0 { v } else { 0.0 };
                    });
            } else {
                Zip::from(&mut a_out)
                    .and_broadcast(&layer.bias)
                    .for_each(|o, &b| *o += b);
            }
        }
    }

    /// Reverse pass over the cached activations; `d_output` is the gradient
    /// at the MLP output for the active rows. Parameter gradients land in
    /// `grads`; the gradient w.r.t. the input is not materialized for the
    /// first layer (inputs are data, not parameters).
    fn backward_ws(&self, ws: &mut MlpWorkspace, d_output: ArrayView2<f64>, grads: &mut MlpGrads) {
        let rows = ws.rows;
        let last = self.layers.len() - 1;
        ws.deltas[last].slice_mut(s![..rows, ..]).assign(&d_output);
        for k in (0..self.layers.len()).rev() {
            if k < last {
                // rectifier gate: pass gradient only where the unit fired
                let act = ws.activations[k + 1].slice(s![..rows, ..]);
                let mut delta = ws.deltas[k].slice_mut(s![..rows, ..]);
                Zip::from(&mut delta).and(&act).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let delta = ws.deltas[k].slice(s![..rows, ..]);
            let a_in = ws.activations[k].slice(s![..rows, ..]);
            let g = &mut grads.layers[k];
            general_mat_mul(1.0, &a_in.t(), &delta, 0.0, &mut g.weight.view_mut());
            g.bias.assign(&delta.sum_axis(Axis(0)));
            if k > 0 {
                let (head, tail) = ws.deltas.split_at_mut(k);
                let delta = tail[0].slice(s![..rows, ..]);
                let mut prev = head[k - 1].slice_mut(s![..rows, ..]);
                general_mat_mul(1.0, &delta, &self.layers[k].weight.t(), 0.0, &mut prev);
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// Preallocated activations and delta buffers for one MLP, sized for a row
/// capacity and reused across calls.
#[derive(Debug, Clone, Default)]
struct MlpWorkspace {
    /// activations[0] is the input; activations[k+1] the output of layer k
    /// (post-rectifier for hidden layers). All sized capacity × dim.
    activations: Vec<Matrix>,
    /// deltas[k] matches activations[k+1].
    deltas: Vec<Matrix>,
    /// Active row count of the most recent forward.
    rows: usize,
}

impl MlpWorkspace {
    fn ensure(&mut self, dims: &[usize], capacity: usize) {
        let ok = self.activations.len() == dims.len()
            && self
                .activations
                .iter()
                .zip(dims)
                .all(|(a, &d)| a.ncols() == d && a.nrows() >= capacity);
        if !ok {
            self.activations = dims.iter().map(|&d| Matrix::zeros((capacity, d))).collect();
            self.deltas = dims[1..]
                .iter()
                .map(|&d| Matrix::zeros((capacity, d)))
                .collect();
        }
    }

    fn input_mut(&mut self) -> &mut Matrix {
        &mut self.activations[0]
    }

    fn output(&self) -> ArrayView2<'_, f64> {
        self.activations
            .last()
            .unwrap()
            .slice(s![..self.rows, ..])
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    fn zeros_like(net: &MlpParams) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }
}

/// Which critic architecture to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticKind {
    Joint,
    Separable,
}

impl std::fmt::Display for CriticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CriticKind::Joint => write!(f, "joint"),
            CriticKind::Separable => write!(f, "separable"),
        }
    }
}

/// Architecture hyperparameters. Defaults: two hidden layers of 256 units,
/// separable embedding dimension 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden_width: 256,
            hidden_layers: 2,
            embed_dim: 32,
        }
    }
}

/// A positive critic `g(x, y) = exp(logit(x, y))` in one of the two
/// architectures.
#[derive(Debug, Clone, PartialEq)]
pub enum CriticModel {
    /// One MLP scoring `concat(x, y)` with a scalar logit.
    Joint { net: MlpParams },
    /// Two MLPs embedding `x` and `y`; the logit is the inner product of the
    /// embeddings.
    Separable { x_net: MlpParams, y_net: MlpParams },
}

impl CriticModel {
    pub fn new(kind: CriticKind, input_dim: usize, cfg: CriticConfig, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let hidden = vec![cfg.hidden_width; cfg.hidden_layers];
        match kind {
            CriticKind::Joint => {
                let mut dims = vec![2 * input_dim];
                dims.extend_from_slice(&hidden);
                dims.push(1);
                CriticModel::Joint {
                    net: MlpParams::new(&dims, &mut rng),
                }
            }
            CriticKind::Separable => {
                let mut dims = vec![input_dim];
                dims.extend_from_slice(&hidden);
                dims.push(cfg.embed_dim);
                CriticModel::Separable {
                    x_net: MlpParams::new(&dims, &mut rng),
                    y_net: MlpParams::new(&dims, &mut rng.fork(1)),
                }
            }
        }
    }

    pub fn kind(&self) -> CriticKind {
        match self {
            CriticModel::Joint { .. } => CriticKind::Joint,
            CriticModel::Separable { .. } => CriticKind::Separable,
        }
    }

    pub(crate) fn nets(&self) -> Vec<&MlpParams> {
        match self {
            CriticModel::Joint { net } => vec![net],
            CriticModel::Separable { x_net, y_net } => vec![x_net, y_net],
        }
    }

    pub(crate) fn nets_mut(&mut self) -> Vec<&mut MlpParams> {
        match self {
            CriticModel::Joint { net } => vec![net],
            CriticModel::Separable { x_net, y_net } => vec![x_net, y_net],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.nets().iter().all(|n| n.all_finite())
    }
}

/// Gradients shaped like a [`CriticModel`]: one [`MlpGrads`] per network.
#[derive(Debug, Clone)]
pub struct CriticGrads {
    pub nets: Vec<MlpGrads>,
}

impl CriticGrads {
    pub fn zeros_like(model: &CriticModel) -> Self {
        Self {
            nets: model.nets().iter().map(|n| MlpGrads::zeros_like(n)).collect(),
        }
    }
}

/// How the slots of the logit matrix map onto forward rows.
#[derive(Debug, Clone, PartialEq)]
enum CacheLayout {
    /// Dense: joint pair row = slot index; separable y row = n + packed
    /// negative index (positives occupy rows 0..n).
    Dense,
    /// Indexed negatives: `slot_pair[i*m + j]` is the forward row of slot
    /// (i, j) for the joint critic; for the separable critic the y-side rows
    /// are the batch rows themselves and `neg_idx` maps slots to them.
    Indexed { slot_pair: Vec<u32>, neg_idx: Vec<u32> },
}

/// Forward state cached for the matching backward call, plus every large
/// scratch buffer. Create once with [`ForwardCache::new`] and reuse across
/// iterations.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    kind: Option<CriticKind>,
    n: usize,
    m: usize,
    layout: CacheLayout,
    /// Joint: the single MLP over pair rows. Separable: x-side MLP.
    main_ws: MlpWorkspace,
    /// Separable only: y-side MLP.
    y_ws: MlpWorkspace,
    /// Active forward rows in `main_ws` (joint) — the unique pair count.
    pair_rows: usize,
    // backward scratch
    d_main: Matrix,
    d_y: Matrix,
    // dedup scratch: last-seen stamps per batch row
    stamp: Vec<u32>,
    stamp_pair: Vec<u32>,
    generation: u32,
}

impl ForwardCache {
    pub fn new() -> Self {
        Self {
            kind: None,
            n: 0,
            m: 0,
            layout: CacheLayout::Dense,
            main_ws: MlpWorkspace::default(),
            y_ws: MlpWorkspace::default(),
            pair_rows: 0,
            d_main: Matrix::zeros((0, 0)),
            d_y: Matrix::zeros((0, 0)),
            stamp: Vec::new(),
            stamp_pair: Vec::new(),
            generation: 0,
        }
    }
}

impl Default for ForwardCache {
    fn default() -> Self {
        Self::new()
    }
}

fn ensure_buf(buf: &mut Matrix, rows: usize, cols: usize) {
    if buf.nrows() < rows || buf.ncols() != cols {
        *buf = Matrix::zeros((rows, cols));
    }
}

fn check_batch_shapes(
    x: &Matrix,
    y_pos: &Matrix,
) -> Result<(usize, usize), CriticError> {
    let (n, d) = x.dim();
    if y_pos.dim() != (n, d) {
        return Err(CriticError::ShapeMismatch(format!(
            "y_pos is {:?}, expected ({n}, {d})",
            y_pos.dim()
        )));
    }
    if n == 0 || d == 0 {
        return Err(CriticError::ShapeMismatch("empty batch".into()));
    }
    Ok((n, d))
}

fn check_model_dim(model: &CriticModel, d: usize) -> Result<(), CriticError> {
    let expect = match model {
        CriticModel::Joint { net } => net.input_dim() / 2,
        CriticModel::Separable { x_net, .. } => x_net.input_dim(),
    };
    if expect != d {
        return Err(CriticError::ShapeMismatch(format!(
            "critic expects input dim {expect}, data has {d}"
        )));
    }
    Ok(())
}

/// Evaluate all n·m critic log-scores for a batch, with materialized
/// negatives.
///
/// `x` and `y_pos` are n×d; `y_neg` packs the m−1 negatives of row i at rows
/// `i·(m−1) .. (i+1)·(m−1)`. Column 0 of the result is the positive pair of
/// each row, column j its j-th negative. The returned cache feeds
/// [`critic_backward`].
pub fn critic_logits(
    model: &CriticModel,
    x: &Matrix,
    y_pos: &Matrix,
    y_neg: &Matrix,
) -> Result<(LogitMatrix, ForwardCache), CriticError> {
    let mut cache = ForwardCache::new();
    let logits = critic_logits_cached(model, x, y_pos, y_neg, &mut cache)?;
    Ok((logits, cache))
}

/// [`critic_logits`] writing into a reusable cache.
pub fn critic_logits_cached(
    model: &CriticModel,
    x: &Matrix,
    y_pos: &Matrix,
    y_neg: &Matrix,
    cache: &mut ForwardCache,
) -> Result<LogitMatrix, CriticError> {
    let (n, d) = check_batch_shapes(x, y_pos)?;
    check_model_dim(model, d)?;
    if y_neg.ncols() != d || y_neg.nrows() == 0 || y_neg.nrows() % n != 0 {
        return Err(CriticError::ShapeMismatch(format!(
            "y_neg is {:?}, expected (k·{n}, {d}) with k ≥ 1",
            y_neg.dim()
        )));
    }
    let m = y_neg.nrows() / n + 1;
    cache.kind = Some(model.kind());
    cache.n = n;
    cache.m = m;
    cache.layout = CacheLayout::Dense;

    match model {
        CriticModel::Joint { net } => {
            cache.main_ws.ensure(&net.dims(), n * m);
            cache.main_ws.rows = n * m;
            {
                let paired = cache.main_ws.input_mut();
                for i in 0..n {
                    for j in 0..m {
                        let row = i * m + j;
                        paired.row_mut(row).slice_mut(s![..d]).assign(&x.row(i));
                        let y_row = if j == 0 {
                            y_pos.row(i)
                        } else {
                            y_neg.row(i * (m - 1) + (j - 1))
                        };
                        paired.row_mut(row).slice_mut(s![d..]).assign(&y_row);
                    }
                }
            }
            net.forward_ws(&mut cache.main_ws);
            cache.pair_rows = n * m;
            let flat = cache.main_ws.output();
            let logits = Array2::from_shape_fn((n, m), |(i, j)| flat[[i * m + j, 0]]);
            Ok(LogitMatrix::new(logits)?)
        }
        CriticModel::Separable { x_net, y_net } => {
            cache.main_ws.ensure(&x_net.dims(), n);
            cache.main_ws.rows = n;
            cache.main_ws.input_mut().slice_mut(s![..n, ..]).assign(x);
            x_net.forward_ws(&mut cache.main_ws);

            let y_rows = n * m;
            cache.y_ws.ensure(&y_net.dims(), y_rows);
            cache.y_ws.rows = y_rows;
            {
                let y_in = cache.y_ws.input_mut();
                y_in.slice_mut(s![..n, ..]).assign(y_pos);
                y_in.slice_mut(s![n..y_rows, ..]).assign(y_neg);
            }
            y_net.forward_ws(&mut cache.y_ws);

            let u = cache.main_ws.output();
            let v = cache.y_ws.output();
            let logits = Array2::from_shape_fn((n, m), |(i, j)| {
                let row = if j == 0 { i } else { n + i * (m - 1) + (j - 1) };
                u.row(i).dot(&v.row(row))
            });
            Ok(LogitMatrix::new(logits)?)
        }
    }
}

/// Evaluate critic log-scores with negatives given as indices into the
/// batch's own `y` rows: slot (i, j) scores the pair `(x[i], y[neg_idx[i, j-1]])`.
///
/// Each distinct (x row, y row) pair is pushed through the critic once;
/// duplicate slots reuse the value. The logit matrix is identical to what
/// [`critic_logits`] returns on the materialized equivalent.
pub fn critic_logits_resampled(
    model: &CriticModel,
    x: &Matrix,
    y: &Matrix,
    neg_idx: &Array2<usize>,
    cache: &mut ForwardCache,
) -> Result<LogitMatrix, CriticError> {
    let (n, d) = check_batch_shapes(x, y)?;
    check_model_dim(model, d)?;
    if neg_idx.nrows() != n || neg_idx.ncols() == 0 {
        return Err(CriticError::ShapeMismatch(format!(
            "neg_idx is {:?}, expected ({n}, m-1) with m ≥ 2",
            neg_idx.dim()
        )));
    }
    if let Some(&bad) = neg_idx.iter().find(|&&k| k >= n) {
        return Err(CriticError::ShapeMismatch(format!(
            "negative index {bad} out of range for batch of {n}"
        )));
    }
    let m = neg_idx.ncols() + 1;
    cache.kind = Some(model.kind());
    cache.n = n;
    cache.m = m;

    match model {
        CriticModel::Joint { net } => {
            // dedup bookkeeping: one stamp slot per batch row
            if cache.stamp.len() < n {
                cache.stamp = vec![0; n];
                cache.stamp_pair = vec![0; n];
                cache.generation = 0;
            }
            let mut slot_pair = match std::mem::replace(&mut cache.layout, CacheLayout::Dense) {
                CacheLayout::Indexed { mut slot_pair, .. } => {
                    slot_pair.clear();
                    slot_pair
                }
                CacheLayout::Dense => Vec::new(),
            };
            slot_pair.resize(n * m, 0);

            cache.main_ws.ensure(&net.dims(), n * m);
            let mut unique = 0usize;
            {
                let paired = cache.main_ws.input_mut();
                for i in 0..n {
                    if cache.generation == u32::MAX {
                        cache.stamp.fill(0);
                        cache.generation = 0;
                    }
                    cache.generation += 1;
                    let gen = cache.generation;
                    // positive pair (i, i) always present
                    paired.row_mut(unique).slice_mut(s![..d]).assign(&x.row(i));
                    paired.row_mut(unique).slice_mut(s![d..]).assign(&y.row(i));
                    cache.stamp[i] = gen;
                    cache.stamp_pair[i] = unique as u32;
                    slot_pair[i * m] = unique as u32;
                    unique += 1;
                    for j in 1..m {
                        let k = neg_idx[[i, j - 1]];
                        if cache.stamp[k] == gen {
                            slot_pair[i * m + j] = cache.stamp_pair[k];
                        } else {
                            paired.row_mut(unique).slice_mut(s![..d]).assign(&x.row(i));
                            paired.row_mut(unique).slice_mut(s![d..]).assign(&y.row(k));
                            cache.stamp[k] = gen;
                            cache.stamp_pair[k] = unique as u32;
                            slot_pair[i * m + j] = unique as u32;
                            unique += 1;
                        }
                    }
                }
            }
            cache.main_ws.rows = unique;
            net.forward_ws(&mut cache.main_ws);
            cache.pair_rows = unique;
            let flat = cache.main_ws.output();
            let logits =
                Array2::from_shape_fn((n, m), |(i, j)| flat[[slot_pair[i * m + j] as usize, 0]]);
            cache.layout = CacheLayout::Indexed {
                slot_pair,
                neg_idx: neg_idx.iter().map(|&k| k as u32).collect(),
            };
            Ok(LogitMatrix::new(logits)?)
        }
        CriticModel::Separable { x_net, y_net } => {
            // y-side rows are exactly the batch rows; no materialization
            cache.main_ws.ensure(&x_net.dims(), n);
            cache.main_ws.rows = n;
            cache.main_ws.input_mut().slice_mut(s![..n, ..]).assign(x);
            x_net.forward_ws(&mut cache.main_ws);

            cache.y_ws.ensure(&y_net.dims(), n);
            cache.y_ws.rows = n;
            cache.y_ws.input_mut().slice_mut(s![..n, ..]).assign(y);
            y_net.forward_ws(&mut cache.y_ws);

            let u = cache.main_ws.output();
            let v = cache.y_ws.output();
            let logits = Array2::from_shape_fn((n, m), |(i, j)| {
                let row = if j == 0 { i } else { neg_idx[[i, j - 1]] };
                u.row(i).dot(&v.row(row))
            });
            cache.layout = CacheLayout::Indexed {
                slot_pair: Vec::new(),
                neg_idx: neg_idx.iter().map(|&k| k as u32).collect(),
            };
            cache.pair_rows = n;
            Ok(LogitMatrix::new(logits)?)
        }
    }
}

/// Exact reverse-mode gradient of `Σ_ij d_logits[i,j] · logit[i,j]` with
/// respect to every critic parameter, using the activations cached by the
/// matching forward call. Allocates a fresh gradient holder; training loops
/// should prefer [`critic_backward_into`].
pub fn critic_backward(
    model: &CriticModel,
    cache: &mut ForwardCache,
    d_logits: &Array2<f64>,
) -> Result<CriticGrads, CriticError> {
    let mut grads = CriticGrads::zeros_like(model);
    critic_backward_into(model, cache, d_logits, &mut grads)?;
    Ok(grads)
}

/// [`critic_backward`] writing into reusable gradient buffers.
pub fn critic_backward_into(
    model: &CriticModel,
    cache: &mut ForwardCache,
    d_logits: &Array2<f64>,
    grads: &mut CriticGrads,
) -> Result<(), CriticError> {
    let (n, m) = (cache.n, cache.m);
    if d_logits.dim() != (n, m) {
        return Err(CriticError::StaleCache(format!(
            "gradient is {:?}, cache was built for ({n}, {m})",
            d_logits.dim()
        )));
    }
    if cache.kind != Some(model.kind()) {
        return Err(CriticError::StaleCache(format!(
            "cache built for {:?}, model is {}",
            cache.kind,
            model.kind()
        )));
    }
    if grads.nets.len() != model.nets().len() {
        return Err(CriticError::ShapeMismatch(
            "gradient holder does not match model".into(),
        ));
    }

    match model {
        CriticModel::Joint { net } => {
            let rows = cache.pair_rows;
            if cache.main_ws.rows != rows || cache.main_ws.activations[0].nrows() < rows {
                return Err(CriticError::StaleCache("pair count mismatch".into()));
            }
            ensure_buf(&mut cache.d_main, rows, 1);
            let d_flat = &mut cache.d_main;
            match &cache.layout {
                CacheLayout::Dense => {
                    for i in 0..n {
                        for j in 0..m {
                            d_flat[[i * m + j, 0]] = d_logits[[i, j]];
                        }
                    }
                }
                CacheLayout::Indexed { slot_pair, .. } => {
                    d_flat.slice_mut(s![..rows, ..]).fill(0.0);
                    for i in 0..n {
                        for j in 0..m {
                            d_flat[[slot_pair[i * m + j] as usize, 0]] += d_logits[[i, j]];
                        }
                    }
                }
            }
            let d_view = cache.d_main.slice(s![..rows, ..]);
            net.backward_ws(&mut cache.main_ws, d_view, &mut grads.nets[0]);
            Ok(())
        }
        CriticModel::Separable { x_net, y_net } => {
            let e = x_net.output_dim();
            let y_rows = cache.y_ws.rows;
            ensure_buf(&mut cache.d_main, n, e);
            ensure_buf(&mut cache.d_y, y_rows, e);
            {
                let u = cache.main_ws.output();
                let v = cache.y_ws.output();
                let mut d_u = cache.d_main.slice_mut(s![..n, ..]);
                let mut d_v = cache.d_y.slice_mut(s![..y_rows, ..]);
                d_u.fill(0.0);
                d_v.fill(0.0);
                let y_row_of = |i: usize, j: usize| -> usize {
                    match &cache.layout {
                        CacheLayout::Dense => {
                            if j == 0 {
                                i
                            } else {
                                n + i * (m - 1) + (j - 1)
                            }
                        }
                        CacheLayout::Indexed { neg_idx, .. } => {
                            if j == 0 {
                                i
                            } else {
                                neg_idx[i * (m - 1) + (j - 1)] as usize
                            }
                        }
                    }
                };
                for i in 0..n {
                    for j in 0..m {
                        let g = d_logits[[i, j]];
                        if g == 0.0 {
                            continue;
                        }
                        let row = y_row_of(i, j);
                        let vr = v.row(row);
                        let ur = u.row(i);
                        for k in 0..e {
                            d_u[[i, k]] += g * vr[k];
                            d_v[[row, k]] += g * ur[k];
                        }
                    }
                }
            }
            let d_u = cache.d_main.slice(s![..n, ..]);
            x_net.backward_ws(&mut cache.main_ws, d_u, &mut grads.nets[0]);
            let d_v = cache.d_y.slice(s![..y_rows, ..]);
            y_net.backward_ws(&mut cache.y_ws, d_v, &mut grads.nets[1]);
            Ok(())
        }
    }
}

/// Adam state: step count plus first/second moment accumulators shaped like
/// the model parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    moments: Vec<Vec<LayerMoments>>,
}

#[derive(Debug, Clone)]
struct LayerMoments {
    w_m: Array2<f64>,
    w_v: Array2<f64>,
    b_m: Array1<f64>,
    b_v: Array1<f64>,
}

impl AdamState {
    /// Zero moments shaped like `model`, with the usual defaults
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(model: &CriticModel, lr: f64) -> Self {
        let moments = model
            .nets()
            .iter()
            .map(|net| {
                net.layers
                    .iter()
                    .map(|l| LayerMoments {
                        w_m: Array2::zeros(l.weight.dim()),
                        w_v: Array2::zeros(l.weight.dim()),
                        b_m: Array1::zeros(l.bias.len()),
                        b_v: Array1::zeros(l.bias.len()),
                    })
                    .collect()
            })
            .collect();
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            moments,
        }
    }
}

/// One bias-corrected Adam descent step, in place.
///
/// Minimizes: parameters move against the supplied gradient. Callers
/// maximizing an objective pass the gradient of its negation.
pub fn adam_step(
    model: &mut CriticModel,
    grads: &CriticGrads,
    state: &mut AdamState,
) -> Result<(), CriticError> {
    let nets = model.nets_mut();
    if grads.nets.len() != nets.len() || state.moments.len() != nets.len() {
        return Err(CriticError::ShapeMismatch(
            "gradient/state network count differs from model".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.lr);

    let update = |param: &mut f64, grad: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * grad;
        *v = b2 * *v + (1.0 - b2) * grad * grad;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *param -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (net_idx, net) in nets.into_iter().enumerate() {
        let net_grads = &grads.nets[net_idx];
        if net_grads.layers.len() != net.layers.len() {
            return Err(CriticError::ShapeMismatch("layer count mismatch".into()));
        }
        for (layer_idx, layer) in net.layers.iter_mut().enumerate() {
            let g = &net_grads.layers[layer_idx];
            let mo = &mut state.moments[net_idx][layer_idx];
            if g.weight.dim() != layer.weight.dim() || g.bias.len() != layer.bias.len() {
                return Err(CriticError::ShapeMismatch(format!(
                    "layer {layer_idx} gradient shape {:?} vs parameter {:?}",
                    g.weight.dim(),
                    layer.weight.dim()
                )));
            }
            for ((p, &grad), (m, v)) in layer
                .weight
                .iter_mut()
                .zip(g.weight.iter())
                .zip(mo.w_m.iter_mut().zip(mo.w_v.iter_mut()))
            {
                update(p, grad, m, v);
            }
            for ((p, &grad), (m, v)) in layer
                .bias
                .iter_mut()
                .zip(g.bias.iter())
                .zip(mo.b_m.iter_mut().zip(mo.b_v.iter_mut()))
            {
                update(p, grad, m, v);
            }
        }
    }
    Ok(())
}

// --- checkpoint format ------------------------------------------------------
//
// Little-endian binary, version 1:
//   magic   b"MICK"
//   version u32
//   kind    u8      (0 = joint, 1 = separable)
//   nets    u8
//   per net:  layer_count u32, then per layer: in_dim u32, out_dim u32
//   payload:  per net, per layer: weight row-major f64, then bias f64

const CHECKPOINT_MAGIC: &[u8; 4] = b"MICK";
const CHECKPOINT_VERSION: u32 = 1;

impl CriticModel {
    /// Serialize to the versioned flat binary checkpoint layout.
    pub fn save(&self, path: &Path) -> Result<(), CriticError> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(match self.kind() {
            CriticKind::Joint => 0,
            CriticKind::Separable => 1,
        });
        let nets = self.nets();
        out.push(nets.len() as u8);
        for net in &nets {
            out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
            for l in &net.layers {
                out.extend_from_slice(&(l.weight.nrows() as u32).to_le_bytes());
                out.extend_from_slice(&(l.weight.ncols() as u32).to_le_bytes());
            }
        }
        for net in &nets {
            for l in &net.layers {
                for v in l.weight.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for v in l.bias.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    /// Deserialize a checkpoint written by [`CriticModel::save`].
    pub fn load(path: &Path) -> Result<Self, CriticError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cur = 0usize;
        let take = |cur: &mut usize, len: usize| -> Result<&[u8], CriticError> {
            if *cur + len > bytes.len() {
                return Err(CriticError::BadCheckpoint("truncated".into()));
            }
            let s = &bytes[*cur..*cur + len];
            *cur += len;
            Ok(s)
        };
        if take(&mut cur, 4)? != CHECKPOINT_MAGIC {
            return Err(CriticError::BadCheckpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CriticError::BadCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let kind = match take(&mut cur, 1)?[0] {
            0 => CriticKind::Joint,
            1 => CriticKind::Separable,
            k => return Err(CriticError::BadCheckpoint(format!("unknown kind {k}"))),
        };
        let net_count = take(&mut cur, 1)?[0] as usize;
        let expected_nets = match kind {
            CriticKind::Joint => 1,
            CriticKind::Separable => 2,
        };
        if net_count != expected_nets {
            return Err(CriticError::BadCheckpoint(format!(
                "{kind} checkpoint must carry {expected_nets} networks, found {net_count}"
            )));
        }
        let mut shapes: Vec<Vec<(usize, usize)>> = Vec::with_capacity(net_count);
        for _ in 0..net_count {
            let layer_count = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
            let mut dims = Vec::with_capacity(layer_count);
            for _ in 0..layer_count {
                let din = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
                let dout = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
                dims.push((din, dout));
            }
            shapes.push(dims);
        }
        let read_f64 = |cur: &mut usize| -> Result<f64, CriticError> {
            Ok(f64::from_le_bytes(take(cur, 8)?.try_into().unwrap()))
        };
        let mut nets = Vec::with_capacity(net_count);
        for dims in &shapes {
            let mut layers = Vec::with_capacity(dims.len());
            for &(din, dout) in dims {
                let mut weight = Array2::<f64>::zeros((din, dout));
                for v in weight.iter_mut() {
                    *v = read_f64(&mut cur)?;
                }
                let mut bias = Array1::<f64>::zeros(dout);
                for v in bias.iter_mut() {
                    *v = read_f64(&mut cur)?;
                }
                layers.push(Layer { weight, bias });
            }
            nets.push(MlpParams { layers });
        }
        if cur != bytes.len() {
            return Err(CriticError::BadCheckpoint("trailing bytes".into()));
        }
        let mut nets = nets.into_iter();
        Ok(match kind {
            CriticKind::Joint => CriticModel::Joint {
                net: nets.next().unwrap(),
            },
            CriticKind::Separable => CriticModel::Separable {
                x_net: nets.next().unwrap(),
                y_net: nets.next().unwrap(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(embed: usize) -> CriticConfig {
        CriticConfig {
            hidden_width: 5,
            hidden_layers: 2,
            embed_dim: embed,
        }
    }

    fn random_batch(
        rng: &mut SeededRng,
        n: usize,
        m: usize,
        d: usize,
    ) -> (Matrix, Matrix, Matrix) {
        let make = |rows: usize, rng: &mut SeededRng| {
            Matrix::from_shape_fn((rows, d), |_| rng.standard_normal())
        };
        let x = make(n, rng);
        let y_pos = make(n, rng);
        let y_neg = make(n * (m - 1), rng);
        (x, y_pos, y_neg)
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let mut model = CriticModel::new(CriticKind::Joint, 2, tiny_cfg(3), 0);
        if let CriticModel::Joint { net } = &mut model {
            for l in &mut net.layers {
                l.weight.fill(0.0);
                l.bias.fill(0.0);
            }
        }
        let mut rng = SeededRng::new(5);
        let (x, y_pos, y_neg) = random_batch(&mut rng, 3, 4, 2);
        let (logits, _) = critic_logits(&model, &x, &y_pos, &y_neg).unwrap();
        assert!(logits.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn joint_single_unit_matches_hand_evaluation() {
        // 1 hidden unit on 1-dim inputs: logit = max(0, w1·(x‖y) + b1)·w2 + b2
        let mut rng = SeededRng::new(0);
        let mut net = MlpParams::new(&[2, 1, 1], &mut rng);
        net.layers[0].weight = Array2::from_shape_vec((2, 1), vec![0.5, -1.5]).unwrap();
        net.layers[0].bias = Array1::from_vec(vec![0.25]);
        net.layers[1].weight = Array2::from_shape_vec((1, 1), vec![2.0]).unwrap();
        net.layers[1].bias = Array1::from_vec(vec![-0.125]);
        let model = CriticModel::Joint { net };

        let x = Matrix::from_shape_vec((1, 1), vec![1.0]).unwrap();
        let y_pos = Matrix::from_shape_vec((1, 1), vec![0.5]).unwrap();
        let y_neg = Matrix::from_shape_vec((1, 1), vec![2.0]).unwrap();
        let (logits, _) = critic_logits(&model, &x, &y_pos, &y_neg).unwrap();

        let hand = |y: f64| (0.5 * 1.0 - 1.5 * y + 0.25).max(0.0) * 2.0 - 0.125;
        assert!((logits.values()[[0, 0]] - hand(0.5)).abs() < 1e-15);
        assert!((logits.values()[[0, 1]] - hand(2.0)).abs() < 1e-15);
    }

    #[test]
    fn separable_identity_nets_give_inner_products() {
        // single linear layer with identity weights on matched dims
        let d = 3;
        let mut rng = SeededRng::new(0);
        let mut identity = || {
            let mut net = MlpParams::new(&[d, d], &mut rng);
            net.layers[0].weight = Array2::eye(d);
            net.layers[0].bias.fill(0.0);
            net
        };
        let model = CriticModel::Separable {
            x_net: identity(),
            y_net: identity(),
        };
        let mut data_rng = SeededRng::new(3);
        let (x, y_pos, y_neg) = random_batch(&mut data_rng, 2, 3, d);
        let (logits, _) = critic_logits(&model, &x, &y_pos, &y_neg).unwrap();
        for i in 0..2 {
            assert!((logits.values()[[i, 0]] - x.row(i).dot(&y_pos.row(i))).abs() < 1e-14);
            for j in 1..3 {
                let expect = x.row(i).dot(&y_neg.row(i * 2 + (j - 1)));
                assert!((logits.values()[[i, j]] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn separable_swapping_inputs_and_nets_transposes_pair_grid() {
        // score(x_net, y_net, a, b) with a/b swapped and nets swapped agrees
        // on the full pair grid transposed
        let d = 2;
        let cfg = tiny_cfg(4);
        let model = CriticModel::new(CriticKind::Separable, d, cfg, 9);
        let (x_net, y_net) = match &model {
            CriticModel::Separable { x_net, y_net } => (x_net.clone(), y_net.clone()),
            _ => unreachable!(),
        };
        let swapped = CriticModel::Separable {
            x_net: y_net,
            y_net: x_net,
        };
        let mut rng = SeededRng::new(17);
        let a = Matrix::from_shape_fn((3, d), |_| rng.standard_normal());
        let b = Matrix::from_shape_fn((3, d), |_| rng.standard_normal());

        // full 3x3 grid via m-1 = 2 negatives taken as the other rows
        let grid = |model: &CriticModel, rows: &Matrix, cols: &Matrix| {
            let mut neg = Matrix::zeros((3 * 2, d));
            for i in 0..3 {
                let mut k = 0;
                for j in 0..3 {
                    if j != i {
                        neg.row_mut(i * 2 + k).assign(&cols.row(j));
                        k += 1;
                    }
                }
            }
            let (logits, _) = critic_logits(model, rows, cols, &neg).unwrap();
            let mut full = Array2::<f64>::zeros((3, 3));
            for i in 0..3 {
                full[[i, i]] = logits.values()[[i, 0]];
                let mut k = 1;
                for j in 0..3 {
                    if j != i {
                        full[[i, j]] = logits.values()[[i, k]];
                        k += 1;
                    }
                }
            }
            full
        };
        let fwd = grid(&model, &a, &b);
        let rev = grid(&swapped, &b, &a);
        for i in 0..3 {
            for j in 0..3 {
                assert!((fwd[[i, j]] - rev[[j, i]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resampled_logits_match_materialized_negatives() {
        let d = 3;
        let (n, m) = (4, 5);
        let mut rng = SeededRng::new(11);
        let x = Matrix::from_shape_fn((n, d), |_| rng.standard_normal());
        let y = Matrix::from_shape_fn((n, d), |_| rng.standard_normal());
        // indices with deliberate repeats, including the positive row itself
        let neg_idx = Array2::from_shape_fn((n, m - 1), |(i, j)| (i + j * 2 + 1) % n);
        let mut y_neg = Matrix::zeros((n * (m - 1), d));
        for i in 0..n {
            for j in 0..m - 1 {
                y_neg
                    .row_mut(i * (m - 1) + j)
                    .assign(&y.row(neg_idx[[i, j]]));
            }
        }
        for kind in [CriticKind::Joint, CriticKind::Separable] {
            let model = CriticModel::new(kind, d, tiny_cfg(4), 23);
            let (dense, _) = critic_logits(&model, &x, &y, &y_neg).unwrap();
            let mut cache = ForwardCache::new();
            let indexed =
                critic_logits_resampled(&model, &x, &y, &neg_idx, &mut cache).unwrap();
            assert_eq!(dense.values(), indexed.values(), "{kind} logits differ");
        }
    }

    #[test]
    fn cache_reuse_is_bitwise_stable() {
        let d = 2;
        let (n, m) = (3, 4);
        let mut rng = SeededRng::new(2);
        let model = CriticModel::new(CriticKind::Joint, d, tiny_cfg(3), 8);
        let mut cache = ForwardCache::new();
        let mut first = None;
        for round in 0..3 {
            let x = Matrix::from_shape_fn((n, d), |(i, j)| ((i + j + round) as f64) * 0.1);
            let neg_idx = Array2::from_shape_fn((n, m - 1), |(i, j)| (i + j) % n);
            let logits = critic_logits_resampled(&model, &x, &x, &neg_idx, &mut cache).unwrap();
            let _ = rng.standard_normal();
            if round == 0 {
                first = Some(logits.values().clone());
            } else if round == 2 {
                // same inputs as round 0 after an unrelated round in between
            }
            if round == 2 {
                let x0 = Matrix::from_shape_fn((n, d), |(i, j)| ((i + j) as f64) * 0.1);
                let neg_idx = Array2::from_shape_fn((n, m - 1), |(i, j)| (i + j) % n);
                let again =
                    critic_logits_resampled(&model, &x0, &x0, &neg_idx, &mut cache).unwrap();
                assert_eq!(again.values(), first.as_ref().unwrap());
            }
        }
    }

    #[test]
    fn backward_zero_gradient_is_zero() {
        let model = CriticModel::new(CriticKind::Joint, 2, tiny_cfg(3), 1);
        let mut rng = SeededRng::new(2);
        let (x, y_pos, y_neg) = random_batch(&mut rng, 2, 3, 2);
        let (_, mut cache) = critic_logits(&model, &x, &y_pos, &y_neg).unwrap();
        let grads = critic_backward(&model, &mut cache, &Array2::zeros((2, 3))).unwrap();
        for net in &grads.nets {
            for l in &net.layers {
                assert!(l.weight.iter().all(|&v| v == 0.0));
                assert!(l.bias.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_gradient() {
        let model = CriticModel::new(CriticKind::Joint, 2, tiny_cfg(3), 1);
        let mut rng = SeededRng::new(2);
        let (x, y_pos, y_neg) = random_batch(&mut rng, 2, 3, 2);
        let (_, mut cache) = critic_logits(&model, &x, &y_pos, &y_neg).unwrap();
        let err = critic_backward(&model, &mut cache, &Array2::zeros((3, 3)));
        assert!(matches!(err, Err(CriticError::StaleCache(_))));

        let other = CriticModel::new(CriticKind::Separable, 2, tiny_cfg(3), 1);
        let err = critic_backward(&other, &mut cache, &Array2::zeros((2, 3)));
        assert!(matches!(err, Err(CriticError::StaleCache(_))));
    }

    /// Loss = Σ d[i,j]·logit[i,j]; central differences over every parameter.
    fn finite_difference_check(kind: CriticKind, seed: u64, n: usize, m: usize, d: usize) {
        let cfg = tiny_cfg(3);
        let mut model = CriticModel::new(kind, d, cfg, seed);
        let mut rng = SeededRng::new(seed ^ 0xabcd);
        let (x, y_pos, y_neg) = random_batch(&mut rng, n, m, d);
        let d_logits = Array2::from_shape_fn((n, m), |_| rng.standard_normal());

        let loss = |model: &CriticModel| {
            let (logits, _) = critic_logits(model, &x, &y_pos, &y_neg).unwrap();
            (logits.values() * &d_logits).sum()
        };

        let (_, mut cache) = critic_logits(&model, &x, &y_pos, &y_neg).unwrap();
        let analytic = critic_backward(&model, &mut cache, &d_logits).unwrap();

        let eps = 1e-5;
        let net_count = analytic.nets.len();
        for net_idx in 0..net_count {
            let layer_count = analytic.nets[net_idx].layers.len();
            for layer_idx in 0..layer_count {
                let w_dim = analytic.nets[net_idx].layers[layer_idx].weight.dim();
                for r in 0..w_dim.0 {
                    for c in 0..w_dim.1 {
                        let orig = model.nets()[net_idx].layers[layer_idx].weight[[r, c]];
                        model.nets_mut()[net_idx].layers[layer_idx].weight[[r, c]] = orig + eps;
                        let fp = loss(&model);
                        model.nets_mut()[net_idx].layers[layer_idx].weight[[r, c]] = orig - eps;
                        let fm = loss(&model);
                        model.nets_mut()[net_idx].layers[layer_idx].weight[[r, c]] = orig;
                        let fd = (fp - fm) / (2.0 * eps);
                        let an = analytic.nets[net_idx].layers[layer_idx].weight[[r, c]];
                        let denom = fd.abs().max(an.abs()).max(1e-3);
                        assert!(
                            (fd - an).abs() / denom < 1e-4,
                            "{kind:?} net {net_idx} layer {layer_idx} w[{r},{c}]: {an} vs fd {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn joint_backward_matches_finite_differences() {
        finite_difference_check(CriticKind::Joint, 3, 2, 3, 2);
        finite_difference_check(CriticKind::Joint, 4, 3, 2, 3);
    }

    #[test]
    fn separable_backward_matches_finite_differences() {
        finite_difference_check(CriticKind::Separable, 5, 2, 3, 2);
        finite_difference_check(CriticKind::Separable, 6, 3, 2, 3);
    }

    /// Same check through the index-based (deduplicating) path.
    fn finite_difference_check_resampled(kind: CriticKind, seed: u64, n: usize, m: usize, d: usize) {
        let mut model = CriticModel::new(kind, d, tiny_cfg(3), seed);
        let mut rng = SeededRng::new(seed ^ 0x77);
        let x = Matrix::from_shape_fn((n, d), |_| rng.standard_normal());
        let y = Matrix::from_shape_fn((n, d), |_| rng.standard_normal());
        let neg_idx = Array2::from_shape_fn((n, m - 1), |_| rng.uniform_index(n));
        let d_logits = Array2::from_shape_fn((n, m), |_| rng.standard_normal());

        let loss = |model: &CriticModel| {
            let mut cache = ForwardCache::new();
            let logits = critic_logits_resampled(model, &x, &y, &neg_idx, &mut cache).unwrap();
            (logits.values() * &d_logits).sum()
        };

        let mut cache = ForwardCache::new();
        let _ = critic_logits_resampled(&model, &x, &y, &neg_idx, &mut cache).unwrap();
        let analytic = critic_backward(&model, &mut cache, &d_logits).unwrap();

        let eps = 1e-5;
        for net_idx in 0..analytic.nets.len() {
            for layer_idx in 0..analytic.nets[net_idx].layers.len() {
                let w_dim = analytic.nets[net_idx].layers[layer_idx].weight.dim();
                for r in 0..w_dim.0 {
                    for c in 0..w_dim.1 {
                        let orig = model.nets()[net_idx].layers[layer_idx].weight[[r, c]];
                        model.nets_mut()[net_idx].layers[layer_idx].weight[[r, c]] = orig + eps;
                        let fp = loss(&model);
                        model.nets_mut()[net_idx].layers[layer_idx].weight[[r, c]] = orig - eps;
                        let fm = loss(&model);
                        model.nets_mut()[net_idx].layers[layer_idx].weight[[r, c]] = orig;
                        let fd = (fp - fm) / (2.0 * eps);
                        let an = analytic.nets[net_idx].layers[layer_idx].weight[[r, c]];
                        let denom = fd.abs().max(an.abs()).max(1e-3);
                        assert!(
                            (fd - an).abs() / denom < 1e-4,
                            "{kind:?} resampled net {net_idx} layer {layer_idx} w[{r},{c}]"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn resampled_backward_matches_finite_differences() {
        finite_difference_check_resampled(CriticKind::Joint, 13, 3, 4, 2);
        finite_difference_check_resampled(CriticKind::Separable, 14, 3, 4, 2);
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut model = CriticModel::new(CriticKind::Joint, 2, tiny_cfg(3), 7);
        let before = model.clone();
        let zero_grads = CriticGrads::zeros_like(&model);
        let mut state = AdamState::new(&model, 1e-3);
        adam_step(&mut model, &zero_grads, &mut state).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_has_closed_form() {
        // scalar parameter, first step: m_hat = g, v_hat = g²
        let mut rng = SeededRng::new(0);
        let net = MlpParams::new(&[1, 1], &mut rng);
        let mut model = CriticModel::Joint { net };
        let w0 = model.nets()[0].layers[0].weight[[0, 0]];
        let mut state = AdamState::new(&model, 1e-3);
        let grads_for = |g: f64| CriticGrads {
            nets: vec![MlpGrads {
                layers: vec![LayerGrads {
                    weight: Array2::from_elem((1, 1), g),
                    bias: Array1::from_elem(1, 0.0),
                }],
            }],
        };
        let grads = grads_for(1.0);
        adam_step(&mut model, &grads, &mut state).unwrap();
        let w1 = model.nets()[0].layers[0].weight[[0, 0]];
        let expected = 1e-3 / (1.0 + 1e-8);
        assert!(((w0 - w1) - expected).abs() < 1e-12, "step was {}", w0 - w1);

        // negative gradient moves the parameter up: lr·|g|/(|g| + eps)
        let mut model2 = CriticModel::Joint {
            net: MlpParams::new(&[1, 1], &mut SeededRng::new(0)),
        };
        let mut state2 = AdamState::new(&model2, 1e-3);
        let grads2 = grads_for(-2.0);
        adam_step(&mut model2, &grads2, &mut state2).unwrap();
        let w2 = model2.nets()[0].layers[0].weight[[0, 0]];
        let expected_up = 1e-3 * 2.0 / (2.0 + 1e-8);
        assert!(((w2 - w0) - expected_up).abs() < 1e-12);
        assert!((expected_up - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [CriticKind::Joint, CriticKind::Separable] {
            let model = CriticModel::new(kind, 4, tiny_cfg(6), 21);
            let path = dir.path().join(format!("{kind}.ck"));
            model.save(&path).unwrap();
            let loaded = CriticModel::load(&path).unwrap();
            assert_eq!(model, loaded);
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ck");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            CriticModel::load(&path),
            Err(CriticError::BadCheckpoint(_))
        ));
    }
}
