//! Contrastive training: the multiple-instance NCE objective, decoupled
//! weight decay optimizer, warmup-cosine schedule, and the loop that ties
//! them to the model.
//!
//! The loss for one video treats each kept label row as a bag: the softmax
//! mass its positive segments hold, against all segments of the same video.
//! Dropped rows contribute nothing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::labels::LabelMatrix;
use crate::mat::DenseMatrix;
use crate::model::{
    self, backward, forward, init_params, zeros_like, ModelConfig, ModelError, ModelParams,
};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("label matrix has no kept rows")]
    EmptyBatchRow,
    #[error("shape mismatch: labels {label_rows}x{label_cols}, similarities {a_rows}x{a_cols}")]
    ShapeMismatch {
        label_rows: usize,
        label_cols: usize,
        a_rows: usize,
        a_cols: usize,
    },
    #[error("temperature must be > 0, got {0}")]
    BadTemperature(f64),
    #[error("total iterations {total} must exceed warmup {warmup}")]
    ScheduleTooShort { total: usize, warmup: usize },
    #[error("iteration {iter} outside [0, {total}]")]
    IterOutOfRange { iter: usize, total: usize },
    #[error("nothing to train on: every video was skipped")]
    EmptyCorpus,
    #[error("video '{video_id}' lacks embeddings for encoder '{encoder}'")]
    MissingEncoder { video_id: String, encoder: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Softmax temperature of the contrastive objective.
    pub eta: f64,
    pub lr_peak: f64,
    pub weight_decay: f64,
    pub warmup_iters: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Write an intermediate checkpoint every this many iterations.
    pub checkpoint_every: Option<usize>,
    /// Reserved; clips the global gradient norm when set.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.07,
            lr_peak: 2e-4,
            weight_decay: 1e-5,
            warmup_iters: 1000,
            epochs: 12,
            batch_size: 32,
            seed: 0,
            checkpoint_every: None,
            grad_clip: None,
        }
    }
}

/// Multiple-instance NCE loss over kept rows, with its gradient.
///
/// Per kept row the contribution is `lse(all) - lse(positives)` of the row
/// scaled by `1/eta`; the total is the mean over kept rows. The returned
/// matrix is d(loss)/d(similarities), zero on dropped rows.
pub fn mil_nce_loss(
    labels: &LabelMatrix,
    a_hat: &DenseMatrix,
    eta: f64,
) -> Result<(f64, DenseMatrix), TrainError> {
    if eta <= 0.0 || !eta.is_finite() {
        return Err(TrainError::BadTemperature(eta));
    }
    if labels.rows() != a_hat.rows() || labels.num_segments() != a_hat.cols() {
        return Err(TrainError::ShapeMismatch {
            label_rows: labels.rows(),
            label_cols: labels.num_segments(),
            a_rows: a_hat.rows(),
            a_cols: a_hat.cols(),
        });
    }
    let kept_rows = labels.kept_count();
    if kept_rows == 0 {
        return Err(TrainError::EmptyBatchRow);
    }

    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(a_hat.rows(), a_hat.cols());
    let inv_rows = 1.0 / kept_rows as f64;
    for r in 0..a_hat.rows() {
        if !labels.kept(r) {
            continue;
        }
        let row = a_hat.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / eta;

        let mut sum_all = 0.0;
        let mut sum_pos = 0.0;
        for (t, &v) in row.iter().enumerate() {
            let e = (v / eta - max).exp();
            sum_all += e;
            if labels.is_positive(r, t) {
                sum_pos += e;
            }
        }
        // lse(all) - lse(pos); the max offset cancels
        loss += inv_rows * (sum_all.ln() - sum_pos.ln());

        for (t, &v) in row.iter().enumerate() {
            let e = (v / eta - max).exp();
            let p_all = e / sum_all;
            let p_pos = if labels.is_positive(r, t) { e / sum_pos } else { 0.0 };
            grad.set(r, t, inv_rows / eta * (p_all - p_pos));
        }
    }
    Ok((loss, grad))
}

/// Learning rate at `iter` of `total_iters`: linear warmup to the peak, then
/// cosine decay to zero.
pub fn lr_at(iter: usize, total_iters: usize, config: &TrainConfig) -> Result<f64, TrainError> {
    if total_iters <= config.warmup_iters {
        return Err(TrainError::ScheduleTooShort {
            total: total_iters,
            warmup: config.warmup_iters,
        });
    }
    if iter > total_iters {
        return Err(TrainError::IterOutOfRange {
            iter,
            total: total_iters,
        });
    }
    if iter < config.warmup_iters {
        return Ok(config.lr_peak * iter as f64 / config.warmup_iters as f64);
    }
    let progress = (iter - config.warmup_iters) as f64 / (total_iters - config.warmup_iters) as f64;
    Ok(config.lr_peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// First and second moment accumulators, shaped like the parameters.
pub struct OptimizerState {
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            first_moment: zeros_like(params),
            second_moment: zeros_like(params),
            step: 0,
        }
    }
}

/// One decoupled-weight-decay update with bias-corrected moments.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);

    let mut p_tensors = params.tensors_mut();
    let g_tensors = grads.tensors();
    let mut m_tensors = state.first_moment.tensors_mut();
    let mut v_tensors = state.second_moment.tensors_mut();
    for i in 0..p_tensors.len() {
        debug_assert_eq!(p_tensors[i].0, g_tensors[i].0);
        let p = p_tensors[i].1.data_mut();
        let g = g_tensors[i].1.data();
        let m = m_tensors[i].1.data_mut();
        let v = v_tensors[i].1.data_mut();
        for j in 0..p.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + config.weight_decay * p[j]);
        }
    }
}

/// One video ready for the training loop.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub video_id: String,
    /// T x video_input_dim features feeding the video stream.
    pub seg_features: DenseMatrix,
    /// L x text_input_dim features feeding the text stream.
    pub step_features: DenseMatrix,
    pub labels: LabelMatrix,
}

/// Pulls the model-input embeddings for one video out of a corpus entry.
pub fn train_item_from_entry(
    entry: &CorpusEntry,
    labels: LabelMatrix,
    video_encoder: &str,
    text_encoder: &str,
) -> Result<TrainItem, TrainError> {
    let seg_features = entry
        .segment_embeddings
        .get(video_encoder)
        .ok_or_else(|| TrainError::MissingEncoder {
            video_id: entry.video_id.clone(),
            encoder: video_encoder.to_string(),
        })?
        .clone();
    let step_features = entry
        .step_embeddings
        .get(text_encoder)
        .ok_or_else(|| TrainError::MissingEncoder {
            video_id: entry.video_id.clone(),
            encoder: text_encoder.to_string(),
        })?
        .clone();
    Ok(TrainItem {
        video_id: entry.video_id.clone(),
        seg_features,
        step_features,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossPoint {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
}

pub struct TrainResult {
    pub params: ModelParams,
    pub loss_curve: Vec<LossPoint>,
    pub iterations: usize,
}

/// Trains the model over pseudo-labeled videos.
///
/// Videos whose label matrix keeps no rows are skipped with a warning.
/// Deterministic for a fixed config: shuffling uses a dedicated seeded
/// stream. When `checkpoint_dir` is set, periodic and final checkpoints are
/// written there.
pub fn train(
    items: &[TrainItem],
    model_config: &ModelConfig,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainResult, TrainError> {
    let usable: Vec<&TrainItem> = items
        .iter()
        .filter(|item| {
            let ok = item.labels.kept_count() > 0;
            if !ok {
                log::warn!("skipping '{}': no kept label rows", item.video_id);
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }

    let mut params = init_params(model_config, config.seed)?;
    let mut state = OptimizerState::new(&params);
    let batch_size = config.batch_size.max(1).min(usable.len());
    let batches_per_epoch = usable.len().div_ceil(batch_size);
    let total_iters = config.epochs * batches_per_epoch;
    if total_iters <= config.warmup_iters {
        return Err(TrainError::ScheduleTooShort {
            total: total_iters,
            warmup: config.warmup_iters,
        });
    }

    // distinct stream so reseeding the model does not move the data order
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut loss_curve = Vec::with_capacity(total_iters);
    let mut iter = 0usize;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(batch_size) {
            let mut batch_grads = zeros_like(&params);
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let item = usable[idx];
                let (a_hat, cache) =
                    forward(model_config, &params, &item.seg_features, &item.step_features)?;
                let (loss, d_a_hat) = mil_nce_loss(&item.labels, &a_hat, config.eta)?;
                let grads = backward(model_config, &params, &cache, &d_a_hat)?;
                batch_loss += scale * loss;
                accumulate_scaled(&mut batch_grads, &grads, scale);
            }
            if let Some(max_norm) = config.grad_clip {
                clip_global_norm(&mut batch_grads, max_norm);
            }
            // 1-based step number: the first update uses lr_peak/warmup
            iter += 1;
            let lr = lr_at(iter, total_iters, config)?;
            adamw_step(&mut params, &batch_grads, &mut state, lr, config);
            loss_curve.push(LossPoint {
                iter,
                lr,
                loss: batch_loss,
            });

            if let (Some(dir), Some(every)) = (checkpoint_dir, config.checkpoint_every) {
                if every > 0 && iter % every == 0 && iter < total_iters {
                    let step_dir = dir.join(format!("step_{:06}", iter));
                    model::save_checkpoint(&step_dir, model_config, &params, config.seed, iter as u64)?;
                }
            }
        }
    }

    if let Some(dir) = checkpoint_dir {
        model::save_checkpoint(dir, model_config, &params, config.seed, iter as u64)?;
    }
    Ok(TrainResult {
        params,
        loss_curve,
        iterations: iter,
    })
}

fn accumulate_scaled(acc: &mut ModelParams, grads: &ModelParams, scale: f64) {
    let mut a_tensors = acc.tensors_mut();
    let g_tensors = grads.tensors();
    for i in 0..a_tensors.len() {
        let a = a_tensors[i].1.data_mut();
        let g = g_tensors[i].1.data();
        for j in 0..a.len() {
            a[j] += scale * g[j];
        }
    }
}

fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) {
    let mut sq = 0.0;
    for (_, t) in grads.tensors() {
        sq += t.data().iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for (_, t) in grads.tensors_mut() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }
}

/// Writes the loss curve as `iter,lr,loss` CSV.
pub fn write_loss_csv(points: &[LossPoint], path: &Path) -> Result<(), TrainError> {
    let f = File::create(path).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut w = BufWriter::new(f);
    let mut emit = |line: String| -> Result<(), TrainError> {
        writeln!(w, "{}", line).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })
    };
    emit("iter,lr,loss".to_string())?;
    for p in points {
        emit(format!("{},{},{}", p.iter, p.lr, p.loss))?;
    }
    w.flush().map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

const SHUFFLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
