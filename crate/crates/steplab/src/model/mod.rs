//! The step-video alignment model.
//!
//! Both modalities are projected to a shared width, the video stream gets a
//! learnable positional table added (text only for the narration-grounding
//! variant), each stream runs through its own pre-norm transformer encoder,
//! the two token sequences are concatenated (video first) through a joint
//! encoder, and the split outputs are row-normalized so their dot products
//! are cosine similarities.
//!
//! Forward and backward are hand-written; the cache carries every
//! intermediate the backward pass needs.

mod checkpoint;
mod ops;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest};
pub use params::{
    init_params, zeros_like, AttentionParams, EncoderLayerParams, LayerNormParams, LinearParams,
    ModelParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::DenseMatrix;
use ops::{AttentionCache, L2NormCache, LayerNormCache};

/// Feed-forward widening factor inside encoder layers.
pub const FFN_MULT: usize = 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("video has {t} segments but the positional table holds {max}")]
    TooManySegments { t: usize, max: usize },
    #[error("input width mismatch: got {got}, config says {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("gradient shape {rows}x{cols} does not match the cached forward ({l}x{t})")]
    CacheMismatch {
        rows: usize,
        cols: usize,
        l: usize,
        t: usize,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub video_input_dim: usize,
    pub text_input_dim: usize,
    pub hidden_dim: usize,
    /// Encoder layers per transformer (video, text, and joint alike).
    pub layers: usize,
    pub heads: usize,
    pub max_positions: usize,
    /// Add the positional table to step tokens too; off for step grounding,
    /// on for the narration-grounding variant.
    pub use_text_pe: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            video_input_dim: 512,
            text_input_dim: 300,
            hidden_dim: 256,
            layers: 2,
            heads: 8,
            max_positions: 1024,
            use_text_pe: false,
        }
    }
}

impl ModelConfig {
    pub fn ffn_dim(&self) -> usize {
        self.hidden_dim * FFN_MULT
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim == 0 || self.heads == 0 || self.layers == 0 {
            return Err(ModelError::BadConfig(
                "hidden_dim, heads, and layers must be positive".into(),
            ));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "hidden_dim {} not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if self.video_input_dim == 0 || self.text_input_dim == 0 {
            return Err(ModelError::BadConfig("input dims must be positive".into()));
        }
        if self.max_positions == 0 {
            return Err(ModelError::BadConfig("max_positions must be positive".into()));
        }
        Ok(())
    }
}

struct EncoderLayerCache {
    input: DenseMatrix,
    ln1: LayerNormCache,
    ln1_out: DenseMatrix,
    attn: AttentionCache,
    after_attn: DenseMatrix,
    ln2: LayerNormCache,
    ln2_out: DenseMatrix,
    ffn_pre: DenseMatrix,
}

/// Everything backward needs from one forward pass.
pub struct ForwardCache {
    t: usize,
    l: usize,
    seg_input: DenseMatrix,
    step_input: DenseMatrix,
    video_layers: Vec<EncoderLayerCache>,
    text_layers: Vec<EncoderLayerCache>,
    joint_layers: Vec<EncoderLayerCache>,
    video_pre_norm: DenseMatrix,
    text_pre_norm: DenseMatrix,
    video_l2: L2NormCache,
    text_l2: L2NormCache,
}

impl ForwardCache {
    pub fn num_segments(&self) -> usize {
        self.t
    }

    pub fn num_steps(&self) -> usize {
        self.l
    }

    /// Final step features before row normalization.
    pub fn text_features_pre_norm(&self) -> &DenseMatrix {
        &self.text_pre_norm
    }

    /// Final video features before row normalization.
    pub fn video_features_pre_norm(&self) -> &DenseMatrix {
        &self.video_pre_norm
    }

    /// Attention weights of every head of every layer, for inspection.
    pub fn attention_probs(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.video_layers
            .iter()
            .chain(&self.text_layers)
            .chain(&self.joint_layers)
            .flat_map(|layer| layer.attn.probs.iter())
    }
}

fn encoder_layer_forward(
    x: DenseMatrix,
    p: &EncoderLayerParams,
    heads: usize,
) -> (DenseMatrix, EncoderLayerCache) {
    let (ln1_out, ln1) = ops::layer_norm_forward(&x, &p.ln1);
    let (attn_out, attn) = ops::attention_forward(&ln1_out, &p.attn, heads);
    let mut after_attn = x.clone();
    after_attn.add_assign(&attn_out);

    let (ln2_out, ln2) = ops::layer_norm_forward(&after_attn, &p.ln2);
    let ffn_pre = ops::linear_forward(&ln2_out, &p.ffn_in);
    let mut ffn_act = ffn_pre.clone();
    for v in ffn_act.data_mut() {
        *v = ops::gelu(*v);
    }
    let ffn_out = ops::linear_forward(&ffn_act, &p.ffn_out);
    let mut out = after_attn.clone();
    out.add_assign(&ffn_out);

    (
        out,
        EncoderLayerCache {
            input: x,
            ln1,
            ln1_out,
            attn,
            after_attn,
            ln2,
            ln2_out,
            ffn_pre,
        },
    )
}

/// Backward through one encoder layer; accumulates parameter gradients into
/// `grads` and returns the gradient w.r.t. the layer input.
fn encoder_layer_backward(
    p: &EncoderLayerParams,
    grads: &mut EncoderLayerParams,
    cache: &EncoderLayerCache,
    heads: usize,
    dout: &DenseMatrix,
) -> DenseMatrix {
    // ffn branch: out = after_attn + ffn_out(gelu(ffn_in(ln2(after_attn))))
    let mut ffn_act = cache.ffn_pre.clone();
    for v in ffn_act.data_mut() {
        *v = ops::gelu(*v);
    }
    let (dffn_act, dw_out, db_out) = ops::linear_backward(&ffn_act, &p.ffn_out, dout);
    grads.ffn_out.weight.add_assign(&dw_out);
    grads.ffn_out.bias.add_assign(&db_out);

    let mut dffn_pre = dffn_act;
    for (g, x) in dffn_pre.data_mut().iter_mut().zip(cache.ffn_pre.data()) {
        *g *= ops::gelu_grad(*x);
    }
    let (dln2_out, dw_in, db_in) = ops::linear_backward(&cache.ln2_out, &p.ffn_in, &dffn_pre);
    grads.ffn_in.weight.add_assign(&dw_in);
    grads.ffn_in.bias.add_assign(&db_in);

    let (dafter_from_ln2, dgamma2, dbeta2) = ops::layer_norm_backward(&cache.ln2, &p.ln2, &dln2_out);
    grads.ln2.gamma.add_assign(&dgamma2);
    grads.ln2.beta.add_assign(&dbeta2);

    let mut dafter_attn = dout.clone();
    dafter_attn.add_assign(&dafter_from_ln2);

    // attention branch: after_attn = x + attn(ln1(x))
    let (dln1_out, attn_grads) =
        ops::attention_backward(&cache.ln1_out, &p.attn, &cache.attn, heads, &dafter_attn);
    grads.attn.query.weight.add_assign(&attn_grads.query.weight);
    grads.attn.query.bias.add_assign(&attn_grads.query.bias);
    grads.attn.key.weight.add_assign(&attn_grads.key.weight);
    grads.attn.key.bias.add_assign(&attn_grads.key.bias);
    grads.attn.value.weight.add_assign(&attn_grads.value.weight);
    grads.attn.value.bias.add_assign(&attn_grads.value.bias);
    grads.attn.output.weight.add_assign(&attn_grads.output.weight);
    grads.attn.output.bias.add_assign(&attn_grads.output.bias);

    let (dx_from_ln1, dgamma1, dbeta1) = ops::layer_norm_backward(&cache.ln1, &p.ln1, &dln1_out);
    grads.ln1.gamma.add_assign(&dgamma1);
    grads.ln1.beta.add_assign(&dbeta1);

    let mut dx = dafter_attn;
    dx.add_assign(&dx_from_ln1);
    dx
}

fn stack_forward(
    mut x: DenseMatrix,
    stack: &[EncoderLayerParams],
    heads: usize,
) -> (DenseMatrix, Vec<EncoderLayerCache>) {
    let mut caches = Vec::with_capacity(stack.len());
    for layer in stack {
        let (out, cache) = encoder_layer_forward(x, layer, heads);
        caches.push(cache);
        x = out;
    }
    (x, caches)
}

fn stack_backward(
    stack: &[EncoderLayerParams],
    grads: &mut [EncoderLayerParams],
    caches: &[EncoderLayerCache],
    heads: usize,
    mut dout: DenseMatrix,
) -> DenseMatrix {
    for ((layer, g), cache) in stack.iter().zip(grads.iter_mut()).zip(caches).rev() {
        dout = encoder_layer_backward(layer, g, cache, heads, &dout);
    }
    dout
}

/// Runs the model on one video: `seg_features` is T x video_input_dim,
/// `step_features` is L x text_input_dim. Returns the L x T similarity
/// matrix and the cache for [`backward`].
pub fn forward(
    config: &ModelConfig,
    params: &ModelParams,
    seg_features: &DenseMatrix,
    step_features: &DenseMatrix,
) -> Result<(DenseMatrix, ForwardCache), ModelError> {
    let t = seg_features.rows();
    let l = step_features.rows();
    if t > config.max_positions {
        return Err(ModelError::TooManySegments {
            t,
            max: config.max_positions,
        });
    }
    if config.use_text_pe && l > config.max_positions {
        return Err(ModelError::TooManySegments {
            t: l,
            max: config.max_positions,
        });
    }
    if seg_features.cols() != config.video_input_dim {
        return Err(ModelError::InputDim {
            got: seg_features.cols(),
            expected: config.video_input_dim,
        });
    }
    if step_features.cols() != config.text_input_dim {
        return Err(ModelError::InputDim {
            got: step_features.cols(),
            expected: config.text_input_dim,
        });
    }

    let mut video = ops::linear_forward(seg_features, &params.video_proj);
    for r in 0..t {
        for c in 0..config.hidden_dim {
            let v = video.get(r, c) + params.pos_table.get(r, c);
            video.set(r, c, v);
        }
    }
    let mut text = ops::linear_forward(step_features, &params.text_proj);
    if config.use_text_pe {
        for r in 0..l {
            for c in 0..config.hidden_dim {
                let v = text.get(r, c) + params.pos_table.get(r, c);
                text.set(r, c, v);
            }
        }
    }

    let (video_out, video_layers) = stack_forward(video, &params.video_encoder, config.heads);
    let (text_out, text_layers) = stack_forward(text, &params.text_encoder, config.heads);

    // joint sequence: the T video tokens first, then the L step tokens
    let joint_in = DenseMatrix::vstack(&video_out, &text_out);
    let (joint_out, joint_layers) = stack_forward(joint_in, &params.joint_encoder, config.heads);
    let (video_pre_norm, text_pre_norm) = joint_out.split_rows(t);

    let (video_hat, video_l2) = ops::l2_normalize_forward(&video_pre_norm);
    let (text_hat, text_l2) = ops::l2_normalize_forward(&text_pre_norm);
    let a_hat = text_hat.matmul_transposed(&video_hat);

    Ok((
        a_hat,
        ForwardCache {
            t,
            l,
            seg_input: seg_features.clone(),
            step_input: step_features.clone(),
            video_layers,
            text_layers,
            joint_layers,
            video_pre_norm,
            text_pre_norm,
            video_l2,
            text_l2,
        },
    ))
}

/// Backpropagates `d_a_hat` (L x T) through the cached forward pass,
/// returning gradients for every parameter tensor.
pub fn backward(
    config: &ModelConfig,
    params: &ModelParams,
    cache: &ForwardCache,
    d_a_hat: &DenseMatrix,
) -> Result<ModelParams, ModelError> {
    if d_a_hat.rows() != cache.l || d_a_hat.cols() != cache.t {
        return Err(ModelError::CacheMismatch {
            rows: d_a_hat.rows(),
            cols: d_a_hat.cols(),
            l: cache.l,
            t: cache.t,
        });
    }
    let mut grads = zeros_like(params);

    // cosine head: a_hat = text_hat . video_hat^T
    let d_text_hat = d_a_hat.matmul(&cache.video_l2.normalized);
    let d_video_hat = d_a_hat.transpose().matmul(&cache.text_l2.normalized);

    let d_video_pre = ops::l2_normalize_backward(&cache.video_l2, &d_video_hat);
    let d_text_pre = ops::l2_normalize_backward(&cache.text_l2, &d_text_hat);

    let d_joint_out = DenseMatrix::vstack(&d_video_pre, &d_text_pre);
    let d_joint_in = stack_backward(
        &params.joint_encoder,
        &mut grads.joint_encoder,
        &cache.joint_layers,
        config.heads,
        d_joint_out,
    );
    let (d_video_out, d_text_out) = d_joint_in.split_rows(cache.t);

    let d_video = stack_backward(
        &params.video_encoder,
        &mut grads.video_encoder,
        &cache.video_layers,
        config.heads,
        d_video_out,
    );
    let d_text = stack_backward(
        &params.text_encoder,
        &mut grads.text_encoder,
        &cache.text_layers,
        config.heads,
        d_text_out,
    );

    // positional table rows that were added in forward
    for r in 0..cache.t {
        for c in 0..config.hidden_dim {
            let v = grads.pos_table.get(r, c) + d_video.get(r, c);
            grads.pos_table.set(r, c, v);
        }
    }
    if config.use_text_pe {
        for r in 0..cache.l {
            for c in 0..config.hidden_dim {
                let v = grads.pos_table.get(r, c) + d_text.get(r, c);
                grads.pos_table.set(r, c, v);
            }
        }
    }

    let (_, dw_v, db_v) = ops::linear_backward(&cache.seg_input, &params.video_proj, &d_video);
    grads.video_proj.weight.add_assign(&dw_v);
    grads.video_proj.bias.add_assign(&db_v);
    let (_, dw_t, db_t) = ops::linear_backward(&cache.step_input, &params.text_proj, &d_text);
    grads.text_proj.weight.add_assign(&dw_t);
    grads.text_proj.bias.add_assign(&db_t);

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            video_input_dim: 5,
            text_input_dim: 4,
            hidden_dim: 8,
            layers: 2,
            heads: 2,
            max_positions: 12,
            use_text_pe: false,
        }
    }

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn output_shape_and_cosine_range() {
        let config = tiny_config();
        let params = init_params(&config, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (t, l) in [(1, 1), (7, 3), (12, 5)] {
            let seg = random(&mut rng, t, config.video_input_dim);
            let steps = random(&mut rng, l, config.text_input_dim);
            let (a_hat, _) = forward(&config, &params, &seg, &steps).unwrap();
            assert_eq!((a_hat.rows(), a_hat.cols()), (l, t));
            for v in a_hat.data() {
                assert!(*v <= 1.0 + 1e-6 && *v >= -1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn too_many_segments_rejected() {
        let config = tiny_config();
        let params = init_params(&config, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seg = random(&mut rng, 13, config.video_input_dim);
        let steps = random(&mut rng, 2, config.text_input_dim);
        assert!(matches!(
            forward(&config, &params, &seg, &steps),
            Err(ModelError::TooManySegments { t: 13, max: 12 })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let config = tiny_config();
        let params = init_params(&config, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seg = random(&mut rng, 6, config.video_input_dim);
        let steps = random(&mut rng, 3, config.text_input_dim);
        let (a, _) = forward(&config, &params, &seg, &steps).unwrap();
        let (b, _) = forward(&config, &params, &seg, &steps).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_order_equivariance_without_text_pe() {
        let config = tiny_config();
        let params = init_params(&config, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seg = random(&mut rng, 6, config.video_input_dim);
        let steps = random(&mut rng, 4, config.text_input_dim);
        let perm = [2usize, 0, 3, 1];
        let permuted = DenseMatrix::from_rows(
            &perm.iter().map(|&i| steps.row(i).to_vec()).collect::<Vec<_>>(),
        )
        .unwrap();
        let (a, _) = forward(&config, &params, &seg, &steps).unwrap();
        let (b, _) = forward(&config, &params, &seg, &permuted).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            for t in 0..6 {
                assert!(
                    (a.get(old_row, t) - b.get(new_row, t)).abs() < 1e-9,
                    "row {} vs {}",
                    old_row,
                    new_row
                );
            }
        }
    }

    #[test]
    fn text_pe_breaks_equivariance() {
        let config = ModelConfig {
            use_text_pe: true,
            ..tiny_config()
        };
        let params = init_params(&config, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seg = random(&mut rng, 6, config.video_input_dim);
        let steps = random(&mut rng, 4, config.text_input_dim);
        let perm = [2usize, 0, 3, 1];
        let permuted = DenseMatrix::from_rows(
            &perm.iter().map(|&i| steps.row(i).to_vec()).collect::<Vec<_>>(),
        )
        .unwrap();
        let (a, _) = forward(&config, &params, &seg, &steps).unwrap();
        let (b, _) = forward(&config, &params, &seg, &permuted).unwrap();
        let mut max_diff: f64 = 0.0;
        for (new_row, &old_row) in perm.iter().enumerate() {
            for t in 0..6 {
                max_diff = max_diff.max((a.get(old_row, t) - b.get(new_row, t)).abs());
            }
        }
        assert!(max_diff > 1e-6);
    }

    #[test]
    fn attention_rows_sum_to_one_across_model() {
        let config = tiny_config();
        let params = init_params(&config, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seg = random(&mut rng, 5, config.video_input_dim);
        let steps = random(&mut rng, 3, config.text_input_dim);
        let (_, cache) = forward(&config, &params, &seg, &steps).unwrap();
        let mut seen = 0;
        for probs in cache.attention_probs() {
            for r in 0..probs.rows() {
                let s: f64 = probs.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
            seen += 1;
        }
        // 3 stacks x 2 layers x 2 heads
        assert_eq!(seen, 12);
    }

    #[test]
    fn rescaling_pre_norm_step_row_leaves_its_similarities() {
        // rescale the final text features of one row before normalization and
        // push both versions through only the cosine head
        let config = tiny_config();
        let params = init_params(&config, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let seg = random(&mut rng, 6, config.video_input_dim);
        let steps = random(&mut rng, 3, config.text_input_dim);
        let (a_hat, cache) = forward(&config, &params, &seg, &steps).unwrap();

        let mut scaled = cache.text_features_pre_norm().clone();
        for v in scaled.row_mut(1) {
            *v *= 37.0;
        }
        let (scaled_hat, _) = ops::l2_normalize_forward(&scaled);
        let (video_hat, _) = ops::l2_normalize_forward(cache.video_features_pre_norm());
        let redone = scaled_hat.matmul_transposed(&video_hat);
        for t in 0..6 {
            assert!((redone.get(1, t) - a_hat.get(1, t)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let config = tiny_config();
        let params = init_params(&config, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let seg = random(&mut rng, 4, config.video_input_dim);
        let steps = random(&mut rng, 2, config.text_input_dim);
        let (a_hat, cache) = forward(&config, &params, &seg, &steps).unwrap();
        let zero = DenseMatrix::zeros(a_hat.rows(), a_hat.cols());
        let grads = backward(&config, &params, &cache, &zero).unwrap();
        for (_, t) in grads.tensors() {
            assert!(t.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn doubling_upstream_gradient_doubles_grads() {
        let config = tiny_config();
        let params = init_params(&config, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let seg = random(&mut rng, 4, config.video_input_dim);
        let steps = random(&mut rng, 2, config.text_input_dim);
        let (_, cache) = forward(&config, &params, &seg, &steps).unwrap();
        let d = random(&mut rng, 2, 4);
        let mut d2 = d.clone();
        d2.scale(2.0);
        let g1 = backward(&config, &params, &cache, &d).unwrap();
        let g2 = backward(&config, &params, &cache, &d2).unwrap();
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors().iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((2.0 * x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn backward_rejects_stale_cache_shape() {
        let config = tiny_config();
        let params = init_params(&config, 15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let seg = random(&mut rng, 4, config.video_input_dim);
        let steps = random(&mut rng, 2, config.text_input_dim);
        let (_, cache) = forward(&config, &params, &seg, &steps).unwrap();
        let wrong = DenseMatrix::zeros(3, 4);
        assert!(matches!(
            backward(&config, &params, &cache, &wrong),
            Err(ModelError::CacheMismatch { .. })
        ));
    }

    /// Full-model gradient check with a fixed random probe objective
    /// J = sum(W * a_hat); backward(W) must match central differences.
    #[test]
    fn model_gradients_match_finite_differences() {
        let config = ModelConfig {
            use_text_pe: true, // exercise the text PE path too
            ..tiny_config()
        };
        let params = init_params(&config, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let t = 5;
        let l = 3;
        let seg = random(&mut rng, t, config.video_input_dim);
        let steps = random(&mut rng, l, config.text_input_dim);
        let w = random(&mut rng, l, t);

        let (_, cache) = forward(&config, &params, &seg, &steps).unwrap();
        let grads = backward(&config, &params, &cache, &w).unwrap();

        let objective = |p: &ModelParams| {
            let (a_hat, _) = forward(&config, p, &seg, &steps).unwrap();
            a_hat.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };

        let h = 1e-5;
        let named_grads = grads.tensors();
        let mut checked = 0;
        for (tensor_idx, (name, g)) in named_grads.iter().enumerate() {
            // a handful of entries per tensor keeps this fast and still
            // covers every parameter group
            let len = g.rows() * g.cols();
            let picks = [0, len / 2, len.saturating_sub(1)];
            for &idx in picks.iter() {
                if idx >= len {
                    continue;
                }
                // pos_table rows beyond the live sequence get no gradient
                if name == "pos_table" && idx / g.cols() >= t.max(l) {
                    continue;
                }
                let mut plus = params.clone();
                plus.tensors_mut()[tensor_idx].1.data_mut()[idx] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[tensor_idx].1.data_mut()[idx] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = g.data()[idx];
                let abs = (fd - an).abs();
                let rel = abs / fd.abs().max(an.abs()).max(1e-8);
                // the key bias is a true zero-gradient parameter (softmax is
                // shift invariant per score row), so allow a tiny absolute slack
                assert!(
                    rel < 1e-4 || abs < 1e-8,
                    "{}[{}]: fd={} analytic={} rel={}",
                    name,
                    idx,
                    fd,
                    an,
                    rel
                );
                checked += 1;
            }
        }
        assert!(checked > 100, "checked only {} entries", checked);
    }
}
