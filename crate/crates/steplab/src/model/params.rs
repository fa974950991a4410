//! Learnable tensors and their initialization.
//!
//! Gradients and optimizer moments reuse `ModelParams` with identical shapes,
//! so everything that walks parameters does it through the named-tensor
//! visitors below, in one canonical order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::mat::DenseMatrix;

use super::{ModelConfig, ModelError};

/// Scale of the random positional table at init.
const POS_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// in_dim x out_dim.
    pub weight: DenseMatrix,
    /// 1 x out_dim.
    pub bias: DenseMatrix,
}

impl LinearParams {
    fn init(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = DenseMatrix::from_vec(
            in_dim,
            out_dim,
            (0..in_dim * out_dim)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        )
        .expect("finite init");
        let bias = DenseMatrix::from_vec(
            1,
            out_dim,
            (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
        )
        .expect("finite init");
        Self { weight, bias }
    }

    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(in_dim, out_dim),
            bias: DenseMatrix::zeros(1, out_dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    /// 1 x dim scale, all ones at init.
    pub gamma: DenseMatrix,
    /// 1 x dim shift, all zeros at init.
    pub beta: DenseMatrix,
}

impl LayerNormParams {
    fn init(dim: usize) -> Self {
        Self {
            gamma: DenseMatrix::from_vec(1, dim, vec![1.0; dim]).expect("finite init"),
            beta: DenseMatrix::zeros(1, dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        Self {
            gamma: DenseMatrix::zeros(1, dim),
            beta: DenseMatrix::zeros(1, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: LinearParams,
    pub key: LinearParams,
    pub value: LinearParams,
    pub output: LinearParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub ln1: LayerNormParams,
    pub attn: AttentionParams,
    pub ln2: LayerNormParams,
    pub ffn_in: LinearParams,
    pub ffn_out: LinearParams,
}

impl EncoderLayerParams {
    fn init(rng: &mut ChaCha8Rng, dim: usize, ffn_dim: usize) -> Self {
        Self {
            ln1: LayerNormParams::init(dim),
            attn: AttentionParams {
                query: LinearParams::init(rng, dim, dim),
                key: LinearParams::init(rng, dim, dim),
                value: LinearParams::init(rng, dim, dim),
                output: LinearParams::init(rng, dim, dim),
            },
            ln2: LayerNormParams::init(dim),
            ffn_in: LinearParams::init(rng, dim, ffn_dim),
            ffn_out: LinearParams::init(rng, ffn_dim, dim),
        }
    }

    fn zeros(dim: usize, ffn_dim: usize) -> Self {
        Self {
            ln1: LayerNormParams::zeros(dim),
            attn: AttentionParams {
                query: LinearParams::zeros(dim, dim),
                key: LinearParams::zeros(dim, dim),
                value: LinearParams::zeros(dim, dim),
                output: LinearParams::zeros(dim, dim),
            },
            ln2: LayerNormParams::zeros(dim),
            ffn_in: LinearParams::zeros(dim, ffn_dim),
            ffn_out: LinearParams::zeros(ffn_dim, dim),
        }
    }
}

/// Every learnable tensor of the alignment model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub video_proj: LinearParams,
    pub text_proj: LinearParams,
    /// max_positions x hidden_dim learnable positional table.
    pub pos_table: DenseMatrix,
    pub video_encoder: Vec<EncoderLayerParams>,
    pub text_encoder: Vec<EncoderLayerParams>,
    pub joint_encoder: Vec<EncoderLayerParams>,
}

/// Deterministic parameter initialization: scaled uniform for linear maps,
/// identity layer norms, small random positional table.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    config.validate()?;
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.hidden_dim;
    let ffn = config.ffn_dim();

    let video_proj = LinearParams::init(&mut rng, config.video_input_dim, d);
    let text_proj = LinearParams::init(&mut rng, config.text_input_dim, d);

    let normal = Normal::new(0.0, POS_INIT_STD).expect("valid normal");
    let pos_table = DenseMatrix::from_vec(
        config.max_positions,
        d,
        (0..config.max_positions * d)
            .map(|_| normal.sample(&mut rng))
            .collect(),
    )
    .expect("finite init");

    let stack = |rng: &mut ChaCha8Rng| -> Vec<EncoderLayerParams> {
        (0..config.layers)
            .map(|_| EncoderLayerParams::init(rng, d, ffn))
            .collect()
    };
    Ok(ModelParams {
        video_proj,
        text_proj,
        pos_table,
        video_encoder: stack(&mut rng),
        text_encoder: stack(&mut rng),
        joint_encoder: stack(&mut rng),
    })
}

/// All-zero tensors with the same shapes as `like`; the gradient container.
pub fn zeros_like(like: &ModelParams) -> ModelParams {
    let d = like.pos_table.cols();
    let ffn = like.video_encoder[0].ffn_in.weight.cols();
    ModelParams {
        video_proj: LinearParams::zeros(like.video_proj.weight.rows(), d),
        text_proj: LinearParams::zeros(like.text_proj.weight.rows(), d),
        pos_table: DenseMatrix::zeros(like.pos_table.rows(), d),
        video_encoder: like.video_encoder.iter().map(|_| EncoderLayerParams::zeros(d, ffn)).collect(),
        text_encoder: like.text_encoder.iter().map(|_| EncoderLayerParams::zeros(d, ffn)).collect(),
        joint_encoder: like.joint_encoder.iter().map(|_| EncoderLayerParams::zeros(d, ffn)).collect(),
    }
}

impl ModelParams {
    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = Vec::new();
        out.push(("video_proj.weight".to_string(), &self.video_proj.weight));
        out.push(("video_proj.bias".to_string(), &self.video_proj.bias));
        out.push(("text_proj.weight".to_string(), &self.text_proj.weight));
        out.push(("text_proj.bias".to_string(), &self.text_proj.bias));
        out.push(("pos_table".to_string(), &self.pos_table));
        for (stack_name, stack) in [
            ("video", &self.video_encoder),
            ("text", &self.text_encoder),
            ("joint", &self.joint_encoder),
        ] {
            for (i, layer) in stack.iter().enumerate() {
                let base = format!("{}.{}", stack_name, i);
                out.push((format!("{base}.ln1.gamma"), &layer.ln1.gamma));
                out.push((format!("{base}.ln1.beta"), &layer.ln1.beta));
                out.push((format!("{base}.attn.query.weight"), &layer.attn.query.weight));
                out.push((format!("{base}.attn.query.bias"), &layer.attn.query.bias));
                out.push((format!("{base}.attn.key.weight"), &layer.attn.key.weight));
                out.push((format!("{base}.attn.key.bias"), &layer.attn.key.bias));
                out.push((format!("{base}.attn.value.weight"), &layer.attn.value.weight));
                out.push((format!("{base}.attn.value.bias"), &layer.attn.value.bias));
                out.push((format!("{base}.attn.output.weight"), &layer.attn.output.weight));
                out.push((format!("{base}.attn.output.bias"), &layer.attn.output.bias));
                out.push((format!("{base}.ln2.gamma"), &layer.ln2.gamma));
                out.push((format!("{base}.ln2.beta"), &layer.ln2.beta));
                out.push((format!("{base}.ffn_in.weight"), &layer.ffn_in.weight));
                out.push((format!("{base}.ffn_in.bias"), &layer.ffn_in.bias));
                out.push((format!("{base}.ffn_out.weight"), &layer.ffn_out.weight));
                out.push((format!("{base}.ffn_out.bias"), &layer.ffn_out.bias));
            }
        }
        out
    }

    /// Same tensors as [`tensors`](Self::tensors), mutably.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut DenseMatrix)> {
        let mut out: Vec<(String, &mut DenseMatrix)> = Vec::new();
        out.push(("video_proj.weight".to_string(), &mut self.video_proj.weight));
        out.push(("video_proj.bias".to_string(), &mut self.video_proj.bias));
        out.push(("text_proj.weight".to_string(), &mut self.text_proj.weight));
        out.push(("text_proj.bias".to_string(), &mut self.text_proj.bias));
        out.push(("pos_table".to_string(), &mut self.pos_table));
        for (stack_name, stack) in [
            ("video", &mut self.video_encoder),
            ("text", &mut self.text_encoder),
            ("joint", &mut self.joint_encoder),
        ] {
            for (i, layer) in stack.iter_mut().enumerate() {
                let base = format!("{}.{}", stack_name, i);
                out.push((format!("{base}.ln1.gamma"), &mut layer.ln1.gamma));
                out.push((format!("{base}.ln1.beta"), &mut layer.ln1.beta));
                out.push((format!("{base}.attn.query.weight"), &mut layer.attn.query.weight));
                out.push((format!("{base}.attn.query.bias"), &mut layer.attn.query.bias));
                out.push((format!("{base}.attn.key.weight"), &mut layer.attn.key.weight));
                out.push((format!("{base}.attn.key.bias"), &mut layer.attn.key.bias));
                out.push((format!("{base}.attn.value.weight"), &mut layer.attn.value.weight));
                out.push((format!("{base}.attn.value.bias"), &mut layer.attn.value.bias));
                out.push((format!("{base}.attn.output.weight"), &mut layer.attn.output.weight));
                out.push((format!("{base}.attn.output.bias"), &mut layer.attn.output.bias));
                out.push((format!("{base}.ln2.gamma"), &mut layer.ln2.gamma));
                out.push((format!("{base}.ln2.beta"), &mut layer.ln2.beta));
                out.push((format!("{base}.ffn_in.weight"), &mut layer.ffn_in.weight));
                out.push((format!("{base}.ffn_in.bias"), &mut layer.ffn_in.bias));
                out.push((format!("{base}.ffn_out.weight"), &mut layer.ffn_out.weight));
                out.push((format!("{base}.ffn_out.bias"), &mut layer.ffn_out.bias));
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors()
            .iter()
            .map(|(_, t)| t.rows() * t.cols())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            video_input_dim: 6,
            text_input_dim: 5,
            hidden_dim: 8,
            layers: 2,
            heads: 2,
            max_positions: 16,
            use_text_pe: false,
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let config = small_config();
        let a = init_params(&config, 42).unwrap();
        let b = init_params(&config, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let config = small_config();
        let a = init_params(&config, 1).unwrap();
        let b = init_params(&config, 2).unwrap();
        assert_ne!(a.video_proj.weight, b.video_proj.weight);
    }

    #[test]
    fn layer_norm_scales_start_at_one() {
        let params = init_params(&small_config(), 7).unwrap();
        for layer in params
            .video_encoder
            .iter()
            .chain(&params.text_encoder)
            .chain(&params.joint_encoder)
        {
            assert!(layer.ln1.gamma.data().iter().all(|v| *v == 1.0));
            assert!(layer.ln1.beta.data().iter().all(|v| *v == 0.0));
            assert!(layer.ln2.gamma.data().iter().all(|v| *v == 1.0));
            assert!(layer.ln2.beta.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let params = init_params(&small_config(), 9).unwrap();
        let bound = 1.0 / 6.0_f64.sqrt();
        for v in params.video_proj.weight.data() {
            assert!(v.abs() <= bound);
        }
    }

    #[test]
    fn tensor_names_are_unique_and_orders_agree() {
        let mut params = init_params(&small_config(), 3).unwrap();
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        let mut_names: Vec<String> = params.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, mut_names);
    }

    #[test]
    fn zeros_like_matches_shapes() {
        let params = init_params(&small_config(), 5).unwrap();
        let z = zeros_like(&params);
        for ((n1, a), (n2, b)) in params.tensors().iter().zip(z.tensors().iter()) {
            assert_eq!(n1, n2);
            assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
            assert!(b.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let bad = ModelConfig {
            hidden_dim: 10,
            heads: 3,
            ..small_config()
        };
        assert!(init_params(&bad, 0).is_err());
    }
}
