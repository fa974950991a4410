//! Layer primitives: forward passes that keep what backward needs.
//!
//! Gradients here are exact derivatives of the forward code, not
//! approximations; the finite-difference tests in this module and the
//! acceptance suite hold them to 1e-4 relative error.

use crate::mat::DenseMatrix;

use super::params::{AttentionParams, LayerNormParams, LinearParams};

const LN_EPS: f64 = 1e-5;
const GELU_COEF: f64 = 0.044_715;

fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

// ---- linear -------------------------------------------------------------

pub fn linear_forward(x: &DenseMatrix, p: &LinearParams) -> DenseMatrix {
    let mut out = x.matmul(&p.weight);
    out.add_row_broadcast(&p.bias);
    out
}

/// Returns (dx, dweight, dbias).
pub fn linear_backward(
    x: &DenseMatrix,
    p: &LinearParams,
    dout: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let dx = dout.matmul_transposed(&p.weight);
    let dw = x.transpose().matmul(dout);
    let mut db = DenseMatrix::zeros(1, dout.cols());
    for r in 0..dout.rows() {
        for c in 0..dout.cols() {
            db.set(0, c, db.get(0, c) + dout.get(r, c));
        }
    }
    (dx, dw, db)
}

// ---- layer norm ---------------------------------------------------------

pub struct LayerNormCache {
    /// (x - mean) * inv_std, per row.
    pub normalized: DenseMatrix,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm_forward(x: &DenseMatrix, p: &LayerNormParams) -> (DenseMatrix, LayerNormCache) {
    let d = x.cols();
    let mut normalized = DenseMatrix::zeros(x.rows(), d);
    let mut out = DenseMatrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(istd);
        for c in 0..d {
            let n = (row[c] - mean) * istd;
            normalized.set(r, c, n);
            out.set(r, c, n * p.gamma.get(0, c) + p.beta.get(0, c));
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

/// Returns (dx, dgamma, dbeta).
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    p: &LayerNormParams,
    dout: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let (rows, d) = (dout.rows(), dout.cols());
    let mut dgamma = DenseMatrix::zeros(1, d);
    let mut dbeta = DenseMatrix::zeros(1, d);
    let mut dx = DenseMatrix::zeros(rows, d);
    for r in 0..rows {
        let xhat = cache.normalized.row(r);
        let dy = dout.row(r);
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        // dxhat = dy * gamma, folded into the two row means
        for c in 0..d {
            let dxh = dy[c] * p.gamma.get(0, c);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[c];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let istd = cache.inv_std[r];
        for c in 0..d {
            let dxh = dy[c] * p.gamma.get(0, c);
            dx.set(r, c, istd * (dxh - mean_dxhat - xhat[c] * mean_dxhat_xhat));
            dgamma.set(0, c, dgamma.get(0, c) + dy[c] * xhat[c]);
            dbeta.set(0, c, dbeta.get(0, c) + dy[c]);
        }
    }
    (dx, dgamma, dbeta)
}

// ---- gelu ---------------------------------------------------------------

/// Smooth tanh-form GELU.
pub fn gelu(x: f64) -> f64 {
    let u = sqrt_2_over_pi() * (x + GELU_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let c = sqrt_2_over_pi();
    let u = c * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    let du = c * (1.0 + 3.0 * GELU_COEF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

// ---- row softmax with jacobian ------------------------------------------

pub fn softmax_rows(scores: &DenseMatrix) -> DenseMatrix {
    let mut out = scores.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row {
            *v /= sum;
        }
    }
    out
}

/// Row-wise softmax jacobian product: ds = p * (dp - sum(dp * p)).
pub fn softmax_rows_backward(probs: &DenseMatrix, dprobs: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let dp = dprobs.row(r);
        let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
        for c in 0..probs.cols() {
            out.set(r, c, p[c] * (dp[c] - dot));
        }
    }
    out
}

// ---- multi-head self attention -------------------------------------------

pub struct AttentionCache {
    pub q: DenseMatrix,
    pub k: DenseMatrix,
    pub v: DenseMatrix,
    /// Softmax attention weights, one n x n matrix per head.
    pub probs: Vec<DenseMatrix>,
    /// Concatenated per-head contexts before the output projection.
    pub context: DenseMatrix,
}

fn head_slice(m: &DenseMatrix, head: usize, head_dim: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), head_dim);
    let off = head * head_dim;
    for r in 0..m.rows() {
        for c in 0..head_dim {
            out.set(r, c, m.get(r, off + c));
        }
    }
    out
}

fn head_write(dst: &mut DenseMatrix, src: &DenseMatrix, head: usize, head_dim: usize) {
    let off = head * head_dim;
    for r in 0..src.rows() {
        for c in 0..head_dim {
            dst.set(r, off + c, src.get(r, c));
        }
    }
}

pub fn attention_forward(
    x: &DenseMatrix,
    p: &AttentionParams,
    heads: usize,
) -> (DenseMatrix, AttentionCache) {
    let d = x.cols();
    let head_dim = d / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let q = linear_forward(x, &p.query);
    let k = linear_forward(x, &p.key);
    let v = linear_forward(x, &p.value);

    let mut context = DenseMatrix::zeros(x.rows(), d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = head_slice(&q, h, head_dim);
        let kh = head_slice(&k, h, head_dim);
        let vh = head_slice(&v, h, head_dim);
        let mut scores = qh.matmul_transposed(&kh);
        scores.scale(scale);
        let ph = softmax_rows(&scores);
        let ctx_h = ph.matmul(&vh);
        head_write(&mut context, &ctx_h, h, head_dim);
        probs.push(ph);
    }
    let out = linear_forward(&context, &p.output);
    (out, AttentionCache { q, k, v, probs, context })
}

/// Returns (dx, gradient holder mirroring `p`).
pub fn attention_backward(
    x: &DenseMatrix,
    p: &AttentionParams,
    cache: &AttentionCache,
    heads: usize,
    dout: &DenseMatrix,
) -> (DenseMatrix, AttentionParams) {
    let d = x.cols();
    let head_dim = d / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let (dcontext, dw_o, db_o) = linear_backward(&cache.context, &p.output, dout);

    let mut dq = DenseMatrix::zeros(x.rows(), d);
    let mut dk = DenseMatrix::zeros(x.rows(), d);
    let mut dv = DenseMatrix::zeros(x.rows(), d);
    for h in 0..heads {
        let qh = head_slice(&cache.q, h, head_dim);
        let kh = head_slice(&cache.k, h, head_dim);
        let vh = head_slice(&cache.v, h, head_dim);
        let ph = &cache.probs[h];
        let dctx_h = head_slice(&dcontext, h, head_dim);

        let dprobs = dctx_h.matmul_transposed(&vh);
        let dvh = ph.transpose().matmul(&dctx_h);
        let mut dscores = softmax_rows_backward(ph, &dprobs);
        dscores.scale(scale);
        let dqh = dscores.matmul(&kh);
        let dkh = dscores.transpose().matmul(&qh);

        head_write(&mut dq, &dqh, h, head_dim);
        head_write(&mut dk, &dkh, h, head_dim);
        head_write(&mut dv, &dvh, h, head_dim);
    }

    let (dx_q, dw_q, db_q) = linear_backward(x, &p.query, &dq);
    let (dx_k, dw_k, db_k) = linear_backward(x, &p.key, &dk);
    let (dx_v, dw_v, db_v) = linear_backward(x, &p.value, &dv);

    let mut dx = dx_q;
    dx.add_assign(&dx_k);
    dx.add_assign(&dx_v);

    let grads = AttentionParams {
        query: LinearParams { weight: dw_q, bias: db_q },
        key: LinearParams { weight: dw_k, bias: db_k },
        value: LinearParams { weight: dw_v, bias: db_v },
        output: LinearParams { weight: dw_o, bias: db_o },
    };
    (dx, grads)
}

// ---- row l2 normalization -------------------------------------------------

pub struct L2NormCache {
    pub normalized: DenseMatrix,
    pub norms: Vec<f64>,
}

pub fn l2_normalize_forward(x: &DenseMatrix) -> (DenseMatrix, L2NormCache) {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        norms.push(norm);
        if norm > 0.0 {
            for v in row {
                *v /= norm;
            }
        }
    }
    let cache = L2NormCache {
        normalized: out.clone(),
        norms,
    };
    (out, cache)
}

/// d/dx of y = x / |x|: dx = (dy - y * dot(y, dy)) / |x|.
/// Zero rows pass gradients through unchanged, mirroring the forward.
pub fn l2_normalize_backward(cache: &L2NormCache, dout: &DenseMatrix) -> DenseMatrix {
    let mut dx = DenseMatrix::zeros(dout.rows(), dout.cols());
    for r in 0..dout.rows() {
        let norm = cache.norms[r];
        let y = cache.normalized.row(r);
        let dy = dout.row(r);
        if norm == 0.0 {
            dx.row_mut(r).copy_from_slice(dy);
            continue;
        }
        let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
        for c in 0..dout.cols() {
            dx.set(r, c, (dy[c] - y[c] * dot) / norm);
        }
    }
    dx
}
