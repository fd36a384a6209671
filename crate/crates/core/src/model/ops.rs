//! Numeric building blocks of the encoder: softmax, layer norm, GELU and
//! masked scaled-dot-product attention. All arithmetic is `f32`.

use ndarray::{Array2, ArrayView2, Axis};

/// Additive bias applied to masked (padding) keys before the softmax.
pub const MASK_BIAS: f32 = -1e9;

pub fn softmax(xs: &[f32]) -> Vec<f32> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Max-subtracted softmax. A no-op on an empty slice.
pub fn softmax_in_place(xs: &mut [f32]) {
    let max = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !max.is_finite() {
        return;
    }
    let mut sum = 0.0f32;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

pub fn layer_norm(xs: &[f32], scale: &[f32], bias: &[f32], eps: f32) -> Vec<f32> {
    let mut out = xs.to_vec();
    layer_norm_in_place(&mut out, scale, bias, eps);
    out
}

/// `(x - mean) / sqrt(var + eps) * scale + bias` with population variance.
pub fn layer_norm_in_place(xs: &mut [f32], scale: &[f32], bias: &[f32], eps: f32) {
    debug_assert_eq!(xs.len(), scale.len());
    debug_assert_eq!(xs.len(), bias.len());
    let n = xs.len() as f32;
    let mean = xs.iter().sum::<f32>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f32>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    for ((x, s), b) in xs.iter_mut().zip(scale).zip(bias) {
        *x = (*x - mean) * inv * s + b;
    }
}

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

/// Scaled dot-product attention for one head. `key_mask[j]` is true for keys
/// that may be attended to. Returns `(context, probabilities)`.
pub fn attention_with_probs(
    q: ArrayView2<f32>,
    k: ArrayView2<f32>,
    v: ArrayView2<f32>,
    key_mask: &[bool],
) -> (Array2<f32>, Array2<f32>) {
    let d_head = q.ncols() as f32;
    let scale = d_head.sqrt();
    // `dot` with a transposed operand may return column-major storage.
    let mut scores = q.dot(&k.t()).as_standard_layout().mapv(|s| s / scale);
    for mut row in scores.axis_iter_mut(Axis(0)) {
        for (s, &keep) in row.iter_mut().zip(key_mask) {
            if !keep {
                *s += MASK_BIAS;
            }
        }
        softmax_in_place(
            row.as_slice_mut()
                .expect("rows of a standard-layout array are contiguous"),
        );
    }
    let context = scores.dot(&v);
    (context, scores)
}

pub fn attention(q: ArrayView2<f32>, k: ArrayView2<f32>, v: ArrayView2<f32>, key_mask: &[bool]) -> Array2<f32> {
    attention_with_probs(q, k, v, key_mask).0
}
