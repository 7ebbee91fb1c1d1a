use super::Tensor3;
use crate::numerics::Matrix;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF `Φ(x)`.
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// `d/dx gelu(x) = Φ(x) + x φ(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    gelu_grad_with_cdf(x, normal_cdf(x))
}

pub(crate) fn gelu_grad_with_cdf(x: f64, cdf: f64) -> f64 {
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// GELU of every entry, also returning `Φ(x)` for a later [`gelu_backward_cached`].
pub fn gelu_forward_cached(x: &Tensor3) -> (Tensor3, Vec<f64>) {
    let cdf: Vec<f64> = x.data().iter().map(|&v| normal_cdf(v)).collect();
    let data = x.data().iter().zip(&cdf).map(|(&v, &c)| v * c).collect();
    (Tensor3::from_vec(x.batch(), x.tokens(), x.channels(), data).expect("same shape"), cdf)
}

/// As [`gelu_backward`], reusing the `Φ(x)` values from the forward pass.
pub fn gelu_backward_cached(x: &Tensor3, cdf: &[f64], dy: &Tensor3) -> Tensor3 {
    let data = x
        .data()
        .iter()
        .zip(cdf)
        .zip(dy.data())
        .map(|((&v, &c), &d)| d * gelu_grad_with_cdf(v, c))
        .collect();
    Tensor3::from_vec(x.batch(), x.tokens(), x.channels(), data).expect("same shape")
}

pub fn gelu_forward(x: &Tensor3) -> Tensor3 {
    let data = x.data().iter().map(|&v| gelu(v)).collect();
    Tensor3::from_vec(x.batch(), x.tokens(), x.channels(), data).expect("same shape")
}

pub fn gelu_backward(x: &Tensor3, dy: &Tensor3) -> Tensor3 {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &d)| d * gelu_grad(v))
        .collect();
    Tensor3::from_vec(x.batch(), x.tokens(), x.channels(), data).expect("same shape")
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Turns `d`, the gradient w.r.t. a softmax output row `probs`, into the gradient
/// w.r.t. its input: `p ⊙ (d − ⟨d, p⟩)`.
pub fn softmax_backward_in_place(probs: &[f64], d: &mut [f64]) {
    let dot: f64 = d.iter().zip(probs).map(|(x, y)| x * y).sum();
    for (v, &p) in d.iter_mut().zip(probs) {
        *v = p * (*v - dot);
    }
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}
