use crate::nn::softmax_in_place;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Mean negative log-softmax of the target class over the rows of `logits`, and its
/// gradient `(softmax − onehot) / rows`.
pub fn cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    let (rows, classes) = logits.shape();
    if targets.len() != rows {
        return Err(Error::shape("cross_entropy", rows, targets.len()));
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(Error::Parameter(format!("target {t} out of range for {classes} classes")));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[t];
        let g = grad.row_mut(r);
        softmax_in_place(g);
        g[t] -= 1.0;
        g.iter_mut().for_each(|v| *v /= rows as f64);
    }
    Ok((loss / rows as f64, grad))
}
