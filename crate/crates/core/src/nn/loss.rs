//! Batch losses and their output-layer gradients.

use crate::data::Labels;
use crate::error::{CoreError, Result};
use crate::linalg::DenseMatrix;
use crate::nn::LossKind;

/// Per-example losses plus d(mean loss)/d(predictions), where the gradient is
/// already scaled by `inv_n` (1 / full batch size). With `inv_n == 0` the
/// gradient matrix is all zeros, which callers use for loss-only passes.
pub fn per_example_losses_and_grad(
    preds: &DenseMatrix,
    labels: &Labels,
    kind: LossKind,
    inv_n: f64,
) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = preds.rows();
    let d = preds.cols();
    let mut grad = DenseMatrix::zeros(n, d);
    let mut losses = vec![0.0; n];
    match (kind, labels) {
        (LossKind::Mse, Labels::Real(targets)) => {
            if targets.len() != n {
                return Err(CoreError::config("targets length mismatch"));
            }
            // Real targets address single-output models; per-example loss is
            // the squared error of the lone output.
            if d != 1 {
                return Err(CoreError::config(format!(
                    "mse with scalar targets requires a 1-d output, got {d}"
                )));
            }
            for i in 0..n {
                let e = preds.get(i, 0) - targets[i];
                losses[i] = e * e;
                grad.set(i, 0, 2.0 * e * inv_n);
            }
        }
        (LossKind::CrossEntropy, Labels::Class(classes)) => {
            if classes.len() != n {
                return Err(CoreError::config("targets length mismatch"));
            }
            for i in 0..n {
                let row = preds.row(i);
                let t = classes[i] as usize;
                if t >= d {
                    return Err(CoreError::config(format!(
                        "class index {t} out of range for {d} logits"
                    )));
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
                let log_z = max + sum_exp.ln();
                losses[i] = log_z - row[t];
                let g = grad.row_mut(i);
                for (j, &z) in row.iter().enumerate() {
                    let softmax = (z - max).exp() / sum_exp;
                    g[j] = (softmax - if j == t { 1.0 } else { 0.0 }) * inv_n;
                }
            }
        }
        (LossKind::Mse, Labels::Class(_)) => {
            return Err(CoreError::domain("mse requires real-valued targets"))
        }
        (LossKind::CrossEntropy, Labels::Real(_)) => {
            return Err(CoreError::domain("cross-entropy requires class targets"))
        }
    }
    Ok((losses, grad))
}
