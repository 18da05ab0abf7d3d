//! Dense neural models with hand-coded backward passes.
//!
//! Two architectures cover every experiment in this crate: a ReLU MLP and a
//! small two-stage convnet for 28x28 grayscale images. Both expose exact
//! analytic gradients of the mean batch loss; gradient correctness is pinned
//! by finite-difference tests.

mod adam;
pub mod checkpoint;
mod conv;
mod loss;
mod mlp;

pub use adam::{adam_step, sgd_step, AdamState};
pub use conv::{ConvNetParams, IMAGE_SIDE, INPUT_PIXELS, MNIST_MEAN, MNIST_STD};
pub use mlp::MlpParams;

use crate::data::Labels;
use crate::error::{CoreError, Result};
use crate::linalg::DenseMatrix;
use crate::LabeledDataset;
use rayon::prelude::*;

/// Fixed work-chunk size for batch parallelism. Reductions run in chunk
/// order, so results do not depend on the number of worker threads.
pub(crate) const BATCH_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Loss(LossKind),
    Accuracy,
}

/// Model parameters; the same structure doubles as its gradient container.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Mlp(MlpParams),
    Conv(ConvNetParams),
}

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        match self {
            ModelParams::Mlp(m) => m.input_dim(),
            ModelParams::Conv(_) => INPUT_PIXELS,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ModelParams::Mlp(m) => m.output_dim(),
            ModelParams::Conv(c) => c.class_count(),
        }
    }

    /// Logits (classification) or raw outputs (regression); no softmax.
    pub fn forward(&self, batch: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(batch)?;
        let rows: Vec<DenseMatrix> = par_chunks(batch.rows())
            .map(|(lo, hi)| {
                let sub = gather_range(batch, lo, hi);
                match self {
                    ModelParams::Mlp(m) => m.forward(&sub),
                    ModelParams::Conv(c) => c.forward(&sub),
                }
            })
            .collect();
        Ok(concat_rows(&rows))
    }

    /// Mean loss over the batch and the exact gradient of that mean.
    pub fn loss_and_grads(
        &self,
        batch: &DenseMatrix,
        labels: &Labels,
        kind: LossKind,
    ) -> Result<(f64, ModelParams)> {
        self.check_input(batch)?;
        if labels.len() != batch.rows() {
            return Err(CoreError::config(format!(
                "labels length {} does not match batch rows {}",
                labels.len(),
                batch.rows()
            )));
        }
        let n = batch.rows();
        let inv_n = 1.0 / n as f64;
        let parts: Vec<(Vec<f64>, ModelParams)> = par_chunks(n)
            .map(|(lo, hi)| {
                let sub = gather_range(batch, lo, hi);
                let sub_labels = labels.slice(lo, hi);
                match self {
                    ModelParams::Mlp(m) => {
                        let (losses, grads) = m.chunk_loss_grads(&sub, &sub_labels, kind, inv_n);
                        (losses, ModelParams::Mlp(grads))
                    }
                    ModelParams::Conv(c) => {
                        let (losses, grads) = c.chunk_loss_grads(&sub, &sub_labels, kind, inv_n);
                        (losses, ModelParams::Conv(grads))
                    }
                }
            })
            .collect();

        let mut total = 0.0;
        let mut grads = self.zeros_like();
        for (chunk_idx, (losses, part)) in parts.iter().enumerate() {
            for (i, &l) in losses.iter().enumerate() {
                if !l.is_finite() {
                    return Err(CoreError::Numeric {
                        msg: "non-finite per-example loss".into(),
                        index: chunk_idx * BATCH_CHUNK + i,
                    });
                }
                total += l;
            }
            grads.axpy(1.0, part);
        }
        Ok((total * inv_n, grads))
    }

    /// Mean loss or accuracy over the full dataset. Evaluation passes are
    /// never charged to a compute budget.
    pub fn evaluate(&self, ds: &LabeledDataset, metric: Metric) -> Result<f64> {
        if ds.len() == 0 {
            return Err(CoreError::domain("evaluate on empty dataset"));
        }
        match metric {
            Metric::Loss(kind) => {
                let preds = self.forward(&ds.features)?;
                let (losses, _) = loss::per_example_losses_and_grad(&preds, &ds.labels, kind, 0.0)?;
                Ok(losses.iter().sum::<f64>() / losses.len() as f64)
            }
            Metric::Accuracy => {
                let classes = match &ds.labels {
                    Labels::Class(c) => c,
                    Labels::Real(_) => {
                        return Err(CoreError::domain("accuracy requires class labels"))
                    }
                };
                let preds = self.forward(&ds.features)?;
                let mut correct = 0usize;
                for (r, &label) in classes.iter().enumerate() {
                    let row = preds.row(r);
                    let mut best = 0usize;
                    for (j, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = j;
                        }
                    }
                    if best == label as usize {
                        correct += 1;
                    }
                }
                Ok(correct as f64 / classes.len() as f64)
            }
        }
    }

    pub fn zeros_like(&self) -> ModelParams {
        match self {
            ModelParams::Mlp(m) => ModelParams::Mlp(m.zeros_like()),
            ModelParams::Conv(c) => ModelParams::Conv(c.zeros_like()),
        }
    }

    /// Named views of every parameter tensor, in a stable order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        match self {
            ModelParams::Mlp(m) => m.tensors(),
            ModelParams::Conv(c) => c.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelParams::Mlp(m) => m.tensors_mut(),
            ModelParams::Conv(c) => c.tensors_mut(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// self += alpha * other, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        let mut mine = self.tensors_mut();
        let theirs = match other {
            ModelParams::Mlp(m) => m.tensor_views(),
            ModelParams::Conv(c) => c.tensor_views(),
        };
        assert_eq!(mine.len(), theirs.len(), "parameter structure mismatch");
        for (a, b) in mine.iter_mut().zip(theirs) {
            assert_eq!(a.len(), b.len(), "parameter tensor shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    fn check_input(&self, batch: &DenseMatrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(CoreError::config(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

fn par_chunks(n: usize) -> impl ParallelIterator<Item = (usize, usize)> {
    let bounds: Vec<(usize, usize)> = (0..n)
        .step_by(BATCH_CHUNK)
        .map(|lo| (lo, (lo + BATCH_CHUNK).min(n)))
        .collect();
    bounds.into_par_iter()
}

fn gather_range(m: &DenseMatrix, lo: usize, hi: usize) -> DenseMatrix {
    let cols = m.cols();
    DenseMatrix::from_vec(hi - lo, cols, m.data()[lo * cols..hi * cols].to_vec())
        .expect("range gather is shape-consistent")
}

fn concat_rows(parts: &[DenseMatrix]) -> DenseMatrix {
    let cols = parts.first().map_or(0, DenseMatrix::cols);
    let rows = parts.iter().map(DenseMatrix::rows).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    DenseMatrix::from_vec(rows, cols, data).expect("concat is shape-consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Labels;

    #[test]
    fn zero_weight_mlp_outputs_biases() {
        let mut m = MlpParams::new_zeros(&[3, 2]);
        m.biases_mut()[0] = vec![0.5, -1.0];
        let model = ModelParams::Mlp(m);
        let batch = DenseMatrix::from_vec(2, 3, vec![1., 2., 3., -4., 0., 9.]).unwrap();
        let out = model.forward(&batch).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn identity_single_layer_is_identity() {
        let mut m = MlpParams::new_zeros(&[2, 2]);
        m.weights_mut()[0] = DenseMatrix::from_vec(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let model = ModelParams::Mlp(m);
        let batch = DenseMatrix::from_vec(1, 2, vec![1., 2.]).unwrap();
        let out = model.forward(&batch).unwrap();
        assert_eq!(out.data(), &[1., 2.]);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        // 2-4-1 MLP, seeded; oracle: explicit affine+ReLU chain.
        let m = MlpParams::new_seeded(&[2, 4, 1], 42);
        let batch = DenseMatrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        let w0 = &m.weights()[0];
        let b0 = &m.biases()[0];
        let w1 = &m.weights()[1];
        let b1 = &m.biases()[1];
        let mut hidden = [0.0; 4];
        for j in 0..4 {
            let z = 0.5 * w0.get(0, j) + 0.5 * w0.get(1, j) + b0[j];
            hidden[j] = z.max(0.0);
        }
        let expected = (0..4).map(|j| hidden[j] * w1.get(j, 0)).sum::<f64>() + b1[0];
        let out = ModelParams::Mlp(m).forward(&batch).unwrap();
        assert!((out.get(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn mse_zero_when_predictions_equal_targets() {
        let mut m = MlpParams::new_zeros(&[1, 1]);
        m.biases_mut()[0] = vec![2.0];
        let model = ModelParams::Mlp(m);
        let batch = DenseMatrix::from_vec(3, 1, vec![0., 1., 2.]).unwrap();
        let labels = Labels::Real(vec![2.0, 2.0, 2.0]);
        let (loss, grads) = model.loss_and_grads(&batch, &labels, LossKind::Mse).unwrap();
        assert_eq!(loss, 0.0);
        for t in grads.tensors() {
            assert!(t.2.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_c() {
        let model = ModelParams::Mlp(MlpParams::new_zeros(&[4, 10]));
        let batch = DenseMatrix::from_vec(2, 4, vec![0.3; 8]).unwrap();
        let labels = Labels::Class(vec![3, 7]);
        let (loss, _) = model
            .loss_and_grads(&batch, &labels, LossKind::CrossEntropy)
            .unwrap();
        assert!((loss - (10.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_of_constant_logits_on_balanced_data_is_one_over_c() {
        let model = ModelParams::Mlp(MlpParams::new_zeros(&[2, 10]));
        let n = 200;
        let features = DenseMatrix::zeros(n, 2);
        let labels = Labels::Class((0..n).map(|i| (i % 10) as u32).collect());
        let ds = LabeledDataset::new(features, labels, None).unwrap();
        let acc = model.evaluate(&ds, Metric::Accuracy).unwrap();
        assert!((acc - 0.1).abs() < 1e-12);
    }

    #[test]
    fn evaluate_matches_per_example_loop() {
        let model = ModelParams::Mlp(MlpParams::new_seeded(&[3, 8, 4], 7));
        let mut rng = crate::rng::stream(11, "evaluate-oracle", 0);
        use rand::Rng;
        let n = 100;
        let feats: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let features = DenseMatrix::from_vec(n, 3, feats).unwrap();
        let labels = Labels::Class((0..n).map(|i| (i % 4) as u32).collect());
        let ds = LabeledDataset::new(features.clone(), labels.clone(), None).unwrap();
        let fast = model.evaluate(&ds, Metric::Loss(LossKind::CrossEntropy)).unwrap();
        // oracle: one example at a time
        let mut acc = 0.0;
        for i in 0..n {
            let row = DenseMatrix::from_vec(1, 3, features.row(i).to_vec()).unwrap();
            let one = LabeledDataset::new(row, labels.slice(i, i + 1), None).unwrap();
            acc += model.evaluate(&one, Metric::Loss(LossKind::CrossEntropy)).unwrap();
        }
        assert!((fast - acc / n as f64).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let model = ModelParams::Mlp(MlpParams::new_zeros(&[3, 2]));
        let batch = DenseMatrix::zeros(1, 4);
        assert!(matches!(model.forward(&batch), Err(CoreError::Config(_))));
    }
}
