//! Fully connected ReLU network.

use crate::data::Labels;
use crate::linalg::DenseMatrix;
use crate::nn::{loss, LossKind};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    weights: Vec<DenseMatrix>, // layer l: dims[l] x dims[l+1]
    biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn new_zeros(layer_dims: &[usize]) -> Self {
        assert!(layer_dims.len() >= 2, "need at least input and output dims");
        let weights = layer_dims
            .windows(2)
            .map(|w| DenseMatrix::zeros(w[0], w[1]))
            .collect();
        let biases = layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        MlpParams { layer_dims: layer_dims.to_vec(), weights, biases }
    }

    /// Fan-in-scaled uniform init, U(+-1/sqrt(fan_in)), deterministic for a
    /// given seed. Gainier ReLU scalings destabilize the full-batch Adam
    /// updates used throughout the experiments.
    pub fn new_seeded(layer_dims: &[usize], seed: u64) -> Self {
        let mut p = Self::new_zeros(layer_dims);
        let mut rng = crate::rng::stream(seed, "mlp-init", 0);
        for w in &mut p.weights {
            let bound = 1.0 / (w.rows() as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn zeros_like(&self) -> Self {
        Self::new_zeros(&self.layer_dims)
    }

    /// Forward pass; ReLU on hidden layers, linear output.
    pub fn forward(&self, batch: &DenseMatrix) -> DenseMatrix {
        let mut h = batch.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.matmul(w);
            z.add_row_bias(b);
            if l < last {
                z.relu_inplace();
            }
            h = z;
        }
        h
    }

    /// Loss/gradient contribution of one batch chunk. Gradients are of the
    /// mean loss over the *full* batch, hence the `inv_n` scale.
    pub(crate) fn chunk_loss_grads(
        &self,
        batch: &DenseMatrix,
        labels: &Labels,
        kind: LossKind,
        inv_n: f64,
    ) -> (Vec<f64>, MlpParams) {
        let last = self.weights.len() - 1;
        // forward, caching pre-activations
        let mut acts = vec![batch.clone()];
        let mut pres: Vec<DenseMatrix> = Vec::with_capacity(self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts.last().unwrap().matmul(w);
            z.add_row_bias(b);
            pres.push(z.clone());
            if l < last {
                z.relu_inplace();
            }
            acts.push(z);
        }
        let (losses, mut delta) = match loss::per_example_losses_and_grad(
            acts.last().unwrap(),
            labels,
            kind,
            inv_n,
        ) {
            Ok(v) => v,
            // Loss/label mismatches are caught before chunking; a failure here
            // means non-finite math, surfaced by the caller's finiteness scan.
            Err(_) => (vec![f64::NAN; batch.rows()], DenseMatrix::zeros(batch.rows(), self.output_dim())),
        };

        let mut grads = self.zeros_like();
        for l in (0..self.weights.len()).rev() {
            grads.weights[l] = acts[l].matmul_tn(&delta);
            grads.biases[l] = delta.col_sums();
            if l > 0 {
                let mut d_prev = delta.matmul_nt(&self.weights[l]);
                d_prev.relu_backward_inplace(&pres[l - 1]);
                delta = d_prev;
            }
        }
        (losses, grads)
    }

    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, w) in self.weights.iter().enumerate() {
            out.push((format!("w{l}"), vec![w.rows(), w.cols()], w.data()));
        }
        for (l, b) in self.biases.iter().enumerate() {
            out.push((format!("b{l}"), vec![b.len()], b.as_slice()));
        }
        out
    }

    pub fn tensor_views(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, _, d)| d).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for w in &mut self.weights {
            out.push(w.data_mut());
        }
        for b in &mut self.biases {
            out.push(b.as_mut_slice());
        }
        out
    }
}
