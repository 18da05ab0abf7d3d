//! Row-major dense matrices and the handful of BLAS-like kernels the
//! training engine needs. Matrix products dispatch to `matrixmultiply`;
//! everything else is plain loops.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::config(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::config("matrix entries must be finite"));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(CoreError::config("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        DenseMatrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy the given rows into a new matrix (gather).
    pub fn gather_rows(&self, indices: &[u32]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(indices.len(), self.cols);
        for (i, &idx) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(idx as usize));
        }
        out
    }

    /// self (m x k) * rhs (k x n) -> (m x n)
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        gemm(
            self.rows, self.cols, rhs.cols,
            &self.data, self.cols as isize, 1,
            &rhs.data, rhs.cols as isize, 1,
            &mut out.data, rhs.cols as isize,
        );
        out
    }

    /// self^T (k x m)^T=(m x k) ... computes self^T * rhs where
    /// self is (k x m), rhs is (k x n) -> (m x n). Used for weight gradients.
    pub fn matmul_tn(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, rhs.rows, "matmul_tn shape mismatch");
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        gemm(
            self.cols, self.rows, rhs.cols,
            &self.data, 1, self.cols as isize,
            &rhs.data, rhs.cols as isize, 1,
            &mut out.data, rhs.cols as isize,
        );
        out
    }

    /// self (m x k) * rhs^T where rhs is (n x k) -> (m x n). Used for input gradients.
    pub fn matmul_nt(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.cols, "matmul_nt shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, rhs.rows);
        gemm(
            self.rows, self.cols, rhs.rows,
            &self.data, self.cols as isize, 1,
            &rhs.data, 1, rhs.cols as isize,
            &mut out.data, rhs.rows as isize,
        );
        out
    }

    /// Add a row vector to every row.
    pub fn add_row_bias(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
    }

    /// Sum over rows -> vector of length cols.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    /// Elementwise ReLU in place; returns nothing, mask recoverable from values.
    pub fn relu_inplace(&mut self) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Zero entries of `self` wherever `pre` is strictly negative.
    /// Exactly-zero pre-activations keep their gradient (subgradient choice).
    pub fn relu_backward_inplace(&mut self, pre: &DenseMatrix) {
        assert_eq!(self.rows, pre.rows);
        assert_eq!(self.cols, pre.cols);
        for (g, &p) in self.data.iter_mut().zip(&pre.data) {
            if p < 0.0 {
                *g = 0.0;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], rsa: isize, csa: isize,
    b: &[f64], rsb: isize, csb: isize,
    c: &mut [f64], rsc: isize,
) {
    // Safety: shapes were asserted by the callers; strides describe within-
    // bounds layouts of the borrowed slices.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 0.0,
            c.as_mut_ptr(), rsc, 1,
        );
    }
}

/// Euclidean norm of a vector.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
