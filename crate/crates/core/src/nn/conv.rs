//! Small convnet for 28x28 grayscale images: two 5x5 conv layers (32, 64
//! channels), each followed by ReLU and 2x2 max-pool, then 1024-128 fully
//! connected with ReLU and a linear class head. Convolutions run as im2col
//! matrix products; activations use NHWC layout (spatial rows, channel cols).
//!
//! The pipeline is generic over the arithmetic element: parameters and the
//! public API are f64, while `fast_math` runs the internal passes in f32
//! (about twice the throughput on the budgeted training loops). Losses and
//! cross-chunk gradient reductions stay in f64 either way.

use crate::data::Labels;
use crate::linalg::DenseMatrix;
use crate::nn::{loss, LossKind};
use rand::Rng;

pub const IMAGE_SIDE: usize = 28;
pub const INPUT_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
const KERNEL: usize = 5;
const CH1: usize = 32;
const CH2: usize = 64;
const C1_SIDE: usize = IMAGE_SIDE - KERNEL + 1; // 24
const P1_SIDE: usize = C1_SIDE / 2; // 12
const C2_SIDE: usize = P1_SIDE - KERNEL + 1; // 8
const P2_SIDE: usize = C2_SIDE / 2; // 4
const FLAT: usize = P2_SIDE * P2_SIDE * CH2; // 1024
const FC: usize = 128;

/// Default input normalization constants for MNIST-format images.
pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetParams {
    conv1_w: DenseMatrix, // 25 x 32, patch order (ky, kx)
    conv1_b: Vec<f64>,
    conv2_w: DenseMatrix, // 800 x 64, patch order (ky, kx, channel)
    conv2_b: Vec<f64>,
    fc1_w: DenseMatrix, // 1024 x 128
    fc1_b: Vec<f64>,
    fc2_w: DenseMatrix, // 128 x class_count
    fc2_b: Vec<f64>,
    class_count: usize,
    normalize: Option<(f64, f64)>, // (mean, std) applied to inputs when set
    fast_math: bool,
}

impl ConvNetParams {
    pub fn new_zeros(class_count: usize, normalize: Option<(f64, f64)>) -> Self {
        ConvNetParams {
            conv1_w: DenseMatrix::zeros(KERNEL * KERNEL, CH1),
            conv1_b: vec![0.0; CH1],
            conv2_w: DenseMatrix::zeros(KERNEL * KERNEL * CH1, CH2),
            conv2_b: vec![0.0; CH2],
            fc1_w: DenseMatrix::zeros(FLAT, FC),
            fc1_b: vec![0.0; FC],
            fc2_w: DenseMatrix::zeros(FC, class_count),
            fc2_b: vec![0.0; class_count],
            class_count,
            normalize,
            fast_math: false,
        }
    }

    pub fn new_seeded(class_count: usize, normalize: Option<(f64, f64)>, seed: u64) -> Self {
        let mut p = Self::new_zeros(class_count, normalize);
        let mut rng = crate::rng::stream(seed, "conv-init", 0);
        for w in [&mut p.conv1_w, &mut p.conv2_w, &mut p.fc1_w, &mut p.fc2_w] {
            let bound = 1.0 / (w.rows() as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    /// Run the internal passes in f32.
    pub fn with_fast_math(mut self, on: bool) -> Self {
        self.fast_math = on;
        self
    }

    pub fn fast_math(&self) -> bool {
        self.fast_math
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn normalize(&self) -> Option<(f64, f64)> {
        self.normalize
    }

    pub fn zeros_like(&self) -> Self {
        Self::new_zeros(self.class_count, self.normalize).with_fast_math(self.fast_math)
    }

    pub fn forward(&self, batch: &DenseMatrix) -> DenseMatrix {
        if self.fast_math {
            Staged::<f32>::new(self).forward_cached(batch).take_logits()
        } else {
            Staged::<f64>::new(self).forward_cached(batch).take_logits()
        }
    }

    pub(crate) fn chunk_loss_grads(
        &self,
        batch: &DenseMatrix,
        labels: &Labels,
        kind: LossKind,
        inv_n: f64,
    ) -> (Vec<f64>, ConvNetParams) {
        if self.fast_math {
            Staged::<f32>::new(self).chunk_loss_grads(self, batch, labels, kind, inv_n)
        } else {
            Staged::<f64>::new(self).chunk_loss_grads(self, batch, labels, kind, inv_n)
        }
    }

    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            ("conv1_w".into(), vec![KERNEL * KERNEL, CH1], self.conv1_w.data()),
            ("conv1_b".into(), vec![CH1], self.conv1_b.as_slice()),
            ("conv2_w".into(), vec![KERNEL * KERNEL * CH1, CH2], self.conv2_w.data()),
            ("conv2_b".into(), vec![CH2], self.conv2_b.as_slice()),
            ("fc1_w".into(), vec![FLAT, FC], self.fc1_w.data()),
            ("fc1_b".into(), vec![FC], self.fc1_b.as_slice()),
            ("fc2_w".into(), vec![FC, self.class_count], self.fc2_w.data()),
            ("fc2_b".into(), vec![self.class_count], self.fc2_b.as_slice()),
        ]
    }

    pub fn tensor_views(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, _, d)| d).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.conv1_w.data_mut(),
            self.conv1_b.as_mut_slice(),
            self.conv2_w.data_mut(),
            self.conv2_b.as_mut_slice(),
            self.fc1_w.data_mut(),
            self.fc1_b.as_mut_slice(),
            self.fc2_w.data_mut(),
            self.fc2_b.as_mut_slice(),
        ]
    }
}

/// Arithmetic element of the internal pipeline.
trait Elem:
    Copy
    + Default
    + PartialOrd
    + Send
    + Sync
    + std::ops::Add<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::AddAssign
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// c = a * b (row-major with the given strides), c overwritten.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
    );
}

impl Elem for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize, k: usize, n: usize,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        c: *mut Self, rsc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 0.0, c, rsc, 1);
    }
}

impl Elem for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize, k: usize, n: usize,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        c: *mut Self, rsc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 0.0, c, rsc, 1);
    }
}

/// Minimal row-major buffer for the generic pipeline.
struct Buf<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Elem> Buf<T> {
    fn zeros(rows: usize, cols: usize) -> Self {
        Buf { rows, cols, data: vec![T::default(); rows * cols] }
    }

    #[inline]
    fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn from_f64(m: &[f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(m.len(), rows * cols);
        Buf { rows, cols, data: m.iter().map(|&v| T::from_f64(v)).collect() }
    }

    fn clone_values(&self) -> Buf<T> {
        Buf { rows: self.rows, cols: self.cols, data: self.data.clone() }
    }

    /// self (m x k) * rhs (k x n)
    fn matmul(&self, rhs: &Buf<T>) -> Buf<T> {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Buf::zeros(self.rows, rhs.cols);
        unsafe {
            T::gemm(
                self.rows, self.cols, rhs.cols,
                self.data.as_ptr(), self.cols as isize, 1,
                rhs.data.as_ptr(), rhs.cols as isize, 1,
                out.data.as_mut_ptr(), rhs.cols as isize,
            );
        }
        out
    }

    /// self^T * rhs where self is (k x m), rhs (k x n) -> (m x n)
    fn matmul_tn(&self, rhs: &Buf<T>) -> Buf<T> {
        assert_eq!(self.rows, rhs.rows);
        let mut out = Buf::zeros(self.cols, rhs.cols);
        unsafe {
            T::gemm(
                self.cols, self.rows, rhs.cols,
                self.data.as_ptr(), 1, self.cols as isize,
                rhs.data.as_ptr(), rhs.cols as isize, 1,
                out.data.as_mut_ptr(), rhs.cols as isize,
            );
        }
        out
    }

    /// self (m x k) * rhs^T where rhs is (n x k) -> (m x n)
    fn matmul_nt(&self, rhs: &Buf<T>) -> Buf<T> {
        assert_eq!(self.cols, rhs.cols);
        let mut out = Buf::zeros(self.rows, rhs.rows);
        unsafe {
            T::gemm(
                self.rows, self.cols, rhs.rows,
                self.data.as_ptr(), self.cols as isize, 1,
                rhs.data.as_ptr(), 1, rhs.cols as isize,
                out.data.as_mut_ptr(), rhs.rows as isize,
            );
        }
        out
    }

    fn add_row_bias(&mut self, bias: &[T]) {
        assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            for (x, &b) in self.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
    }

    fn relu_inplace(&mut self) {
        let zero = T::default();
        for v in &mut self.data {
            if *v < zero {
                *v = zero;
            }
        }
    }

    /// Zero entries wherever `pre` is strictly negative.
    fn relu_backward_inplace(&mut self, pre: &Buf<T>) {
        let zero = T::default();
        for (g, p) in self.data.iter_mut().zip(&pre.data) {
            if *p < zero {
                *g = zero;
            }
        }
    }

    fn col_sums_f64(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v.to_f64();
            }
        }
        out
    }

    fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }
}

/// Weights and biases cast once per call into the pipeline element type.
struct Staged<T> {
    conv1_w: Buf<T>,
    conv1_b: Vec<T>,
    conv2_w: Buf<T>,
    conv2_b: Vec<T>,
    fc1_w: Buf<T>,
    fc1_b: Vec<T>,
    fc2_w: Buf<T>,
    fc2_b: Vec<T>,
    class_count: usize,
    normalize: Option<(f64, f64)>,
}

struct Cache<T> {
    p1: Buf<T>,
    z1: Buf<T>,
    arg1: Vec<u8>,
    p2: Buf<T>,
    z2: Buf<T>,
    arg2: Vec<u8>,
    flat: Buf<T>,
    zf: Buf<T>,
    af: Buf<T>,
    logits: Buf<T>,
}

impl<T: Elem> Cache<T> {
    fn take_logits(self) -> DenseMatrix {
        DenseMatrix::from_vec(self.logits.rows, self.logits.cols, self.logits.to_f64_vec())
            .expect("logit shape is consistent")
    }
}

impl<T: Elem> Staged<T> {
    fn new(p: &ConvNetParams) -> Self {
        let cast = |v: &[f64]| v.iter().map(|&x| T::from_f64(x)).collect::<Vec<T>>();
        Staged {
            conv1_w: Buf::from_f64(p.conv1_w.data(), KERNEL * KERNEL, CH1),
            conv1_b: cast(&p.conv1_b),
            conv2_w: Buf::from_f64(p.conv2_w.data(), KERNEL * KERNEL * CH1, CH2),
            conv2_b: cast(&p.conv2_b),
            fc1_w: Buf::from_f64(p.fc1_w.data(), FLAT, FC),
            fc1_b: cast(&p.fc1_b),
            fc2_w: Buf::from_f64(p.fc2_w.data(), FC, p.class_count),
            fc2_b: cast(&p.fc2_b),
            class_count: p.class_count,
            normalize: p.normalize,
        }
    }

    fn normalized(&self, batch: &DenseMatrix) -> Buf<T> {
        match self.normalize {
            None => Buf::from_f64(batch.data(), batch.rows(), batch.cols()),
            Some((mean, std)) => Buf {
                rows: batch.rows(),
                cols: batch.cols(),
                data: batch.data().iter().map(|&v| T::from_f64((v - mean) / std)).collect(),
            },
        }
    }

    fn forward_cached(&self, batch: &DenseMatrix) -> Cache<T> {
        let n = batch.rows();
        let x = self.normalized(batch);

        let p1 = im2col1(&x, n);
        let mut z1 = p1.matmul(&self.conv1_w);
        z1.add_row_bias(&self.conv1_b);
        let mut a1 = z1.clone_values();
        a1.relu_inplace();

        let (pool1, arg1) = maxpool(&a1, n, C1_SIDE, CH1);
        let p2 = im2col2(&pool1, n);
        let mut z2 = p2.matmul(&self.conv2_w);
        z2.add_row_bias(&self.conv2_b);
        let mut a2 = z2.clone_values();
        a2.relu_inplace();

        let (pool2, arg2) = maxpool(&a2, n, C2_SIDE, CH2);
        // NHWC rows of pool2 are contiguous per example: reshape is free.
        let flat = Buf { rows: n, cols: FLAT, data: pool2.data };

        let mut zf = flat.matmul(&self.fc1_w);
        zf.add_row_bias(&self.fc1_b);
        let mut af = zf.clone_values();
        af.relu_inplace();

        let mut logits = af.matmul(&self.fc2_w);
        logits.add_row_bias(&self.fc2_b);

        Cache { p1, z1, arg1, p2, z2, arg2, flat, zf, af, logits }
    }

    fn chunk_loss_grads(
        &self,
        params: &ConvNetParams,
        batch: &DenseMatrix,
        labels: &Labels,
        kind: LossKind,
        inv_n: f64,
    ) -> (Vec<f64>, ConvNetParams) {
        let n = batch.rows();
        let cache = self.forward_cached(batch);
        let logits = DenseMatrix::from_vec(n, self.class_count, cache.logits.to_f64_vec())
            .expect("logit shape is consistent");
        let (losses, d_logits_f64) =
            match loss::per_example_losses_and_grad(&logits, labels, kind, inv_n) {
                Ok(v) => v,
                Err(_) => (vec![f64::NAN; n], DenseMatrix::zeros(n, self.class_count)),
            };
        let d_logits = Buf::<T>::from_f64(d_logits_f64.data(), n, self.class_count);

        let mut g = params.zeros_like();

        let g_fc2 = cache.af.matmul_tn(&d_logits);
        g.fc2_w = DenseMatrix::from_vec(FC, self.class_count, g_fc2.to_f64_vec()).expect("shape");
        g.fc2_b = d_logits.col_sums_f64();
        let mut d_af = d_logits.matmul_nt(&self.fc2_w);
        d_af.relu_backward_inplace(&cache.zf);

        let g_fc1 = cache.flat.matmul_tn(&d_af);
        g.fc1_w = DenseMatrix::from_vec(FLAT, FC, g_fc1.to_f64_vec()).expect("shape");
        g.fc1_b = d_af.col_sums_f64();
        let d_flat = d_af.matmul_nt(&self.fc1_w);
        let d_pool2 = Buf { rows: n * P2_SIDE * P2_SIDE, cols: CH2, data: d_flat.data };

        let mut d_a2 = unpool(&d_pool2, &cache.arg2, n, C2_SIDE, CH2);
        d_a2.relu_backward_inplace(&cache.z2);

        let g_c2 = cache.p2.matmul_tn(&d_a2);
        g.conv2_w =
            DenseMatrix::from_vec(KERNEL * KERNEL * CH1, CH2, g_c2.to_f64_vec()).expect("shape");
        g.conv2_b = d_a2.col_sums_f64();
        let d_p2 = d_a2.matmul_nt(&self.conv2_w);
        let d_pool1 = col2im2(&d_p2, n);

        let mut d_a1 = unpool(&d_pool1, &cache.arg1, n, C1_SIDE, CH1);
        d_a1.relu_backward_inplace(&cache.z1);

        let g_c1 = cache.p1.matmul_tn(&d_a1);
        g.conv1_w = DenseMatrix::from_vec(KERNEL * KERNEL, CH1, g_c1.to_f64_vec()).expect("shape");
        g.conv1_b = d_a1.col_sums_f64();

        (losses, g)
    }
}

/// Patches of the single-channel input; rows (example, y, x), cols (ky, kx).
fn im2col1<T: Elem>(x: &Buf<T>, n: usize) -> Buf<T> {
    let mut p = Buf::zeros(n * C1_SIDE * C1_SIDE, KERNEL * KERNEL);
    for e in 0..n {
        let img = x.row(e);
        for y in 0..C1_SIDE {
            for xo in 0..C1_SIDE {
                let row = p.row_mut(e * C1_SIDE * C1_SIDE + y * C1_SIDE + xo);
                for ky in 0..KERNEL {
                    let src = &img[(y + ky) * IMAGE_SIDE + xo..(y + ky) * IMAGE_SIDE + xo + KERNEL];
                    row[ky * KERNEL..(ky + 1) * KERNEL].copy_from_slice(src);
                }
            }
        }
    }
    p
}

/// Patches of an NHWC feature map of side `P1_SIDE` with `CH1` channels;
/// cols ordered (ky, kx, channel) so each (ky, kx) copies a contiguous run.
fn im2col2<T: Elem>(a: &Buf<T>, n: usize) -> Buf<T> {
    let mut p = Buf::zeros(n * C2_SIDE * C2_SIDE, KERNEL * KERNEL * CH1);
    for e in 0..n {
        for y in 0..C2_SIDE {
            for xo in 0..C2_SIDE {
                let row = p.row_mut(e * C2_SIDE * C2_SIDE + y * C2_SIDE + xo);
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let src_row = a.row(e * P1_SIDE * P1_SIDE + (y + ky) * P1_SIDE + (xo + kx));
                        let dst = (ky * KERNEL + kx) * CH1;
                        row[dst..dst + CH1].copy_from_slice(src_row);
                    }
                }
            }
        }
    }
    p
}

/// Scatter-add patch gradients back onto the NHWC map they were gathered from.
fn col2im2<T: Elem>(d_p: &Buf<T>, n: usize) -> Buf<T> {
    let mut d_a = Buf::zeros(n * P1_SIDE * P1_SIDE, CH1);
    for e in 0..n {
        for y in 0..C2_SIDE {
            for xo in 0..C2_SIDE {
                let row = d_p.row(e * C2_SIDE * C2_SIDE + y * C2_SIDE + xo);
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let dst_row =
                            d_a.row_mut(e * P1_SIDE * P1_SIDE + (y + ky) * P1_SIDE + (xo + kx));
                        let src = (ky * KERNEL + kx) * CH1;
                        for (d, s) in dst_row.iter_mut().zip(&row[src..src + CH1]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
    d_a
}

/// 2x2 max-pool on an NHWC map. Ties route to the first candidate in scan
/// order (top-left wins), recorded per output cell for the backward pass.
fn maxpool<T: Elem>(a: &Buf<T>, n: usize, side: usize, ch: usize) -> (Buf<T>, Vec<u8>) {
    let out_side = side / 2;
    let mut out = Buf::zeros(n * out_side * out_side, ch);
    let mut arg = vec![0u8; n * out_side * out_side * ch];
    for e in 0..n {
        for y in 0..out_side {
            for x in 0..out_side {
                let out_idx = e * out_side * out_side + y * out_side + x;
                for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let row = a.row(e * side * side + (2 * y + dy) * side + (2 * x + dx));
                    let out_row = out.row_mut(out_idx);
                    for c in 0..ch {
                        if k == 0 || row[c] > out_row[c] {
                            out_row[c] = row[c];
                            arg[out_idx * ch + c] = k as u8;
                        }
                    }
                }
            }
        }
    }
    (out, arg)
}

/// Route pooled gradients back to the argmax positions.
fn unpool<T: Elem>(d_out: &Buf<T>, arg: &[u8], n: usize, side: usize, ch: usize) -> Buf<T> {
    let out_side = side / 2;
    let mut d_a = Buf::zeros(n * side * side, ch);
    const OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
    for e in 0..n {
        for y in 0..out_side {
            for x in 0..out_side {
                let out_idx = e * out_side * out_side + y * out_side + x;
                let src = d_out.row(out_idx);
                for c in 0..ch {
                    let (dy, dx) = OFFSETS[arg[out_idx * ch + c] as usize];
                    let dst = e * side * side + (2 * y + dy) * side + (2 * x + dx);
                    d_a.row_mut(dst)[c] += src[c];
                }
            }
        }
    }
    d_a
}
