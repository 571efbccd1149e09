//! Dense row-major tensors and the shared matrix-vector kernel.
//!
//! Every trainable parameter is a [`Tensor`] (biases are single-column). The
//! one `matvec` kernel below is used by both the inference path and the
//! training tape, so the two always produce bit-identical activations.

use serde::{Deserialize, Serialize};

/// A dense row-major matrix of `f64`. Vectors are `rows x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// A tensor with entries drawn uniformly from `[-scale, scale)`, in
    /// row-major order, so initialization is a pure function of the generator
    /// state.
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl rand::Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// `w * x` for a flat row-major matrix with `cols` columns; each output
/// element is a left-to-right dot product, which pins the floating-point
/// summation order. Both the inference path and the tape call this.
pub fn matvec_raw(w: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(cols, x.len());
    debug_assert_eq!(w.len() % cols.max(1), 0);
    let rows = if cols == 0 { 0 } else { w.len() / cols };
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        out.push(row.iter().zip(x).map(|(a, b)| a * b).sum());
    }
    out
}

/// `w * x` for a [`Tensor`] matrix.
pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.cols, x.len());
    matvec_raw(&w.data, w.cols, x)
}

/// `w * x + b`, the affine map shared by gates and layers.
pub fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(b.rows, w.rows);
    let mut out = matvec(w, x);
    for (o, bias) in out.iter_mut().zip(&b.data) {
        *o += bias;
    }
    out
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
