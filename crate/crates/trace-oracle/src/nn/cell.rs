//! Recurrent (LSTM) cell.
//!
//! One step computes, with `xh = [x, h]` and elementwise gate activations:
//!
//! ```text
//! i = sigmoid(W_i*xh + b_i)      input gate
//! f = sigmoid(W_f*xh + b_f)      forget gate
//! o = sigmoid(W_o*xh + b_o)      output gate
//! g = tanh   (W_g*xh + b_g)      candidate state
//! c' = f.c + i.g                 new cell state
//! h' = o.tanh(c')                new hidden state
//! ```
//!
//! Sequences start from `h = c = 0`. The pure step below is the inference
//! path; [`TapeCell`] replays the identical arithmetic on a tape for
//! training, so both produce bit-identical activations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::tensor::{affine, sigmoid, Tensor};
use super::ShapeError;

/// Weights and biases of one LSTM cell. Gate matrices are
/// `hidden x (input + hidden)` over the concatenated `[x, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub input: usize,
    pub hidden: usize,
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_g: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_g: Tensor,
}

impl CellParams {
    /// Seeded uniform initialization of all eight tensors, in a fixed order.
    pub fn init(input: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let xh = input + hidden;
        CellParams {
            input,
            hidden,
            w_i: Tensor::uniform(hidden, xh, scale, rng),
            w_f: Tensor::uniform(hidden, xh, scale, rng),
            w_o: Tensor::uniform(hidden, xh, scale, rng),
            w_g: Tensor::uniform(hidden, xh, scale, rng),
            b_i: Tensor::uniform(hidden, 1, scale, rng),
            b_f: Tensor::uniform(hidden, 1, scale, rng),
            b_o: Tensor::uniform(hidden, 1, scale, rng),
            b_g: Tensor::uniform(hidden, 1, scale, rng),
        }
    }

    /// All trainable tensors, in the canonical order used for gradients and
    /// optimizer state.
    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_i, &self.w_f, &self.w_o, &self.w_g, &self.b_i, &self.b_f, &self.b_o, &self.b_g]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_g,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_g,
        ]
    }

    /// The all-zero initial `(h, c)` pair.
    pub fn zero_state(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.hidden], vec![0.0; self.hidden])
    }
}

/// One pure LSTM step; rejects inputs or state of the wrong width.
pub fn cell_step(
    p: &CellParams,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ShapeError> {
    if x.len() != p.input {
        return Err(ShapeError { op: "cell_step input", expected: p.input, got: x.len() });
    }
    if h.len() != p.hidden {
        return Err(ShapeError { op: "cell_step hidden state", expected: p.hidden, got: h.len() });
    }
    if c.len() != p.hidden {
        return Err(ShapeError { op: "cell_step cell state", expected: p.hidden, got: c.len() });
    }
    let mut xh = Vec::with_capacity(p.input + p.hidden);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h);
    let i: Vec<f64> = affine(&p.w_i, &p.b_i, &xh).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = affine(&p.w_f, &p.b_f, &xh).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = affine(&p.w_o, &p.b_o, &xh).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = affine(&p.w_g, &p.b_g, &xh).into_iter().map(|z| z.tanh()).collect();
    let mut c2 = Vec::with_capacity(p.hidden);
    for k in 0..p.hidden {
        c2.push(f[k] * c[k] + i[k] * g[k]);
    }
    let mut h2 = Vec::with_capacity(p.hidden);
    for k in 0..p.hidden {
        h2.push(o[k] * c2[k].tanh());
    }
    Ok((h2, c2))
}

/// A cell's parameters registered as leaves of one tape.
pub struct TapeCell {
    pub input: usize,
    pub hidden: usize,
    pub w_i: NodeId,
    pub w_f: NodeId,
    pub w_o: NodeId,
    pub w_g: NodeId,
    pub b_i: NodeId,
    pub b_f: NodeId,
    pub b_o: NodeId,
    pub b_g: NodeId,
}

impl TapeCell {
    /// Registers all eight tensors as leaves, in the canonical tensor order.
    pub fn register(tape: &mut Tape, p: &CellParams) -> Self {
        TapeCell {
            input: p.input,
            hidden: p.hidden,
            w_i: tape.leaf(p.w_i.data.clone()),
            w_f: tape.leaf(p.w_f.data.clone()),
            w_o: tape.leaf(p.w_o.data.clone()),
            w_g: tape.leaf(p.w_g.data.clone()),
            b_i: tape.leaf(p.b_i.data.clone()),
            b_f: tape.leaf(p.b_f.data.clone()),
            b_o: tape.leaf(p.b_o.data.clone()),
            b_g: tape.leaf(p.b_g.data.clone()),
        }
    }

    /// Leaf ids in the canonical tensor order.
    pub fn param_ids(&self) -> Vec<NodeId> {
        vec![self.w_i, self.w_f, self.w_o, self.w_g, self.b_i, self.b_f, self.b_o, self.b_g]
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (NodeId, NodeId) {
        let h = tape.leaf(vec![0.0; self.hidden]);
        let c = tape.leaf(vec![0.0; self.hidden]);
        (h, c)
    }

    /// One step on the tape; mirrors [`cell_step`] operation for operation.
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId, c: NodeId) -> (NodeId, NodeId) {
        let rows = self.hidden;
        let cols = self.input + self.hidden;
        let xh = tape.concat(&[x, h]);
        let zi = tape.affine(self.w_i, self.b_i, xh, rows, cols);
        let i = tape.sigmoid(zi);
        let zf = tape.affine(self.w_f, self.b_f, xh, rows, cols);
        let f = tape.sigmoid(zf);
        let zo = tape.affine(self.w_o, self.b_o, xh, rows, cols);
        let o = tape.sigmoid(zo);
        let zg = tape.affine(self.w_g, self.b_g, xh, rows, cols);
        let g = tape.tanh(zg);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c2 = tape.add(fc, ig);
        let tc2 = tape.tanh(c2);
        let h2 = tape.mul(o, tc2);
        (h2, c2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn scalar_cell() -> CellParams {
        let t = |data: Vec<f64>, cols: usize| Tensor { rows: 1, cols, data };
        CellParams {
            input: 1,
            hidden: 1,
            w_i: t(vec![0.4, 0.3], 2),
            w_f: t(vec![0.2, -0.1], 2),
            w_o: t(vec![-0.3, 0.5], 2),
            w_g: t(vec![0.6, -0.4], 2),
            b_i: t(vec![0.1], 1),
            b_f: t(vec![0.0], 1),
            b_o: t(vec![0.2], 1),
            b_g: t(vec![-0.1], 1),
        }
    }

    #[test]
    fn scalar_step_matches_frozen_oracle() {
        // Hand-derived from the gate equations for x=1.0, h=0.5, c=-0.25:
        //   i = sigmoid(0.65), f = o = sigmoid(0.15), g = tanh(0.3)
        //   c' = f*c + i*g = 0.05703797295350796
        //   h' = o*tanh(c') = 0.03062070975477655
        let (h2, c2) = cell_step(&scalar_cell(), &[1.0], &[0.5], &[-0.25]).unwrap();
        assert!((c2[0] - 0.05703797295350796).abs() < 1e-15);
        assert!((h2[0] - 0.03062070975477655).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let p = scalar_cell();
        assert_eq!(
            cell_step(&p, &[1.0, 2.0], &[0.0], &[0.0]),
            Err(ShapeError { op: "cell_step input", expected: 1, got: 2 })
        );
        assert_eq!(
            cell_step(&p, &[1.0], &[0.0, 0.0], &[0.0]),
            Err(ShapeError { op: "cell_step hidden state", expected: 1, got: 2 })
        );
        assert_eq!(
            cell_step(&p, &[1.0], &[0.0], &[]),
            Err(ShapeError { op: "cell_step cell state", expected: 1, got: 0 })
        );
    }

    #[test]
    fn tape_step_is_bit_identical_to_pure_step() {
        let mut rng = stream(3, "cell-test");
        let p = CellParams::init(5, 4, 0.08, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (h0, c0) = p.zero_state();
        let (h1, c1) = cell_step(&p, &x, &h0, &c0).unwrap();
        let (h2, c2) = cell_step(&p, &x, &h1, &c1).unwrap();

        let mut tape = Tape::new();
        let cell = TapeCell::register(&mut tape, &p);
        let (th, tc) = cell.zero_state(&mut tape);
        let xid = tape.leaf(x.clone());
        let (th1, tc1) = cell.step(&mut tape, xid, th, tc);
        let (th2, tc2) = cell.step(&mut tape, xid, th1, tc1);
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(tape.value(th1)), bits(&h1));
        assert_eq!(bits(tape.value(tc1)), bits(&c1));
        assert_eq!(bits(tape.value(th2)), bits(&h2));
        assert_eq!(bits(tape.value(tc2)), bits(&c2));
    }

    #[test]
    fn init_draws_all_tensors_from_the_stream_in_order() {
        let a = CellParams::init(3, 2, 0.08, &mut stream(1, "init"));
        let b = CellParams::init(3, 2, 0.08, &mut stream(1, "init"));
        assert_eq!(a, b);
        assert_eq!(a.tensors().len(), 8);
        assert_eq!(a.w_i.rows, 2);
        assert_eq!(a.w_i.cols, 5);
        assert_eq!(a.b_g.rows, 2);
        // Distinct tensors get distinct draws.
        assert_ne!(a.w_i.data, a.w_f.data);
    }
}
