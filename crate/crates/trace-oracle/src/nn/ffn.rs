//! Feed-forward classifier head: a stack of affine layers with a sigmoid
//! after every layer, including the last, so a single-unit output is already
//! a probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::tensor::{affine, sigmoid, Tensor};
use super::ShapeError;

/// Layer weights and biases; `weights[l]` maps layer `l` activations of width
/// `weights[l].cols` to width `weights[l].rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfnParams {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl FfnParams {
    /// Seeded uniform initialization for the layer widths in `dims`
    /// (input width first, output width last).
    pub fn init(dims: &[usize], scale: f64, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "a feed-forward net needs input and output widths");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            weights.push(Tensor::uniform(w[1], w[0], scale, rng));
            biases.push(Tensor::uniform(w[1], 1, scale, rng));
        }
        FfnParams { weights, biases }
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.weights[0].cols];
        d.extend(self.weights.iter().map(|w| w.rows));
        d
    }

    /// All trainable tensors in canonical order: weights by layer, then
    /// biases by layer.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.weights.iter().chain(self.biases.iter()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).collect()
    }
}

/// Pure forward pass; rejects inputs of the wrong width.
pub fn ffn_forward(p: &FfnParams, x: &[f64]) -> Result<Vec<f64>, ShapeError> {
    if x.len() != p.weights[0].cols {
        return Err(ShapeError { op: "ffn_forward input", expected: p.weights[0].cols, got: x.len() });
    }
    let mut act = x.to_vec();
    for (w, b) in p.weights.iter().zip(&p.biases) {
        act = affine(w, b, &act).into_iter().map(sigmoid).collect();
    }
    Ok(act)
}

/// The classifier's parameters registered as leaves of one tape.
pub struct TapeFfn {
    layers: Vec<(NodeId, NodeId, usize, usize)>,
}

impl TapeFfn {
    pub fn register(tape: &mut Tape, p: &FfnParams) -> Self {
        let layers = p
            .weights
            .iter()
            .zip(&p.biases)
            .map(|(w, b)| (tape.leaf(w.data.clone()), tape.leaf(b.data.clone()), w.rows, w.cols))
            .collect();
        TapeFfn { layers }
    }

    /// Leaf ids in the canonical tensor order (weights, then biases).
    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.layers.iter().map(|l| l.0).collect();
        ids.extend(self.layers.iter().map(|l| l.1));
        ids
    }

    /// Forward pass on the tape; mirrors [`ffn_forward`].
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let mut act = x;
        for &(w, b, rows, cols) in &self.layers {
            let z = tape.affine(w, b, act, rows, cols);
            act = tape.sigmoid(z);
        }
        act
    }
}
