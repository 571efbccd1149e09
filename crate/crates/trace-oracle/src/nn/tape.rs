//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! A forward pass appends one node per operation, so node ids are already in
//! topological order; the backward pass walks them in reverse, accumulating
//! vector gradients. The op set is exactly what the trace encoders and the
//! classifier need: affine maps, elementwise add/mul, sigmoid/tanh,
//! concatenation, elementwise max pooling, and the clamped binary
//! cross-entropy loss.

use super::tensor::{matvec_raw, sigmoid};

/// Lower clamp bound for predicted probabilities inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

/// Handle to a tape node; valid only for the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    /// `w*x + b` where `w` is a row-major `rows x cols` leaf.
    Affine { w: NodeId, b: NodeId, x: NodeId, rows: usize, cols: usize },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Concat { parts: Vec<NodeId> },
    /// Elementwise max over equally sized parts; `argmax[i]` is the first
    /// part attaining the max at coordinate `i` and receives the subgradient.
    MaxPool { parts: Vec<NodeId>, argmax: Vec<usize> },
    /// Binary cross-entropy of a length-1 probability node against `target`,
    /// with the probability clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`. The
    /// gradient is zero where the clamp is active.
    Bce { p: NodeId, target: f64 },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

/// One forward pass worth of computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to the tape's leaves.
/// Interior-node slots are drained during the backward sweep and read as
/// empty; only leaf gradients are meaningful here.
pub struct Grads(Vec<Vec<f64>>);

impl Grads {
    pub fn get(&self, id: NodeId) -> &[f64] {
        &self.0[id.0]
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// `w*x + b`; `w` holds a row-major `rows x cols` matrix, `b` and the
    /// result have length `rows`.
    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        debug_assert_eq!(self.nodes[w.0].value.len(), rows * cols);
        debug_assert_eq!(self.nodes[b.0].value.len(), rows);
        debug_assert_eq!(self.nodes[x.0].value.len(), cols);
        let mut out = matvec_raw(&self.nodes[w.0].value, cols, &self.nodes[x.0].value);
        for (o, bias) in out.iter_mut().zip(&self.nodes[b.0].value) {
            *o += bias;
        }
        self.push(out, Op::Affine { w, b, x, rows, cols })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        let out = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x + y).collect();
        self.push(out, Op::Add { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        let out = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x * y).collect();
        self.push(out, Op::Mul { a, b })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|&z| sigmoid(z)).collect();
        self.push(out, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|&z| z.tanh()).collect();
        self.push(out, Op::Tanh { x })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Op::Concat { parts: parts.to_vec() })
    }

    /// Elementwise max over equally sized vectors. Negative zeros in the
    /// result are normalized to `+0.0` so the output is invariant, bit for
    /// bit, under any permutation of `parts`.
    pub fn max_pool(&mut self, parts: &[NodeId]) -> NodeId {
        debug_assert!(!parts.is_empty());
        let width = self.nodes[parts[0].0].value.len();
        let mut out = vec![0.0; width];
        let mut argmax = vec![0usize; width];
        for i in 0..width {
            let mut best = self.nodes[parts[0].0].value[i];
            let mut best_k = 0;
            for (k, p) in parts.iter().enumerate().skip(1) {
                debug_assert_eq!(self.nodes[p.0].value.len(), width);
                let v = self.nodes[p.0].value[i];
                if v > best {
                    best = v;
                    best_k = k;
                }
            }
            out[i] = best + 0.0;
            argmax[i] = best_k;
        }
        self.push(out, Op::MaxPool { parts: parts.to_vec(), argmax })
    }

    /// Clamped binary cross-entropy of a scalar probability node.
    pub fn bce_loss(&mut self, p: NodeId, target: f64) -> NodeId {
        debug_assert_eq!(self.nodes[p.0].value.len(), 1);
        let clamped = self.nodes[p.0].value[0].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let loss = -(target * clamped.ln() + (1.0 - target) * (1.0 - clamped).ln());
        self.push(vec![loss], Op::Bce { p, target })
    }

    /// Gradients of the scalar at `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Grads {
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss.0] = vec![1.0];
        for id in (0..=loss.0).rev() {
            // Leaf gradients stay in place: they are what the caller reads.
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            // Interior slots are drained as we pass them; every consumer of
            // this node has already been processed, so the sum is final.
            let dy = std::mem::take(&mut grads[id]);
            match &self.nodes[id].op {
                Op::Leaf => unreachable!("leaves are skipped above"),
                Op::Affine { w, b, x, rows, cols } => {
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    for i in 0..*rows {
                        let d = dy[i];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &wv[i * cols..(i + 1) * cols];
                        let dw_row = &mut grads[w.0][i * cols..(i + 1) * cols];
                        for j in 0..*cols {
                            dw_row[j] += d * xv[j];
                        }
                        for j in 0..*cols {
                            grads[x.0][j] += d * row[j];
                        }
                        grads[b.0][i] += d;
                    }
                }
                Op::Add { a, b } => {
                    for (g, d) in grads[a.0].iter_mut().zip(&dy) {
                        *g += d;
                    }
                    for (g, d) in grads[b.0].iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Mul { a, b } => {
                    for i in 0..dy.len() {
                        grads[a.0][i] += dy[i] * self.nodes[b.0].value[i];
                        grads[b.0][i] += dy[i] * self.nodes[a.0].value[i];
                    }
                }
                Op::Sigmoid { x } => {
                    let y = &self.nodes[id].value;
                    for i in 0..dy.len() {
                        grads[x.0][i] += dy[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh { x } => {
                    let y = &self.nodes[id].value;
                    for i in 0..dy.len() {
                        grads[x.0][i] += dy[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        for i in 0..len {
                            grads[p.0][i] += dy[offset + i];
                        }
                        offset += len;
                    }
                }
                Op::MaxPool { parts, argmax } => {
                    for (i, &k) in argmax.iter().enumerate() {
                        grads[parts[k].0][i] += dy[i];
                    }
                }
                Op::Bce { p, target } => {
                    let raw = self.nodes[p.0].value[0];
                    if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&raw) {
                        grads[p.0][0] += dy[0] * (raw - target) / (raw * (1.0 - raw));
                    }
                }
            }
        }
        Grads(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// Central-difference check of `build`'s scalar output against the tape
    /// gradient for one leaf, at every coordinate.
    fn finite_diff_check(leaves: &[Vec<f64>], build: impl Fn(&mut Tape, &[NodeId]) -> NodeId) {
        let run = |vals: &[Vec<f64>]| -> (f64, Vec<Vec<f64>>) {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = vals.iter().map(|v| tape.leaf(v.clone())).collect();
            let out = build(&mut tape, &ids);
            assert_eq!(tape.value(out).len(), 1, "FD check needs a scalar output");
            let grads = tape.backward(out);
            (tape.value(out)[0], ids.iter().map(|&id| grads.get(id).to_vec()).collect())
        };
        let (_, analytic) = run(leaves);
        let h = 1e-6;
        for li in 0..leaves.len() {
            for ci in 0..leaves[li].len() {
                let mut plus = leaves.to_vec();
                plus[li][ci] += h;
                let mut minus = leaves.to_vec();
                minus[li][ci] -= h;
                let fd = (run(&plus).0 - run(&minus).0) / (2.0 * h);
                let an = analytic[li][ci];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    ((fd - an) / denom).abs() < 1e-5,
                    "leaf {li} coord {ci}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    fn rand_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
    }

    #[test]
    fn finite_differences_validate_every_op() {
        let mut rng = stream(11, "tape-fd");
        // w(2x3), b(2), x(3), extra vec a(2), probability-ish p handled below.
        let leaves = vec![rand_vec(6, &mut rng), rand_vec(2, &mut rng), rand_vec(3, &mut rng), rand_vec(2, &mut rng)];
        finite_diff_check(&leaves, |tape, ids| {
            let aff = tape.affine(ids[0], ids[1], ids[2], 2, 3);
            let s = tape.sigmoid(aff);
            let t = tape.tanh(ids[3]);
            let m = tape.mul(s, t);
            let a = tape.add(m, ids[3]);
            let cat = tape.concat(&[a, s]);
            // Reduce to a scalar through another affine with fixed weights.
            let w2 = tape.leaf(vec![0.3, -0.7, 0.4, 0.9]);
            let b2 = tape.leaf(vec![0.05]);
            let z = tape.affine(w2, b2, cat, 1, 4);
            let p = tape.sigmoid(z);
            tape.bce_loss(p, 1.0)
        });
    }

    #[test]
    fn finite_differences_validate_max_pool() {
        // Values spread apart so the finite-difference step cannot flip argmax.
        let leaves = vec![vec![0.9, -0.4, 0.1], vec![0.2, 0.6, -0.8], vec![-0.5, 0.0, 0.7]];
        finite_diff_check(&leaves, |tape, ids| {
            let pooled = tape.max_pool(ids);
            let w = tape.leaf(vec![0.25, -0.5, 1.0]);
            let b = tape.leaf(vec![0.1]);
            let z = tape.affine(w, b, pooled, 1, 3);
            let p = tape.sigmoid(z);
            tape.bce_loss(p, 0.0)
        });
    }

    #[test]
    fn max_pool_routes_subgradient_to_first_argmax_on_ties() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![0.5, 1.0]);
        let b = tape.leaf(vec![0.5, 2.0]);
        let pooled = tape.max_pool(&[a, b]);
        assert_eq!(tape.value(pooled), &[0.5, 2.0]);
        let w = tape.leaf(vec![1.0, 1.0]);
        let bias = tape.leaf(vec![0.0]);
        let z = tape.affine(w, bias, pooled, 1, 2);
        let p = tape.sigmoid(z);
        let loss = tape.bce_loss(p, 1.0);
        let grads = tape.backward(loss);
        // Coordinate 0 ties: all of its gradient goes to the first part.
        assert_ne!(grads.get(a)[0], 0.0);
        assert_eq!(grads.get(b)[0], 0.0);
        // Coordinate 1 is won strictly by the second part.
        assert_eq!(grads.get(a)[1], 0.0);
        assert_ne!(grads.get(b)[1], 0.0);
    }

    #[test]
    fn max_pool_normalizes_negative_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![-0.0]);
        let b = tape.leaf(vec![0.0]);
        let p1 = tape.max_pool(&[a, b]);
        let p2 = tape.max_pool(&[b, a]);
        assert_eq!(tape.value(p1)[0].to_bits(), 0.0f64.to_bits());
        assert_eq!(tape.value(p1)[0].to_bits(), tape.value(p2)[0].to_bits());
    }

    #[test]
    fn bce_matches_reference_and_clamps() {
        let mut tape = Tape::new();
        let p = tape.leaf(vec![0.7]);
        let l1 = tape.bce_loss(p, 1.0);
        let l0 = tape.bce_loss(p, 0.0);
        assert!((tape.value(l1)[0] - 0.35667494393873245).abs() < 1e-15);
        assert!((tape.value(l0)[0] - 1.203972804325936).abs() < 1e-14);

        // Outside the clamp the loss is finite and the gradient is zero.
        let mut tape = Tape::new();
        let p = tape.leaf(vec![1e-9]);
        let loss = tape.bce_loss(p, 1.0);
        assert!(tape.value(loss)[0].is_finite());
        assert_eq!(tape.backward(loss).get(p)[0], 0.0);

        let mut tape = Tape::new();
        let p = tape.leaf(vec![1.0]);
        let loss = tape.bce_loss(p, 0.0);
        assert!(tape.value(loss)[0].is_finite());
        assert_eq!(tape.backward(loss).get(p)[0], 0.0);
    }

    #[test]
    fn gradients_accumulate_across_reuse() {
        // loss = bce(sigmoid(x + x), 1): the two Add inputs alias one leaf,
        // so its gradient must be the sum of both paths. Compare against a
        // fresh tape where the doubling is done with distinct leaves.
        let mut tape = Tape::new();
        let x = tape.leaf(vec![0.3]);
        let doubled = tape.add(x, x);
        let p = tape.sigmoid(doubled);
        let loss = tape.bce_loss(p, 1.0);
        let g = tape.backward(loss).get(x)[0];

        let mut tape2 = Tape::new();
        let x1 = tape2.leaf(vec![0.3]);
        let x2 = tape2.leaf(vec![0.3]);
        let sum = tape2.add(x1, x2);
        let p2 = tape2.sigmoid(sum);
        let loss2 = tape2.bce_loss(p2, 1.0);
        let grads2 = tape2.backward(loss2);
        assert!((g - (grads2.get(x1)[0] + grads2.get(x2)[0])).abs() < 1e-15);
    }
}
