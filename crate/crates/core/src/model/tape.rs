//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! The tape is an append-only arena: building an expression records the
//! primal value and the operation that produced it, and [`Tape::backward`]
//! walks the nodes once in reverse insertion order (a reverse topological
//! order by construction) accumulating adjoints. Every primitive here has
//! a finite-difference test in `gradcheck`.

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    SoftmaxRows(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Relu(NodeId),
    Sqrt(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, #[allow(dead_code)] f64),
    Clamp(NodeId, f64, f64),
    MeanAll(NodeId),
    SumAll(NodeId),
    SumCols(NodeId),
    MeanRows(NodeId),
    MaxRows(NodeId),
    BroadcastRow(NodeId),
    BroadcastCol(NodeId),
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    SliceCols(NodeId, usize, usize),
    GatherRows(NodeId, Vec<usize>),
    Reshape(NodeId),
    Detach,
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Accumulated adjoints per node after a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the seeded output with respect to `id`; zeros if the
    /// node does not influence the output.
    pub fn wrt(&self, tape: &Tape, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let v = tape.value(id);
                Tensor::zeros(v.rows, v.cols)
            }
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Row-wise softmax with max-subtraction for stability.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = &x.data[r * x.cols..(r + 1) * x.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (c, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                out.set(r, c, e);
                sum += e;
            }
            for c in 0..x.cols {
                let v = out.get(r, c) / sum;
                out.set(r, c, v);
            }
        }
        self.push(Op::SoftmaxRows(a), out)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sin);
        self.push(Op::Sin(a), v)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::cos);
        self.push(Op::Cos(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x + s);
        self.push(Op::AddScalar(a, s), v)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let v = Tensor::scalar(x.data.iter().sum::<f64>() / x.len() as f64);
        self.push(Op::MeanAll(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).data.iter().sum());
        self.push(Op::SumAll(a), v)
    }

    /// Row sums: NxM -> Nx1.
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows, 1);
        for r in 0..x.rows {
            out.data[r] = x.data[r * x.cols..(r + 1) * x.cols].iter().sum();
        }
        self.push(Op::SumCols(a), out)
    }

    /// Column means: NxM -> 1xM.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut out = Tensor::zeros(1, x.cols);
        for r in 0..x.rows {
            for c in 0..x.cols {
                out.data[c] += x.get(r, c);
            }
        }
        out.scale_assign(1.0 / x.rows as f64);
        self.push(Op::MeanRows(a), out)
    }

    /// Column maxima: NxM -> 1xM. Backward routes to the first argmax row.
    pub fn max_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut out = Tensor::zeros(1, x.cols);
        for c in 0..x.cols {
            out.data[c] = (0..x.rows)
                .map(|r| x.get(r, c))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        self.push(Op::MaxRows(a), out)
    }

    /// 1xM -> NxM by repeating the row.
    pub fn broadcast_row(&mut self, a: NodeId, rows: usize) -> NodeId {
        let x = self.value(a);
        assert_eq!(x.rows, 1, "broadcast_row wants a 1xM input");
        let mut data = Vec::with_capacity(rows * x.cols);
        for _ in 0..rows {
            data.extend_from_slice(&x.data);
        }
        let v = Tensor::from_vec(rows, x.cols, data);
        self.push(Op::BroadcastRow(a), v)
    }

    /// Nx1 -> NxM by repeating the column.
    pub fn broadcast_col(&mut self, a: NodeId, cols: usize) -> NodeId {
        let x = self.value(a);
        assert_eq!(x.cols, 1, "broadcast_col wants an Nx1 input");
        let mut out = Tensor::zeros(x.rows, cols);
        for r in 0..x.rows {
            for c in 0..cols {
                out.set(r, c, x.data[r]);
            }
        }
        self.push(Op::BroadcastCol(a), out)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows, y.rows, "concat_cols row mismatch");
        let mut out = Tensor::zeros(x.rows, x.cols + y.cols);
        for r in 0..x.rows {
            for c in 0..x.cols {
                out.set(r, c, x.get(r, c));
            }
            for c in 0..y.cols {
                out.set(r, x.cols + c, y.get(r, c));
            }
        }
        self.push(Op::ConcatCols(a, b), out)
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols, y.cols, "concat_rows column mismatch");
        let mut data = Vec::with_capacity((x.rows + y.rows) * x.cols);
        data.extend_from_slice(&x.data);
        data.extend_from_slice(&y.data);
        let v = Tensor::from_vec(x.rows + y.rows, x.cols, data);
        self.push(Op::ConcatRows(a, b), v)
    }

    /// Columns `[start, end)` of the input.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let x = self.value(a);
        assert!(start < end && end <= x.cols, "bad column slice");
        let mut out = Tensor::zeros(x.rows, end - start);
        for r in 0..x.rows {
            for c in start..end {
                out.set(r, c - start, x.get(r, c));
            }
        }
        self.push(Op::SliceCols(a, start, end), out)
    }

    /// Row selection with repetition; backward scatters into the source.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let x = self.value(a);
        let mut out = Tensor::zeros(indices.len(), x.cols);
        for (r, &i) in indices.iter().enumerate() {
            assert!(i < x.rows, "gather index out of range");
            for c in 0..x.cols {
                out.set(r, c, x.get(i, c));
            }
        }
        self.push(Op::GatherRows(a, indices.to_vec()), out)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let x = self.value(a);
        assert_eq!(x.len(), rows * cols, "reshape size mismatch");
        let v = Tensor::from_vec(rows, cols, x.data.clone());
        self.push(Op::Reshape(a), v)
    }

    /// Copies the value into a fresh leaf-like node that blocks gradient
    /// flow to its source.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(Op::Detach, v)
    }

    /// Reverse pass seeded with d(output)/d(output) = 1. The output must be
    /// scalar (1x1).
    pub fn backward(&self, output: NodeId) -> Gradients {
        assert_eq!(
            self.value(output).len(),
            1,
            "backward expects a scalar output"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0));

        for id in (0..=output.0).rev() {
            let g = match &grads[id] {
                Some(g) => g.clone(),
                None => continue,
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf | Op::Detach => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let da = g.zip(self.value(*b), |gv, bv| gv * bv);
                    let db = g.zip(self.value(*a), |gv, av| gv * av);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.value(*b).transpose());
                    let db = self.value(*a).transpose().matmul(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut dx = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let dot: f64 = (0..y.cols).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols {
                            dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Sin(a) => {
                    let dx = g.zip(self.value(*a), |gv, x| gv * x.cos());
                    accumulate(&mut grads, *a, dx);
                }
                Op::Cos(a) => {
                    let dx = g.zip(self.value(*a), |gv, x| -gv * x.sin());
                    accumulate(&mut grads, *a, dx);
                }
                Op::Exp(a) => {
                    let dx = g.zip(&node.value, |gv, y| gv * y);
                    accumulate(&mut grads, *a, dx);
                }
                Op::Ln(a) => {
                    let dx = g.zip(self.value(*a), |gv, x| gv / x);
                    accumulate(&mut grads, *a, dx);
                }
                Op::Relu(a) => {
                    let dx = g.zip(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *a, dx);
                }
                Op::Sqrt(a) => {
                    let dx = g.zip(&node.value, |gv, y| gv / (2.0 * y));
                    accumulate(&mut grads, *a, dx);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.map(|v| v * s)),
                Op::AddScalar(a, _) => accumulate(&mut grads, *a, g),
                Op::Clamp(a, lo, hi) => {
                    let dx = g.zip(self.value(*a), |gv, x| {
                        if x > *lo && x < *hi {
                            gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, dx);
                }
                Op::MeanAll(a) => {
                    let x = self.value(*a);
                    let gv = g.scalar_value() / x.len() as f64;
                    accumulate(&mut grads, *a, x.map(|_| gv));
                }
                Op::SumAll(a) => {
                    let x = self.value(*a);
                    let gv = g.scalar_value();
                    accumulate(&mut grads, *a, x.map(|_| gv));
                }
                Op::SumCols(a) => {
                    let x = self.value(*a);
                    let mut dx = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        for c in 0..x.cols {
                            dx.set(r, c, g.data[r]);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let inv = 1.0 / x.rows as f64;
                    let mut dx = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        for c in 0..x.cols {
                            dx.set(r, c, g.data[c] * inv);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::MaxRows(a) => {
                    let x = self.value(*a);
                    let mut dx = Tensor::zeros(x.rows, x.cols);
                    for c in 0..x.cols {
                        let mut arg = 0;
                        let mut best = f64::NEG_INFINITY;
                        for r in 0..x.rows {
                            if x.get(r, c) > best {
                                best = x.get(r, c);
                                arg = r;
                            }
                        }
                        dx.set(arg, c, g.data[c]);
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::BroadcastRow(a) => {
                    let mut dx = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            dx.data[c] += g.get(r, c);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::BroadcastCol(a) => {
                    let mut dx = Tensor::zeros(g.rows, 1);
                    for r in 0..g.rows {
                        dx.data[r] = (0..g.cols).map(|c| g.get(r, c)).sum();
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols;
                    let mut da = Tensor::zeros(g.rows, ca);
                    let mut db = Tensor::zeros(g.rows, g.cols - ca);
                    for r in 0..g.rows {
                        for c in 0..ca {
                            da.set(r, c, g.get(r, c));
                        }
                        for c in ca..g.cols {
                            db.set(r, c - ca, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.value(*a).rows;
                    let split = ra * g.cols;
                    let da = Tensor::from_vec(ra, g.cols, g.data[..split].to_vec());
                    let db = Tensor::from_vec(g.rows - ra, g.cols, g.data[split..].to_vec());
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SliceCols(a, start, _end) => {
                    let x = self.value(*a);
                    let mut dx = Tensor::zeros(x.rows, x.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            dx.set(r, start + c, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::GatherRows(a, indices) => {
                    let x = self.value(*a);
                    let mut dx = Tensor::zeros(x.rows, x.cols);
                    for (r, &i) in indices.iter().enumerate() {
                        for c in 0..g.cols {
                            let v = dx.get(i, c) + g.get(r, c);
                            dx.set(i, c, v);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Reshape(a) => {
                    let x = self.value(*a);
                    let dx = Tensor::from_vec(x.rows, x.cols, g.data.clone());
                    accumulate(&mut grads, *a, dx);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut grads[id.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        // f(w) = mean(w * w); df/dw = 2w / len
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]));
        let sq = tape.mul(w, w);
        let loss = tape.mean_all(sq);
        let grads = tape.backward(loss);
        let g = grads.wrt(&tape, w);
        for (i, &x) in [1.0, -2.0, 3.0, 0.5].iter().enumerate() {
            assert_eq!(g.data[i], 2.0 * x / 4.0);
        }
    }

    #[test]
    fn fanout_accumulates() {
        // f = sum(x) + sum(x) -> df/dx = 2
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        let s1 = tape.sum_all(x);
        let s2 = tape.sum_all(x);
        let f = tape.add(s1, s2);
        let grads = tape.backward(f);
        assert_eq!(grads.wrt(&tape, x).data, vec![2.0, 2.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![3.0]));
        let d = tape.detach(x);
        let y = tape.mul(d, d);
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss);
        assert_eq!(grads.wrt(&tape, x).data, vec![0.0]);
        assert_eq!(grads.wrt(&tape, d).data, vec![6.0]);
    }

    #[test]
    fn softmax_rows_are_simplex() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
        let y = tape.softmax_rows(x);
        let v = tape.value(y);
        for r in 0..2 {
            let sum: f64 = (0..3).map(|c| v.get(r, c)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!((0..3).all(|c| v.get(r, c) >= 0.0));
        }
    }

    #[test]
    fn matmul_gradients_match_manual() {
        // f = sum(A * B); dA = 1 * B^T, dB = A^T * 1
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(Tensor::from_vec(2, 2, vec![0.5, -1.0, 2.0, 0.0]));
        let c = tape.matmul(a, b);
        let f = tape.sum_all(c);
        let grads = tape.backward(f);
        let ones = Tensor::from_vec(2, 2, vec![1.0; 4]);
        let want_a = ones.matmul(&tape.value(b).transpose());
        let want_b = tape.value(a).transpose().matmul(&ones);
        assert_eq!(grads.wrt(&tape, a), want_a);
        assert_eq!(grads.wrt(&tape, b), want_b);
    }

    #[test]
    fn gather_scatters_on_backward() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(3, 1, vec![1.0, 2.0, 3.0]));
        let g = tape.gather_rows(x, &[0, 0, 2]);
        let f = tape.sum_all(g);
        let grads = tape.backward(f);
        assert_eq!(grads.wrt(&tape, x).data, vec![2.0, 0.0, 1.0]);
    }
}
