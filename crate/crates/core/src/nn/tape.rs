//! Reverse-mode autodiff over matrix-valued nodes.
//!
//! Values are eagerly computed `Array2<f64>`; the tape records the op and
//! parent ids of every node. The backward pass appends the adjoint
//! computation to the same tape as ordinary ops, so gradients are
//! themselves differentiable — calling [`GradTape::grad_nodes`] on a node
//! built from gradient nodes yields second-order derivatives. That is all
//! the Hamiltonian training path needs.
//!
//! Shape mismatches panic: every caller in this crate constructs shapes
//! statically, so a mismatch is a bug, not an input error. Public entry
//! points validate their inputs before touching the tape.

use ndarray::Array2;
use std::ops::Range;
use std::rc::Rc;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// A * B
    MatMul(NodeId, NodeId),
    /// A * B^T
    MatMulNT(NodeId, NodeId),
    /// A^T * B
    MatMulTN(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// [m x n] + broadcast [1 x n]
    AddRowVec(NodeId, NodeId),
    Relu(NodeId),
    /// Heaviside step of the input; derivative defined as zero.
    Step(NodeId),
    /// Sign of the input; derivative defined as zero.
    Sign(NodeId),
    Abs(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Scale(NodeId, f64),
    /// [m x n] -> [1 x 1]
    SumAll(NodeId),
    /// [1 x 1] -> [m x n]
    BroadcastAll(NodeId),
    /// [m x n] -> [1 x n], summing rows together
    SumRows(NodeId),
    /// [1 x n] -> [m x n]
    BroadcastRows(NodeId),
    GatherRows(NodeId, Rc<Vec<usize>>),
    /// out[idx[i], :] += in[i, :]; output has the given row count
    ScatterAddRows(NodeId, Rc<Vec<usize>>),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, Range<usize>),
    /// place the input into the column range of a zero matrix of the
    /// given total width
    PadCols(NodeId, Range<usize>),
}

struct Node {
    op: Op,
    value: Array2<f64>,
}

/// A single-use-per-backward reverse-mode tape.
#[derive(Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl GradTape {
    pub fn new() -> GradTape {
        GradTape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.dim(), (1, 1));
        self.nodes[id].value[(0, 0)]
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn leaf_scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Array2::from_elem((1, 1), v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.dot(&self.nodes[b].value.t());
        self.push(Op::MatMulNT(a, b), v)
    }

    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.t().dot(&self.nodes[b].value);
        self.push(Op::MatMulTN(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value - &self.nodes[b].value;
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value * &self.nodes[b].value;
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a].value / &self.nodes[b].value;
        self.push(Op::Div(a, b), v)
    }

    pub fn add_row_vec(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[row].value.nrows(), 1);
        let v = &self.nodes[a].value + &self.nodes[row].value;
        self.push(Op::AddRowVec(a, row), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn step(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        self.push(Op::Step(a), v)
    }

    pub fn sign(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a]
            .value
            .mapv(|x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 });
        self.push(Op::Sign(a), v)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.mapv(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.mapv(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.nodes[a].value.sum());
        self.push(Op::SumAll(a), v)
    }

    fn broadcast_all(&mut self, a: NodeId, shape: (usize, usize)) -> NodeId {
        let v = Array2::from_elem(shape, self.nodes[a].value[(0, 0)]);
        self.push(Op::BroadcastAll(a), v)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let mut v = Array2::zeros((1, src.ncols()));
        for row in src.rows() {
            for (o, x) in v.row_mut(0).iter_mut().zip(row) {
                *o += x;
            }
        }
        self.push(Op::SumRows(a), v)
    }

    fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> NodeId {
        let src = &self.nodes[a].value;
        debug_assert_eq!(src.nrows(), 1);
        let mut v = Array2::zeros((rows, src.ncols()));
        for mut row in v.rows_mut() {
            row.assign(&src.row(0));
        }
        self.push(Op::BroadcastRows(a), v)
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: Rc<Vec<usize>>) -> NodeId {
        let src = &self.nodes[a].value;
        let mut v = Array2::zeros((idx.len(), src.ncols()));
        for (out_i, &src_i) in idx.iter().enumerate() {
            v.row_mut(out_i).assign(&src.row(src_i));
        }
        self.push(Op::GatherRows(a, idx), v)
    }

    pub fn scatter_add_rows(&mut self, a: NodeId, idx: Rc<Vec<usize>>, out_rows: usize) -> NodeId {
        let src = &self.nodes[a].value;
        debug_assert_eq!(src.nrows(), idx.len());
        let mut v = Array2::zeros((out_rows, src.ncols()));
        for (src_i, &out_i) in idx.iter().enumerate() {
            let row = src.row(src_i);
            for (o, x) in v.row_mut(out_i).iter_mut().zip(row) {
                *o += x;
            }
        }
        self.push(Op::ScatterAddRows(a, idx), v)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        debug_assert_eq!(va.nrows(), vb.nrows());
        let mut v = Array2::zeros((va.nrows(), va.ncols() + vb.ncols()));
        v.slice_mut(ndarray::s![.., ..va.ncols()]).assign(va);
        v.slice_mut(ndarray::s![.., va.ncols()..]).assign(vb);
        self.push(Op::ConcatCols(a, b), v)
    }

    pub fn slice_cols(&mut self, a: NodeId, range: Range<usize>) -> NodeId {
        let v = self.nodes[a]
            .value
            .slice(ndarray::s![.., range.start..range.end])
            .to_owned();
        self.push(Op::SliceCols(a, range), v)
    }

    fn pad_cols(&mut self, a: NodeId, range: Range<usize>, width: usize) -> NodeId {
        let src = &self.nodes[a].value;
        debug_assert_eq!(src.ncols(), range.len());
        let mut v = Array2::zeros((src.nrows(), width));
        v.slice_mut(ndarray::s![.., range.start..range.end]).assign(src);
        self.push(Op::PadCols(a, range), v)
    }

    /// Mean of all entries, as a scalar node.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a].value.len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum of absolute entries divided by the row count: the mean over
    /// rows of the l1 norm.
    pub fn mae_rows(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        let rows = self.nodes[pred].value.nrows() as f64;
        let d = self.sub(pred, target);
        let a = self.abs(d);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / rows)
    }

    /// Append adjoint nodes for `d output / d wrt_i`. `output` must be a
    /// 1x1 node. Nodes that cannot influence `output` from some `wrt`
    /// receive a zero gradient. May be called repeatedly; each call
    /// extends the tape, and gradients of gradients are valid.
    pub fn grad_nodes(&mut self, output: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        assert_eq!(
            self.nodes[output].value.dim(),
            (1, 1),
            "grad output must be scalar"
        );
        // needed[n]: some wrt node can influence n
        let mut needed = vec![false; output + 1];
        for &w in wrt {
            if w <= output {
                needed[w] = true;
            }
        }
        for id in 0..=output {
            if needed[id] {
                continue;
            }
            needed[id] = self.parents(id).iter().any(|&p| needed[p]);
        }

        let mut adj: Vec<Option<NodeId>> = vec![None; output + 1];
        let seed = self.leaf_scalar(1.0);
        adj[output] = Some(seed);
        for id in (0..=output).rev() {
            let Some(g) = adj[id] else { continue };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if needed[a] {
                        let ga = self.matmul_nt(g, b);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if needed[b] {
                        let gb = self.matmul_tn(a, g);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if needed[a] {
                        let ga = self.matmul(g, b);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if needed[b] {
                        let gb = self.matmul_tn(g, a);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::MatMulTN(a, b) => {
                    if needed[a] {
                        let ga = self.matmul_nt(b, g);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if needed[b] {
                        let gb = self.matmul(a, g);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if needed[a] {
                        self.accumulate(&mut adj, a, g);
                    }
                    if needed[b] {
                        self.accumulate(&mut adj, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if needed[a] {
                        self.accumulate(&mut adj, a, g);
                    }
                    if needed[b] {
                        let gb = self.scale(g, -1.0);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::Mul(a, b) => {
                    if needed[a] {
                        let ga = self.mul(g, b);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if needed[b] {
                        let gb = self.mul(g, a);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::Div(a, b) => {
                    if needed[a] {
                        let ga = self.div(g, b);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if needed[b] {
                        let t = self.div(g, b);
                        let tq = self.mul(t, id);
                        let gb = self.scale(tq, -1.0);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::AddRowVec(a, row) => {
                    if needed[a] {
                        self.accumulate(&mut adj, a, g);
                    }
                    if needed[row] {
                        let gr = self.sum_rows(g);
                        self.accumulate(&mut adj, row, gr);
                    }
                }
                Op::Relu(a) => {
                    if needed[a] {
                        let mask = self.step(a);
                        let ga = self.mul(g, mask);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::Step(_) | Op::Sign(_) => {}
                Op::Abs(a) => {
                    if needed[a] {
                        let s = self.sign(a);
                        let ga = self.mul(g, s);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::Exp(a) => {
                    if needed[a] {
                        let ga = self.mul(g, id);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::Log(a) => {
                    if needed[a] {
                        let ga = self.div(g, a);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::Scale(a, c) => {
                    if needed[a] {
                        let ga = self.scale(g, c);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::SumAll(a) => {
                    if needed[a] {
                        let shape = self.nodes[a].value.dim();
                        let ga = self.broadcast_all(g, shape);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::BroadcastAll(a) => {
                    if needed[a] {
                        let ga = self.sum_all(g);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::SumRows(a) => {
                    if needed[a] {
                        let rows = self.nodes[a].value.nrows();
                        let ga = self.broadcast_rows(g, rows);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::BroadcastRows(a) => {
                    if needed[a] {
                        let ga = self.sum_rows(g);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::GatherRows(a, idx) => {
                    if needed[a] {
                        let rows = self.nodes[a].value.nrows();
                        let ga = self.scatter_add_rows(g, idx, rows);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::ScatterAddRows(a, idx) => {
                    if needed[a] {
                        let ga = self.gather_rows(g, idx);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a].value.ncols();
                    let cb = self.nodes[b].value.ncols();
                    if needed[a] {
                        let ga = self.slice_cols(g, 0..ca);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if needed[b] {
                        let gb = self.slice_cols(g, ca..ca + cb);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::SliceCols(a, range) => {
                    if needed[a] {
                        let width = self.nodes[a].value.ncols();
                        let ga = self.pad_cols(g, range, width);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
                Op::PadCols(a, range) => {
                    if needed[a] {
                        let ga = self.slice_cols(g, range);
                        self.accumulate(&mut adj, a, ga);
                    }
                }
            }
        }

        wrt.iter()
            .map(|&w| match adj.get(w).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.nodes[w].value.dim();
                    self.leaf(Array2::zeros(shape))
                }
            })
            .collect()
    }

    /// One-shot backward pass: gradients of a scalar `output` with respect
    /// to `wrt`, as owned arrays. Errors if the tape was already consumed
    /// by a previous backward call.
    pub fn backward(
        &mut self,
        output: NodeId,
        wrt: &[NodeId],
    ) -> Result<Vec<Array2<f64>>, super::NnError> {
        if self.backward_done {
            return Err(super::NnError::TapeExhausted);
        }
        self.backward_done = true;
        let ids = self.grad_nodes(output, wrt);
        Ok(ids.into_iter().map(|id| self.nodes[id].value.clone()).collect())
    }

    fn accumulate(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contribution: NodeId) {
        adj[target] = Some(match adj[target] {
            Some(existing) => self.add(existing, contribution),
            None => contribution,
        });
    }

    fn parents(&self, id: NodeId) -> Vec<NodeId> {
        match &self.nodes[id].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatMulNT(a, b)
            | Op::MatMulTN(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddRowVec(a, b)
            | Op::ConcatCols(a, b) => vec![*a, *b],
            Op::Relu(a)
            | Op::Step(a)
            | Op::Sign(a)
            | Op::Abs(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Scale(a, _)
            | Op::SumAll(a)
            | Op::BroadcastAll(a)
            | Op::SumRows(a)
            | Op::BroadcastRows(a)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::SliceCols(a, _)
            | Op::PadCols(a, _) => vec![*a],
        }
    }
}
