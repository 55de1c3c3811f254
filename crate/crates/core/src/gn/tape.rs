//! Reverse-mode automatic differentiation over a tape of matrix operations.
//!
//! Every value is a dense `[rows x cols]` matrix of f64 (scalars are 1x1).
//! Operations evaluate eagerly and record themselves; [`Tape::backward`]
//! walks the recording in reverse and *emits the adjoint computation as new
//! tape operations*. Gradients are therefore ordinary tape values, and a
//! scalar function of a gradient can be differentiated again by calling
//! `backward` a second time — that is how the Hamiltonian models obtain
//! parameter gradients of (dH/dq, dH/dp).
//!
//! Shape errors are programmer errors and panic; user-facing validation
//! happens at the model boundary.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

/// Handle to a tape value. The default value is a placeholder referring to
/// the tape's first node; it exists so containers can be pre-sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// [R x K] . [K x C]
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product of same-shape matrices.
    Mul(Var, Var),
    Scale(Var, f64),
    /// [R x C] + broadcast [1 x C]
    AddRowVec(Var, Var),
    /// [R x C] * broadcast [R x 1]
    MulColVec(Var, Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    /// Columns [start, end) of the input.
    SliceCols(Var, usize, usize),
    /// Embed into a zero matrix of wider column count at `offset`.
    PadCols { x: Var, offset: usize },
    /// out[r, :] = x[index[r], :]
    GatherRows(Var, Arc<Vec<usize>>),
    /// out[index[r], :] += x[r, :]
    ScatterAddRows { x: Var, index: Arc<Vec<usize>> },
    /// [R x C] -> [1 x C]
    SumRows(Var),
    /// [1 x C] -> [R x C]
    BroadcastRows(Var),
    /// [R x C] -> [R x 1]
    SumCols(Var),
    /// [R x 1] -> [R x C]
    BroadcastCols(Var),
    /// [R x C] -> [1 x 1]
    SumAll(Var),
    /// [1 x 1] -> [R x C]
    BroadcastAll(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b)
            | Op::AddRowVec(a, b) | Op::MulColVec(a, b) => vec![*a, *b],
            Op::Transpose(a) | Op::Scale(a, _) | Op::Relu(a) | Op::Softplus(a)
            | Op::Sigmoid(a) | Op::SliceCols(a, _, _) | Op::SumRows(a)
            | Op::BroadcastRows(a) | Op::SumCols(a) | Op::BroadcastCols(a)
            | Op::SumAll(a) | Op::BroadcastAll(a) | Op::GatherRows(a, _) => vec![*a],
            Op::PadCols { x, .. } | Op::ScatterAddRows { x, .. } => vec![*x],
            Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Recording of one differentiable computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Introduces an input (parameter, data, or constant).
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let s = self.nodes[v.0].value.dim();
        (s.0, s.1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ak) = self.shape(a);
        let (bk, bc) = self.shape(b);
        assert_eq!(ak, bk, "matmul inner dims {ar}x{ak} . {bk}x{bc}");
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shapes");
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = &self.nodes[a.0].value * k;
        self.push(value, Op::Scale(a, k))
    }

    pub fn add_row_vec(&mut self, a: Var, row: Var) -> Var {
        let (_, ac) = self.shape(a);
        let (rr, rc) = self.shape(row);
        assert_eq!((rr, rc), (1, ac), "add_row_vec: row must be 1x{ac}");
        let value = &self.nodes[a.0].value + &self.nodes[row.0].value;
        self.push(value, Op::AddRowVec(a, row))
    }

    pub fn mul_col_vec(&mut self, a: Var, col: Var) -> Var {
        let (ar, _) = self.shape(a);
        let (cr, cc) = self.shape(col);
        assert_eq!((cr, cc), (ar, 1), "mul_col_vec: col must be {ar}x1");
        let value = &self.nodes[a.0].value * &self.nodes[col.0].value;
        self.push(value, Op::MulColVec(a, col))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    /// Numerically stable softplus: max(x, 0) + ln(1 + e^{-|x|}).
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.push(value, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(value, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Array2::zeros((rows, total));
        let mut offset = 0;
        for &p in parts {
            let (pr, pc) = self.shape(p);
            assert_eq!(pr, rows, "concat_cols: row mismatch");
            value
                .slice_mut(s![.., offset..offset + pc])
                .assign(&self.nodes[p.0].value);
            offset += pc;
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (_, ac) = self.shape(a);
        assert!(start <= end && end <= ac, "slice [{start}, {end}) of {ac} cols");
        let value = self.nodes[a.0].value.slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start, end))
    }

    pub fn pad_cols(&mut self, a: Var, total: usize, offset: usize) -> Var {
        let (ar, ac) = self.shape(a);
        assert!(offset + ac <= total, "pad: {ac} cols at {offset} into {total}");
        let mut value = Array2::zeros((ar, total));
        value
            .slice_mut(s![.., offset..offset + ac])
            .assign(&self.nodes[a.0].value);
        self.push(value, Op::PadCols { x: a, offset })
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Var {
        let (ar, ac) = self.shape(a);
        let mut value = Array2::zeros((index.len(), ac));
        for (out_r, &src) in index.iter().enumerate() {
            assert!(src < ar, "gather index {src} out of {ar} rows");
            value.row_mut(out_r).assign(&self.nodes[a.0].value.row(src));
        }
        self.push(value, Op::GatherRows(a, index))
    }

    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<Vec<usize>>, rows: usize) -> Var {
        let (ar, ac) = self.shape(a);
        assert_eq!(ar, index.len(), "scatter rows vs index length");
        let mut value = Array2::zeros((rows, ac));
        for (src_r, &dst) in index.iter().enumerate() {
            assert!(dst < rows, "scatter index {dst} out of {rows} rows");
            let src = self.nodes[a.0].value.row(src_r);
            let mut dst_row = value.row_mut(dst);
            dst_row += &src;
        }
        self.push(value, Op::ScatterAddRows { x: a, index })
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(value, Op::SumRows(a))
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let (ar, ac) = self.shape(a);
        assert_eq!(ar, 1, "broadcast_rows wants a 1x{ac} input");
        let row = self.nodes[a.0].value.row(0).to_owned();
        let value = Array2::from_shape_fn((rows, ac), |(_, c)| row[c]);
        self.push(value, Op::BroadcastRows(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumCols(a))
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        let (ar, ac) = self.shape(a);
        assert_eq!(ac, 1, "broadcast_cols wants a {ar}x1 input");
        let col = self.nodes[a.0].value.column(0).to_owned();
        let value = Array2::from_shape_fn((ar, cols), |(r, _)| col[r]);
        self.push(value, Op::BroadcastCols(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.nodes[a.0].value.sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn broadcast_all(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.shape(a), (1, 1), "broadcast_all wants a scalar");
        let x = self.nodes[a.0].value[(0, 0)];
        self.push(Array2::from_elem((rows, cols), x), Op::BroadcastAll(a))
    }

    /// Reverse-mode differentiation of the scalar `out` with respect to each
    /// var in `wrt`. Returns one gradient var per request (`None` when `out`
    /// does not depend on it). The adjoint computation is recorded on the
    /// tape, so gradients can be differentiated again.
    pub fn backward(&mut self, out: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>> {
        if self.shape(out) != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(out)
            )));
        }
        let n = out.0 + 1;

        // Nodes that depend on some wrt var (forward sweep)...
        let mut relevant = vec![false; n];
        for v in wrt {
            if v.0 < n {
                relevant[v.0] = true;
            }
        }
        for i in 0..n {
            if !relevant[i] {
                relevant[i] = self.nodes[i].op.inputs().iter().any(|v| relevant[v.0]);
            }
        }
        // ...and nodes that out depends on (backward sweep). Only intersection
        // nodes carry adjoints.
        let mut needed = vec![false; n];
        needed[out.0] = true;
        for i in (0..n).rev() {
            if needed[i] {
                for v in self.nodes[i].op.inputs() {
                    needed[v.0] = true;
                }
            }
        }
        let live = |i: usize| relevant[i] && needed[i];

        let mut adjoint: Vec<Option<Var>> = vec![None; n];
        if live(out.0) {
            adjoint[out.0] = Some(self.leaf(Array2::ones((1, 1))));
        }

        for i in (0..n).rev() {
            let (g, op) = match (&adjoint[i], live(i)) {
                (Some(g), true) => (*g, self.nodes[i].op.clone()),
                _ => continue,
            };
            let accumulate = |tape: &mut Tape, adj: &mut Vec<Option<Var>>, v: Var, grad: Var| {
                if !(relevant[v.0] && needed[v.0]) {
                    return;
                }
                adj[v.0] = Some(match adj[v.0] {
                    Some(existing) => tape.add(existing, grad),
                    None => grad,
                });
            };
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if live(a.0) {
                        let bt = self.transpose(b);
                        let da = self.matmul(g, bt);
                        accumulate(self, &mut adjoint, a, da);
                    }
                    if live(b.0) {
                        let at = self.transpose(a);
                        let db = self.matmul(at, g);
                        accumulate(self, &mut adjoint, b, db);
                    }
                }
                Op::Transpose(a) => {
                    let da = self.transpose(g);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Add(a, b) => {
                    accumulate(self, &mut adjoint, a, g);
                    accumulate(self, &mut adjoint, b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(self, &mut adjoint, a, g);
                    if live(b.0) {
                        let db = self.scale(g, -1.0);
                        accumulate(self, &mut adjoint, b, db);
                    }
                }
                Op::Mul(a, b) => {
                    if live(a.0) {
                        let da = self.mul(g, b);
                        accumulate(self, &mut adjoint, a, da);
                    }
                    if live(b.0) {
                        let db = self.mul(g, a);
                        accumulate(self, &mut adjoint, b, db);
                    }
                }
                Op::Scale(a, k) => {
                    let da = self.scale(g, k);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::AddRowVec(a, row) => {
                    accumulate(self, &mut adjoint, a, g);
                    if live(row.0) {
                        let dr = self.sum_rows(g);
                        accumulate(self, &mut adjoint, row, dr);
                    }
                }
                Op::MulColVec(a, col) => {
                    if live(a.0) {
                        let da = self.mul_col_vec(g, col);
                        accumulate(self, &mut adjoint, a, da);
                    }
                    if live(col.0) {
                        let prod = self.mul(g, a);
                        let dc = self.sum_cols(prod);
                        accumulate(self, &mut adjoint, col, dc);
                    }
                }
                Op::Relu(a) => {
                    // Subgradient 0 at exactly 0; the mask is a constant of
                    // the recorded forward values.
                    let mask = self.nodes[a.0].value.mapv(|x| f64::from(x > 0.0));
                    let mask = self.leaf(mask);
                    let da = self.mul(g, mask);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Softplus(a) => {
                    let sig = self.sigmoid(a);
                    let da = self.mul(g, sig);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Sigmoid(a) => {
                    // d sigma = sigma (1 - sigma), reusing this node's output.
                    let me = Var(i);
                    let (r, c) = self.shape(me);
                    let ones = self.leaf(Array2::ones((r, c)));
                    let one_minus = self.sub(ones, me);
                    let d = self.mul(me, one_minus);
                    let da = self.mul(g, d);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let width = self.shape(p).1;
                        if live(p.0) {
                            let dp = self.slice_cols(g, offset, offset + width);
                            accumulate(self, &mut adjoint, p, dp);
                        }
                        offset += width;
                    }
                }
                Op::SliceCols(a, start, _end) => {
                    if live(a.0) {
                        let total = self.shape(a).1;
                        let da = self.pad_cols(g, total, start);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
                Op::PadCols { x, offset, .. } => {
                    if live(x.0) {
                        let width = self.shape(x).1;
                        let dx = self.slice_cols(g, offset, offset + width);
                        accumulate(self, &mut adjoint, x, dx);
                    }
                }
                Op::GatherRows(a, index) => {
                    if live(a.0) {
                        let rows = self.shape(a).0;
                        let da = self.scatter_add_rows(g, index, rows);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
                Op::ScatterAddRows { x, index, .. } => {
                    if live(x.0) {
                        let dx = self.gather_rows(g, index);
                        accumulate(self, &mut adjoint, x, dx);
                    }
                }
                Op::SumRows(a) => {
                    if live(a.0) {
                        let rows = self.shape(a).0;
                        let da = self.broadcast_rows(g, rows);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
                Op::BroadcastRows(a) => {
                    if live(a.0) {
                        let da = self.sum_rows(g);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
                Op::SumCols(a) => {
                    if live(a.0) {
                        let cols = self.shape(a).1;
                        let da = self.broadcast_cols(g, cols);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
                Op::BroadcastCols(a) => {
                    if live(a.0) {
                        let da = self.sum_cols(g);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
                Op::SumAll(a) => {
                    if live(a.0) {
                        let (r, c) = self.shape(a);
                        let da = self.broadcast_all(g, r, c);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
                Op::BroadcastAll(a) => {
                    if live(a.0) {
                        let da = self.sum_all(g);
                        accumulate(self, &mut adjoint, a, da);
                    }
                }
            }
        }
        Ok(wrt
            .iter()
            .map(|v| if v.0 < n { adjoint[v.0] } else { None })
            .collect())
    }
}
