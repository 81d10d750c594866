//! Expression tape: a define-by-run DAG of primitive operations.
//!
//! Nodes are appended in evaluation order, so every node's inputs precede it
//! and the tape is acyclic by construction. Values are computed eagerly when
//! a node is pushed and can be recomputed after a leaf is overwritten, which
//! is what the finite-difference checker relies on.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{Adjacency, Tensor};
use crate::error::{Error, Result};

/// Norm guard used by cosine similarity so zero rows stay finite.
pub const COSINE_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A user-supplied primitive with its own forward and vector-Jacobian rules.
pub trait CustomOp: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    /// Gradients with respect to each input, given the output gradient.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor)
        -> Result<Vec<Tensor>>;
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    Exp(Var),
    Ln(Var),
    Sum(Var),
    Mean(Var),
    RowNorm(Var),
    CosineRows(Var, Var),
    GatherRows(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>, usize),
    NeighborSum(Var, Arc<Adjacency>),
    WeightedSum(Arc<[Var]>, Var),
    Custom(Arc<[Var]>, Arc<dyn CustomOp>),
}

impl Op {
    fn name(&self) -> String {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Relu(..) => "relu",
            Op::Scale(..) => "scale",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowNorm(..) => "row_norm",
            Op::CosineRows(..) => "cosine_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::SegmentSum(..) => "segment_sum",
            Op::NeighborSum(..) => "neighbor_sum",
            Op::WeightedSum(..) => "weighted_sum",
            Op::Custom(_, op) => return op.name().to_string(),
        }
        .to_string()
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::CosineRows(a, b) => vec![*a, *b],
            Op::Relu(a)
            | Op::Scale(a, _)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowNorm(a)
            | Op::GatherRows(a, _)
            | Op::SegmentSum(a, _, _)
            | Op::NeighborSum(a, _) => vec![*a],
            Op::WeightedSum(ms, w) => ms.iter().copied().chain([*w]).collect(),
            Op::Custom(ins, _) => ins.to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    trainable: bool,
    needs_grad: bool,
}

/// Gradients of a scalar root with respect to the trainable leaves.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_leaf: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, leaf: Var) -> Option<&Tensor> {
        self.by_leaf.get(&leaf)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.by_leaf.iter().map(|(v, t)| (*v, t))
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn row_compatible(op: &'static str, x: &Tensor, row: &Tensor) -> Result<()> {
    if row.rows() != 1 || row.cols() != x.cols() {
        return Err(Error::shape(
            op,
            format!("row {:?} against matrix {:?}", row.shape(), x.shape()),
        ));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
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

    fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            trainable,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        self.nodes[v.0].trainable
    }

    pub fn trainable_leaves(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].trainable)
            .map(Var)
            .collect()
    }

    /// Name of the primitive that produced `v`.
    pub fn op_name(&self, v: Var) -> String {
        self.nodes[v.0].op.name()
    }

    /// Overwrites a leaf value. Dependent nodes keep stale values until
    /// [`Tape::recompute`] runs.
    pub fn set_leaf(&mut self, v: Var, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::Contract(format!("node {} is not a leaf", v.0)));
        }
        same_shape("set_leaf", &node.value, &value)?;
        node.value = value;
        Ok(())
    }

    /// Re-evaluates every non-leaf node in order.
    pub fn recompute(&mut self) -> Result<()> {
        self.recompute_from(0)
    }

    pub fn recompute_from(&mut self, start: usize) -> Result<()> {
        for i in start..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.forward(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = self.forward(&op)?;
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            trainable: false,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    /// Adds a `1 x d` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.push(Op::AddRow(x, row))
    }

    /// Multiplies every row of `x` elementwise by a `1 x d` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.push(Op::MulRow(x, row))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Relu(x))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.push(Op::Scale(x, factor))
    }

    pub fn div_scalar(&mut self, x: Var, divisor: f64) -> Result<Var> {
        if divisor == 0.0 {
            return Err(Error::Numeric {
                op: "div_scalar".into(),
            });
        }
        self.push(Op::Scale(x, 1.0 / divisor))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Exp(x))
    }

    /// Natural logarithm.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Ln(x))
    }

    /// Sum of all entries, as a `1 x 1` scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Mean(x))
    }

    /// L2 norm of each row, `n x 1`.
    pub fn row_norm(&mut self, x: Var) -> Result<Var> {
        self.push(Op::RowNorm(x))
    }

    /// Cosine similarity of row `i` of `a` with row `i` of `b`, `n x 1`.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::CosineRows(a, b))
    }

    /// Output row `k` is row `indices[k]` of `x`.
    pub fn gather_rows(&mut self, x: Var, indices: Arc<[usize]>) -> Result<Var> {
        self.push(Op::GatherRows(x, indices))
    }

    /// Output row `g` is the sum of the rows `k` of `x` with `groups[k] == g`.
    pub fn segment_sum(&mut self, x: Var, groups: Arc<[usize]>, num_groups: usize) -> Result<Var> {
        self.push(Op::SegmentSum(x, groups, num_groups))
    }

    /// Output row `i` is the sum of the rows of `x` listed as neighbors of `i`.
    pub fn neighbor_sum(&mut self, x: Var, adjacency: Arc<Adjacency>) -> Result<Var> {
        self.push(Op::NeighborSum(x, adjacency))
    }

    /// `sum_k w[k] * mats[k]` with `w` a `1 x K` row.
    pub fn weighted_sum(&mut self, mats: &[Var], weights: Var) -> Result<Var> {
        self.push(Op::WeightedSum(mats.into(), weights))
    }

    pub fn custom(&mut self, inputs: &[Var], op: Arc<dyn CustomOp>) -> Result<Var> {
        self.push(Op::Custom(inputs.into(), op))
    }

    fn forward(&self, op: &Op) -> Result<Tensor> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let out = match op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::MatMul(a, b) => val(a).matmul(val(b))?,
            Op::Add(a, b) => {
                same_shape("add", val(a), val(b))?;
                val(a).zip_map(val(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same_shape("sub", val(a), val(b))?;
                val(a).zip_map(val(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                same_shape("mul", val(a), val(b))?;
                val(a).zip_map(val(b), |x, y| x * y)
            }
            Op::AddRow(x, r) => {
                let (x, r) = (val(x), val(r));
                row_compatible("add_row", x, r)?;
                let mut out = x.clone();
                for i in 0..out.rows() {
                    for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                        *o += b;
                    }
                }
                out
            }
            Op::MulRow(x, r) => {
                let (x, r) = (val(x), val(r));
                row_compatible("mul_row", x, r)?;
                let mut out = x.clone();
                for i in 0..out.rows() {
                    for (o, p) in out.row_mut(i).iter_mut().zip(r.data()) {
                        *o *= p;
                    }
                }
                out
            }
            Op::Relu(x) => val(x).map(|v| if v > 0.0 { v } else { 0.0 }),
            Op::Scale(x, c) => val(x).map(|v| v * c),
            Op::Exp(x) => val(x).map(f64::exp),
            Op::Ln(x) => {
                if val(x).data().iter().any(|&v| v <= 0.0) {
                    return Err(Error::Numeric { op: "ln".into() });
                }
                val(x).map(f64::ln)
            }
            Op::Sum(x) => Tensor::scalar(val(x).data().iter().sum()),
            Op::Mean(x) => {
                let x = val(x);
                if x.is_empty() {
                    return Err(Error::shape("mean", "empty tensor"));
                }
                Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
            }
            Op::RowNorm(x) => {
                let x = val(x);
                let data = (0..x.rows()).map(|i| norm(x.row(i))).collect();
                Tensor::new(x.rows(), 1, data)?
            }
            Op::CosineRows(a, b) => {
                let (a, b) = (val(a), val(b));
                same_shape("cosine_rows", a, b)?;
                let data = (0..a.rows())
                    .map(|i| {
                        let (ra, rb) = (a.row(i), b.row(i));
                        dot(ra, rb) / ((norm(ra) + COSINE_EPS) * (norm(rb) + COSINE_EPS))
                    })
                    .collect();
                Tensor::new(a.rows(), 1, data)?
            }
            Op::GatherRows(x, idx) => {
                let x = val(x);
                let mut data = Vec::with_capacity(idx.len() * x.cols());
                for &i in idx.iter() {
                    if i >= x.rows() {
                        return Err(Error::shape(
                            "gather_rows",
                            format!("row {i} of {} rows", x.rows()),
                        ));
                    }
                    data.extend_from_slice(x.row(i));
                }
                Tensor::new(idx.len(), x.cols(), data)?
            }
            Op::SegmentSum(x, groups, n) => {
                let x = val(x);
                if groups.len() != x.rows() {
                    return Err(Error::shape(
                        "segment_sum",
                        format!("{} group ids for {} rows", groups.len(), x.rows()),
                    ));
                }
                let mut out = Tensor::zeros(*n, x.cols());
                for (k, &g) in groups.iter().enumerate() {
                    if g >= *n {
                        return Err(Error::shape(
                            "segment_sum",
                            format!("group {g} of {n} groups"),
                        ));
                    }
                    for (o, v) in out.row_mut(g).iter_mut().zip(x.row(k)) {
                        *o += v;
                    }
                }
                out
            }
            Op::NeighborSum(x, adj) => {
                let x = val(x);
                if adj.num_rows() != x.rows() || adj.max_target().is_some_and(|m| m >= x.rows()) {
                    return Err(Error::shape(
                        "neighbor_sum",
                        format!("adjacency of {} rows against {:?}", adj.num_rows(), x.shape()),
                    ));
                }
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let row = out.row_mut(i);
                    for &j in adj.neighbors(i) {
                        for (o, v) in row.iter_mut().zip(x.row(j)) {
                            *o += v;
                        }
                    }
                }
                out
            }
            Op::WeightedSum(mats, w) => {
                let w = val(w);
                if mats.is_empty() || w.rows() != 1 || w.cols() != mats.len() {
                    return Err(Error::shape(
                        "weighted_sum",
                        format!("{} matrices with weights {:?}", mats.len(), w.shape()),
                    ));
                }
                let first = val(&mats[0]);
                let mut out = Tensor::zeros(first.rows(), first.cols());
                for (m, &wk) in mats.iter().zip(w.data()) {
                    let m = val(m);
                    same_shape("weighted_sum", first, m)?;
                    for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
                        *o += wk * v;
                    }
                }
                out
            }
            Op::Custom(ins, op) => {
                let inputs: Vec<&Tensor> = ins.iter().map(val).collect();
                op.forward(&inputs)?
            }
        };
        if !out.is_finite() {
            return Err(Error::Numeric { op: op.name() });
        }
        Ok(out)
    }

    /// Reverse-mode gradients of the scalar `root` with respect to every
    /// trainable leaf that influences it.
    pub fn gradients(&self, root: Var) -> Result<Gradients> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "gradients need a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::default();

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                if node.trainable {
                    out.by_leaf.insert(Var(i), g);
                }
                continue;
            }
            for (input, ig) in self.backward(node, &g)? {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let y = &node.value;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => vec![
                (*a, g.matmul(&val(b).transpose())?),
                (*b, val(a).transpose().matmul(g)?),
            ],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(val(b), |gv, bv| gv * bv)),
                (*b, g.zip_map(val(a), |gv, av| gv * av)),
            ],
            Op::AddRow(x, r) => vec![(*x, g.clone()), (*r, g.column_sums())],
            Op::MulRow(x, r) => {
                let (xv, rv) = (val(x), val(r));
                let mut gx = g.clone();
                let mut gr = vec![0.0; rv.cols()];
                for i in 0..g.rows() {
                    for (j, gxv) in gx.row_mut(i).iter_mut().enumerate() {
                        gr[j] += *gxv * xv.get(i, j);
                        *gxv *= rv.data()[j];
                    }
                }
                vec![(*x, gx), (*r, Tensor::row_vector(gr))]
            }
            Op::Relu(x) => vec![(*x, g.zip_map(val(x), |gv, xv| if xv > 0.0 { gv } else { 0.0 }))],
            Op::Scale(x, c) => vec![(*x, g.map(|v| v * c))],
            Op::Exp(x) => vec![(*x, g.zip_map(y, |gv, yv| gv * yv))],
            Op::Ln(x) => vec![(*x, g.zip_map(val(x), |gv, xv| gv / xv))],
            Op::Sum(x) => {
                let xv = val(x);
                vec![(*x, Tensor::filled(xv.rows(), xv.cols(), g.data()[0]))]
            }
            Op::Mean(x) => {
                let xv = val(x);
                let s = g.data()[0] / xv.len() as f64;
                vec![(*x, Tensor::filled(xv.rows(), xv.cols(), s))]
            }
            Op::RowNorm(x) => {
                let xv = val(x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for i in 0..xv.rows() {
                    let n = y.data()[i];
                    if n == 0.0 {
                        continue;
                    }
                    let scale = g.data()[i] / n;
                    for (o, v) in gx.row_mut(i).iter_mut().zip(xv.row(i)) {
                        *o = scale * v;
                    }
                }
                vec![(*x, gx)]
            }
            Op::CosineRows(a, b) => {
                let (av, bv) = (val(a), val(b));
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                for i in 0..av.rows() {
                    let (ra, rb) = (av.row(i), bv.row(i));
                    let (la, lb) = (norm(ra), norm(rb));
                    let (na, nb) = (la + COSINE_EPS, lb + COSINE_EPS);
                    let d = dot(ra, rb);
                    let gi = g.data()[i];
                    // d/da [d / (na nb)] = b/(na nb) - d a / (na^2 nb |a|)
                    let ka = if la > 0.0 { d / (na * na * nb * la) } else { 0.0 };
                    let kb = if lb > 0.0 { d / (na * nb * nb * lb) } else { 0.0 };
                    let inv = 1.0 / (na * nb);
                    for j in 0..ra.len() {
                        ga.row_mut(i)[j] = gi * (rb[j] * inv - ka * ra[j]);
                        gb.row_mut(i)[j] = gi * (ra[j] * inv - kb * rb[j]);
                    }
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::GatherRows(x, idx) => {
                let xv = val(x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                vec![(*x, gx)]
            }
            Op::SegmentSum(x, groups, _) => {
                let xv = val(x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for (k, &grp) in groups.iter().enumerate() {
                    gx.row_mut(k).copy_from_slice(g.row(grp));
                }
                vec![(*x, gx)]
            }
            Op::NeighborSum(x, adj) => {
                let xv = val(x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for i in 0..xv.rows() {
                    for &j in adj.neighbors(i) {
                        for (o, v) in gx.row_mut(j).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::WeightedSum(mats, w) => {
                let wv = val(w);
                let mut out = Vec::with_capacity(mats.len() + 1);
                let mut gw = Vec::with_capacity(mats.len());
                for (m, &wk) in mats.iter().zip(wv.data()) {
                    gw.push(dot(g.data(), val(m).data()));
                    out.push((*m, g.map(|v| v * wk)));
                }
                out.push((*w, Tensor::row_vector(gw)));
                out
            }
            Op::Custom(ins, op) => {
                let inputs: Vec<&Tensor> = ins.iter().map(val).collect();
                let gs = op.backward(&inputs, y, g)?;
                if gs.len() != ins.len() {
                    return Err(Error::Contract(format!(
                        "{} returned {} gradients for {} inputs",
                        op.name(),
                        gs.len(),
                        ins.len()
                    )));
                }
                for (gi, input) in gs.iter().zip(&inputs) {
                    if gi.shape() != input.shape() {
                        return Err(Error::shape("custom backward", op.name().to_string()));
                    }
                }
                ins.iter().copied().zip(gs).collect()
            }
        })
    }
}
