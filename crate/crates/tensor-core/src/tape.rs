//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`ParamStore`] owns named parameters. A [`Tape`] borrows the store for one
//! forward pass, records every operation, and [`Tape::backward`] walks the
//! records in reverse. Frozen parameters and constants never receive gradient
//! buffers, but gradients still flow through them to their inputs.

use std::collections::BTreeMap;

use crate::tensor::Tensor;
use crate::TensorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
    /// Gradients are kept per touched row (embedding tables).
    pub row_sparse: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, param: Param) -> Result<ParamId, TensorError> {
        if self.index.contains_key(&param.name) {
            return Err(TensorError::DuplicateParameter(param.name));
        }
        let id = ParamId(self.params.len());
        self.index.insert(param.name.clone(), id);
        self.params.push(param);
        Ok(id)
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        trainable: bool,
    ) -> Result<ParamId, TensorError> {
        self.insert(Param {
            name: name.into(),
            value,
            trainable,
            row_sparse: false,
        })
    }

    pub fn add_row_sparse(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        trainable: bool,
    ) -> Result<ParamId, TensorError> {
        self.insert(Param {
            name: name.into(),
            value,
            trainable,
            row_sparse: true,
        })
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Scalar count over parameters accepted by `filter`.
    pub fn count(&self, filter: impl Fn(&Param) -> bool) -> usize {
        self.params
            .iter()
            .filter(|p| filter(p))
            .map(|p| p.value.len())
            .sum()
    }
}

/// Accumulated parameter gradients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrads {
    pub dense: BTreeMap<ParamId, Tensor>,
    pub rows: BTreeMap<ParamId, BTreeMap<usize, Vec<f64>>>,
}

impl ParamGrads {
    pub fn is_empty(&self) -> bool {
        self.dense.is_empty() && self.rows.is_empty()
    }

    fn add_dense(&mut self, id: ParamId, g: &Tensor) {
        match self.dense.get_mut(&id) {
            Some(t) => t.add_assign(g),
            None => {
                self.dense.insert(id, g.clone());
            }
        }
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: &[f64], scale: f64) {
        let entry = self
            .rows
            .entry(id)
            .or_default()
            .entry(row)
            .or_insert_with(|| vec![0.0; g.len()]);
        for (e, x) in entry.iter_mut().zip(g) {
            *e += scale * x;
        }
    }

    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (id, g) in &other.dense {
            self.add_dense(*id, g);
        }
        for (id, rows) in &other.rows {
            for (r, g) in rows {
                self.add_row(*id, *r, g, 1.0);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.dense.values_mut() {
            g.data.iter_mut().for_each(|x| *x *= s);
        }
        for rows in self.rows.values_mut() {
            rows.values_mut().flatten().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dense.values().all(Tensor::is_finite)
            && self
                .rows
                .values()
                .flat_map(|r| r.values())
                .flatten()
                .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax(Var),
    ColumnNorms(Var),
    Recip(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    MeanRows(Var),
    SumAll(Var),
    LayerNorm(Var, Vec<f64>),
    Embed(ParamId, Vec<usize>),
    GatherMean(ParamId, Vec<Vec<usize>>),
    CrossEntropy(Var, usize, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    vars: Vec<Option<Tensor>>,
    pub params: ParamGrads,
}

impl Gradients {
    /// Gradient with respect to a recorded value, if it needed one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.vars[v.0].as_ref()
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// An input whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let p = self.store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).matmul(self.value(b))?;
        let g = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMul(a, b), g))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        let g = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMulNt(a, b), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).add(self.value(b))?;
        let g = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).sub(self.value(b))?;
        let g = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), g))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).hadamard(self.value(b))?;
        let g = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Mul(a, b), g))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).divide(self.value(b))?;
        let g = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Div(a, b), g))
    }

    fn row_broadcast(
        &mut self,
        a: Var,
        r: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (ta, tr) = (self.value(a), self.value(r));
        if tr.rows != 1 || tr.cols != ta.cols {
            return Err(mismatch(op, ta, tr));
        }
        let mut out = ta.clone();
        for row in 0..out.rows {
            for (x, y) in out.row_slice_mut(row).iter_mut().zip(&tr.data) {
                *x = f(*x, *y);
            }
        }
        Ok(out)
    }

    /// Add a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var, TensorError> {
        let v = self.row_broadcast(a, r, "add_row", |x, y| x + y)?;
        let g = self.ng(a) || self.ng(r);
        Ok(self.push(v, Op::AddRow(a, r), g))
    }

    /// Scale column j of `a` by `r[j]`.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Result<Var, TensorError> {
        let v = self.row_broadcast(a, r, "mul_row", |x, y| x * y)?;
        let g = self.ng(a) || self.ng(r);
        Ok(self.push(v, Op::MulRow(a, r), g))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        let g = self.ng(a);
        self.push(v, Op::Scale(a, s), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let g = self.ng(a);
        self.push(v, Op::Relu(a), g)
    }

    pub fn softmax_rows(&mut self, a: Var, causal: bool) -> Result<Var, TensorError> {
        let v = self.value(a).softmax_rows(causal)?;
        let g = self.ng(a);
        Ok(self.push(v, Op::Softmax(a), g))
    }

    pub fn column_norms(&mut self, a: Var) -> Var {
        let v = self.value(a).column_norms();
        let g = self.ng(a);
        self.push(v, Op::ColumnNorms(a), g)
    }

    /// Elementwise reciprocal.
    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / x);
        let g = self.ng(a);
        self.push(v, Op::Recip(a), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = parts.first().map_or(0, |p| self.value(*p).rows);
        let mut cols = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rows != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), t));
            }
            cols += t.cols;
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let t = self.value(*p);
            for r in 0..rows {
                out.row_slice_mut(r)[off..off + t.cols].copy_from_slice(t.row_slice(r));
            }
            off += t.cols;
        }
        let g = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), g))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        if start + width > t.cols {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                left: t.shape(),
                right: (start, width),
            });
        }
        let v = t.columns(start, width);
        let g = self.ng(a);
        Ok(self.push(v, Op::SliceCols(a, start), g))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        if start + count > t.rows {
            return Err(TensorError::ShapeMismatch {
                op: "slice_rows",
                left: t.shape(),
                right: (start, count),
            });
        }
        let v = Tensor {
            rows: count,
            cols: t.cols,
            data: t.data[start * t.cols..(start + count) * t.cols].to_vec(),
        };
        let g = self.ng(a);
        Ok(self.push(v, Op::SliceRows(a, start), g))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let g = self.ng(a);
        self.push(v, Op::Transpose(a), g)
    }

    /// Mean over rows, as a `1×c` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        if t.rows == 0 {
            return Err(TensorError::EmptyInput("mean_rows"));
        }
        let v = t.column_sums().scale(1.0 / t.rows as f64);
        let g = self.ng(a);
        Ok(self.push(v, Op::MeanRows(a), g))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data.iter().sum());
        let g = self.ng(a);
        self.push(v, Op::SumAll(a), g)
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        let mut inv = Vec::with_capacity(t.rows);
        for r in 0..t.rows {
            let row = out.row_slice_mut(r);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * s);
            inv.push(s);
        }
        let g = self.ng(a);
        self.push(out, Op::LayerNorm(a, inv), g)
    }

    /// Rows `ids` of a parameter table (token embeddings).
    pub fn embed(&mut self, table: ParamId, ids: &[usize]) -> Result<Var, TensorError> {
        let p = self.store.get(table);
        let t = &p.value;
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            if id >= t.rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "embed",
                    index: id,
                    len: t.rows,
                });
            }
            out.row_slice_mut(i).copy_from_slice(t.row_slice(id));
        }
        Ok(self.push(out, Op::Embed(table, ids.to_vec()), p.trainable))
    }

    /// One output row per group: the mean of the table rows it lists (zero for
    /// an empty group).
    pub fn gather_mean(
        &mut self,
        table: ParamId,
        groups: &[Vec<usize>],
    ) -> Result<Var, TensorError> {
        let p = self.store.get(table);
        let t = &p.value;
        let mut out = Tensor::zeros(groups.len(), t.cols);
        for (i, group) in groups.iter().enumerate() {
            let o = out.row_slice_mut(i);
            for &id in group {
                if id >= t.rows {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_mean",
                        index: id,
                        len: t.rows,
                    });
                }
                for (x, y) in o.iter_mut().zip(t.row_slice(id)) {
                    *x += y / group.len() as f64;
                }
            }
        }
        Ok(self.push(out, Op::GatherMean(table, groups.to_vec()), p.trainable))
    }

    /// `logsumexp(logits) − logits[target]` for a `1×c` logit row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let t = self.value(logits);
        if t.rows != 1 || target >= t.cols {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                index: target,
                len: t.cols,
            });
        }
        let probs = t.softmax_rows(false)?;
        let max = t.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + t.data.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - t.data[target];
        let g = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy(logits, target, probs),
            g,
        ))
    }

    /// Back-propagate from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients, TensorError> {
        let shape = self.value(out).shape();
        if shape != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut params = ParamGrads::default();
        grads[out.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let send = |v: Var, t: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    if self.store.get(*id).row_sparse {
                        for r in 0..g.rows {
                            if g.row_slice(r).iter().any(|x| *x != 0.0) {
                                params.add_row(*id, r, g.row_slice(r), 1.0);
                            }
                        }
                    } else {
                        params.add_dense(*id, &g);
                    }
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        send(*a, g.matmul_nt(self.value(*b))?, &mut grads);
                    }
                    if self.ng(*b) {
                        send(*b, self.value(*a).matmul_tn(&g)?, &mut grads);
                    }
                }
                Op::MatMulNt(a, b) => {
                    if self.ng(*a) {
                        send(*a, g.matmul(self.value(*b))?, &mut grads);
                    }
                    if self.ng(*b) {
                        send(*b, g.matmul_tn(self.value(*a))?, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g.clone(), &mut grads);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g.scale(-1.0), &mut grads);
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        send(*a, g.hadamard(self.value(*b))?, &mut grads);
                    }
                    if self.ng(*b) {
                        send(*b, g.hadamard(self.value(*a))?, &mut grads);
                    }
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    if self.ng(*a) {
                        send(*a, g.divide(bv)?, &mut grads);
                    }
                    if self.ng(*b) {
                        send(
                            *b,
                            g.hadamard(&node.value)?.divide(bv)?.scale(-1.0),
                            &mut grads,
                        );
                    }
                }
                Op::AddRow(a, r) => {
                    send(*a, g.clone(), &mut grads);
                    if self.ng(*r) {
                        send(*r, g.column_sums(), &mut grads);
                    }
                }
                Op::MulRow(a, r) => {
                    let rv = self.value(*r);
                    if self.ng(*a) {
                        let mut ga = g.clone();
                        for row in 0..ga.rows {
                            for (x, y) in ga.row_slice_mut(row).iter_mut().zip(&rv.data) {
                                *x *= y;
                            }
                        }
                        send(*a, ga, &mut grads);
                    }
                    if self.ng(*r) {
                        send(*r, g.hadamard(self.value(*a))?.column_sums(), &mut grads);
                    }
                }
                Op::Scale(a, s) => send(*a, g.scale(*s), &mut grads),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = Tensor {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&x.data)
                            .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                            .collect(),
                    };
                    send(*a, ga, &mut grads);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yv, gv)) in ga.row_slice_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    send(*a, ga, &mut grads);
                }
                Op::ColumnNorms(a) => {
                    let x = self.value(*a);
                    let n = &node.value;
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        for c in 0..x.cols {
                            if n.data[c] > 0.0 {
                                ga.data[r * x.cols + c] = g.data[c] * x.get(r, c) / n.data[c];
                            }
                        }
                    }
                    send(*a, ga, &mut grads);
                }
                Op::Recip(a) => {
                    let y = &node.value;
                    let ga = Tensor {
                        rows: g.rows,
                        cols: g.cols,
                        data: g
                            .data
                            .iter()
                            .zip(&y.data)
                            .map(|(g, y)| -g * y * y)
                            .collect(),
                    };
                    send(*a, ga, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols;
                        if self.ng(*p) {
                            send(*p, g.columns(off, w), &mut grads);
                        }
                        off += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    for r in 0..g.rows {
                        ga.row_slice_mut(r)[*start..*start + g.cols]
                            .copy_from_slice(g.row_slice(r));
                    }
                    send(*a, ga, &mut grads);
                }
                Op::SliceRows(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    ga.data[start * x.cols..(start + g.rows) * x.cols].copy_from_slice(&g.data);
                    send(*a, ga, &mut grads);
                }
                Op::Transpose(a) => send(*a, g.transpose(), &mut grads),
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    let s = 1.0 / x.rows as f64;
                    for r in 0..x.rows {
                        for (o, gv) in ga.row_slice_mut(r).iter_mut().zip(&g.data) {
                            *o = gv * s;
                        }
                    }
                    send(*a, ga, &mut grads);
                }
                Op::SumAll(a) => {
                    let x = self.value(*a);
                    send(*a, Tensor::filled(x.rows, x.cols, g.item()), &mut grads);
                }
                Op::LayerNorm(a, inv) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows, y.cols);
                    for (r, inv_r) in inv.iter().enumerate() {
                        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                        let n = yr.len() as f64;
                        let mg = gr.iter().sum::<f64>() / n;
                        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (o, (gv, yv)) in ga.row_slice_mut(r).iter_mut().zip(gr.iter().zip(yr)) {
                            *o = inv_r * (gv - mg - yv * mgy);
                        }
                    }
                    send(*a, ga, &mut grads);
                }
                Op::Embed(id, ids) => {
                    for (r, &tok) in ids.iter().enumerate() {
                        params.add_row(*id, tok, g.row_slice(r), 1.0);
                    }
                }
                Op::GatherMean(id, groups) => {
                    for (r, group) in groups.iter().enumerate() {
                        for &tok in group {
                            params.add_row(*id, tok, g.row_slice(r), 1.0 / group.len() as f64);
                        }
                    }
                }
                Op::CrossEntropy(a, target, probs) => {
                    let mut ga = probs.scale(g.item());
                    ga.data[*target] -= g.item();
                    send(*a, ga, &mut grads);
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        // keep only gradients of explicit inputs
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            vars: grads,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_parameters_get_no_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::identity(2), false).unwrap();
        let b = store.add("b", Tensor::row(vec![0.5, -0.5]), true).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::row(vec![1.0, 2.0]));
        let wv = tape.param(w);
        let bv = tape.param(b);
        let h = tape.matmul(x, wv).unwrap();
        let h = tape.add_row(h, bv).unwrap();
        let s = tape.sum_all(h);
        let g = tape.backward(s).unwrap();
        assert!(!g.params.dense.contains_key(&w));
        assert_eq!(g.params.dense[&b].data, vec![1.0, 1.0]);
        assert_eq!(g.wrt(x).unwrap().data, vec![1.0, 1.0]);
    }

    #[test]
    fn matmul_sum_gradient_is_ones_times_b_transposed() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a =
            tape.input(Tensor::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap());
        let bt = Tensor::from_vec(4, 2, (0..8).map(|i| 1.0 - i as f64 * 0.3).collect()).unwrap();
        let b = tape.constant(bt.clone());
        let p = tape.matmul(a, b).unwrap();
        let s = tape.sum_all(p);
        let g = tape.backward(s).unwrap();
        let want = Tensor::filled(3, 2, 1.0).matmul(&bt.transpose()).unwrap();
        assert_eq!(g.wrt(a).unwrap(), &want);
    }

    #[test]
    fn embedding_gradient_is_row_sparse() {
        let mut store = ParamStore::new();
        let e = store
            .add_row_sparse("emb", Tensor::filled(10, 3, 0.1), true)
            .unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.embed(e, &[4, 7, 4]).unwrap();
        let s = tape.sum_all(x);
        let g = tape.backward(s).unwrap();
        let rows = &g.params.rows[&e];
        assert_eq!(rows.keys().copied().collect::<Vec<_>>(), vec![4, 7]);
        assert_eq!(rows[&4], vec![2.0; 3]);
        assert!(matches!(
            tape.embed(e, &[10]),
            Err(TensorError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn duplicate_parameter_names_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(1, 1), true).unwrap();
        assert!(matches!(
            store.add("w", Tensor::zeros(1, 1), true),
            Err(TensorError::DuplicateParameter(_))
        ));
    }

    #[test]
    fn cross_entropy_values() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let l = tape.input(Tensor::row(vec![0.0, 0.0]));
        let ce = tape.cross_entropy(l, 1).unwrap();
        assert!((tape.value(ce).item() - 2f64.ln()).abs() < 1e-15);
        let g = tape.backward(ce).unwrap();
        assert_eq!(g.wrt(l).unwrap().data, vec![0.5, -0.5]);
    }
}
