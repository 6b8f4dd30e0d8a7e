//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Every op appends one record holding its inputs and output; records are
//! created in topological order, so the backward pass is a single reverse
//! sweep.

use rand::Rng;

use super::{Gradients, NumericsError, ParamId, ParamStore, Tensor};
use super::tensor::gemm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    Transpose(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Ln(Var),
    Powf(Var, f64),
    ClampMin(Var, f64),
    MeanRows(Var),
    SumAll(Var),
    Dropout(Var, Vec<f64>),
}

struct Record {
    value: Value,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    records: Vec<Record>,
    param_vars: Vec<Option<Var>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            records: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.records[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.records.push(Record {
            value: Value::Owned(value),
            op,
        });
        Var(self.records.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Trainable leaf. Repeated calls return the same variable.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.records.push(Record {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.records.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Elementwise sum; `b` may also be a single row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = if ta.shape() == tb.shape() {
            let mut o = ta.clone();
            o.add_assign(tb);
            o
        } else if tb.rows() == 1 && tb.cols() == ta.cols() {
            let mut o = ta.clone();
            for r in 0..o.rows() {
                for (x, y) in o.row_slice_mut(r).iter_mut().zip(tb.data()) {
                    *x += y;
                }
            }
            o
        } else {
            return Err(mismatch("add", ta, tb));
        };
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = self.value(parts[0]);
        let rows = first.rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", first, t));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut at = 0;
            for &p in parts {
                let src = self.value(p).row_slice(r);
                out.row_slice_mut(r)[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = self.value(parts[0]);
        let cols = first.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", first, t));
            }
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if start + len > t.cols() {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: t.cols(),
            });
        }
        let mut out = Tensor::zeros(t.rows(), len);
        for r in 0..t.rows() {
            out.row_slice_mut(r)
                .copy_from_slice(&t.row_slice(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Gathers rows by index; an embedding lookup when `a` is a table.
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let mut out = Tensor::zeros(idx.len(), t.cols());
        for (i, &r) in idx.iter().enumerate() {
            if r >= t.rows() {
                return Err(NumericsError::IndexOutOfRange {
                    op: "select_rows",
                    index: r,
                    bound: t.rows(),
                });
            }
            out.row_slice_mut(i).copy_from_slice(t.row_slice(r));
        }
        Ok(self.push(out, Op::SelectRows(a, idx.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Ln(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let out = self.value(a).map(|x| x.powf(p));
        self.push(out, Op::Powf(a, p))
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        let out = self.value(a).map(|x| x.max(lo));
        self.push(out, Op::ClampMin(a, lo))
    }

    /// Mean over rows, giving a single row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols());
        let inv = 1.0 / t.rows().max(1) as f64;
        for r in 0..t.rows() {
            for (o, x) in out.data_mut().iter_mut().zip(t.row_slice(r)) {
                *o += x * inv;
            }
        }
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::SumAll(a))
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut impl Rng) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::BadDropoutRate(rate));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(a);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(t.rows(), t.cols(), data)?;
        Ok(self.push(out, Op::Dropout(a, mask)))
    }

    /// Gradients of a scalar `loss` with respect to every parameter; those not
    /// reachable from `loss` get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let lt = self.value(loss);
        if lt.shape() != [1, 1] {
            return Err(NumericsError::NonScalarLoss { shape: lt.shape() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(self.params);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let y = self.value(Var(i));
            match &self.records[i].op {
                Op::Leaf => {}
                Op::Param(id) => out.get_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, ta);
                    gemm(&g, false, tb, true, ga, true);
                    let gb = slot(&mut grads, *b, tb);
                    gemm(ta, true, &g, false, gb, true);
                }
                Op::Add(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    slot(&mut grads, *a, ta).add_assign(&g);
                    let gb = slot(&mut grads, *b, tb);
                    if tb.shape() == g.shape() {
                        gb.add_assign(&g);
                    } else {
                        for r in 0..g.rows() {
                            for (o, x) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                                *o += x;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, ta);
                    for ((o, gi), bi) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *o += gi * bi;
                    }
                    let gb = slot(&mut grads, *b, tb);
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *o += gi * ai;
                    }
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for (o, gi) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += s * gi;
                    }
                }
                Op::AddScalar(a) => slot(&mut grads, *a, self.value(*a)).add_assign(&g),
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let tp = self.value(*p);
                        let w = tp.cols();
                        let gp = slot(&mut grads, *p, tp);
                        for r in 0..g.rows() {
                            for (o, x) in gp.row_slice_mut(r).iter_mut().zip(&g.row_slice(r)[at..at + w]) {
                                *o += x;
                            }
                        }
                        at += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let tp = self.value(*p);
                        let n = tp.len();
                        let gp = slot(&mut grads, *p, tp);
                        for (o, x) in gp.data_mut().iter_mut().zip(&g.data()[at..at + n]) {
                            *o += x;
                        }
                        at += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for r in 0..g.rows() {
                        for (o, x) in ga.row_slice_mut(r)[*start..].iter_mut().zip(g.row_slice(r)) {
                            *o += x;
                        }
                    }
                }
                Op::SelectRows(a, idx) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for (i, &r) in idx.iter().enumerate() {
                        for (o, x) in ga.row_slice_mut(r).iter_mut().zip(g.row_slice(i)) {
                            *o += x;
                        }
                    }
                }
                Op::Transpose(a) => {
                    slot(&mut grads, *a, self.value(*a)).add_assign(&g.transpose());
                }
                Op::Relu(a) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for ((o, gi), yi) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        if *yi > 0.0 {
                            *o += gi;
                        }
                    }
                }
                Op::Tanh(a) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for ((o, gi), yi) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for ((o, gi), yi) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
                Op::SoftmaxRows(a) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for r in 0..g.rows() {
                        let (gr, yr) = (g.row_slice(r), y.row_slice(r));
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for ((o, gi), yi) in ga.row_slice_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o += yi * (gi - dot);
                        }
                    }
                }
                Op::Ln(a) => {
                    let ta = self.value(*a);
                    let ga = slot(&mut grads, *a, ta);
                    for ((o, gi), xi) in ga.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *o += gi / xi;
                    }
                }
                Op::Powf(a, p) => {
                    let ta = self.value(*a);
                    let ga = slot(&mut grads, *a, ta);
                    if *p != 0.0 {
                        for ((o, gi), xi) in ga.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                            *o += gi * p * xi.powf(p - 1.0);
                        }
                    }
                }
                Op::ClampMin(a, lo) => {
                    let ta = self.value(*a);
                    let ga = slot(&mut grads, *a, ta);
                    for ((o, gi), xi) in ga.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        if *xi >= *lo {
                            *o += gi;
                        }
                    }
                }
                Op::MeanRows(a) => {
                    let ta = self.value(*a);
                    let inv = 1.0 / ta.rows().max(1) as f64;
                    let ga = slot(&mut grads, *a, ta);
                    for r in 0..ga.rows() {
                        for (o, x) in ga.row_slice_mut(r).iter_mut().zip(g.data()) {
                            *o += x * inv;
                        }
                    }
                }
                Op::SumAll(a) => {
                    let gv = g.item();
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for o in ga.data_mut() {
                        *o += gv;
                    }
                }
                Op::Dropout(a, mask) => {
                    let ga = slot(&mut grads, *a, self.value(*a));
                    for ((o, gi), m) in ga.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *o += gi * m;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, like: &Tensor) -> &'g mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - m).exp();
            s += *x;
        }
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    out
}
