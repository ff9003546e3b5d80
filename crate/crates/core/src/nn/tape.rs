//! Reverse-mode differentiation over 2-D tensors.
//!
//! A [`Tape`] records every operation as a node holding its forward value
//! and the inputs needed for the backward pass. [`Tape::backward`] walks
//! the nodes in exact reverse recording order, accumulating gradients
//! additively, and returns the gradients of every parameter that took part
//! in the computation.
//!
//! Parameter values are borrowed from a [`ParamStore`] for the lifetime of
//! the tape, so binding a large embedding table costs nothing.

use std::borrow::Cow;
use std::collections::HashMap;

use super::params::{Gradients, ParamId, ParamStore};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBroadcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, T),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    SliceCols(Var, usize),
    Row(Var, usize),
    Transpose(Var),
    SumAll(Var),
    PickSum(Var, Vec<usize>),
    CrossEntropy(Var, usize),
}

#[derive(Debug)]
struct Node<'a, T: Clone> {
    rows: usize,
    cols: usize,
    value: Cow<'a, [T]>,
    op: Op<T>,
}

pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
    bound: HashMap<ParamId, Var>,
    store: Option<&'a ParamStore<T>>,
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            bound: HashMap::new(),
            store: None,
        }
    }

    /// A tape whose [`Tape::param`] calls read from `store`.
    pub fn with_params(store: &'a ParamStore<T>) -> Self {
        Tape {
            nodes: Vec::with_capacity(256),
            bound: HashMap::new(),
            store: Some(store),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'a, [T]>, op: Op<T>) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value produced by {op:?}"
        );
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// Constant input owned by the tape.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::shape(
                "constant",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(self.push(rows, cols, Cow::Owned(data), Op::Leaf))
    }

    /// Constant input borrowed for the tape's lifetime.
    pub fn borrowed(&mut self, rows: usize, cols: usize, data: &'a [T]) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::shape(
                "borrowed",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(self.push(rows, cols, Cow::Borrowed(data), Op::Leaf))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, Cow::Owned(vec![T::zero(); rows * cols]), Op::Leaf)
    }

    /// Binds a parameter; repeated calls return the same node so that all
    /// uses share one gradient buffer.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let store = self.store.expect("tape was created without a parameter store");
        let t = store.tensor(id);
        let (r, c) = t.matrix_dims();
        let v = self.push(r, c, Cow::Borrowed(t.data()), Op::Param(id));
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("lhs {m}x{k} vs rhs {k2}x{n}"),
            ));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &x) in av[i * k..(i + 1) * k].iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &w) in orow.iter_mut().zip(brow) {
                    *o += x * w;
                }
            }
        }
        Ok(self.push(m, n, Cow::Owned(out), Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let da = self.dims(a);
        let db = self.dims(b);
        if da != db {
            return Err(Error::shape(
                op,
                format!("{}x{} vs {}x{}", da.0, da.1, db.0, db.1),
            ));
        }
        Ok(da)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    /// Elementwise sum; a `1 x c` right operand is broadcast over the rows
    /// of an `r x c` left operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims(a);
        let (rb, cb) = self.dims(b);
        if rb == 1 && ra > 1 && ca == cb {
            let bv = self.value(b);
            let out: Vec<T> = self
                .value(a)
                .chunks(ca)
                .flat_map(|row| row.iter().zip(bv).map(|(&x, &y)| x + y))
                .collect();
            return Ok(self.push(ra, ca, Cow::Owned(out), Op::AddRowBroadcast(a, b)));
        }
        let (r, c) = self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(r, c, Cow::Owned(out), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(r, c, Cow::Owned(out), Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(r, c, Cow::Owned(out), Op::Mul(a, b)))
    }

    /// Multiplies every element of `a` by the `1 x 1` value `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.dims(s) != (1, 1) {
            let (r, c) = self.dims(s);
            return Err(Error::shape("mul_scalar", format!("scalar operand is {r}x{c}")));
        }
        let (r, c) = self.dims(a);
        let sv = self.scalar(s);
        let out = self.value(a).iter().map(|&x| x * sv).collect();
        Ok(self.push(r, c, Cow::Owned(out), Op::MulScalar(a, s)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|&x| x * factor).collect();
        self.push(r, c, Cow::Owned(out), Op::Scale(a, factor))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|&x| T::one() - x).collect();
        self.push(r, c, Cow::Owned(out), Op::OneMinus(a))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, Cow::Owned(out), op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, T::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, T::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, T::ln, Op::Log(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push(r, c, Cow::Owned(out), Op::SoftmaxRows(a))
    }

    /// Concatenates along columns; all parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.dims(p).0,
            None => return Err(Error::shape("concat", "no inputs")),
        };
        if let Some(&bad) = parts.iter().find(|&&p| self.dims(p).0 != rows) {
            return Err(Error::shape(
                "concat",
                format!("row counts differ: {rows} vs {}", self.dims(bad).0),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let pc = self.dims(p).1;
                out.extend_from_slice(&self.value(p)[r * pc..(r + 1) * pc]);
            }
        }
        Ok(self.push(rows, cols, Cow::Owned(out), Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks along rows; all parts must have the same column count.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.dims(p).1,
            None => return Err(Error::shape("stack_rows", "no inputs")),
        };
        if let Some(&bad) = parts.iter().find(|&&p| self.dims(p).1 != cols) {
            return Err(Error::shape(
                "stack_rows",
                format!("column counts differ: {cols} vs {}", self.dims(bad).1),
            ));
        }
        let rows: usize = parts.iter().map(|&p| self.dims(p).0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(rows, cols, Cow::Owned(out), Op::StackRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of a {r}x{c} input", start + len),
            ));
        }
        let v = self.value(a);
        let out: Vec<T> = (0..r)
            .flat_map(|i| v[i * c + start..i * c + start + len].iter().copied())
            .collect();
        Ok(self.push(r, len, Cow::Owned(out), Op::SliceCols(a, start)))
    }

    /// Row `i` of a matrix as a `1 x cols` value (embedding lookup).
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if i >= r {
            return Err(Error::shape("row", format!("row {i} of a {r}x{c} input")));
        }
        let out = self.value(a)[i * c..(i + 1) * c].to_vec();
        Ok(self.push(1, c, Cow::Owned(out), Op::Row(a, i)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let v = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        self.push(c, r, Cow::Owned(out), Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        self.push(1, 1, Cow::Owned(vec![s]), Op::SumAll(a))
    }

    /// Sum of the flat elements at `indices` (duplicates count twice).
    pub fn pick_sum(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.len()) {
            return Err(Error::shape(
                "pick_sum",
                format!("index {bad} out of {} elements", v.len()),
            ));
        }
        let s = indices.iter().map(|&i| v[i]).sum();
        Ok(self.push(1, 1, Cow::Owned(vec![s]), Op::PickSum(a, indices.to_vec())))
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let (r, c) = self.dims(logits);
        if r != 1 || target >= c {
            return Err(Error::shape(
                "cross_entropy",
                format!("target {target} for {r}x{c} logits"),
            ));
        }
        let v = self.value(logits);
        let max = v.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + v.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        let loss = lse - v[target];
        Ok(self.push(1, 1, Cow::Owned(vec![loss]), Op::CrossEntropy(logits, target)))
    }

    /// Mean of `1 x 1` values.
    pub fn mean(&mut self, scalars: &[Var]) -> Result<Var> {
        let stacked = self.stack_rows(scalars)?;
        let total = self.sum(stacked);
        Ok(self.scale(total, T::one() / T::from_f64(scalars.len() as f64)))
    }

    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(x, weight)?;
        self.add(y, bias)
    }

    /// Propagates `d output / d node` for a `1 x 1` output back through the
    /// tape and collects parameter gradients.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.dims(output) != (1, 1) {
            let (r, c) = self.dims(output);
            return Err(Error::shape("backward", format!("output must be 1x1, got {r}x{c}")));
        }
        let num_params = self.store.map_or(0, |s| s.len());
        let mut params = Gradients::new(num_params);
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[output.0] = Some(vec![T::one()]);

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.accumulate_slice(*id, &dy),
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a);
                    let n = node.cols;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = grad_buf(&mut grads, *a, m * k);
                    for i in 0..m {
                        let dyrow = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += dot(dyrow, brow);
                        }
                    }
                    let gb = grad_buf(&mut grads, *b, k * n);
                    for i in 0..m {
                        let dyrow = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == T::zero() {
                                continue;
                            }
                            for (g, &d) in gb[p * n..(p + 1) * n].iter_mut().zip(dyrow) {
                                *g += x * d;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(grad_buf(&mut grads, *a, dy.len()), &dy);
                    add_into(grad_buf(&mut grads, *b, dy.len()), &dy);
                }
                Op::AddRowBroadcast(a, b) => {
                    add_into(grad_buf(&mut grads, *a, dy.len()), &dy);
                    let c = node.cols;
                    let gb = grad_buf(&mut grads, *b, c);
                    for row in dy.chunks(c) {
                        add_into(gb, row);
                    }
                }
                Op::Sub(a, b) => {
                    add_into(grad_buf(&mut grads, *a, dy.len()), &dy);
                    let gb = grad_buf(&mut grads, *b, dy.len());
                    gb.iter_mut().zip(&dy).for_each(|(g, &d)| *g -= d);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    for ((g, &d), &y) in ga.iter_mut().zip(&dy).zip(bv) {
                        *g += d * y;
                    }
                    let gb = grad_buf(&mut grads, *b, dy.len());
                    for ((g, &d), &x) in gb.iter_mut().zip(&dy).zip(av) {
                        *g += d * x;
                    }
                }
                Op::MulScalar(a, s) => {
                    let sv = self.scalar(*s);
                    let av = self.value(*a);
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    ga.iter_mut().zip(&dy).for_each(|(g, &d)| *g += d * sv);
                    let ds = dot(&dy, av);
                    grad_buf(&mut grads, *s, 1)[0] += ds;
                }
                Op::Scale(a, f) => {
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    ga.iter_mut().zip(&dy).for_each(|(g, &d)| *g += d * *f);
                }
                Op::OneMinus(a) => {
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    ga.iter_mut().zip(&dy).for_each(|(g, &d)| *g -= d);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    for ((g, &d), &s) in ga.iter_mut().zip(&dy).zip(y.iter()) {
                        *g += d * s * (T::one() - s);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    for ((g, &d), &t) in ga.iter_mut().zip(&dy).zip(y.iter()) {
                        *g += d * (T::one() - t * t);
                    }
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    for ((g, &d), &e) in ga.iter_mut().zip(&dy).zip(y.iter()) {
                        *g += d * e;
                    }
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    for ((g, &d), &xv) in ga.iter_mut().zip(&dy).zip(x) {
                        *g += d / xv;
                    }
                }
                Op::SoftmaxRows(a) => {
                    let c = node.cols;
                    let y = &node.value;
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    for ((grow, dyrow), yrow) in
                        ga.chunks_mut(c).zip(dy.chunks(c)).zip(y.chunks(c))
                    {
                        let inner = dot(dyrow, yrow);
                        for ((g, &d), &s) in grow.iter_mut().zip(dyrow).zip(yrow) {
                            *g += s * (d - inner);
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = node.rows;
                    let total = node.cols;
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.dims(p).1;
                        let gp = grad_buf(&mut grads, p, rows * pc);
                        for r in 0..rows {
                            add_into(
                                &mut gp[r * pc..(r + 1) * pc],
                                &dy[r * total + offset..r * total + offset + pc],
                            );
                        }
                        offset += pc;
                    }
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        add_into(grad_buf(&mut grads, p, n), &dy[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.dims(*a);
                    let len = node.cols;
                    let ga = grad_buf(&mut grads, *a, r * c);
                    for i in 0..r {
                        add_into(
                            &mut ga[i * c + start..i * c + start + len],
                            &dy[i * len..(i + 1) * len],
                        );
                    }
                }
                Op::Row(a, i) => {
                    let (r, c) = self.dims(*a);
                    let ga = grad_buf(&mut grads, *a, r * c);
                    add_into(&mut ga[i * c..(i + 1) * c], &dy);
                }
                Op::Transpose(a) => {
                    let (r, c) = self.dims(*a);
                    let ga = grad_buf(&mut grads, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += dy[j * r + i];
                        }
                    }
                }
                Op::SumAll(a) => {
                    let n = self.value(*a).len();
                    grad_buf(&mut grads, *a, n).iter_mut().for_each(|g| *g += dy[0]);
                }
                Op::PickSum(a, indices) => {
                    let n = self.value(*a).len();
                    let ga = grad_buf(&mut grads, *a, n);
                    for &i in indices {
                        ga[i] += dy[0];
                    }
                }
                Op::CrossEntropy(logits, target) => {
                    let mut p = self.value(*logits).to_vec();
                    softmax_in_place(&mut p);
                    p[*target] -= T::one();
                    let ga = grad_buf(&mut grads, *logits, p.len());
                    ga.iter_mut().zip(&p).for_each(|(g, &q)| *g += dy[0] * q);
                }
            }
        }
        Ok(params)
    }
}

fn grad_buf<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Component;
    use crate::nn::tensor::Tensor;

    fn store_with(values: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (name, shape, data) in values {
            s.add(*name, Component::Decoder, Tensor::new(shape.clone(), data.clone()).unwrap())
                .unwrap();
        }
        s
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::<f64>::new();
        let x = t.zeros(1, 3);
        let y = t.softmax(x);
        for &p in t.value(y) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::<f64>::new();
        let eye = t.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = t.constant(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = t.matmul(eye, a).unwrap();
        assert_eq!(t.value(y), t.value(a));
    }

    #[test]
    fn confident_cross_entropy_is_zero() {
        let mut t = Tape::<f64>::new();
        let logits = t.constant(1, 3, vec![-1e3, 0.0, -1e3]).unwrap();
        let l = t.cross_entropy(logits, 1).unwrap();
        assert!(t.scalar(l).abs() < 1e-9);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut t = Tape::<f64>::new();
        let a = t.zeros(2, 3);
        let b = t.zeros(2, 3);
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("2x3"), "{err}");
        let c = t.zeros(1, 2);
        assert!(t.mul(a, c).unwrap_err().to_string().contains("mul"));
    }

    #[test]
    fn fan_out_accumulates() {
        let store = store_with(&[("x", vec![1], vec![3.0])]);
        let mut t = Tape::with_params(&store);
        let x = t.param(ParamId(0));
        let y = t.add(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap(), &[2.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::<f64>::new();
        let a = t.zeros(1, 2);
        assert!(t.backward(a).is_err());
    }

    #[test]
    fn broadcast_add_gradient_sums_rows() {
        let store = store_with(&[
            ("m", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]),
            ("b", vec![2], vec![0.5, -0.5]),
        ]);
        let mut t = Tape::with_params(&store);
        let m = t.param(ParamId(0));
        let b = t.param(ParamId(1));
        let y = t.add(m, b).unwrap();
        assert_eq!(t.value(y), &[1.5, 1.5, 3.5, 3.5]);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(ParamId(1)).unwrap(), &[2.0, 2.0]);
    }
}
