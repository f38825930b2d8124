use std::collections::HashMap;

use super::kernels::{axpy, gemm_nn, gemm_nt, gemm_tn};
use super::{ParamId, ParamSet, Rng, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct LstmRecord {
    input: Var,
    wx: Var,
    wh: Var,
    bias: Var,
    c0: Option<Var>,
    mask: Option<Vec<f64>>,
    reverse: bool,
    hidden: usize,
    // post-activation gates (i, f, g, o) per timestep, T × 4H
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    // masked previous hidden state fed to the recurrence, T × H
    prev_hidden: Vec<f64>,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Pointwise(Var, Vec<f64>),
    Concat(Vec<Var>),
    ConcatCols(Vec<Var>),
    Slice(Var, usize),
    SliceRows(Var, usize),
    Row(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    StackRows(Vec<Var>),
    Sum(Var),
    GatherSum(Var, Vec<(usize, f64)>),
    SpanDiff(Var, Var, Vec<(usize, usize)>),
    Lstm(Box<LstmRecord>),
}

struct Node {
    op: Op,
    // None for parameter leaves, whose values live in the borrowed set.
    value: Option<Tensor>,
}

/// A define-by-run gradient tape over a borrowed parameter set.
///
/// Nodes are appended in creation order, which is a topological order, so the
/// backward pass simply walks the tape in reverse.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, Tensor)>,
}

impl Gradients {
    /// Gradient with respect to a leaf (input or parameter) node, if it was
    /// reached by the backward pass.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.iter().find(|(i, _)| *i == id.0).map(|(_, t)| t)
    }

    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.params.iter().map(|(i, t)| (*i, t))
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    let s = slot(grads, v, g.len());
    for (a, b) in s.iter_mut().zip(g) {
        *a += b;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (_, Some(t)) => t,
            (Op::Param(id), None) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant or input tensor. Gradients with respect to it are
    /// available from [`Gradients::wrt`].
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Var {
        self.constant(Tensor::vector(data))
    }

    /// The tape node for a parameter; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(format!("{}: {:?} vs {:?}", what, sa, sb)));
        }
        Ok(())
    }

    /// Matrix product `a[m×k] · b[k×n]`; a vector `b` yields a vector.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() == 0 || ta.cols() != tb.shape()[0] {
            return Err(Error::shape(format!(
                "matmul: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k) = (ta.rows(), ta.cols());
        let n = if tb.rank() == 2 { tb.cols() } else { 1 };
        let mut out = vec![0.0; m * n];
        gemm_nn(ta.data(), tb.data(), &mut out, m, k, n);
        let shape: Vec<usize> = if tb.rank() == 2 { vec![m, n] } else { vec![m] };
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `a · bᵀ` for `a[m×k]` (or a vector of length k) and `b[n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() == 0 || tb.rank() != 2 || ta.cols() != tb.cols() {
            return Err(Error::shape(format!(
                "matmul_nt: {:?} x {:?}ᵀ",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let mut out = vec![0.0; m * n];
        gemm_nt(ta.data(), tb.data(), &mut out, m, k, n);
        let shape: Vec<usize> = if ta.rank() == 2 { vec![m, n] } else { vec![n] };
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(Op::MatMulNt(a, b), value))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape(), data)?;
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a bias vector to every row of a matrix, or to a vector.
    pub fn add_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (tm, tb) = (self.value(m), self.value(bias));
        if tb.rank() != 1 || tm.rank() == 0 || tm.cols() != tb.len() {
            return Err(Error::shape(format!(
                "add_bias: {:?} + {:?}",
                tm.shape(),
                tb.shape()
            )));
        }
        let c = tb.len();
        let mut data = tm.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let value = Tensor::new(tm.shape(), data)?;
        Ok(self.push(Op::AddBias(m, bias), value))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), value)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.push(Op::AddScalar(a), value)
    }

    /// Rectified linear unit; the subgradient at exactly zero is zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    /// A user-defined pointwise function with its derivative.
    pub fn pointwise(&mut self, a: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Var {
        let input = self.value(a);
        let value = input.map(&f);
        let deriv = input.data().iter().map(|&x| df(x)).collect();
        self.push(Op::Pointwise(a, deriv), value)
    }

    /// Inverted dropout: in training mode each component is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; otherwise the
    /// input is returned unchanged.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout probability {} outside [0, 1)", p)));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let shape = self.shape(a).to_vec();
        let n: usize = shape.iter().product();
        let mask = (0..n).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
        let mask = self.constant(Tensor::new(&shape, mask)?);
        self.mul(a, mask)
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of nothing"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(Error::shape(format!("concat expects vectors, got {:?}", t.shape())));
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::vector(data);
        Ok(self.push(Op::Concat(parts.to_vec()), value))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols of nothing"));
        }
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(Error::shape(format!(
                    "concat_cols: {:?} does not have {} rows",
                    t.shape(),
                    rows
                )));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value))
    }

    /// `a[start..start+len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 || start + len > t.len() {
            return Err(Error::shape(format!(
                "slice {}..{} of {:?}",
                start,
                start + len,
                t.shape()
            )));
        }
        let value = Tensor::vector(t.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice(a, start), value))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, rows: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || start + rows > t.rows() || rows == 0 {
            return Err(Error::shape(format!(
                "slice_rows {}..{} of {:?}",
                start,
                start + rows,
                t.shape()
            )));
        }
        let c = t.cols();
        let value = Tensor::matrix(rows, c, t.data()[start * c..(start + rows) * c].to_vec())?;
        Ok(self.push(Op::SliceRows(a, start), value))
    }

    /// One row of a matrix as a vector. Embedding lookups are rows of a
    /// parameter matrix.
    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || index >= t.rows() {
            return Err(Error::shape(format!("row {} of {:?}", index, t.shape())));
        }
        let value = Tensor::vector(t.row(index).to_vec());
        Ok(self.push(Op::Row(a, index), value))
    }

    /// The matrix whose row `r` is row `indices[r]` of `a`; indices may
    /// repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || indices.is_empty() || indices.iter().any(|&i| i >= t.rows()) {
            return Err(Error::shape(format!("gather_rows {:?} of {:?}", indices, t.shape())));
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(indices.len(), c, data)?;
        Ok(self.push(Op::GatherRows(a, indices.to_vec()), value))
    }

    /// Reinterprets the row-major data of `a` under a new shape.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let value = Tensor::new(shape, t.data().to_vec())
            .map_err(|_| Error::shape(format!("cannot reshape {:?} to {:?}", t.shape(), shape)))?;
        Ok(self.push(Op::Reshape(a), value))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::shape("stack_rows of nothing"));
        }
        let cols = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.len() != cols {
                return Err(Error::shape(format!(
                    "stack_rows: {:?} is not a vector of length {}",
                    t.shape(),
                    cols
                )));
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(Op::StackRows(rows.to_vec()), value))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), value)
    }

    /// `Σ coef · a.flat[index]` as a scalar.
    pub fn gather_sum(&mut self, a: Var, entries: Vec<(usize, f64)>) -> Result<Var> {
        let t = self.value(a);
        let mut total = 0.0;
        for &(i, c) in &entries {
            let x = *t
                .data()
                .get(i)
                .ok_or_else(|| Error::shape(format!("gather index {} out of {:?}", i, t.shape())))?;
            total += c * x;
        }
        let value = Tensor::scalar(total);
        Ok(self.push(Op::GatherSum(a, entries), value))
    }

    /// Pick one element of a vector as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        self.gather_sum(a, vec![(index, 1.0)])
    }

    /// Span difference features: for fencepost matrices `f` and `b` (one
    /// row per fencepost) row `s` of the result is `[f_j - f_i, b_i - b_j]`
    /// for the `s`-th span `(i, j)`.
    pub fn span_differences(&mut self, f: Var, b: Var, spans: Vec<(usize, usize)>) -> Result<Var> {
        let (tf, tb) = (self.value(f), self.value(b));
        if tf.rank() != 2 || tf.shape() != tb.shape() {
            return Err(Error::shape(format!(
                "span_differences: {:?} vs {:?}",
                tf.shape(),
                tb.shape()
            )));
        }
        if spans.is_empty() {
            return Err(Error::usage("span_differences needs at least one span"));
        }
        let h = tf.cols();
        let mut data = Vec::with_capacity(spans.len() * 2 * h);
        for &(i, j) in &spans {
            if i >= j || j >= tf.rows() {
                return Err(Error::usage(format!("invalid span ({}, {})", i, j)));
            }
            data.extend(tf.row(j).iter().zip(tf.row(i)).map(|(x, y)| x - y));
            data.extend(tb.row(i).iter().zip(tb.row(j)).map(|(x, y)| x - y));
        }
        let value = Tensor::matrix(spans.len(), 2 * h, data)?;
        Ok(self.push(Op::SpanDiff(f, b, spans), value))
    }

    /// Runs a full LSTM over the rows of `input` (`T × in`) and returns the
    /// hidden states as a `T × H` matrix, row `t` aligned with input row `t`.
    ///
    /// Gates are laid out `(input, forget, candidate, output)` along the
    /// `4H` rows of `wx` (`4H × in`), `wh` (`4H × H`) and `bias`. The hidden
    /// state starts at zero and the cell state at `c0` (or zero). A
    /// `recurrent_mask` multiplies the previous hidden state before it enters
    /// the recurrence. With `reverse` the sequence is consumed last row first.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn lstm_sequence(
        &mut self,
        input: Var,
        wx: Var,
        wh: Var,
        bias: Var,
        c0: Option<Var>,
        recurrent_mask: Option<Vec<f64>>,
        reverse: bool,
    ) -> Result<Var> {
        let (tx, twx, twh, tb) = (self.value(input), self.value(wx), self.value(wh), self.value(bias));
        let h = twh.cols();
        let in_dim = twx.cols();
        if tx.rank() != 2
            || tx.cols() != in_dim
            || twx.rows() != 4 * h
            || twh.rows() != 4 * h
            || tb.shape() != [4 * h]
        {
            return Err(Error::shape(format!(
                "lstm: input {:?}, wx {:?}, wh {:?}, bias {:?}",
                tx.shape(),
                twx.shape(),
                twh.shape(),
                tb.shape()
            )));
        }
        if let Some(c) = c0 {
            if self.shape(c) != [h] {
                return Err(Error::shape(format!("lstm: initial cell {:?}, hidden {}", self.shape(c), h)));
            }
        }
        if let Some(m) = &recurrent_mask {
            if m.len() != h {
                return Err(Error::shape(format!("lstm: mask length {}, hidden {}", m.len(), h)));
            }
        }
        let t_len = tx.rows();
        let g4 = 4 * h;

        let mut pre = vec![0.0; t_len * g4];
        gemm_nt(tx.data(), twx.data(), &mut pre, t_len, in_dim, g4);
        for row in pre.chunks_exact_mut(g4) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }

        let mut gates = pre;
        let mut cells = vec![0.0; t_len * h];
        let mut tanh_cells = vec![0.0; t_len * h];
        let mut out = vec![0.0; t_len * h];
        let mut prev_hidden = vec![0.0; t_len * h];
        let mut c_prev: Vec<f64> = match c0 {
            Some(c) => self.value(c).data().to_vec(),
            None => vec![0.0; h],
        };
        let mut h_prev = vec![0.0; h];
        for s in 0..t_len {
            let t = if reverse { t_len - 1 - s } else { s };
            let a = &mut gates[t * g4..(t + 1) * g4];
            if s > 0 {
                if let Some(m) = &recurrent_mask {
                    for (x, mk) in h_prev.iter_mut().zip(m) {
                        *x *= mk;
                    }
                }
                gemm_nt(&h_prev, twh.data(), a, 1, h, g4);
                prev_hidden[t * h..(t + 1) * h].copy_from_slice(&h_prev);
            }
            for x in &mut a[..2 * h] {
                *x = sigmoid(*x);
            }
            for x in &mut a[2 * h..3 * h] {
                *x = x.tanh();
            }
            for x in &mut a[3 * h..] {
                *x = sigmoid(*x);
            }
            for u in 0..h {
                let c = a[h + u] * c_prev[u] + a[u] * a[2 * h + u];
                let tc = c.tanh();
                cells[t * h + u] = c;
                tanh_cells[t * h + u] = tc;
                let hv = a[3 * h + u] * tc;
                out[t * h + u] = hv;
                h_prev[u] = hv;
                c_prev[u] = c;
            }
        }
        let value = Tensor::matrix(t_len, h, out)?;
        let record = LstmRecord {
            input,
            wx,
            wh,
            bias,
            c0,
            mask: recurrent_mask,
            reverse,
            hidden: h,
            gates,
            cells,
            tanh_cells,
            prev_hidden,
        };
        Ok(self.push(Op::Lstm(Box::new(record)), value))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut params = Vec::new();
        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Param(id) => {
                    let shape = self.params.value(*id).shape();
                    params.push((id.0, Tensor::new(shape, g.clone())?));
                    grads[i] = Some(g);
                }
                op => self.backward_op(op, Var(i), &g, &mut grads),
            }
        }
        params.sort_by_key(|(i, _)| *i);
        Ok(Gradients { nodes: grads, params })
    }

    fn backward_op(&self, op: &Op, out: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = if tb.rank() == 2 { tb.cols() } else { 1 };
                gemm_nt(g, tb.data(), slot(grads, *a, m * k), m, n, k);
                gemm_tn(ta.data(), g, slot(grads, *b, k * n), k, m, n);
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                gemm_nn(g, tb.data(), slot(grads, *a, m * k), m, n, k);
                gemm_tn(g, ta.data(), slot(grads, *b, n * k), n, m, k);
            }
            Op::Add(a, b) => {
                add_into(grads, *a, g);
                add_into(grads, *b, g);
            }
            Op::Sub(a, b) => {
                add_into(grads, *a, g);
                let s = slot(grads, *b, g.len());
                axpy(-1.0, g, s);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let ga: Vec<f64> = g.iter().zip(tb).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(ta).map(|(x, y)| x * y).collect();
                add_into(grads, *a, &ga);
                add_into(grads, *b, &gb);
            }
            Op::AddBias(m, bias) => {
                add_into(grads, *m, g);
                let c = self.value(*bias).len();
                let s = slot(grads, *bias, c);
                for row in g.chunks_exact(c) {
                    for (x, y) in s.iter_mut().zip(row) {
                        *x += y;
                    }
                }
            }
            Op::Scale(a, s) => {
                let dst = slot(grads, *a, g.len());
                axpy(*s, g, dst);
            }
            Op::AddScalar(a) => add_into(grads, *a, g),
            Op::Relu(a) => {
                let y = self.value(out).data();
                let d: Vec<f64> = g.iter().zip(y).map(|(gi, &yi)| if yi > 0.0 { *gi } else { 0.0 }).collect();
                add_into(grads, *a, &d);
            }
            Op::Tanh(a) => {
                let y = self.value(out).data();
                let d: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                add_into(grads, *a, &d);
            }
            Op::Sigmoid(a) => {
                let y = self.value(out).data();
                let d: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect();
                add_into(grads, *a, &d);
            }
            Op::Pointwise(a, deriv) => {
                let d: Vec<f64> = g.iter().zip(deriv).map(|(x, y)| x * y).collect();
                add_into(grads, *a, &d);
            }
            Op::Concat(parts) => {
                let mut at = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    add_into(grads, *p, &g[at..at + n]);
                    at += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = self.value(out).cols();
                let rows = self.value(out).rows();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    let s = slot(grads, *p, rows * c);
                    for r in 0..rows {
                        let src = &g[r * total + offset..r * total + offset + c];
                        for (x, y) in s[r * c..(r + 1) * c].iter_mut().zip(src) {
                            *x += y;
                        }
                    }
                    offset += c;
                }
            }
            Op::Slice(a, start) => {
                let n = self.value(*a).len();
                let s = slot(grads, *a, n);
                for (x, y) in s[*start..*start + g.len()].iter_mut().zip(g) {
                    *x += y;
                }
            }
            Op::SliceRows(a, start) => {
                let t = self.value(*a);
                let c = t.cols();
                let s = slot(grads, *a, t.len());
                for (x, y) in s[start * c..start * c + g.len()].iter_mut().zip(g) {
                    *x += y;
                }
            }
            Op::Row(a, index) => {
                let t = self.value(*a);
                let c = t.cols();
                let s = slot(grads, *a, t.len());
                for (x, y) in s[index * c..(index + 1) * c].iter_mut().zip(g) {
                    *x += y;
                }
            }
            Op::GatherRows(a, indices) => {
                let t = self.value(*a);
                let c = t.cols();
                let s = slot(grads, *a, t.len());
                for (r, &i) in indices.iter().enumerate() {
                    axpy(1.0, &g[r * c..(r + 1) * c], &mut s[i * c..(i + 1) * c]);
                }
            }
            Op::Reshape(a) => add_into(grads, *a, g),
            Op::StackRows(rows) => {
                let c = self.value(out).cols();
                for (r, v) in rows.iter().enumerate() {
                    add_into(grads, *v, &g[r * c..(r + 1) * c]);
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                let s = slot(grads, *a, n);
                for x in s.iter_mut() {
                    *x += g[0];
                }
            }
            Op::GatherSum(a, entries) => {
                let n = self.value(*a).len();
                let s = slot(grads, *a, n);
                for &(i, c) in entries {
                    s[i] += c * g[0];
                }
            }
            Op::SpanDiff(f, b, spans) => {
                let tf = self.value(*f);
                let h = tf.cols();
                let n = tf.len();
                {
                    let sf = slot(grads, *f, n);
                    for (s, &(i, j)) in spans.iter().enumerate() {
                        let row = &g[s * 2 * h..s * 2 * h + h];
                        axpy(1.0, row, &mut sf[j * h..(j + 1) * h]);
                        axpy(-1.0, row, &mut sf[i * h..(i + 1) * h]);
                    }
                }
                let sb = slot(grads, *b, n);
                for (s, &(i, j)) in spans.iter().enumerate() {
                    let row = &g[s * 2 * h + h..(s + 1) * 2 * h];
                    axpy(1.0, row, &mut sb[i * h..(i + 1) * h]);
                    axpy(-1.0, row, &mut sb[j * h..(j + 1) * h]);
                }
            }
            Op::Lstm(rec) => self.backward_lstm(rec, g, grads),
        }
    }

    fn backward_lstm(&self, rec: &LstmRecord, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let h = rec.hidden;
        let g4 = 4 * h;
        let tx = self.value(rec.input);
        let twx = self.value(rec.wx);
        let twh = self.value(rec.wh);
        let t_len = tx.rows();
        let in_dim = tx.cols();

        let mut d_pre = vec![0.0; t_len * g4];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let c0: Option<&[f64]> = rec.c0.map(|c| self.value(c).data());
        for s in (0..t_len).rev() {
            let t = if rec.reverse { t_len - 1 - s } else { s };
            let prev_t = if s == 0 {
                None
            } else if rec.reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let a = &rec.gates[t * g4..(t + 1) * g4];
            let da = &mut d_pre[t * g4..(t + 1) * g4];
            for u in 0..h {
                let (ig, fg, cg, og) = (a[u], a[h + u], a[2 * h + u], a[3 * h + u]);
                let tc = rec.tanh_cells[t * h + u];
                let c_prev = match prev_t {
                    Some(p) => rec.cells[p * h + u],
                    None => c0.map_or(0.0, |c| c[u]),
                };
                let dh = g[t * h + u] + dh_next[u];
                let d_o = dh * tc;
                let dc = dc_next[u] + dh * og * (1.0 - tc * tc);
                let d_i = dc * cg;
                let d_g = dc * ig;
                let d_f = dc * c_prev;
                dc_next[u] = dc * fg;
                da[u] = d_i * ig * (1.0 - ig);
                da[h + u] = d_f * fg * (1.0 - fg);
                da[2 * h + u] = d_g * (1.0 - cg * cg);
                da[3 * h + u] = d_o * og * (1.0 - og);
            }
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            if s > 0 {
                gemm_nn(da, twh.data(), &mut dh_next, 1, g4, h);
                if let Some(m) = &rec.mask {
                    for (x, mk) in dh_next.iter_mut().zip(m) {
                        *x *= mk;
                    }
                }
            }
        }
        if let Some(c) = rec.c0 {
            add_into(grads, c, &dc_next);
        }
        gemm_tn(&d_pre, &rec.prev_hidden, slot(grads, rec.wh, g4 * h), g4, t_len, h);
        gemm_tn(&d_pre, tx.data(), slot(grads, rec.wx, g4 * in_dim), g4, t_len, in_dim);
        gemm_nn(&d_pre, twx.data(), slot(grads, rec.input, t_len * in_dim), t_len, g4, in_dim);
        let sb = slot(grads, rec.bias, g4);
        for row in d_pre.chunks_exact(g4) {
            for (x, y) in sb.iter_mut().zip(row) {
                *x += y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let eye = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let m = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let p = g.matmul(eye, m).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn row_by_column() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).shape(), &[1, 1]);
        assert_eq!(g.value(p).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.matches("[2, 3]").count() == 2, "{msg}");
    }

    #[test]
    fn relu_tanh_values_and_relu_gradient() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let x = g.vector(vec![-1.0, 0.0, 2.0]);
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = g.vector(vec![0.0]);
        let t = g.tanh(z);
        assert_eq!(g.value(t).data(), &[0.0]);
        let s = g.sum(r);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_then_slice_recovers_parts() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let a = g.vector(vec![1.0, 2.0]);
        let b = g.vector(vec![3.0, 4.0, 5.0]);
        let c = g.concat(&[a, b]).unwrap();
        let a2 = g.slice(c, 0, 2).unwrap();
        let b2 = g.slice(c, 2, 3).unwrap();
        assert_eq!(g.value(a2), g.value(a));
        assert_eq!(g.value(b2), g.value(b));
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let a = g.vector(vec![1.0, 2.0]);
        let b = g.vector(vec![1.0]);
        assert!(matches!(g.add(a, b), Err(Error::Shape(_))));
        assert!(matches!(g.mul(a, b), Err(Error::Shape(_))));
    }

    #[test]
    fn parameters_share_one_node() {
        let mut params = ParamSet::new();
        let w = params.add("w", Tensor::vector(vec![2.0, 3.0])).unwrap();
        let mut g = Graph::new(&params);
        let a = g.param(w);
        let b = g.param(w);
        assert_eq!(a, b);
        let sq = g.mul(a, b).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.param(w).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let a = g.vector(vec![1.0, 2.0]);
        assert!(matches!(g.backward(a), Err(Error::Usage(_))));
    }

    #[test]
    fn dropout_modes() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let mut rng = Rng::new(1);
        let x = g.vector(vec![1.0, -2.0, 3.0]);
        assert_eq!(g.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(g.dropout(x, 0.4, &mut rng, false).unwrap(), x);
        assert!(matches!(g.dropout(x, 1.0, &mut rng, true), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_zero_rate_matches_probability() {
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let mut rng = Rng::new(11);
        let n = 100_000;
        let x = g.constant(Tensor::vector(vec![1.0; n]));
        let y = g.dropout(x, 0.4, &mut rng, true).unwrap();
        let vals = g.value(y).data();
        let zeros = vals.iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        assert!((zeros - 0.4).abs() < 0.01, "zero rate {zeros}");
        let keep = 1.0 / 0.6;
        assert!(vals.iter().all(|&v| v == 0.0 || v == keep));
    }

    #[test]
    fn gather_rows_scatters_back() {
        let mut params = ParamSet::new();
        let w = params.add("w", Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        let mut g = Graph::new(&params);
        let a = g.param(w);
        let r = g.gather_rows(a, &[2, 0, 2]).unwrap();
        assert_eq!(g.value(r).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let s = g.sum(r);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.param(w).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(g.gather_rows(a, &[3]).is_err());
    }
}
