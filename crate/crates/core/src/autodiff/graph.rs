use std::collections::{BTreeMap, HashMap};

use super::params::ParamStore;
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use super::TensorError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Attention admissibility: `allow(i, j)` is whether row `i` may see column `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    allow: Vec<bool>,
}

impl Mask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Mask { rows, cols, allow: vec![true; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allow = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                allow.push(f(i, j));
            }
        }
        Mask { rows, cols, allow }
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allow[i * self.cols + j]
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Gelu(Var),
    Relu(Var),
    Square(Var),
    Minimum(Var, Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    Embedding(Var, Vec<usize>),
    NormalizeRows(Var, Vec<f64>),
    MaskedSoftmax(Var),
    LogSoftmax(Var),
    Gather(Var, Vec<usize>),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of a scalar loss by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

/// Dynamic tape: every op appends a node; [`Graph::backward`] walks the
/// nodes in reverse creation order, which is a reverse topological order.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<String, Var>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new(), param_vars: HashMap::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch { op, lhs: self.shape(a), rhs: self.shape(b) }
    }

    /// A constant input. Receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var, TensorError> {
        self.push(t, Op::Leaf, "constant")
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// The registered parameter `name`; one node per name per graph, so every
    /// use fans out from the same node.
    pub fn param(&mut self, name: &str) -> Result<Var, TensorError> {
        if let Some(&v) = self.param_vars.get(name) {
            return Ok(v);
        }
        let value = self
            .params
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.push(value, Op::Param(name.to_string()), "param")?;
        self.param_vars.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let ([m, k], [k2, n]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::new(m, n, out)?, Op::MatMul(a, b), "matmul")
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let ([m, k], [n, k2]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(self.mismatch("matmul_bt", a, b));
        }
        let mut out = vec![0.0; m * n];
        matmul_bt_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::new(m, n, out)?, Op::MatMulBt(a, b), "matmul_bt")
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, a, b));
        }
        let [r, c] = self.shape(a);
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| f(*x, *y)).collect();
        self.push(Tensor::new(r, c, data)?, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "minimum", Op::Minimum(a, b), f64::min)
    }

    fn broadcast_row(
        &mut self,
        x: Var,
        row: Var,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, TensorError> {
        let ([r, c], [one, c2]) = (self.shape(x), self.shape(row));
        if one != 1 || c != c2 {
            return Err(self.mismatch(name, x, row));
        }
        let rv = self.value(row).data();
        let data = self
            .value(x)
            .data()
            .chunks(c.max(1))
            .flat_map(|xr| xr.iter().zip(rv).map(|(a, b)| f(*a, *b)))
            .collect();
        self.push(Tensor::new(r, c, data)?, op, name)
    }

    /// `x + row` with `row: 1 x c` broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        self.broadcast_row(x, row, "add_row", Op::AddRow(x, row), |a, b| a + b)
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        self.broadcast_row(x, row, "mul_row", Op::MulRow(x, row), |a, b| a * b)
    }

    fn unary(&mut self, x: Var, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, TensorError> {
        let value = self.value(x).map(f);
        self.push(value, op, name)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, TensorError> {
        self.unary(x, "scale", Op::Scale(x, s), |v| v * s)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, "exp", Op::Exp(x), f64::exp)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, "gelu", Op::Gelu(x), gelu)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, "relu", Op::Relu(x), |v| v.max(0.0))
    }

    pub fn square(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, "square", Op::Square(x), |v| v * v)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        self.unary(x, "clamp", Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = self.shape(parts[0])[0];
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p)[0] != rows) {
            return Err(self.mismatch("concat_cols", parts[0], bad));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        self.push(Tensor::new(rows, cols, data)?, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let [rows, cols] = self.shape(x);
        if start > end || end > cols {
            return Err(TensorError::Index { op: "slice_cols", index: end, bound: cols });
        }
        let v = self.value(x);
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&v.row_slice(r)[start..end]);
        }
        self.push(Tensor::new(rows, end - start, data)?, Op::SliceCols(x, start), "slice_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let cols = self.shape(parts[0])[1];
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p)[1] != cols) {
            return Err(self.mismatch("concat_rows", parts[0], bad));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::new(rows, cols, data)?, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// Rows of `x` in the order given by `idx`; repeats allowed.
    pub fn select_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let [rows, cols] = self.shape(x);
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(TensorError::Index { op: "select_rows", index: i, bound: rows });
            }
            data.extend_from_slice(self.value(x).row_slice(i));
        }
        self.push(Tensor::new(idx.len(), cols, data)?, Op::SelectRows(x, idx.to_vec()), "select_rows")
    }

    /// Rows of the embedding `table` looked up by id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let [vocab, dim] = self.shape(table);
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            if i >= vocab {
                return Err(TensorError::Index { op: "embedding", index: i, bound: vocab });
            }
            data.extend_from_slice(self.value(table).row_slice(i));
        }
        self.push(Tensor::new(ids.len(), dim, data)?, Op::Embedding(table, ids.to_vec()), "embedding")
    }

    /// Per-row standardization to zero mean, unit variance (no affine).
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var, TensorError> {
        let [rows, cols] = self.shape(x);
        let mut data = Vec::with_capacity(rows * cols);
        let mut inv = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = self.value(x).row_slice(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            data.extend(row.iter().map(|v| (v - mean) * is));
            inv.push(is);
        }
        self.push(Tensor::new(rows, cols, data)?, Op::NormalizeRows(x, inv), "normalize_rows")
    }

    /// Layer normalization with affine `gain` and `bias` rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let n = self.normalize_rows(x, 1e-5)?;
        let g = self.mul_row(n, gain)?;
        self.add_row(g, bias)
    }

    /// Row-wise softmax over the allowed entries only. Forbidden entries get
    /// probability exactly zero and their logits are never read.
    pub fn masked_softmax(&mut self, x: Var, mask: &Mask) -> Result<Var, TensorError> {
        let [rows, cols] = self.shape(x);
        if mask.shape() != [rows, cols] {
            return Err(TensorError::ShapeMismatch { op: "masked_softmax", lhs: [rows, cols], rhs: mask.shape() });
        }
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = self.value(x).row_slice(r);
            let mut max = f64::NEG_INFINITY;
            let mut any = false;
            for (j, &v) in row.iter().enumerate() {
                if mask.allows(r, j) {
                    any = true;
                    max = max.max(v);
                }
            }
            if !any {
                return Err(TensorError::AllMasked { row: r });
            }
            let out = &mut data[r * cols..(r + 1) * cols];
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if mask.allows(r, j) {
                    let e = (v - max).exp();
                    out[j] = e;
                    sum += e;
                }
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        self.push(Tensor::new(rows, cols, data)?, Op::MaskedSoftmax(x), "masked_softmax")
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let [r, c] = self.shape(x);
        self.masked_softmax(x, &Mask::full(r, c))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let [rows, cols] = self.shape(x);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let row = self.value(x).row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|v| v - lse));
        }
        self.push(Tensor::new(rows, cols, data)?, Op::LogSoftmax(x), "log_softmax")
    }

    /// `out[r] = x[r, idx[r]]`, an `rows x 1` column.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let [rows, cols] = self.shape(x);
        if idx.len() != rows {
            return Err(TensorError::Index { op: "gather", index: idx.len(), bound: rows });
        }
        let mut data = Vec::with_capacity(rows);
        for (r, &c) in idx.iter().enumerate() {
            if c >= cols {
                return Err(TensorError::Index { op: "gather", index: c, bound: cols });
            }
            data.push(self.value(x).get(r, c));
        }
        self.push(Tensor::new(rows, 1, data)?, Op::Gather(x, idx.to_vec()), "gather")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// `x * w + b` for a weight `in x out` and bias row `1 x out`.
    pub fn linear(&mut self, x: Var, w: &str, b: &str) -> Result<Var, TensorError> {
        let w = self.param(w)?;
        let b = self.param(b)?;
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Reverse pass from the scalar `loss`. Every registered parameter gets
    /// an entry; parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(TensorError::NonScalarLoss(shape));
        }
        if !self.value(loss).is_finite() {
            return Err(TensorError::NonFinite("loss"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::new();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, g, &mut grads, &mut out);
        }
        for (name, t) in self.params.iter() {
            out.entry(name.clone()).or_insert_with(|| Tensor::zeros(t.rows(), t.cols()));
        }
        Ok(out)
    }

    fn propagate(&self, idx: usize, g: Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        fn acc(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        }
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Param(name) => match out.get_mut(name) {
                Some(e) => e.add_assign(&g),
                None => {
                    out.insert(name.clone(), g);
                }
            },
            Op::MatMul(a, b) => {
                let ([m, k], [_, n]) = (val(*a).shape(), val(*b).shape());
                let mut da = vec![0.0; m * k];
                matmul_bt_acc(g.data(), val(*b).data(), &mut da, m, n, k);
                let mut db = vec![0.0; k * n];
                matmul_at_acc(val(*a).data(), g.data(), &mut db, m, k, n);
                acc(grads, *a, Tensor::new(m, k, da).unwrap());
                acc(grads, *b, Tensor::new(k, n, db).unwrap());
            }
            Op::MatMulBt(a, b) => {
                let ([m, k], [n, _]) = (val(*a).shape(), val(*b).shape());
                let mut da = vec![0.0; m * k];
                matmul_acc(g.data(), val(*b).data(), &mut da, m, n, k);
                let mut db = vec![0.0; n * k];
                matmul_at_acc(g.data(), val(*a).data(), &mut db, m, n, k);
                acc(grads, *a, Tensor::new(m, k, da).unwrap());
                acc(grads, *b, Tensor::new(n, k, db).unwrap());
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g);
            }
            Op::Sub(a, b) => {
                acc(grads, *b, g.map(|v| -v));
                acc(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let ga = zip_map(&g, val(*b), |x, y| x * y);
                let gb = zip_map(&g, val(*a), |x, y| x * y);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let [r, c] = g.shape();
                let mut ga = vec![0.0; r * c];
                let mut gb = vec![0.0; r * c];
                for k in 0..r * c {
                    if av[k] <= bv[k] {
                        ga[k] = g.data()[k];
                    } else {
                        gb[k] = g.data()[k];
                    }
                }
                acc(grads, *a, Tensor::new(r, c, ga).unwrap());
                acc(grads, *b, Tensor::new(r, c, gb).unwrap());
            }
            Op::AddRow(x, row) => {
                acc(grads, *row, col_sums(&g));
                acc(grads, *x, g);
            }
            Op::MulRow(x, row) => {
                let rv = val(*row).data();
                let [r, c] = g.shape();
                let mut gx = vec![0.0; r * c];
                let mut grow = vec![0.0; c];
                let xv = val(*x).data();
                for i in 0..r {
                    for j in 0..c {
                        let gi = g.data()[i * c + j];
                        gx[i * c + j] = gi * rv[j];
                        grow[j] += gi * xv[i * c + j];
                    }
                }
                acc(grads, *x, Tensor::new(r, c, gx).unwrap());
                acc(grads, *row, Tensor::new(1, c, grow).unwrap());
            }
            Op::Scale(x, s) => acc(grads, *x, g.map(|v| v * s)),
            Op::Exp(x) => acc(grads, *x, zip_map(&g, &node.value, |a, y| a * y)),
            Op::Gelu(x) => acc(grads, *x, zip_map(&g, val(*x), |a, xv| a * gelu_grad(xv))),
            Op::Relu(x) => acc(grads, *x, zip_map(&g, val(*x), |a, xv| if xv > 0.0 { a } else { 0.0 })),
            Op::Square(x) => acc(grads, *x, zip_map(&g, val(*x), |a, xv| 2.0 * a * xv)),
            Op::Clamp(x, lo, hi) => acc(
                grads,
                *x,
                zip_map(&g, val(*x), |a, xv| if xv >= *lo && xv <= *hi { a } else { 0.0 }),
            ),
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = val(p).cols();
                    let mut d = Vec::with_capacity(rows * pc);
                    for r in 0..rows {
                        d.extend_from_slice(&g.row_slice(r)[offset..offset + pc]);
                    }
                    acc(grads, p, Tensor::new(rows, pc, d).unwrap());
                    offset += pc;
                }
            }
            Op::SliceCols(x, start) => {
                let [rows, cols] = val(*x).shape();
                let w = g.cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + w].copy_from_slice(g.row_slice(r));
                }
                acc(grads, *x, Tensor::new(rows, cols, d).unwrap());
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    let d = g.data()[offset..offset + n].to_vec();
                    acc(grads, p, Tensor::new(n / cols.max(1), cols, d).unwrap());
                    offset += n;
                }
            }
            Op::SelectRows(x, idx) | Op::Embedding(x, idx) => {
                let [rows, cols] = val(*x).shape();
                let mut d = vec![0.0; rows * cols];
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in d[i * cols..(i + 1) * cols].iter_mut().zip(g.row_slice(k)) {
                        *o += v;
                    }
                }
                acc(grads, *x, Tensor::new(rows, cols, d).unwrap());
            }
            Op::NormalizeRows(x, inv) => {
                let [rows, cols] = g.shape();
                let y = &node.value;
                let mut d = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let gy = g.row_slice(r);
                    let yr = y.row_slice(r);
                    let mg = gy.iter().sum::<f64>() / cols as f64;
                    let mgy = gy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                    d.extend(gy.iter().zip(yr).map(|(a, b)| inv[r] * (a - mg - b * mgy)));
                }
                acc(grads, *x, Tensor::new(rows, cols, d).unwrap());
            }
            Op::MaskedSoftmax(x) => {
                let [rows, cols] = g.shape();
                let p = &node.value;
                let mut d = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let (gr, pr) = (g.row_slice(r), p.row_slice(r));
                    let dot: f64 = gr.iter().zip(pr).map(|(a, b)| a * b).sum();
                    d.extend(gr.iter().zip(pr).map(|(a, b)| b * (a - dot)));
                }
                acc(grads, *x, Tensor::new(rows, cols, d).unwrap());
            }
            Op::LogSoftmax(x) => {
                let [rows, cols] = g.shape();
                let y = &node.value;
                let mut d = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let (gr, yr) = (g.row_slice(r), y.row_slice(r));
                    let s: f64 = gr.iter().sum();
                    d.extend(gr.iter().zip(yr).map(|(a, b)| a - b.exp() * s));
                }
                acc(grads, *x, Tensor::new(rows, cols, d).unwrap());
            }
            Op::Gather(x, idx) => {
                let [rows, cols] = val(*x).shape();
                let mut d = vec![0.0; rows * cols];
                for (r, &c) in idx.iter().enumerate() {
                    d[r * cols + c] = g.data()[r];
                }
                acc(grads, *x, Tensor::new(rows, cols, d).unwrap());
            }
            Op::Sum(x) => {
                let [r, c] = val(*x).shape();
                acc(grads, *x, Tensor::filled(r, c, g.item()));
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let [r, c] = a.shape();
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(r, c, data).unwrap()
}

fn col_sums(g: &Tensor) -> Tensor {
    let [r, c] = g.shape();
    let mut s = vec![0.0; c];
    for i in 0..r {
        for (o, v) in s.iter_mut().zip(g.row_slice(i)) {
            *o += v;
        }
    }
    Tensor::new(1, c, s).unwrap()
}
