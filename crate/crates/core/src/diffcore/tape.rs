//! Reverse-mode differentiation over dense arrays.
//!
//! Every primitive appends a node holding its output value. [`Tape::backward`]
//! walks the nodes in reverse order of creation and accumulates adjoints
//! additively, so a value used twice receives the sum of both contributions.
//! Nodes that depend on no parameter or differentiable input are skipped.

use std::collections::HashMap;

use super::array::{matmul, matmul_nt, matmul_tn, DenseArray};
use super::params::{ParamId, ParameterStore};
use crate::error::{Result, VdmError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Clamp(Var, f64, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: DenseArray,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of the primitives executed in a forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    loaded: HashMap<(u64, usize), Var>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the leaf `v` (an input or a
    /// parameter), or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&DenseArray> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: &DenseArray, b: &DenseArray) -> VdmError {
    VdmError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: DenseArray, op: Op, needs_grad: bool) -> Var {
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

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A leaf whose gradient is tracked (for input sensitivities).
    pub fn input(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Loads a parameter; repeated loads of the same parameter share one node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        let key = (store.tag(), id.index());
        if let Some(&v) = self.loaded.get(&key) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.loaded.insert(key, v);
        v
    }

    /// Copy of `v` cut from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = matmul(av, bv);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims() != bv.dims() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(shape_err("add_row", av, rv));
        }
        let c = av.cols();
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&rv.data()[..c]) {
                *o += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x / y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Div(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let ng = self.ng(a);
        self.push(out, Op::Log(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let ng = self.ng(a);
        self.push(out, Op::Square(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = DenseArray::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = DenseArray::scalar(v.sum() / v.len().max(1) as f64);
        let ng = self.ng(a);
        self.push(out, Op::Mean(a), ng)
    }

    /// Sums each row: `m x n -> m x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = (0..v.rows()).map(|r| v.row(r).iter().sum()).collect();
        let out = DenseArray::matrix(v.rows(), 1, data).expect("row count");
        let ng = self.ng(a);
        self.push(out, Op::RowSum(a), ng)
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat", self.value(parts[0]), self.value(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = DenseArray::matrix(rows, total, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        if start > end || end > v.cols() {
            return Err(VdmError::Shape {
                op: "slice_cols",
                left: v.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let mut data = Vec::with_capacity(v.rows() * (end - start));
        for r in 0..v.rows() {
            data.extend_from_slice(&v.row(r)[start..end]);
        }
        let out = DenseArray::matrix(v.rows(), end - start, data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= v.rows()) {
            return Err(VdmError::Shape {
                op: "gather_rows",
                left: v.shape().to_vec(),
                right: vec![bad],
            });
        }
        let out = v.gather_rows(index);
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherRows(a, index.to_vec()), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape.to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(out, Op::Clamp(a, lo, hi), ng)
    }

    /// Linear layer `x * w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Computes d`loss`/d(every node) by reverse traversal.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(VdmError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<DenseArray>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(DenseArray::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            // only leaf adjoints are kept; interior ones are never queried
            if matches!(node.op, Op::Param | Op::Input) || i == loss.0 {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &DenseArray, grads: &mut [Option<DenseArray>]) {
        let mut send = |v: Var, delta: DenseArray| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Constant | Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    send(*a, matmul_nt(g, self.value(*b)));
                }
                if self.ng(*b) {
                    send(*b, matmul_tn(self.value(*a), g));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                if self.ng(*row) {
                    let c = g.cols();
                    let mut acc = vec![0.0; c];
                    for r in 0..g.rows() {
                        for (s, v) in acc.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    let shape = self.value(*row).shape().to_vec();
                    send(*row, DenseArray::new(shape, acc).expect("row shape"));
                }
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                send(*a, g.zip_map(self.value(*b), |x, y| x * y));
                send(*b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                send(*a, g.zip_map(bv, |x, y| x / y));
                if self.ng(*b) {
                    // d(a/b)/db = -(a/b)/b
                    let t = g.zip_map(y, |x, q| -x * q);
                    send(*b, t.zip_map(bv, |x, d| x / d));
                }
            }
            Op::Scale(a, c) => send(*a, g.map(|x| x * c)),
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::Relu(a) => {
                send(
                    *a,
                    g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 }),
                );
            }
            Op::Sigmoid(a) => send(*a, g.zip_map(y, |x, s| x * s * (1.0 - s))),
            Op::Tanh(a) => send(*a, g.zip_map(y, |x, t| x * (1.0 - t * t))),
            Op::Exp(a) => send(*a, g.zip_map(y, |x, e| x * e)),
            Op::Log(a) => send(*a, g.zip_map(self.value(*a), |x, v| x / v)),
            Op::Square(a) => send(*a, g.zip_map(self.value(*a), |x, v| 2.0 * x * v)),
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                send(*a, DenseArray::filled(&shape, g.data()[0]));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let n = av.len().max(1) as f64;
                send(*a, DenseArray::filled(av.shape(), g.data()[0] / n));
            }
            Op::RowSum(a) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut out = DenseArray::zeros(av.shape());
                for r in 0..av.rows() {
                    let gr = g.data()[r];
                    out.data_mut()[r * c..(r + 1) * c]
                        .iter_mut()
                        .for_each(|x| *x = gr);
                }
                send(*a, out);
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.ng(p) {
                        let mut data = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + c]);
                        }
                        send(p, DenseArray::matrix(rows, c, data).expect("slice"));
                    }
                    offset += c;
                }
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let mut out = DenseArray::zeros(av.shape());
                let w = g.cols();
                for r in 0..g.rows() {
                    out.row_mut(r)[*start..*start + w].copy_from_slice(g.row(r));
                }
                send(*a, out);
            }
            Op::GatherRows(a, index) => {
                let av = self.value(*a);
                let mut out = DenseArray::zeros(av.shape());
                for (r, &src) in index.iter().enumerate() {
                    for (o, v) in out.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                send(*a, out);
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                send(*a, g.clone().reshaped(shape).expect("same length"));
            }
            Op::Clamp(a, lo, hi) => {
                send(
                    *a,
                    g.zip_map(
                        self.value(*a),
                        |x, v| {
                            if v >= *lo && v <= *hi {
                                x
                            } else {
                                0.0
                            }
                        },
                    ),
                );
            }
        }
    }

    /// Gradients for every parameter of `store` loaded on this tape, in
    /// parameter order. Parameters the loss does not touch get `None`.
    pub fn param_grads(
        &self,
        grads: &Gradients,
        store: &ParameterStore,
    ) -> Vec<Option<DenseArray>> {
        let mut out = vec![None; store.len()];
        for id in store.ids() {
            if let Some(&v) = self.loaded.get(&(store.tag(), id.index())) {
                out[id.index()] = grads.get(v).cloned();
            }
        }
        out
    }

    /// Adds this tape's parameter gradients into the store's gradient slots.
    pub fn accumulate_into(&self, grads: &Gradients, store: &mut ParameterStore) -> Result<()> {
        for (i, g) in self.param_grads(grads, store).into_iter().enumerate() {
            if let Some(g) = g {
                store.accumulate_grad(ParamId(i), &g)?;
            }
        }
        Ok(())
    }

    /// Backward pass from `loss` straight into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParameterStore) -> Result<()> {
        let grads = self.backward(loss)?;
        self.accumulate_into(&grads, store)
    }

    #[allow(dead_code)]
    pub(crate) fn is_param(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Param)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> DenseArray {
        DenseArray::row_vector(v.to_vec())
    }

    #[test]
    fn forward_primitive_examples() {
        let mut t = Tape::new();
        let a = t.constant(row(&[-1.0, 0.0, 2.0]));
        let r = t.relu(a);
        assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);

        let z = t.constant(row(&[0.0]));
        let s = t.sigmoid(z);
        assert_eq!(t.value(s).data(), &[0.5]);

        let x = t.constant(row(&[3.5]));
        let l = t.log(x);
        let e = t.exp(l);
        assert!((t.value(e).data()[0] - 3.5).abs() < 1e-15);
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut t = Tape::new();
        let a = t.constant(DenseArray::zeros(&[2, 3]));
        let b = t.constant(DenseArray::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = t.constant(DenseArray::zeros(&[3, 2]));
        assert!(t.add(a, c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut store = ParameterStore::new();
        let id = store.insert("p", row(&[1.0, -2.0, 5.0]));
        let mut t = Tape::new();
        let p = t.param(&store, id);
        let l = t.sum(p);
        t.backward_into(l, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_power_rule() {
        let mut store = ParameterStore::new();
        let id = store.insert("p", row(&[3.0]));
        let mut t = Tape::new();
        let p = t.param(&store, id);
        let sq = t.square(p);
        let l = t.sum(sq);
        t.backward_into(l, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut t = Tape::new();
        let x = t.input(row(&[2.0]));
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        let l = t.sum(z);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.input(row(&[1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(VdmError::NotScalar(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(row(&[1.0]));
        let x = t.input(row(&[4.0]));
        let y = t.mul(c, x).unwrap();
        let l = t.sum(y);
        let g = t.backward(l).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[1.0]);
    }
}
