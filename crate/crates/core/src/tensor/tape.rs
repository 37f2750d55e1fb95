//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Operations append nodes and
//! record which earlier nodes they consumed; [`Tape::backward`] walks the
//! nodes in reverse, accumulating gradients into the leaves that were created
//! with `requires_grad`. Sparse operands are constants: `spmm` only
//! propagates through its dense input.

use std::rc::Rc;

use super::matrix::Matrix;
use super::ops;
use super::sparse::CsrMatrix;
use crate::error::{Result, SniaError};

/// Handle to a tape node. Cheap to copy; only valid for the tape that
/// created it.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Spmm(Rc<CsrMatrix>, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    ConcatRows(usize, usize),
    AddRowBias(usize, usize),
    Relu(usize),
    Tanh(usize),
    Log(usize),
    Exp(usize),
    SoftmaxRow(usize),
    LogSoftmaxRow(usize),
    Scale(usize, f64),
    Pick(usize, Rc<Vec<(usize, usize)>>),
    RowSum(usize),
    SumAll(usize),
    MeanAll(usize),
    MinElem(usize, usize),
    Clamp(usize, f64, f64),
    HuberUnit(usize),
}

struct Node {
    value: Rc<Matrix>,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.push_rc(Rc::new(value), requires_grad, op)
    }

    fn push_rc(&mut self, value: Rc<Matrix>, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    /// Non-differentiable leaf that shares its storage with the caller.
    pub fn shared_constant(&mut self, value: Rc<Matrix>) -> Var {
        self.push_rc(value, false, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let rg = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, rg, Op::MatMul(a.0, b.0)))
    }

    pub fn spmm(&mut self, sparse: &Rc<CsrMatrix>, dense: Var) -> Result<Var> {
        let value = sparse.spmm(&self.nodes[dense.0].value)?;
        let rg = self.needs(dense.0);
        Ok(self.push(value, rg, Op::Spmm(Rc::clone(sparse), dense.0)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
        if sa != sb {
            return Err(SniaError::dimension(op, format!("{}x{}", sa.0, sa.1), format!("{}x{}", sb.0, sb.1)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = (*self.nodes[a.0].value).clone();
        value.add_assign(&self.nodes[b.0].value);
        let rg = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, rg, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let mut value = (*self.nodes[a.0].value).clone();
        value.scaled_add_assign(-1.0, &self.nodes[b.0].value);
        let rg = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, rg, Op::Sub(a.0, b.0)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data);
        let rg = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, rg, Op::Hadamard(a.0, b.0)))
    }

    /// Row-wise concatenation: (n x c1, n x c2) -> n x (c1+c2).
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        if va.rows() != vb.rows() {
            return Err(SniaError::dimension(
                "concat_rows",
                format!("{}x{}", va.rows(), va.cols()),
                format!("{}x{}", vb.rows(), vb.cols()),
            ));
        }
        let (n, c1, c2) = (va.rows(), va.cols(), vb.cols());
        let mut value = Matrix::zeros(n, c1 + c2);
        for r in 0..n {
            value.row_mut(r)[..c1].copy_from_slice(va.row(r));
            value.row_mut(r)[c1..].copy_from_slice(vb.row(r));
        }
        let rg = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, rg, Op::ConcatRows(a.0, b.0)))
    }

    /// Broadcast a 1 x c bias over the rows of an n x c matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        let vb = &self.nodes[bias.0].value;
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(SniaError::dimension(
                "add_row_bias",
                format!("{}x{}", vx.rows(), vx.cols()),
                format!("{}x{}", vb.rows(), vb.cols()),
            ));
        }
        let mut value = (**vx).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            for (v, b) in row.iter_mut().zip(vb.row(0)) {
                *v += b;
            }
        }
        let rg = self.needs(x.0) || self.needs(bias.0);
        Ok(self.push(value, rg, Op::AddRowBias(x.0, bias.0)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut value = (*self.nodes[x.0].value).clone();
        ops::relu_in_place(value.data_mut());
        let rg = self.needs(x.0);
        self.push(value, rg, Op::Relu(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut value = (*self.nodes[x.0].value).clone();
        ops::tanh_in_place(value.data_mut());
        let rg = self.needs(x.0);
        self.push(value, rg, Op::Tanh(x.0))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        if vx.data().iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(SniaError::Domain("log requires strictly positive finite inputs".into()));
        }
        let value = vx.map(f64::ln);
        let rg = self.needs(x.0);
        Ok(self.push(value, rg, Op::Log(x.0)))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.map(f64::exp);
        let rg = self.needs(x.0);
        self.push(value, rg, Op::Exp(x.0))
    }

    pub fn softmax_row(&mut self, x: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        if !vx.is_finite() {
            return Err(SniaError::Domain("softmax requires finite inputs".into()));
        }
        let mut value = (**vx).clone();
        for r in 0..value.rows() {
            ops::softmax_row_slice(value.row_mut(r));
        }
        let rg = self.needs(x.0);
        Ok(self.push(value, rg, Op::SoftmaxRow(x.0)))
    }

    pub fn log_softmax_row(&mut self, x: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        if !vx.is_finite() {
            return Err(SniaError::Domain("log_softmax requires finite inputs".into()));
        }
        let mut value = (**vx).clone();
        for r in 0..value.rows() {
            ops::log_softmax_row_slice(value.row_mut(r));
        }
        let rg = self.needs(x.0);
        Ok(self.push(value, rg, Op::LogSoftmaxRow(x.0)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.nodes[x.0].value.map(|v| v * factor);
        let rg = self.needs(x.0);
        self.push(value, rg, Op::Scale(x.0, factor))
    }

    /// Gather individual entries into a k x 1 column.
    pub fn pick(&mut self, x: Var, entries: &[(usize, usize)]) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        for &(r, c) in entries {
            if r >= vx.rows() || c >= vx.cols() {
                return Err(SniaError::Usage(format!(
                    "pick index ({r},{c}) out of bounds for {}x{}",
                    vx.rows(),
                    vx.cols()
                )));
            }
        }
        let data = entries.iter().map(|&(r, c)| vx.get(r, c)).collect();
        let value = Matrix::col_vector(data);
        let rg = self.needs(x.0);
        Ok(self.push(value, rg, Op::Pick(x.0, Rc::new(entries.to_vec()))))
    }

    pub fn row_sum(&mut self, x: Var) -> Var {
        let vx = &self.nodes[x.0].value;
        let data = (0..vx.rows()).map(|r| vx.row(r).iter().sum()).collect();
        let value = Matrix::col_vector(data);
        let rg = self.needs(x.0);
        self.push(value, rg, Op::RowSum(x.0))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().sum();
        let rg = self.needs(x.0);
        self.push(Matrix::scalar(s), rg, Op::SumAll(x.0))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let vx = &self.nodes[x.0].value;
        let n = (vx.rows() * vx.cols()) as f64;
        let s = vx.data().iter().sum::<f64>() / n;
        let rg = self.needs(x.0);
        self.push(Matrix::scalar(s), rg, Op::MeanAll(x.0))
    }

    /// Elementwise minimum; ties propagate the gradient to the first operand.
    pub fn min_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("min_elem", a, b)?;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x.min(*y)).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data);
        let rg = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, rg, Op::MinElem(a.0, b.0)))
    }

    /// Clamp into [lo, hi]; the gradient is zero outside the open interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.nodes[x.0].value.map(|v| v.clamp(lo, hi));
        let rg = self.needs(x.0);
        self.push(value, rg, Op::Clamp(x.0, lo, hi))
    }

    /// Unit-transition Huber: x^2/2 for |x| < 1, |x| - 1/2 otherwise.
    pub fn huber_unit(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.map(|v| {
            if v.abs() < 1.0 {
                0.5 * v * v
            } else {
                v.abs() - 0.5
            }
        });
        let rg = self.needs(x.0);
        self.push(value, rg, Op::HuberUnit(x.0))
    }

    /// Backpropagate from a scalar loss node, accumulating into every
    /// `requires_grad` leaf. Repeatable; use [`Tape::zero_grad`] between
    /// independent passes.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            let (r, c) = self.nodes[loss.0].value.shape();
            return Err(SniaError::Usage(format!("backward requires a 1x1 loss, got {r}x{c}")));
        }
        let mut flow: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        flow[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = flow[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {
                    let slot = &mut self.nodes[i].grad;
                    match slot {
                        Some(acc) => acc.add_assign(&g),
                        None => *slot = Some(g),
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let ga = g.matmul_nt(&self.nodes[b].value)?;
                        accumulate(&mut flow[a], ga);
                    }
                    if self.needs(b) {
                        let gb = self.nodes[a].value.matmul_tn(&g)?;
                        accumulate(&mut flow[b], gb);
                    }
                }
                Op::Spmm(s, d) => {
                    let d = *d;
                    if self.needs(d) {
                        let gd = s.spmm_t(&g)?;
                        accumulate(&mut flow[d], gd);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        accumulate(&mut flow[a], g.clone());
                    }
                    if self.needs(b) {
                        accumulate(&mut flow[b], g);
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        accumulate(&mut flow[a], g.clone());
                    }
                    if self.needs(b) {
                        let mut gn = g;
                        gn.scale_assign(-1.0);
                        accumulate(&mut flow[b], gn);
                    }
                }
                Op::Hadamard(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let mut ga = g.clone();
                        for (x, y) in ga.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
                            *x *= y;
                        }
                        accumulate(&mut flow[a], ga);
                    }
                    if self.needs(b) {
                        let mut gb = g;
                        for (x, y) in gb.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                            *x *= y;
                        }
                        accumulate(&mut flow[b], gb);
                    }
                }
                Op::ConcatRows(a, b) => {
                    let (a, b) = (*a, *b);
                    let c1 = self.nodes[a].value.cols();
                    let c2 = self.nodes[b].value.cols();
                    let n = g.rows();
                    if self.needs(a) {
                        let mut ga = Matrix::zeros(n, c1);
                        for r in 0..n {
                            ga.row_mut(r).copy_from_slice(&g.row(r)[..c1]);
                        }
                        accumulate(&mut flow[a], ga);
                    }
                    if self.needs(b) {
                        let mut gb = Matrix::zeros(n, c2);
                        for r in 0..n {
                            gb.row_mut(r).copy_from_slice(&g.row(r)[c1..]);
                        }
                        accumulate(&mut flow[b], gb);
                    }
                }
                Op::AddRowBias(x, bias) => {
                    let (x, bias) = (*x, *bias);
                    if self.needs(bias) {
                        let mut gb = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (acc, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                                *acc += v;
                            }
                        }
                        accumulate(&mut flow[bias], gb);
                    }
                    if self.needs(x) {
                        accumulate(&mut flow[x], g);
                    }
                }
                Op::Relu(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let mut gx = g;
                        for (v, inp) in gx.data_mut().iter_mut().zip(self.nodes[x].value.data()) {
                            if *inp <= 0.0 {
                                *v = 0.0;
                            }
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::Tanh(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let mut gx = g;
                        for (v, y) in gx.data_mut().iter_mut().zip(self.nodes[i].value.data()) {
                            *v *= 1.0 - y * y;
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::Log(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let mut gx = g;
                        for (v, inp) in gx.data_mut().iter_mut().zip(self.nodes[x].value.data()) {
                            *v /= inp;
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::Exp(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let mut gx = g;
                        for (v, y) in gx.data_mut().iter_mut().zip(self.nodes[i].value.data()) {
                            *v *= y;
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::SoftmaxRow(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let y = &self.nodes[i].value;
                        let mut gx = Matrix::zeros(g.rows(), g.cols());
                        for r in 0..g.rows() {
                            let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                            for ((out, gv), yv) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                                *out = yv * (gv - dot);
                            }
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::LogSoftmaxRow(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let y = &self.nodes[i].value;
                        let mut gx = Matrix::zeros(g.rows(), g.cols());
                        for r in 0..g.rows() {
                            let gsum: f64 = g.row(r).iter().sum();
                            for ((out, gv), ly) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                                *out = gv - ly.exp() * gsum;
                            }
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::Scale(x, f) => {
                    let (x, f) = (*x, *f);
                    if self.needs(x) {
                        let mut gx = g;
                        gx.scale_assign(f);
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::Pick(x, entries) => {
                    let x = *x;
                    if self.needs(x) {
                        let src = &self.nodes[x].value;
                        let mut gx = Matrix::zeros(src.rows(), src.cols());
                        for (k, &(r, c)) in entries.iter().enumerate() {
                            let v = gx.get(r, c) + g.get(k, 0);
                            gx.set(r, c, v);
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::RowSum(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let src = &self.nodes[x].value;
                        let mut gx = Matrix::zeros(src.rows(), src.cols());
                        for r in 0..src.rows() {
                            let gv = g.get(r, 0);
                            for v in gx.row_mut(r) {
                                *v = gv;
                            }
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::SumAll(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let src = &self.nodes[x].value;
                        let mut gx = Matrix::zeros(src.rows(), src.cols());
                        gx.fill(g.scalar_value());
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::MeanAll(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let src = &self.nodes[x].value;
                        let n = (src.rows() * src.cols()) as f64;
                        let mut gx = Matrix::zeros(src.rows(), src.cols());
                        gx.fill(g.scalar_value() / n);
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::MinElem(a, b) => {
                    let (a, b) = (*a, *b);
                    let va = &self.nodes[a].value;
                    let vb = &self.nodes[b].value;
                    if self.needs(a) {
                        let mut ga = g.clone();
                        for ((v, x), y) in ga.data_mut().iter_mut().zip(va.data()).zip(vb.data()) {
                            if x > y {
                                *v = 0.0;
                            }
                        }
                        accumulate(&mut flow[a], ga);
                    }
                    if self.needs(b) {
                        let mut gb = g;
                        for ((v, x), y) in gb.data_mut().iter_mut().zip(va.data()).zip(vb.data()) {
                            if x <= y {
                                *v = 0.0;
                            }
                        }
                        accumulate(&mut flow[b], gb);
                    }
                }
                Op::Clamp(x, lo, hi) => {
                    let (x, lo, hi) = (*x, *lo, *hi);
                    if self.needs(x) {
                        let mut gx = g;
                        for (v, inp) in gx.data_mut().iter_mut().zip(self.nodes[x].value.data()) {
                            if !(*inp > lo && *inp < hi) {
                                *v = 0.0;
                            }
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
                Op::HuberUnit(x) => {
                    let x = *x;
                    if self.needs(x) {
                        let mut gx = g;
                        for (v, inp) in gx.data_mut().iter_mut().zip(self.nodes[x].value.data()) {
                            *v *= if inp.abs() < 1.0 { *inp } else { inp.signum() };
                        }
                        accumulate(&mut flow[x], gx);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_leaf_gives_all_ones_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]), true);
        let loss = tape.sum_all(w);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_squared_norm_gradient_is_the_matrix_itself() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_vec(1, 3, vec![2.0, -1.0, 0.25]), true);
        let sq = tape.hadamard(w, w).unwrap();
        let half = tape.scale(sq, 0.5);
        let loss = tape.sum_all(half);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[2.0, -1.0, 0.25]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::zeros(2, 2), true);
        let err = tape.backward(w).unwrap_err();
        assert!(matches!(err, SniaError::Usage(_)));
    }

    #[test]
    fn backward_is_repeatable_after_zero_grad() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_vec(1, 2, vec![3.0, 4.0]), true);
        let loss = tape.sum_all(w);
        tape.backward(loss).unwrap();
        let first = tape.grad(w).unwrap().clone();
        tape.zero_grad();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &first);
        // without zeroing, gradients accumulate
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_vec(1, 3, vec![0.3, -1.1, 2.0]), true);
        let t = tape.tanh(w);
        let l1 = tape.sum_all(t);
        let e = tape.exp(w);
        let l2 = tape.mean_all(e);
        let a_l1 = tape.scale(l1, 2.5);
        let b_l2 = tape.scale(l2, -0.75);
        let combo = tape.add(a_l1, b_l2).unwrap();

        tape.backward(l1).unwrap();
        let g1 = tape.grad(w).unwrap().clone();
        tape.zero_grad();
        tape.backward(l2).unwrap();
        let g2 = tape.grad(w).unwrap().clone();
        tape.zero_grad();
        tape.backward(combo).unwrap();
        let gc = tape.grad(w).unwrap().clone();
        for i in 0..3 {
            let want = 2.5 * g1.data()[i] - 0.75 * g2.data()[i];
            assert!((gc.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn log_rejects_non_positive_inputs() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_vec(1, 2, vec![1.0, 0.0]), true);
        assert!(matches!(tape.log(w), Err(SniaError::Domain(_))));
    }

    #[test]
    fn concat_rows_shape_law() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(1, 4), false);
        let b = tape.leaf(Matrix::zeros(1, 4), false);
        let c = tape.concat_rows(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), (1, 8));
    }

    #[test]
    fn tanh_at_zero_has_unit_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::scalar(0.0), true);
        let t = tape.tanh(w);
        assert_eq!(tape.value(t).scalar_value(), 0.0);
        tape.backward(t).unwrap();
        assert_eq!(tape.grad(w).unwrap().scalar_value(), 1.0);
    }
}
