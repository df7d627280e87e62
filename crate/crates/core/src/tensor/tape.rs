use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::kernels as k;
use super::Tensor;
use crate::error::{contract, shape_err, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf { param: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddBias(usize, usize),
    MatMul(usize, usize),
    Bmm(usize, usize),
    TransposeLast2(usize),
    PermuteAxes(usize, Vec<usize>),
    SumAxis(usize, usize),
    ExpandAxis(usize, usize),
    Concat(Vec<usize>, usize),
    Slice { src: usize, axis: usize, start: usize },
    Relu(usize),
    Exp(usize),
    Log(usize),
    Reciprocal(usize),
    Clip(usize, f64, f64),
    Softmax(usize, usize),
    NormAxis(usize, usize),
    Reshape(usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Define-by-run gradient tape. Record a forward pass through [`Var`]
/// handles, then call [`Tape::backward`] once.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

/// Gradients of a scalar loss, keyed by the recording handle.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of every parameter leaf, in recording order.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().map(|&i| self.grads[i].as_ref().unwrap())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a trainable parameter; it always receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf { param: true })
    }

    /// Records a constant input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf { param: false })
    }

    /// Multiply-adds performed by the recorded matrix products.
    pub fn matmul_macs(&self) -> u64 {
        let nodes = self.nodes.borrow();
        let dims = |i: usize| nodes[i].value.shape().to_vec();
        nodes
            .iter()
            .map(|n| match n.op {
                Op::MatMul(a, b) => (dims(a)[0] * dims(a)[1] * dims(b)[1]) as u64,
                Op::Bmm(a, b) => {
                    let (da, db) = (dims(a), dims(b));
                    (da[0] * da[1] * da[2] * db[2]) as u64
                }
                _ => 0,
            })
            .sum()
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Reverse sweep from a scalar `loss`. A tape can be swept only once.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(contract("loss was recorded on a different tape"));
        }
        if self.consumed.replace(true) {
            return Err(contract("backward already ran on this tape; record a new pass"));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(contract(format!(
                "loss must be a scalar, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::filled(nodes[loss.id].value.shape(), 1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: usize| nodes[i].value.as_ref();
            let mut acc = |i: usize, t: Tensor| accumulate(&mut grads, i, t);
            match &node.op {
                Op::Leaf { .. } => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, k::scale(&g, -1.0));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, k::mul(&g, val(*b))?);
                    acc(*b, k::mul(&g, val(*a))?);
                }
                Op::Scale(a, c) => acc(*a, k::scale(&g, *c)),
                Op::AddScalar(a) => acc(*a, g),
                Op::AddBias(a, bias) => {
                    let n = val(*bias).len();
                    let mut gb = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (s, x) in gb.iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    acc(*bias, Tensor::from_parts(vec![n], gb));
                    acc(*a, g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, kk, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let mut ga = vec![0.0; m * kk];
                    k::gemm(m, n, kk, g.data(), false, bv.data(), true, &mut ga, false);
                    let mut gb = vec![0.0; kk * n];
                    k::gemm(kk, m, n, av.data(), true, g.data(), false, &mut gb, false);
                    acc(*a, Tensor::from_parts(vec![m, kk], ga));
                    acc(*b, Tensor::from_parts(vec![kk, n], gb));
                }
                Op::Bmm(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (bt, m, kk, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                    let mut ga = vec![0.0; bt * m * kk];
                    let mut gb = vec![0.0; bt * kk * n];
                    for i in 0..bt {
                        let gi = &g.data()[i * m * n..(i + 1) * m * n];
                        let ai = &av.data()[i * m * kk..(i + 1) * m * kk];
                        let bi = &bv.data()[i * kk * n..(i + 1) * kk * n];
                        k::gemm(m, n, kk, gi, false, bi, true, &mut ga[i * m * kk..(i + 1) * m * kk], false);
                        k::gemm(kk, m, n, ai, true, gi, false, &mut gb[i * kk * n..(i + 1) * kk * n], false);
                    }
                    acc(*a, Tensor::from_parts(vec![bt, m, kk], ga));
                    acc(*b, Tensor::from_parts(vec![bt, kk, n], gb));
                }
                Op::TransposeLast2(a) => acc(*a, k::transpose_last2(&g)?),
                Op::PermuteAxes(a, perm) => {
                    let mut inv = vec![0; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    acc(*a, k::permute_axes(&g, &inv)?);
                }
                Op::SumAxis(a, axis) => {
                    let shape = val(*a).shape().to_vec();
                    let n = shape[*axis];
                    let e = k::expand_axis(&g.reshape(&reduced(&shape, *axis))?, *axis, n)?;
                    acc(*a, e.reshape(&shape)?);
                }
                Op::ExpandAxis(a, axis) => {
                    let s = k::sum_axis(&g, *axis)?;
                    acc(*a, s.reshape(val(*a).shape())?);
                }
                Op::Concat(parts, axis) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = val(p).shape()[*axis];
                        acc(p, k::slice_axis(&g, *axis, start, len)?);
                        start += len;
                    }
                }
                Op::Slice { src, axis, start } => {
                    let shape = val(*src).shape();
                    let (outer, n, inner) = super::axis_extents(shape, *axis);
                    let len = g.shape()[*axis];
                    let mut out = vec![0.0; outer * n * inner];
                    for o in 0..outer {
                        let dst = (o * n + start) * inner;
                        out[dst..dst + len * inner]
                            .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                    }
                    acc(*src, Tensor::from_parts(shape.to_vec(), out));
                }
                Op::Relu(a) => {
                    let x = val(*a);
                    acc(*a, zip(&g, x, |g, x| if x > 0.0 { g } else { 0.0 }));
                }
                Op::Exp(a) => acc(*a, k::mul(&g, &node.value)?),
                Op::Log(a) => acc(*a, zip(&g, val(*a), |g, x| g / x)),
                Op::Reciprocal(a) => acc(*a, zip(&g, &node.value, |g, y| -g * y * y)),
                Op::Clip(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    acc(
                        *a,
                        zip(&g, val(*a), |g, x| if x >= lo && x <= hi { g } else { 0.0 }),
                    );
                }
                Op::Softmax(a, axis) => {
                    let y = &node.value;
                    let gy = k::mul(&g, y)?;
                    let s = k::sum_axis(&gy, *axis)?;
                    let n = y.shape()[*axis];
                    let s = k::expand_axis(&s.reshape(&reduced(y.shape(), *axis))?, *axis, n)?
                        .reshape(y.shape())?;
                    acc(*a, k::mul(y, &k::sub(&g, &s)?)?);
                }
                Op::NormAxis(a, axis) => {
                    let x = val(*a);
                    let n = x.shape()[*axis];
                    let r = reduced(x.shape(), *axis);
                    let gn = zip(&g, &node.value, |g, y| if y > 0.0 { g / y } else { 0.0 });
                    let gn = k::expand_axis(&gn.reshape(&r)?, *axis, n)?.reshape(x.shape())?;
                    acc(*a, k::mul(&gn, x)?);
                }
                Op::Reshape(a) => acc(*a, g.reshape(val(*a).shape())?),
            }
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf { param: true }))
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        for &p in &params {
            if grads[p].is_none() {
                grads[p] = Some(Tensor::zeros(nodes[p].value.shape()));
            }
        }
        Ok(Gradients { grads, params })
    }
}

/// Shape with `axis` removed, as stored in a rank-preserving reshape.
fn reduced(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out = shape.to_vec();
    out.remove(axis);
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, t: Tensor) {
    match &mut grads[id] {
        Some(g) => {
            debug_assert_eq!(g.shape(), t.shape());
            for (a, b) in g.data_mut().iter_mut().zip(t.data()) {
                *a += b;
            }
        }
        slot => *slot = Some(t),
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(contract("operands recorded on different tapes"))
        }
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        self.tape.push(value, op)
    }

    pub fn add(self, o: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&o)?;
        let v = k::add(&self.value(), &o.value())?;
        Ok(self.unary(v, Op::Add(self.id, o.id)))
    }

    pub fn sub(self, o: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&o)?;
        let v = k::sub(&self.value(), &o.value())?;
        Ok(self.unary(v, Op::Sub(self.id, o.id)))
    }

    pub fn mul(self, o: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&o)?;
        let v = k::mul(&self.value(), &o.value())?;
        Ok(self.unary(v, Op::Mul(self.id, o.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = k::scale(&self.value(), c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let v = k::add_scalar(&self.value(), c);
        self.unary(v, Op::AddScalar(self.id))
    }

    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&bias)?;
        let v = k::add_bias(&self.value(), &bias.value())?;
        Ok(self.unary(v, Op::AddBias(self.id, bias.id)))
    }

    pub fn matmul(self, o: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&o)?;
        let v = k::matmul(&self.value(), &o.value())?;
        Ok(self.unary(v, Op::MatMul(self.id, o.id)))
    }

    pub fn bmm(self, o: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&o)?;
        let v = k::bmm(&self.value(), &o.value())?;
        Ok(self.unary(v, Op::Bmm(self.id, o.id)))
    }

    pub fn transpose_last2(self) -> Result<Var<'t>> {
        let v = k::transpose_last2(&self.value())?;
        Ok(self.unary(v, Op::TransposeLast2(self.id)))
    }

    pub fn permute_axes(self, perm: &[usize]) -> Result<Var<'t>> {
        let v = k::permute_axes(&self.value(), perm)?;
        Ok(self.unary(v, Op::PermuteAxes(self.id, perm.to_vec())))
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let v = k::sum_axis(&self.value(), axis)?;
        Ok(self.unary(v, Op::SumAxis(self.id, axis)))
    }

    /// Sum of all entries as a `[1]` tensor.
    pub fn sum(self) -> Result<Var<'t>> {
        let n = self.value().len();
        self.reshape(&[n])?.sum_axis(0)
    }

    pub fn expand_axis(self, axis: usize, n: usize) -> Result<Var<'t>> {
        let v = k::expand_axis(&self.value(), axis, n)?;
        Ok(self.unary(v, Op::ExpandAxis(self.id, axis)))
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat_axis", "no inputs"))?;
        for p in parts {
            first.same_tape(p)?;
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let v = k::concat_axis(&refs, axis)?;
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(first.unary(v, Op::Concat(ids, axis)))
    }

    pub fn slice_axis(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let v = k::slice_axis(&self.value(), axis, start, len)?;
        Ok(self.unary(
            v,
            Op::Slice {
                src: self.id,
                axis,
                start,
            },
        ))
    }

    pub fn relu(self) -> Var<'t> {
        let v = k::relu(&self.value());
        self.unary(v, Op::Relu(self.id))
    }

    pub fn exp(self) -> Result<Var<'t>> {
        let v = k::exp(&self.value())?;
        Ok(self.unary(v, Op::Exp(self.id)))
    }

    pub fn log(self) -> Result<Var<'t>> {
        let v = k::log(&self.value())?;
        Ok(self.unary(v, Op::Log(self.id)))
    }

    pub fn reciprocal(self) -> Result<Var<'t>> {
        let v = k::reciprocal(&self.value())?;
        Ok(self.unary(v, Op::Reciprocal(self.id)))
    }

    pub fn clip(self, lo: f64, hi: f64) -> Var<'t> {
        let v = k::clip(&self.value(), lo, hi);
        self.unary(v, Op::Clip(self.id, lo, hi))
    }

    pub fn softmax_axis(self, axis: usize) -> Result<Var<'t>> {
        let v = k::softmax_axis(&self.value(), axis)?;
        Ok(self.unary(v, Op::Softmax(self.id, axis)))
    }

    pub fn norm_axis(self, axis: usize) -> Result<Var<'t>> {
        let v = k::norm_axis(&self.value(), axis)?;
        Ok(self.unary(v, Op::NormAxis(self.id, axis)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.value().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.mul(self)
    }

    pub fn div(self, o: Var<'t>) -> Result<Var<'t>> {
        self.mul(o.reciprocal()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![0.5, -1.0, 2.0]));
        let g = tape.backward(x.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let loss = x.mul(x).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn second_backward_is_an_error() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let loss = x.scale(2.0);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::Contract(_))));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0]));
        let y = tape.param(Tensor::zeros(&[2, 2]));
        let g = tape.backward(x.scale(3.0)).unwrap();
        assert_eq!(g.get(y).unwrap(), &Tensor::zeros(&[2, 2]));
        assert_eq!(g.params().count(), 2);
    }

    #[test]
    fn clip_boundary_passes_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![0.0, -1.0, 0.5, 1.0, 2.0]));
        let g = tape.backward(x.clip(0.0, 1.0).sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn log_domain_error_on_tape() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![-1.0]));
        assert!(matches!(x.log(), Err(Error::Domain { .. })));
    }
}
