use std::cell::RefCell;
use std::fmt;

use super::{sigmoid, softplus, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Tensor times a one-element tensor.
    MulScalar(usize, usize),
    /// Tensor divided by a one-element tensor.
    DivScalar(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Softplus(usize),
    Sigmoid(usize),
    Log(usize),
    Concat(Vec<usize>),
    Sum(usize),
    L2Norm(usize),
    L2NormSq(usize),
    Row(usize, usize),
    Entry(usize, usize),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Constant | Op::Param => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulScalar(a, b)
            | Op::DivScalar(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::L2Norm(a)
            | Op::L2NormSq(a)
            | Op::Row(a, _)
            | Op::Entry(a, _) => vec![*a],
            Op::Concat(parts) => parts.clone(),
        }
    }

    /// Computes the output of a non-leaf op from the values of its inputs.
    fn forward<'a>(&self, value: impl Fn(usize) -> &'a Tensor) -> Result<Tensor> {
        let scalar_of = |id: usize, op: &'static str| -> Result<f64> {
            let s = value(id);
            if s.is_scalar() {
                Ok(s.data()[0])
            } else {
                Err(Error::shape(op, s.shape(), &[]))
            }
        };
        Ok(match self {
            Op::Constant | Op::Param => unreachable!("leaves have no forward rule"),
            Op::MatMul(a, b) => value(*a).matmul(value(*b))?,
            Op::Transpose(a) => value(*a).transpose()?,
            Op::Add(a, b) => value(*a).add(value(*b))?,
            Op::Sub(a, b) => value(*a).sub(value(*b))?,
            Op::Mul(a, b) => value(*a).mul(value(*b))?,
            Op::MulScalar(a, s) => {
                let s = scalar_of(*s, "mul_scalar")?;
                value(*a).scale(s)
            }
            Op::DivScalar(a, s) => {
                let s = scalar_of(*s, "div_scalar")?;
                if s == 0.0 {
                    return Err(Error::Numeric("division by zero".into()));
                }
                value(*a).map(|v| v / s)
            }
            Op::Scale(a, c) => value(*a).scale(*c),
            Op::Relu(a) => value(*a).relu(),
            Op::Softplus(a) => value(*a).map(softplus),
            Op::Sigmoid(a) => value(*a).map(sigmoid),
            Op::Log(a) => {
                let x = value(*a);
                if let Some(bad) = x.data().iter().find(|v| **v <= 0.0) {
                    return Err(Error::Numeric(format!("log of non-positive value {bad}")));
                }
                x.map(f64::ln)
            }
            Op::Concat(parts) => {
                let refs: Vec<&Tensor> = parts.iter().map(|p| value(*p)).collect();
                Tensor::concat(&refs)?
            }
            Op::Sum(a) => Tensor::scalar(value(*a).sum()),
            Op::L2Norm(a) => Tensor::scalar(value(*a).l2_norm()),
            Op::L2NormSq(a) => Tensor::scalar(value(*a).l2_norm_sq()),
            Op::Row(a, i) => {
                let x = value(*a);
                if x.rank() != 2 || *i >= x.rows() {
                    return Err(Error::Argument(format!(
                        "row {i} out of range for shape {:?}",
                        x.shape()
                    )));
                }
                Tensor::from_parts(vec![x.cols()], x.row(*i).to_vec())
            }
            Op::Entry(a, idx) => {
                let x = value(*a);
                if *idx >= x.len() {
                    return Err(Error::Argument(format!(
                        "flat index {idx} out of range for shape {:?}",
                        x.shape()
                    )));
                }
                Tensor::scalar(x.data()[*idx])
            }
        })
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records differentiable operations in execution order.
///
/// A tape is single-threaded; build one per forward pass and drop it after
/// [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<usize>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push_leaf(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = matches!(op, Op::Param);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Registers a differentiable parameter.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        let var = self.push_leaf(value, Op::Param);
        self.params.borrow_mut().push(var.id);
        var
    }

    /// Registers a value that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(value, Op::Constant)
    }

    fn record(&self, op: Op) -> Result<Var<'_>> {
        let (value, requires_grad) = {
            let nodes = self.nodes.borrow();
            let value = op.forward(|id| &nodes[id].value)?;
            let requires_grad = op.inputs().iter().any(|&i| nodes[i].requires_grad);
            (value, requires_grad)
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    pub fn value(&self, var: Var<'_>) -> Tensor {
        self.nodes.borrow()[var.id].value.clone()
    }

    /// Re-executes every recorded operation from the leaf values and returns
    /// the recomputed outputs in recording order.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<Tensor> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Constant | Op::Param => node.value.clone(),
                ref op => op.forward(|id| &values[id])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// True when [`Tape::replay`] reproduces every recorded value bit for bit.
    pub fn replay_matches(&self) -> Result<bool> {
        let replayed = self.replay()?;
        let nodes = self.nodes.borrow();
        Ok(replayed.iter().zip(nodes.iter()).all(|(r, n)| {
            r.shape() == n.value.shape()
                && r.data()
                    .iter()
                    .zip(n.value.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        }))
    }

    /// Reverse pass from a one-element output. Operations are visited in
    /// exact reverse recording order; gradient buffers start at zero on
    /// every call.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        assert!(
            std::ptr::eq(self, output.tape),
            "output belongs to another tape"
        );
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if !out.value.is_scalar() {
            return Err(Error::shape("backward", out.value.shape(), &[]));
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.id] = Some(Tensor::filled(out.value.shape(), 1.0));

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let val = |i: usize| &nodes[i].value;
            let wants = |i: usize| nodes[i].requires_grad;
            let mut contribs: Vec<(usize, Tensor)> = Vec::with_capacity(2);

            match &node.op {
                Op::Constant | Op::Param => {
                    grads[id] = Some(upstream);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        contribs.push((*a, upstream.matmul(&val(*b).transpose()?)?));
                    }
                    if wants(*b) {
                        contribs.push((*b, val(*a).transpose()?.matmul(&upstream)?));
                    }
                }
                Op::Transpose(a) => contribs.push((*a, upstream.transpose()?)),
                Op::Add(a, b) => {
                    contribs.push((*a, upstream.clone()));
                    contribs.push((*b, upstream));
                }
                Op::Sub(a, b) => {
                    contribs.push((*b, upstream.scale(-1.0)));
                    contribs.push((*a, upstream));
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        contribs.push((*a, upstream.mul(val(*b))?));
                    }
                    if wants(*b) {
                        contribs.push((*b, upstream.mul(val(*a))?));
                    }
                }
                Op::MulScalar(a, s) => {
                    let sv = val(*s).data()[0];
                    if wants(*a) {
                        contribs.push((*a, upstream.scale(sv)));
                    }
                    if wants(*s) {
                        let g = upstream.mul(val(*a))?.sum();
                        contribs.push((*s, Tensor::filled(val(*s).shape(), g)));
                    }
                }
                Op::DivScalar(a, s) => {
                    let sv = val(*s).data()[0];
                    if wants(*a) {
                        contribs.push((*a, upstream.map(|g| g / sv)));
                    }
                    if wants(*s) {
                        let g = -upstream.mul(val(*a))?.sum() / (sv * sv);
                        contribs.push((*s, Tensor::filled(val(*s).shape(), g)));
                    }
                }
                Op::Scale(a, c) => contribs.push((*a, upstream.scale(*c))),
                Op::Relu(a) => {
                    let mask = val(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    contribs.push((*a, upstream.mul(&mask)?));
                }
                Op::Softplus(a) => {
                    let slope = val(*a).map(sigmoid);
                    contribs.push((*a, upstream.mul(&slope)?));
                }
                Op::Sigmoid(_) => {
                    let a = node.op.inputs()[0];
                    let slope = node.value.map(|s| s * (1.0 - s));
                    contribs.push((a, upstream.mul(&slope)?));
                }
                Op::Log(a) => {
                    let inv = val(*a).map(|x| 1.0 / x);
                    contribs.push((*a, upstream.mul(&inv)?));
                }
                Op::Concat(parts) => {
                    let upstream_parts = split_last_axis(&upstream, parts.iter().map(|p| val(*p)))?;
                    contribs.extend(parts.iter().copied().zip(upstream_parts));
                }
                Op::Sum(a) => {
                    let g = upstream.data()[0];
                    contribs.push((*a, Tensor::filled(val(*a).shape(), g)));
                }
                Op::L2Norm(a) => {
                    let norm = node.value.data()[0];
                    let g = upstream.data()[0];
                    let grad = if norm == 0.0 {
                        Tensor::zeros(val(*a).shape())
                    } else {
                        val(*a).scale(g / norm)
                    };
                    contribs.push((*a, grad));
                }
                Op::L2NormSq(a) => {
                    let g = upstream.data()[0];
                    contribs.push((*a, val(*a).scale(2.0 * g)));
                }
                Op::Row(a, i) => {
                    let mut grad = Tensor::zeros(val(*a).shape());
                    let c = grad.cols();
                    grad.data_mut()[i * c..(i + 1) * c].copy_from_slice(upstream.data());
                    contribs.push((*a, grad));
                }
                Op::Entry(a, idx) => {
                    let mut grad = Tensor::zeros(val(*a).shape());
                    grad.data_mut()[*idx] = upstream.data()[0];
                    contribs.push((*a, grad));
                }
            }

            for (input, g) in contribs {
                if !wants(input) {
                    continue;
                }
                grads[input] = Some(match grads[input].take() {
                    Some(acc) => acc.add(&g)?,
                    None => g,
                });
            }
        }

        Ok(Gradients {
            grads,
            params: self.params.borrow().clone(),
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn split_last_axis<'a>(
    upstream: &Tensor,
    parts: impl Iterator<Item = &'a Tensor>,
) -> Result<Vec<Tensor>> {
    let parts: Vec<&Tensor> = parts.collect();
    let rows = if upstream.rank() == 2 {
        upstream.rows()
    } else {
        1
    };
    let mut out: Vec<Vec<f64>> = parts.iter().map(|p| Vec::with_capacity(p.len())).collect();
    for r in 0..rows {
        let row = if upstream.rank() == 2 {
            upstream.row(r)
        } else {
            upstream.data()
        };
        let mut offset = 0;
        for (buf, p) in out.iter_mut().zip(&parts) {
            let w = p.cols();
            buf.extend_from_slice(&row[offset..offset + w]);
            offset += w;
        }
    }
    Ok(out
        .into_iter()
        .zip(parts)
        .map(|(d, p)| Tensor::from_parts(p.shape().to_vec(), d))
        .collect())
}

/// Result of a reverse pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<usize>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the output with respect to `var`; zeros when the output
    /// does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.grads[var.id]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.id]))
    }

    /// Gradients for every registered parameter, in registration order.
    pub fn params(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|&id| {
                self.grads[id]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(&self.shapes[id]))
            })
            .collect()
    }
}

#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Value of a one-element variable.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.data()[0]
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "variables from different tapes"
        );
    }

    fn binary(self, other: Var<'t>, op: fn(usize, usize) -> Op) -> Result<Var<'t>> {
        self.same_tape(&other);
        self.tape.record(op(self.id, other.id))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::MatMul)
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        self.tape.record(Op::Transpose(self.id))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Sub)
    }

    /// Elementwise product of equally shaped variables.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Mul)
    }

    /// Multiplies every entry by the one-element variable `s`.
    pub fn mul_scalar(self, s: Var<'t>) -> Result<Var<'t>> {
        self.binary(s, Op::MulScalar)
    }

    /// Divides every entry by the one-element variable `s`.
    pub fn div_scalar(self, s: Var<'t>) -> Result<Var<'t>> {
        self.binary(s, Op::DivScalar)
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.tape.record(Op::Scale(self.id, c))
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.tape.record(Op::Relu(self.id))
    }

    /// Elementwise `ln(1 + e^x)`.
    pub fn softplus(self) -> Result<Var<'t>> {
        self.tape.record(Op::Softplus(self.id))
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.tape.record(Op::Sigmoid(self.id))
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.tape.record(Op::Log(self.id))
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.tape.record(Op::Sum(self.id))
    }

    pub fn l2_norm(self) -> Result<Var<'t>> {
        self.tape.record(Op::L2Norm(self.id))
    }

    pub fn l2_norm_sq(self) -> Result<Var<'t>> {
        self.tape.record(Op::L2NormSq(self.id))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(self, i: usize) -> Result<Var<'t>> {
        self.tape.record(Op::Row(self.id, i))
    }

    /// Entry `(i, j)` of a matrix, as a scalar.
    pub fn entry(self, i: usize, j: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 2 || i >= shape[0] || j >= shape[1] {
            return Err(Error::Argument(format!(
                "entry ({i}, {j}) out of range for shape {shape:?}"
            )));
        }
        self.tape.record(Op::Entry(self.id, i * shape[1] + j))
    }

    /// Lays the parts end to end along their last axis.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("concat of an empty list".into()))?;
        for p in parts {
            first.same_tape(p);
        }
        first
            .tape
            .record(Op::Concat(parts.iter().map(|p| p.id).collect()))
    }

    /// Sum of a non-empty list of equally shaped variables.
    pub fn add_all(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let (first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::Argument("sum of an empty list".into()))?;
        rest.iter().try_fold(*first, |acc, p| acc.add(*p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
        let mut g = Tensor::zeros(x.shape());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![1.0, -2.0, 3.5]).unwrap());
        let out = p.sum().unwrap();
        let g = tape.backward(out).unwrap();
        assert_eq!(g.wrt(p).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn squared_norm_gradient_is_twice_input() {
        let tape = Tape::new();
        let x = Tensor::vector(vec![0.5, -1.5, 2.0]).unwrap();
        let p = tape.param(x.clone());
        let g = tape.backward(p.l2_norm_sq().unwrap()).unwrap();
        assert_eq!(g.wrt(p), x.scale(2.0));
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        let x = Tensor::vector(vec![-1.0, 2.0]).unwrap();
        let tape = Tape::new();
        let p = tape.param(x.clone());
        let g = tape.backward(p.relu().unwrap().sum().unwrap()).unwrap();
        let numeric = central_diff(|t| t.relu().sum(), &x, 1e-5);
        assert_eq!(g.wrt(p).data(), &[0.0, 1.0]);
        assert!(g.wrt(p).max_abs_diff(&numeric).unwrap() < 1e-9);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![0.0]).unwrap());
        let g = tape.backward(p.relu().unwrap().sum().unwrap()).unwrap();
        assert_eq!(g.wrt(p).data(), &[0.0]);
    }

    #[test]
    fn norm_gradient_at_zero_is_zero() {
        let tape = Tape::new();
        let p = tape.param(Tensor::zeros(&[3]));
        let g = tape.backward(p.l2_norm().unwrap()).unwrap();
        assert_eq!(g.wrt(p), Tensor::zeros(&[3]));
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let tape = Tape::new();
        let p = tape.param(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(p), Err(Error::Shape { .. })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let p = tape.param(Tensor::vector(vec![3.0, 4.0]).unwrap());
        let out = c.mul(p).unwrap().sum().unwrap();
        let g = tape.backward(out).unwrap();
        assert_eq!(g.wrt(p).data(), &[1.0, 2.0]);
        assert_eq!(g.wrt(c), Tensor::zeros(&[2]));
        assert_eq!(g.params().len(), 1);
    }

    #[test]
    fn repeated_backward_starts_from_zero() {
        let tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let out = p.l2_norm_sq().unwrap();
        let first = tape.backward(out).unwrap().wrt(p);
        let second = tape.backward(out).unwrap().wrt(p);
        assert_eq!(first, second);
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let a0 = Tensor::from_rows(&[vec![0.3, -1.2, 0.7], vec![1.1, 0.4, -0.6]]).unwrap();
        let b0 = Tensor::from_rows(&[vec![0.5, -0.2], vec![0.9, 1.3], vec![-0.4, 0.8]]).unwrap();
        let s0 = Tensor::scalar(1.7);

        // Touches every primitive; log only sees softplus outputs.
        fn composite<'t>(a: Var<'t>, b: Var<'t>, s: Var<'t>) -> Result<Var<'t>> {
            let ab = a.matmul(b)?; // 2x2
            let abt = ab.transpose()?.relu()?;
            let mixed = ab.add(abt)?.sub(ab.scale(0.3)?)?.mul(ab)?;
            let scaled = mixed.mul_scalar(s)?.div_scalar(s.l2_norm_sq()?)?;
            let heads = Var::concat(&[scaled, ab.sigmoid()?])?;
            let r = heads.row(1)?;
            let e = a.entry(0, 2)?;
            let lg = heads.softplus()?.log()?.sum()?;
            let total =
                Var::add_all(&[r.l2_norm()?, e.mul(e)?, lg, heads.l2_norm_sq()?.scale(0.1)?])?;
            Ok(total)
        }

        let eval = |a: &Tensor, b: &Tensor, s: &Tensor| -> f64 {
            let tape = Tape::new();
            let out = composite(
                tape.constant(a.clone()),
                tape.constant(b.clone()),
                tape.constant(s.clone()),
            )
            .unwrap();
            out.item()
        };

        let tape = Tape::new();
        let (a, b, s) = (
            tape.param(a0.clone()),
            tape.param(b0.clone()),
            tape.param(s0.clone()),
        );
        let out = composite(a, b, s).unwrap();
        let g = tape.backward(out).unwrap();
        assert!(tape.replay_matches().unwrap());

        let h = 1e-6;
        let na = central_diff(|x| eval(x, &b0, &s0), &a0, h);
        let nb = central_diff(|x| eval(&a0, x, &s0), &b0, h);
        let ns = central_diff(|x| eval(&a0, &b0, x), &s0, h);
        for (analytic, numeric) in [(g.wrt(a), na), (g.wrt(b), nb), (g.wrt(s), ns)] {
            for (x, y) in analytic.data().iter().zip(numeric.data()) {
                let denom = x.abs().max(y.abs()).max(1e-8);
                assert!((x - y).abs() / denom < 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn backward_visits_reverse_order_and_replay_is_bit_identical() {
        let tape = Tape::new();
        let w = tape.param(Tensor::from_rows(&[vec![0.1, 0.2], vec![-0.3, 0.4]]).unwrap());
        let x = tape.constant(Tensor::from_rows(&[vec![1.0], vec![-1.0]]).unwrap());
        let y = w.matmul(x).unwrap().relu().unwrap().sum().unwrap();
        assert!(tape.replay_matches().unwrap());
        let replayed = tape.replay().unwrap();
        assert_eq!(replayed.last().unwrap(), &y.value());
    }

    #[test]
    fn log_of_non_positive_is_a_numeric_error() {
        let tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![1.0, 0.0]).unwrap());
        assert!(matches!(p.log(), Err(Error::Numeric(_))));
    }
}
