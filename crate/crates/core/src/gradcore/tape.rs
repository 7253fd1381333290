use std::cell::RefCell;

use super::ops::Ops;
use super::tensor::Tensor;
use crate::error::{invalid, shape_err, FieldError, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const,
    Param,
    Input,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    Tanh(usize),
    Exp(usize),
    LogSoftmax(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    Sum(usize),
    SumRows(usize),
    BroadcastCols(usize, usize),
    Reshape(usize),
    Neighbors(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "constant",
            Op::Param => "param",
            Op::Input => "input",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::LogSoftmax(_) => "log_softmax",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::Sum(_) => "sum",
            Op::SumRows(_) => "sum_rows",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::Reshape(_) => "reshape",
            Op::Neighbors(..) => "neighbors",
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match *self {
            Op::Const | Op::Param | Op::Input => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::ConcatCols(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::LogSoftmax(a)
            | Op::SliceCols(a, _, _)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::BroadcastCols(a, _)
            | Op::Reshape(a)
            | Op::Neighbors(a, _) => vec![a],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Forward kernel shared by recording and replay, so a replay is bit-exact.
fn compute(op: &Op, value: impl Fn(usize) -> Tensor, shape_hint: &[usize]) -> Result<Tensor> {
    let out = match *op {
        Op::Const | Op::Param | Op::Input => unreachable!("leaves are not recomputed"),
        Op::MatMul(a, b) => value(a).matmul(&value(b))?,
        Op::Add(a, b) => value(a).add(&value(b))?,
        Op::Sub(a, b) => value(a).sub(&value(b))?,
        Op::Mul(a, b) => value(a).mul(&value(b))?,
        Op::AddRow(a, b) => value(a).add_row(&value(b))?,
        Op::Scale(a, s) => value(a).scale(s),
        Op::AddScalar(a, s) => value(a).map(|v| v + s),
        Op::Tanh(a) => value(a).map(f64::tanh),
        Op::Exp(a) => value(a).map(f64::exp),
        Op::LogSoftmax(a) => value(a).log_softmax()?,
        Op::ConcatCols(a, b) => value(a).concat_cols(&value(b))?,
        Op::SliceCols(a, s, e) => value(a).slice_cols(s, e)?,
        Op::Sum(a) => Tensor::scalar(value(a).sum()),
        Op::SumRows(a) => value(a).sum_rows()?,
        Op::BroadcastCols(a, n) => value(a).broadcast_cols(n)?,
        Op::Reshape(a) => value(a).reshape(shape_hint)?,
        Op::Neighbors(a, r) => value(a).neighbors(r)?,
    };
    out.ensure_finite(op.name())
}

/// Reverse-mode recording of a computation over [`Tensor`] values.
///
/// A tape is single-writer; build a fresh one per loss evaluation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<(String, usize)>>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Grads {
    /// Gradient for `v`; zeros if `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
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

    fn push(&self, value: Tensor, op: Op) -> Var {
        let needs_grad = match op {
            Op::Const => false,
            Op::Param | Op::Input => true,
            _ => {
                let nodes = self.nodes.borrow();
                op.inputs().iter().any(|&i| nodes[i].needs_grad)
            }
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(nodes.len() - 1)
    }

    fn record(&self, op: Op, shape_hint: &[usize]) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            compute(&op, |i| nodes[i].value.clone(), shape_hint)?
        };
        Ok(self.push(value, op))
    }

    /// Untracked leaf that still receives a gradient (e.g. a hidden state
    /// whose vector-Jacobian product is wanted).
    pub fn input(&self, t: Tensor) -> Result<Var> {
        let t = t.ensure_finite("input")?;
        Ok(self.push(t, Op::Input))
    }

    pub fn var_value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.item()
    }

    /// Names of registered parameters, in registration order.
    pub fn param_names(&self) -> Vec<String> {
        self.params
            .borrow()
            .iter()
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Recomputes every non-leaf node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let nodes = self.nodes.borrow();
        let mut out: Vec<Tensor> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Const | Op::Param | Op::Input => node.value.clone(),
                ref op => compute(op, |i| out[i].clone(), node.value.shape())?,
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let nodes = self.nodes.borrow();
        let lv = &nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(shape_err(
                "grad",
                format!("loss must be scalar, got {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], nodes: &[Node], i: usize, g: Tensor) -> Result<()> {
            if !nodes[i].needs_grad {
                return Ok(());
            }
            match &mut grads[i] {
                Some(existing) => existing.add_assign(&g)?,
                slot @ None => *slot = Some(g),
            }
            Ok(())
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match node.op {
                Op::Const => {}
                Op::Param | Op::Input => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(&nodes[b].value)?;
                    let gb = nodes[a].value.matmul_tn(&g)?;
                    acc(&mut grads, &nodes, a, ga)?;
                    acc(&mut grads, &nodes, b, gb)?;
                }
                Op::Add(a, b) => {
                    acc(&mut grads, &nodes, a, g.clone())?;
                    acc(&mut grads, &nodes, b, g)?;
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &nodes, a, g.clone())?;
                    acc(&mut grads, &nodes, b, g.scale(-1.0))?;
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(&nodes[b].value)?;
                    let gb = g.mul(&nodes[a].value)?;
                    acc(&mut grads, &nodes, a, ga)?;
                    acc(&mut grads, &nodes, b, gb)?;
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_cols()?.reshape(nodes[b].value.shape())?;
                    acc(&mut grads, &nodes, a, g)?;
                    acc(&mut grads, &nodes, b, gb)?;
                }
                Op::Scale(a, s) => acc(&mut grads, &nodes, a, g.scale(s))?,
                Op::AddScalar(a, _) => acc(&mut grads, &nodes, a, g)?,
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, "tanh_back", |g, y| g * (1.0 - y * y))?;
                    acc(&mut grads, &nodes, a, ga)?;
                }
                Op::Exp(a) => {
                    let ga = g.mul(&node.value)?;
                    acc(&mut grads, &nodes, a, ga)?;
                }
                Op::LogSoftmax(a) => {
                    let soft = node.value.map(f64::exp);
                    let cols = g.cols();
                    let rs = g.sum_rows()?.broadcast_cols(cols)?;
                    let ga = g.sub(&soft.mul(&rs)?)?;
                    acc(&mut grads, &nodes, a, ga)?;
                }
                Op::ConcatCols(a, b) => {
                    let wa = nodes[a].value.cols();
                    let wb = nodes[b].value.cols();
                    acc(&mut grads, &nodes, a, g.slice_cols(0, wa)?)?;
                    acc(&mut grads, &nodes, b, g.slice_cols(wa, wa + wb)?)?;
                }
                Op::SliceCols(a, s, e) => {
                    let src = &nodes[a].value;
                    let (m, n) = src.dims2("slice_cols_back")?;
                    let mut out = Tensor::zeros(&[m, n]);
                    let w = e - s;
                    for r in 0..m {
                        for c in 0..w {
                            out.set(r, s + c, g.get(r, c));
                        }
                    }
                    acc(&mut grads, &nodes, a, out)?;
                }
                Op::Sum(a) => {
                    let ga = Tensor::full(nodes[a].value.shape(), g.item());
                    acc(&mut grads, &nodes, a, ga)?;
                }
                Op::SumRows(a) => {
                    let ga = g.broadcast_cols(nodes[a].value.cols())?;
                    acc(&mut grads, &nodes, a, ga)?;
                }
                Op::BroadcastCols(a, _) => acc(&mut grads, &nodes, a, g.sum_rows()?)?,
                Op::Reshape(a) => {
                    let ga = g.reshape(nodes[a].value.shape())?;
                    acc(&mut grads, &nodes, a, ga)?;
                }
                Op::Neighbors(a, r) => {
                    let (b, n) = nodes[a].value.dims2("neighbors_back")?;
                    acc(
                        &mut grads,
                        &nodes,
                        a,
                        Tensor::neighbors_adjoint(&g, b, n, r)?,
                    )?;
                }
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Grads { grads, shapes })
    }

    /// Flat gradient over all registered parameters, in registration order.
    pub fn grad(&self, loss: Var) -> Result<Tensor> {
        let grads = self.backward(loss)?;
        let mut flat = Vec::new();
        for (_, idx) in self.params.borrow().iter() {
            flat.extend_from_slice(grads.wrt(Var(*idx)).data());
        }
        if flat.is_empty() {
            return Err(invalid("grad: no registered parameters"));
        }
        Tensor::vector(flat)
    }

    /// Gradient of `loss` with respect to one named parameter.
    pub fn grad_of(&self, loss: Var, name: &str) -> Result<Tensor> {
        let idx = self
            .params
            .borrow()
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, i)| *i)
            .ok_or_else(|| FieldError::UnregisteredParameter(name.to_string()))?;
        Ok(self.backward(loss)?.wrt(Var(idx)))
    }
}

impl Ops for Tape {
    type V = Var;

    fn constant(&self, t: Tensor) -> Result<Var> {
        let t = t.ensure_finite("constant")?;
        Ok(self.push(t, Op::Const))
    }

    fn param(&self, name: &str, t: Tensor) -> Result<Var> {
        if self.params.borrow().iter().any(|(n, _)| n == name) {
            return Err(invalid(format!("parameter `{name}` registered twice")));
        }
        let t = t.ensure_finite("param")?;
        let v = self.push(t, Op::Param);
        self.params.borrow_mut().push((name.to_string(), v.0));
        Ok(v)
    }

    fn value(&self, v: &Var) -> Tensor {
        self.var_value(*v)
    }

    fn shape(&self, v: &Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    fn matmul(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::MatMul(a.0, b.0), &[])
    }
    fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::Add(a.0, b.0), &[])
    }
    fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::Sub(a.0, b.0), &[])
    }
    fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::Mul(a.0, b.0), &[])
    }
    fn add_row(&self, a: &Var, row: &Var) -> Result<Var> {
        self.record(Op::AddRow(a.0, row.0), &[])
    }
    fn scale(&self, a: &Var, s: f64) -> Result<Var> {
        self.record(Op::Scale(a.0, s), &[])
    }
    fn add_scalar(&self, a: &Var, s: f64) -> Result<Var> {
        self.record(Op::AddScalar(a.0, s), &[])
    }
    fn tanh(&self, a: &Var) -> Result<Var> {
        self.record(Op::Tanh(a.0), &[])
    }
    fn exp(&self, a: &Var) -> Result<Var> {
        self.record(Op::Exp(a.0), &[])
    }
    fn log_softmax(&self, a: &Var) -> Result<Var> {
        self.record(Op::LogSoftmax(a.0), &[])
    }
    fn concat_cols(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record(Op::ConcatCols(a.0, b.0), &[])
    }
    fn slice_cols(&self, a: &Var, start: usize, end: usize) -> Result<Var> {
        self.record(Op::SliceCols(a.0, start, end), &[])
    }
    fn sum(&self, a: &Var) -> Result<Var> {
        self.record(Op::Sum(a.0), &[])
    }
    fn sum_rows(&self, a: &Var) -> Result<Var> {
        self.record(Op::SumRows(a.0), &[])
    }
    fn broadcast_cols(&self, a: &Var, n: usize) -> Result<Var> {
        self.record(Op::BroadcastCols(a.0, n), &[])
    }
    fn reshape(&self, a: &Var, shape: &[usize]) -> Result<Var> {
        self.record(Op::Reshape(a.0), shape)
    }
    fn neighbors(&self, a: &Var, radius: usize) -> Result<Var> {
        self.record(Op::Neighbors(a.0, radius), &[])
    }
}
