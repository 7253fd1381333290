use super::tensor::Tensor;
use crate::error::Result;

/// The operation vocabulary shared by every evaluation mode.
///
/// Model and loss code is written once against this trait and then run
/// plainly ([`Eval`]), recorded for reverse mode ([`super::Tape`]), pushed
/// forward with tangents ([`super::Dual`]), or both at once
/// (`Dual<&Tape>`, reverse-over-forward).
///
/// Every method fails with [`crate::FieldError::NonFinite`] as soon as a
/// produced value is NaN or infinite.
pub trait Ops {
    type V: Clone;

    /// Untracked input.
    fn constant(&self, t: Tensor) -> Result<Self::V>;
    /// Trainable parameter. Modes without gradients treat it as a constant.
    fn param(&self, name: &str, t: Tensor) -> Result<Self::V>;
    /// Primal value.
    fn value(&self, v: &Self::V) -> Tensor;
    fn shape(&self, v: &Self::V) -> Vec<usize>;

    fn matmul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// Broadcast-add a `[1,n]` row to each row of `a`.
    fn add_row(&self, a: &Self::V, row: &Self::V) -> Result<Self::V>;
    fn scale(&self, a: &Self::V, s: f64) -> Result<Self::V>;
    fn add_scalar(&self, a: &Self::V, s: f64) -> Result<Self::V>;
    fn tanh(&self, a: &Self::V) -> Result<Self::V>;
    fn exp(&self, a: &Self::V) -> Result<Self::V>;
    fn log_softmax(&self, a: &Self::V) -> Result<Self::V>;
    fn concat_cols(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn slice_cols(&self, a: &Self::V, start: usize, end: usize) -> Result<Self::V>;
    /// Sum of all entries as `[1,1]`.
    fn sum(&self, a: &Self::V) -> Result<Self::V>;
    /// `[m,n] -> [m,1]`.
    fn sum_rows(&self, a: &Self::V) -> Result<Self::V>;
    /// `[m,1] -> [m,n]`.
    fn broadcast_cols(&self, a: &Self::V, n: usize) -> Result<Self::V>;
    fn reshape(&self, a: &Self::V, shape: &[usize]) -> Result<Self::V>;
    /// Periodic stencil gather, see [`Tensor::neighbors`].
    fn neighbors(&self, a: &Self::V, radius: usize) -> Result<Self::V>;

    fn square(&self, a: &Self::V) -> Result<Self::V> {
        self.mul(a, a)
    }

    fn mean(&self, a: &Self::V) -> Result<Self::V> {
        let n: usize = self.shape(a).iter().product();
        let s = self.sum(a)?;
        self.scale(&s, 1.0 / n as f64)
    }

    fn zeros_like(&self, a: &Self::V) -> Result<Self::V> {
        self.constant(Tensor::zeros(&self.shape(a)))
    }
}

/// Plain evaluation: values only.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eval;

impl Ops for Eval {
    type V = Tensor;

    fn constant(&self, t: Tensor) -> Result<Tensor> {
        t.ensure_finite("constant")
    }
    fn param(&self, _name: &str, t: Tensor) -> Result<Tensor> {
        t.ensure_finite("param")
    }
    fn value(&self, v: &Tensor) -> Tensor {
        v.clone()
    }
    fn shape(&self, v: &Tensor) -> Vec<usize> {
        v.shape().to_vec()
    }
    fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.matmul(b)?.ensure_finite("matmul")
    }
    fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.add(b)?.ensure_finite("add")
    }
    fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.sub(b)?.ensure_finite("sub")
    }
    fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.mul(b)?.ensure_finite("mul")
    }
    fn add_row(&self, a: &Tensor, row: &Tensor) -> Result<Tensor> {
        a.add_row(row)?.ensure_finite("add_row")
    }
    fn scale(&self, a: &Tensor, s: f64) -> Result<Tensor> {
        a.scale(s).ensure_finite("scale")
    }
    fn add_scalar(&self, a: &Tensor, s: f64) -> Result<Tensor> {
        a.map(|v| v + s).ensure_finite("add_scalar")
    }
    fn tanh(&self, a: &Tensor) -> Result<Tensor> {
        a.map(f64::tanh).ensure_finite("tanh")
    }
    fn exp(&self, a: &Tensor) -> Result<Tensor> {
        a.map(f64::exp).ensure_finite("exp")
    }
    fn log_softmax(&self, a: &Tensor) -> Result<Tensor> {
        a.log_softmax()?.ensure_finite("log_softmax")
    }
    fn concat_cols(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.concat_cols(b)
    }
    fn slice_cols(&self, a: &Tensor, start: usize, end: usize) -> Result<Tensor> {
        a.slice_cols(start, end)
    }
    fn sum(&self, a: &Tensor) -> Result<Tensor> {
        Tensor::scalar(a.sum()).ensure_finite("sum")
    }
    fn sum_rows(&self, a: &Tensor) -> Result<Tensor> {
        a.sum_rows()?.ensure_finite("sum_rows")
    }
    fn broadcast_cols(&self, a: &Tensor, n: usize) -> Result<Tensor> {
        a.broadcast_cols(n)
    }
    fn reshape(&self, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
        a.reshape(shape)
    }
    fn neighbors(&self, a: &Tensor, radius: usize) -> Result<Tensor> {
        a.neighbors(radius)
    }
}
