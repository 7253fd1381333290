use super::ops::{Eval, Ops};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// A value with an optional tangent; `None` stands for an exactly-zero
/// tangent so constants and parameters cost nothing in forward mode.
#[derive(Clone, Debug)]
pub struct DualV<V> {
    pub value: V,
    pub tangent: Option<V>,
}

/// Forward-mode directional derivative of a plain tensor computation.
pub type DualTensor = DualV<Tensor>;

/// Forward-mode layer over any [`Ops`]. Over [`Eval`] this yields plain
/// Jacobian-vector products; over a [`super::Tape`] the tangent itself is
/// recorded, so the reverse sweep differentiates JVPs (reverse-over-forward).
#[derive(Clone, Copy, Debug)]
pub struct Dual<'a, O: Ops> {
    inner: &'a O,
}

impl<'a, O: Ops> Dual<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        Dual { inner }
    }

    pub fn inner(&self) -> &'a O {
        self.inner
    }

    /// Seeds a value with tangent `t`.
    pub fn seed(&self, value: O::V, tangent: O::V) -> Result<DualV<O::V>> {
        if self.inner.shape(&value) != self.inner.shape(&tangent) {
            return Err(shape_err(
                "jvp",
                format!(
                    "tangent {:?} vs value {:?}",
                    self.inner.shape(&tangent),
                    self.inner.shape(&value)
                ),
            ));
        }
        Ok(DualV {
            value,
            tangent: Some(tangent),
        })
    }

    pub fn lift(&self, value: O::V) -> DualV<O::V> {
        DualV {
            value,
            tangent: None,
        }
    }

    /// Tangent of `v`, materialising zeros when it is structurally zero.
    pub fn tangent_of(&self, v: &DualV<O::V>) -> Result<O::V> {
        match &v.tangent {
            Some(t) => Ok(t.clone()),
            None => self.inner.zeros_like(&v.value),
        }
    }

    fn unary_linear(
        &self,
        a: &DualV<O::V>,
        f: impl Fn(&O::V) -> Result<O::V>,
    ) -> Result<DualV<O::V>> {
        Ok(DualV {
            value: f(&a.value)?,
            tangent: a.tangent.as_ref().map(&f).transpose()?,
        })
    }

    fn binary_linear(
        &self,
        a: &DualV<O::V>,
        b: &DualV<O::V>,
        f: impl Fn(&O::V, &O::V) -> Result<O::V>,
    ) -> Result<DualV<O::V>> {
        let value = f(&a.value, &b.value)?;
        let tangent = match (&a.tangent, &b.tangent) {
            (None, None) => None,
            (Some(ta), Some(tb)) => Some(f(ta, tb)?),
            (Some(ta), None) => Some(f(ta, &self.inner.zeros_like(&b.value)?)?),
            (None, Some(tb)) => Some(f(&self.inner.zeros_like(&a.value)?, tb)?),
        };
        Ok(DualV { value, tangent })
    }
}

impl<'a, O: Ops> Ops for Dual<'a, O> {
    type V = DualV<O::V>;

    fn constant(&self, t: Tensor) -> Result<Self::V> {
        Ok(self.lift(self.inner.constant(t)?))
    }

    fn param(&self, name: &str, t: Tensor) -> Result<Self::V> {
        Ok(self.lift(self.inner.param(name, t)?))
    }

    fn value(&self, v: &Self::V) -> Tensor {
        self.inner.value(&v.value)
    }

    fn shape(&self, v: &Self::V) -> Vec<usize> {
        self.inner.shape(&v.value)
    }

    fn matmul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let value = o.matmul(&a.value, &b.value)?;
        let left = a
            .tangent
            .as_ref()
            .map(|ta| o.matmul(ta, &b.value))
            .transpose()?;
        let right = b
            .tangent
            .as_ref()
            .map(|tb| o.matmul(&a.value, tb))
            .transpose()?;
        let tangent = match (left, right) {
            (Some(l), Some(r)) => Some(o.add(&l, &r)?),
            (l, r) => l.or(r),
        };
        Ok(DualV { value, tangent })
    }

    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let value = o.add(&a.value, &b.value)?;
        let tangent = match (&a.tangent, &b.tangent) {
            (Some(ta), Some(tb)) => Some(o.add(ta, tb)?),
            (Some(t), None) | (None, Some(t)) => Some(t.clone()),
            (None, None) => None,
        };
        Ok(DualV { value, tangent })
    }

    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let value = o.sub(&a.value, &b.value)?;
        let tangent = match (&a.tangent, &b.tangent) {
            (Some(ta), Some(tb)) => Some(o.sub(ta, tb)?),
            (Some(t), None) => Some(t.clone()),
            (None, Some(t)) => Some(o.scale(t, -1.0)?),
            (None, None) => None,
        };
        Ok(DualV { value, tangent })
    }

    fn mul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let value = o.mul(&a.value, &b.value)?;
        let left = a
            .tangent
            .as_ref()
            .map(|ta| o.mul(ta, &b.value))
            .transpose()?;
        let right = b
            .tangent
            .as_ref()
            .map(|tb| o.mul(&a.value, tb))
            .transpose()?;
        let tangent = match (left, right) {
            (Some(l), Some(r)) => Some(o.add(&l, &r)?),
            (l, r) => l.or(r),
        };
        Ok(DualV { value, tangent })
    }

    fn add_row(&self, a: &Self::V, row: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let value = o.add_row(&a.value, &row.value)?;
        let tangent = match (&a.tangent, &row.tangent) {
            (Some(ta), Some(tr)) => Some(o.add_row(ta, tr)?),
            (Some(ta), None) => Some(ta.clone()),
            (None, Some(tr)) => Some(o.add_row(&o.zeros_like(&a.value)?, tr)?),
            (None, None) => None,
        };
        Ok(DualV { value, tangent })
    }

    fn scale(&self, a: &Self::V, s: f64) -> Result<Self::V> {
        self.unary_linear(a, |v| self.inner.scale(v, s))
    }

    fn add_scalar(&self, a: &Self::V, s: f64) -> Result<Self::V> {
        Ok(DualV {
            value: self.inner.add_scalar(&a.value, s)?,
            tangent: a.tangent.clone(),
        })
    }

    fn tanh(&self, a: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let y = o.tanh(&a.value)?;
        let tangent = match &a.tangent {
            Some(t) => {
                let y2 = o.mul(&y, &y)?;
                let deriv = o.add_scalar(&o.scale(&y2, -1.0)?, 1.0)?;
                Some(o.mul(t, &deriv)?)
            }
            None => None,
        };
        Ok(DualV { value: y, tangent })
    }

    fn exp(&self, a: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let y = o.exp(&a.value)?;
        let tangent = a.tangent.as_ref().map(|t| o.mul(t, &y)).transpose()?;
        Ok(DualV { value: y, tangent })
    }

    fn log_softmax(&self, a: &Self::V) -> Result<Self::V> {
        let o = self.inner;
        let y = o.log_softmax(&a.value)?;
        let tangent = match &a.tangent {
            Some(t) => {
                let n = o.shape(&a.value)[1];
                let p = o.exp(&y)?;
                let avg = o.broadcast_cols(&o.sum_rows(&o.mul(&p, t)?)?, n)?;
                Some(o.sub(t, &avg)?)
            }
            None => None,
        };
        Ok(DualV { value: y, tangent })
    }

    fn concat_cols(&self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        self.binary_linear(a, b, |x, y| self.inner.concat_cols(x, y))
    }

    fn slice_cols(&self, a: &Self::V, start: usize, end: usize) -> Result<Self::V> {
        self.unary_linear(a, |v| self.inner.slice_cols(v, start, end))
    }

    fn sum(&self, a: &Self::V) -> Result<Self::V> {
        self.unary_linear(a, |v| self.inner.sum(v))
    }

    fn sum_rows(&self, a: &Self::V) -> Result<Self::V> {
        self.unary_linear(a, |v| self.inner.sum_rows(v))
    }

    fn broadcast_cols(&self, a: &Self::V, n: usize) -> Result<Self::V> {
        self.unary_linear(a, |v| self.inner.broadcast_cols(v, n))
    }

    fn reshape(&self, a: &Self::V, shape: &[usize]) -> Result<Self::V> {
        self.unary_linear(a, |v| self.inner.reshape(v, shape))
    }

    fn neighbors(&self, a: &Self::V, radius: usize) -> Result<Self::V> {
        self.unary_linear(a, |v| self.inner.neighbors(v, radius))
    }
}

/// Forward-mode over plain evaluation.
pub fn forward_mode() -> Dual<'static, Eval> {
    static EVAL: Eval = Eval;
    Dual::new(&EVAL)
}
