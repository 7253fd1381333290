use serde::{Deserialize, Serialize};

use crate::error::{invalid, FieldError, Result};
use crate::gradcore::{Ops, Tensor};

/// Flat parameter vector θ with a named-shape layout.
///
/// The flat order equals the layout order, which is also the order in which
/// parameters are registered on a tape, so `Tape::grad` lines up with θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    layout: Vec<(String, Vec<usize>)>,
    theta: Vec<f64>,
}

impl ParamSet {
    pub fn from_tensors(named: Vec<(String, Tensor)>) -> Self {
        let mut layout = Vec::with_capacity(named.len());
        let mut theta = Vec::new();
        for (name, t) in named {
            layout.push((name, t.shape().to_vec()));
            theta.extend_from_slice(t.data());
        }
        ParamSet { layout, theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.layout.iter().map(|(n, _)| n.as_str())
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(invalid(format!(
                "theta has {} entries, layout needs {}",
                theta.len(),
                self.theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite { op: "set_theta" });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    /// `θ ← θ + s·d`.
    pub fn axpy(&mut self, s: f64, d: &[f64]) -> Result<()> {
        if d.len() != self.theta.len() {
            return Err(invalid("update length differs from theta"));
        }
        for (t, v) in self.theta.iter_mut().zip(d) {
            *t += s * v;
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite { op: "axpy" });
        }
        Ok(())
    }

    fn offset(&self, name: &str) -> Option<(usize, &[usize])> {
        let mut off = 0;
        for (n, shape) in &self.layout {
            let len: usize = shape.iter().product();
            if n == name {
                return Some((off, shape));
            }
            off += len;
        }
        None
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        let (off, shape) = self
            .offset(name)
            .ok_or_else(|| FieldError::UnregisteredParameter(name.to_string()))?;
        let len: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), self.theta[off..off + len].to_vec())
    }

    pub fn set(&mut self, name: &str, t: &Tensor) -> Result<()> {
        let (off, shape) = self
            .offset(name)
            .ok_or_else(|| FieldError::UnregisteredParameter(name.to_string()))?;
        if shape != t.shape() {
            return Err(crate::error::shape_err(
                "ParamSet::set",
                format!("{name} is {shape:?}, got {:?}", t.shape()),
            ));
        }
        self.theta[off..off + t.len()].copy_from_slice(t.data());
        Ok(())
    }

    pub fn tensors(&self) -> Vec<(String, Tensor)> {
        let mut off = 0;
        self.layout
            .iter()
            .map(|(n, shape)| {
                let len: usize = shape.iter().product();
                let t = Tensor::new(shape.clone(), self.theta[off..off + len].to_vec())
                    .expect("layout is consistent");
                off += len;
                (n.clone(), t)
            })
            .collect()
    }

    /// Binds every tensor as a trainable parameter of `ops`.
    pub fn bind<O: Ops>(&self, ops: &O) -> Result<Vec<O::V>> {
        self.tensors()
            .into_iter()
            .map(|(n, t)| ops.param(&n, t))
            .collect()
    }

    /// Binds every tensor as a constant (frozen copy).
    pub fn bind_frozen<O: Ops>(&self, ops: &O) -> Result<Vec<O::V>> {
        self.tensors()
            .into_iter()
            .map(|(_, t)| ops.constant(t))
            .collect()
    }

    /// Index of `name` in the layout.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layout.iter().position(|(n, _)| n == name)
    }
}
