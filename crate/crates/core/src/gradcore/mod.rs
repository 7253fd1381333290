//! Dense tensors, reverse-mode tape, forward-mode duals and the seeded RNG.
//!
//! All arithmetic is `f64`. Non-finite results surface as
//! [`FieldError::NonFinite`](crate::FieldError::NonFinite) at the op that
//! produced them.

mod dual;
mod ops;
mod rng;
mod tape;
mod tensor;

pub use dual::{forward_mode, Dual, DualTensor, DualV};
pub use ops::{Eval, Ops};
pub use rng::Rng;
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

use crate::error::{shape_err, Result};

/// A function `x -> f_θ(x)` written against [`Ops`], with named parameters.
pub trait Traced {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }

    fn apply<O: Ops>(&self, ops: &O, params: &[O::V], x: &O::V) -> Result<O::V>;
}

fn bind<O: Ops, F: Traced>(ops: &O, f: &F) -> Result<Vec<O::V>> {
    f.parameters()
        .into_iter()
        .map(|(name, t)| ops.param(&name, t))
        .collect()
}

/// Directional derivative `(∂f/∂x) v` by a dual-number forward pass.
pub fn jvp<F: Traced>(f: &F, x: &Tensor, v: &Tensor) -> Result<Tensor> {
    if x.shape() != v.shape() {
        return Err(shape_err(
            "jvp",
            format!("v {:?} vs x {:?}", v.shape(), x.shape()),
        ));
    }
    let dual = forward_mode();
    let params = bind(&dual, f)?;
    let xd = dual.seed(x.clone(), v.clone())?;
    let y = f.apply(&dual, &params, &xd)?;
    dual.tangent_of(&y)
}

/// `∇θ ‖J v‖²`, recorded as a tape over dual values and swept in reverse.
pub fn grad_of_jvp<F: Traced>(f: &F, x: &Tensor, v: &Tensor) -> Result<Tensor> {
    if x.shape() != v.shape() {
        return Err(shape_err(
            "grad_of_jvp",
            format!("v {:?} vs x {:?}", v.shape(), x.shape()),
        ));
    }
    let tape = Tape::new();
    let dual = Dual::new(&tape);
    let params = bind(&dual, f)?;
    let xd = dual.seed(tape.constant(x.clone())?, tape.constant(v.clone())?)?;
    let y = f.apply(&dual, &params, &xd)?;
    let jv = dual.tangent_of(&y)?;
    let loss = tape.sum(&tape.square(&jv)?)?;
    tape.grad(loss)
}

/// Value and flat parameter gradient of a scalar built on a fresh tape.
pub fn value_and_grad<F: Traced>(
    f: &F,
    x: &Tensor,
    loss: impl Fn(&Tape, &Var) -> Result<Var>,
) -> Result<(f64, Tensor)> {
    let tape = Tape::new();
    let params = bind(&tape, f)?;
    let xv = tape.constant(x.clone())?;
    let y = f.apply(&tape, &params, &xv)?;
    let l = loss(&tape, &y)?;
    Ok((tape.scalar_value(l), tape.grad(l)?))
}
