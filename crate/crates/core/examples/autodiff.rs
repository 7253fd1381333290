//! Reverse-mode gradients, forward-mode JVPs and the gradient of a squared
//! JVP on a small network, each checked against central differences.
//!
//! cargo run --release --example autodiff

use fieldlab::gradcore::{grad_of_jvp, jvp, value_and_grad, Ops, Rng, Tensor, Traced};
use fieldlab::Result;

struct Net {
    w: Tensor,
    b: Tensor,
}

impl Traced for Net {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        vec![("w".into(), self.w.clone()), ("b".into(), self.b.clone())]
    }

    fn apply<O: Ops>(&self, ops: &O, p: &[O::V], x: &O::V) -> Result<O::V> {
        ops.tanh(&ops.add_row(&ops.matmul(x, &p[0])?, &p[1])?)
    }
}

fn main() -> Result<()> {
    let mut rng = Rng::new(0);
    let net = Net {
        w: rng.normal_tensor(&[3, 2], 1.0),
        b: rng.normal_tensor(&[1, 2], 0.5),
    };
    let x = rng.normal_tensor(&[1, 3], 1.0);
    let v = rng.normal_tensor(&[1, 3], 1.0);
    let h = 1e-5;

    let (loss, g) = value_and_grad(&net, &x, |tape, y| tape.sum(&tape.square(y)?))?;
    let bump = |i: usize, d: f64| {
        let mut w = net.w.clone();
        w.data_mut()[i] += d;
        let y = Net {
            w,
            b: net.b.clone(),
        };
        value_and_grad(&y, &x, |tape, out| tape.sum(&tape.square(out)?)).map(|r| r.0)
    };
    let fd = (bump(0, h)? - bump(0, -h)?) / (2.0 * h);
    println!(
        "loss {loss:.6}  dL/dw00 reverse {:.8}  central diff {fd:.8}",
        g.data()[0]
    );

    let jv = jvp(&net, &x, &v)?;
    let shifted = |s: f64| {
        net.apply(
            &fieldlab::gradcore::Eval,
            &[net.w.clone(), net.b.clone()],
            &x.add(&v.scale(s))?,
        )
    };
    let fd = shifted(h)?.sub(&shifted(-h)?)?.scale(1.0 / (2.0 * h));
    println!("JVP {:?}  central diff {:?}", jv.data(), fd.data());

    let gj = grad_of_jvp(&net, &x, &v)?;
    println!(
        "d|Jv|^2/dtheta has {} entries, first {:.6}",
        gj.len(),
        gj.data()[0]
    );
    Ok(())
}
