//! Task/field gradient conflict and the accuracy-fidelity trade-off of each
//! training algorithm on the teacher flow.
//!
//! cargo run --release --example gradient_conflict -- [seed]

use fieldlab::cli::{pareto_experiment, ParetoExp};

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.3}"))
}

fn main() -> fieldlab::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let rows = pareto_experiment(&ParetoExp::default(), seed)?;
    println!(
        "{:>18} {:>6} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6}",
        "algorithm", "acc", "traj", "deriv", "cos", "cos_min", "neg", "sec"
    );
    for r in rows {
        println!(
            "{:>18} {:>6} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6.1}",
            r.algorithm,
            opt(r.test_acc),
            opt(r.traj_rmse),
            opt(r.deriv_rmse),
            opt(r.cos_mean),
            opt(r.cos_min),
            opt(r.neg_frac),
            r.seconds
        );
    }
    Ok(())
}
