//! Trains each network family on a small manifold task and prints its
//! accuracy, calibration and field metrics side by side.
//!
//! cargo run --release --example field_report -- [seed]

use fieldlab::cli::{metrics_report_experiment, MetricsReportExp};

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.3}"))
}

fn main() -> fieldlab::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let rows = metrics_report_experiment(&MetricsReportExp::default(), seed)?;
    println!(
        "{:>12} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "family", "acc", "ece", "len", "curv", "align", "jac_w1", "solver"
    );
    for r in rows {
        let f = &r.report;
        println!(
            "{:>12} {:>6.3} {:>6.3} {:>8} {:>8} {:>8} {:>8} {:>9}",
            format!("{:?}", r.family),
            r.accuracy,
            r.ece,
            opt(f.len),
            opt(f.curvature),
            opt(f.vel_align),
            opt(f.jac_wdist),
            f.solver_err.map_or("-".into(), |v| format!("{v:.2e}"))
        );
    }
    Ok(())
}
