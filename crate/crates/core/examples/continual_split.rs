//! Ten-task class-incremental split on manifold data: accuracy, transfer
//! and field retention per method.
//!
//! cargo run --release --example continual_split -- [seed] [method,...] [lambda_fpr] [--matrix]

use std::time::Instant;

use fieldlab::continual::*;
use fieldlab::gradcore::Rng;

fn main() -> fieldlab::Result<()> {
    let (flags, args): (Vec<String>, Vec<String>) =
        std::env::args().skip(1).partition(|a| a.starts_with("--"));
    let show_matrix = flags.iter().any(|f| f == "--matrix");
    let seed = args.first().map_or(Ok(0), |s| s.parse()).expect("seed");
    let methods: Vec<Method> = match args.get(1) {
        Some(list) => list
            .split(',')
            .map(Method::parse)
            .collect::<fieldlab::Result<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let mut cfg = ContinualConfig {
        seed,
        ..Default::default()
    };
    if let Some(l) = args.get(2) {
        cfg.lambda_fpr = l.parse().expect("lambda_fpr");
    }
    let seq = TaskSequence::build(&cfg, &Rng::new(seed))?;
    println!(
        "{:>16} {:>7} {:>7} {:>7} {:>9} {:>9} {:>6}",
        "method", "AA", "BWT", "FWT", "FRS", "JRS", "secs"
    );
    for m in methods {
        let start = Instant::now();
        let r = run_method(m, &seq, &cfg)?;
        if show_matrix {
            for row in &r.accuracy.matrix {
                println!("{row:.2?}");
            }
        }
        let fmt = |v: Option<f64>| v.map_or("—".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:>16} {:>7.3} {:>7} {:>7} {:>9.3e} {:>9.3e} {:>6.1}",
            m.name(),
            r.aa,
            fmt(r.bwt),
            fmt(r.fwt),
            r.frs,
            r.jrs,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
