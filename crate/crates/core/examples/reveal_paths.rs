//! Reveal-path objectives on hard manifold data: accuracy on a held-out
//! path, path sensitivity and collapse as the reveal weight grows.
//!
//! cargo run --release --example reveal_paths -- [seed] [lambda_r,...]

use std::time::Instant;

use fieldlab::fieldlosses::{run_reveal, RevealConfig, RevealData, RevealVariant};

fn main() -> fieldlab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = args.first().map_or(0, |s| s.parse().expect("seed"));
    let lambdas: Vec<f64> = args
        .get(1)
        .map_or("1,50".into(), |s| s.clone())
        .split(',')
        .map(|s| s.parse().expect("lambda"))
        .collect();
    let base = RevealConfig {
        seed,
        ..Default::default()
    };
    let data = RevealData::build(&base)?;
    println!("held-out path: {}", data.unseen().id);
    println!(
        "{:>7} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9} {:>6} {:>5}",
        "variant", "λ_r", "seen", "unseen", "sens_o", "sens_h", "var", "share", "secs"
    );
    let mut runs = vec![(RevealVariant::Task, base.lambda_r)];
    runs.extend(lambdas.iter().map(|&l| (RevealVariant::Reveal, l)));
    runs.push((RevealVariant::Jac, base.lambda_r));
    runs.push((RevealVariant::Full, base.lambda_r));
    for (variant, lambda_r) in runs {
        let cfg = RevealConfig {
            lambda_r,
            ..base.clone()
        };
        let start = Instant::now();
        let (_, o) = run_reveal(&cfg, &data, variant)?;
        let m = &o.metrics;
        println!(
            "{:>7} {:>7} {:>7.3} {:>7.3} {:>9.3e} {:>9.3e} {:>9.2e} {:>6.2} {:>5.1}{}",
            variant.name(),
            o.lambda_r,
            m.seen_acc,
            m.unseen_acc,
            m.path_sens_logit,
            m.path_sens_hidden,
            m.collapse.rep_variance,
            m.collapse.class_balance,
            start.elapsed().as_secs_f64(),
            if m.collapse.collapsed {
                "  collapsed"
            } else {
                ""
            }
        );
    }
    Ok(())
}
