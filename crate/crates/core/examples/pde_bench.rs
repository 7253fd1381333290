//! Trains the four PDE model classes on one family and prints the metric table.
//!
//! `cargo run --release --example pde_bench -- [A|B|C] [seed] [--controls]`

use std::time::Instant;

use fieldlab::gradcore::Rng;
use fieldlab::pdebench::*;

fn main() -> fieldlab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family = match args.first().map(String::as_str) {
        Some("B") => PdeFamily::B,
        Some("C") => PdeFamily::C,
        _ => PdeFamily::A,
    };
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let controls = args.iter().any(|a| a == "--controls");

    let spec = PdeSpec::family(family);
    let rng = Rng::new(seed);
    let start = Instant::now();
    let data = generate_pde_dataset(&spec, 250, &rng.stream("data"))?;
    let (train, test) = data.split(200)?;
    println!("data {:.1}s", start.elapsed().as_secs_f64());

    let cfg = PdeModelConfig::default();
    let mut rows = Vec::new();
    let reference = evaluate_pde(&ReferenceModel { spec: spec.clone() }, &test, 0.01, &rng)?;
    rows.push(PdeRow::new(family, "reference", &reference));
    let mut m3_mse = None;
    for class in ModelClass::ALL {
        let t = Instant::now();
        let tc = PdeModelConfig::train_config(class, seed);
        let (model, _) = train_pde_model(class, &train, &cfg, &tc, &rng.stream("init"))?;
        let m = evaluate_pde(&model, &test, 0.01, &rng)?;
        println!(
            "{} trained in {:.1}s",
            class.name(),
            t.elapsed().as_secs_f64()
        );
        if class == ModelClass::M3 {
            m3_mse = Some(m.endpoint_mse);
        }
        rows.push(PdeRow::new(family, class.name(), &m));
    }
    if controls {
        for control in [Control::RandomPair, Control::ShuffledTime] {
            let corrupted = negative_control(&train, control, &rng.stream("control"))?;
            let tc = PdeModelConfig::train_config(ModelClass::M3, seed);
            let (model, _) =
                train_pde_model(ModelClass::M3, &corrupted, &cfg, &tc, &rng.stream("init"))?;
            let m = evaluate_pde(&model, &test, 0.01, &rng)?;
            let label = format!("M3/{control:?}");
            if let Some(base) = m3_mse {
                println!(
                    "{label}: endpoint MSE ratio to M3 {:.2}",
                    m.endpoint_mse / base
                );
            }
            rows.push(PdeRow::new(family, &label, &m));
        }
    }
    let show = |v: Option<f64>| v.map_or("—".to_string(), |x| format!("{x:.3e}"));
    println!(
        "{:<18} {:>11} {:>11} {:>11} {:>9} {:>11}",
        "model", "EndpointMSE", "T2.0MSE", "RegridDtHalf", "EnergyR", "PerturbMSE"
    );
    for r in &rows {
        println!(
            "{:<18} {:>11.3e} {:>11.3e} {:>11} {:>9} {:>11.3e}",
            r.model,
            r.endpoint_mse,
            r.final_mse,
            show(r.regrid),
            r.energy_r.map_or("—".into(), |x| format!("{x:.4}")),
            r.perturb_mse
        );
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
