//! Difficulty presets, distribution shifts and reveal paths on the curved
//! manifold data.
//!
//! cargo run --release --example manifold_data

use fieldlab::gradcore::Rng;
use fieldlab::manifoldgen::*;

fn main() -> fieldlab::Result<()> {
    for d in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
        let mut accs = Vec::new();
        for seed in 0..3 {
            let rng = Rng::new(seed);
            let spec = ManifoldSpec::preset(d, 10, 32, 4, 100);
            let g = ManifoldGenerator::new(&spec, &rng)?;
            let train = g.sample(100, &rng.stream("train"))?;
            let test = g.sample(50, &rng.stream("test"))?;
            accs.push(linear_probe_accuracy(&train, &test)?);
        }
        println!("{d:?}: linear probe accuracy {accs:.3?}");
    }

    let rng = Rng::new(0);
    let spec = ManifoldSpec::default();
    let g = ManifoldGenerator::new(&spec, &rng)?;
    let train = g.sample(100, &rng.stream("train"))?;
    let test = g.sample(50, &rng.stream("test"))?;
    for kind in [
        OodKind::Noise,
        OodKind::Rotation,
        OodKind::CenterShift,
        OodKind::CurvatureChange,
    ] {
        let shifted = apply_ood(
            &test,
            &OodSpec {
                kind,
                magnitude: 0.5,
            },
            &rng.stream("ood"),
        )?;
        println!(
            "{kind:?} shift: probe accuracy {:.3}",
            linear_probe_accuracy(&train, &shifted)?
        );
    }

    let mean = train.x.sum_cols()?.scale(1.0 / train.len() as f64);
    let kinds = [
        PathKind::CenterOut,
        PathKind::Sequential,
        PathKind::Random,
        PathKind::Frequency,
    ];
    let paths = build_paths(
        spec.ambient_dim,
        &kinds,
        4,
        &rng.stream("paths"),
        Some(mean.data()),
    )?;
    for p in &paths {
        println!("{:>14}: first block {:?}", p.id, p.blocks[0]);
    }
    let view = reveal(&test.x.select_rows(&[0])?, &paths[0], 1)?;
    println!(
        "step-1 view of sample 0 (values | mask): {:.2?}",
        view.data()
    );
    Ok(())
}
