use std::path::{Path, PathBuf};
use std::process::Command;

use fieldlab::cli::*;
use fieldlab::jsonio::read_json;
use fieldlab::manifoldgen::read_path_manifest;
use fieldlab::pdebench::read_pde_csv;
use fieldlab::trainlab::read_pareto_csv;
use fieldlab::FieldError;

const TINY_TEACHER: &str = r#"
kind = "teacherflow"
seed = 3

[teacherflow]
samples = 50
test_samples = 40
epochs = 50

[teacherflow.refinement]
enabled = false
"#;

fn write_config(dir: &Path, name: &str, body: &str, output: &Path) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(
        &path,
        format!("output = {:?}\n{body}", output.display().to_string()),
    )
    .unwrap();
    path
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fieldlab"))
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let r = run_config(Path::new("/no/such/config.toml"));
    assert!(matches!(r, Err(FieldError::Config(ref m)) if m.contains("/no/such/config.toml")));
    assert_eq!(exit_code(&r), 2);
    let out = bin()
        .args(["run", "/no/such/config.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/config.toml"));
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        "kind = \"pde\"\ncolour = 1\n",
        "kind = \"pde\"\n[pde]\nsampels = 3\n",
        "kind = \"reveal\"\n[reveal.model]\nlambda = 1.0\n",
        "kind = \"bogus\"\n",
    ] {
        assert!(
            matches!(
                ExperimentConfig::from_toml(text),
                Err(FieldError::Config(_))
            ),
            "{text}"
        );
    }
}

#[test]
fn nested_seed_must_match_top_level() {
    let bad = "kind = \"reveal\"\nseed = 4\n[reveal.model]\nseed = 5\n";
    assert!(matches!(
        ExperimentConfig::from_toml(bad),
        Err(FieldError::Config(_))
    ));
    let ok = "kind = \"reveal\"\nseed = 4\n[reveal.model]\nseed = 4\n";
    assert_eq!(ExperimentConfig::from_toml(ok).unwrap().seed, 4);
}

#[test]
fn materialized_config_round_trips() {
    let cfg = ExperimentConfig::from_toml(TINY_TEACHER).unwrap();
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
}

#[test]
fn hash_tracks_config_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", TINY_TEACHER, &dir.path().join("out"));
    let b = dir.path().join("b.toml");
    std::fs::copy(&a, &b).unwrap();
    assert_eq!(
        load_config(&a).unwrap().sha256,
        load_config(&b).unwrap().sha256
    );
    let mut text = std::fs::read_to_string(&b).unwrap();
    text.push(' ');
    std::fs::write(&b, text).unwrap();
    let (ha, hb) = (load_config(&a).unwrap(), load_config(&b).unwrap());
    assert_eq!(ha.config, hb.config);
    assert_ne!(ha.sha256, hb.sha256);
    assert_eq!(ha.sha256, sha256_hex(&std::fs::read(&a).unwrap()));
}

#[test]
fn teacherflow_run_is_deterministic_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for leaf in ["one", "two"] {
        let cfg = write_config(
            dir.path(),
            &format!("{leaf}.toml"),
            TINY_TEACHER,
            &dir.path().join(leaf),
        );
        let out = run_config(&cfg).unwrap();
        let text = std::fs::read_to_string(out.join("results.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["acc", "traj_rmse", "deriv_rmse"] {
            assert!(
                v["endpoint"][key].is_number() && v["field"][key].is_number(),
                "{key}"
            );
        }
        let parsed: TeacherflowResult = read_json(&out.join("results.json")).unwrap();
        assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", text);
        let manifest: Manifest = read_json(&out.join("manifest.json")).unwrap();
        assert_eq!(manifest.kind, Kind::Teacherflow);
        assert_eq!(manifest.seed, 3);
        assert_eq!(manifest.files, vec!["results.json"]);
        assert_eq!(manifest.config_sha256, load_config(&cfg).unwrap().sha256);
        assert_eq!(manifest.config.teacherflow.samples, 50);
        results.push(text);
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn env_var_reroots_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tf.toml",
        TINY_TEACHER,
        Path::new("somewhere/else/leaf"),
    );
    let root = dir.path().join("root");
    let out = bin()
        .args(["run", cfg.to_str().unwrap()])
        .env(OUT_ENV, &root)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("leaf/results.json").exists());
    assert!(root.join("leaf/manifest.json").exists());
    assert_eq!(
        output_dir(&load_config(&cfg).unwrap().config, &cfg, None),
        PathBuf::from("somewhere/else/leaf")
    );
    let unnamed = ExperimentConfig::from_toml("kind = \"pde\"").unwrap();
    assert_eq!(
        output_dir(&unnamed, Path::new("cfg/my_exp.toml"), None),
        PathBuf::from("runs/my_exp")
    );
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let body = "kind = \"pde\"\n[pde]\nsamples = 10\ntrain_samples = 10\n";
    let cfg = write_config(dir.path(), "bad.toml", body, &dir.path().join("out"));
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn write_result(dir: &Path, value: serde_json::Value) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("results.json"), value.to_string()).unwrap();
}

#[test]
fn report_of_single_run_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    write_result(
        &dir.path().join("a"),
        serde_json::json!({"acc": 0.75, "rows": [{"mse": 2.5}], "name": "x"}),
    );
    let s = report(dir.path()).unwrap();
    assert_eq!(s.runs.len(), 1);
    let got: Vec<_> = s
        .metrics
        .iter()
        .map(|m| (m.metric.as_str(), m.n, m.median, m.iqr))
        .collect();
    assert_eq!(
        got,
        vec![("acc", 1, 0.75, 0.0), ("rows.0.mse", 1, 2.5, 0.0)]
    );
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn report_median_matches_hand_sort_and_flags_malformed() {
    let dir = tempfile::tempdir().unwrap();
    for (i, v) in [0.9, 0.1, 0.4].iter().enumerate() {
        write_result(
            &dir.path().join(format!("seed_{i}")),
            serde_json::json!({ "acc": v }),
        );
    }
    let bad = dir.path().join("seed_9");
    std::fs::create_dir_all(&bad).unwrap();
    std::fs::write(bad.join("results.json"), "{not json").unwrap();
    let s = report(dir.path()).unwrap();
    assert_eq!(s.runs.len(), 3);
    assert_eq!(s.metrics[0].median, 0.4);
    assert!((s.metrics[0].iqr - (0.65 - 0.25)).abs() < 1e-12);
    assert_eq!(s.warnings.len(), 1);
    let text = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(text.contains("warnings:") && text.contains("seed_9"));
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.starts_with("metric,n,median,iqr\nacc,3,0.4,"));
}

#[test]
fn sweep_runs_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let cfg = write_config(dir.path(), "tf.toml", TINY_TEACHER, &out);
    let run = bin()
        .args([
            "sweep",
            cfg.to_str().unwrap(),
            "--seeds",
            "1,2,5",
            "--jobs",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    for s in [1, 2, 5] {
        let m: Manifest = read_json(&out.join(format!("seed_{s}/manifest.json"))).unwrap();
        assert_eq!(m.seed, s);
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.starts_with("3 run(s)"));
    // a sweep seed reproduces the single run with that seed
    let single = write_config(
        dir.path(),
        "s2.toml",
        &TINY_TEACHER.replace("seed = 3", "seed = 2"),
        &dir.path().join("s2"),
    );
    let s2 = run_config(&single).unwrap();
    assert_eq!(
        std::fs::read(s2.join("results.json")).unwrap(),
        std::fs::read(out.join("seed_2/results.json")).unwrap()
    );
}

const TINY: [(&str, &str); 5] = [
    (
        "pde",
        "kind = \"pde\"\n[pde]\nfamilies = [\"A\"]\nsamples = 12\ntrain_samples = 8\nmodels = [\"M1\", \"M2\"]\n",
    ),
    (
        "reveal",
        "kind = \"reveal\"\n[reveal]\nvariants = [\"task\", \"reveal\"]\n[reveal.model]\nepochs = 2\ntrain_per_class = 10\ntest_per_class = 5\n",
    ),
    (
        "continual",
        "kind = \"continual\"\n[continual]\nphases = [0, 3]\nbudgets = [20]\n[continual.model]\ntasks = 2\nepochs = 1\ntrain_per_class = 10\ntest_per_class = 5\nmetric_anchors = 5\n",
    ),
    (
        "pareto",
        "kind = \"pareto\"\n[pareto]\nsamples = 20\ntest_samples = 10\nepochs = 2\n",
    ),
    (
        "metrics",
        "kind = \"metrics-report\"\n[metrics_report]\nepochs = 1\ntrain_per_class = 5\ntest_per_class = 3\nspectrum_rows = 2\n",
    ),
];

#[test]
fn every_kind_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in TINY {
        let mut outs = Vec::new();
        for rep in 0..2 {
            let cfg = write_config(
                dir.path(),
                &format!("{name}{rep}.toml"),
                body,
                &dir.path().join(format!("{name}{rep}")),
            );
            outs.push(run_config(&cfg).unwrap());
        }
        let manifest: Manifest = read_json(&outs[0].join("manifest.json")).unwrap();
        for f in &manifest.files {
            let a = std::fs::read(outs[0].join(f)).unwrap();
            let b = std::fs::read(outs[1].join(f)).unwrap();
            if f != "pareto.csv" {
                assert_eq!(a, b, "{name}/{f}");
            }
        }
        let d = &outs[0];
        let results = d.join("results.json");
        match name {
            "pde" => {
                let r: PdeResult = read_json(&results).unwrap();
                assert_eq!(read_pde_csv(&d.join("pde.csv")).unwrap(), r.rows);
            }
            "reveal" => {
                let r: RevealResult = read_json(&results).unwrap();
                let paths = read_path_manifest(&d.join("paths.json")).unwrap();
                assert!(paths.iter().any(|p| p.id == r.held_out_path));
                assert_eq!(r.runs.len(), 2);
            }
            "continual" => {
                let _: fieldlab::continual::PhaseOutputs = read_json(&results).unwrap();
            }
            "pareto" => {
                let r: Vec<fieldlab::trainlab::ParetoRow> = read_json(&results).unwrap();
                let csv = read_pareto_csv(&d.join("pareto.csv")).unwrap();
                assert_eq!(csv.len(), r.len());
                assert!(csv.iter().all(|row| row.neg_frac.is_some()));
            }
            _ => {
                let r: Vec<FamilyReport> = read_json(&results).unwrap();
                assert_eq!(r.len(), 6);
            }
        }
    }
}
