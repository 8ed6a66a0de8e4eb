use std::path::Path;
use std::process::{Command, Output};

use somiv::estim::{estimate, PredictorKind};
use somiv::sim::{Dataset, Experiment};
use somiv_harness::config::Config;
use somiv_harness::study::repetition_experiments;

fn somiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_somiv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn study_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = somiv(&[
        "study",
        "--reps",
        "2",
        "--grid",
        "1000",
        "--wind",
        "1",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "runs.csv",
        "aggregate.csv",
        "fit_surge_wind1.svg",
        "fit_sway_wind1.svg",
        "fit_yaw_wind1.svg",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = somiv(&["study", "--config", "/nonexistent/somiv.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("somiv.toml"));

    let out = somiv(&["study", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    assert_eq!(
        somiv(&["study", "--estimators", "IV7"]).status.code(),
        Some(1)
    );
    assert_eq!(somiv(&["study", "--reps", "0"]).status.code(), Some(1));
    assert_eq!(somiv(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let out = somiv(&["estimate", "/nonexistent/exp.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = somiv(&[
            "simulate",
            "--seed",
            "7",
            "--samples",
            "300",
            "--out",
            path(d.path()),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "exp_0.csv",
        "exp_1.csv",
        "exp_2.csv",
        "exp_3.csv",
        "validation.csv",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn csv_round_trip_matches_in_memory_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = somiv(&[
        "simulate",
        "--seed",
        "11",
        "--samples",
        "600",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let mut cfg = Config::default();
    cfg.study.seed = 11;
    let memory: Vec<Experiment> = repetition_experiments(&cfg, cfg.study.winds[0], 11, 600)
        .unwrap()
        .into_iter()
        .map(|e| e.measured())
        .collect();
    let loaded: Vec<Experiment> = (0..4)
        .map(|i| {
            let f = std::fs::File::open(dir.path().join(format!("exp_{i}.csv"))).unwrap();
            Experiment::read_csv(f).unwrap()
        })
        .collect();
    assert_eq!(loaded, memory);

    let nominal = cfg.params.nominal.to_vec();
    for kind in [PredictorKind::Augmented, PredictorKind::AugmentedWithAux] {
        let a = estimate(
            &Dataset {
                experiments: memory.clone(),
                seed: 11,
            },
            kind,
            &nominal,
            &cfg.estimate,
        )
        .unwrap();
        let b = estimate(
            &Dataset {
                experiments: loaded.clone(),
                seed: 11,
            },
            kind,
            &nominal,
            &cfg.estimate,
        )
        .unwrap();
        assert_eq!(a.beta, b.beta);
    }

    let files: Vec<String> = (0..4)
        .map(|i| path(&dir.path().join(format!("exp_{i}.csv"))).to_string())
        .collect();
    let mut args = vec!["estimate", "--estimators", "IV2", "--compare"];
    args.extend(files.iter().map(String::as_str));
    let out = somiv(&args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("estimator: IV2"));
    assert!(text.contains("X_u"));

    let out = somiv(&["check", &files[0], &files[1]]);
    assert_eq!(out.status.code(), Some(0));

    let out = somiv(&["validate", path(&dir.path().join("validation.csv"))]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines() {
        let fit: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((fit - 100.0).abs() < 1e-9, "{line}");
    }
}
