use std::collections::BTreeMap;

use somiv::estim::PredictorKind;
use somiv_harness::config::Config;
use somiv_harness::report::{emit_reports, fit_chart, write_raw_csv, AGGREGATE_CSV, RAW_CSV};
use somiv_harness::study::{mean_std, run_study, RunRecord, StudyResult, CHANNELS};

fn small(reps: usize, grid: Vec<usize>, estimators: &[&str]) -> Config {
    let mut c = Config::default();
    c.study.reps = reps;
    c.study.grid = grid;
    c.study.winds = vec![1.0];
    c.study.estimators = estimators.iter().map(|s| s.to_string()).collect();
    c.study.validation_len = 500;
    c
}

#[test]
fn single_repetition_smoke() {
    let cfg = small(1, vec![400], &["IV2"]);
    let res = run_study(&cfg).unwrap();
    assert_eq!(res.runs.len(), 1);
    let agg = res.aggregate();
    assert_eq!(agg.len(), 3);
    for (c, row) in agg.iter().enumerate() {
        assert_eq!(row.channel, c);
        assert_eq!(row.runs + row.diverged, 1);
    }
    let mut buf = Vec::new();
    write_raw_csv(&res, &mut buf, &[0, 1, 2]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);
    assert!(text.starts_with("estimator,wind_case,N,channel,run,fit,param_err\n"));
}

#[test]
fn same_seed_same_result() {
    let cfg = small(3, vec![400, 800], &["IV1", "LS"]);
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.study.seed += 1;
    assert_ne!(run_study(&other).unwrap(), a);
}

#[test]
fn aggregate_matches_raw_rows() {
    let cfg = small(4, vec![400, 800], &["IV2", "LS"]);
    let res = run_study(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&res, dir.path(), &[0, 1, 2]).unwrap();

    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    let mut raw = csv::Reader::from_path(dir.path().join(RAW_CSV)).unwrap();
    for rec in raw.records() {
        let rec = rec.unwrap();
        let fit: f64 = rec[5].parse().unwrap();
        let key = (rec[0].to_string(), rec[2].to_string(), rec[3].to_string());
        let entry = groups.entry(key).or_default();
        if fit.is_finite() {
            entry.push(fit);
        }
    }
    let mut agg = csv::Reader::from_path(dir.path().join(AGGREGATE_CSV)).unwrap();
    let mut seen = 0;
    for rec in agg.records() {
        let rec = rec.unwrap();
        let key = (rec[0].to_string(), rec[2].to_string(), rec[3].to_string());
        let fits = &groups[&key];
        let (mean, std) = mean_std(fits);
        let m: f64 = rec[4].parse().unwrap();
        let s: f64 = rec[5].parse().unwrap();
        assert!((m - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{key:?}");
        assert!((s - std).abs() <= 1e-12 * std.abs().max(1.0), "{key:?}");
        seen += 1;
    }
    assert_eq!(seen, 2 * 2 * 3);
}

fn handmade() -> StudyResult {
    let rec = |n, run, fit: [f64; 3], diverged| RunRecord {
        estimator: PredictorKind::Augmented,
        wind: 1.0,
        n,
        run,
        fit,
        param_err: 0.1,
        diverged,
        instrument_mean: Some(0.0),
    };
    StudyResult {
        kinds: vec![PredictorKind::Augmented],
        winds: vec![1.0],
        grid: vec![1000, 2000],
        reps: 2,
        runs: vec![
            rec(1000, 0, [-40.0, 50.0, 60.0], false),
            rec(1000, 1, [-20.0, 52.0, 62.0], false),
            rec(2000, 0, [70.0, 55.0, 65.0], false),
            rec(2000, 1, [f64::NEG_INFINITY; 3], true),
        ],
    }
}

#[test]
fn chart_clips_but_tables_keep_values() {
    let res = handmade();
    let agg = res.aggregate();
    let surge_1000 = &agg[0];
    assert_eq!(surge_1000.mean, -30.0);
    assert_eq!(agg[3].runs, 1);
    assert_eq!(agg[3].diverged, 1);
    assert_eq!(agg[3].mean, 70.0);

    let svg = fit_chart(&agg, &res.kinds, 1.0, 0);
    assert!(svg.contains(r#"version="1.1""#));
    // only the N = 2000 surge mean is drawn
    assert_eq!(svg.matches(r#"class="mean""#).count(), 1);
    let svg = fit_chart(&agg, &res.kinds, 1.0, 1);
    assert_eq!(svg.matches(r#"class="mean""#).count(), 2);
    assert!(svg.contains("<polyline"));

    let mut buf = Vec::new();
    write_raw_csv(&res, &mut buf, &[0]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains(",surge,0,-40,"));
    assert!(text.contains(",surge,1,-inf,"));
}

#[test]
fn report_errors() {
    let res = handmade();
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_reports(&res, dir.path(), &[]).is_err());
    assert!(emit_reports(&res, dir.path(), &[3]).is_err());
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    assert!(emit_reports(&res, &file.join("sub"), &[0]).is_err());
    let files = emit_reports(&res, &dir.path().join("ok"), &[1, 2]).unwrap();
    assert_eq!(files.len(), 2 + 2);
    assert_eq!(CHANNELS.len(), 3);
}
