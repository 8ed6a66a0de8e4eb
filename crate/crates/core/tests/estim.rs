use somiv::estim::{
    aggregate_parameters, build_instruments, build_regressors, center, estimate,
    infer_sign_patterns, parameter_error, solve_iv, EstimateOptions, HeadingSource,
    InstrumentOptions, Predictor, PredictorKind, Signals, StackedSystem,
};
use somiv::sim::{
    run_experiment_with, Dataset, ExperimentSeeds, InputDesign, NoiseConfig, SimOptions,
};
use somiv::vessel::{ship_structure, ShipParams};
use somiv::Error;

fn truth() -> Vec<f64> {
    ShipParams::TRUE.to_vec()
}

fn nominal() -> Vec<f64> {
    ShipParams::NOMINAL.to_vec()
}

/// Four experiments, two with the default offsets and two mirrored.
fn dataset(noise: &NoiseConfig, n_d: usize, seed: u64, opts: &SimOptions) -> Dataset {
    let base = InputDesign::default();
    let designs = [base.clone(), base.mirrored(), base.clone(), base.mirrored()];
    let experiments = designs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let seeds = ExperimentSeeds::from_master(seed.wrapping_mul(31).wrapping_add(i as u64));
            run_experiment_with(&truth(), d, noise, n_d, seeds, opts).unwrap()
        })
        .collect();
    Dataset { experiments, seed }
}

fn clean(n_d: usize) -> Dataset {
    dataset(&NoiseConfig::zero(), n_d, 3, &SimOptions::default())
}

/// No current and no measurement noise; wind varies and is measured exactly.
fn clean_with_wind(n_d: usize) -> Dataset {
    let noise = NoiseConfig {
        wind_mean: [1.0, 1.0],
        wind_var: 1.0,
        ..NoiseConfig::zero()
    };
    dataset(&noise, n_d, 5, &SimOptions::default())
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| ((x - y) / y.abs().max(1e-300)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn signs_positive_for_default_offsets() {
    let ds = clean(2000);
    let s = infer_sign_patterns(&ds, ship_structure(), PredictorKind::Augmented).unwrap();
    assert_eq!(s[0].get(1), Some(1));
    assert_eq!(s[0].get(2), Some(1));
    assert_eq!(s[0].get(3), None);
    // mirrored experiment keeps surge and flips sway
    assert_eq!(s[1].get(1), Some(1));
    assert_eq!(s[1].get(2), Some(-1));
}

#[test]
fn negated_data_negates_signs() {
    let ds = clean(500);
    let mut neg = ds.clone();
    for e in &mut neg.experiments {
        for y in &mut e.y {
            for v in y.iter_mut() {
                *v = -*v;
            }
        }
    }
    let kind = PredictorKind::Augmented;
    let a = infer_sign_patterns(&ds, ship_structure(), kind).unwrap();
    let b = infer_sign_patterns(&neg, ship_structure(), kind).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(&x.negated(), y);
    }
}

#[test]
fn constant_negative_channel() {
    let mut ds = clean(200);
    for y in &mut ds.experiments[0].y {
        y[1] = -1.0;
    }
    let s = infer_sign_patterns(&ds, ship_structure(), PredictorKind::Augmented).unwrap();
    assert_eq!(s[0].get(2), Some(-1));
}

#[test]
fn zero_mean_channel_is_rejected() {
    let mut ds = clean(200);
    for y in &mut ds.experiments[2].y {
        y[0] = 0.0;
    }
    let err = infer_sign_patterns(&ds, ship_structure(), PredictorKind::Augmented).unwrap_err();
    assert!(
        matches!(err, Error::ZeroMeanChannel { channel: 1, .. }),
        "{err}"
    );
    assert!(infer_sign_patterns(
        &Dataset::default(),
        ship_structure(),
        PredictorKind::Augmented
    )
    .is_err());
}

#[test]
fn basic_regressors_match_spec_on_truth() {
    let ds = clean(300);
    let e = &ds.experiments[0];
    let pred = Predictor::new(PredictorKind::Basic, ship_structure(), &[]).unwrap();
    let block = build_regressors(&pred, 0, e, 1).unwrap();
    let nu = &e.truth.as_ref().unwrap().nu;
    let agg = aggregate_parameters(ship_structure(), &truth());
    for (i, k) in (1..e.len() - 1).enumerate() {
        let direct = pred.main.spec.eval_regressor(&nu[k], &e.u[k]).unwrap();
        let col = block.phi.columns(3 * i, 3);
        assert!((col - &direct).amax() < 1e-12);
        // undisturbed increment is reproduced exactly
        for c in 0..3 {
            let pred_inc: f64 = (0..agg.len()).map(|p| direct[(p, c)] * agg[p]).sum();
            assert!((pred_inc - block.target[3 * i + c]).abs() < 1e-10);
        }
    }
}

#[test]
fn augmented_row_count() {
    let ds = clean(300);
    for kind in [PredictorKind::Augmented, PredictorKind::AugmentedWithAux] {
        let signs = infer_sign_patterns(&ds, ship_structure(), kind).unwrap();
        let pred = Predictor::new(kind, ship_structure(), &signs).unwrap();
        assert!(pred.n_rho() > 0);
        assert_eq!(
            pred.n_unknowns(),
            pred.n_theta() + pred.n_theta2() + pred.n_rho() + pred.n_lambda()
        );
        let block = build_regressors(&pred, 0, &ds.experiments[0], 1).unwrap();
        assert_eq!(block.phi.nrows(), pred.n_unknowns());
        assert_eq!(pred.names().len(), pred.n_unknowns());
    }
    let pred = Predictor::new(PredictorKind::Basic, ship_structure(), &[]).unwrap();
    assert_eq!(pred.n_unknowns(), 14);
    let pred = Predictor::new(
        PredictorKind::LeastSquaresAux,
        ship_structure(),
        &infer_sign_patterns(&ds, ship_structure(), PredictorKind::LeastSquaresAux).unwrap(),
    )
    .unwrap();
    assert_eq!((pred.n_theta(), pred.n_theta2()), (14, 3));
}

#[test]
fn nuisance_rows_vanish_without_rotation() {
    let ds = clean(300);
    let signs = infer_sign_patterns(&ds, ship_structure(), PredictorKind::Augmented).unwrap();
    let pred = Predictor::new(PredictorKind::Augmented, ship_structure(), &signs).unwrap();
    let x = [1.3, 0.4, -0.02];
    let u = [20.0, 60.0, 10.0];
    let s = Signals {
        x: &x,
        u: &u,
        x_aux: &x,
        rotation: (0.0, 0.0),
    };
    let m = pred.eval(0, &s);
    let first = pred.n_theta();
    assert!(m.rows(first, m.nrows() - first).amax() == 0.0);
    let s = Signals {
        rotation: (0.6, 0.8),
        ..s
    };
    assert!(pred.eval(0, &s).rows(first, pred.n_rho()).amax() > 0.0);
}

#[test]
fn instruments_are_centered() {
    let ds = dataset(
        &NoiseConfig::with_wind(1.0),
        1000,
        11,
        &SimOptions::default(),
    );
    for kind in [
        PredictorKind::Basic,
        PredictorKind::Augmented,
        PredictorKind::AugmentedWithAux,
    ] {
        let signs = infer_sign_patterns(&ds, ship_structure(), kind).unwrap();
        let pred = Predictor::new(kind, ship_structure(), &signs).unwrap();
        for (i, e) in ds.experiments.iter().enumerate() {
            let (_, m) =
                build_instruments(&pred, &nominal(), i, e, &InstrumentOptions::default()).unwrap();
            assert!(m < 1e-12, "{kind} experiment {i}: {m}");
        }
    }
}

fn aligned() -> (SimOptions, InstrumentOptions) {
    let sim = SimOptions {
        warmup: 0,
        initial_heading: Some(0.0),
        ..SimOptions::default()
    };
    let inst = InstrumentOptions {
        heading: HeadingSource::Simulated,
        warmup: 0,
        ..InstrumentOptions::default()
    };
    (sim, inst)
}

#[test]
fn instruments_on_true_model_are_centered_regressors() {
    let (sim, inst) = aligned();
    let ds = dataset(&NoiseConfig::zero(), 400, 2, &sim);
    for kind in [
        PredictorKind::Basic,
        PredictorKind::Augmented,
        PredictorKind::AugmentedWithAux,
    ] {
        let signs = infer_sign_patterns(&ds, ship_structure(), kind).unwrap();
        let pred = Predictor::new(kind, ship_structure(), &signs).unwrap();
        for (i, e) in ds.experiments.iter().enumerate() {
            let (z, _) = build_instruments(&pred, &truth(), i, e, &inst).unwrap();
            let mut phi = build_regressors(&pred, i, e, inst.first_sample())
                .unwrap()
                .phi;
            center(&mut phi, 3);
            let scale = phi.amax();
            assert!((&z - &phi).amax() < 1e-9 * scale, "{kind} experiment {i}");
        }
    }
}

#[test]
fn instruments_ignore_measurement_noise() {
    let (sim, inst) = aligned();
    let noise = NoiseConfig::with_wind(1.0);
    let mut seeds = ExperimentSeeds::from_master(4);
    let design = InputDesign::default();
    let a = run_experiment_with(&truth(), &design, &noise, 500, seeds, &sim).unwrap();
    seeds.measurement ^= 0x5eed;
    let b = run_experiment_with(&truth(), &design, &noise, 500, seeds, &sim).unwrap();
    assert_ne!(a.y, b.y);
    let ds = Dataset {
        experiments: vec![a.clone()],
        seed: 0,
    };
    let signs = infer_sign_patterns(&ds, ship_structure(), PredictorKind::Augmented).unwrap();
    let pred = Predictor::new(PredictorKind::Augmented, ship_structure(), &signs).unwrap();
    let (za, _) = build_instruments(&pred, &nominal(), 0, &a, &inst).unwrap();
    let (zb, _) = build_instruments(&pred, &nominal(), 0, &b, &inst).unwrap();
    assert_eq!(za, zb);
}

#[test]
fn clean_recovery_aggregated() {
    let ds = clean(1000);
    let t = aggregate_parameters(ship_structure(), &truth());
    for kind in [PredictorKind::Basic, PredictorKind::Augmented] {
        let r = estimate(&ds, kind, &nominal(), &EstimateOptions::default()).unwrap();
        let est = aggregate_parameters(ship_structure(), &r.theta);
        assert!(max_rel(&est, &t) < 1e-8, "{kind}: {}", max_rel(&est, &t));
        assert!(r.converged);
        assert!(r.max_instrument_mean.unwrap() < 1e-12);
        for v in r.rho().iter().chain(r.lambda()) {
            assert!(v.abs() < 1e-8, "{kind}: nuisance {v}");
        }
    }
}

#[test]
fn clean_recovery_with_measured_wind() {
    let ds = clean_with_wind(1000);
    for kind in [
        PredictorKind::AugmentedWithAux,
        PredictorKind::LeastSquaresAux,
    ] {
        let r = estimate(&ds, kind, &nominal(), &EstimateOptions::default()).unwrap();
        let t = aggregate_parameters(ship_structure(), &truth());
        let est = aggregate_parameters(ship_structure(), &r.theta);
        assert!(max_rel(&est, &t) < 1e-8, "{kind}: {}", max_rel(&est, &t));
        // wind coefficients are separated from the hydrodynamic ones
        for p in somiv::vessel::WIND_PARAMS {
            assert!(
                ((r.theta[p] - truth()[p]) / truth()[p]).abs() < 1e-8,
                "{kind}: param {p}"
            );
        }
    }
}

#[test]
fn missing_aux_is_an_error() {
    let mut ds = clean(300);
    ds.experiments[1].y_aux = None;
    let err = estimate(
        &ds,
        PredictorKind::AugmentedWithAux,
        &nominal(),
        &EstimateOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingAux(1)), "{err}");
    assert!(estimate(
        &ds,
        PredictorKind::Augmented,
        &nominal(),
        &EstimateOptions::default()
    )
    .is_ok());
}

#[test]
fn nominal_must_be_complete_and_finite() {
    let ds = clean(300);
    let opts = EstimateOptions::default();
    assert!(estimate(&ds, PredictorKind::Basic, &nominal()[..5], &opts).is_err());
    let mut bad = nominal();
    bad[0] = f64::NAN;
    assert!(estimate(&ds, PredictorKind::Basic, &bad, &opts).is_err());
}

#[test]
fn permuting_experiments_keeps_the_estimate() {
    let ds = dataset(
        &NoiseConfig::with_wind(1.0),
        1500,
        21,
        &SimOptions::default(),
    );
    let mut perm = ds.clone();
    perm.experiments.reverse();
    for kind in PredictorKind::ALL {
        let a = estimate(&ds, kind, &nominal(), &EstimateOptions::default()).unwrap();
        let b = estimate(&perm, kind, &nominal(), &EstimateOptions::default()).unwrap();
        let d = max_rel(&a.theta, &b.theta);
        assert!(d < 1e-10, "{kind}: {d}");
    }
}

#[test]
fn augmented_residual_is_orthogonal_to_instruments() {
    let ds = dataset(
        &NoiseConfig::with_wind(1.0),
        3000,
        8,
        &SimOptions::default(),
    );
    let ds = Dataset {
        experiments: vec![ds.experiments[0].clone()],
        seed: 0,
    };
    let inst = InstrumentOptions::default();
    let signs = infer_sign_patterns(&ds, ship_structure(), PredictorKind::Augmented).unwrap();
    let pred = Predictor::new(PredictorKind::Augmented, ship_structure(), &signs).unwrap();
    let e = &ds.experiments[0];
    let (z, _) = build_instruments(&pred, &nominal(), 0, e, &inst).unwrap();
    let block = build_regressors(&pred, 0, e, inst.first_sample()).unwrap();
    let mut sys = StackedSystem { blocks: Vec::new() };
    sys.push(&z, &block.phi, &block.target).unwrap();
    let sol = solve_iv(&sys).unwrap();
    let resid = &block.target - block.phi.transpose() * &sol.beta;
    let n = resid.len() as f64;
    let corr = &z * resid / n;
    let scale = (&z * &block.target / n).norm();
    assert!(corr.norm() <= 1e-8 * scale, "{} vs {scale}", corr.norm());
}

#[test]
fn least_squares_stays_biased() {
    let noise = NoiseConfig::with_wind(1.0);
    let short = dataset(&noise, 2500, 13, &SimOptions::default());
    let long = dataset(&noise, 20000, 13, &SimOptions::default());
    let opts = EstimateOptions::default();
    let e_short = parameter_error(
        ship_structure(),
        &estimate(&short, PredictorKind::LeastSquaresAux, &nominal(), &opts)
            .unwrap()
            .theta,
        &truth(),
    );
    let e_long = parameter_error(
        ship_structure(),
        &estimate(&long, PredictorKind::LeastSquaresAux, &nominal(), &opts)
            .unwrap()
            .theta,
        &truth(),
    );
    assert!(e_long > 0.05, "{e_long}");
    assert!(e_long > 0.5 * e_short, "{e_short} -> {e_long}");
}

#[test]
fn convergence_bookkeeping() {
    let ds = dataset(
        &NoiseConfig::with_wind(1.0),
        800,
        17,
        &SimOptions::default(),
    );
    let once = EstimateOptions {
        max_iter: 1,
        ..EstimateOptions::default()
    };
    let r = estimate(&ds, PredictorKind::Augmented, &nominal(), &once).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 1);
    assert!(r.warnings.iter().any(|w| w.contains("did not converge")));

    let r = estimate(
        &clean(800),
        PredictorKind::Basic,
        &nominal(),
        &EstimateOptions::default(),
    )
    .unwrap();
    assert!(r.converged);
    assert!(r.iterations >= 2 && r.iterations <= 20);

    let r = estimate(
        &ds,
        PredictorKind::LeastSquaresAux,
        &nominal(),
        &EstimateOptions::default(),
    )
    .unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 1);
    assert_eq!(r.max_instrument_mean, None);
}

#[test]
fn report_lists_parameters() {
    let ds = clean(600);
    let r = estimate(
        &ds,
        PredictorKind::Augmented,
        &nominal(),
        &EstimateOptions::default(),
    )
    .unwrap();
    let text = r.report(ship_structure(), Some(&truth()));
    for name in &ship_structure().param_names {
        assert!(text.contains(name.as_str()), "{name}");
    }
    assert!(text.contains("singular values"));
    assert!(text.contains("nuisance parameters"));
}
