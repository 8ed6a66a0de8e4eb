//! Monte Carlo fit-vs-N study.

use anyhow::{Context, Result};
use rayon::prelude::*;
use somiv::estim::{estimate, model_fit, parameter_error, PredictorKind};
use somiv::sim::{
    run_experiment_with, split_seed, Dataset, Experiment, ExperimentSeeds, NoiseConfig, SimOptions,
};
use somiv::vessel::ship_structure;

use crate::config::Config;

pub const CHANNELS: [&str; 3] = ["surge", "sway", "yaw"];

/// Stream index of the validation experiment under the master seed.
const VALIDATION_STREAM: u64 = 1 << 32;

/// One estimate of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub estimator: PredictorKind,
    pub wind: f64,
    pub n: usize,
    pub run: usize,
    /// Per-channel fit; `-inf` when the run diverged.
    pub fit: [f64; 3],
    /// NaN when the estimate itself failed.
    pub param_err: f64,
    pub diverged: bool,
    /// Largest absolute instrument-row mean; `None` for LS or a failed estimate.
    pub instrument_mean: Option<f64>,
}

/// Outcome of one estimate on the validation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub fit: [f64; 3],
    pub param_err: f64,
    pub diverged: bool,
    pub instrument_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub estimator: PredictorKind,
    pub wind: f64,
    pub n: usize,
    pub channel: usize,
    pub mean: f64,
    pub std: f64,
    /// Runs entering `mean` and `std`.
    pub runs: usize,
    pub diverged: usize,
    pub median_param_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub kinds: Vec<PredictorKind>,
    pub winds: Vec<f64>,
    pub grid: Vec<usize>,
    pub reps: usize,
    /// Ordered by wind case, repetition, grid value and estimator.
    pub runs: Vec<RunRecord>,
}

pub fn wind_label(w: f64) -> String {
    format!("{w}")
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl StudyResult {
    pub fn select(
        &self,
        kind: PredictorKind,
        wind: f64,
        n: usize,
    ) -> impl Iterator<Item = &RunRecord> + '_ {
        self.runs
            .iter()
            .filter(move |r| r.estimator == kind && r.wind == wind && r.n == n)
    }

    pub fn aggregate_one(
        &self,
        kind: PredictorKind,
        wind: f64,
        n: usize,
        channel: usize,
    ) -> AggregateRow {
        let runs: Vec<&RunRecord> = self.select(kind, wind, n).collect();
        let fits: Vec<f64> = runs
            .iter()
            .filter(|r| !r.diverged)
            .map(|r| r.fit[channel])
            .collect();
        let (mean, std) = mean_std(&fits);
        AggregateRow {
            estimator: kind,
            wind,
            n,
            channel,
            mean,
            std,
            runs: fits.len(),
            diverged: runs.iter().filter(|r| r.diverged).count(),
            median_param_err: median(
                runs.iter()
                    .map(|r| r.param_err)
                    .filter(|e| e.is_finite())
                    .collect(),
            ),
        }
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        for &w in &self.winds {
            for &kind in &self.kinds {
                for &n in &self.grid {
                    for c in 0..CHANNELS.len() {
                        out.push(self.aggregate_one(kind, w, n, c));
                    }
                }
            }
        }
        out
    }
}

/// Estimation experiments of one repetition. The hidden truth is kept.
pub fn repetition_experiments(
    cfg: &Config,
    wind: f64,
    seed: u64,
    n_d: usize,
) -> Result<Vec<Experiment>> {
    let noise = NoiseConfig {
        wind_mean: [wind, wind],
        ..cfg.noise.clone()
    };
    let truth = cfg.params.truth.to_vec();
    (0..cfg.study.n_experiments)
        .map(|i| {
            let design = if i % 2 == 1 {
                cfg.input.mirrored()
            } else {
                cfg.input.clone()
            };
            let seeds = ExperimentSeeds::from_master(split_seed(seed, i as u64));
            run_experiment_with(&truth, &design, &noise, n_d, seeds, &SimOptions::default())
                .with_context(|| format!("simulating experiment {i}"))
        })
        .collect()
}

/// Undisturbed, noise-free zigzag run shared by every repetition.
pub fn validation_experiment(cfg: &Config) -> Result<Experiment> {
    let seeds = ExperimentSeeds::from_master(split_seed(cfg.study.seed, VALIDATION_STREAM));
    let e = run_experiment_with(
        &cfg.params.truth.to_vec(),
        &cfg.input.zigzag(),
        &NoiseConfig::zero(),
        cfg.study.validation_len,
        seeds,
        &SimOptions::default(),
    )
    .context("simulating validation set")?;
    Ok(e.measured())
}

/// Estimates with one kind and scores the result on the validation set.
pub fn score(cfg: &Config, ds: &Dataset, kind: PredictorKind, validation: &Experiment) -> Score {
    let truth = cfg.params.truth.to_vec();
    let res = match estimate(ds, kind, &cfg.params.nominal.to_vec(), &cfg.estimate) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{kind} failed on {} samples: {e}", ds.total_samples());
            return Score {
                fit: [f64::NEG_INFINITY; 3],
                param_err: f64::NAN,
                diverged: true,
                instrument_mean: None,
            };
        }
    };
    let param_err = parameter_error(ship_structure(), &res.theta, &truth);
    let fit = match model_fit(validation, &res.theta, cfg.estimate.instruments.dt) {
        Ok(fit) if fit.iter().all(|f| f.is_finite()) => Some(fit),
        Ok(_) | Err(_) => None,
    };
    Score {
        fit: fit.unwrap_or([f64::NEG_INFINITY; 3]),
        param_err,
        diverged: fit.is_none(),
        instrument_mean: res.max_instrument_mean,
    }
}

pub fn run_study(cfg: &Config) -> Result<StudyResult> {
    let study = &cfg.study;
    study.validate()?;
    let kinds = study.kinds()?;
    let validation = validation_experiment(cfg)?;
    let n_max = study
        .grid
        .iter()
        .map(|&n| study.per_experiment(n))
        .max()
        .unwrap_or(0);

    let jobs: Vec<(usize, f64, usize)> = study
        .winds
        .iter()
        .enumerate()
        .flat_map(|(wi, &w)| (0..study.reps).map(move |r| (wi, w, r)))
        .collect();

    let per_job: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(wi, wind, run)| -> Result<Vec<RunRecord>> {
            let seed = split_seed(split_seed(study.seed, wi as u64), run as u64);
            let experiments = repetition_experiments(cfg, wind, seed, n_max)
                .with_context(|| format!("wind {wind}, repetition {run}"))?;
            let full = Dataset { experiments, seed };
            let mut out = Vec::with_capacity(study.grid.len() * kinds.len());
            for &n in &study.grid {
                let ds = full.prefix(study.per_experiment(n));
                for &kind in &kinds {
                    let s = score(cfg, &ds, kind, &validation);
                    out.push(RunRecord {
                        estimator: kind,
                        wind,
                        n,
                        run,
                        fit: s.fit,
                        param_err: s.param_err,
                        diverged: s.diverged,
                        instrument_mean: s.instrument_mean,
                    });
                }
            }
            log::info!("wind {wind} repetition {run} done");
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(StudyResult {
        kinds,
        winds: study.winds.clone(),
        grid: study.grid.clone(),
        reps: study.reps,
        runs: per_job.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_spread() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(Vec::new()).is_nan());
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}
