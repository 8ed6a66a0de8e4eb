//! Regressor and instrument matrices of one experiment.
//!
//! Both are stored as `m x (n_f * n)` matrices: sample `k` occupies columns
//! `n_f * k .. n_f * (k + 1)`, one column per output channel.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{free_run, Experiment};
use crate::vessel::VesselState;

use super::predictor::{Predictor, Signals};

/// Heading used in the rotation rows of the instruments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadingSource {
    /// Heading of the noise-free simulation, started at zero heading.
    /// Instruments then depend on the input alone.
    Simulated,
    /// Measured heading delayed by the given number of samples (>= 1).
    Lagged(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentOptions {
    pub heading: HeadingSource,
    /// Delay of the auxiliary measurement used in measured-block instruments.
    pub aux_lag: usize,
    /// Samples of constant input used to bring the simulation to rest.
    pub warmup: usize,
    pub dt: f64,
}

impl Default for InstrumentOptions {
    fn default() -> Self {
        Self {
            heading: HeadingSource::Lagged(1),
            aux_lag: 1,
            warmup: 300,
            dt: 1.0,
        }
    }
}

impl InstrumentOptions {
    /// First sample used in the equations; earlier samples only feed delays.
    pub fn first_sample(&self) -> usize {
        let heading = match self.heading {
            HeadingSource::Simulated => 0,
            HeadingSource::Lagged(l) => l,
        };
        heading.max(self.aux_lag).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.heading, HeadingSource::Lagged(0)) {
            return Err(Error::InvalidConfig(
                "heading lag must be at least 1".into(),
            ));
        }
        if self.aux_lag == 0 {
            return Err(Error::InvalidConfig(
                "auxiliary lag must be at least 1".into(),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(
                "sampling time must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Regressors and increment targets `y(k+1) - y(k)` of one experiment.
pub struct RegressorBlock {
    pub phi: DMatrix<f64>,
    pub target: DVector<f64>,
}

pub fn n_equations(exp: &Experiment, first: usize) -> usize {
    exp.len().saturating_sub(first + 1)
}

fn check_aux(pred: &Predictor, exp: &Experiment, index: usize) -> Result<()> {
    if pred.kind.uses_aux() && exp.y_aux.is_none() {
        return Err(Error::MissingAux(index));
    }
    Ok(())
}

/// Regressors on the measured signals.
pub fn build_regressors(
    pred: &Predictor,
    index: usize,
    exp: &Experiment,
    first: usize,
) -> Result<RegressorBlock> {
    check_aux(pred, exp, index)?;
    let n = n_equations(exp, first);
    let n_f = pred.structure.n_f();
    let mut phi = DMatrix::zeros(pred.n_unknowns(), n_f * n);
    let mut target = DVector::zeros(n_f * n);
    let mut x_aux = [0.0; 3];
    for (i, k) in (first..first + n).enumerate() {
        let y = &exp.y[k];
        if let Some(a) = &exp.y_aux {
            for c in 0..3 {
                x_aux[c] = y[c] + a[k][c];
            }
        }
        let s = Signals {
            x: y,
            u: &exp.u[k],
            x_aux: &x_aux,
            rotation: exp.rotation_entries(k),
        };
        pred.eval_into(index, &s, &mut phi, n_f * i);
        for c in 0..n_f {
            target[n_f * i + c] = exp.y[k + 1][c] - y[c];
        }
    }
    Ok(RegressorBlock { phi, target })
}

/// Noise-free, disturbance-free simulation of the model `theta` under the
/// experiment input. Starts at rest with zero heading after a warm-up at the
/// first input sample.
pub fn simulate_instrument_signals(
    theta: &[f64],
    exp: &Experiment,
    opts: &InstrumentOptions,
) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
    let first = *exp.u.first().ok_or(Error::Empty("experiment"))?;
    let mut start = VesselState::default();
    if opts.warmup > 0 {
        let rest = vec![first; opts.warmup + 1];
        let (nu, _) = free_run(theta, start, &rest, opts.dt)?;
        start.nu = Vector3::from(nu[opts.warmup]);
    }
    free_run(theta, start, &exp.u, opts.dt)
}

/// Instrument matrix, centered per row and channel over the used samples.
/// Returns it with the largest absolute row mean left after centering.
pub fn build_instruments(
    pred: &Predictor,
    theta: &[f64],
    index: usize,
    exp: &Experiment,
    opts: &InstrumentOptions,
) -> Result<(DMatrix<f64>, f64)> {
    check_aux(pred, exp, index)?;
    let (nu, psi) = simulate_instrument_signals(theta, exp, opts)?;
    Ok(instruments_from_signals(pred, index, exp, &nu, &psi, opts))
}

pub(crate) fn instruments_from_signals(
    pred: &Predictor,
    index: usize,
    exp: &Experiment,
    nu: &[[f64; 3]],
    psi: &[f64],
    opts: &InstrumentOptions,
) -> (DMatrix<f64>, f64) {
    let first = opts.first_sample();
    let n = n_equations(exp, first);
    let n_f = pred.structure.n_f();
    let m = pred.n_unknowns();
    let mut z = DMatrix::zeros(m, n_f * n);
    let mut x_aux = [0.0; 3];
    for (i, k) in (first..first + n).enumerate() {
        let x = &nu[k];
        if let Some(a) = &exp.y_aux {
            let lagged = &a[k - opts.aux_lag];
            for c in 0..3 {
                x_aux[c] = x[c] + lagged[c];
            }
        }
        let heading = match opts.heading {
            HeadingSource::Simulated => psi[k],
            HeadingSource::Lagged(l) => exp.y_psi[k - l],
        };
        let (s, c) = heading.sin_cos();
        let sig = Signals {
            x,
            u: &exp.u[k],
            x_aux: &x_aux,
            rotation: (c, s),
        };
        pred.eval_into(index, &sig, &mut z, n_f * i);
    }
    let max_mean = center(&mut z, n_f);
    (z, max_mean)
}

/// Subtracts the per-row, per-channel sample mean. Returns the largest
/// absolute mean remaining afterwards.
pub fn center(z: &mut DMatrix<f64>, n_f: usize) -> f64 {
    let n = z.ncols() / n_f;
    if n == 0 {
        return 0.0;
    }
    let means = row_channel_means(z, n_f);
    for k in 0..n {
        for f in 0..n_f {
            for r in 0..z.nrows() {
                z[(r, n_f * k + f)] -= means[(r, f)];
            }
        }
    }
    row_channel_means(z, n_f).amax()
}

pub fn row_channel_means(z: &DMatrix<f64>, n_f: usize) -> DMatrix<f64> {
    let n = (z.ncols() / n_f).max(1);
    let mut means = DMatrix::zeros(z.nrows(), n_f);
    for k in 0..z.ncols() / n_f {
        for f in 0..n_f {
            for r in 0..z.nrows() {
                means[(r, f)] += z[(r, n_f * k + f)];
            }
        }
    }
    means / n as f64
}
