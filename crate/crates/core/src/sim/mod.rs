//! Experiment generation: input design, disturbance and noise sampling,
//! Euler propagation of the vessel and synthesis of the measurements.

mod dataset;
mod excitation;

pub use dataset::{Dataset, Experiment, Truth};
pub use excitation::{check_excitation, ChannelExcitation, ExcitationOptions, ExcitationReport};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vessel::{
    body_disturbance, rotation_unchecked, velocity_increment, ShipParams, VesselState,
    WorldDisturbance,
};

/// Derives an independent stream seed (splitmix64 finalizer).
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Disturbance moments and measurement noise. All covariances are diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub var_e_nu: [f64; 3],
    pub var_e_psi: f64,
    pub current_mean: [f64; 2],
    pub current_var: f64,
    pub wind_mean: [f64; 2],
    pub wind_var: f64,
    pub var_e_aux: [f64; 3],
    /// Additive process noise on the velocity update.
    pub var_w: [f64; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::with_wind(1.0)
    }
}

impl NoiseConfig {
    /// Simulation-study settings with mean wind `wind` m/s in both directions.
    pub fn with_wind(wind: f64) -> Self {
        Self {
            var_e_nu: [2e-4; 3],
            var_e_psi: 1e-4,
            current_mean: [0.2, 0.2],
            current_var: 1e-3,
            wind_mean: [wind, wind],
            wind_var: 1e-3,
            var_e_aux: [1e-3; 3],
            var_w: [0.0; 3],
        }
    }

    /// No disturbances and no noise.
    pub fn zero() -> Self {
        Self {
            var_e_nu: [0.0; 3],
            var_e_psi: 0.0,
            current_mean: [0.0; 2],
            current_var: 0.0,
            wind_mean: [0.0; 2],
            wind_var: 0.0,
            var_e_aux: [0.0; 3],
            var_w: [0.0; 3],
        }
    }

    /// Same disturbances, no measurement noise.
    pub fn noise_free(&self) -> Self {
        Self {
            var_e_nu: [0.0; 3],
            var_e_psi: 0.0,
            var_e_aux: [0.0; 3],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vars = self
            .var_e_nu
            .iter()
            .chain(&self.var_e_aux)
            .chain(&self.var_w)
            .chain([&self.var_e_psi, &self.current_var, &self.wind_var]);
        for &v in vars {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "variance {v} must be finite and >= 0"
                )));
            }
        }
        if self
            .current_mean
            .iter()
            .chain(&self.wind_mean)
            .any(|m| !m.is_finite())
        {
            return Err(Error::InvalidConfig(
                "disturbance means must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// Static offset plus smoothed pulses on every channel.
    CircleOffset,
    /// Forward thrust with alternating-sign yaw moment and alternating
    /// thrust steps, no sway force.
    ZigzagValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputDesign {
    pub tau_bar: [f64; 3],
    pub amplitude: [f64; 3],
    /// Inclusive range of pulse widths in samples.
    pub width_min: usize,
    pub width_max: usize,
    /// First-order smoother time constant in samples, 0 disables smoothing.
    pub smoothing: f64,
    pub mode: InputMode,
}

/// Static offset keeping surge and current-relative sway positive under the
/// true model at both study wind levels (pilot simulation).
pub const DEFAULT_TAU_BAR: [f64; 3] = [28.0, 90.0, 40.0];

/// Pulse levels per channel. Large yaw pulses widen the sway range through
/// the `u r` coupling.
pub const DEFAULT_AMPLITUDE: [f64; 3] = [10.0, 40.0, 40.0];

impl Default for InputDesign {
    fn default() -> Self {
        Self::circle(DEFAULT_TAU_BAR, DEFAULT_AMPLITUDE)
    }
}

impl InputDesign {
    pub fn circle(tau_bar: [f64; 3], amplitude: [f64; 3]) -> Self {
        Self {
            tau_bar,
            amplitude,
            width_min: 10,
            width_max: 60,
            smoothing: 3.0,
            mode: InputMode::CircleOffset,
        }
    }

    /// Zigzag validation input derived from a circle design.
    pub fn zigzag(&self) -> Self {
        Self {
            mode: InputMode::ZigzagValidation,
            ..self.clone()
        }
    }

    /// Mirror image under `v -> -v`, `r -> -r`.
    pub fn mirrored(&self) -> Self {
        let mut d = self.clone();
        d.tau_bar[1] = -d.tau_bar[1];
        d.tau_bar[2] = -d.tau_bar[2];
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_min < 1 || self.width_max < self.width_min {
            return Err(Error::InvalidConfig(format!(
                "pulse widths must satisfy 1 <= min <= max, got [{}, {}]",
                self.width_min, self.width_max
            )));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::InvalidConfig(
                "smoothing constant must be >= 0".into(),
            ));
        }
        if self
            .tau_bar
            .iter()
            .chain(&self.amplitude)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("input levels must be finite".into()));
        }
        Ok(())
    }
}

fn pulse_train(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: &InputDesign,
    amplitude: f64,
    alternate: bool,
) -> Vec<f64> {
    let mut raw = Vec::with_capacity(n);
    let mut sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    while raw.len() < n {
        let width = rng.random_range(d.width_min..=d.width_max);
        let level = if alternate {
            sign = -sign;
            sign
        } else if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        };
        raw.extend(std::iter::repeat_n(
            level * amplitude,
            width.min(n - raw.len()),
        ));
    }
    if d.smoothing > 0.0 {
        let a = (-1.0 / d.smoothing).exp();
        let mut s = 0.0;
        for v in &mut raw {
            s = a * s + (1.0 - a) * *v;
            *v = s;
        }
    }
    raw
}

/// Open-loop input series of length `n`.
pub fn design_input(d: &InputDesign, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    d.validate()?;
    if n == 0 {
        return Err(Error::Empty("input length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![[0.0; 3]; n];
    match d.mode {
        InputMode::CircleOffset => {
            for c in 0..3 {
                let p = pulse_train(&mut rng, n, d, d.amplitude[c], false);
                for (o, v) in out.iter_mut().zip(p) {
                    o[c] = d.tau_bar[c] + v;
                }
            }
        }
        InputMode::ZigzagValidation => {
            let yaw = pulse_train(&mut rng, n, d, d.amplitude[2], true);
            let surge = pulse_train(&mut rng, n, d, d.amplitude[0], true);
            for ((o, r), s) in out.iter_mut().zip(yaw).zip(surge) {
                *o = [d.tau_bar[0] + s, 0.0, r];
            }
        }
    }
    Ok(out)
}

/// One Euler step of the vessel with unit sampling by default.
/// `nu_c`, `nu_w` are body-frame current and wind, `w` additive process noise.
pub fn step(
    params: &ShipParams,
    state: &VesselState,
    tau: &[f64; 3],
    nu_c: &Vector3<f64>,
    nu_w: &Vector3<f64>,
    w: &Vector3<f64>,
) -> Result<VesselState> {
    step_theta(&params.to_vec(), state, tau, nu_c, nu_w, w, 1.0)
}

pub fn step_theta(
    theta: &[f64],
    state: &VesselState,
    tau: &[f64; 3],
    nu_c: &Vector3<f64>,
    nu_w: &Vector3<f64>,
    w: &Vector3<f64>,
    dt: f64,
) -> Result<VesselState> {
    let nu = state.nu;
    let inc = velocity_increment(theta, &(nu - nu_c), &(nu - nu_w), tau);
    let next = VesselState {
        nu: nu + inc * dt + w,
        eta: state.eta + rotation_unchecked(state.eta[2]) * nu * dt,
    };
    if next.nu.iter().chain(next.eta.iter()).all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFinite {
            what: "vessel state",
            step: 0,
        })
    }
}

/// Noise-free, disturbance-free simulation from `start`.
/// Returns velocities and headings for every input sample.
pub fn free_run(
    theta: &[f64],
    start: VesselState,
    inputs: &[[f64; 3]],
    dt: f64,
) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
    let mut nu = Vec::with_capacity(inputs.len());
    let mut psi = Vec::with_capacity(inputs.len());
    let zero = Vector3::zeros();
    let mut s = start;
    for (k, tau) in inputs.iter().enumerate() {
        nu.push(s.nu.into());
        psi.push(s.eta[2]);
        if k + 1 < inputs.len() {
            s = step_theta(theta, &s, tau, &zero, &zero, &zero, dt).map_err(|_| {
                Error::NonFinite {
                    what: "free-run state",
                    step: k + 1,
                }
            })?;
        }
    }
    Ok((nu, psi))
}

/// Seeds of the independent random streams of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSeeds {
    pub input: u64,
    pub environment: u64,
    pub measurement: u64,
}

impl ExperimentSeeds {
    pub fn from_master(seed: u64) -> Self {
        Self {
            input: split_seed(seed, 0),
            environment: split_seed(seed, 1),
            measurement: split_seed(seed, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Samples simulated and discarded before recording.
    pub warmup: usize,
    pub dt: f64,
    /// Record auxiliary wind measurements.
    pub aux: bool,
    /// Initial heading; drawn uniformly from the environment stream when `None`.
    pub initial_heading: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            warmup: 300,
            dt: 1.0,
            aux: true,
            initial_heading: None,
        }
    }
}

pub fn run_experiment(
    params: &ShipParams,
    design: &InputDesign,
    noise: &NoiseConfig,
    n_d: usize,
    seed: u64,
) -> Result<Experiment> {
    run_experiment_with(
        &params.to_vec(),
        design,
        noise,
        n_d,
        ExperimentSeeds::from_master(seed),
        &SimOptions::default(),
    )
}

/// Simulates one experiment and synthesizes `y`, `y_psi` and `y_aux`.
///
/// The auxiliary measurement is the additive offset of the wind block,
/// `y_aux = -J^-1(psi) [wind, 0] + e_aux`, so that `y + y_aux` measures the
/// air-relative velocity.
pub fn run_experiment_with(
    theta: &[f64],
    design: &InputDesign,
    noise: &NoiseConfig,
    n_d: usize,
    seeds: ExperimentSeeds,
    opts: &SimOptions,
) -> Result<Experiment> {
    noise.validate()?;
    if n_d == 0 {
        return Err(Error::Empty("experiment length"));
    }
    let total = opts.warmup + n_d;
    let inputs = design_input(design, total, seeds.input)?;
    let mut env = ChaCha8Rng::seed_from_u64(seeds.environment);
    let mut meas = ChaCha8Rng::seed_from_u64(seeds.measurement);
    let gauss = |rng: &mut ChaCha8Rng, var: f64| {
        let z: f64 = rng.sample(StandardNormal);
        z * var.sqrt()
    };

    let psi0 = match opts.initial_heading {
        Some(p) => p,
        None => env.random_range(0.0..std::f64::consts::TAU),
    };
    let mut state = VesselState {
        nu: Vector3::zeros(),
        eta: Vector3::new(0.0, 0.0, psi0),
    };

    let mut e = Experiment {
        u: Vec::with_capacity(n_d),
        y: Vec::with_capacity(n_d),
        y_psi: Vec::with_capacity(n_d),
        y_aux: opts.aux.then(|| Vec::with_capacity(n_d)),
        truth: Some(Truth::default()),
    };
    let truth = e.truth.as_mut().expect("just set");

    for (k, tau) in inputs.iter().enumerate() {
        let dist = WorldDisturbance {
            current_ns: noise.current_mean[0] + gauss(&mut env, noise.current_var),
            current_ew: noise.current_mean[1] + gauss(&mut env, noise.current_var),
            wind_ns: noise.wind_mean[0] + gauss(&mut env, noise.wind_var),
            wind_ew: noise.wind_mean[1] + gauss(&mut env, noise.wind_var),
        };
        let w = Vector3::from_fn(|i, _| gauss(&mut env, noise.var_w[i]));
        let e_nu: [f64; 3] = std::array::from_fn(|i| gauss(&mut meas, noise.var_e_nu[i]));
        let e_psi = gauss(&mut meas, noise.var_e_psi);
        let e_aux: [f64; 3] = std::array::from_fn(|i| gauss(&mut meas, noise.var_e_aux[i]));

        let psi = state.eta[2];
        let (nu_c, nu_w) = body_disturbance(psi, &dist);
        if k >= opts.warmup {
            let nu = state.nu;
            e.u.push(*tau);
            e.y.push(std::array::from_fn(|i| nu[i] + e_nu[i]));
            e.y_psi.push(psi + e_psi);
            if let Some(aux) = e.y_aux.as_mut() {
                aux.push(std::array::from_fn(|i| -nu_w[i] + e_aux[i]));
            }
            truth.nu.push(nu.into());
            truth.eta.push(state.eta.into());
            truth.current.push([dist.current_ns, dist.current_ew]);
            truth.wind.push([dist.wind_ns, dist.wind_ew]);
        }
        state = step_theta(theta, &state, tau, &nu_c, &nu_w, &w, opts.dt).map_err(|_| {
            Error::NonFinite {
                what: "vessel state",
                step: k + 1,
            }
        })?;
    }
    Ok(e)
}
