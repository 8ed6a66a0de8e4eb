//! Instrumental-variable estimation with nuisance augmentation.

mod fit;
mod instruments;
mod predictor;
mod solve;

pub use fit::{fit_value, model_fit};
pub use instruments::{
    build_instruments, build_regressors, center, n_equations, row_channel_means,
    simulate_instrument_signals, HeadingSource, InstrumentOptions, RegressorBlock,
};
pub use predictor::{Predictor, PredictorKind, Signals};
pub use solve::{solve_iv, solve_least_squares, IvSolution, StackedSystem};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{check_excitation, Dataset, ExcitationOptions, ExcitationReport};
use crate::som::{BlockDisturbance, ModelStructure, NuisanceParam, SignPattern};
use crate::vessel::ship_structure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateOptions {
    /// Relative parameter change that stops the refinement.
    pub tol: f64,
    pub max_iter: usize,
    pub instruments: InstrumentOptions,
    #[serde(skip)]
    pub excitation: ExcitationOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20,
            instruments: InstrumentOptions::default(),
            excitation: ExcitationOptions::default(),
        }
    }
}

/// Modulus arguments (1-based over `[x; u]`) of the blocks a predictor expands.
fn expanded_modulus_indices(structure: &ModelStructure, kind: PredictorKind) -> Vec<usize> {
    let mut idx: Vec<usize> = structure
        .blocks
        .iter()
        .filter(|b| !kind.uses_aux() || b.disturbance == BlockDisturbance::Unmeasured)
        .flat_map(|b| b.spec.modulus_indices())
        .collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Sign of the time average of every modulus argument, per experiment.
pub fn infer_sign_patterns(
    ds: &Dataset,
    structure: &ModelStructure,
    kind: PredictorKind,
) -> Result<Vec<SignPattern>> {
    if ds.experiments.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let idx = expanded_modulus_indices(structure, kind);
    let n_x = structure.n_x;
    ds.experiments
        .iter()
        .map(|e| {
            if e.is_empty() {
                return Err(Error::Empty("experiment"));
            }
            let n = e.len() as f64;
            let mut pairs = Vec::with_capacity(idx.len());
            for &i in &idx {
                let mean = if i <= n_x {
                    e.y.iter().map(|y| y[i - 1]).sum::<f64>() / n
                } else {
                    e.u.iter().map(|u| u[i - n_x - 1]).sum::<f64>() / n
                };
                if mean == 0.0 || !mean.is_finite() {
                    return Err(Error::ZeroMeanChannel { channel: i, mean });
                }
                pairs.push((i, if mean > 0.0 { 1 } else { -1 }));
            }
            SignPattern::new(pairs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub kind: PredictorKind,
    /// Names of the unknowns in `beta` order.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// Structure parameter vector; aggregated groups sit on their first member.
    pub theta: Vec<f64>,
    pub n_theta: usize,
    pub n_theta2: usize,
    pub rho_params: Vec<NuisanceParam>,
    pub lambda_params: Vec<NuisanceParam>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub condition: f64,
    pub iterations: usize,
    pub converged: bool,
    pub signs: Vec<SignPattern>,
    /// Largest absolute sample mean of any centered instrument row, IV kinds only.
    pub max_instrument_mean: Option<f64>,
    pub excitation: ExcitationReport,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn rho(&self) -> &[f64] {
        let a = self.n_theta + self.n_theta2;
        &self.beta[a..a + self.rho_params.len()]
    }

    pub fn lambda(&self) -> &[f64] {
        let a = self.n_theta + self.n_theta2 + self.rho_params.len();
        &self.beta[a..]
    }

    pub fn theta2(&self) -> &[f64] {
        &self.beta[self.n_theta..self.n_theta + self.n_theta2]
    }

    /// Plain-text report. `truth` is a structure parameter vector.
    pub fn report(&self, structure: &ModelStructure, truth: Option<&[f64]>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "estimator: {}", self.kind);
        let _ = writeln!(
            s,
            "iterations: {} ({})",
            self.iterations,
            if self.converged {
                "converged"
            } else {
                "not converged"
            }
        );
        let _ = writeln!(
            s,
            "rank: {} of {}, condition {:.3e}",
            self.rank,
            self.beta.len(),
            self.condition
        );
        for (i, p) in self.signs.iter().enumerate() {
            let _ = writeln!(s, "signs[{i}]: {p}");
        }
        if let Some(m) = self.max_instrument_mean {
            let _ = writeln!(s, "max |instrument mean|: {m:.3e}");
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<16} {:>16} {:>16} {:>12}",
            "parameter", "estimate", "truth", "rel. error"
        );
        for (i, name) in structure.param_names.iter().enumerate() {
            let est = self.theta[i];
            match truth {
                Some(t) => {
                    let rel = if t[i] != 0.0 {
                        ((est - t[i]) / t[i]).abs()
                    } else {
                        f64::NAN
                    };
                    let _ = writeln!(s, "{name:<16} {est:>16.8e} {:>16.8e} {rel:>12.3e}", t[i]);
                }
                None => {
                    let _ = writeln!(s, "{name:<16} {est:>16.8e}");
                }
            }
        }
        let nuis = self.n_theta + self.n_theta2;
        if self.beta.len() > nuis {
            let _ = writeln!(s);
            let _ = writeln!(s, "nuisance parameters:");
            for (name, v) in self.names[nuis..].iter().zip(&self.beta[nuis..]) {
                let _ = writeln!(s, "  {v:>16.8e}  {name}");
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "singular values:");
        for chunk in self.singular_values.chunks(6) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:.4e}")).collect();
            let _ = writeln!(s, "  {}", line.join(" "));
        }
        if self.excitation.violations().next().is_some() {
            let _ = writeln!(s);
            let _ = writeln!(s, "excitation:");
            let _ = write!(s, "{}", self.excitation);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Parameter vector with groups of identical regressors summed; every
/// estimator is compared in these coordinates.
pub fn aggregate_parameters(structure: &ModelStructure, theta: &[f64]) -> Vec<f64> {
    structure.merged_rows(|_| true).aggregate(theta)
}

/// `|agg(theta_hat) - agg(theta_0)| / |agg(theta_0)|`.
pub fn parameter_error(structure: &ModelStructure, theta_hat: &[f64], theta_0: &[f64]) -> f64 {
    let a = aggregate_parameters(structure, theta_hat);
    let b = aggregate_parameters(structure, theta_0);
    let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Elementwise `|a - b| / |b|`; zero entries of `b` compare absolutely.
pub fn relative_errors(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if *y == 0.0 {
                (x - y).abs()
            } else {
                ((x - y) / y).abs()
            }
        })
        .collect()
}

pub fn estimate(
    ds: &Dataset,
    kind: PredictorKind,
    nominal: &[f64],
    opts: &EstimateOptions,
) -> Result<EstimationResult> {
    estimate_with(ship_structure(), ds, kind, nominal, opts)
}

fn sim_error(nu: &[[f64; 3]], y: &[[f64; 3]]) -> f64 {
    nu.iter()
        .zip(y)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum::<f64>()
}

pub fn estimate_with(
    structure: &ModelStructure,
    ds: &Dataset,
    kind: PredictorKind,
    nominal: &[f64],
    opts: &EstimateOptions,
) -> Result<EstimationResult> {
    opts.instruments.validate()?;
    if nominal.len() != structure.n_params() {
        return Err(Error::DimensionMismatch {
            axis: "nominal parameters",
            expected: structure.n_params(),
            found: nominal.len(),
        });
    }
    if nominal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "nominal parameters",
            step: 0,
        });
    }
    let signs = if kind.is_augmented() {
        infer_sign_patterns(ds, structure, kind)?
    } else {
        Vec::new()
    };
    let pred = Predictor::new(kind, structure, &signs)?;
    let excitation = check_excitation(ds, &opts.excitation);
    let first = opts.instruments.first_sample();

    let regressors: Vec<RegressorBlock> = ds
        .experiments
        .iter()
        .enumerate()
        .map(|(i, e)| build_regressors(&pred, i, e, first))
        .collect::<Result<_>>()?;
    let rows: usize = regressors.iter().map(|r| r.phi.ncols()).sum();
    if rows < pred.n_unknowns() {
        return Err(Error::Underdetermined {
            rows,
            cols: pred.n_unknowns(),
        });
    }

    let mut warnings = Vec::new();
    let finish = |sol: IvSolution, iterations, converged, max_mean, warnings| EstimationResult {
        kind,
        names: pred.names(),
        theta: pred.to_full(sol.beta.as_slice()),
        beta: sol.beta.iter().copied().collect(),
        n_theta: pred.n_theta(),
        n_theta2: pred.n_theta2(),
        rho_params: pred.rho_params().to_vec(),
        lambda_params: pred.lambda_params().to_vec(),
        singular_values: sol.singular_values,
        rank: sol.rank,
        condition: sol.condition,
        iterations,
        converged,
        signs: signs.clone(),
        max_instrument_mean: max_mean,
        excitation: excitation.clone(),
        warnings,
    };

    if !kind.is_iv() {
        let mut sys = StackedSystem { blocks: Vec::new() };
        for r in &regressors {
            sys.push(&r.phi, &r.phi, &r.target)?;
        }
        return Ok(finish(solve_iv(&sys)?, 1, true, None, warnings));
    }

    let mut theta_inst = nominal.to_vec();
    // (solution, max instrument mean, simulation error of the model that built the instruments)
    let mut iterates: Vec<(IvSolution, f64, Vec<f64>)> = Vec::new();
    let mut inst_errors: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut last_error: Option<Error> = None;

    for it in 0..opts.max_iter.max(1) {
        let mut sys = StackedSystem { blocks: Vec::new() };
        let mut max_mean: f64 = 0.0;
        let mut err_sum = 0.0;
        let mut failed = None;
        for (i, (e, r)) in ds.experiments.iter().zip(&regressors).enumerate() {
            let (nu, psi) = match simulate_instrument_signals(&theta_inst, e, &opts.instruments) {
                Ok(v) => v,
                Err(err) => {
                    failed = Some(err);
                    break;
                }
            };
            err_sum += sim_error(&nu, &e.y);
            if it == 0 {
                check_nominal_signs(&pred, &signs, i, &nu, &mut warnings);
            }
            let (z, m) =
                instruments::instruments_from_signals(&pred, i, e, &nu, &psi, &opts.instruments);
            max_mean = max_mean.max(m);
            sys.push(&z, &r.phi, &r.target)?;
        }
        if let Some(err) = failed {
            warnings.push(format!(
                "instrument simulation failed at iteration {}: {err}",
                it + 1
            ));
            last_error = Some(err);
            break;
        }
        inst_errors.push(err_sum);
        let sol = match solve_iv(&sys) {
            Ok(s) => s,
            Err(err) if iterates.is_empty() => return Err(err),
            Err(err) => {
                warnings.push(format!("solve failed at iteration {}: {err}", it + 1));
                last_error = Some(err);
                break;
            }
        };
        let theta_new = pred.to_full(sol.beta.as_slice());
        let change = rel_change(&theta_new, &theta_inst);
        iterates.push((sol, max_mean, theta_new.clone()));
        log::debug!("{kind} iteration {}: relative change {change:.3e}", it + 1);
        if it > 0 && change < opts.tol {
            converged = true;
            break;
        }
        theta_inst = theta_new;
    }

    let Some(last) = iterates.len().checked_sub(1) else {
        return Err(last_error.unwrap_or(Error::Empty("refinement iterates")));
    };
    let pick = if converged {
        last
    } else {
        // iterate j was simulated when building the instruments of iteration j + 1;
        // pick the one with the smallest simulation error among those
        (0..last)
            .filter(|&j| j + 1 < inst_errors.len())
            .min_by(|&a, &b| inst_errors[a + 1].total_cmp(&inst_errors[b + 1]))
            .unwrap_or(last)
    };
    if !converged {
        warnings.push(format!(
            "refinement did not converge in {} iterations; returning iterate {}",
            iterates.len(),
            pick + 1
        ));
    }
    let iterations = iterates.len();
    let (sol, max_mean, _) = iterates.swap_remove(pick);
    Ok(finish(sol, iterations, converged, Some(max_mean), warnings))
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let num: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = old.iter().map(|b| b * b).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn check_nominal_signs(
    pred: &Predictor,
    signs: &[SignPattern],
    exp: usize,
    nu: &[[f64; 3]],
    warnings: &mut Vec<String>,
) {
    let Some(pattern) = signs.get(exp) else {
        return;
    };
    let n_x = pred.structure.n_x;
    for (i, s) in pattern.iter() {
        if i > n_x || nu.is_empty() {
            continue;
        }
        let mean = nu.iter().map(|v| v[i - 1]).sum::<f64>() / nu.len() as f64;
        if mean * f64::from(s) <= 0.0 {
            warnings.push(format!(
                "experiment {exp}: state {i} has measured sign {s:+} but the simulated model gives {mean:.3e}"
            ));
        }
    }
}
