//! Configuration file and study settings.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use somiv::estim::{EstimateOptions, PredictorKind};
use somiv::sim::{InputDesign, NoiseConfig};
use somiv::vessel::ShipParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Sample counts of the fit-vs-N curves.
    pub grid: Vec<usize>,
    pub reps: usize,
    /// Mean wind speeds, one study case each.
    pub winds: Vec<f64>,
    /// Estimator labels (`IV1`, `IV2`, `IV3`, `LS`).
    pub estimators: Vec<String>,
    pub seed: u64,
    /// Experiments per repetition; odd-numbered ones use the mirrored offsets.
    pub n_experiments: usize,
    /// `true`: each grid value is the total over all experiments.
    /// `false`: each grid value is the length of one experiment.
    pub n_is_total: bool,
    pub validation_len: usize,
    pub out: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            grid: (1..=5).map(|k| 1000 * k).collect(),
            reps: 100,
            winds: vec![1.0, 10.0],
            estimators: PredictorKind::ALL
                .iter()
                .map(|k| k.label().to_string())
                .collect(),
            seed: 1,
            n_experiments: 4,
            n_is_total: true,
            validation_len: 2000,
            out: PathBuf::from("out"),
        }
    }
}

impl StudyConfig {
    pub fn kinds(&self) -> Result<Vec<PredictorKind>> {
        self.estimators
            .iter()
            .map(|s| {
                s.parse()
                    .with_context(|| format!("estimator list entry `{s}`"))
            })
            .collect()
    }

    /// Samples per experiment for one grid value.
    pub fn per_experiment(&self, n: usize) -> usize {
        if self.n_is_total {
            n / self.n_experiments.max(1)
        } else {
            n
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            bail!("study grid is empty");
        }
        if self.reps == 0 {
            bail!("at least one repetition is required");
        }
        if self.n_experiments == 0 {
            bail!("at least one experiment per repetition is required");
        }
        for &n in &self.grid {
            if n < 2 || self.per_experiment(n) < 2 {
                bail!("grid value {n} leaves fewer than 2 samples per experiment");
            }
        }
        if self.winds.is_empty() || self.winds.iter().any(|w| !w.is_finite()) {
            bail!("wind cases must be finite and nonempty");
        }
        if self.kinds()?.is_empty() {
            bail!("no estimators selected");
        }
        if self.validation_len < 2 {
            bail!("validation set needs at least 2 samples");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSets {
    #[serde(rename = "true")]
    pub truth: ShipParams,
    pub nominal: ShipParams,
}

impl Default for ParamSets {
    fn default() -> Self {
        Self {
            truth: ShipParams::TRUE,
            nominal: ShipParams::NOMINAL,
        }
    }
}

/// Everything a config file can set. Missing sections keep their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub noise: NoiseConfig,
    pub input: InputDesign,
    pub study: StudyConfig,
    pub params: ParamSets,
    pub estimate: EstimateOptions,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).context("parsing config")?;
        cfg.noise.validate()?;
        cfg.input.validate()?;
        cfg.estimate.instruments.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
