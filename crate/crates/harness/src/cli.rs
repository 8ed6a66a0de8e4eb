//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use somiv::estim::{estimate, model_fit};
use somiv::sim::{check_excitation, Dataset, Experiment};
use somiv::vessel::{ship_structure, ShipParams};

use crate::config::Config;
use crate::report::emit_reports;
use crate::study::{repetition_experiments, run_study, validation_experiment, CHANNELS};

#[derive(Debug, Parser)]
#[command(
    name = "somiv",
    version,
    about = "Simulate, identify and benchmark second-order modulus vessel models"
)]
pub struct Cli {
    /// TOML file with [noise], [input], [study], [params.true], [params.nominal] sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (or file for `estimate` reports).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Comma-separated estimator list, e.g. `IV2,IV3,LS`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    /// Comma-separated mean wind speeds in m/s.
    #[arg(long, global = true, value_delimiter = ',')]
    pub wind: Option<Vec<f64>>,
    /// Monte Carlo repetitions.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Comma-separated sample counts.
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate estimation experiments and the validation set as CSV files.
    Simulate {
        /// Samples per experiment.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Also write the hidden simulation state.
        #[arg(long)]
        truth: bool,
    },
    /// Estimate parameters from experiment CSV files and print reports.
    Estimate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Compare against the true parameters of the config.
        #[arg(long)]
        compare: bool,
    },
    /// Fit of a parameter set on a validation CSV file.
    Validate {
        file: PathBuf,
        /// TOML file with the 17 parameters; the configured true set otherwise.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
    },
    /// Run the Monte Carlo fit-vs-N study and write CSV and SVG reports.
    Study,
    /// Sign-constancy and amplitude diagnostics of experiment CSV files.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn runtime<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

/// Config from file and flags.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.study.seed = s;
    }
    if let Some(e) = &cli.estimators {
        cfg.study.estimators = e.clone();
    }
    if let Some(w) = &cli.wind {
        cfg.study.winds = w.clone();
    }
    if let Some(r) = cli.reps {
        cfg.study.reps = r;
    }
    if let Some(g) = &cli.grid {
        cfg.study.grid = g.clone();
    }
    if let Some(o) = &cli.out {
        cfg.study.out = o.clone();
    }
    cfg.study.kinds()?;
    Ok(cfg)
}

fn read_experiment(path: &Path) -> Result<Experiment> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Experiment::read_csv(f).with_context(|| format!("reading {}", path.display()))
}

fn read_dataset(files: &[PathBuf], seed: u64) -> Result<Dataset> {
    let experiments = files
        .iter()
        .map(|p| read_experiment(p))
        .collect::<Result<_>>()?;
    Ok(Dataset { experiments, seed })
}

fn write_experiment(path: &Path, e: &Experiment, truth: bool) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    e.write_csv(std::io::BufWriter::new(f), truth)?;
    Ok(())
}

fn simulate(cfg: &Config, samples: usize, truth: bool) -> Result<()> {
    let wind = cfg.study.winds.first().copied().unwrap_or(1.0);
    let out = &cfg.study.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let experiments = repetition_experiments(cfg, wind, cfg.study.seed, samples)?;
    for (i, e) in experiments.iter().enumerate() {
        write_experiment(&out.join(format!("exp_{i}.csv")), e, truth)?;
    }
    write_experiment(
        &out.join("validation.csv"),
        &validation_experiment(cfg)?,
        false,
    )?;
    println!(
        "wrote {} experiments of {samples} samples and validation.csv to {}",
        experiments.len(),
        out.display()
    );
    Ok(())
}

fn estimate_cmd(cfg: &Config, files: &[PathBuf], compare: bool, out: Option<&Path>) -> Result<()> {
    let ds = read_dataset(files, cfg.study.seed)?;
    let truth = cfg.params.truth.to_vec();
    let mut text = String::new();
    for kind in cfg.study.kinds()? {
        let r = estimate(&ds, kind, &cfg.params.nominal.to_vec(), &cfg.estimate)
            .with_context(|| format!("{kind} estimate"))?;
        text.push_str(&r.report(ship_structure(), compare.then_some(truth.as_slice())));
        text.push('\n');
    }
    match out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn validate_cmd(cfg: &Config, file: &Path, model: Option<&Path>) -> Result<()> {
    let params = match model {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ShipParams::from_toml(&text)?
        }
        None => cfg.params.truth,
    };
    let e = read_experiment(file)?;
    let fit = model_fit(&e, &params.to_vec(), cfg.estimate.instruments.dt)?;
    for (name, f) in CHANNELS.iter().zip(fit) {
        println!("{name:<6} {f:>10.4}");
    }
    Ok(())
}

fn study_cmd(cfg: &Config) -> Result<()> {
    let res = run_study(cfg)?;
    let files = emit_reports(&res, &cfg.study.out, &[0, 1, 2])?;
    for r in res.aggregate() {
        println!(
            "{:<4} wind {:>4} N {:>6} {:<6} fit {:>9.3} +- {:>8.3}  diverged {}",
            r.estimator.label(),
            r.wind,
            r.n,
            CHANNELS[r.channel],
            r.mean,
            r.std,
            r.diverged
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn check_cmd(cfg: &Config, files: &[PathBuf]) -> Result<()> {
    let ds = read_dataset(files, cfg.study.seed)?;
    let report = check_excitation(&ds, &cfg.estimate.excitation);
    print!("{report}");
    let n = report.violations().count();
    if n == 0 {
        println!("no excitation violations");
    } else {
        println!("{n} channel(s) flagged");
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let cfg = usage(resolve_config(cli))?;
    match &cli.command {
        Command::Simulate { samples, truth } => {
            if *samples < 2 {
                return Err(Failure::Usage(anyhow!("--samples must be at least 2")));
            }
            runtime(simulate(&cfg, *samples, *truth))
        }
        Command::Estimate { files, compare } => {
            runtime(estimate_cmd(&cfg, files, *compare, cli.out.as_deref()))
        }
        Command::Validate { file, model } => runtime(validate_cmd(&cfg, file, model.as_deref())),
        Command::Study => {
            usage(cfg.study.validate())?;
            runtime(study_cmd(&cfg))
        }
        Command::Check { files } => runtime(check_cmd(&cfg, files)),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            f.code()
        }
    }
}
