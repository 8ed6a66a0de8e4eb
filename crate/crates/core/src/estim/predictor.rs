//! Predictor structures and regressor evaluation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::som::{
    derive_augmented, Atom, AugmentedStructure, BlockDisturbance, MergedRows, ModelStructure,
    NuisanceParam, OffsetGain, Polynomial, SignPattern,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorKind {
    /// Disturbance ignored; all blocks evaluated on the measured state.
    Basic,
    /// Basic rows plus nuisance rows for the unmeasured disturbance.
    Augmented,
    /// Augmented rows for the unmeasured blocks, measured blocks on `y + y_aux`.
    AugmentedWithAux,
    /// Least squares on the `AugmentedWithAux` regressors.
    LeastSquaresAux,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 4] = [
        PredictorKind::Basic,
        PredictorKind::Augmented,
        PredictorKind::AugmentedWithAux,
        PredictorKind::LeastSquaresAux,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PredictorKind::Basic => "IV1",
            PredictorKind::Augmented => "IV2",
            PredictorKind::AugmentedWithAux => "IV3",
            PredictorKind::LeastSquaresAux => "LS",
        }
    }

    pub fn uses_aux(&self) -> bool {
        matches!(
            self,
            PredictorKind::AugmentedWithAux | PredictorKind::LeastSquaresAux
        )
    }

    pub fn is_augmented(&self) -> bool {
        !matches!(self, PredictorKind::Basic)
    }

    pub fn is_iv(&self) -> bool {
        !matches!(self, PredictorKind::LeastSquaresAux)
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iv1" | "basic" => Ok(PredictorKind::Basic),
            "iv2" | "augmented" => Ok(PredictorKind::Augmented),
            "iv3" | "aux" | "augmented-aux" => Ok(PredictorKind::AugmentedWithAux),
            "ls" | "least-squares" => Ok(PredictorKind::LeastSquaresAux),
            other => Err(Error::Parse(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Polynomial flattened for fast repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
struct Compiled {
    terms: Vec<(f64, Vec<Atom>)>,
}

impl Compiled {
    fn new(p: &Polynomial) -> Self {
        Self {
            terms: p
                .terms()
                .map(|t| (t.coefficient as f64, t.factors.to_vec()))
                .collect(),
        }
    }

    #[inline]
    fn eval(&self, x: &[f64], u: &[f64], r: &[[f64; 2]; 2]) -> f64 {
        let mut acc = 0.0;
        for (c, atoms) in &self.terms {
            let mut v = *c;
            for a in atoms {
                v *= match *a {
                    Atom::State(i) => x[i - 1],
                    Atom::Input(i) => u[i - 1],
                    Atom::REntry(_, j) => r[0][j - 1],
                };
            }
            acc += v;
        }
        acc
    }
}

/// Signals a predictor is evaluated on at one sample.
#[derive(Debug, Clone, Copy)]
pub struct Signals<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    /// State argument of the measured blocks (`y + y_aux`).
    pub x_aux: &'a [f64],
    /// Rotation `(cos, sin)` of the offset gain.
    pub rotation: (f64, f64),
}

/// Regressor layout of one predictor over a set of experiments:
/// `[theta (unmeasured or merged) ; theta_2 (measured) ; rho ; lambda]`.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub kind: PredictorKind,
    pub structure: ModelStructure,
    pub main: MergedRows,
    pub measured: Option<MergedRows>,
    pub nuisance: Option<AugmentedStructure>,
    rho: Vec<Vec<Vec<Compiled>>>,
    lambda: Vec<Vec<Vec<Compiled>>>,
}

fn group_names(structure: &ModelStructure, rows: &MergedRows) -> Vec<String> {
    rows.groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&p| structure.param_names[p].as_str())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect()
}

impl Predictor {
    /// `signs[i]` is the sign pattern of experiment `i` over the modulus
    /// arguments of the expanded block.
    pub fn new(
        kind: PredictorKind,
        structure: &ModelStructure,
        signs: &[SignPattern],
    ) -> Result<Self> {
        if !matches!(structure.gain, OffsetGain::PlanarRotation { .. }) {
            return Err(Error::InvalidConfig(
                "estimation from heading measurements needs a planar-rotation gain".into(),
            ));
        }
        let has_measured = structure
            .blocks
            .iter()
            .any(|b| b.disturbance == BlockDisturbance::Measured);
        let (main, measured) = if kind.uses_aux() {
            if !has_measured {
                return Err(Error::InvalidConfig(format!(
                    "{kind} needs a block with a measured disturbance"
                )));
            }
            (
                structure.merged_rows(|b| b.disturbance == BlockDisturbance::Unmeasured),
                Some(structure.merged_rows(|b| b.disturbance == BlockDisturbance::Measured)),
            )
        } else {
            (structure.merged_rows(|_| true), None)
        };

        let nuisance = if kind.is_augmented() {
            if signs.is_empty() {
                return Err(Error::Empty("sign patterns"));
            }
            let aug = derive_augmented(&main.spec, signs, &structure.gain)?;
            Some(aug.identifiable(&group_names(structure, &main))?)
        } else {
            None
        };
        let compile = |rows: &Vec<Vec<Vec<Polynomial>>>| -> Vec<Vec<Vec<Compiled>>> {
            rows.iter()
                .map(|exp| {
                    exp.iter()
                        .map(|row| row.iter().map(Compiled::new).collect())
                        .collect()
                })
                .collect()
        };
        let (rho, lambda) = match &nuisance {
            Some(a) => (compile(&a.rho_rows), compile(&a.lambda_rows)),
            None => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            kind,
            structure: structure.clone(),
            main,
            measured,
            nuisance,
            rho,
            lambda,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.main.groups.len()
    }

    pub fn n_theta2(&self) -> usize {
        self.measured.as_ref().map_or(0, |m| m.groups.len())
    }

    pub fn n_rho(&self) -> usize {
        self.nuisance.as_ref().map_or(0, AugmentedStructure::n_rho)
    }

    pub fn n_lambda(&self) -> usize {
        self.nuisance
            .as_ref()
            .map_or(0, AugmentedStructure::n_lambda)
    }

    /// Number of unknowns.
    pub fn n_unknowns(&self) -> usize {
        self.n_theta() + self.n_theta2() + self.n_rho() + self.n_lambda()
    }

    pub fn rho_params(&self) -> &[NuisanceParam] {
        self.nuisance.as_ref().map_or(&[], |a| &a.rho)
    }

    pub fn lambda_params(&self) -> &[NuisanceParam] {
        self.nuisance.as_ref().map_or(&[], |a| &a.lambda)
    }

    /// Names of all unknowns in layout order.
    pub fn names(&self) -> Vec<String> {
        let mut out = group_names(&self.structure, &self.main);
        if let Some(m) = &self.measured {
            out.extend(group_names(&self.structure, m));
        }
        let theta_names = group_names(&self.structure, &self.main);
        let rename = |p: &NuisanceParam| p.label(&theta_names);
        out.extend(self.rho_params().iter().map(rename));
        out.extend(self.lambda_params().iter().map(rename));
        out
    }

    /// Full structure parameter vector from an unknown vector. Aggregated
    /// groups place their value on the first member and zero on the rest.
    pub fn to_full(&self, beta: &[f64]) -> Vec<f64> {
        let n = self.structure.n_params();
        let mut full = self.main.expand(&beta[..self.n_theta()], n);
        if let Some(m) = &self.measured {
            let part = m.expand(&beta[self.n_theta()..self.n_theta() + self.n_theta2()], n);
            for (f, p) in full.iter_mut().zip(part) {
                *f += p;
            }
        }
        full
    }

    /// Unknown-vector slices `(theta, theta_2, rho, lambda)`.
    pub fn split<'a>(&self, beta: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let a = self.n_theta();
        let b = a + self.n_theta2();
        let c = b + self.n_rho();
        (&beta[..a], &beta[a..b], &beta[b..c], &beta[c..])
    }

    /// Writes the `n_unknowns x n_f` regressor of experiment `exp` into
    /// columns `col..col + n_f` of `out`.
    pub fn eval_into(&self, exp: usize, s: &Signals<'_>, out: &mut DMatrix<f64>, col: usize) {
        let n_x = self.structure.n_x;
        let n_f = self.structure.n_f();
        let mut z = [0.0; 16];
        let nz = n_x + s.u.len();
        z[..n_x].copy_from_slice(&s.x[..n_x]);
        z[n_x..nz].copy_from_slice(s.u);
        let z = &z[..nz];
        let mut row = 0;
        for r in 0..self.main.spec.n_theta() {
            for f in 0..n_f {
                out[(row, col + f)] = self.main.spec.entry(r, f).eval(z);
            }
            row += 1;
        }
        if let Some(m) = &self.measured {
            let mut za = [0.0; 16];
            za[..n_x].copy_from_slice(&s.x_aux[..n_x]);
            za[n_x..nz].copy_from_slice(s.u);
            let za = &za[..nz];
            for r in 0..m.spec.n_theta() {
                for f in 0..n_f {
                    out[(row, col + f)] = m.spec.entry(r, f).eval(za);
                }
                row += 1;
            }
        }
        if self.nuisance.is_some() {
            let (c, sn) = s.rotation;
            let rot = [[c, sn], [-sn, c]];
            for rows in [&self.rho[exp], &self.lambda[exp]] {
                for r in rows {
                    for f in 0..n_f {
                        out[(row, col + f)] = r[f].eval(s.x, s.u, &rot);
                    }
                    row += 1;
                }
            }
        }
    }

    /// Regressor of one sample as a fresh matrix.
    pub fn eval(&self, exp: usize, s: &Signals<'_>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_unknowns(), self.structure.n_f());
        self.eval_into(exp, s, &mut out, 0);
        out
    }
}
