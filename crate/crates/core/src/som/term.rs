//! Regressor entries of a second-order modulus function.
//!
//! Indices are 1-based positions into the stacked argument `z = [x; u]`, so
//! `1..=n_x` address states and `n_x+1..=n_x+n_u` address inputs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entry of the regressor matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermKind {
    Zero,
    Linear(usize),
    Abs(usize),
    /// `z_i * z_j`, stored with `i <= j`.
    Cross(usize, usize),
    /// `z_i * |z_j|`; the order of the indices matters.
    CrossAbs(usize, usize),
}

impl TermKind {
    /// Builds a canonical `Cross` term.
    pub fn cross(i: usize, j: usize) -> Self {
        TermKind::Cross(i.min(j), i.max(j))
    }

    pub fn canonical(self) -> Self {
        match self {
            TermKind::Cross(i, j) => TermKind::cross(i, j),
            other => other,
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        match *self {
            TermKind::Zero => vec![],
            TermKind::Linear(i) | TermKind::Abs(i) => vec![i],
            TermKind::Cross(i, j) | TermKind::CrossAbs(i, j) => vec![i, j],
        }
    }

    /// Index whose absolute value is taken, if any.
    pub fn modulus_index(&self) -> Option<usize> {
        match *self {
            TermKind::Abs(i) => Some(i),
            TermKind::CrossAbs(_, j) => Some(j),
            _ => None,
        }
    }

    /// Evaluates the entry on the stacked argument. Indices must already be validated.
    #[inline]
    pub fn eval(&self, z: &[f64]) -> f64 {
        match *self {
            TermKind::Zero => 0.0,
            TermKind::Linear(i) => z[i - 1],
            TermKind::Abs(i) => z[i - 1].abs(),
            TermKind::Cross(i, j) => z[i - 1] * z[j - 1],
            TermKind::CrossAbs(i, j) => z[i - 1] * z[j - 1].abs(),
        }
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TermKind::Zero => write!(f, "zero"),
            TermKind::Linear(i) => write!(f, "lin:{i}"),
            TermKind::Abs(i) => write!(f, "abs:{i}"),
            TermKind::Cross(i, j) => write!(f, "cross:{i},{j}"),
            TermKind::CrossAbs(i, j) => write!(f, "crossabs:{i},{j}"),
        }
    }
}

impl FromStr for TermKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" || s == "0" {
            return Ok(TermKind::Zero);
        }
        let (tag, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("term `{s}` has no `tag:` prefix")))?;
        let idx: Vec<usize> = rest
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad index `{p}` in term `{s}`")))
            })
            .collect::<Result<_>>()?;
        if idx.contains(&0) {
            return Err(Error::Parse(format!("indices are 1-based in term `{s}`")));
        }
        let arity = |n: usize| {
            if idx.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!("term `{s}` expects {n} indices")))
            }
        };
        match tag.trim() {
            "lin" => arity(1).map(|_| TermKind::Linear(idx[0])),
            "abs" => arity(1).map(|_| TermKind::Abs(idx[0])),
            "cross" => arity(2).map(|_| TermKind::cross(idx[0], idx[1])),
            "crossabs" => arity(2).map(|_| TermKind::CrossAbs(idx[0], idx[1])),
            other => Err(Error::Parse(format!("unknown term tag `{other}`"))),
        }
    }
}

impl Serialize for TermKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TermKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Deserialize, Serialize)]
struct RawSpec {
    n_x: usize,
    n_u: usize,
    rows: Vec<Vec<TermKind>>,
}

/// Dense `n_theta x n_f` grid of regressor entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct RegressorSpec {
    n_x: usize,
    n_u: usize,
    n_f: usize,
    entries: Vec<TermKind>,
}

impl TryFrom<RawSpec> for RegressorSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let n_f = raw.rows.first().map_or(raw.n_x, Vec::len);
        RegressorSpec::new(raw.n_x, raw.n_u, n_f, raw.rows)
    }
}

impl From<RegressorSpec> for RawSpec {
    fn from(spec: RegressorSpec) -> Self {
        RawSpec {
            n_x: spec.n_x,
            n_u: spec.n_u,
            rows: (0..spec.n_theta()).map(|p| spec.row(p).to_vec()).collect(),
        }
    }
}

impl RegressorSpec {
    pub fn new(n_x: usize, n_u: usize, n_f: usize, rows: Vec<Vec<TermKind>>) -> Result<Self> {
        let limit = n_x + n_u;
        let mut entries = Vec::with_capacity(rows.len() * n_f);
        for row in rows {
            if row.len() != n_f {
                return Err(Error::DimensionMismatch {
                    axis: "regressor columns",
                    expected: n_f,
                    found: row.len(),
                });
            }
            for term in row {
                for index in term.indices() {
                    if index == 0 || index > limit {
                        return Err(Error::IndexOutOfRange { index, limit });
                    }
                }
                entries.push(term.canonical());
            }
        }
        Ok(Self {
            n_x,
            n_u,
            n_f,
            entries,
        })
    }

    /// All-zero spec of the given shape.
    pub fn zeros(n_x: usize, n_u: usize, n_theta: usize, n_f: usize) -> Self {
        Self {
            n_x,
            n_u,
            n_f,
            entries: vec![TermKind::Zero; n_theta * n_f],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("regressor spec serializes")
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_theta(&self) -> usize {
        if self.n_f == 0 {
            0
        } else {
            self.entries.len() / self.n_f
        }
    }

    pub fn entry(&self, p: usize, f: usize) -> TermKind {
        self.entries[p * self.n_f + f]
    }

    pub fn row(&self, p: usize) -> &[TermKind] {
        &self.entries[p * self.n_f..(p + 1) * self.n_f]
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, TermKind)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(move |(k, t)| (k / self.n_f, k % self.n_f, *t))
    }

    /// Stacked indices that appear inside an absolute value.
    pub fn modulus_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .entries
            .iter()
            .filter_map(TermKind::modulus_index)
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    /// Stacks a subset of rows into a new spec.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut entries = Vec::with_capacity(rows.len() * self.n_f);
        for &p in rows {
            entries.extend_from_slice(self.row(p));
        }
        Self {
            n_x: self.n_x,
            n_u: self.n_u,
            n_f: self.n_f,
            entries,
        }
    }

    /// Vertical concatenation; both specs must share dimension metadata.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if (self.n_x, self.n_u, self.n_f) != (other.n_x, other.n_u, other.n_f) {
            return Err(Error::DimensionMismatch {
                axis: "stacked spec metadata",
                expected: self.n_x + self.n_u + self.n_f,
                found: other.n_x + other.n_u + other.n_f,
            });
        }
        let mut out = self.clone();
        out.entries.extend_from_slice(&other.entries);
        Ok(out)
    }

    fn check_args(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n_x {
            return Err(Error::DimensionMismatch {
                axis: "state",
                expected: self.n_x,
                found: x.len(),
            });
        }
        if u.len() != self.n_u {
            return Err(Error::DimensionMismatch {
                axis: "input",
                expected: self.n_u,
                found: u.len(),
            });
        }
        Ok(())
    }

    /// Evaluates every entry on `[x; u]`.
    pub fn eval_regressor(&self, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_args(x, u)?;
        let z: Vec<f64> = x.iter().chain(u).copied().collect();
        Ok(DMatrix::from_fn(self.n_theta(), self.n_f, |p, f| {
            self.entry(p, f).eval(&z)
        }))
    }

    /// `Phi(x, u)^T theta`.
    pub fn eval_som(&self, theta: &[f64], x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        self.check_args(x, u)?;
        if theta.len() != self.n_theta() {
            return Err(Error::DimensionMismatch {
                axis: "parameter",
                expected: self.n_theta(),
                found: theta.len(),
            });
        }
        let z: Vec<f64> = x.iter().chain(u).copied().collect();
        Ok(DVector::from_fn(self.n_f, |f, _| {
            self.eval_column(theta, &z, f)
        }))
    }

    /// Single output channel of `Phi^T theta` on a prepared stacked argument.
    #[inline]
    pub fn eval_column(&self, theta: &[f64], z: &[f64], f: usize) -> f64 {
        let mut acc = 0.0;
        for (p, th) in theta.iter().enumerate() {
            let t = self.entries[p * self.n_f + f];
            if t != TermKind::Zero {
                acc += th * t.eval(z);
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_2x1(term: TermKind) -> RegressorSpec {
        RegressorSpec::new(2, 0, 1, vec![vec![term]]).unwrap()
    }

    #[test]
    fn abs_entry() {
        let m = spec_2x1(TermKind::Abs(2))
            .eval_regressor(&[2.0, -3.0], &[])
            .unwrap();
        assert_eq!(m[(0, 0)], 3.0);
    }

    #[test]
    fn cross_abs_entry() {
        let m = spec_2x1(TermKind::CrossAbs(1, 2))
            .eval_regressor(&[2.0, -3.0], &[])
            .unwrap();
        assert_eq!(m[(0, 0)], 6.0);
    }

    #[test]
    fn zero_spec_gives_zero_matrix() {
        let spec = RegressorSpec::zeros(2, 1, 3, 2);
        let m = spec.eval_regressor(&[1.5, -2.0], &[7.0]).unwrap();
        assert_eq!(m, DMatrix::zeros(3, 2));
    }

    #[test]
    fn eval_som_basic_cases() {
        let spec = RegressorSpec::new(1, 0, 1, vec![vec![TermKind::Linear(1)]]).unwrap();
        assert_eq!(spec.eval_som(&[0.0], &[4.0], &[]).unwrap()[0], 0.0);
        assert_eq!(spec.eval_som(&[2.5], &[4.0], &[]).unwrap()[0], 10.0);
    }

    #[test]
    fn dimension_errors_name_the_axis() {
        let spec = spec_2x1(TermKind::Linear(1));
        match spec.eval_regressor(&[1.0], &[]) {
            Err(Error::DimensionMismatch { axis, .. }) => assert_eq!(axis, "state"),
            other => panic!("unexpected {other:?}"),
        }
        match spec.eval_som(&[1.0, 2.0], &[1.0, 2.0], &[]) {
            Err(Error::DimensionMismatch { axis, .. }) => assert_eq!(axis, "parameter"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            RegressorSpec::new(2, 0, 1, vec![vec![TermKind::Linear(3)]]),
            Err(Error::IndexOutOfRange { index: 3, limit: 2 })
        ));
    }

    #[test]
    fn cross_is_canonicalized() {
        let spec = spec_2x1(TermKind::Cross(2, 1));
        assert_eq!(spec.entry(0, 0), TermKind::Cross(1, 2));
        assert_eq!(
            "cross:2,1".parse::<TermKind>().unwrap(),
            TermKind::Cross(1, 2)
        );
        assert_eq!(
            "crossabs:2,1".parse::<TermKind>().unwrap(),
            TermKind::CrossAbs(2, 1)
        );
    }

    #[test]
    fn tags_parse_and_print() {
        for tag in ["zero", "lin:1", "abs:2", "cross:1,2", "crossabs:2,1"] {
            assert_eq!(tag.parse::<TermKind>().unwrap().to_string(), tag);
        }
        assert!("abs:0".parse::<TermKind>().is_err());
        assert!("cube:1".parse::<TermKind>().is_err());
        assert!("cross:1".parse::<TermKind>().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
n_x = 2
n_u = 1
rows = [
  ["lin:1", "zero"],
  ["crossabs:2,1", "cross:1,3"],
]
"#;
        let spec = RegressorSpec::from_toml(text).unwrap();
        assert_eq!(spec.n_theta(), 2);
        assert_eq!(spec.n_f(), 2);
        assert_eq!(spec.entry(1, 0), TermKind::CrossAbs(2, 1));
        let back = RegressorSpec::from_toml(&spec.to_toml()).unwrap();
        assert_eq!(back, spec);
        assert!(RegressorSpec::from_toml("n_x = 1\nn_u = 0\nrows = [[\"lin:4\"]]").is_err());
    }
}
