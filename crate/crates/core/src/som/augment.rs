//! Sign-resolved expansion of modulus regressors and derivation of the
//! nuisance-augmented regressor rows.
//!
//! Under a fixed sign pattern every `|z_j|` becomes `s_j z_j`, so each entry of
//! `Phi` is an ordinary polynomial of degree at most two. Substituting the
//! disturbed state `x_i + sum_j R_ij v_j` and collecting by degree in `v`
//! splits the entry into a disturbance-free part, rows multiplying
//! `v_j theta_p` (the rho block) and rows multiplying `v_j v_m theta_p` (the
//! lambda block).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;

use super::poly::{Atom, Polynomial};
use super::term::{RegressorSpec, TermKind};
use crate::error::{Error, Result};

/// Fixed signs of the modulus arguments, keyed by stacked 1-based index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SignPattern {
    signs: BTreeMap<usize, i8>,
}

impl SignPattern {
    pub fn new(pairs: impl IntoIterator<Item = (usize, i64)>) -> Result<Self> {
        let mut signs = BTreeMap::new();
        for (index, s) in pairs {
            if s != 1 && s != -1 {
                return Err(Error::InvalidSign(s));
            }
            signs.insert(index, s as i8);
        }
        Ok(Self { signs })
    }

    /// Signs for states `1..=signs.len()`.
    pub fn from_states(signs: &[i8]) -> Result<Self> {
        Self::new(signs.iter().enumerate().map(|(i, s)| (i + 1, *s as i64)))
    }

    pub fn get(&self, index: usize) -> Option<i8> {
        self.signs.get(&index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.signs.iter().map(|(i, s)| (*i, *s))
    }

    pub fn negated(&self) -> Self {
        Self {
            signs: self.signs.iter().map(|(i, s)| (*i, -*s)).collect(),
        }
    }

    /// Restriction to the given indices; every one must be present.
    pub fn restricted(&self, indices: &[usize]) -> Result<Self> {
        let mut signs = BTreeMap::new();
        for &i in indices {
            signs.insert(i, self.get(i).ok_or(Error::MissingSign(i))?);
        }
        Ok(Self { signs })
    }
}

impl fmt::Display for SignPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, (i, s)) in self.signs.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{i}:{}", if *s > 0 { '+' } else { '-' })?;
        }
        write!(f, "]")
    }
}

fn stacked_atom(index: usize, n_x: usize) -> Atom {
    if index <= n_x {
        Atom::State(index)
    } else {
        Atom::Input(index - n_x)
    }
}

/// Modulus-free polynomial for one entry.
pub fn expand_term(term: TermKind, n_x: usize, signs: &SignPattern) -> Result<Polynomial> {
    let a = |i| Polynomial::atom(stacked_atom(i, n_x));
    let sign = |j| signs.get(j).map(i64::from).ok_or(Error::MissingSign(j));
    Ok(match term {
        TermKind::Zero => Polynomial::zero(),
        TermKind::Linear(i) => a(i),
        TermKind::Abs(i) => a(i).scaled(sign(i)?),
        TermKind::Cross(i, j) => a(i).mul(&a(j)),
        TermKind::CrossAbs(i, j) => a(i).mul(&a(j)).scaled(sign(j)?),
    })
}

/// Per-entry polynomials of a spec under a sign pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedSpec {
    pub n_theta: usize,
    pub n_f: usize,
    pub entries: Vec<Polynomial>,
}

impl ExpandedSpec {
    pub fn entry(&self, p: usize, f: usize) -> &Polynomial {
        &self.entries[p * self.n_f + f]
    }

    /// Evaluates on `[x; u]` with no gain atoms present.
    pub fn eval(&self, x: &[f64], u: &[f64]) -> nalgebra::DMatrix<f64> {
        let value = |a: Atom| match a {
            Atom::State(i) => x[i - 1],
            Atom::Input(i) => u[i - 1],
            Atom::REntry(..) => f64::NAN,
        };
        nalgebra::DMatrix::from_fn(self.n_theta, self.n_f, |p, f| self.entry(p, f).eval(value))
    }
}

pub fn expand_under_signs(spec: &RegressorSpec, signs: &SignPattern) -> Result<ExpandedSpec> {
    let entries = spec
        .entries()
        .map(|(_, _, t)| expand_term(t, spec.n_x(), signs))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpandedSpec {
        n_theta: spec.n_theta(),
        n_f: spec.n_f(),
        entries,
    })
}

/// How the disturbance enters the states: `x + R v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OffsetGain {
    /// `R` is `n_x x n_v`; rows of undisturbed states are identically zero and
    /// every other entry is an independent measured signal.
    Dense { n_v: usize, disturbed: Vec<usize> },
    /// Planar rotation acting on two states with `n_v = 2`:
    /// `[[c, s], [-s, c]]` where `c = R(a,1)`, `s = R(a,2)` and `c^2 + s^2 = 1`.
    PlanarRotation { states: [usize; 2] },
}

impl OffsetGain {
    pub fn dense(n_x: usize, n_v: usize) -> Result<Self> {
        if n_v == 0 {
            return Err(Error::EmptyDisturbance);
        }
        Ok(OffsetGain::Dense {
            n_v,
            disturbed: (1..=n_x).collect(),
        })
    }

    pub fn n_v(&self) -> usize {
        match self {
            OffsetGain::Dense { n_v, .. } => *n_v,
            OffsetGain::PlanarRotation { .. } => 2,
        }
    }

    pub fn disturbed_states(&self) -> Vec<usize> {
        match self {
            OffsetGain::Dense { disturbed, .. } => disturbed.clone(),
            OffsetGain::PlanarRotation { states } => states.to_vec(),
        }
    }

    fn cos_sin(states: &[usize; 2]) -> (Atom, Atom) {
        (Atom::REntry(states[0], 1), Atom::REntry(states[0], 2))
    }

    /// Symbolic `R(i, j)`, `None` when structurally zero.
    pub fn entry(&self, i: usize, j: usize) -> Option<Polynomial> {
        match self {
            OffsetGain::Dense { n_v, disturbed } => {
                (j <= *n_v && disturbed.contains(&i)).then(|| Polynomial::atom(Atom::REntry(i, j)))
            }
            OffsetGain::PlanarRotation { states } => {
                let (c, s) = Self::cos_sin(states);
                match (states.iter().position(|&k| k == i), j) {
                    (Some(0), 1) => Some(Polynomial::atom(c)),
                    (Some(0), 2) => Some(Polynomial::atom(s)),
                    (Some(1), 1) => Some(Polynomial::atom(s).scaled(-1)),
                    (Some(1), 2) => Some(Polynomial::atom(c)),
                    _ => None,
                }
            }
        }
    }

    /// Applies algebraic identities of the gain structure.
    fn reduce(&self, p: &Polynomial) -> Polynomial {
        match self {
            OffsetGain::Dense { .. } => p.clone(),
            OffsetGain::PlanarRotation { states } => {
                let (c, s) = Self::cos_sin(states);
                p.reduce_unit_circle(s, c)
            }
        }
    }

    /// Whether constant offsets can arise in the nuisance rows.
    fn has_identities(&self) -> bool {
        matches!(self, OffsetGain::PlanarRotation { .. })
    }
}

/// `v_j * theta_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RhoKey {
    pub j: usize,
    pub p: usize,
}

/// `v_j * v_m * theta_p` with `j <= m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LambdaKey {
    pub j: usize,
    pub m: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NuisanceKey {
    Rho(RhoKey),
    Lambda(LambdaKey),
}

impl NuisanceKey {
    fn order(&self) -> (u8, usize, usize, usize) {
        // p-major, then disturbance indices
        match *self {
            NuisanceKey::Rho(RhoKey { j, p }) => (0, p, j, 0),
            NuisanceKey::Lambda(LambdaKey { j, m, p }) => (1, p, j, m),
        }
    }

    pub fn theta_index(&self) -> usize {
        match *self {
            NuisanceKey::Rho(k) => k.p,
            NuisanceKey::Lambda(k) => k.p,
        }
    }

    /// Expected value of the nuisance signal given the disturbance moments.
    pub fn expected(&self, theta: &[f64], mean: &[f64], second_moment: &[Vec<f64>]) -> f64 {
        match *self {
            NuisanceKey::Rho(RhoKey { j, p }) => mean[j - 1] * theta[p],
            NuisanceKey::Lambda(LambdaKey { j, m, p }) => second_moment[j - 1][m - 1] * theta[p],
        }
    }
}

impl fmt::Display for NuisanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NuisanceKey::Rho(k) => write!(f, "v{}*th{}", k.j, k.p + 1),
            NuisanceKey::Lambda(k) => write!(f, "v{}*v{}*th{}", k.j, k.m, k.p + 1),
        }
    }
}

/// One free nuisance parameter: an exact linear combination of nuisance signals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NuisanceParam {
    pub members: Vec<(NuisanceKey, Ratio<i64>)>,
}

impl NuisanceParam {
    fn single(key: NuisanceKey) -> Self {
        Self {
            members: vec![(key, Ratio::from_integer(1))],
        }
    }

    pub fn leading(&self) -> NuisanceKey {
        self.members[0].0
    }

    /// Value this parameter estimates when the disturbance has the given moments.
    pub fn expected(&self, theta: &[f64], mean: &[f64], second_moment: &[Vec<f64>]) -> f64 {
        self.members
            .iter()
            .map(|(k, c)| {
                (*c.numer() as f64 / *c.denom() as f64) * k.expected(theta, mean, second_moment)
            })
            .sum()
    }
}

impl NuisanceKey {
    /// Like `Display` but with the base parameter named.
    pub fn label(&self, theta_names: &[String]) -> String {
        let name = |p: usize| {
            theta_names
                .get(p)
                .cloned()
                .unwrap_or_else(|| format!("th{}", p + 1))
        };
        match self {
            NuisanceKey::Rho(k) => format!("v{}*{}", k.j, name(k.p)),
            NuisanceKey::Lambda(k) => format!("v{}*v{}*{}", k.j, k.m, name(k.p)),
        }
    }
}

impl NuisanceParam {
    pub fn label(&self, theta_names: &[String]) -> String {
        let mut s = String::new();
        for (i, (k, c)) in self.members.iter().enumerate() {
            if i > 0 {
                s.push_str(" + ");
            }
            if *c != Ratio::from_integer(1) {
                s.push_str(&format!("({c})*"));
            }
            s.push_str(&k.label(theta_names));
        }
        s
    }
}

impl fmt::Display for NuisanceParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, c)) in self.members.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if *c != Ratio::from_integer(1) {
                write!(f, "({c})*")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

/// Disturbance-free spec plus the per-experiment rho and lambda rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedStructure {
    pub base_spec: RegressorSpec,
    pub gain: OffsetGain,
    pub signs: Vec<SignPattern>,
    pub rho: Vec<NuisanceParam>,
    pub lambda: Vec<NuisanceParam>,
    /// `rho_rows[experiment][row][column]`.
    pub rho_rows: Vec<Vec<Vec<Polynomial>>>,
    pub lambda_rows: Vec<Vec<Vec<Polynomial>>>,
}

/// Substitutes the disturbed states and splits one polynomial by degree in `v`.
/// Returns `(degree-0, degree-1 by j, degree-2 by (j, m))`.
#[allow(clippy::type_complexity)]
fn split_by_disturbance(
    poly: &Polynomial,
    gain: &OffsetGain,
) -> (
    Polynomial,
    BTreeMap<usize, Polynomial>,
    BTreeMap<(usize, usize), Polynomial>,
) {
    let n_v = gain.n_v();
    let mut base = Polynomial::zero();
    let mut first: BTreeMap<usize, Polynomial> = BTreeMap::new();
    let mut second: BTreeMap<(usize, usize), Polynomial> = BTreeMap::new();

    for term in poly.terms() {
        // each factor expands into (polynomial, disturbance index or none)
        let options: Vec<Vec<(Polynomial, Option<usize>)>> = term
            .factors
            .iter()
            .map(|&a| {
                let mut opts = vec![(Polynomial::atom(a), None)];
                if let Atom::State(i) = a {
                    for j in 1..=n_v {
                        if let Some(r) = gain.entry(i, j) {
                            opts.push((r, Some(j)));
                        }
                    }
                }
                opts
            })
            .collect();

        let mut stack: Vec<(Polynomial, Vec<usize>)> =
            vec![(Polynomial::constant(term.coefficient), Vec::new())];
        for opts in &options {
            let mut next = Vec::with_capacity(stack.len() * opts.len());
            for (p, vs) in &stack {
                for (o, v) in opts {
                    let mut vs = vs.clone();
                    vs.extend(v);
                    next.push((p.mul(o), vs));
                }
            }
            stack = next;
        }

        for (p, mut vs) in stack {
            vs.sort_unstable();
            match vs.as_slice() {
                [] => base.add(&p),
                [j] => first.entry(*j).or_default().add(&p),
                [j, m] => second.entry((*j, *m)).or_default().add(&p),
                _ => unreachable!("entries are at most quadratic"),
            }
        }
    }
    (base, first, second)
}

/// Derives rho/lambda rows for every experiment's sign pattern.
///
/// Inputs carry no disturbance, so entries depending only on inputs add no rows.
/// Rows that are structurally zero in every experiment are removed.
pub fn derive_augmented(
    spec: &RegressorSpec,
    signs: &[SignPattern],
    gain: &OffsetGain,
) -> Result<AugmentedStructure> {
    if gain.n_v() == 0 {
        return Err(Error::EmptyDisturbance);
    }
    if signs.is_empty() {
        return Err(Error::Empty("sign patterns"));
    }
    for s in gain.disturbed_states() {
        if s == 0 || s > spec.n_x() {
            return Err(Error::IndexOutOfRange {
                index: s,
                limit: spec.n_x(),
            });
        }
    }
    let n_f = spec.n_f();

    let mut rho_cols: Vec<BTreeMap<RhoKey, Vec<Polynomial>>> = Vec::new();
    let mut lambda_cols: Vec<BTreeMap<LambdaKey, Vec<Polynomial>>> = Vec::new();
    for pattern in signs {
        let expanded = expand_under_signs(spec, pattern)?;
        let mut rho: BTreeMap<RhoKey, Vec<Polynomial>> = BTreeMap::new();
        let mut lambda: BTreeMap<LambdaKey, Vec<Polynomial>> = BTreeMap::new();
        for p in 0..spec.n_theta() {
            for f in 0..n_f {
                let (_, first, second) = split_by_disturbance(expanded.entry(p, f), gain);
                for (j, poly) in first {
                    let poly = gain.reduce(&poly);
                    let row = rho
                        .entry(RhoKey { j, p })
                        .or_insert_with(|| vec![Polynomial::zero(); n_f]);
                    row[f].add(&poly);
                }
                for ((j, m), poly) in second {
                    let mut poly = gain.reduce(&poly);
                    if gain.has_identities() {
                        // constants are invisible to zero-mean instruments
                        poly = poly.without_constant();
                    }
                    let row = lambda
                        .entry(LambdaKey { j, m, p })
                        .or_insert_with(|| vec![Polynomial::zero(); n_f]);
                    row[f].add(&poly);
                }
            }
        }
        rho_cols.push(rho);
        lambda_cols.push(lambda);
    }

    // keep keys that are nonzero in at least one experiment, same order everywhere
    let rho_keys: BTreeSet<RhoKey> = rho_cols
        .iter()
        .flat_map(|m| m.iter())
        .filter(|(_, row)| row.iter().any(|p| !p.is_zero()))
        .map(|(k, _)| *k)
        .collect();
    let lambda_keys: BTreeSet<LambdaKey> = lambda_cols
        .iter()
        .flat_map(|m| m.iter())
        .filter(|(_, row)| row.iter().any(|p| !p.is_zero()))
        .map(|(k, _)| *k)
        .collect();
    let mut rho_keys: Vec<NuisanceKey> = rho_keys.into_iter().map(NuisanceKey::Rho).collect();
    let mut lambda_keys: Vec<NuisanceKey> =
        lambda_keys.into_iter().map(NuisanceKey::Lambda).collect();
    rho_keys.sort_by_key(NuisanceKey::order);
    lambda_keys.sort_by_key(NuisanceKey::order);

    let zero_row = || vec![Polynomial::zero(); n_f];
    let rho_rows = rho_cols
        .iter()
        .map(|m| {
            rho_keys
                .iter()
                .map(|k| match k {
                    NuisanceKey::Rho(r) => m.get(r).cloned().unwrap_or_else(zero_row),
                    NuisanceKey::Lambda(_) => unreachable!(),
                })
                .collect()
        })
        .collect();
    let lambda_rows = lambda_cols
        .iter()
        .map(|m| {
            lambda_keys
                .iter()
                .map(|k| match k {
                    NuisanceKey::Lambda(l) => m.get(l).cloned().unwrap_or_else(zero_row),
                    NuisanceKey::Rho(_) => unreachable!(),
                })
                .collect()
        })
        .collect();

    Ok(AugmentedStructure {
        base_spec: spec.clone(),
        gain: gain.clone(),
        signs: signs.to_vec(),
        rho: rho_keys.into_iter().map(NuisanceParam::single).collect(),
        lambda: lambda_keys.into_iter().map(NuisanceParam::single).collect(),
        rho_rows,
        lambda_rows,
    })
}

type SparseRow = BTreeMap<(usize, usize, Vec<Atom>), Ratio<i64>>;

fn sparse_row(per_exp: &[&Vec<Polynomial>]) -> SparseRow {
    let mut out = SparseRow::new();
    for (i, cols) in per_exp.iter().enumerate() {
        for (f, poly) in cols.iter().enumerate() {
            for (factors, c) in poly.raw_terms() {
                out.insert((i, f, factors.clone()), Ratio::from_integer(*c));
            }
        }
    }
    out
}

/// Incremental exact row reduction. Each basis vector remembers which kept
/// rows it is built from.
#[derive(Default)]
struct RowBasis {
    vectors: Vec<(SparseRow, BTreeMap<usize, Ratio<i64>>)>,
}

impl RowBasis {
    /// Returns `Ok(())` if `row` (with id `id`) is independent and was added, or
    /// `Err(expr)` with `row = sum expr[q] * row_q` over previously kept rows.
    fn insert(
        &mut self,
        id: usize,
        row: SparseRow,
    ) -> std::result::Result<(), BTreeMap<usize, Ratio<i64>>> {
        let mut v = row;
        let mut expr: BTreeMap<usize, Ratio<i64>> = BTreeMap::new();
        for (basis, origin) in &self.vectors {
            let (pivot, pv) = basis.iter().next().expect("basis vectors are nonzero");
            let Some(&coef) = v.get(pivot) else { continue };
            let factor = coef / *pv;
            for (key, val) in basis {
                let e = v
                    .entry(key.clone())
                    .or_insert_with(|| Ratio::from_integer(0));
                *e -= factor * *val;
                if *e.numer() == 0 {
                    v.remove(key);
                }
            }
            for (q, c) in origin {
                let e = expr.entry(*q).or_insert_with(|| Ratio::from_integer(0));
                *e += factor * *c;
            }
        }
        expr.retain(|_, c| *c.numer() != 0);
        if v.is_empty() {
            return Err(expr);
        }
        let mut origin: BTreeMap<usize, Ratio<i64>> =
            expr.into_iter().map(|(q, c)| (q, -c)).collect();
        origin.insert(id, Ratio::from_integer(1));
        // pivot must be a key no earlier basis vector pivots on; the reduction
        // above cleared those, so the smallest remaining key works
        self.vectors.push((v, origin));
        Ok(())
    }
}

impl AugmentedStructure {
    pub fn n_rho(&self) -> usize {
        self.rho.len()
    }

    pub fn n_lambda(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_experiments(&self) -> usize {
        self.signs.len()
    }

    /// Merges nuisance rows that are exact linear combinations of earlier rows
    /// (jointly over all experiments), so that every remaining nuisance
    /// parameter is identifiable from its regressors. Parameters of the base
    /// spec must be independent, otherwise `StructurallyUnidentifiable` names
    /// the first dependent one.
    pub fn identifiable(&self, theta_names: &[String]) -> Result<AugmentedStructure> {
        let n_exp = self.n_experiments();
        let n_f = self.base_spec.n_f();
        let mut basis = RowBasis::default();

        // base rows first
        for p in 0..self.base_spec.n_theta() {
            let mut per_exp = Vec::with_capacity(n_exp);
            for pattern in &self.signs {
                let cols = (0..n_f)
                    .map(|f| expand_term(self.base_spec.entry(p, f), self.base_spec.n_x(), pattern))
                    .collect::<Result<Vec<_>>>()?;
                per_exp.push(cols);
            }
            let refs: Vec<&Vec<Polynomial>> = per_exp.iter().collect();
            let row = sparse_row(&refs);
            if row.is_empty() || basis.insert(p, row).is_err() {
                let name = theta_names
                    .get(p)
                    .cloned()
                    .unwrap_or_else(|| format!("theta[{p}]"));
                return Err(Error::StructurallyUnidentifiable(name));
            }
        }

        let offset = self.base_spec.n_theta();
        let all: Vec<(&NuisanceParam, bool, usize)> = self
            .rho
            .iter()
            .enumerate()
            .map(|(r, n)| (n, true, r))
            .chain(self.lambda.iter().enumerate().map(|(r, n)| (n, false, r)))
            .collect();

        let mut kept: Vec<usize> = Vec::new();
        let mut folded: Vec<(usize, BTreeMap<usize, Ratio<i64>>)> = Vec::new();
        for (id, (_, is_rho, r)) in all.iter().enumerate() {
            let per_exp: Vec<&Vec<Polynomial>> = (0..n_exp)
                .map(|i| {
                    if *is_rho {
                        &self.rho_rows[i][*r]
                    } else {
                        &self.lambda_rows[i][*r]
                    }
                })
                .collect();
            match basis.insert(offset + id, sparse_row(&per_exp)) {
                Ok(()) => kept.push(id),
                Err(expr) => folded.push((id, expr)),
            }
        }

        // a dropped row n = sum_q c_q row_q adds c_q * param_n to kept param q
        let mut params: BTreeMap<usize, NuisanceParam> =
            kept.iter().map(|&id| (id, all[id].0.clone())).collect();
        for (id, expr) in folded {
            for (q, c) in expr {
                let q = q
                    .checked_sub(offset)
                    .ok_or_else(|| Error::StructurallyUnidentifiable(format!("nuisance {id}")))?;
                let target = params.get_mut(&q).expect("expressions refer to kept rows");
                for (key, w) in &all[id].0.members {
                    target.members.push((*key, c * *w));
                }
            }
        }
        for p in params.values_mut() {
            let mut merged: BTreeMap<NuisanceKey, Ratio<i64>> = BTreeMap::new();
            let lead = p.members[0];
            for (k, c) in &p.members {
                *merged.entry(*k).or_insert_with(|| Ratio::from_integer(0)) += *c;
            }
            merged.retain(|_, c| *c.numer() != 0);
            let mut members: Vec<(NuisanceKey, Ratio<i64>)> = vec![lead];
            members.extend(merged.into_iter().filter(|(k, _)| *k != lead.0));
            p.members = members;
        }

        let mut out = self.clone();
        out.rho.clear();
        out.lambda.clear();
        let mut rho_idx = Vec::new();
        let mut lambda_idx = Vec::new();
        for id in kept {
            let (_, is_rho, r) = all[id];
            if is_rho {
                out.rho.push(params[&id].clone());
                rho_idx.push(r);
            } else {
                out.lambda.push(params[&id].clone());
                lambda_idx.push(r);
            }
        }
        out.rho_rows = self
            .rho_rows
            .iter()
            .map(|rows| rho_idx.iter().map(|&r| rows[r].clone()).collect())
            .collect();
        out.lambda_rows = self
            .lambda_rows
            .iter()
            .map(|rows| lambda_idx.iter().map(|&r| rows[r].clone()).collect())
            .collect();
        Ok(out)
    }

    /// Evaluates the rho and lambda rows of one experiment.
    /// `gain_entry(i, j)` returns the measured `R(i, j)`.
    pub fn eval_nuisance_rows(
        &self,
        experiment: usize,
        x: &[f64],
        u: &[f64],
        gain_entry: impl Fn(usize, usize) -> f64,
    ) -> (nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>) {
        let value = |a: Atom| match a {
            Atom::State(i) => x[i - 1],
            Atom::Input(i) => u[i - 1],
            Atom::REntry(i, j) => gain_entry(i, j),
        };
        let n_f = self.base_spec.n_f();
        let rho = &self.rho_rows[experiment];
        let lambda = &self.lambda_rows[experiment];
        (
            nalgebra::DMatrix::from_fn(rho.len(), n_f, |r, f| rho[r][f].eval(value)),
            nalgebra::DMatrix::from_fn(lambda.len(), n_f, |r, f| lambda[r][f].eval(value)),
        )
    }
}
