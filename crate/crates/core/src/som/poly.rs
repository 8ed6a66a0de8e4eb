//! Exact polynomials over signal atoms with integer coefficients.

use std::collections::BTreeMap;
use std::fmt;

/// A signal factor. Ordering (kind, then indices) is the canonical factor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    /// 1-based state index.
    State(usize),
    /// 1-based input index.
    Input(usize),
    /// Entry `(i, j)` of the disturbance gain matrix, 1-based.
    REntry(usize, usize),
}

impl Atom {
    pub fn is_signal_gain(&self) -> bool {
        matches!(self, Atom::REntry(..))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::State(i) => write!(f, "x{i}"),
            Atom::Input(i) => write!(f, "u{i}"),
            Atom::REntry(i, j) => write!(f, "R{i}{j}"),
        }
    }
}

/// Borrowed view of one monomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyTerm<'a> {
    pub coefficient: i64,
    pub factors: &'a [Atom],
}

/// Sparse polynomial; monomials are sorted atom lists, zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Polynomial {
    terms: BTreeMap<Vec<Atom>, i64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: i64) -> Self {
        let mut p = Self::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn atom(a: Atom) -> Self {
        let mut p = Self::zero();
        p.add_term(vec![a], 1);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = PolyTerm<'_>> {
        self.terms.iter().map(|(f, &c)| PolyTerm {
            coefficient: c,
            factors: f,
        })
    }

    /// Highest number of factors in any monomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, mut factors: Vec<Atom>, coefficient: i64) {
        if coefficient == 0 {
            return;
        }
        factors.sort_unstable();
        let entry = self.terms.entry(factors).or_insert(0);
        *entry += coefficient;
        if *entry == 0 {
            // re-lookup to remove the cancelled monomial
            self.terms.retain(|_, c| *c != 0);
        }
    }

    pub fn add(&mut self, other: &Polynomial) {
        for (f, &c) in &other.terms {
            self.add_term(f.clone(), c);
        }
    }

    pub fn scaled(&self, k: i64) -> Polynomial {
        let mut out = Polynomial::zero();
        for (f, &c) in &self.terms {
            out.add_term(f.clone(), c * k);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (fa, &ca) in &self.terms {
            for (fb, &cb) in &other.terms {
                let mut f = fa.clone();
                f.extend_from_slice(fb);
                out.add_term(f, ca * cb);
            }
        }
        out
    }

    /// Drops the constant monomial, if any.
    pub fn without_constant(&self) -> Polynomial {
        let mut out = self.clone();
        out.terms.remove(&Vec::new());
        out
    }

    /// Replaces every occurrence of `square` squared using `square^2 = 1 - other^2`.
    pub fn reduce_unit_circle(&self, square: Atom, other: Atom) -> Polynomial {
        let mut out = Polynomial::zero();
        for (f, &c) in &self.terms {
            let n = f.iter().filter(|a| **a == square).count();
            if n < 2 {
                out.add_term(f.clone(), c);
                continue;
            }
            let mut rest: Vec<Atom> = Vec::with_capacity(f.len());
            let mut removed = 0;
            for a in f {
                if *a == square && removed < 2 {
                    removed += 1;
                } else {
                    rest.push(*a);
                }
            }
            let base = Polynomial {
                terms: BTreeMap::from([(rest, c)]),
            };
            let mut identity = Polynomial::constant(1);
            identity.add_term(vec![other, other], -1);
            let reduced = base.mul(&identity).reduce_unit_circle(square, other);
            out.add(&reduced);
        }
        out
    }

    pub fn eval(&self, value: impl Fn(Atom) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(f, &c)| f.iter().fold(c as f64, |acc, a| acc * value(*a)))
            .sum()
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.terms.keys().flat_map(|f| f.iter().copied())
    }

    pub(crate) fn raw_terms(&self) -> &BTreeMap<Vec<Atom>, i64> {
        &self.terms
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (factors, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " {} ", if *c < 0 { '-' } else { '+' })?;
            } else if *c < 0 {
                write!(f, "-")?;
            }
            let mag = c.abs();
            if factors.is_empty() || mag != 1 {
                write!(f, "{mag}")?;
            }
            for (i, a) in factors.iter().enumerate() {
                if i > 0 || mag != 1 {
                    write!(f, "*")?;
                }
                write!(f, "{a}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_removes_monomials() {
        let mut p = Polynomial::atom(Atom::State(1));
        p.add(&Polynomial::atom(Atom::State(1)).scaled(-1));
        assert!(p.is_zero());
    }

    #[test]
    fn factors_are_sorted() {
        let mut p = Polynomial::zero();
        p.add_term(vec![Atom::REntry(1, 1), Atom::State(2)], 1);
        p.add_term(vec![Atom::State(2), Atom::REntry(1, 1)], 1);
        let t: Vec<_> = p.terms().collect();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].coefficient, 2);
        assert_eq!(t[0].factors, &[Atom::State(2), Atom::REntry(1, 1)]);
    }

    #[test]
    fn unit_circle_reduction() {
        let c = Atom::REntry(1, 1);
        let s = Atom::REntry(1, 2);
        let mut p = Polynomial::zero();
        p.add_term(vec![s, s], 3);
        p.add_term(vec![c, s], 2);
        let r = p.reduce_unit_circle(s, c);
        let mut expected = Polynomial::constant(3);
        expected.add_term(vec![c, c], -3);
        expected.add_term(vec![c, s], 2);
        assert_eq!(r, expected);
        let angle: f64 = 0.7;
        let val = |a: Atom| if a == c { angle.cos() } else { angle.sin() };
        assert!((p.eval(val) - r.eval(val)).abs() < 1e-14);
    }

    #[test]
    fn display() {
        let mut p = Polynomial::zero();
        p.add_term(vec![Atom::State(1), Atom::REntry(1, 2)], 2);
        p.add_term(vec![Atom::Input(1)], -1);
        assert_eq!(p.to_string(), "2*x1*R12 - u1");
    }
}
