//! Model structures built from one or more modulus blocks.
//!
//! A block is a regressor spec whose argument is the state offset by its own
//! disturbance. Blocks share the parameter vector layout through `params`.

use crate::error::{Error, Result};

use super::augment::OffsetGain;
use super::term::{RegressorSpec, TermKind};

/// Which disturbance offsets the state inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockDisturbance {
    /// Not measured; handled through nuisance parameters.
    Unmeasured,
    /// Measured through an auxiliary signal `y_aux = R v + e_aux`.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelBlock {
    pub label: String,
    pub spec: RegressorSpec,
    /// Position of each spec row in the full parameter vector.
    pub params: Vec<usize>,
    pub disturbance: BlockDisturbance,
}

/// A group of full-vector parameters whose regressors coincide once all
/// blocks are evaluated on the same argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedRows {
    pub spec: RegressorSpec,
    /// `groups[r]` lists the full-vector parameters aggregated by row `r`.
    pub groups: Vec<Vec<usize>>,
}

impl MergedRows {
    /// Sums a full parameter vector into the merged layout.
    pub fn aggregate(&self, full: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| full[i]).sum())
            .collect()
    }

    /// Places merged values on the first parameter of each group, zero elsewhere.
    pub fn expand(&self, merged: &[f64], n_params: usize) -> Vec<f64> {
        let mut full = vec![0.0; n_params];
        for (g, v) in self.groups.iter().zip(merged) {
            full[g[0]] = *v;
        }
        full
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStructure {
    pub n_x: usize,
    pub n_u: usize,
    pub param_names: Vec<String>,
    pub blocks: Vec<ModelBlock>,
    pub gain: OffsetGain,
    /// `x(k+1) = x(k) + Phi^T theta` instead of `x(k+1) = Phi^T theta`.
    pub increment: bool,
}

impl ModelStructure {
    pub fn new(
        param_names: Vec<String>,
        blocks: Vec<ModelBlock>,
        gain: OffsetGain,
        increment: bool,
    ) -> Result<Self> {
        let first = blocks.first().ok_or(Error::Empty("model blocks"))?;
        let (n_x, n_u, n_f) = (first.spec.n_x(), first.spec.n_u(), first.spec.n_f());
        let mut seen = vec![false; param_names.len()];
        for b in &blocks {
            if (b.spec.n_x(), b.spec.n_u(), b.spec.n_f()) != (n_x, n_u, n_f) {
                return Err(Error::InvalidConfig(format!(
                    "block `{}` has different dimensions",
                    b.label
                )));
            }
            if b.params.len() != b.spec.n_theta() {
                return Err(Error::DimensionMismatch {
                    axis: "block parameter map",
                    expected: b.spec.n_theta(),
                    found: b.params.len(),
                });
            }
            for &p in &b.params {
                if p >= seen.len() || seen[p] {
                    return Err(Error::InvalidConfig(format!(
                        "parameter slot {p} of block `{}` is out of range or reused",
                        b.label
                    )));
                }
                seen[p] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig(
                "some parameters belong to no block".into(),
            ));
        }
        if n_f != n_x && increment {
            return Err(Error::DimensionMismatch {
                axis: "output channels",
                expected: n_x,
                found: n_f,
            });
        }
        Ok(Self {
            n_x,
            n_u,
            param_names,
            blocks,
            gain,
            increment,
        })
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn n_f(&self) -> usize {
        self.blocks[0].spec.n_f()
    }

    /// Every parameter row placed at its slot of the full vector.
    pub fn full_spec(&self) -> RegressorSpec {
        let n_f = self.n_f();
        let mut rows = vec![vec![TermKind::Zero; n_f]; self.n_params()];
        for b in &self.blocks {
            for (r, &p) in b.params.iter().enumerate() {
                rows[p] = b.spec.row(r).to_vec();
            }
        }
        RegressorSpec::new(self.n_x, self.n_u, n_f, rows).expect("blocks were validated")
    }

    /// Rows of the selected blocks with identical term rows merged,
    /// in order of first appearance in the full layout.
    pub fn merged_rows(&self, which: impl Fn(&ModelBlock) -> bool) -> MergedRows {
        let full = self.full_spec();
        let mut included = vec![false; self.n_params()];
        for b in self.blocks.iter().filter(|b| which(b)) {
            for &p in &b.params {
                included[p] = true;
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut rows: Vec<Vec<TermKind>> = Vec::new();
        for p in (0..self.n_params()).filter(|&p| included[p]) {
            match rows.iter().position(|r| r.as_slice() == full.row(p)) {
                Some(k) => groups[k].push(p),
                None => {
                    rows.push(full.row(p).to_vec());
                    groups.push(vec![p]);
                }
            }
        }
        let spec = RegressorSpec::new(self.n_x, self.n_u, self.n_f(), rows)
            .expect("rows come from a valid spec");
        MergedRows { spec, groups }
    }

    /// One step of the dynamics with a separate state offset per block.
    /// `offsets[b]` is added to the state before evaluating block `b`.
    pub fn step(&self, theta: &[f64], x: &[f64], u: &[f64], offsets: &[&[f64]]) -> Vec<f64> {
        let n_f = self.n_f();
        let mut next = if self.increment {
            x.to_vec()
        } else {
            vec![0.0; n_f]
        };
        let mut z = vec![0.0; self.n_x + self.n_u];
        z[self.n_x..].copy_from_slice(u);
        let mut block_theta = Vec::new();
        for (b, off) in self.blocks.iter().zip(offsets) {
            for i in 0..self.n_x {
                z[i] = x[i] + off[i];
            }
            block_theta.clear();
            block_theta.extend(b.params.iter().map(|&p| theta[p]));
            for (f, n) in next.iter_mut().enumerate() {
                *n += b.spec.eval_column(&block_theta, &z, f);
            }
        }
        next
    }
}
