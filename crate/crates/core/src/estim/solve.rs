//! Stacked multi-experiment system and its least-squares solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-experiment correlation equations `A_i beta = b_i` and their stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    pub blocks: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl StackedSystem {
    /// `A_i = Z_i Phi_i^T / n`, `b_i = Z_i y_i / n`.
    pub fn push(
        &mut self,
        z: &DMatrix<f64>,
        phi: &DMatrix<f64>,
        target: &DVector<f64>,
    ) -> Result<()> {
        if z.shape() != phi.shape() || phi.ncols() != target.len() {
            return Err(Error::DimensionMismatch {
                axis: "instrument/regressor columns",
                expected: phi.ncols(),
                found: z.ncols(),
            });
        }
        let n = (phi.ncols().max(1)) as f64;
        let a = z * phi.transpose() / n;
        let b = z * target / n;
        self.blocks.push((a, b));
        Ok(())
    }

    pub fn n_unknowns(&self) -> usize {
        self.blocks.first().map_or(0, |(a, _)| a.ncols())
    }

    pub fn stacked(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let m = self.n_unknowns();
        if self.blocks.is_empty() {
            return Err(Error::Empty("stacked system"));
        }
        let rows: usize = self.blocks.iter().map(|(a, _)| a.nrows()).sum();
        let mut a = DMatrix::zeros(rows, m);
        let mut b = DVector::zeros(rows);
        let mut r = 0;
        for (ai, bi) in &self.blocks {
            if ai.ncols() != m {
                return Err(Error::DimensionMismatch {
                    axis: "stacked system columns",
                    expected: m,
                    found: ai.ncols(),
                });
            }
            a.view_mut((r, 0), ai.shape()).copy_from(ai);
            b.rows_mut(r, bi.len()).copy_from(bi);
            r += ai.nrows();
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "stacked system",
                step: 0,
            });
        }
        Ok((a, b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvSolution {
    pub beta: DVector<f64>,
    /// Singular values of the column-equilibrated stacked matrix, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub condition: f64,
}

/// Least-squares solution through an SVD of the column-equilibrated matrix.
/// Numeric rank uses the threshold `max(rows, cols) * eps * sigma_max`.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<IvSolution> {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Err(Error::Empty("unknowns"));
    }
    if rows < cols {
        return Err(Error::Underdetermined { rows, cols });
    }
    let scale = DVector::from_iterator(
        cols,
        a.column_iter().map(|c| {
            let n = c.norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        }),
    );
    let mut scaled = a.clone();
    for (j, mut c) in scaled.column_iter_mut().enumerate() {
        c /= scale[j];
    }
    let svd = scaled.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let s_max = sv.first().copied().unwrap_or(0.0);
    let tol = rows.max(cols) as f64 * f64::EPSILON * s_max;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let x = svd
        .solve(b, tol)
        .map_err(|e| Error::InvalidConfig(format!("svd solve: {e}")))?;
    let beta = x.component_div(&scale);
    let condition = s_max / sv[cols - 1];
    Ok(IvSolution {
        beta,
        singular_values: sv,
        rank,
        condition,
    })
}

pub fn solve_iv(system: &StackedSystem) -> Result<IvSolution> {
    let (a, b) = system.stacked()?;
    solve_least_squares(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let a = DMatrix::identity(4, 4);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.5, 0.25]);
        let s = solve_least_squares(&a, &b).unwrap();
        assert!((s.beta - b).amax() < 1e-15);
        assert_eq!(s.rank, 4);
    }

    #[test]
    fn square_system_is_solved_exactly() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.2, -0.7, 2.0]);
        let x = DVector::from_vec(vec![0.3, -1.1, 2.0]);
        let b = &a * &x;
        let s = solve_least_squares(&a, &b).unwrap();
        assert!((s.beta - &x).norm() / x.norm() < 1e-12);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let a = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 2.0, 1.0, 0.0, 1.0, 0.0, 3.0, -1.0, 3.0, 2.0, 2.0, 2.0],
        );
        let b = DVector::from_element(4, 1.0);
        assert_eq!(
            solve_least_squares(&a, &b).unwrap_err(),
            Error::RankDeficient { rank: 2, cols: 3 }
        );
    }

    #[test]
    fn too_few_rows() {
        let a = DMatrix::zeros(2, 3);
        let b = DVector::zeros(2);
        assert!(matches!(
            solve_least_squares(&a, &b),
            Err(Error::Underdetermined { .. })
        ));
    }

    #[test]
    fn stacking_concatenates_blocks() {
        let mut s = StackedSystem { blocks: Vec::new() };
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, 1.0]);
        let t = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        s.push(&z, &z, &t).unwrap();
        s.push(&z, &z, &t).unwrap();
        let (a, b) = s.stacked().unwrap();
        assert_eq!(a.shape(), (4, 2));
        assert_eq!(b.len(), 4);
        assert!((a[(0, 0)] - 5.0 / 3.0).abs() < 1e-15);
    }
}
