//! Weighted least squares for the full measurement set and for each
//! leave-one-out subset.
//!
//! A subset solution keeps the full `n`-column layout: excluding measurement `k`
//! zeroes its weight instead of deleting the row, so column `k` of the subset
//! solution matrix is exactly zero and indices stay aligned with the full set.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::geometry::LinearSystem;
use crate::{Error, Result};

/// Largest accepted condition number of the normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    state: DVector<f64>,
    solution: DMatrix<f64>,
}

impl WlsSolution {
    /// State estimate `S y`.
    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// Solution matrix `S = (G^T W G)^-1 G^T W`, `m x n`.
    pub fn solution_matrix(&self) -> &DMatrix<f64> {
        &self.solution
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSolution {
    k: usize,
    state: DVector<f64>,
    solution: DMatrix<f64>,
}

impl SubsetSolution {
    /// Index of the excluded measurement.
    pub fn excluded(&self) -> usize {
        self.k
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// `S^(k)`, `m x n`, with column `k` identically zero.
    pub fn solution_matrix(&self) -> &DMatrix<f64> {
        &self.solution
    }
}

/// The normal matrix `G^T W G` for a weight diagonal.
pub fn normal_matrix(g: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut wg = g.clone();
    for (mut row, w) in wg.row_iter_mut().zip(weights.iter()) {
        row *= *w;
    }
    g.transpose() * wg
}

fn factor(normal: DMatrix<f64>) -> std::result::Result<Cholesky<f64, Dyn>, String> {
    let eig = SymmetricEigen::new(normal.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(format!(
            "normal matrix condition {:.3e} (eigenvalues {min:.3e}..{max:.3e})",
            max / min
        ));
    }
    Cholesky::new(normal).ok_or_else(|| "normal matrix is not positive definite".to_string())
}

/// Factor of `G^T W G` for the system's own weights.
pub(crate) fn normal_factor(sys: &LinearSystem) -> Result<Cholesky<f64, Dyn>> {
    factor(normal_matrix(sys.g(), sys.weights())).map_err(Error::DegenerateGeometry)
}

fn solution_matrix(
    g: &DMatrix<f64>,
    weights: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
) -> DMatrix<f64> {
    let mut gtw = g.transpose();
    for (mut col, w) in gtw.column_iter_mut().zip(weights.iter()) {
        col *= *w;
    }
    chol.solve(&gtw)
}

pub fn wls_solve(sys: &LinearSystem) -> Result<WlsSolution> {
    let chol = normal_factor(sys)?;
    let solution = solution_matrix(sys.g(), sys.weights(), &chol);
    let state = &solution * sys.y();
    Ok(WlsSolution { state, solution })
}

/// Solution with measurement `k` given zero weight.
pub fn subset_solution(sys: &LinearSystem, k: usize) -> Result<SubsetSolution> {
    let (n, m) = (sys.n(), sys.m());
    if k >= n {
        return Err(Error::invalid(format!(
            "subset index {k} out of range for {n} measurements"
        )));
    }
    if n - 1 < m {
        return Err(Error::SubsetDegenerate {
            k,
            reason: format!("{} remaining measurements for {m} states", n - 1),
        });
    }
    let mut weights = sys.weights().clone();
    weights[k] = 0.0;
    let chol = factor(normal_matrix(sys.g(), &weights))
        .map_err(|reason| Error::SubsetDegenerate { k, reason })?;
    let mut solution = solution_matrix(sys.g(), &weights, &chol);
    solution.column_mut(k).fill(0.0);
    let state = &solution * sys.y();
    Ok(SubsetSolution { k, state, solution })
}

/// Every leave-one-out solution, one result per measurement.
pub fn all_subsets(sys: &LinearSystem) -> Vec<Result<SubsetSolution>> {
    (0..sys.n()).map(|k| subset_solution(sys, k)).collect()
}
