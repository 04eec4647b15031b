//! Sparse/dense linear algebra backing the assembly and solver modules.

pub mod csr;
pub mod eigen;
pub mod iterative;

pub use csr::{Coo, Csr};

use crate::error::{Error, Result};

/// Systems at or below this size are solved by dense LU; larger ones go
/// through ILU(0)-preconditioned BiCGStab.
pub const DENSE_SOLVE_LIMIT: usize = 3000;

/// Outcome bookkeeping for one linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    /// Relative residual in the requested weighted norm (0 for direct).
    pub residual: f64,
    pub direct: bool,
}

/// Solve `A x = b`, choosing direct or iterative per `DENSE_SOLVE_LIMIT`.
/// `weight` defines the diagonal-weighted residual norm used by the
/// iterative path (pass inverse lumped mass for a mass-weighted residual).
pub fn solve(a: &Csr, b: &[f64], weight: &[f64], tol_rel: f64) -> Result<(Vec<f64>, SolveInfo)> {
    let n = a.n_rows();
    if n != b.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if n <= DENSE_SOLVE_LIMIT {
        let dense = a.to_dense();
        let lu = dense.lu();
        let x = lu
            .solve(&nalgebra::DVector::from_column_slice(b))
            .ok_or_else(|| Error::LinearSolver("singular system (dense LU)".into()))?;
        Ok((
            x.as_slice().to_vec(),
            SolveInfo {
                iterations: 0,
                residual: 0.0,
                direct: true,
            },
        ))
    } else {
        let ilu = iterative::Ilu0::factor(a)?;
        let (x, stats) = iterative::bicgstab(a, &ilu, b, weight, tol_rel, 10 * n)?;
        Ok((
            x,
            SolveInfo {
                iterations: stats.iterations,
                residual: stats.residual,
                direct: false,
            },
        ))
    }
}
