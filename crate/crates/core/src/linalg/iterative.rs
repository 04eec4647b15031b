//! Iterative Krylov solvers for the assembled sparse systems: CG for the
//! symmetric positive definite ones, ILU(0)-preconditioned BiCGStab for the
//! nonsymmetric time-step systems.

use super::csr::Csr;
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub struct IterStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradient; `a` must be SPD.
pub fn cg(a: &Csr, b: &[f64], tol_rel: f64, max_iter: usize) -> Result<(Vec<f64>, IterStats)> {
    let n = b.len();
    let diag = a.diagonal();
    let inv_d: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((
            x,
            IterStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::LinearSolver(format!(
                "cg breakdown: p^T A p = {pap} at iteration {it} (matrix not SPD?)"
            )));
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let res = dot(&r, &r).sqrt();
        if res <= tol_rel * b_norm {
            return Ok((
                x,
                IterStats {
                    iterations: it + 1,
                    residual: res / b_norm,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolver(format!(
        "cg stagnated after {max_iter} iterations (rel residual {:.3e})",
        dot(&r, &r).sqrt() / b_norm
    )))
}

/// Incomplete LU factorization with zero fill-in, on the sparsity pattern
/// of `a`. Stored as a single matrix: strictly lower part holds L (unit
/// diagonal implied), diagonal and upper part hold U.
pub struct Ilu0 {
    lu: Vec<f64>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    diag_pos: Vec<usize>,
    n: usize,
}

impl Ilu0 {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.n_rows();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut lu = Vec::new();
        indptr.push(0);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            indices.extend_from_slice(cols);
            lu.extend_from_slice(vals);
            indptr.push(indices.len());
        }
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in indptr[i]..indptr[i + 1] {
                if indices[k] == i {
                    diag_pos[i] = k;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::LinearSolver(format!(
                    "ilu0: structurally zero diagonal at row {i}"
                )));
            }
        }
        // IKJ-variant incomplete factorization
        let mut colmap = vec![usize::MAX; n];
        for i in 0..n {
            for k in indptr[i]..indptr[i + 1] {
                colmap[indices[k]] = k;
            }
            let mut k = indptr[i];
            while k < indptr[i + 1] {
                let j = indices[k];
                if j >= i {
                    break;
                }
                let piv = lu[diag_pos[j]];
                if piv == 0.0 {
                    return Err(Error::LinearSolver(format!(
                        "ilu0: zero pivot at row {j}"
                    )));
                }
                let factor = lu[k] / piv;
                lu[k] = factor;
                for kk in diag_pos[j] + 1..indptr[j + 1] {
                    let col = indices[kk];
                    let pos = colmap[col];
                    if pos != usize::MAX && pos >= indptr[i] && pos < indptr[i + 1] {
                        lu[pos] -= factor * lu[kk];
                    }
                }
                k += 1;
            }
            for k in indptr[i]..indptr[i + 1] {
                colmap[indices[k]] = usize::MAX;
            }
        }
        Ok(Self {
            lu,
            indptr,
            indices,
            diag_pos,
            n,
        })
    }

    /// z = (LU)^-1 r
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        // forward solve L y = r (unit diagonal)
        for i in 0..self.n {
            let mut acc = z[i];
            for k in self.indptr[i]..self.diag_pos[i] {
                acc -= self.lu[k] * z[self.indices[k]];
            }
            z[i] = acc;
        }
        // backward solve U x = y
        for i in (0..self.n).rev() {
            let mut acc = z[i];
            for k in self.diag_pos[i] + 1..self.indptr[i + 1] {
                acc -= self.lu[k] * z[self.indices[k]];
            }
            z[i] = acc / self.lu[self.diag_pos[i]];
        }
    }
}

/// ILU(0)-preconditioned BiCGStab for nonsymmetric systems. The caller
/// supplies the factorization so it can be reused across solves with the
/// same matrix.
///
/// Convergence is measured in the provided diagonal-weighted norm
/// (`weight[i]` multiplies `r_i^2`), so callers can request the
/// inverse-mass-weighted residual directly.
pub fn bicgstab(
    a: &Csr,
    ilu: &Ilu0,
    b: &[f64],
    weight: &[f64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterStats)> {
    let n = b.len();
    let wnorm = |v: &[f64]| -> f64 {
        v.iter()
            .zip(weight)
            .map(|(x, w)| x * x * w)
            .sum::<f64>()
            .sqrt()
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = wnorm(b);
    if b_norm == 0.0 {
        return Ok((
            x,
            IterStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::LinearSolver(format!(
                "bicgstab breakdown (rho ~ 0) at iteration {it}"
            )));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        ilu.apply(&p, &mut phat);
        a.matvec_into(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        let mut s = r.clone();
        axpy(&mut s, -alpha, &v);
        if wnorm(&s) <= tol_rel * b_norm {
            axpy(&mut x, alpha, &phat);
            a.matvec_into(&x, &mut t);
            let res: Vec<f64> = b.iter().zip(&t).map(|(bi, ti)| bi - ti).collect();
            return Ok((
                x,
                IterStats {
                    iterations: it + 1,
                    residual: wnorm(&res) / b_norm,
                },
            ));
        }
        ilu.apply(&s, &mut shat);
        a.matvec_into(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::LinearSolver(format!(
                "bicgstab breakdown (t = 0) at iteration {it}"
            )));
        }
        omega = dot(&t, &s) / tt;
        axpy(&mut x, alpha, &phat);
        axpy(&mut x, omega, &shat);
        r = s;
        axpy(&mut r, -omega, &t);
        if wnorm(&r) <= tol_rel * b_norm {
            return Ok((
                x,
                IterStats {
                    iterations: it + 1,
                    residual: wnorm(&r) / b_norm,
                },
            ));
        }
        if omega.abs() < 1e-300 {
            return Err(Error::LinearSolver(format!(
                "bicgstab breakdown (omega ~ 0) at iteration {it}"
            )));
        }
    }
    Err(Error::LinearSolver(format!(
        "bicgstab stagnated after {max_iter} iterations (rel residual {:.3e})",
        wnorm(&r) / b_norm
    )))
}
