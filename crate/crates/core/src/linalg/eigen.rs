//! Generalized symmetric eigenvalue estimation for the pencils the
//! condition audits need: dense Cholesky reduction for desk-scale
//! problems, matrix-free power iterations above that.

use super::csr::Csr;
use super::iterative::cg;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

const DENSE_EIG_LIMIT: usize = 900;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of `A v = lambda B v` with A symmetric positive
/// semidefinite and B symmetric positive definite.
pub fn largest_generalized_eigenvalue(a: &Csr, b: &Csr) -> Result<f64> {
    if a.n_rows() <= DENSE_EIG_LIMIT {
        dense_generalized_extreme(a, b, true)
    } else {
        power_iteration_generalized(a, b)
    }
}

/// Smallest eigenvalue of `A v = lambda B v` with A symmetric positive
/// definite and B symmetric positive definite.
///
/// Above the dense limit the eigenvalues of these pencils cluster, so
/// instead of an iteration the value is bracketed by bisection on `c` in
/// the definiteness test `A - c B > 0`, certified by a banded Cholesky
/// factorization (the tensor-grid matrices have bandwidth ~ cells/axis).
pub fn smallest_generalized_eigenvalue(a: &Csr, b: &Csr) -> Result<f64> {
    if a.n_rows() <= DENSE_EIG_LIMIT {
        dense_generalized_extreme(a, b, false)
    } else {
        bisect_smallest_generalized(a, b)
    }
}

/// Attempt a banded Cholesky factorization; returns whether the matrix is
/// positive definite (within rounding at the margin).
fn banded_cholesky_is_spd(s: &Csr) -> Result<bool> {
    let n = s.n_rows();
    let mut bw = 0usize;
    for i in 0..n {
        let (cols, _) = s.row(i);
        for &j in cols {
            bw = bw.max(i.abs_diff(j));
        }
    }
    if n.checked_mul(bw + 1).map(|m| m > 80_000_000).unwrap_or(true) {
        return Err(Error::EigenSolver(format!(
            "bandwidth {bw} too large for the banded factorization at n = {n}"
        )));
    }
    // lower band storage: band[i * (bw+1) + (j - i + bw)] holds entry (i, j)
    let w = bw + 1;
    let mut band = vec![0.0f64; n * w];
    for i in 0..n {
        let (cols, vals) = s.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                band[i * w + (j + bw - i)] = v;
            }
        }
    }
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        for j in lo..=i {
            let kstart = lo.max(j.saturating_sub(bw));
            let mut sum = band[i * w + (j + bw - i)];
            for k in kstart..j {
                sum -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
            }
            if j < i {
                band[i * w + (j + bw - i)] = sum / band[j * w + (j + bw - j)];
            } else {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Ok(false);
                }
                band[i * w + bw] = sum.sqrt();
            }
        }
    }
    Ok(true)
}

fn bisect_smallest_generalized(a: &Csr, b: &Csr) -> Result<f64> {
    if !banded_cholesky_is_spd(a)? {
        return Err(Error::EigenSolver(
            "matrix not positive definite at the lower bracket".into(),
        ));
    }
    // upper bracket: the Rayleigh quotient at any probe bounds the
    // smallest eigenvalue from above
    let n = a.n_rows();
    let mut hi = f64::INFINITY;
    for probe in 0..3 {
        let x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * (((i * (probe + 2)) % 17) as f64) / 17.0)
            .collect();
        hi = hi.min(a.bilinear(&x, &x) / b.bilinear(&x, &x));
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let s = Csr::linear_combination(&[(1.0, a), (-mid, b)])?;
        if banded_cholesky_is_spd(&s)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi.abs().max(1e-30) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn dense_generalized_extreme(a: &Csr, b: &Csr, largest: bool) -> Result<f64> {
    let ad = a.to_dense();
    let bd = b.to_dense();
    let chol = bd
        .cholesky()
        .ok_or_else(|| Error::EigenSolver("B not positive definite".into()))?;
    let l = chol.l();
    // C = L^-1 A L^-T, symmetric; eigenvalues of C equal those of the pencil
    let linv_a = l.clone().solve_lower_triangular(&ad).ok_or_else(|| {
        Error::EigenSolver("singular Cholesky factor".into())
    })?;
    let c_t = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::EigenSolver("singular Cholesky factor".into()))?;
    // symmetrize to wash out rounding before the symmetric eigensolver
    let c = DMatrix::from_fn(c_t.nrows(), c_t.ncols(), |i, j| {
        0.5 * (c_t[(i, j)] + c_t[(j, i)])
    });
    let eig = c.symmetric_eigen();
    let vals = eig.eigenvalues.as_slice();
    let ext = if largest {
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    } else {
        vals.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(ext)
}

/// Power iteration on `B^-1 A` with CG solves for B; converges to the
/// largest eigenvalue of the pencil (A, B). Both matrices symmetric, B SPD.
fn power_iteration_generalized(a: &Csr, b: &Csr) -> Result<f64> {
    let n = a.n_rows();
    // deterministic non-degenerate start
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.3 * ((i % 13) as f64) / 13.0)
        .collect();
    let nrm = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
    let mut lambda = 0.0;
    let max_outer = 5000;
    for it in 0..max_outer {
        let ax = a.matvec(&x);
        let (y, _) = cg(b, &ax, 1e-12, 20 * n + 200)?;
        // Rayleigh quotient in the B inner product
        let num = dot(&x, &ax);
        let by = b.matvec(&x);
        let den = dot(&x, &by);
        let lam_new = num / den;
        let ynrm = dot(&y, &y).sqrt();
        if ynrm == 0.0 {
            return Err(Error::EigenSolver("power iteration produced zero vector".into()));
        }
        x = y.iter().map(|v| v / ynrm).collect();
        if it > 3 && (lam_new - lambda).abs() <= 1e-10 * lam_new.abs().max(1e-30) {
            return Ok(lam_new);
        }
        lambda = lam_new;
    }
    Err(Error::EigenSolver(format!(
        "power iteration did not settle in {max_outer} sweeps (lambda ~ {lambda:.6e})"
    )))
}

/// Spectral norm of (possibly nonsymmetric) `A` measured against the SPD
/// Gram matrix `G`: sup |x^T A y| / (|x|_G |y|_G). Computed as the square
/// root of the largest eigenvalue of `G^-1 A^T G^-1 A` via power iteration.
pub fn operator_norm_vs_gram(a: &Csr, g: &Csr) -> Result<f64> {
    let n = a.n_rows();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7 % 11) as f64) * 0.1).collect();
    let mut sigma2 = 0.0;
    for it in 0..500 {
        let nrm = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
        let ax = a.matvec(&x);
        let (g1, _) = cg(g, &ax, 1e-11, 20 * n + 200)?;
        let atg = a.matvec_transpose(&g1);
        let (y, _) = cg(g, &atg, 1e-11, 20 * n + 200)?;
        let s2 = dot(&x, &y) / dot(&x, &x);
        if it > 3 && (s2 - sigma2).abs() <= 1e-8 * s2.abs().max(1e-30) {
            return Ok(s2.max(0.0).sqrt());
        }
        sigma2 = s2;
        x = y;
    }
    Ok(sigma2.max(0.0).sqrt())
}
