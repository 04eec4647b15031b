//! Minimal CSR sparse matrix with the handful of operations assembly and
//! the solvers need. Deterministic: construction sorts triplets, so the
//! result is independent of accumulation order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

/// Triplet accumulator; duplicates are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct Coo {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl Coo {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        if v != 0.0 {
            self.entries.push((i as u32, j as u32, v));
        }
    }

    pub fn to_csr(mut self) -> Csr {
        // stable sort keeps duplicate summation order deterministic
        self.entries
            .sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j as usize);
                data.push(v);
                indptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for r in 0..self.n_rows {
            indptr[r + 1] += indptr[r];
        }
        Csr {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr,
            indices,
            data,
        }
    }
}

impl Csr {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Csr {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Csr {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn max_nnz_per_row(&self) -> usize {
        (0..self.n_rows)
            .map(|i| self.indptr[i + 1] - self.indptr[i])
            .max()
            .unwrap_or(0)
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[i] = acc;
        }
    }

    /// y = A^T x
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k]] += self.data[k] * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut coo = Coo::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                coo.push(self.indices[k], i, self.data[k]);
            }
        }
        coo.to_csr()
    }

    pub fn scale(&self, s: f64) -> Csr {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    /// Sum of matrices with coefficients; all operands must share shape.
    pub fn linear_combination(terms: &[(f64, &Csr)]) -> Result<Csr> {
        let (first_r, first_c) = match terms.first() {
            Some((_, m)) => (m.n_rows, m.n_cols),
            None => return Ok(Csr::zeros(0, 0)),
        };
        let mut cap = 0;
        for (_, m) in terms {
            if m.n_rows != first_r || m.n_cols != first_c {
                return Err(Error::DimensionMismatch {
                    expected: first_r,
                    got: m.n_rows,
                });
            }
            cap += m.nnz();
        }
        let mut coo = Coo::with_capacity(first_r, first_c, cap);
        for (s, m) in terms {
            for i in 0..m.n_rows {
                for k in m.indptr[i]..m.indptr[i + 1] {
                    coo.push(i, m.indices[k], s * m.data[k]);
                }
            }
        }
        Ok(coo.to_csr())
    }

    pub fn add(&self, other: &Csr) -> Result<Csr> {
        Csr::linear_combination(&[(1.0, self), (1.0, other)])
    }

    /// Symmetric part (A + A^T) / 2.
    pub fn symmetric_part(&self) -> Csr {
        let t = self.transpose();
        Csr::linear_combination(&[(0.5, self), (0.5, &t)]).expect("same shape")
    }

    /// max |A_ij - A_ji| over all stored entries.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let d = Csr::linear_combination(&[(1.0, self), (-1.0, &t)]).expect("same shape");
        d.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] == i {
                    d[i] = self.data[k];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[k])] += self.data[k];
            }
        }
        m
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(ay.iter()).map(|(a, b)| a * b).sum()
    }

    /// Triplet text dump: one `row col value` line per stored entry.
    pub fn write_triplets<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                writeln!(w, "{} {} {:.17e}", i, self.indices[k], self.data[k])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Csr {
        let mut coo = Coo::new(3, 3);
        coo.push(0, 0, 2.0);
        coo.push(0, 1, -1.0);
        coo.push(1, 0, -1.0);
        coo.push(1, 1, 2.0);
        coo.push(1, 2, -1.0);
        coo.push(2, 1, -1.0);
        coo.push(2, 2, 2.0);
        // duplicate accumulation
        coo.push(0, 0, 1.0);
        coo.to_csr()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample();
        assert_eq!(a.diagonal(), vec![3.0, 2.0, 2.0]);
        assert_eq!(a.nnz(), 7);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let x = vec![1.0, 2.0, 3.0];
        let d = a.to_dense();
        let y = a.matvec(&x);
        let yd = d * nalgebra::DVector::from_vec(x.clone());
        for i in 0..3 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
        let yt = a.matvec_transpose(&x);
        let t = a.transpose().matvec(&x);
        assert_eq!(yt, t);
    }

    #[test]
    fn symmetric_part_and_asymmetry() {
        let mut coo = Coo::new(2, 2);
        coo.push(0, 1, 1.0);
        let a = coo.to_csr();
        assert!((a.asymmetry() - 1.0).abs() < 1e-15);
        let s = a.symmetric_part();
        assert!(s.asymmetry() < 1e-15);
        assert!((s.to_dense()[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_combination_shapes_checked() {
        let a = sample();
        let b = Csr::zeros(2, 2);
        assert!(Csr::linear_combination(&[(1.0, &a), (1.0, &b)]).is_err());
    }
}
