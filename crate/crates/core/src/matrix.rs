//! Small dense square matrices.
//!
//! Every matrix in this crate is an n×n Jacobian or metric transform with n
//! on the order of ten at most, so storage is a flat row-major `Vec<f64>` and
//! all products are naive triple loops.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Condition number above which a matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Square n×n matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data; `data.len()` must be a perfect square.
    pub fn from_row_major(data: Vec<f64>) -> Result<Self> {
        let n = (data.len() as f64).sqrt().round() as usize;
        if n * n != data.len() {
            return Err(Error::InvalidArgument(format!(
                "{} entries do not form a square matrix",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self { n: 1, data: vec![v] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        let mut out = Self::zeros(self.n);
        self.matmul_into(other, &mut out);
        out
    }

    /// `out = self * other`; `out` must not alias either operand.
    pub fn matmul_into(&self, other: &Matrix, out: &mut Matrix) {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        if out.n != n {
            *out = Self::zeros(n);
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.data[i * n + k] * other.data[k * n + j];
                }
                out.data[i * n + j] = acc;
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(n)) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn add(&self, other: &Matrix) -> Self {
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Self {
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetric_part(&self) -> Self {
        let n = self.n;
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }

    /// `AᵀA`.
    pub fn gram(&self) -> Self {
        let n = self.n;
        let mut g = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self[(k, i)] * self[(k, j)];
                }
                g[(i, j)] = acc;
                g[(j, i)] = acc;
            }
        }
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_identity(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).all(|j| self[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }

    /// Inverse via adjugate for n ≤ 3 and LU with partial pivoting otherwise.
    ///
    /// Fails with [`Error::Singular`] when the 1-norm condition number exceeds
    /// [`MAX_CONDITION`].
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_finite() {
            return Err(Error::NonFinite("matrix to invert".into()));
        }
        let inv = match self.n {
            0 => return Ok(Matrix::zeros(0)),
            1..=3 => self.adjugate_inverse(),
            _ => self.lu_inverse(),
        }
        .ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        let condition = self.norm1() * inv.norm1();
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::Singular { condition });
        }
        Ok(inv)
    }

    fn adjugate_inverse(&self) -> Option<Matrix> {
        let a = |i: usize, j: usize| self[(i, j)];
        match self.n {
            1 => {
                let d = a(0, 0);
                (d != 0.0).then(|| Matrix::scalar(1.0 / d))
            }
            2 => {
                let det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
                if det == 0.0 {
                    return None;
                }
                let r = 1.0 / det;
                Some(Matrix {
                    n: 2,
                    data: vec![a(1, 1) * r, -a(0, 1) * r, -a(1, 0) * r, a(0, 0) * r],
                })
            }
            3 => {
                let c00 = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
                let c01 = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
                let c02 = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
                let det = a(0, 0) * c00 + a(0, 1) * c01 + a(0, 2) * c02;
                if det == 0.0 {
                    return None;
                }
                let r = 1.0 / det;
                let c10 = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
                let c11 = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
                let c12 = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
                let c20 = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
                let c21 = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
                let c22 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
                // adjugate is the transposed cofactor matrix
                Some(Matrix {
                    n: 3,
                    data: vec![
                        c00 * r,
                        c10 * r,
                        c20 * r,
                        c01 * r,
                        c11 * r,
                        c21 * r,
                        c02 * r,
                        c12 * r,
                        c22 * r,
                    ],
                })
            }
            _ => unreachable!(),
        }
    }

    fn lu_inverse(&self) -> Option<Matrix> {
        let n = self.n;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] / d;
                lu[i * n + k] = l;
                for j in k + 1..n {
                    lu[i * n + j] -= l * lu[k * n + j];
                }
            }
        }
        let mut inv = Matrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = if perm[i] == j { 1.0 } else { 0.0 };
            }
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s -= lu[i * n + k] * col[k];
                }
                col[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in i + 1..n {
                    s -= lu[i * n + k] * col[k];
                }
                col[i] = s / lu[i * n + i];
            }
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Some(inv)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.n.max(1)).collect();
        f.debug_struct("Matrix").field("rows", &rows).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol, "{a:?} != {b:?}");
        }
    }

    #[test]
    fn inverse_small_and_large_agree_with_identity() {
        let cases = [
            Matrix::scalar(4.0),
            Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap(),
            Matrix::from_rows(&[[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]).unwrap(),
            Matrix::from_rows(&[
                [4.0, 1.0, 0.5, 0.0, 2.0],
                [0.0, 3.0, 1.0, 1.0, 0.0],
                [1.0, 0.0, 5.0, 0.0, 1.0],
                [0.0, 2.0, 0.0, 6.0, 0.0],
                [0.5, 0.0, 1.0, 0.0, 7.0],
            ])
            .unwrap(),
        ];
        for m in &cases {
            let inv = m.inverse().unwrap();
            assert_close(&m.matmul(&inv), &Matrix::identity(m.dim()), 1e-12);
        }
    }

    #[test]
    fn lu_handles_zero_leading_pivot() {
        let m = Matrix::from_rows(&[
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 2.0],
            [0.0, 0.0, 3.0, 0.0],
        ])
        .unwrap();
        let inv = m.inverse().unwrap();
        assert_close(&m.matmul(&inv), &Matrix::identity(4), 1e-15);
    }

    #[test]
    fn singular_and_ill_conditioned_rejected() {
        let singular = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(singular.inverse(), Err(Error::Singular { .. })));
        let ill = Matrix::diag(&[1.0, 1e-13]);
        assert!(matches!(ill.inverse(), Err(Error::Singular { .. })));
        let ill4 = Matrix::diag(&[1.0, 1.0, 1.0, 1e-14]);
        assert!(matches!(ill4.inverse(), Err(Error::Singular { .. })));
    }

    #[test]
    fn gram_matches_transpose_product() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [4.0, 0.0, 1.0]]).unwrap();
        assert_close(&m.gram(), &m.transpose().matmul(&m), 0.0);
    }

    #[test]
    fn from_row_major_rejects_non_square() {
        assert!(Matrix::from_row_major(vec![1.0, 2.0, 3.0]).is_err());
        assert_eq!(Matrix::from_row_major(vec![1.0; 4]).unwrap().dim(), 2);
    }
}
