//! Small dense square matrices and rank-3 coefficient arrays.
//!
//! Chart dimensions here are tiny (2 to 4 in practice), so the types are
//! plain row-major `Vec<f64>` buffers with partial-pivot elimination for
//! inverses and determinants. No BLAS, no SIMD, no dependencies.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `|x|` without touching `std`; clears the sign bit.
#[inline]
pub fn fabs(x: f64) -> f64 {
    f64::from_bits(x.to_bits() & (u64::MAX >> 1))
}

/// Max-abs entry of a vector.
pub fn vec_inf_norm(v: &[f64]) -> f64 {
    let mut m = 0.0;
    for &x in v {
        let a = fabs(x);
        if a > m {
            m = a;
        }
    }
    m
}

/// Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Square real matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    /// Builds from rows; every row must have the same length as the row count.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::invalid("matrix rows must form a square"));
            }
        }
        Ok(Matrix::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        for i in 0..self.n {
            self.set(i, j, v[i]);
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.n, v.len());
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.get(i, j) * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.n, other.n);
        Matrix::from_fn(self.n, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.n, other.n);
        Matrix::from_fn(self.n, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix::from_fn(self.n, |i, j| c * self.get(i, j))
    }

    /// Determinant via LU elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let mut piv = col;
            let mut best = fabs(a[col * n + col]);
            for r in (col + 1)..n {
                let v = fabs(a[r * n + col]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return 0.0;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                det = -det;
            }
            det *= a[col * n + col];
            let inv_p = 1.0 / a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] * inv_p;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
            }
        }
        det
    }

    /// Inverse via Gauss-Jordan with partial pivoting; `None` when singular.
    pub fn inverse(&self) -> Option<Matrix> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            let mut piv = col;
            let mut best = fabs(a[col * n + col]);
            for r in (col + 1)..n {
                let v = fabs(a[r * n + col]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                    inv.data.swap(col * n + j, piv * n + j);
                }
            }
            let d = 1.0 / a[col * n + col];
            for j in 0..n {
                a[col * n + j] *= d;
                inv.data[col * n + j] *= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv.data[r * n + j] -= f * inv.data[col * n + j];
                }
            }
        }
        Some(inv)
    }

    /// Inverse, with a degeneracy error when singular or non-finite.
    pub fn try_inverse(&self) -> Result<Matrix> {
        let det = self.det();
        if !det.is_finite() || fabs(det) < crate::defaults::MIN_DET {
            return Err(Error::DegenerateFrame { det });
        }
        self.inverse().ok_or(Error::DegenerateFrame { det })
    }

    /// Induced infinity norm: max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += fabs(self.get(i, j));
            }
            if s > m {
                m = s;
            }
        }
        m
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        vec_inf_norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut m = 0.0;
        for i in 0..self.data.len() {
            let d = fabs(self.data[i] - other.data[i]);
            if d > m {
                m = d;
            }
        }
        m
    }
}

impl core::ops::Mul<&Matrix> for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl core::ops::Add<&Matrix> for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        self.add(rhs)
    }
}

impl core::ops::Sub<&Matrix> for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        self.sub(rhs)
    }
}

/// Rank-3 coefficient array `t[i][j][k]`, used for connection coefficients,
/// commutation coefficients, and torsion components.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 { n, data: vec![0.0; n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t.data[(i * n + j) * n + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    /// The matrix `M[i][j] = t[i][j][k]` for a fixed last index `k`.
    pub fn direction_matrix(&self, k: usize) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self.get(i, j, k))
    }

    /// Norm used for verdicts: max over the upper index of the absolute sum
    /// over both lower slots. Matches the row-sum flavor of the matrix norm.
    pub fn norm(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += fabs(self.get(i, j, k));
                }
            }
            if s > m {
                m = s;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        vec_inf_norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_self_is_identity() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let inv = m.try_inverse().unwrap();
        let prod = m.matmul(&inv);
        assert!(prod.max_abs_diff(&Matrix::identity(2)) < 1e-14);
    }

    #[test]
    fn det_of_known_matrix() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        assert!(fabs(m.det() - 5.0) < 1e-14);
        assert!(fabs(Matrix::identity(3).det() - 1.0) < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(m.try_inverse().is_err());
        assert_eq!(m.det(), 0.0);
    }

    #[test]
    fn norms() {
        let m = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25]]).unwrap();
        assert_eq!(m.inf_norm(), 3.0);
        assert_eq!(m.max_abs(), 2.0);
    }

    #[test]
    fn tensor_direction_matrix() {
        let t = Tensor3::from_fn(2, |i, j, k| (i * 4 + j * 2 + k) as f64);
        let m = t.direction_matrix(1);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 1), 7.0);
    }
}
