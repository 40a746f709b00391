//! Dense complex linear algebra sized for this crate's needs.
//!
//! Matrices are column-major over `Complex<f64>`. Problem sizes stay small
//! (observations of a few hundred entries, Gram systems of at most a few dozen
//! unknowns), so the routines favour plain loops with a fixed summation order
//! over blocked or parallel kernels; fixed order keeps results bit-identical
//! across runs, which the reproducibility guarantees rely on.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::{Error, Result};

/// Column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::ONE);
        }
        m
    }

    /// Build from a generator called as `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    /// Wrap an existing column-major buffer. Length must equal `rows * cols`.
    pub fn from_data(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "buffer of length {} cannot hold a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(CMat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    /// Column `j` as a slice.
    pub fn col(&self, j: usize) -> &[Complex64] {
        debug_assert!(j < self.cols);
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable column `j`.
    pub fn col_mut(&mut self, j: usize) -> &mut [Complex64] {
        debug_assert!(j < self.cols);
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Column-major backing slice (equals `vec(M)` stacking columns).
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    /// Entrywise conjugate.
    pub fn conj(&self) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Plain transpose (no conjugation).
    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * x` for a vector `x`.
    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matvec: matrix has {} columns, vector has length {}",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![Complex64::ZERO; self.rows];
        for j in 0..self.cols {
            let xj = x[j];
            if xj == Complex64::ZERO {
                continue;
            }
            let col = self.col(j);
            for i in 0..self.rows {
                y[i] += col[i] * xj;
            }
        }
        Ok(y)
    }

    /// `self^H * x`.
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "adjoint_matvec: matrix has {} rows, vector has length {}",
                self.rows,
                x.len()
            )));
        }
        let mut y = Vec::with_capacity(self.cols);
        for j in 0..self.cols {
            y.push(dot_h(self.col(j), x));
        }
        Ok(y)
    }

    /// `self * other`.
    pub fn mul(&self, other: &CMat) -> Result<CMat> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "mul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let bcol = other.col(j);
            let ocol = out.col_mut(j);
            for k in 0..self.cols {
                let b = bcol[k];
                if b == Complex64::ZERO {
                    continue;
                }
                let acol = self.col(k);
                for i in 0..acol.len() {
                    ocol[i] += acol[i] * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^H`.
    pub fn mul_adjoint(&self, other: &CMat) -> Result<CMat> {
        self.mul(&other.adjoint())
    }

    /// Entrywise sum with `other`.
    pub fn add(&self, other: &CMat) -> Result<CMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "add: {}x{} plus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Entrywise difference `self - other`.
    pub fn sub(&self, other: &CMat) -> Result<CMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "sub: {}x{} minus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Scale every entry.
    pub fn scale(&self, s: Complex64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Hermitian inner product `a^H b`.
pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Complex64::ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

/// Squared Euclidean norm.
pub fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Euclidean norm.
pub fn norm(a: &[Complex64]) -> f64 {
    libm::sqrt(norm_sq(a))
}

/// Kronecker product of two vectors: `(u (x) v)[i * v.len() + k] = u[i] * v[k]`.
///
/// With column-major vectorisation this matches the identity
/// `vec(a b^T) = b (x) a` used to index Kronecker-structured sensing columns.
pub fn kron_vec(u: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for ui in u {
        for vk in v {
            out.push(ui * vk);
        }
    }
    out
}

/// Gram matrix `A^H A` of the listed columns of `a`.
pub fn gram(a: &CMat, support: &[usize]) -> CMat {
    let s = support.len();
    let mut g = CMat::zeros(s, s);
    for (jj, &cj) in support.iter().enumerate() {
        for (ii, &ci) in support.iter().enumerate() {
            g.set(ii, jj, dot_h(a.col(ci), a.col(cj)));
        }
    }
    g
}

/// Solve `(G + ridge I) x = b` for Hermitian positive semidefinite `G` by
/// Cholesky factorisation. `ridge >= 0`; the factorisation fails only if the
/// shifted matrix is not positive definite to working precision.
/// Lower Cholesky factor of `G + ridge I` for Hermitian positive definite
/// `G`. Only the lower triangle of `g` is read; the strict upper triangle of
/// the result is zeroed.
pub fn cholesky(g: &CMat, ridge: f64) -> Result<CMat> {
    let n = g.rows();
    if g.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky: matrix is {}x{}, expected square",
            g.rows(),
            g.cols()
        )));
    }
    let mut l = g.clone();
    for i in 0..n {
        let d = l.get(i, i) + Complex64::new(ridge, 0.0);
        l.set(i, i, d);
    }
    for j in 0..n {
        let mut djj = l.get(j, j).re;
        for k in 0..j {
            djj -= l.get(j, k).norm_sqr();
        }
        if djj <= 0.0 || !djj.is_finite() {
            return Err(Error::Numerical(format!(
                "cholesky: pivot {djj:e} at index {j} is not positive"
            )));
        }
        let ljj = libm::sqrt(djj);
        l.set(j, j, Complex64::new(ljj, 0.0));
        for i in (j + 1)..n {
            let mut v = l.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k).conj();
            }
            l.set(i, j, v / ljj);
        }
    }
    for j in 0..n {
        for i in 0..j {
            l.set(i, j, Complex64::ZERO);
        }
    }
    Ok(l)
}

pub fn solve_hermitian(g: &CMat, b: &[Complex64], ridge: f64) -> Result<Vec<Complex64>> {
    let n = g.rows();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_hermitian: system of size {} with rhs of length {}",
            n,
            b.len()
        )));
    }
    let l = cholesky(g, ridge)?;
    // Forward substitution L z = b.
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let lik = l.get(i, k);
            z[i] = z[i] - lik * z[k];
        }
        z[i] /= l.get(i, i);
    }
    // Back substitution L^H x = z.
    let mut x = z;
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l.get(k, i).conj();
            x[i] = x[i] - lki * x[k];
        }
        x[i] /= l.get(i, i);
    }
    Ok(x)
}

/// Solve `A x = b` for square `A` by partially pivoted LU.
pub fn solve_lu(a: &CMat, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_lu: matrix is {}x{}, expected square",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_lu: system of size {} with rhs of length {}",
            n,
            b.len()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        // Pivot on the largest remaining magnitude in column k.
        let mut p = k;
        let mut best = lu.get(k, k).norm_sqr();
        for i in (k + 1)..n {
            let m = lu.get(i, k).norm_sqr();
            if m > best {
                best = m;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Numerical(format!(
                "solve_lu: singular matrix (no pivot in column {k})"
            )));
        }
        if p != k {
            for j in 0..n {
                let t = lu.get(k, j);
                lu.set(k, j, lu.get(p, j));
                lu.set(p, j, t);
            }
            x.swap(k, p);
        }
        let piv = lu.get(k, k);
        for i in (k + 1)..n {
            let factor = lu.get(i, k) / piv;
            lu.set(i, k, factor);
            for j in (k + 1)..n {
                let v = lu.get(i, j) - factor * lu.get(k, j);
                lu.set(i, j, v);
            }
            x[i] = x[i] - factor * x[k];
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            let uij = lu.get(i, j);
            x[i] = x[i] - uij * x[j];
        }
        x[i] /= lu.get(i, i);
    }
    Ok(x)
}

/// Explicit inverse of a small square matrix via LU solves against identity
/// columns. Used for pilot-matrix inversion where the dimension is the UE
/// antenna count.
pub fn invert(a: &CMat) -> Result<CMat> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "invert: matrix is {}x{}, expected square",
            a.rows(),
            a.cols()
        )));
    }
    let mut inv = CMat::zeros(n, n);
    let mut e = vec![Complex64::ZERO; n];
    for j in 0..n {
        e[j] = Complex64::ONE;
        let col = solve_lu(a, &e)?;
        inv.col_mut(j).copy_from_slice(&col);
        e[j] = Complex64::ZERO;
    }
    Ok(inv)
}
