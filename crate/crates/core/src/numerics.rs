//! Small dense complex linear algebra: Hermitian storage, Cholesky
//! factorization and inversion, traces, norms and quadratic forms.
//!
//! Matrix sizes stay small (a covariance per microphone pair, M <= 16 in all
//! shipped scenarios), so everything is direct and allocation-light. Positive
//! definiteness failures are reported as errors; regularization is the
//! caller's business.

use num_complex::Complex;

use crate::{real, Error, Result, Scalar};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.set(i, i, Complex::new(T::one(), T::zero()));
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must match shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must match");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }
}

/// Hermitian matrix stored as its packed upper triangle (row by row).
///
/// The lower triangle is implied by conjugate symmetry, so the invariant
/// `m[i][j] == conj(m[j][i])` holds by construction and diagonals stay real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix<T> {
    dim: usize,
    upper: Vec<Complex<T>>,
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < dim);
    i * dim - i * (i + 1) / 2 + j
}

impl<T: Scalar> HermitianMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![Complex::new(T::zero(), T::zero()); dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set_upper(i, i, Complex::new(T::one(), T::zero()));
        }
        m
    }

    pub fn scaled_identity(dim: usize, scale: T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set_upper(i, i, Complex::new(scale, T::zero()));
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set_upper(i, i, Complex::new(d, T::zero()));
        }
        m
    }

    /// Builds from a function over the upper triangle (`i <= j`); the
    /// diagonal imaginary part is discarded to keep the invariant.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                let v = if i == j { Complex::new(v.re, T::zero()) } else { v };
                m.set_upper(i, j, v);
            }
        }
        m
    }

    /// Rank-one outer product `y y^H`.
    pub fn from_outer(y: &[Complex<T>]) -> Self {
        Self::from_fn(y.len(), |i, j| y[i] * y[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        if i <= j {
            self.upper[packed_index(self.dim, i, j)]
        } else {
            self.upper[packed_index(self.dim, j, i)].conj()
        }
    }

    #[inline]
    pub(crate) fn set_upper(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.upper[packed_index(self.dim, i, j)] = v;
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            upper: self.upper.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimensions must match");
        Self {
            dim: self.dim,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// `self + shift * I`.
    pub fn add_scaled_identity(&self, shift: T) -> Self {
        let mut m = self.clone();
        for i in 0..self.dim {
            let idx = packed_index(self.dim, i, i);
            m.upper[idx] += Complex::new(shift, T::zero());
        }
        m
    }

    /// Convex style update `(1 - alpha) * self + alpha * other`.
    pub fn blend(&self, other: &Self, alpha: T) -> Self {
        assert_eq!(self.dim, other.dim, "dimensions must match");
        let keep = T::one() - alpha;
        Self {
            dim: self.dim,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a * keep + b * alpha)
                .collect(),
        }
    }

    pub fn trace(&self) -> T {
        let mut t = T::zero();
        for i in 0..self.dim {
            t += self.get(i, i).re;
        }
        t
    }

    pub fn frobenius_norm(&self) -> T {
        let mut sum = T::zero();
        for i in 0..self.dim {
            sum += self.get(i, i).norm_sqr();
            for j in i + 1..self.dim {
                sum += real::<T>(2.0) * self.upper[packed_index(self.dim, i, j)].norm_sqr();
            }
        }
        sum.sqrt()
    }

    pub fn matvec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.dim, "vector length must match dimension");
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.dim];
        for i in 0..self.dim {
            let mut acc = Complex::new(T::zero(), T::zero());
            for j in 0..self.dim {
                acc += self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn to_dense(&self) -> ComplexMatrix<T> {
        let mut m = ComplexMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }
}

/// Cholesky factorization `m = L L^H` of a Hermitian positive definite
/// matrix; returns the lower triangular factor.
pub fn cholesky<T: Scalar>(m: &HermitianMatrix<T>) -> Result<ComplexMatrix<T>> {
    let n = m.dim();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m.get(j, j).re;
        for k in 0..j {
            diag -= l.get(j, k).norm_sqr();
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        l.set(j, j, Complex::new(ljj, T::zero()));
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k).conj();
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L L^H x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &ComplexMatrix<T>, b: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = l.rows();
    assert_eq!(b.len(), n, "right-hand side length must match");
    // forward: L z = b
    let mut z = b.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    // backward: L^H x = z
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i).conj() * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    z
}

/// Inverse of a Hermitian positive definite matrix via Cholesky solves.
pub fn hermitian_inverse<T: Scalar>(m: &HermitianMatrix<T>) -> Result<HermitianMatrix<T>> {
    let n = m.dim();
    let l = cholesky(m)?;
    let mut inv = HermitianMatrix::zeros(n);
    let mut e = vec![Complex::new(T::zero(), T::zero()); n];
    for j in 0..n {
        e[j] = Complex::new(T::one(), T::zero());
        let col = cholesky_solve(&l, &e);
        e[j] = Complex::new(T::zero(), T::zero());
        for i in 0..=j {
            let v = if i == j {
                Complex::new(col[i].re, T::zero())
            } else {
                col[i]
            };
            inv.set_upper(i, j, v);
        }
    }
    Ok(inv)
}

/// Hermitian inner product `a^H b`.
pub fn inner<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    assert_eq!(a.len(), b.len(), "vector lengths must match");
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

pub fn norm_sq<T: Scalar>(a: &[Complex<T>]) -> T {
    let mut acc = T::zero();
    for x in a {
        acc += x.norm_sqr();
    }
    acc
}

/// General quadratic form `a^H m b`.
pub fn quadratic_form<T: Scalar>(
    a: &[Complex<T>],
    m: &HermitianMatrix<T>,
    b: &[Complex<T>],
) -> Result<Complex<T>> {
    if a.len() != m.dim() || b.len() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "quadratic form: vectors {} / {} against matrix {}",
            a.len(),
            b.len(),
            m.dim()
        )));
    }
    Ok(inner(a, &m.matvec(b)))
}

/// Quadratic form `d^H m d`, which is real for Hermitian `m`; the residual
/// imaginary part from rounding is clamped away.
pub fn hermitian_form<T: Scalar>(d: &[Complex<T>], m: &HermitianMatrix<T>) -> T {
    debug_assert_eq!(d.len(), m.dim());
    let mut acc = T::zero();
    for i in 0..m.dim() {
        acc += m.get(i, i).re * d[i].norm_sqr();
        for j in i + 1..m.dim() {
            // d_i^* m_ij d_j + d_j^* m_ji d_i = 2 Re(d_i^* m_ij d_j)
            acc += real::<T>(2.0) * (d[i].conj() * m.get(i, j) * d[j]).re;
        }
    }
    acc
}

pub fn frobenius_norm<T: Scalar>(m: &ComplexMatrix<T>) -> T {
    let mut sum = T::zero();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            sum += m.get(i, j).norm_sqr();
        }
    }
    sum.sqrt()
}

pub fn trace<T: Scalar>(m: &HermitianMatrix<T>) -> T {
    m.trace()
}

/// `tr(a b)` for Hermitian `a`, `b`; real by symmetry.
pub fn trace_of_product<T: Scalar>(a: &HermitianMatrix<T>, b: &HermitianMatrix<T>) -> T {
    assert_eq!(a.dim(), b.dim(), "dimensions must match");
    let mut t = T::zero();
    for i in 0..a.dim() {
        for j in 0..a.dim() {
            t += (a.get(i, j) * b.get(j, i)).re;
        }
    }
    t
}

/// Relative Frobenius distance between a Hermitian matrix and a dense one.
pub fn relative_error<T: Scalar>(reference: &HermitianMatrix<T>, dense: &ComplexMatrix<T>) -> T {
    let mut num = T::zero();
    for i in 0..reference.dim() {
        for j in 0..reference.dim() {
            num += (reference.get(i, j) - dense.get(i, j)).norm_sqr();
        }
    }
    num.sqrt() / reference.frobenius_norm()
}
