//! Dense real linear algebra for the regularized least-squares solves.
//!
//! Matrices are row-major. Vectors are plain slices; the routines here never
//! need more structure than that. Accumulation of least-squares systems
//! should happen in `f64` since the Gram matrices built from ReLU features
//! are typically badly conditioned.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance used to decide whether an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dims(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `(a + aᵀ) / 2`.
    pub fn symmetrized(&self) -> Result<Self> {
        self.require_square()?;
        let half = T::of(0.5);
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(s)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::dims(format!(
                "{}x{} matrix applied to vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Adds `lambda` to every diagonal entry.
    pub fn add_diagonal(&mut self, lambda: T) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += lambda;
        }
    }

    pub fn frobenius_norm(&self) -> T {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn is_symmetric(&self) -> bool {
        let tol = T::of(SYMMETRY_TOL);
        (0..self.rows).all(|i| {
            (i + 1..self.cols).all(|j| {
                let (a, b) = (self[(i, j)], self[(j, i)]);
                (a - b).abs() <= tol * T::one().max(a.abs().max(b.abs()))
            })
        })
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::dims(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Euclidean distance between two equally long vectors.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = a`.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    a.require_square()?;
    if !a.is_symmetric() {
        return Err(Error::InvalidInput(
            "cholesky requires a symmetric matrix".into(),
        ));
    }
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let pivot = a[(j, j)] - dot(lj, lj);
        if !(pivot > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot: pivot.to_f64_lossy(),
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·x = b` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = l.rows;
    if b.len() != n {
        return Err(Error::dims(format!(
            "rhs of length {} for a {n}x{n} factor",
            b.len()
        )));
    }
    let mut y = b.to_vec();
    for i in 0..n {
        let s = y[i] - dot(&l.row(i)[..i], &y[..i]);
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    Ok(y)
}

/// Solves a general square system by Gaussian elimination with partial
/// pivoting.
pub fn lu_solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    a.require_square()?;
    let n = a.rows;
    if b.len() != n {
        return Err(Error::dims(format!(
            "rhs of length {} for a {n}x{n} system",
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = a
        .data
        .iter()
        .fold(T::zero(), |acc, v| acc.max(v.abs()))
        .max(T::min_positive_value());
    let tiny = scale * T::epsilon() * T::of(n as f64);
    for col in 0..n {
        let (piv, pmax) =
            (col..n)
                .map(|r| (r, m[(r, col)].abs()))
                .fold(
                    (col, T::zero()),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if !(pmax > tiny) {
            return Err(Error::Singular(col));
        }
        if piv != col {
            for c in 0..n {
                m.data.swap(piv * n + c, col * n + c);
            }
            x.swap(piv, col);
        }
        let d = m[(col, col)];
        for r in (col + 1)..n {
            let f = m[(r, col)] / d;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = m[(col, c)];
                m[(r, c)] -= f * v;
            }
            let xc = x[col];
            x[r] -= f * xc;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for c in (i + 1)..n {
            s -= m[(i, c)] * x[c];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

fn regularized_parts<T: Scalar>(
    a: &Matrix<T>,
    b: &[T],
    lambda: T,
    w_prior: &[T],
) -> Result<(Matrix<T>, Vec<T>)> {
    a.require_square()?;
    let n = a.rows;
    if b.len() != n || w_prior.len() != n {
        return Err(Error::dims(format!(
            "system of size {n} with rhs {} and prior {}",
            b.len(),
            w_prior.len()
        )));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::InvalidInput(format!(
            "regularization coefficient must be nonnegative, got {lambda}"
        )));
    }
    let mut lhs = a.clone();
    lhs.add_diagonal(lambda);
    let rhs = b
        .iter()
        .zip(w_prior)
        .map(|(&bi, &pi)| bi + lambda * pi)
        .collect();
    Ok((lhs, rhs))
}

/// Solves `(a + λI)·w = b + λ·w_prior` by Cholesky after symmetrizing `a`.
pub fn solve_regularized<T: Scalar>(
    a: &Matrix<T>,
    b: &[T],
    lambda: T,
    w_prior: &[T],
) -> Result<Vec<T>> {
    let (lhs, rhs) = regularized_parts(a, b, lambda, w_prior)?;
    let l = cholesky(&lhs.symmetrized()?)?;
    cholesky_solve(&l, &rhs)
}

/// Same system as [`solve_regularized`] without assuming symmetry; used for
/// LSTD-Q, whose matrix is not symmetric.
pub fn solve_regularized_general<T: Scalar>(
    a: &Matrix<T>,
    b: &[T],
    lambda: T,
    w_prior: &[T],
) -> Result<Vec<T>> {
    let (lhs, rhs) = regularized_parts(a, b, lambda, w_prior)?;
    lu_solve(&lhs, &rhs)
}

const POWER_MAX_ITERS: usize = 20_000;
const POWER_TOL: f64 = 1e-12;

fn power_iteration<T: Scalar>(
    n: usize,
    mut apply: impl FnMut(&[T]) -> Result<Vec<T>>,
) -> Result<T> {
    // Deterministic start that is not orthogonal to any coordinate axis.
    let mut v: Vec<T> = (0..n)
        .map(|i| T::one() + T::of(i as f64 / (n as f64 + 1.0)))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = T::zero();
    for _ in 0..POWER_MAX_ITERS {
        let w = apply(&v)?;
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == T::zero() {
            return Ok(T::zero());
        }
        v = w.into_iter().map(|x| x / nw).collect();
        if (next - estimate).abs() <= T::of(POWER_TOL) * next.abs() {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}

/// Ratio of the extreme eigenvalues of a symmetric positive definite matrix,
/// estimated by power iteration on `a` and on `a⁻¹` (through its Cholesky
/// factor).
pub fn condition_estimate<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    a.require_square()?;
    let n = a.rows;
    if n == 0 {
        return Err(Error::Empty("condition estimate of an empty matrix"));
    }
    let sym = a.symmetrized()?;
    let l = cholesky(&sym)?;
    let largest = power_iteration(n, |v| sym.matvec(v))?;
    let inv_smallest = power_iteration(n, |v| cholesky_solve(&l, v))?;
    Ok((largest * inv_smallest).max(T::one()))
}
