//! Small dense matrices over exact rationals or `f64`, trace-word evaluation,
//! and a cyclic Jacobi eigensolver for symmetric matrices.

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::polynomials::{AtomKind, TraceAtom};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix rows have different lengths")]
    Ragged,
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("Jacobi iteration did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("no matrix bound for color {0}")]
    MissingColor(u16),
}

/// Ring operations needed by the trace evaluators.
pub trait Scalar: Clone + PartialEq + Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn from_rational(r: &BigRational) -> Self;
    fn to_f64(&self) -> f64;
    fn from_count(c: u64) -> Self;
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn from_count(c: u64) -> Self {
        BigRational::from_integer(c.into())
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn from_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_count(c: u64) -> Self {
        c as f64
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn diagonal(values: &[S]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = v.clone();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(LinalgError::Empty);
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Ragged);
        }
        Ok(Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Matrix { rows, cols, data })
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j).clone();
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix<S>) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if *a == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.data[idx] = out.data[idx].add(&a.mul(other.get(k, j)));
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> S {
        (0..self.rows.min(self.cols)).fold(S::zero(), |acc, i| acc.add(self.get(i, i)))
    }

    /// Exact symmetry test.
    pub fn is_symmetric_exact(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(Scalar::to_f64).collect() }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Matrix<T> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }
}

impl Matrix<f64> {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Symmetric within `rel_tol · max|a_ij|` entrywise.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let tol = rel_tol * self.max_abs();
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

/// `tr(x₁⋯x_k)` for the atom's word, with `matrices[c - 1]` bound to color `c`.
pub fn evaluate_atom<S: Scalar>(atom: &TraceAtom, matrices: &[Matrix<S>]) -> Result<S, LinalgError> {
    let fetch = |c: u16| matrices.get(c as usize - 1).ok_or(LinalgError::MissingColor(c));
    let word = atom.word();
    let transposed = |l: &crate::polynomials::Letter| l.transposed && atom.kind() == AtomKind::Shape;
    let first = fetch(word[0].color)?;
    let n = first.rows();
    for l in word {
        let m = fetch(l.color)?;
        if !m.is_square() || m.rows() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "color {} is {}x{}, expected {n}x{n}",
                l.color,
                m.rows(),
                m.cols()
            )));
        }
    }
    let oriented = |l: &crate::polynomials::Letter| -> Result<Matrix<S>, LinalgError> {
        let m = fetch(l.color)?;
        Ok(if transposed(l) { m.transpose() } else { m.clone() })
    };
    let mut acc = oriented(&word[0])?;
    for l in &word[1..] {
        acc = acc.matmul(&oriented(l)?)?;
    }
    Ok(acc.trace())
}

/// Eigenvalues and eigenvectors (as columns) of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-14·‖A‖_F`.
pub fn jacobi_eigen(a: &Matrix<f64>) -> Result<(Vec<f64>, Matrix<f64>), LinalgError> {
    const MAX_SWEEPS: usize = 50;
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch("eigenproblem needs a square matrix".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::<f64>::identity(n);
    let scale = a.frobenius();
    let off = |m: &Matrix<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) >= 1e-14 * scale && scale > 0.0 {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = *m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = *m.get(p, p);
                let aqq = *m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = *m.get(k, p);
                    let mkq = *m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = *m.get(p, k);
                    let mqk = *m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = *v.get(k, p);
                    let vkq = *v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Ok(((0..n).map(|i| *m.get(i, i)).collect(), v))
}

/// Checks symmetry (relative tolerance `1e-12`) and positive definiteness.
pub fn check_spd(a: &Matrix<f64>) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch("expected a square matrix".into()));
    }
    if !a.is_symmetric(1e-12) {
        return Err(LinalgError::NotSymmetric);
    }
    let (eig, _) = jacobi_eigen(a)?;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(LinalgError::NotPositiveDefinite(min));
    }
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomials::{ratio, Letter};

    fn rm(rows: &[&[i64]]) -> Matrix<BigRational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&x| ratio(x, 1)).collect()).collect()).unwrap()
    }

    #[test]
    fn atom_on_identity() {
        let a = TraceAtom::shape(vec![Letter::plain(1)]).unwrap();
        let i3 = Matrix::<BigRational>::identity(3);
        assert_eq!(evaluate_atom(&a, &[i3]).unwrap(), ratio(3, 1));
    }

    #[test]
    fn atom_b_bt_is_sum_of_squares() {
        let b = rm(&[&[1, 2], &[3, 4]]);
        let a = TraceAtom::shape(vec![Letter::plain(1), Letter::t(1)]).unwrap();
        assert_eq!(evaluate_atom(&a, std::slice::from_ref(&b)).unwrap(), ratio(30, 1));
        let sq = TraceAtom::shape(vec![Letter::plain(1), Letter::plain(1)]).unwrap();
        // tr(B²) = 1 + 6 + 6 + 16
        assert_eq!(evaluate_atom(&sq, &[b]).unwrap(), ratio(29, 1));
    }

    #[test]
    fn atom_dimension_mismatch() {
        let a = TraceAtom::shape(vec![Letter::plain(1), Letter::plain(2)]).unwrap();
        let r = evaluate_atom(&a, &[Matrix::<f64>::identity(2), Matrix::identity(3)]);
        assert!(matches!(r, Err(LinalgError::DimensionMismatch(_))));
        assert_eq!(evaluate_atom(&a, &[Matrix::<f64>::identity(2)]), Err(LinalgError::MissingColor(2)));
    }

    #[test]
    fn jacobi_two_by_two() {
        let a = Matrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (mut e, _) = jacobi_eigen(&a).unwrap();
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
        assert!(check_spd(&a).is_ok());
        let b = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(check_spd(&b), Err(LinalgError::NotPositiveDefinite(_))));
        let c = Matrix::from_rows(vec![vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert_eq!(check_spd(&c), Err(LinalgError::NotSymmetric));
    }
}
