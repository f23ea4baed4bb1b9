//! Direct solver for sparse symmetric systems with a narrow envelope
//! (variable-band / skyline storage), factored as `L D L^T` without pivoting.
//!
//! Used for the SPD stream-function system of the flow solver and for the
//! complex-symmetric field system of the impedance solver. Both are assembled
//! with a column-major ordering of unknowns, which keeps every row's envelope
//! to about two grid columns.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::{Error, Result};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    const ZERO: Self;
    fn from_f64(x: f64) -> Self;
    fn abs_sq(self) -> f64;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn abs_sq(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm2<T: Scalar>(v: &[T]) -> f64 {
    libm::sqrt(v.iter().map(|x| x.abs_sq()).sum::<f64>())
}

/// Lower triangle of a symmetric matrix; row `i` stores columns
/// `first[i]..=i` contiguously.
#[derive(Debug, Clone)]
pub struct EnvelopeMatrix<T> {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> EnvelopeMatrix<T> {
    /// `first[i]` is the lowest column index that row `i` will ever touch.
    pub fn new(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut acc = 0usize;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "envelope start beyond diagonal");
            start.push(acc);
            acc += i - f + 1;
        }
        start.push(acc);
        EnvelopeMatrix {
            first,
            start,
            vals: vec![T::ZERO; acc],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.vals.len()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(j >= self.first[i], "entry ({i},{j}) outside envelope");
        self.start[i] + (j - self.first[i])
    }

    /// Adds `v` to entry (i, j) (and implicitly to (j, i)).
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        if b < self.first[a] {
            T::ZERO
        } else {
            self.vals[self.idx(a, b)]
        }
    }

    fn row(&self, i: usize) -> &[T] {
        &self.vals[self.start[i]..self.start[i + 1]]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut y = vec![T::ZERO; n];
        for i in 0..n {
            let f = self.first[i];
            let row = self.row(i);
            let last = row.len() - 1;
            y[i] += dot(&row[..last], &x[f..i]) + row[last] * x[i];
            for (k, &a) in row[..last].iter().enumerate() {
                y[f + k] += a * x[i];
            }
        }
        y
    }

    /// In-place `L D L^T` factorization. Fails on a zero or non-finite pivot.
    pub fn factor(&self) -> Result<LdlFactor<T>> {
        let n = self.dim();
        let mut vals = self.vals.clone();
        let mut diag = vec![T::ZERO; n];
        let first = &self.first;
        let start = &self.start;
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = vals.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            // row_i[j - fi] <- L_ij * D_j (not yet divided)
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &done[start[j]..start[j] + (j - fj)];
                let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                row_i[j - fi] -= s;
            }
            let mut d = row_i[i - fi];
            for j in fi..i {
                let g = row_i[j - fi];
                let l = g / diag[j];
                d -= g * l;
                row_i[j - fi] = l;
            }
            let mag = d.abs_sq();
            if mag == 0.0 || !mag.is_finite() {
                return Err(Error::SolverDiverged {
                    residual: f64::INFINITY,
                });
            }
            diag[i] = d;
            row_i[i - fi] = d;
        }
        Ok(LdlFactor {
            first: self.first.clone(),
            start: self.start.clone(),
            vals,
            diag,
        })
    }

    /// Factor, solve, refine once if needed, and verify the relative
    /// residual against `tol`.
    pub fn solve(&self, b: &[T], tol: f64) -> Result<Vec<T>> {
        let fac = self.factor()?;
        let mut x = fac.solve(b);
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let mut res = self.residual(&x, b);
        let mut rel = norm2(&res) / bnorm;
        if rel > tol * 1e-3 {
            let dx = fac.solve(&res);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            res = self.residual(&x, b);
            rel = norm2(&res) / bnorm;
        }
        if !(rel <= tol) {
            return Err(Error::SolverDiverged { residual: rel });
        }
        Ok(x)
    }

    fn residual(&self, x: &[T], b: &[T]) -> Vec<T> {
        let ax = self.mul_vec(x);
        b.iter().zip(ax).map(|(&bi, a)| bi - a).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> LdlFactor<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.diag.len();
        let mut x = b.to_vec();
        for i in 0..n {
            let f = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1] - 1];
            let s = dot(row, &x[f..i]);
            x[i] -= s;
        }
        for (xi, &d) in x.iter_mut().zip(&self.diag) {
            *xi = *xi / d;
        }
        for i in (0..n).rev() {
            let f = self.first[i];
            let xi = x[i];
            let row = &self.vals[self.start[i]..self.start[i + 1] - 1];
            for (k, &l) in row.iter().enumerate() {
                x[f + k] -= l * xi;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> EnvelopeMatrix<f64> {
        let first = (0..n).map(|i| i.saturating_sub(1)).collect();
        let mut a = EnvelopeMatrix::new(first);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn tridiagonal_solve_matches_known_solution() {
        let n = 50;
        let a = laplacian_1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = a.solve(&b, 1e-12).unwrap();
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn variable_envelope_complex_symmetric() {
        // dense-ish complex symmetric, diagonally dominant
        let n = 12;
        let first: Vec<usize> = (0..n).map(|i| if i % 3 == 0 { 0 } else { i - 1 }).collect();
        let mut a = EnvelopeMatrix::<Complex64>::new(first.clone());
        for (i, &f) in first.iter().enumerate() {
            a.add(i, i, Complex64::new(10.0, 1.0 + i as f64));
            for j in f..i {
                a.add(i, j, Complex64::new(0.3, -0.2 * j as f64 / n as f64));
            }
        }
        let x_true: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b = a.mul_vec(&x_true);
        let x = a.solve(&b, 1e-12).unwrap();
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = EnvelopeMatrix::<f64>::new(vec![0, 0]);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.factor(), Err(Error::SolverDiverged { .. })));
    }
}
