//! Small dense symmetric matrices (dimension = number of null-family parameters).

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data
            .chunks(self.dim.max(1))
            .map(|c| c.to_vec())
            .collect()
    }

    /// `self += scale · v vᵀ`.
    pub fn add_outer(&mut self, v: &[T], scale: T) {
        for i in 0..self.dim {
            let vi = v[i] * scale;
            for j in 0..self.dim {
                self.data[i * self.dim + j] = self.data[i * self.dim + j] + vi * v[j];
            }
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Self {
            dim: self.dim,
            data,
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.data[i * self.dim + j] * v[j])
                    .sum()
            })
            .collect()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.dim).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self[(i, j)], self[(j, i)]);
                (a - b).abs() <= tol * (T::one() + a.abs().max(b.abs()))
            })
        })
    }

    /// Lower Cholesky factor, or `None` if the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<SquareMatrix<T>> {
        let n = self.dim;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut diag = self[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) {
                return None;
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Some(l)
    }

    /// Solves `A x = b` for symmetric positive definite `A`.
    pub fn solve_spd(&self, b: &[T]) -> Option<Vec<T>> {
        let l = self.cholesky()?;
        Some(cholesky_solve(&l, b))
    }

    pub fn inverse_spd(&self) -> Option<SquareMatrix<T>> {
        let l = self.cholesky()?;
        let n = self.dim;
        let mut inv = Self::zeros(n);
        let mut e = vec![T::zero(); n];
        for col in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[col] = T::one();
            let x = cholesky_solve(&l, &e);
            for row in 0..n {
                inv[(row, col)] = x[row];
            }
        }
        // Symmetrize the round-off.
        for i in 0..n {
            for j in 0..i {
                let avg = (inv[(i, j)] + inv[(j, i)]) * T::lit(0.5);
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        Some(inv)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        let n = self.dim;
        let mut a = self.clone();
        let two = T::lit(2.0);
        for _sweep in 0..64 {
            let off: T = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            let scale: T = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum::<T>() + off;
            if off <= T::epsilon() * T::epsilon() * scale || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// Spectral condition number `λ_max / λ_min`; infinite when not positive definite.
    pub fn condition_number(&self) -> T {
        let ev = self.symmetric_eigenvalues();
        match (ev.first(), ev.last()) {
            (Some(&lo), Some(&hi)) if lo > T::zero() => hi / lo,
            _ => T::infinity(),
        }
    }
}

fn cholesky_solve<T: Real>(l: &SquareMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.dim();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
