//! Empirical martingale transform `T_n` and the statistics built on it.
//!
//! On `[0, t₀]`,
//!
//! ```text
//! (T_n η)(t) = η(t) − Σ_{t_j ≤ t} (1/n) β̂^{-1/2}(t_j) gᵀ(t_j) H_n^{-1}(t_j)
//!                      · Σ_{t_i ≥ t_j} β̂^{-1/2}(t_i) g(t_i) Δη(t_i)
//! H_n(t_j)  = (1/n) Σ_{t_i ≥ t_j} β̂^{-1}(t_i) g(t_i) gᵀ(t_i)
//! ```
//!
//! The transform annihilates every process of the form
//! `Σ_{t_j ≤ t} β̂^{-1/2}(t_j) gᵀ(t_j) c`, which removes the drift caused by
//! estimating the null parameter.

use crate::design::DesignGrid;
use crate::error::{Error, Result};
use crate::linalg::{dot, SquareMatrix};
use crate::process::{StepProcess, MAX_CONDITION};
use crate::scalar::Real;

/// Default right truncation point.
pub const DEFAULT_T0: f64 = 0.9;

/// Tail Gram matrices `H_n(t_j)` for every design point `t_j ≤ t₀`.
#[derive(Debug, Clone)]
pub struct HnField<T> {
    t0: T,
    n: usize,
    matrices: Vec<SquareMatrix<T>>,
    inverses: Vec<SquareMatrix<T>>,
    conditions: Vec<T>,
}

impl<T: Real> HnField<T> {
    pub fn t0(&self) -> T {
        self.t0
    }

    /// Number of design points `t_j ≤ t₀`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn design_len(&self) -> usize {
        self.n
    }

    pub fn matrix(&self, j: usize) -> &SquareMatrix<T> {
        &self.matrices[j]
    }

    pub fn inverse(&self, j: usize) -> &SquareMatrix<T> {
        &self.inverses[j]
    }

    pub fn conditions(&self) -> &[T] {
        &self.conditions
    }

    pub fn max_condition(&self) -> T {
        self.conditions.iter().copied().fold(T::zero(), T::max)
    }
}

fn check_inputs<T: Real>(n: usize, gradient: &[Vec<T>], beta: &[T]) -> Result<usize> {
    if gradient.len() != n || beta.len() != n {
        return Err(Error::Dimension(format!(
            "grid has {n} points, gradient {} rows, beta {} values",
            gradient.len(),
            beta.len()
        )));
    }
    let d = gradient.first().map_or(0, Vec::len);
    if d == 0 || gradient.iter().any(|g| g.len() != d) {
        return Err(Error::Dimension(
            "gradient rows must share a positive dimension".into(),
        ));
    }
    if let Some(i) = beta
        .iter()
        .position(|b| !(*b > T::zero()) || !b.is_finite())
    {
        return Err(Error::Contract(format!(
            "beta must be positive and finite (index {i})"
        )));
    }
    Ok(d)
}

/// Builds `H_n(t_j)` and its inverse for every `t_j ≤ t₀`.
pub fn hn_field<T: Real>(
    grid: &DesignGrid<T>,
    gradient: &[Vec<T>],
    beta: &[T],
    t0: T,
) -> Result<HnField<T>> {
    let n = grid.len();
    let d = check_inputs(n, gradient, beta)?;
    if !(t0 > T::zero() && t0 <= T::one()) {
        return Err(Error::Contract(format!("t0 must lie in (0, 1), got {t0}")));
    }
    let cutoff = grid.count_le(t0);
    if cutoff == 0 {
        return Err(Error::Contract(format!(
            "no design points at or below t0 = {t0}"
        )));
    }
    let t = grid.points();
    let inv_n = T::one() / T::count(n);
    let mut tail = SquareMatrix::zeros(d);
    let mut matrices = vec![SquareMatrix::zeros(d); cutoff];
    for j in (0..n).rev() {
        tail.add_outer(&gradient[j], inv_n / beta[j]);
        if j < cutoff {
            matrices[j] = tail.clone();
        }
    }
    let limit = T::lit(MAX_CONDITION);
    let mut inverses = Vec::with_capacity(cutoff);
    let mut conditions = Vec::with_capacity(cutoff);
    for (j, h) in matrices.iter().enumerate() {
        let singular = |cond: T| Error::SingularH {
            t: t[j].as_f64(),
            condition: cond.to_f64().unwrap_or(f64::INFINITY),
        };
        if n - j < d {
            return Err(singular(T::infinity()));
        }
        let cond = h.condition_number();
        if !(cond < limit) {
            return Err(singular(cond));
        }
        let inv = h.inverse_spd().ok_or_else(|| singular(cond))?;
        inverses.push(inv);
        conditions.push(cond);
    }
    Ok(HnField {
        t0,
        n,
        matrices,
        inverses,
        conditions,
    })
}

/// `(T_n η)(t_j)` at the design points `t_j ≤ t₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedProcess<T> {
    points: Vec<T>,
    values: Vec<T>,
    t0: T,
    f_n_t0: T,
    n: usize,
}

impl<T: Real> TransformedProcess<T> {
    pub fn points(&self) -> &[T] {
        &self.points
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn t0(&self) -> T {
        self.t0
    }
    /// `F_n(t₀)`.
    pub fn f_n_t0(&self) -> T {
        self.f_n_t0
    }
    pub fn design_len(&self) -> usize {
        self.n
    }
    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

fn transform_prelude<T: Real>(
    eta: &StepProcess<T>,
    field: &HnField<T>,
    grid: &DesignGrid<T>,
    gradient: &[Vec<T>],
    beta: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let n = grid.len();
    check_inputs(n, gradient, beta)?;
    if eta.values().len() != n || field.design_len() != n {
        return Err(Error::Dimension(format!(
            "process has {} values, field covers {} points, grid {n}",
            eta.values().len(),
            field.design_len()
        )));
    }
    let inv_sqrt_beta = beta.iter().map(|&b| T::one() / b.sqrt()).collect();
    Ok((eta.jumps(), inv_sqrt_beta))
}

fn finish<T: Real>(
    grid: &DesignGrid<T>,
    field: &HnField<T>,
    values: Vec<T>,
) -> TransformedProcess<T> {
    let m = field.len();
    TransformedProcess {
        points: grid.points()[..m].to_vec(),
        values,
        t0: field.t0(),
        f_n_t0: T::count(m) / T::count(grid.len()),
        n: grid.len(),
    }
}

/// Applies `T_n` with suffix-accumulated inner sums, `O(n d²)`.
pub fn apply_transform<T: Real>(
    eta: &StepProcess<T>,
    field: &HnField<T>,
    grid: &DesignGrid<T>,
    gradient: &[Vec<T>],
    beta: &[T],
) -> Result<TransformedProcess<T>> {
    let (jumps, isb) = transform_prelude(eta, field, grid, gradient, beta)?;
    let n = grid.len();
    let m = field.len();
    let d = gradient[0].len();
    let inv_n = T::one() / T::count(n);

    // inner[j] = Σ_{i ≥ j} β̂^{-1/2}(t_i) g(t_i) Δη(t_i)
    let mut inner = vec![vec![T::zero(); d]; m];
    let mut acc = vec![T::zero(); d];
    for i in (0..n).rev() {
        let s = isb[i] * jumps[i];
        for (a, &g) in acc.iter_mut().zip(&gradient[i]) {
            *a = *a + s * g;
        }
        if i < m {
            inner[i].copy_from_slice(&acc);
        }
    }

    let mut compensator = T::zero();
    let values = (0..m)
        .map(|j| {
            let proj = field.inverse(j).mul_vec(&inner[j]);
            compensator = compensator + inv_n * isb[j] * dot(&gradient[j], &proj);
            eta.values()[j] - compensator
        })
        .collect();
    Ok(finish(grid, field, values))
}

/// Applies `T_n` by evaluating both sums directly at every point, `O(n² d)` per point.
pub fn apply_transform_reference<T: Real>(
    eta: &StepProcess<T>,
    field: &HnField<T>,
    grid: &DesignGrid<T>,
    gradient: &[Vec<T>],
    beta: &[T],
) -> Result<TransformedProcess<T>> {
    let (jumps, isb) = transform_prelude(eta, field, grid, gradient, beta)?;
    let t = grid.points();
    let n = grid.len();
    let m = field.len();
    let d = gradient[0].len();
    let inv_n = T::one() / T::count(n);
    let values = (0..m)
        .map(|k| {
            let mut outer = T::zero();
            for j in 0..n {
                if t[j] > t[k] {
                    continue;
                }
                let mut inner = vec![T::zero(); d];
                // Descending order keeps rounding comparable with the suffix sums.
                for i in (0..n).rev() {
                    if t[i] >= t[j] {
                        let s = isb[i] * jumps[i];
                        for (a, &g) in inner.iter_mut().zip(&gradient[i]) {
                            *a = *a + s * g;
                        }
                    }
                }
                let proj = field.inverse(j).mul_vec(&inner);
                outer = outer + inv_n * isb[j] * dot(&gradient[j], &proj);
            }
            eta.values()[k] - outer
        })
        .collect();
    Ok(finish(grid, field, values))
}

/// Cramér–von-Mises and Kolmogorov–Smirnov functionals rescaled to the unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistics<T> {
    /// `(1/F_n(t₀)²) (1/n) Σ_{t_j ≤ t₀} (T_nΛ_n)(t_j)²`
    pub g_normalized: T,
    /// `max_{t_j ≤ t₀} |T_nΛ_n(t_j)| / √F_n(t₀)`
    pub k_normalized: T,
}

pub fn statistics<T: Real>(tp: &TransformedProcess<T>) -> Statistics<T> {
    let n = T::count(tp.n.max(1));
    let f0 = tp.f_n_t0;
    if tp.values.is_empty() || f0 == T::zero() {
        return Statistics {
            g_normalized: T::zero(),
            k_normalized: T::zero(),
        };
    }
    let ss: T = tp.values.iter().map(|&v| v * v).sum();
    Statistics {
        g_normalized: ss / n / (f0 * f0),
        k_normalized: tp.max_abs() / f0.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, Density};

    fn grid(n: usize) -> DesignGrid<f64> {
        build_design(Density::Uniform, n).unwrap()
    }

    fn quad_basis(g: &DesignGrid<f64>) -> Vec<Vec<f64>> {
        g.points().iter().map(|&t| vec![1.0, t * t]).collect()
    }

    #[test]
    fn unit_basis_field_counts_tail() {
        let g = grid(10);
        let ones = vec![vec![1.0]; 10];
        let f = hn_field(&g, &ones, &[1.0; 10], 0.9).unwrap();
        assert_eq!(f.len(), 9);
        for j in 0..f.len() {
            assert!((f.matrix(j)[(0, 0)] - (10 - j) as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn full_interval_is_singular_for_two_parameters() {
        let g = grid(10);
        let err = hn_field(&g, &quad_basis(&g), &[1.0; 10], 1.0).unwrap_err();
        match err {
            Error::SingularH { t, .. } => assert!((t - 10.0 / 11.0).abs() < 1e-15),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn t0_outside_range_is_contract_error() {
        let g = grid(10);
        assert!(matches!(
            hn_field(&g, &quad_basis(&g), &[1.0; 10], 0.0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            hn_field(&g, &quad_basis(&g), &[1.0; 10], 1.2),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn quadratic_field_matches_direct_sum() {
        let g = grid(20);
        let basis = quad_basis(&g);
        let f = hn_field(&g, &basis, &[1.0; 20], 0.9).unwrap();
        let t = g.points();
        for j in 0..f.len() {
            let mut h = [[0.0f64; 2]; 2];
            for i in 0..20 {
                if t[i] >= t[j] {
                    let v = [1.0, t[i] * t[i]];
                    for a in 0..2 {
                        for b in 0..2 {
                            h[a][b] += v[a] * v[b] / 20.0;
                        }
                    }
                }
            }
            for a in 0..2 {
                for b in 0..2 {
                    assert!((f.matrix(j)[(a, b)] - h[a][b]).abs() < 1e-14);
                }
            }
            assert!(f.matrix(j).is_symmetric(1e-15));
        }
        // Matrix monotone: H(t_j) - H(t_{j+1}) is PSD.
        for j in 0..f.len() - 1 {
            let diff = f.matrix(j).sub(f.matrix(j + 1));
            assert!(diff.symmetric_eigenvalues()[0] >= -1e-15);
        }
    }

    #[test]
    fn zero_process_stays_zero() {
        let g = grid(15);
        let basis = quad_basis(&g);
        let beta = vec![1.3; 15];
        let f = hn_field(&g, &basis, &beta, 0.9).unwrap();
        let eta = StepProcess::new(g.points().to_vec(), vec![0.0; 15]).unwrap();
        let tp = apply_transform(&eta, &f, &g, &basis, &beta).unwrap();
        assert!(tp.values().iter().all(|&v| v == 0.0));
        let s = statistics(&tp);
        assert_eq!((s.g_normalized, s.k_normalized), (0.0, 0.0));
    }

    #[test]
    fn fast_path_matches_reference_path() {
        let g = grid(7);
        let basis = quad_basis(&g);
        let beta: Vec<f64> = (0..7).map(|i| 0.7 + 0.2 * i as f64).collect();
        let f = hn_field(&g, &basis, &beta, 0.8).unwrap();
        let vals: Vec<f64> = (0..7).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.4).collect();
        let eta = StepProcess::new(g.points().to_vec(), vals).unwrap();
        let fast = apply_transform(&eta, &f, &g, &basis, &beta).unwrap();
        let slow = apply_transform_reference(&eta, &f, &g, &basis, &beta).unwrap();
        for (a, b) in fast.values().iter().zip(slow.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn statistics_use_normalizer() {
        let g = grid(4);
        let ones = vec![vec![1.0]; 4];
        let f = hn_field(&g, &ones, &[1.0; 4], 0.5).unwrap();
        let tp = TransformedProcess {
            points: g.points()[..2].to_vec(),
            values: vec![1.0, -2.0],
            t0: 0.5,
            f_n_t0: 0.5,
            n: 4,
        };
        assert_eq!(f.len(), 2);
        let s = statistics(&tp);
        // (1/0.25) · (1/4) · (1 + 4) and 2/√0.5
        assert!((s.g_normalized - 5.0).abs() < 1e-15);
        assert!((s.k_normalized - 2.0 / 0.5f64.sqrt()).abs() < 1e-15);
    }
}
