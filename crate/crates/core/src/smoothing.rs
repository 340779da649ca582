//! Kernel smoothing on the fixed design: Nadaraya–Watson and local-linear
//! weights, least-squares cross-validated bandwidths, and the standardizing
//! estimate `β̂(t_i)` built from smoothed fourth powers of residuals.

use serde::{Deserialize, Serialize};

use crate::design::{DesignGrid, Sample};
use crate::error::{Error, Result};
use crate::residuals::DifferenceSequence;
use crate::scalar::Real;

/// Number of log-spaced candidate bandwidths searched by cross validation.
pub const CV_GRID_SIZE: usize = 40;
/// Upper end of the cross-validation grid (the lower end is `1/n`).
pub const CV_MAX_BANDWIDTH: f64 = 0.5;
/// `β̂` is floored at this fraction of the median positive fourth-moment term.
pub const BETA_FLOOR_FRACTION: f64 = 1e-3;

/// Symmetric kernels supported on `[-1, 1]` with `K ≤ 1` and `K ≥ κ > 0` on `|u| ≤ 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelShape {
    /// `0.75 (1 - u²)`, κ = 0.5625.
    #[default]
    Epanechnikov,
    /// `(15/16) (1 - u²)²`, κ ≈ 0.527.
    Biweight,
    /// `1 - |u|`, κ = 0.5.
    Triangular,
}

impl KernelShape {
    pub fn eval<T: Real>(self, u: T) -> T {
        let a = u.abs();
        if a >= T::one() {
            return T::zero();
        }
        match self {
            KernelShape::Epanechnikov => T::lit(0.75) * (T::one() - a * a),
            KernelShape::Biweight => {
                let s = T::one() - a * a;
                T::lit(15.0 / 16.0) * s * s
            }
            KernelShape::Triangular => T::one() - a,
        }
    }

    /// Lower bound of the kernel on `|u| ≤ 1/2`.
    pub fn kappa(self) -> f64 {
        self.eval(0.5f64)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelShape::Epanechnikov => "epanechnikov",
            KernelShape::Biweight => "biweight",
            KernelShape::Triangular => "triangular",
        }
    }
}

impl std::str::FromStr for KernelShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(Self::Epanechnikov),
            "biweight" | "quartic" => Ok(Self::Biweight),
            "triangular" => Ok(Self::Triangular),
            other => Err(Error::Contract(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub shape: KernelShape,
    pub bandwidth: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(shape: KernelShape, bandwidth: T) -> Result<Self> {
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(Error::Contract(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { shape, bandwidth })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingMethod {
    #[serde(alias = "nw")]
    NadarayaWatson,
    #[default]
    LocalLinear,
}

impl std::str::FromStr for SmoothingMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nw" | "nadaraya-watson" => Ok(Self::NadarayaWatson),
            "ll" | "local-linear" => Ok(Self::LocalLinear),
            other => Err(Error::Contract(format!(
                "unknown smoothing method '{other}'"
            ))),
        }
    }
}

/// One row of a banded weight matrix: weights for columns `start..start + weights.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow<T> {
    pub start: usize,
    pub weights: Vec<T>,
}

/// Linear smoother weights `w_ij` on a design grid, stored by kernel window.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    rows: Vec<WeightRow<T>>,
    method: SmoothingMethod,
    kernel: KernelSpec<T>,
}

impl<T: Real> WeightMatrix<T> {
    pub fn rows(&self) -> &[WeightRow<T>] {
        &self.rows
    }

    pub fn method(&self) -> SmoothingMethod {
        self.method
    }

    pub fn kernel(&self) -> KernelSpec<T> {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let row = &self.rows[i];
        j.checked_sub(row.start)
            .and_then(|k| row.weights.get(k))
            .copied()
            .unwrap_or_else(T::zero)
    }

    /// `Σ_j w_ij v_j` for every row `i`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|row| {
                row.weights
                    .iter()
                    .zip(&v[row.start..])
                    .map(|(&w, &x)| w * x)
                    .sum()
            })
            .collect()
    }

    /// Like [`apply`](Self::apply) but only over columns `j < limit`.
    fn apply_truncated(&self, v: &[T], limit: usize) -> Vec<T> {
        self.rows
            .iter()
            .map(|row| {
                let end = (row.start + row.weights.len()).min(limit);
                if end <= row.start {
                    return T::zero();
                }
                row.weights[..end - row.start]
                    .iter()
                    .zip(&v[row.start..end])
                    .map(|(&w, &x)| w * x)
                    .sum()
            })
            .collect()
    }
}

/// Builds the smoother weight matrix for `kernel` on `grid`.
///
/// Windows contain the design points with `|t_j - t_i| ≤ h`; windows are
/// truncated at the ends of the design, which renormalizes them near the
/// boundary.
pub fn kernel_weights<T: Real>(
    grid: &DesignGrid<T>,
    kernel: KernelSpec<T>,
    method: SmoothingMethod,
) -> Result<WeightMatrix<T>> {
    let t = grid.points();
    let h = kernel.bandwidth;
    let mut rows = Vec::with_capacity(t.len());
    for (i, &ti) in t.iter().enumerate() {
        let start = t.partition_point(|&x| x < ti - h);
        let end = t.partition_point(|&x| x <= ti + h);
        let k: Vec<T> = t[start..end]
            .iter()
            .map(|&tj| kernel.shape.eval((tj - ti) / h))
            .collect();
        let weights = match method {
            SmoothingMethod::NadarayaWatson => {
                let s0: T = k.iter().copied().sum();
                if !(s0 > T::zero()) {
                    return Err(Error::BandwidthTooSmall { index: i });
                }
                k.iter().map(|&kj| kj / s0).collect()
            }
            SmoothingMethod::LocalLinear => {
                let (mut s0, mut s1, mut s2) = (T::zero(), T::zero(), T::zero());
                for (&kj, &tj) in k.iter().zip(&t[start..end]) {
                    let d = (tj - ti) / h;
                    s0 = s0 + kj;
                    s1 = s1 + kj * d;
                    s2 = s2 + kj * d * d;
                }
                let det = s0 * s2 - s1 * s1;
                if !(det > T::tol(1e-12) * s0 * s2) || !(s0 > T::zero()) {
                    return Err(Error::BandwidthTooSmall { index: i });
                }
                k.iter()
                    .zip(&t[start..end])
                    .map(|(&kj, &tj)| kj * (s2 - (tj - ti) / h * s1) / det)
                    .collect()
            }
        };
        rows.push(WeightRow { start, weights });
    }
    Ok(WeightMatrix {
        rows,
        method,
        kernel,
    })
}

/// Fitted values `m̂_h(t_i) = Σ_j w_ij Y_j`.
pub fn m_hat<T: Real>(sample: &Sample<T>, weights: &WeightMatrix<T>) -> Result<Vec<T>> {
    if weights.len() != sample.len() {
        return Err(Error::Dimension(format!(
            "weights have {} rows, sample has {} points",
            weights.len(),
            sample.len()
        )));
    }
    Ok(weights.apply(sample.responses()))
}

/// The 40 log-spaced candidate bandwidths on `[1/n, 0.5]`.
pub fn cv_grid<T: Real>(n: usize) -> Vec<T> {
    let lo = (1.0 / n as f64).ln();
    let hi = CV_MAX_BANDWIDTH.ln();
    (0..CV_GRID_SIZE)
        .map(|k| T::lit((lo + (hi - lo) * k as f64 / (CV_GRID_SIZE - 1) as f64).exp()))
        .collect()
}

/// Leave-one-out squared prediction error at bandwidth `h`, or `None` when
/// some point has no other design point in its window.
pub fn cv_score<T: Real>(
    sample: &Sample<T>,
    shape: KernelShape,
    method: SmoothingMethod,
    h: T,
) -> Option<T> {
    let kernel = KernelSpec::new(shape, h).ok()?;
    let w = kernel_weights(sample.grid(), kernel, method).ok()?;
    let y = sample.responses();
    let fit = w.apply(y);
    let mut score = T::zero();
    for i in 0..y.len() {
        let wii = w.get(i, i);
        let rest = T::one() - wii;
        // Removing point i renormalizes its row by 1 - w_ii for both smoothers.
        if !(rest > T::tol(1e-10)) {
            return None;
        }
        let loo = (fit[i] - wii * y[i]) / rest;
        let e = y[i] - loo;
        score = score + e * e;
    }
    Some(score)
}

/// Least-squares cross-validated bandwidth.
///
/// Scores within round-off of the minimum count as ties and resolve to the
/// smallest bandwidth.
pub fn cv_bandwidth<T: Real>(
    sample: &Sample<T>,
    shape: KernelShape,
    method: SmoothingMethod,
) -> Result<T> {
    let n = sample.len();
    if n < 10 {
        return Err(Error::InsufficientData {
            required: 10,
            available: n,
        });
    }
    let scores: Vec<(T, T)> = cv_grid::<T>(n)
        .into_iter()
        .filter_map(|h| cv_score(sample, shape, method, h).map(|s| (h, s)))
        .collect();
    let best = scores
        .iter()
        .map(|&(_, s)| s)
        .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.min(s))))
        .ok_or(Error::NoValidBandwidth)?;
    let scale = sample
        .responses()
        .iter()
        .fold(T::one(), |m, &y| m.max(y.abs()));
    let noise = T::lit(1e3) * T::epsilon() * scale;
    let slack = best * T::tol(1e-10) + T::count(n) * noise * noise;
    scores
        .iter()
        .find(|&&(_, s)| s <= best + slack)
        .map(|&(h, _)| h)
        .ok_or(Error::NoValidBandwidth)
}

/// Estimate of the standardizing function at each design point.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate<T> {
    values: Vec<T>,
    raw: Vec<T>,
    floor_applied: Vec<bool>,
    floor: T,
}

impl<T: Real> BetaEstimate<T> {
    /// Floored values `β̂(t_i)`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Values before flooring.
    pub fn raw(&self) -> &[T] {
        &self.raw
    }

    pub fn floor_applied(&self) -> &[bool] {
        &self.floor_applied
    }

    pub fn floor(&self) -> T {
        self.floor
    }

    pub fn floor_count(&self) -> usize {
        self.floor_applied.iter().filter(|&&f| f).count()
    }

    /// Wraps known positive values (used when the standardizing function is known).
    pub fn known(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values
            .iter()
            .position(|v| !(*v > T::zero()) || !v.is_finite())
        {
            return Err(Error::Contract(format!(
                "known beta must be positive, index {i}"
            )));
        }
        let floor = values.iter().copied().fold(T::infinity(), T::min);
        Ok(Self {
            floor_applied: vec![false; values.len()],
            raw: values.clone(),
            values,
            floor,
        })
    }
}

/// `β̂` with the regression fit taken from the same weight matrix.
pub fn beta_hat<T: Real>(
    sample: &Sample<T>,
    weights: &WeightMatrix<T>,
    seq: &DifferenceSequence<T>,
) -> Result<BetaEstimate<T>> {
    let fitted = m_hat(sample, weights)?;
    beta_hat_with_fit(sample, &fitted, weights, seq)
}

/// `β̂(t_i) = Σ_j w_ij e_j⁴ + (4δ_r - 1) Σ_{j ≤ n-r-1} w_ij e_j² e_{j+r+1}²`
/// with residuals `e_j = Y_j - fitted_j`, floored below.
pub fn beta_hat_with_fit<T: Real>(
    sample: &Sample<T>,
    fitted: &[T],
    weights: &WeightMatrix<T>,
    seq: &DifferenceSequence<T>,
) -> Result<BetaEstimate<T>> {
    if fitted.len() != sample.len() {
        return Err(Error::Dimension(format!(
            "sample has {} points, fit {}",
            sample.len(),
            fitted.len()
        )));
    }
    let residuals: Vec<T> = sample
        .responses()
        .iter()
        .zip(fitted)
        .map(|(&y, &m)| y - m)
        .collect();
    beta_hat_from_residuals(&residuals, weights, seq)
}

/// `1 / √(1 - 2w_jj + Σ_k w_jk²)`: rescales `Y_j - m̂(t_j)` to the error scale.
pub fn leverage_scales<T: Real>(weights: &WeightMatrix<T>) -> Vec<T> {
    weights
        .rows()
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let wjj = weights.get(j, j);
            let ss: T = row.weights.iter().map(|&w| w * w).sum();
            let v = T::one() - T::lit(2.0) * wjj + ss;
            if v > T::zero() {
                T::one() / v.sqrt()
            } else {
                T::one()
            }
        })
        .collect()
}

/// `β̂` from given regression residuals `e_j`.
pub fn beta_hat_from_residuals<T: Real>(
    residuals: &[T],
    weights: &WeightMatrix<T>,
    seq: &DifferenceSequence<T>,
) -> Result<BetaEstimate<T>> {
    let n = residuals.len();
    let r = seq.order();
    if n <= r + 1 {
        return Err(Error::InsufficientData {
            required: r + 2,
            available: n,
        });
    }
    if weights.len() != n {
        return Err(Error::Dimension(format!(
            "{n} residuals, weights for {}",
            weights.len()
        )));
    }
    let e2: Vec<T> = residuals.iter().map(|&e| e * e).collect();
    let e4: Vec<T> = e2.iter().map(|&v| v * v).collect();
    let cross: Vec<T> = (0..n - r - 1).map(|j| e2[j] * e2[j + r + 1]).collect();

    let first = weights.apply(&e4);
    let coef = seq.correction();
    let raw: Vec<T> = if coef == T::zero() {
        first.clone()
    } else {
        let second = weights.apply_truncated(&cross, cross.len());
        first
            .iter()
            .zip(&second)
            .map(|(&a, &b)| a + coef * b)
            .collect()
    };

    let mut positive: Vec<T> = first.iter().copied().filter(|&v| v > T::zero()).collect();
    if positive.is_empty() {
        return Err(Error::DegenerateVariance);
    }
    positive.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = positive.len() / 2;
    let median = if positive.len() % 2 == 1 {
        positive[mid]
    } else {
        (positive[mid - 1] + positive[mid]) * T::lit(0.5)
    };
    let floor = median * T::lit(BETA_FLOOR_FRACTION);

    let floor_applied: Vec<bool> = raw.iter().map(|&v| !(v >= floor)).collect();
    let values = raw
        .iter()
        .zip(&floor_applied)
        .map(|(&v, &f)| if f { floor } else { v })
        .collect();
    Ok(BetaEstimate {
        values,
        raw,
        floor_applied,
        floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, Density};

    fn grid(n: usize) -> DesignGrid<f64> {
        build_design(Density::Uniform, n).unwrap()
    }

    fn sample(y: Vec<f64>) -> Sample<f64> {
        Sample::new(grid(y.len()), y).unwrap()
    }

    fn epa(h: f64) -> KernelSpec<f64> {
        KernelSpec::new(KernelShape::Epanechnikov, h).unwrap()
    }

    #[test]
    fn kernels_satisfy_shape_assumptions() {
        for shape in [
            KernelShape::Epanechnikov,
            KernelShape::Biweight,
            KernelShape::Triangular,
        ] {
            for k in 0..=200 {
                let u = -1.0 + k as f64 / 100.0;
                let v = shape.eval(u);
                assert!((0.0..=1.0).contains(&v));
                assert_eq!(v, shape.eval(-u));
                if u.abs() <= 0.5 {
                    assert!(v >= shape.kappa() - 1e-15);
                }
            }
            assert_eq!(shape.eval(1.5), 0.0);
        }
        assert!((KernelShape::Epanechnikov.kappa() - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one() {
        let g = grid(37);
        for method in [
            SmoothingMethod::NadarayaWatson,
            SmoothingMethod::LocalLinear,
        ] {
            for h in [0.06, 0.13, 0.4, 0.9] {
                let w = kernel_weights(&g, epa(h), method).unwrap();
                for i in 0..g.len() {
                    let s: f64 = (0..g.len()).map(|j| w.get(i, j)).sum();
                    assert!((s - 1.0).abs() < 1e-10, "method={method:?} h={h} i={i}");
                }
            }
        }
    }

    #[test]
    fn nw_window_is_compact() {
        let g = grid(30);
        let h = 0.1;
        let w = kernel_weights(&g, epa(h), SmoothingMethod::NadarayaWatson).unwrap();
        let t = g.points();
        for i in 0..30 {
            for j in 0..30 {
                if (t[j] - t[i]).abs() > h {
                    assert_eq!(w.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn tiny_bandwidth_gives_identity_nw() {
        let g = grid(8);
        let w = kernel_weights(&g, epa(0.01), SmoothingMethod::NadarayaWatson).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(w.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn tiny_bandwidth_breaks_local_linear() {
        let g = grid(8);
        let err = kernel_weights(&g, epa(0.01), SmoothingMethod::LocalLinear).unwrap_err();
        assert_eq!(err, Error::BandwidthTooSmall { index: 0 });
    }

    #[test]
    fn nw_matches_direct_formula() {
        let g = grid(5);
        let h = 0.3;
        let w = kernel_weights(&g, epa(h), SmoothingMethod::NadarayaWatson).unwrap();
        let t = g.points();
        let k = |u: f64| {
            if u.abs() < 1.0 {
                0.75 * (1.0 - u * u)
            } else {
                0.0
            }
        };
        for i in 0..5 {
            let denom: f64 = (0..5).map(|l| k((t[l] - t[i]) / h)).sum();
            for j in 0..5 {
                let direct = k((t[j] - t[i]) / h) / denom;
                assert!((w.get(i, j) - direct).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn local_linear_annihilates_first_moment() {
        let g = grid(25);
        let w = kernel_weights(&g, epa(0.2), SmoothingMethod::LocalLinear).unwrap();
        let t = g.points();
        for i in 0..25 {
            let m1: f64 = (0..25).map(|j| w.get(i, j) * (t[j] - t[i])).sum();
            assert!(m1.abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_values() {
        let g = grid(40);
        let y_const = vec![2.5; 40];
        let s = Sample::new(g.clone(), y_const).unwrap();
        for method in [
            SmoothingMethod::NadarayaWatson,
            SmoothingMethod::LocalLinear,
        ] {
            let w = kernel_weights(&g, epa(0.15), method).unwrap();
            assert!(m_hat(&s, &w)
                .unwrap()
                .iter()
                .all(|m| (m - 2.5).abs() < 1e-12));
        }
        let y: Vec<f64> = g.points().iter().map(|&t| 1.5 - 3.0 * t).collect();
        let s = Sample::new(g.clone(), y.clone()).unwrap();
        let w = kernel_weights(&g, epa(0.15), SmoothingMethod::LocalLinear).unwrap();
        let fit = m_hat(&s, &w).unwrap();
        for (f, e) in fit.iter().zip(&y) {
            assert!((f - e).abs() < 1e-10);
        }
    }

    #[test]
    fn m_hat_matches_matrix_vector_loop() {
        let g = grid(23);
        let y: Vec<f64> = (0..23).map(|i| ((i * 31 % 17) as f64).sin()).collect();
        let s = Sample::new(g.clone(), y.clone()).unwrap();
        let w = kernel_weights(&g, epa(0.17), SmoothingMethod::LocalLinear).unwrap();
        let fit = m_hat(&s, &w).unwrap();
        for i in 0..23 {
            let mut acc = 0.0;
            for j in 0..23 {
                acc += w.get(i, j) * y[j];
            }
            assert!((fit[i] - acc).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_response_cv_ties_to_smallest_valid_bandwidth() {
        let s = sample(vec![3.0; 30]);
        for method in [
            SmoothingMethod::NadarayaWatson,
            SmoothingMethod::LocalLinear,
        ] {
            let h = cv_bandwidth(&s, KernelShape::Epanechnikov, method).unwrap();
            let first_valid = cv_grid::<f64>(30)
                .into_iter()
                .find(|&h| cv_score(&s, KernelShape::Epanechnikov, method, h).is_some())
                .unwrap();
            assert_eq!(h, first_valid);
        }
    }

    #[test]
    fn cv_needs_ten_points() {
        let s = sample(vec![1.0; 9]);
        assert!(matches!(
            cv_bandwidth(&s, KernelShape::Epanechnikov, SmoothingMethod::LocalLinear),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn cv_grid_spans_range() {
        let g = cv_grid::<f64>(100);
        assert_eq!(g.len(), 40);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[39] - 0.5).abs() < 1e-14);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn order_one_beta_is_smoothed_fourth_power() {
        let y: Vec<f64> = (0..30).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let s = sample(y.clone());
        let w = kernel_weights(s.grid(), epa(0.2), SmoothingMethod::NadarayaWatson).unwrap();
        let seq = DifferenceSequence::order_one();
        let b = beta_hat(&s, &w, &seq).unwrap();
        let fit = m_hat(&s, &w).unwrap();
        let e4: Vec<f64> = y.iter().zip(&fit).map(|(y, m)| (y - m).powi(4)).collect();
        let direct = w.apply(&e4);
        for (a, d) in b.raw().iter().zip(&direct) {
            assert!((a - d).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_order_beta_includes_cross_term() {
        let s5 = 5f64.sqrt();
        let seq =
            DifferenceSequence::from_coefficients(vec![(1.0 + s5) / 4.0, -0.5, (1.0 - s5) / 4.0])
                .unwrap();
        let y: Vec<f64> = (0..20).map(|i| ((i * 7 % 5) as f64) * 0.3).collect();
        let s = sample(y.clone());
        let w = kernel_weights(s.grid(), epa(0.3), SmoothingMethod::NadarayaWatson).unwrap();
        let fit = vec![0.0; 20];
        let b = beta_hat_with_fit(&s, &fit, &w, &seq).unwrap();
        let coef = 4.0 * seq.delta() - 1.0;
        for i in 0..20 {
            let mut first = 0.0;
            for j in 0..20 {
                first += w.get(i, j) * y[j].powi(4);
            }
            let mut second = 0.0;
            for j in 0..(20 - 2 - 1) {
                second += w.get(i, j) * y[j].powi(2) * y[j + 3].powi(2);
            }
            assert!((b.raw()[i] - (first + coef * second)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_response_is_degenerate() {
        let s = sample(vec![0.0; 20]);
        let w = kernel_weights(s.grid(), epa(0.2), SmoothingMethod::NadarayaWatson).unwrap();
        assert_eq!(
            beta_hat(&s, &w, &DifferenceSequence::order_one()).unwrap_err(),
            Error::DegenerateVariance
        );
    }

    #[test]
    fn zero_residual_region_is_floored() {
        // Residuals vanish on the left half; identity smoother keeps them local.
        let y: Vec<f64> = (0..20)
            .map(|i| if i < 10 { 0.0 } else { 1.0 + i as f64 * 0.1 })
            .collect();
        let s = sample(y);
        let w = kernel_weights(s.grid(), epa(0.01), SmoothingMethod::NadarayaWatson).unwrap();
        let b = beta_hat_with_fit(&s, &[0.0; 20], &w, &DifferenceSequence::order_one()).unwrap();
        assert_eq!(b.floor_count(), 10);
        assert!(b.floor_applied()[..10].iter().all(|&f| f));
        assert!(b.values().iter().all(|&v| v >= b.floor() && v > 0.0));
        assert!(b.raw()[..10].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn beta_invariant_to_shift_and_quartic_in_scale() {
        let g = grid(60);
        let y: Vec<f64> = (0..60)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.2)
            .collect();
        let w = kernel_weights(&g, epa(0.2), SmoothingMethod::LocalLinear).unwrap();
        let seq = DifferenceSequence::order_one();
        let base = beta_hat(&Sample::new(g.clone(), y.clone()).unwrap(), &w, &seq).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 7.0).collect();
        let sh = beta_hat(&Sample::new(g.clone(), shifted).unwrap(), &w, &seq).unwrap();
        for (a, b) in base.raw().iter().zip(sh.raw()) {
            assert!((a - b).abs() < 1e-8);
        }
        let scaled: Vec<f64> = y.iter().map(|v| 1.7 * v).collect();
        let sc = beta_hat_with_fit(
            &Sample::new(g.clone(), scaled).unwrap(),
            &[0.0; 60],
            &w,
            &seq,
        )
        .unwrap();
        let bz = beta_hat_with_fit(&Sample::new(g, y).unwrap(), &[0.0; 60], &w, &seq).unwrap();
        for (a, b) in bz.raw().iter().zip(sc.raw()) {
            assert!((b - 1.7f64.powi(4) * a).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn leverage_scale_matches_residual_variance_formula() {
        let g = grid(15);
        let w = kernel_weights(&g, epa(0.2), SmoothingMethod::LocalLinear).unwrap();
        let scales = leverage_scales(&w);
        for (j, &s) in scales.iter().enumerate() {
            // Var(Y_j - m̂_j) / σ² = Σ_k (δ_jk - w_jk)² for a linear smoother.
            let v: f64 = (0..15)
                .map(|k| ((j == k) as u8 as f64 - w.get(j, k)).powi(2))
                .sum();
            assert!((s - 1.0 / v.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_entry_point_agrees_with_fit_entry_point() {
        let y: Vec<f64> = (0..30).map(|i| ((i * 7919) % 13) as f64 / 5.0).collect();
        let s = sample(y.clone());
        let w = kernel_weights(s.grid(), epa(0.25), SmoothingMethod::NadarayaWatson).unwrap();
        let fit = m_hat(&s, &w).unwrap();
        let seq = DifferenceSequence::order_one();
        let e: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
        assert_eq!(
            beta_hat_from_residuals(&e, &w, &seq).unwrap(),
            beta_hat_with_fit(&s, &fit, &w, &seq).unwrap()
        );
    }
}
