//! Difference sequences and the pseudo residuals they induce.

use crate::design::Sample;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance on `Σ d_i = 0` and `Σ d_i² = 1`.
pub const SEQUENCE_TOL: f64 = 1e-12;

/// How a difference sequence is requested.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceSpec<T> {
    /// The order-one sequence `(1/√2, -1/√2)`.
    OrderOne,
    /// Normalized `r`-th order differences, see [`DifferenceSequence::binomial`].
    Binomial(usize),
    Explicit(Vec<T>),
}

/// Coefficients `d_0..d_r` with `Σ d_i = 0`, `Σ d_i² = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSequence<T> {
    coefficients: Vec<T>,
    delta: T,
}

impl<T: Real> DifferenceSequence<T> {
    pub fn order_one() -> Self {
        let c = T::FRAC_1_SQRT_2();
        Self::from_coefficients(vec![c, -c]).expect("order-one sequence is valid")
    }

    /// `d_i = (-1)^i C(r, i) / √C(2r, r)`, the normalized `r`-th difference.
    pub fn binomial(r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidSequence("order must be at least 1".into()));
        }
        let binom = |n: usize, k: usize| {
            (0..k).fold(1.0f64, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        };
        let norm = binom(2 * r, r).sqrt();
        let coefficients = (0..=r)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                T::lit(sign * binom(r, i) / norm)
            })
            .collect();
        Self::from_coefficients(coefficients)
    }

    pub fn from_coefficients(coefficients: Vec<T>) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::InvalidSequence(format!(
                "need at least 2 coefficients (order r >= 1), got {}",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidSequence("coefficients must be finite".into()));
        }
        let tol = T::tol(SEQUENCE_TOL);
        let sum: T = coefficients.iter().copied().sum();
        if sum.abs() > tol {
            return Err(Error::InvalidSequence(format!(
                "sum of coefficients is {sum}, must be 0"
            )));
        }
        let sum_sq: T = coefficients.iter().map(|&d| d * d).sum();
        if (sum_sq - T::one()).abs() > tol {
            return Err(Error::InvalidSequence(format!(
                "sum of squared coefficients is {sum_sq}, must be 1"
            )));
        }
        let delta = lag_autocorrelation_energy(&coefficients);
        Ok(Self {
            coefficients,
            delta,
        })
    }

    pub fn from_spec(spec: &SequenceSpec<T>) -> Result<Self> {
        match spec {
            SequenceSpec::OrderOne => Ok(Self::order_one()),
            SequenceSpec::Binomial(r) => Self::binomial(*r),
            SequenceSpec::Explicit(c) => Self::from_coefficients(c.clone()),
        }
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `δ_r = Σ_{m=1}^r (Σ_{j=0}^{r-m} d_j d_{j+m})²`.
    pub fn delta(&self) -> T {
        self.delta
    }

    /// The factor `4δ_r - 1` multiplying the cross term of the standardizing estimate.
    pub fn correction(&self) -> T {
        T::lit(4.0) * self.delta - T::one()
    }
}

fn lag_autocorrelation_energy<T: Real>(d: &[T]) -> T {
    let r = d.len() - 1;
    (1..=r)
        .map(|m| {
            let acf: T = (0..=r - m).map(|j| d[j] * d[j + m]).sum();
            acf * acf
        })
        .sum()
}

/// `R_j = Σ_i d_i Y_{j-i}` for `j = r+1..n` (stored 0-based from `j = r+1`).
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoResiduals<T> {
    values: Vec<T>,
    order: usize,
}

impl<T: Real> PseudoResiduals<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Residual attached to the 0-based design index `k`, if `k >= r`.
    pub fn at(&self, k: usize) -> Option<T> {
        k.checked_sub(self.order)
            .and_then(|i| self.values.get(i))
            .copied()
    }

    /// Number of design points the residuals were built from.
    pub fn design_len(&self) -> usize {
        self.values.len() + self.order
    }
}

pub fn pseudo_residuals<T: Real>(
    sample: &Sample<T>,
    seq: &DifferenceSequence<T>,
) -> Result<PseudoResiduals<T>> {
    let n = sample.len();
    let r = seq.order();
    if n <= r {
        return Err(Error::InsufficientData {
            required: r + 1,
            available: n,
        });
    }
    let y = sample.responses();
    let d = seq.coefficients();
    let values = (r..n)
        .map(|j| d.iter().enumerate().map(|(i, &di)| di * y[j - i]).sum())
        .collect();
    Ok(PseudoResiduals { values, order: r })
}
