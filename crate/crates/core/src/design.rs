//! Fixed regression designs on the unit interval.
//!
//! Design points are placed at the `i/(n+1)` quantiles of a design density
//! `f`, so `∫₀^{t_i} f(u) du = i/(n+1)` for `i = 1..n`.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance on `|F(t_i) - i/(n+1)|` when inverting the design CDF.
pub const CDF_INVERSION_TOL: f64 = 1e-10;
/// Absolute tolerance of the adaptive Simpson rule used for the design CDF.
pub const QUADRATURE_TOL: f64 = 1e-12;

const MAX_SIMPSON_DEPTH: u32 = 48;
const MAX_BISECTION_STEPS: u32 = 200;

/// Density descriptor of the design.
#[derive(Clone)]
pub enum Density<T> {
    Uniform,
    /// Positive density on `[0, 1]` integrating to one.
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
    /// Points supplied directly by the user, density not known.
    Unspecified,
}

impl<T> fmt::Debug for Density<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Uniform => write!(f, "Uniform"),
            Density::Custom(_) => write!(f, "Custom(..)"),
            Density::Unspecified => write!(f, "Unspecified"),
        }
    }
}

impl<T: Real> Density<T> {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(T) -> T + Send + Sync + 'static,
    {
        Density::Custom(Arc::new(f))
    }
}

/// Ordered design points `t_1 < … < t_n` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct DesignGrid<T> {
    points: Vec<T>,
    density: Density<T>,
}

impl<T: Real> DesignGrid<T> {
    /// Wraps user-supplied points, checking they are strictly increasing in `[0, 1]`.
    pub fn from_points(points: Vec<T>) -> Result<Self> {
        validate_points(&points)?;
        Ok(Self {
            points,
            density: Density::Unspecified,
        })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn density(&self) -> &Density<T> {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of design points `t_i <= t`.
    pub fn count_le(&self, t: T) -> usize {
        self.points.partition_point(|&p| p <= t)
    }
}

fn validate_points<T: Real>(points: &[T]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidGrid("no design points".into()));
    }
    for (i, &p) in points.iter().enumerate() {
        if !p.is_finite() || p < T::zero() || p > T::one() {
            return Err(Error::InvalidGrid(format!(
                "point {} = {} outside [0, 1]",
                i + 1,
                p
            )));
        }
        if i > 0 && p <= points[i - 1] {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at index {} ({} <= {})",
                i + 1,
                p,
                points[i - 1]
            )));
        }
    }
    Ok(())
}

/// Builds the fixed design of size `n` for `density`.
///
/// Uniform designs are returned in closed form. Custom densities are
/// inverted by bisection on a CDF evaluated with adaptive Simpson
/// quadrature.
pub fn build_design<T: Real>(density: Density<T>, n: usize) -> Result<DesignGrid<T>> {
    if n == 0 {
        return Err(Error::InsufficientData {
            required: 1,
            available: 0,
        });
    }
    let denom = T::count(n + 1);
    let points = match &density {
        Density::Uniform => (1..=n).map(|i| T::count(i) / denom).collect(),
        Density::Custom(f) => invert_cdf(f.as_ref(), n)?,
        Density::Unspecified => {
            return Err(Error::InvalidDensity(
                "cannot build a design without a density".into(),
            ))
        }
    };
    validate_points(&points)
        .map_err(|e| Error::InvalidDensity(format!("density yields a degenerate design: {e}")))?;
    Ok(DesignGrid { points, density })
}

fn invert_cdf<T: Real>(f: &(dyn Fn(T) -> T + Send + Sync), n: usize) -> Result<Vec<T>> {
    let bad = Cell::new(None::<T>);
    let eval = |x: T| -> T {
        let v = f(x);
        // Zeros are tolerated at isolated points (e.g. f(t) = 2t at t = 0).
        if !v.is_finite() || v < T::zero() {
            bad.set(Some(x));
            T::zero()
        } else {
            v
        }
    };
    let check = || match bad.get() {
        Some(x) => Err(Error::InvalidDensity(format!(
            "non-positive density sample at t = {x}"
        ))),
        None => Ok(()),
    };

    let quad_tol = T::tol(QUADRATURE_TOL);
    let total = adaptive_simpson(&eval, T::zero(), T::one(), quad_tol);
    check()?;
    if (total - T::one()).abs() > T::tol(1e-8) {
        return Err(Error::InvalidDensity(format!(
            "density integrates to {total}, not 1"
        )));
    }

    let inv_tol = T::tol(CDF_INVERSION_TOL) * T::lit(0.5);
    let denom = T::count(n + 1);
    let mut points = Vec::with_capacity(n);
    // CDF is accumulated from the previous point, whose mass is known.
    let mut anchor = T::zero();
    let mut anchor_mass = T::zero();
    for i in 1..=n {
        let target = T::count(i) / denom;
        let (mut lo, mut hi) = (anchor, T::one());
        let mut mid = anchor;
        let mut mid_mass = anchor_mass;
        for _ in 0..MAX_BISECTION_STEPS {
            mid = (lo + hi) * T::lit(0.5);
            mid_mass = anchor_mass + adaptive_simpson(&eval, anchor, mid, quad_tol);
            let resid = mid_mass - target;
            if resid.abs() <= inv_tol || hi - lo <= T::epsilon() * T::lit(4.0) {
                break;
            }
            if resid < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        check()?;
        points.push(mid);
        anchor = mid;
        anchor_mass = mid_mass;
    }
    Ok(points)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub(crate) fn adaptive_simpson<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    if b <= a {
        return T::zero();
    }
    let half = T::lit(0.5);
    let m = (a + b) * half;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH)
}

fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let half = T::lit(0.5);
    let m = (a + b) * half;
    let lm = (a + m) * half;
    let rm = (m + b) * half;
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol * half, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol * half, depth - 1)
}

/// Empirical distribution function of the design, `F_n(t) = #{t_i <= t} / n`.
pub fn empirical_cdf<T: Real>(grid: &DesignGrid<T>, t: T) -> T {
    T::count(grid.count_le(t)) / T::count(grid.len())
}

/// Design points paired with responses `Y_1..Y_n`.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    grid: DesignGrid<T>,
    responses: Vec<T>,
}

impl<T: Real> Sample<T> {
    pub fn new(grid: DesignGrid<T>, responses: Vec<T>) -> Result<Self> {
        if grid.len() != responses.len() {
            return Err(Error::InvalidSample(format!(
                "{} design points but {} responses",
                grid.len(),
                responses.len()
            )));
        }
        if let Some(i) = responses.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "response {} is not finite",
                i + 1
            )));
        }
        Ok(Self { grid, responses })
    }

    pub fn grid(&self) -> &DesignGrid<T> {
        &self.grid
    }

    pub fn responses(&self) -> &[T] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}
