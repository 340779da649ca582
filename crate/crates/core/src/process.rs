//! Least-squares fit of the null family to squared pseudo residuals and the
//! standardized empirical process `Λ_n = Ĉ_n - D̂_n`.

use crate::design::DesignGrid;
use crate::error::{Error, Result};
use crate::family::VarianceFamily;
use crate::linalg::{dot, SquareMatrix};
use crate::residuals::PseudoResiduals;
use crate::scalar::Real;

/// Gram matrices above this condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e10;

pub const GAUSS_NEWTON_MAX_ITER: usize = 200;
pub const GAUSS_NEWTON_GRAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Affine,
    Nonlinear,
}

/// Fitted null model on the design grid.
#[derive(Debug, Clone)]
pub struct GramSystem<T> {
    kind: FamilyKind,
    a_hat: SquareMatrix<T>,
    c_hat: Vec<T>,
    theta_hat: Vec<T>,
    /// `g(t_k)` for every design point (basis values, or the model gradient at θ̂).
    gradient: Vec<Vec<T>>,
    /// Known offset `b(t_k)` subtracted from the squared residuals.
    offset: Vec<T>,
    /// Fitted null variance component integrated by `D̂_n`.
    null_part: Vec<T>,
    condition_number: T,
    objective_trace: Vec<f64>,
}

impl<T: Real> GramSystem<T> {
    pub fn kind(&self) -> FamilyKind {
        self.kind
    }
    pub fn a_hat(&self) -> &SquareMatrix<T> {
        &self.a_hat
    }
    pub fn c_hat(&self) -> &[T] {
        &self.c_hat
    }
    pub fn theta_hat(&self) -> &[T] {
        &self.theta_hat
    }
    pub fn gradient(&self) -> &[Vec<T>] {
        &self.gradient
    }
    pub fn offset(&self) -> &[T] {
        &self.offset
    }
    pub fn condition_number(&self) -> T {
        self.condition_number
    }
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }
    /// Objective values visited by Gauss–Newton (empty for affine families).
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }
}

fn gram_matrix<T: Real>(rows: &[Vec<T>], d: usize) -> SquareMatrix<T> {
    let n = T::count(rows.len());
    let mut a = SquareMatrix::zeros(d);
    for g in rows {
        a.add_outer(g, T::one());
    }
    a.scaled(T::one() / n)
}

fn checked_condition<T: Real>(a: &SquareMatrix<T>) -> Result<T> {
    let cond = a.condition_number();
    if !(cond < T::lit(MAX_CONDITION)) || a.cholesky().is_none() {
        return Err(Error::CollinearBasis {
            condition: cond.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    Ok(cond)
}

/// Fits the null family to the squared pseudo residuals.
pub fn fit_family<T: Real>(
    family: &VarianceFamily<T>,
    residuals: &PseudoResiduals<T>,
    grid: &DesignGrid<T>,
) -> Result<GramSystem<T>> {
    let n = grid.len();
    let r = residuals.order();
    if residuals.design_len() != n {
        return Err(Error::Dimension(format!(
            "residuals built from {} points, grid has {n}",
            residuals.design_len()
        )));
    }
    if n <= r {
        return Err(Error::InsufficientData {
            required: r + 1,
            available: n,
        });
    }
    let d = family.dim();
    if d == 0 {
        return Err(Error::Contract("variance family has no parameters".into()));
    }
    let t = grid.points();
    let r2: Vec<T> = residuals.values().iter().map(|&v| v * v).collect();
    let inv_nr = T::one() / T::count(n - r);

    match family {
        VarianceFamily::Affine { offset, basis } => {
            let gradient: Vec<Vec<T>> = t
                .iter()
                .map(|&tk| basis.iter().map(|b| b.eval(tk)).collect())
                .collect();
            let offset: Vec<T> = match offset {
                Some(b) => t.iter().map(|&tk| b.eval(tk)).collect(),
                None => vec![T::zero(); n],
            };
            if gradient
                .iter()
                .flatten()
                .chain(&offset)
                .any(|v| !v.is_finite())
            {
                return Err(Error::Contract("basis not finite on the design".into()));
            }
            let a_hat = gram_matrix(&gradient, d);
            let condition_number = checked_condition(&a_hat)?;
            let mut c_hat = vec![T::zero(); d];
            for k in r..n {
                let target = r2[k - r] - offset[k];
                for (c, &g) in c_hat.iter_mut().zip(&gradient[k]) {
                    *c = *c + target * g;
                }
            }
            c_hat.iter_mut().for_each(|c| *c = *c * inv_nr);
            let theta_hat = a_hat.solve_spd(&c_hat).ok_or(Error::CollinearBasis {
                condition: f64::INFINITY,
            })?;
            let null_part = gradient.iter().map(|g| dot(g, &theta_hat)).collect();
            Ok(GramSystem {
                kind: FamilyKind::Affine,
                a_hat,
                c_hat,
                theta_hat,
                gradient,
                offset,
                null_part,
                condition_number,
                objective_trace: Vec::new(),
            })
        }
        VarianceFamily::Nonlinear {
            model,
            gradient: grad_fn,
            start,
        } => {
            let targets: Vec<(T, T)> = (r..n).map(|k| (t[k], r2[k - r])).collect();
            let (theta_hat, objective_trace) =
                gauss_newton(&targets, model.as_ref(), grad_fn.as_ref(), start.clone())?;
            let gradient: Vec<Vec<T>> = t.iter().map(|&tk| grad_fn(tk, &theta_hat)).collect();
            if gradient.iter().any(|g| g.len() != d) {
                return Err(Error::Dimension(
                    "gradient length differs from parameter count".into(),
                ));
            }
            let a_hat = gram_matrix(&gradient, d);
            let condition_number = checked_condition(&a_hat)?;
            let null_part: Vec<T> = t.iter().map(|&tk| model(tk, &theta_hat)).collect();
            let mut c_hat = vec![T::zero(); d];
            for k in r..n {
                let res = r2[k - r] - null_part[k];
                for (c, &g) in c_hat.iter_mut().zip(&gradient[k]) {
                    *c = *c + res * g;
                }
            }
            c_hat.iter_mut().for_each(|c| *c = *c * inv_nr);
            Ok(GramSystem {
                kind: FamilyKind::Nonlinear,
                a_hat,
                c_hat,
                theta_hat,
                gradient,
                offset: vec![T::zero(); n],
                null_part,
                condition_number,
                objective_trace,
            })
        }
    }
}

type Model<T> = dyn Fn(T, &[T]) -> T + Send + Sync;
type Gradient<T> = dyn Fn(T, &[T]) -> Vec<T> + Send + Sync;

/// Damped Gauss–Newton for `min (1/m) Σ (y_k - σ²(t_k, θ))²`.
fn gauss_newton<T: Real>(
    data: &[(T, T)],
    model: &Model<T>,
    grad: &Gradient<T>,
    mut theta: Vec<T>,
) -> Result<(Vec<T>, Vec<f64>)> {
    let d = theta.len();
    let m = T::count(data.len());
    let objective = |th: &[T]| -> T {
        data.iter()
            .map(|&(t, y)| (y - model(t, th)) * (y - model(t, th)))
            .sum::<T>()
            / m
    };
    let mut f = objective(&theta);
    let mut trace = vec![f.as_f64()];
    let grad_tol = T::tol(GAUSS_NEWTON_GRAD_TOL);
    for iter in 0..GAUSS_NEWTON_MAX_ITER {
        let mut jtj = SquareMatrix::zeros(d);
        let mut jtr = vec![T::zero(); d];
        for &(t, y) in data {
            let g = grad(t, &theta);
            if g.len() != d {
                return Err(Error::Dimension(
                    "gradient length differs from parameter count".into(),
                ));
            }
            let res = y - model(t, &theta);
            jtj.add_outer(&g, T::one());
            for (a, &gj) in jtr.iter_mut().zip(&g) {
                *a = *a + gj * res;
            }
        }
        let grad_norm = jtr.iter().map(|&v| v * v).sum::<T>().sqrt() * T::lit(2.0) / m;
        if grad_norm <= grad_tol || f == T::zero() {
            return Ok((theta, trace));
        }
        let step = jtj.solve_spd(&jtr).ok_or_else(|| Error::FitFailure {
            iterations: iter,
            reason: "singular Gauss-Newton normal matrix".into(),
            trace: trace.clone(),
        })?;
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<T> = theta
                .iter()
                .zip(&step)
                .map(|(&a, &s)| a + scale * s)
                .collect();
            let fc = objective(&cand);
            if fc.is_finite() && fc < f {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            scale = scale * T::lit(0.5);
        }
        trace.push(f.as_f64());
        if !accepted {
            let step_norm = step.iter().map(|&s| s * s).sum::<T>().sqrt();
            let theta_norm = theta.iter().map(|&s| s * s).sum::<T>().sqrt();
            // No representable descent left: at a stationary point up to round-off.
            let predicted = step.iter().zip(&jtr).map(|(&s, &r)| s * r).sum::<T>() / m;
            let roundoff = T::lit(1e3) * T::epsilon() * f;
            if step_norm <= T::tol(1e-8) * (T::one() + theta_norm) || predicted <= roundoff {
                return Ok((theta, trace));
            }
            return Err(Error::FitFailure {
                iterations: iter + 1,
                reason: format!("no descent along Gauss-Newton step (gradient norm {grad_norm})"),
                trace,
            });
        }
    }
    Err(Error::FitFailure {
        iterations: GAUSS_NEWTON_MAX_ITER,
        reason: "iteration limit reached".into(),
        trace,
    })
}

/// Right-continuous step function on the design, jumping only at design points.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProcess<T> {
    points: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> StepProcess<T> {
    pub fn new(points: Vec<T>, values: Vec<T>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        Ok(Self { points, values })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// Value at each design point.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Jump sizes `η(t_i) - η(t_{i-1})`, with `η ≡ 0` left of the first point.
    pub fn jumps(&self) -> Vec<T> {
        let mut prev = T::zero();
        self.values
            .iter()
            .map(|&v| {
                let j = v - prev;
                prev = v;
                j
            })
            .collect()
    }

    /// Value at an arbitrary `t`.
    pub fn eval(&self, t: T) -> T {
        match self.points.partition_point(|&p| p <= t) {
            0 => T::zero(),
            k => self.values[k - 1],
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn combine(&self, other: &Self, a: T, b: T) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Self {
            points: self.points.clone(),
            values,
        }
    }
}

/// `Λ_n` together with its parts `Ĉ_n` and `D̂_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaProcess<T> {
    pub lambda: StepProcess<T>,
    pub c_part: StepProcess<T>,
    pub d_part: StepProcess<T>,
}

/// Builds `Λ_n(t) = Ĉ_n(t) - D̂_n(t)` at every design point with weight `w = 1/β̂`.
pub fn lambda_process<T: Real>(
    grid: &DesignGrid<T>,
    residuals: &PseudoResiduals<T>,
    gram: &GramSystem<T>,
    beta: &[T],
) -> Result<LambdaProcess<T>> {
    let n = grid.len();
    let r = residuals.order();
    if residuals.design_len() != n || beta.len() != n || gram.gradient.len() != n {
        return Err(Error::Dimension(format!(
            "grid {n}, residuals {}, beta {}, gram {}",
            residuals.design_len(),
            beta.len(),
            gram.gradient.len()
        )));
    }
    let root_n = T::count(n).sqrt();
    let c_scale = root_n / T::count(n - r);
    let inv_n = T::one() / T::count(n);
    let inv_sqrt_beta: Vec<T> = beta.iter().map(|&b| T::one() / b.sqrt()).collect();

    let mut c_vals = Vec::with_capacity(n);
    let mut acc = T::zero();
    for k in 0..n {
        if let Some(rk) = residuals.at(k) {
            acc = acc + inv_sqrt_beta[k] * (rk * rk - gram.offset[k]);
        }
        c_vals.push(c_scale * acc);
    }

    let d_vals: Vec<T> = match gram.kind {
        FamilyKind::Affine => {
            let d = gram.dim();
            // Â⁻¹ · (√n/(n-r)) Σ (R² - b) g
            let mut v = vec![T::zero(); d];
            for k in r..n {
                let rk = residuals.at(k).expect("k >= r");
                let target = rk * rk - gram.offset[k];
                for (vi, &g) in v.iter_mut().zip(&gram.gradient[k]) {
                    *vi = *vi + target * g;
                }
            }
            v.iter_mut().for_each(|x| *x = *x * c_scale);
            let coef = gram.a_hat.solve_spd(&v).ok_or(Error::CollinearBasis {
                condition: f64::INFINITY,
            })?;
            let mut b_t = vec![T::zero(); d];
            (0..n)
                .map(|k| {
                    for (b, &g) in b_t.iter_mut().zip(&gram.gradient[k]) {
                        *b = *b + inv_n * inv_sqrt_beta[k] * g;
                    }
                    dot(&b_t, &coef)
                })
                .collect()
        }
        FamilyKind::Nonlinear => {
            let mut acc = T::zero();
            (0..n)
                .map(|k| {
                    acc = acc + inv_sqrt_beta[k] * gram.null_part[k];
                    root_n * inv_n * acc
                })
                .collect()
        }
    };

    let points = grid.points().to_vec();
    let lambda_vals = c_vals.iter().zip(&d_vals).map(|(&c, &d)| c - d).collect();
    Ok(LambdaProcess {
        lambda: StepProcess::new(points.clone(), lambda_vals)?,
        c_part: StepProcess::new(points.clone(), c_vals)?,
        d_part: StepProcess::new(points, d_vals)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, Density, Sample};
    use crate::family::{BasisFn, NamedBasis};
    use crate::residuals::{pseudo_residuals, DifferenceSequence};

    fn grid(n: usize) -> DesignGrid<f64> {
        build_design(Density::Uniform, n).unwrap()
    }

    fn residuals_from_squares(grid: &DesignGrid<f64>, r2: &[f64]) -> PseudoResiduals<f64> {
        // Y with (Y_j - Y_{j-1})/√2 = sqrt(r2_j) reproduces prescribed squares.
        let mut y = vec![0.0];
        for &v in r2 {
            let last = *y.last().unwrap();
            y.push(last + (2.0 * v).sqrt());
        }
        let s = Sample::new(grid.clone(), y).unwrap();
        pseudo_residuals(&s, &DifferenceSequence::order_one()).unwrap()
    }

    #[test]
    fn unit_basis_gives_mean_square() {
        let g = grid(12);
        let r2: Vec<f64> = (1..12).map(|k| 0.5 + (k % 4) as f64).collect();
        let res = residuals_from_squares(&g, &r2);
        let fam = VarianceFamily::linear(vec![NamedBasis::Const.into()]);
        let gs = fit_family(&fam, &res, &g).unwrap();
        assert!((gs.a_hat()[(0, 0)] - 1.0).abs() < 1e-15);
        let mean = res.values().iter().map(|v| v * v).sum::<f64>() / 11.0;
        assert!((gs.theta_hat()[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn target_in_span_is_recovered() {
        for n in [40usize, 400, 4000] {
            let g = grid(n);
            let t = g.points();
            let r2: Vec<f64> = (1..n).map(|k| 2.0 + 5.0 * t[k] * t[k]).collect();
            let res = residuals_from_squares(&g, &r2);
            let fam = VarianceFamily::parse("const,t2").unwrap();
            let gs = fit_family(&fam, &res, &g).unwrap();
            // Independent 2x2 normal-equations oracle (Cramer's rule).
            let nf = n as f64;
            let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
            for &tk in t {
                a11 += 1.0 / nf;
                a12 += tk * tk / nf;
                a22 += tk.powi(4) / nf;
            }
            let (mut c1, mut c2) = (0.0, 0.0);
            for k in 1..n {
                let y = res.at(k).unwrap().powi(2);
                c1 += y / (nf - 1.0);
                c2 += y * t[k] * t[k] / (nf - 1.0);
            }
            let det = a11 * a22 - a12 * a12;
            let th = [(c1 * a22 - c2 * a12) / det, (a11 * c2 - a12 * c1) / det];
            for i in 0..2 {
                assert!((gs.theta_hat()[i] - th[i]).abs() < 1e-10 * th[i].abs().max(1.0));
            }
            // The 1/n vs 1/(n-r) normalizations leave an O(1/n) offset from (2, 5).
            assert!((th[0] - 2.0).abs() < 10.0 / nf && (th[1] - 5.0).abs() < 20.0 / nf);
        }
    }

    #[test]
    fn collinear_basis_is_rejected() {
        let g = grid(20);
        let res = residuals_from_squares(&g, &[1.0; 19]);
        let fam = VarianceFamily::linear(vec![
            NamedBasis::Const.into(),
            BasisFn::custom(|_t: f64| 2.0),
        ]);
        assert!(matches!(
            fit_family(&fam, &res, &g),
            Err(Error::CollinearBasis { .. })
        ));
    }

    #[test]
    fn exponential_family_matches_grid_search() {
        let g = grid(30);
        let t = g.points().to_vec();
        let r2: Vec<f64> = (1..30).map(|k| (0.7 * t[k]).exp()).collect();
        let res = residuals_from_squares(&g, &r2);
        let fam = VarianceFamily::nonlinear(
            |t: f64, th: &[f64]| (th[0] * t).exp(),
            |t: f64, th: &[f64]| vec![t * (th[0] * t).exp()],
            vec![0.0],
        );
        let gs = fit_family(&fam, &res, &g).unwrap();
        // Grid search over [0, 2] at step 1e-6.
        let sq: Vec<f64> = res.values().iter().map(|v| v * v).collect();
        let tk = &t[1..];
        let obj = |th: f64| -> f64 {
            sq.iter()
                .zip(tk)
                .map(|(y, &t)| (y - (th * t).exp()).powi(2))
                .sum::<f64>()
        };
        let mut best = (0.0, f64::INFINITY);
        for i in 0..=2_000_000u32 {
            let th = i as f64 * 1e-6;
            let v = obj(th);
            if v < best.1 {
                best = (th, v);
            }
        }
        assert!(
            (gs.theta_hat()[0] - best.0).abs() <= 1e-6,
            "{} vs {}",
            gs.theta_hat()[0],
            best.0
        );
        assert_eq!(gs.kind(), FamilyKind::Nonlinear);
        assert!(!gs.objective_trace().is_empty());
    }

    #[test]
    fn zero_targets_give_zero_lambda() {
        let g = grid(10);
        let res = residuals_from_squares(&g, &[0.0; 9]);
        let fam = VarianceFamily::parse("const,t").unwrap();
        let gs = fit_family(&fam, &res, &g).unwrap();
        let lp = lambda_process(&g, &res, &gs, &[1.0; 10]).unwrap();
        assert!(lp.lambda.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn three_point_hand_case() {
        let g = grid(3);
        let res = residuals_from_squares(&g, &[1.0, 4.0]);
        let fam = VarianceFamily::linear(vec![NamedBasis::Const.into()]);
        let gs = fit_family(&fam, &res, &g).unwrap();
        let lp = lambda_process(&g, &res, &gs, &[1.0; 3]).unwrap();
        // Direct double loop of the definitions with n = 3, r = 1.
        let (n, r) = (3.0f64, 1.0);
        let r2 = [f64::NAN, 1.0, 4.0];
        let a = 1.0; // (1/n) Σ 1·1
        let v: f64 = (1..3).map(|i| r2[i]).sum::<f64>() * n.sqrt() / (n - r);
        let t = g.points();
        for (m, &tm) in t.iter().enumerate() {
            let mut c = 0.0;
            for i in 1..3 {
                if t[i] <= tm {
                    c += r2[i];
                }
            }
            c *= n.sqrt() / (n - r);
            let mut b = 0.0;
            for &tj in t {
                if tj <= tm {
                    b += 1.0 / n;
                }
            }
            let d = b * v / a;
            assert!((lp.c_part.values()[m] - c).abs() < 1e-14);
            assert!((lp.d_part.values()[m] - d).abs() < 1e-14);
            assert!((lp.lambda.values()[m] - (c - d)).abs() < 1e-14);
        }
        // Hand values: √3/2 · (0, 1, 5) minus √3·(5/2)·(1/3, 2/3, 1)
        let s3 = 3f64.sqrt();
        let hand = [
            -s3 * 2.5 / 3.0,
            s3 / 2.0 - s3 * 5.0 / 3.0,
            s3 * 2.5 - s3 * 2.5,
        ];
        for (a, b) in lp.lambda.values().iter().zip(hand) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn quadrupled_beta_halves_lambda() {
        let g = grid(15);
        let r2: Vec<f64> = (1..15).map(|k| 1.0 + (k * 7 % 5) as f64).collect();
        let res = residuals_from_squares(&g, &r2);
        let fam = VarianceFamily::parse("const,t2").unwrap();
        let gs = fit_family(&fam, &res, &g).unwrap();
        let beta: Vec<f64> = (0..15).map(|k| 0.5 + k as f64 * 0.1).collect();
        let beta4: Vec<f64> = beta.iter().map(|b| 4.0 * b).collect();
        let a = lambda_process(&g, &res, &gs, &beta).unwrap();
        let b = lambda_process(&g, &res, &gs, &beta4).unwrap();
        for (x, y) in a.lambda.values().iter().zip(b.lambda.values()) {
            assert!((0.5 * x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn step_process_jumps_and_eval() {
        let p = StepProcess::new(vec![0.2, 0.5, 0.8], vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(p.jumps(), vec![1.0, 2.0, -1.0]);
        assert_eq!(p.eval(0.1), 0.0);
        assert_eq!(p.eval(0.5), 3.0);
        assert_eq!(p.eval(0.79), 3.0);
        assert_eq!(p.eval(1.0), 2.0);
        assert!(StepProcess::new(vec![0.1], vec![]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = grid(10);
        let res = residuals_from_squares(&g, &[1.0; 9]);
        let gs = fit_family(&VarianceFamily::parse("const").unwrap(), &res, &g).unwrap();
        assert!(matches!(
            lambda_process(&g, &res, &gs, &[1.0; 4]),
            Err(Error::Dimension(_))
        ));
    }
}
