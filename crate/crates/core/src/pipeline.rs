//! End-to-end test of the variance form.

use serde::{Deserialize, Serialize};

use crate::critical::{cached_law, check_alpha, Law, DEFAULT_CRITICAL_SEED, DEFAULT_SAMPLES};
use crate::design::Sample;
use crate::error::{Error, Result};
use crate::family::VarianceFamily;
use crate::process::{fit_family, lambda_process, LambdaProcess};
use crate::residuals::{pseudo_residuals, DifferenceSequence, SequenceSpec};
use crate::scalar::Real;
use crate::smoothing::{
    beta_hat_from_residuals, cv_bandwidth, kernel_weights, leverage_scales, m_hat, BetaEstimate,
    KernelShape, KernelSpec, SmoothingMethod,
};
use crate::transform::{apply_transform, hn_field, statistics, TransformedProcess, DEFAULT_T0};

/// Levels used when none are configured.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.025, 0.05, 0.10];
/// Default lower bound on the `β̂` bandwidth `h_CV / 2`.
pub const DEFAULT_BETA_MIN_BANDWIDTH: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Least-squares cross validation.
    Auto,
    Fixed(f64),
}

/// Null-law simulation settings used for critical values and p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_CRITICAL_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig<T> {
    pub sequence: SequenceSpec<T>,
    pub kernel: KernelShape,
    pub bandwidth: Bandwidth,
    pub method: SmoothingMethod,
    /// Smoother for the outer weights of `β̂`.
    pub beta_method: SmoothingMethod,
    /// The `β̂` bandwidth is `max(h / 2, beta_min_bandwidth)`; zero disables the bound.
    pub beta_min_bandwidth: f64,
    /// Rescale residuals `Y_j - m̂(t_j)` by their leverage before forming `β̂`.
    pub leverage_correction: bool,
    pub t0: f64,
    pub alphas: Vec<f64>,
    pub critical: CriticalConfig,
}

impl<T: Real> Default for TestConfig<T> {
    fn default() -> Self {
        Self {
            sequence: SequenceSpec::OrderOne,
            kernel: KernelShape::Epanechnikov,
            bandwidth: Bandwidth::Auto,
            method: SmoothingMethod::LocalLinear,
            beta_method: SmoothingMethod::NadarayaWatson,
            beta_min_bandwidth: DEFAULT_BETA_MIN_BANDWIDTH,
            leverage_correction: true,
            t0: DEFAULT_T0,
            alphas: DEFAULT_ALPHAS.to_vec(),
            critical: CriticalConfig::default(),
        }
    }
}

impl<T: Real> TestConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Contract("no significance levels given".into()));
        }
        self.alphas.iter().try_for_each(|&a| check_alpha(a))?;
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return Err(Error::Contract(format!(
                "t0 must lie in (0, 1), got {}",
                self.t0
            )));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Contract(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
        }
        if !(self.beta_min_bandwidth >= 0.0 && self.beta_min_bandwidth.is_finite()) {
            return Err(Error::Contract(format!(
                "beta bandwidth bound must be non-negative, got {}",
                self.beta_min_bandwidth
            )));
        }
        if self.critical.samples == 0 {
            return Err(Error::Contract(
                "critical-value sample count must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    pub alpha: f64,
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub order: usize,
    pub h_cv: Option<f64>,
    pub h_beta: Option<f64>,
    pub t0: f64,
    pub f_n_t0: f64,
    pub max_condition_number: f64,
    pub gram_condition_number: f64,
    pub floor_count: usize,
    pub theta_hat: Vec<f64>,
    pub critical_samples: usize,
    pub critical_seed: u64,
}

/// Outcome of one test, serialized as the report JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    #[serde(rename = "G_normalized")]
    pub g_normalized: f64,
    #[serde(rename = "K_normalized")]
    pub k_normalized: f64,
    pub decisions: Vec<LevelDecision>,
    pub p_value: f64,
    pub diagnostics: Diagnostics,
}

impl TestReport {
    /// Decision at the smallest configured level.
    pub fn rejects_at_smallest_alpha(&self) -> bool {
        self.decisions
            .iter()
            .min_by(|a, b| a.alpha.partial_cmp(&b.alpha).expect("finite alpha"))
            .is_some_and(|d| d.reject)
    }

    pub fn reject_at(&self, alpha: f64) -> Option<bool> {
        self.decisions
            .iter()
            .find(|d| d.alpha == alpha)
            .map(|d| d.reject)
    }

    /// Pretty JSON with floats at 17 significant digits.
    pub fn to_json(&self) -> String {
        crate::format::to_json_pretty(self)
    }
}

/// Report plus the trajectories it was computed from.
#[derive(Debug, Clone)]
pub struct TestOutcome<T> {
    pub report: TestReport,
    pub lambda: LambdaProcess<T>,
    pub transformed: TransformedProcess<T>,
    pub beta: BetaEstimate<T>,
}

impl<T: Real> TestOutcome<T> {
    /// CSV `t,lambda,transformed`; the transformed column is empty above `t₀`.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t,lambda,transformed\n");
        let tv = self.transformed.values();
        for (j, (&t, &l)) in self
            .lambda
            .lambda
            .points()
            .iter()
            .zip(self.lambda.lambda.values())
            .enumerate()
        {
            let tr = tv
                .get(j)
                .map(|v| format!("{:.16e}", v.as_f64()))
                .unwrap_or_default();
            out.push_str(&format!("{:.16e},{:.16e},{}\n", t.as_f64(), l.as_f64(), tr));
        }
        out
    }
}

/// Runs the full pipeline: bandwidth, regression fit, `β̂` at half the
/// bandwidth (bounded below), pseudo residuals, null fit, `Λ_n`, its transform on `[0, t₀]`,
/// statistics and decisions (reject iff `G ≥ w_α`).
pub fn run_test<T: Real>(
    sample: &Sample<T>,
    family: &VarianceFamily<T>,
    config: &TestConfig<T>,
) -> Result<TestOutcome<T>> {
    run(sample, family, config, None)
}

/// As [`run_test`], with the standardizing function replaced by known values.
pub fn run_test_known_beta<T: Real>(
    sample: &Sample<T>,
    family: &VarianceFamily<T>,
    config: &TestConfig<T>,
    beta: &[T],
) -> Result<TestOutcome<T>> {
    run(sample, family, config, Some(beta))
}

fn run<T: Real>(
    sample: &Sample<T>,
    family: &VarianceFamily<T>,
    config: &TestConfig<T>,
    known_beta: Option<&[T]>,
) -> Result<TestOutcome<T>> {
    config.validate()?;
    let seq = DifferenceSequence::from_spec(&config.sequence)?;
    let grid = sample.grid();

    let (h_cv, h_beta, beta) = match known_beta {
        Some(values) => {
            if values.len() != sample.len() {
                return Err(Error::Dimension(
                    "known beta length differs from sample".into(),
                ));
            }
            (None, None, BetaEstimate::known(values.to_vec())?)
        }
        None => {
            let h = match config.bandwidth {
                Bandwidth::Auto => cv_bandwidth(sample, config.kernel, config.method)?,
                Bandwidth::Fixed(h) => T::lit(h),
            };
            let fit_w = kernel_weights(grid, KernelSpec::new(config.kernel, h)?, config.method)?;
            let fitted = m_hat(sample, &fit_w)?;
            let mut e: Vec<T> = sample
                .responses()
                .iter()
                .zip(&fitted)
                .map(|(&y, &m)| y - m)
                .collect();
            if config.leverage_correction {
                for (v, s) in e.iter_mut().zip(leverage_scales(&fit_w)) {
                    *v = *v * s;
                }
            }
            let h_beta = (h * T::lit(0.5)).max(T::lit(config.beta_min_bandwidth));
            let beta_w = kernel_weights(
                grid,
                KernelSpec::new(config.kernel, h_beta)?,
                config.beta_method,
            )?;
            let beta = beta_hat_from_residuals(&e, &beta_w, &seq)?;
            (Some(h.as_f64()), Some(h_beta.as_f64()), beta)
        }
    };

    let residuals = pseudo_residuals(sample, &seq)?;
    let gram = fit_family(family, &residuals, grid)?;
    let lambda = lambda_process(grid, &residuals, &gram, beta.values())?;
    let field = hn_field(grid, gram.gradient(), beta.values(), T::lit(config.t0))?;
    let transformed =
        apply_transform(&lambda.lambda, &field, grid, gram.gradient(), beta.values())?;
    let stats = statistics(&transformed);
    let g = stats.g_normalized.as_f64();

    let law = cached_law(Law::IntW2, config.critical.samples, config.critical.seed);
    let decisions = config
        .alphas
        .iter()
        .map(|&alpha| {
            let critical_value = law.upper_quantile(alpha)?;
            Ok(LevelDecision {
                alpha,
                critical_value,
                reject: g >= critical_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let report = TestReport {
        g_normalized: g,
        k_normalized: stats.k_normalized.as_f64(),
        decisions,
        p_value: law.p_value(g),
        diagnostics: Diagnostics {
            n: sample.len(),
            order: seq.order(),
            h_cv,
            h_beta,
            t0: config.t0,
            f_n_t0: transformed.f_n_t0().as_f64(),
            max_condition_number: field
                .max_condition()
                .as_f64()
                .max(gram.condition_number().as_f64()),
            gram_condition_number: gram.condition_number().as_f64(),
            floor_count: beta.floor_count(),
            theta_hat: gram.theta_hat().iter().map(|v| v.as_f64()).collect(),
            critical_samples: config.critical.samples,
            critical_seed: config.critical.seed,
        },
    };
    Ok(TestOutcome {
        report,
        lambda,
        transformed,
        beta,
    })
}
