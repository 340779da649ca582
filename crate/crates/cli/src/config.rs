//! Run configuration: command-line flags layered over an optional JSON file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use varform_core::critical::{Law, DEFAULT_CRITICAL_SEED, DEFAULT_SAMPLES};
use varform_core::pipeline::DEFAULT_BETA_MIN_BANDWIDTH;
use varform_core::{
    Bandwidth, CriticalConfig, KernelShape, Model, NegativeVariance, SequenceSpec, SmoothingMethod,
    TestConfig, VarianceFamily,
};

use crate::error::CliError;

pub const SEED_ENV: &str = "VARFORM_SEED";
pub const DEFAULT_FAMILY: &str = "const,t2";
pub const DEFAULT_REPS: usize = 1000;
pub const DEFAULT_SIMULATION_SEED: u64 = 20240601;

/// Every configurable value; all optional so that layers can be merged.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<String>,
    pub order: Option<usize>,
    pub coefficients: Option<Vec<f64>>,
    pub kernel: Option<KernelShape>,
    pub method: Option<SmoothingMethod>,
    pub beta_method: Option<SmoothingMethod>,
    pub beta_min_bandwidth: Option<f64>,
    pub leverage_correction: Option<bool>,
    pub bandwidth: Option<BandwidthSetting>,
    pub t0: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub samples: Option<usize>,
    pub law: Option<String>,
    pub model: Option<Vec<String>>,
    pub c: Option<Vec<f64>>,
    pub n: Option<Vec<usize>>,
    pub negative_variance: Option<NegativeVariance>,
    pub out: Option<PathBuf>,
    pub trajectory_out: Option<PathBuf>,
}

/// `"auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BandwidthSetting {
    Fixed(f64),
    Named(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl BandwidthSetting {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Named(AutoKeyword::Auto));
        }
        s.parse::<f64>()
            .map(Self::Fixed)
            .map_err(|_| format!("bandwidth must be 'auto' or a number, got '{s}'"))
    }

    fn resolve(self) -> Bandwidth {
        match self {
            Self::Fixed(h) => Bandwidth::Fixed(h),
            Self::Named(AutoKeyword::Auto) => Bandwidth::Auto,
        }
    }
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Values in `top` take precedence over `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top; family, order, coefficients, kernel, method, beta_method,
            beta_min_bandwidth, leverage_correction, bandwidth, t0, alpha, seed, reps, samples,
            law, model, c, n, negative_variance, out, trajectory_out)
    }

    /// Flag, then config file, then `VARFORM_SEED`, then `default`.
    pub fn seed_or(&self, default: u64) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))
            }),
            Err(_) => Ok(default),
        }
    }

    pub fn family(&self) -> Result<VarianceFamily<f64>, CliError> {
        let name = self.family.as_deref().unwrap_or(DEFAULT_FAMILY);
        VarianceFamily::parse(name).map_err(CliError::usage)
    }

    pub fn alphas(&self) -> Result<Vec<f64>, CliError> {
        let alphas = self
            .alpha
            .clone()
            .unwrap_or_else(|| varform_core::pipeline::DEFAULT_ALPHAS.to_vec());
        if alphas.is_empty() {
            return Err(CliError::usage("empty alpha list"));
        }
        for &a in &alphas {
            varform_core::critical::check_alpha(a).map_err(CliError::usage)?;
        }
        Ok(alphas)
    }

    fn sequence(&self) -> Result<SequenceSpec<f64>, CliError> {
        match (&self.coefficients, self.order) {
            (Some(c), order) => {
                if let Some(r) = order {
                    if c.len() != r + 1 {
                        return Err(CliError::usage(format!(
                            "order {r} needs {} coefficients, got {}",
                            r + 1,
                            c.len()
                        )));
                    }
                }
                Ok(SequenceSpec::Explicit(c.clone()))
            }
            (None, None | Some(1)) => Ok(SequenceSpec::OrderOne),
            (None, Some(0)) => Err(CliError::usage("order must be at least 1")),
            (None, Some(r)) => Ok(SequenceSpec::Binomial(r)),
        }
    }

    /// Test configuration; `critical_seed` seeds the null-law simulation.
    pub fn test_config(&self, critical_seed: u64) -> Result<TestConfig<f64>, CliError> {
        let config = TestConfig {
            sequence: self.sequence()?,
            kernel: self.kernel.unwrap_or_default(),
            bandwidth: self
                .bandwidth
                .map_or(Bandwidth::Auto, BandwidthSetting::resolve),
            method: self.method.unwrap_or_default(),
            beta_method: self.beta_method.unwrap_or(SmoothingMethod::NadarayaWatson),
            beta_min_bandwidth: self
                .beta_min_bandwidth
                .unwrap_or(DEFAULT_BETA_MIN_BANDWIDTH),
            leverage_correction: self.leverage_correction.unwrap_or(true),
            t0: self.t0.unwrap_or(varform_core::transform::DEFAULT_T0),
            alphas: self.alphas()?,
            critical: CriticalConfig {
                samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
                seed: critical_seed,
            },
        };
        config.validate().map_err(CliError::usage)?;
        Ok(config)
    }

    pub fn critical_seed(&self) -> Result<u64, CliError> {
        self.seed_or(DEFAULT_CRITICAL_SEED)
    }

    pub fn law(&self) -> Result<Law, CliError> {
        self.law
            .as_deref()
            .unwrap_or("int_W2")
            .parse()
            .map_err(CliError::usage)
    }

    pub fn models(&self) -> Result<Vec<Model>, CliError> {
        match &self.model {
            None => Ok(Model::ALL.to_vec()),
            Some(names) => names
                .iter()
                .map(|m| m.parse().map_err(CliError::usage))
                .collect(),
        }
    }
}
