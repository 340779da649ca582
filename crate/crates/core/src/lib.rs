//! Distribution-free test for the parametric form of a conditional variance
//! function in fixed-design nonparametric regression.
//!
//! Difference-based pseudo residuals are compared with a parametric variance
//! family through a marked empirical process. A martingale transform removes
//! the effect of the estimated parameters, so the Cramér–von-Mises functional
//! of the transformed process is asymptotically `∫₀¹ W²(t) dt` under the null.
//!
//! ```
//! use varform_core::{build_design, run_test, Density, Sample, TestConfig, VarianceFamily};
//!
//! let grid = build_design::<f64>(Density::Uniform, 60).unwrap();
//! let y: Vec<f64> = grid.points().iter().enumerate()
//!     .map(|(i, &t)| 1.0 + t + if i % 2 == 0 { 0.8 } else { -0.8 })
//!     .collect();
//! let sample = Sample::new(grid, y).unwrap();
//! let family = VarianceFamily::parse("const,t2").unwrap();
//! let mut config = TestConfig::default();
//! config.critical.samples = 20_000;
//! let outcome = run_test(&sample, &family, &config).unwrap();
//! assert!(outcome.report.g_normalized >= 0.0);
//! ```

// `!(x > 0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod critical;
pub mod design;
pub mod error;
pub mod family;
pub mod format;
pub mod linalg;
pub mod montecarlo;
pub mod pipeline;
pub mod process;
pub mod residuals;
pub mod scalar;
pub mod smoothing;
pub mod transform;

pub use critical::{cached_law, critical_values, Law, NullLaw};
pub use design::{build_design, empirical_cdf, Density, DesignGrid, Sample};
pub use error::{Error, Result};
pub use family::{BasisFn, NamedBasis, VarianceFamily};
pub use linalg::SquareMatrix;
pub use montecarlo::{
    generate_scenario, rejection_rates, Cell, Model, NegativeVariance, RejectionTable,
    ScenarioConfig,
};
pub use pipeline::{
    run_test, run_test_known_beta, Bandwidth, CriticalConfig, TestConfig, TestOutcome, TestReport,
};
pub use process::{fit_family, lambda_process, GramSystem, LambdaProcess, StepProcess};
pub use residuals::{pseudo_residuals, DifferenceSequence, PseudoResiduals, SequenceSpec};
pub use scalar::Real;
pub use smoothing::{
    beta_hat, beta_hat_from_residuals, beta_hat_with_fit, cv_bandwidth, kernel_weights,
    leverage_scales, m_hat, BetaEstimate, KernelShape, KernelSpec, SmoothingMethod, WeightMatrix,
};
pub use transform::{
    apply_transform, apply_transform_reference, hn_field, statistics, HnField, Statistics,
    TransformedProcess,
};

pub type DesignGrid64 = DesignGrid<f64>;
pub type DesignGrid32 = DesignGrid<f32>;
pub type Sample64 = Sample<f64>;
pub type Sample32 = Sample<f32>;
pub type VarianceFamily64 = VarianceFamily<f64>;
pub type VarianceFamily32 = VarianceFamily<f32>;
pub type TestConfig64 = TestConfig<f64>;
pub type TestConfig32 = TestConfig<f32>;
pub type DifferenceSequence64 = DifferenceSequence<f64>;
pub type DifferenceSequence32 = DifferenceSequence<f32>;
