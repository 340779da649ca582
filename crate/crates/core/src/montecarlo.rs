//! Simulation scenarios `Y_i = 1 + t_i + σ(t_i) ε_i` on the uniform design and
//! a replication engine producing rejection-rate tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_design, Density, Sample};
use crate::error::{Error, Result};
use crate::family::VarianceFamily;
use crate::format::sig;
use crate::pipeline::{run_test, TestConfig, TestReport};

/// Grid on which scenario variances are checked for positivity.
pub const VARIANCE_CHECK_POINTS: usize = 1024;

/// Alternatives added to the null variance `0.5 + 3t²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `+ 2.5 c sin(2πt)`
    Sin,
    /// `+ 2 c e^{2t}`
    Exp,
    /// `+ 4 c √t`
    Sqrt,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Sin, Model::Exp, Model::Sqrt];

    pub fn variance(self, t: f64, c: f64) -> f64 {
        let null = 0.5 + 3.0 * t * t;
        null + match self {
            Model::Sin => 2.5 * c * (std::f64::consts::TAU * t).sin(),
            Model::Exp => 2.0 * c * (2.0 * t).exp(),
            Model::Sqrt => 4.0 * c * t.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Sin => "sin",
            Model::Exp => "exp",
            Model::Sqrt => "sqrt",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sin" | "5.3" => Ok(Model::Sin),
            "exp" | "5.4" => Ok(Model::Exp),
            "sqrt" | "5.5" => Ok(Model::Sqrt),
            other => Err(Error::InvalidScenario(format!("unknown model '{other}'"))),
        }
    }
}

/// What to do where `σ²(t)` computed from the model formula is negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeVariance {
    /// Refuse the configuration.
    #[default]
    Reject,
    /// Use `|σ²(t)|`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: Model,
    pub c: f64,
    pub n: usize,
    pub seed: u64,
    /// ChaCha stream within `seed`; replications use their index here.
    pub stream: u64,
    pub negative_variance: NegativeVariance,
}

impl ScenarioConfig {
    pub fn new(model: Model, c: f64, n: usize, seed: u64) -> Self {
        Self {
            model,
            c,
            n,
            seed,
            stream: 0,
            negative_variance: NegativeVariance::Reject,
        }
    }

    /// Variance actually used to generate data.
    pub fn effective_variance(&self, t: f64) -> f64 {
        let v = self.model.variance(t, self.c);
        match self.negative_variance {
            NegativeVariance::Reject => v,
            NegativeVariance::Absolute => v.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidScenario(format!(
                "c must be non-negative, got {}",
                self.c
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidScenario(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        let k = VARIANCE_CHECK_POINTS - 1;
        for i in 0..=k {
            let t = i as f64 / k as f64;
            let v = self.effective_variance(t);
            let bad = match self.negative_variance {
                NegativeVariance::Reject => !(v > 0.0),
                NegativeVariance::Absolute => !(v >= 0.0),
            };
            if bad {
                return Err(Error::InvalidScenario(format!(
                    "variance of model {} with c = {} is {v} at t = {t}",
                    self.model.name(),
                    self.c
                )));
            }
        }
        Ok(())
    }
}

/// Draws one scenario sample on `t_i = i/(n+1)` with standard normal errors.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Sample<f64>> {
    config.validate()?;
    let grid = build_design::<f64>(Density::Uniform, config.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);
    let y = grid
        .points()
        .iter()
        .map(|&t| {
            let e: f64 = StandardNormal.sample(&mut rng);
            1.0 + t + config.effective_variance(t).sqrt() * e
        })
        .collect();
    Sample::new(grid, y)
}

/// One `(model, c, n)` cell of a simulation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: Model,
    pub c: f64,
    pub n: usize,
}

/// SplitMix64 finalizer, used to derive per-cell seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE5_E4B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Scenario for replication `rep` of `cell`.
///
/// Errors depend on `(master, n, rep)` only, so every model and every `c`
/// at a given sample size see the same error draws.
pub fn replication_scenario(
    cell: &Cell,
    master: u64,
    rep: usize,
    policy: NegativeVariance,
) -> ScenarioConfig {
    ScenarioConfig {
        model: cell.model,
        c: cell.c,
        n: cell.n,
        seed: splitmix64(master ^ splitmix64(cell.n as u64)),
        stream: rep as u64,
        negative_variance: policy,
    }
}

/// Runs `test` on `reps` independently seeded samples of `cell`, in replication order.
pub fn replicate<F>(
    cell: &Cell,
    reps: usize,
    master: u64,
    policy: NegativeVariance,
    test: F,
) -> Result<Vec<Result<TestReport>>>
where
    F: Fn(&Sample<f64>, &ScenarioConfig) -> Result<TestReport> + Sync,
{
    if reps == 0 {
        return Err(Error::Contract("at least one replication required".into()));
    }
    replication_scenario(cell, master, 0, policy).validate()?;
    Ok((0..reps)
        .into_par_iter()
        .map(|rep| {
            let sc = replication_scenario(cell, master, rep, policy);
            let sample = generate_scenario(&sc)?;
            test(&sample, &sc)
        })
        .collect())
}

/// Rejection frequency at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRate {
    pub alpha: f64,
    pub rejections: usize,
    pub proportion: f64,
    /// `√(p(1-p)/R)`
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRates {
    pub model: Model,
    pub c: f64,
    pub n: usize,
    pub valid: usize,
    pub failed: usize,
    pub rates: Vec<LevelRate>,
}

impl CellRates {
    pub fn proportion(&self, alpha: f64) -> Option<f64> {
        self.rates
            .iter()
            .find(|r| r.alpha == alpha)
            .map(|r| r.proportion)
    }

    pub fn rate(&self, alpha: f64) -> Option<&LevelRate> {
        self.rates.iter().find(|r| r.alpha == alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub cells: Vec<CellRates>,
}

/// Tallies per-level rejections; more than 1% failed replications is an error.
pub fn tally(cell: &Cell, alphas: &[f64], outcomes: &[Result<TestReport>]) -> Result<CellRates> {
    let total = outcomes.len();
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed * 100 > total {
        let first = outcomes
            .iter()
            .find_map(|o| o.as_ref().err())
            .map(ToString::to_string);
        return Err(Error::Harness {
            failed,
            total,
            first: first.unwrap_or_default(),
        });
    }
    let valid = total - failed;
    let rates = alphas
        .iter()
        .map(|&alpha| {
            let rejections = outcomes
                .iter()
                .filter_map(|o| o.as_ref().ok())
                .filter(|r| r.reject_at(alpha) == Some(true))
                .count();
            let p = rejections as f64 / valid.max(1) as f64;
            LevelRate {
                alpha,
                rejections,
                proportion: p,
                mc_se: (p * (1.0 - p) / valid.max(1) as f64).sqrt(),
            }
        })
        .collect();
    Ok(CellRates {
        model: cell.model,
        c: cell.c,
        n: cell.n,
        valid,
        failed,
        rates,
    })
}

/// Rejection proportions of the Cramér–von-Mises test over a sweep of cells.
pub fn rejection_rates(
    cells: &[Cell],
    family: &VarianceFamily<f64>,
    config: &TestConfig<f64>,
    reps: usize,
    master: u64,
    policy: NegativeVariance,
) -> Result<RejectionTable> {
    config.validate()?;
    let cells = cells
        .iter()
        .map(|cell| {
            let outcomes = replicate(cell, reps, master, policy, |s, _| {
                run_test(s, family, config).map(|o| o.report)
            })?;
            tally(cell, &config.alphas, &outcomes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RejectionTable {
        reps,
        alphas: config.alphas.clone(),
        cells,
    })
}

impl RejectionTable {
    pub fn cell(&self, model: Model, c: f64, n: usize) -> Option<&CellRates> {
        self.cells
            .iter()
            .find(|x| x.model == model && x.c == c && x.n == n)
    }

    /// CSV with one row per `(model, c)` and one column per `(n, α)`.
    ///
    /// Each martingale row is followed by a bootstrap row whose cells are
    /// left blank: that comparator is not computed here.
    pub fn to_csv(&self) -> String {
        let ns: BTreeSet<usize> = self.cells.iter().map(|c| c.n).collect();
        let mut rows: Vec<(Model, f64)> = Vec::new();
        for cell in &self.cells {
            if !rows.iter().any(|&(m, c)| m == cell.model && c == cell.c) {
                rows.push((cell.model, cell.c));
            }
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).expect("finite c")));

        let mut out = String::from("model,c,test");
        for n in &ns {
            for a in &self.alphas {
                let _ = write!(out, ",n{n}_a{}", sig(*a, 6));
            }
        }
        out.push_str(",mc_se_max,reps,note\n");
        for (model, c) in rows {
            let mut line = format!("{},{},martingale", model.name(), sig(c, 6));
            let mut blank = format!("{},{},bootstrap", model.name(), sig(c, 6));
            let mut se_max: f64 = 0.0;
            for &n in &ns {
                for &a in &self.alphas {
                    let rate = self.cell(model, c, n).and_then(|cell| cell.rate(a));
                    match rate {
                        Some(r) => {
                            se_max = se_max.max(r.mc_se);
                            let _ = write!(line, ",{}", sig(r.proportion, 6));
                        }
                        None => line.push(','),
                    }
                    blank.push(',');
                }
            }
            let _ = writeln!(line, ",{},{},", sig(se_max, 6), self.reps);
            let _ = writeln!(blank, ",,,bootstrap comparator not computed");
            out.push_str(&line);
            out.push_str(&blank);
        }
        out
    }
}
