//! Critical values of the limiting null laws `∫₀¹ W²(t) dt` and `sup_{[0,1]} |W|`.
//!
//! Two independent samplers are provided for the Cramér–von-Mises law: the
//! Karhunen–Loève series `Σ_k Z_k² / ((k - ½)² π²)` and time-discretized
//! Brownian paths. The path sampler also yields the Kolmogorov–Smirnov law.
//! Samples are drawn in fixed-size blocks, each from its own ChaCha stream,
//! so results do not depend on the number of worker threads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KL_TERMS: usize = 2000;
pub const PATH_STEPS: usize = 4096;
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_CRITICAL_SEED: u64 = 0x5EED_C0FF_EE00_0001;
const BLOCK: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// `∫₀¹ W²(t) dt`
    IntW2,
    /// `sup_{[0,1]} |W(t)|`
    SupW,
}

impl Law {
    pub fn name(self) -> &'static str {
        match self {
            Law::IntW2 => "int_W2",
            Law::SupW => "sup_W",
        }
    }
}

impl std::str::FromStr for Law {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "int_w2" | "cvm" => Ok(Law::IntW2),
            "sup_w" | "ks" => Ok(Law::SupW),
            other => Err(Error::Contract(format!("unknown law '{other}'"))),
        }
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn blocks(samples: usize) -> impl IndexedParallelIterator<Item = (usize, usize)> {
    let count = samples.div_ceil(BLOCK);
    (0..count)
        .into_par_iter()
        .map(move |b| (b, BLOCK.min(samples - b * BLOCK)))
}

/// Draws `samples` values of `∫₀¹ W²` from the Karhunen–Loève series truncated at `terms`.
pub fn simulate_int_w2_kl(samples: usize, terms: usize, seed: u64) -> Vec<f64> {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let weights: Vec<f64> = (1..=terms)
        .map(|k| 1.0 / ((k as f64 - 0.5).powi(2) * pi2))
        .collect();
    let per_block: Vec<Vec<f64>> = blocks(samples)
        .map(|(b, len)| {
            let mut rng = block_rng(seed, b);
            (0..len)
                .map(|_| {
                    weights
                        .iter()
                        .map(|&w| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            w * z * z
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    per_block.concat()
}

/// Functionals of simulated Brownian paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunctionals {
    /// Trapezoid approximation of `∫₀¹ W²`.
    pub int_w2: Vec<f64>,
    /// `max_k |W(k/steps)|`
    pub sup_abs: Vec<f64>,
}

/// Simulates Gaussian random-walk paths on a grid of `steps` increments.
pub fn simulate_brownian_paths(samples: usize, steps: usize, seed: u64) -> PathFunctionals {
    // Separate stream family from the series sampler.
    let seed = seed ^ 0x9E37_79B9_7F4A_7C15;
    let dt = 1.0 / steps as f64;
    let sd = dt.sqrt();
    let per_block: Vec<(Vec<f64>, Vec<f64>)> = blocks(samples)
        .map(|(b, len)| {
            let mut rng = block_rng(seed, b);
            let mut ints = Vec::with_capacity(len);
            let mut sups = Vec::with_capacity(len);
            for _ in 0..len {
                let (mut w, mut ss, mut sup) = (0.0f64, 0.0f64, 0.0f64);
                for _ in 0..steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    w += sd * z;
                    ss += w * w;
                    sup = sup.max(w.abs());
                }
                // Trapezoid rule with W(0) = 0.
                ints.push(dt * (ss - 0.5 * w * w));
                sups.push(sup);
            }
            (ints, sups)
        })
        .collect();
    let (int_w2, sup_abs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per_block.into_iter().unzip();
    PathFunctionals {
        int_w2: int_w2.concat(),
        sup_abs: sup_abs.concat(),
    }
}

/// An empirical null law held as sorted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NullLaw {
    law: Law,
    seed: u64,
    sorted: Vec<f64>,
}

impl NullLaw {
    pub fn from_samples(law: Law, seed: u64, mut samples: Vec<f64>) -> Self {
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
        Self {
            law,
            seed,
            sorted: samples,
        }
    }

    /// Simulates the law with the default sampler: series for `int_W2`, paths for `sup_W`.
    pub fn simulate(law: Law, samples: usize, seed: u64) -> Self {
        let draws = match law {
            Law::IntW2 => simulate_int_w2_kl(samples, KL_TERMS, seed),
            Law::SupW => simulate_brownian_paths(samples, PATH_STEPS, seed).sup_abs,
        };
        Self::from_samples(law, seed, draws)
    }

    pub fn law(&self) -> Law {
        self.law
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn len(&self) -> usize {
        self.sorted.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }

    /// Empirical `1 - α` quantile (inverse of the empirical CDF).
    pub fn upper_quantile(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let n = self.sorted.len();
        let k = ((1.0 - alpha) * n as f64).ceil() as usize;
        Ok(self.sorted[k.clamp(1, n) - 1])
    }

    /// Empirical CDF `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// `P(X ≥ x)`.
    pub fn p_value(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Contract(format!(
            "alpha must lie in (0, 0.5], got {alpha}"
        )));
    }
    Ok(())
}

/// Quantiles `w_α` with `P(X ≥ w_α) ≈ α` for each requested level.
pub fn critical_values(alphas: &[f64], law: &NullLaw) -> Result<Vec<(f64, f64)>> {
    if alphas.is_empty() {
        return Err(Error::Contract("no significance levels given".into()));
    }
    alphas
        .iter()
        .map(|&a| law.upper_quantile(a).map(|q| (a, q)))
        .collect()
}

type CacheKey = (Law, usize, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<NullLaw>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<NullLaw>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Process-wide memoized [`NullLaw::simulate`].
pub fn cached_law(law: Law, samples: usize, seed: u64) -> Arc<NullLaw> {
    let key = (law, samples, seed);
    if let Some(hit) = cache().lock().expect("cache poisoned").get(&key) {
        return Arc::clone(hit);
    }
    let value = Arc::new(NullLaw::simulate(law, samples, seed));
    let mut map = cache().lock().expect("cache poisoned");
    Arc::clone(map.entry(key).or_insert(value))
}
