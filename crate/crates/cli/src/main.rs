//! `varform`: test the parametric form of a conditional variance function,
//! run the simulation study, and tabulate critical values.

mod config;
mod error;
mod input;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use varform_core::critical::{cached_law, critical_values};
use varform_core::format::sig;
use varform_core::montecarlo::{rejection_rates, Cell};
use varform_core::{run_test, KernelShape, NegativeVariance, SmoothingMethod};

use config::{BandwidthSetting, RunConfig, DEFAULT_REPS, DEFAULT_SIMULATION_SEED};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "varform",
    version,
    about = "Martingale-transform test for the form of a conditional variance"
)]
struct Cli {
    /// JSON file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a sample read from a `t,y` CSV file.
    Test {
        input: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Rejection rates over simulated scenarios, as a CSV table.
    Simulate {
        #[command(flatten)]
        flags: Flags,
    },
    /// Upper quantiles of a limiting null law.
    Critval {
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Comma-separated basis names (const, t, t2, sqrt_t, exp2t, sin2pit; `offset=NAME` for a fixed term).
    #[arg(long)]
    family: Option<String>,
    /// Order r of the difference sequence.
    #[arg(long)]
    order: Option<usize>,
    /// Explicit difference coefficients d_0..d_r.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    coefficients: Option<Vec<f64>>,
    #[arg(long)]
    kernel: Option<KernelShape>,
    /// nw | local-linear
    #[arg(long)]
    method: Option<SmoothingMethod>,
    /// Smoother for the outer weights of the standardizing estimate.
    #[arg(long)]
    beta_method: Option<SmoothingMethod>,
    /// Lower bound on the standardizing-estimate bandwidth (0 disables).
    #[arg(long)]
    beta_min_bandwidth: Option<f64>,
    /// Disable the leverage rescaling of regression residuals.
    #[arg(long)]
    no_leverage_correction: bool,
    /// `auto` (cross validation) or a fixed positive bandwidth.
    #[arg(long, value_parser = BandwidthSetting::parse)]
    bandwidth: Option<BandwidthSetting>,
    #[arg(long)]
    t0: Option<f64>,
    /// Significance level; repeat or separate by commas.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Seed (falls back to VARFORM_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per scenario.
    #[arg(long)]
    reps: Option<usize>,
    /// Draws used to simulate the null law.
    #[arg(long)]
    samples: Option<usize>,
    /// int_W2 | sup_W
    #[arg(long)]
    law: Option<String>,
    /// Scenario model (sin | exp | sqrt, or 5.3 | 5.4 | 5.5); repeatable.
    #[arg(long, value_delimiter = ',')]
    model: Option<Vec<String>>,
    /// Deviation sizes; repeatable.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    /// Sample sizes; repeatable.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// reject | absolute: handling of negative scenario variances.
    #[arg(long, value_parser = parse_negative_variance)]
    negative_variance: Option<NegativeVariance>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of t, Λ_n(t) and the transformed process.
    #[arg(long)]
    trajectory_out: Option<PathBuf>,
}

fn parse_negative_variance(s: &str) -> Result<NegativeVariance, String> {
    match s {
        "reject" => Ok(NegativeVariance::Reject),
        "absolute" => Ok(NegativeVariance::Absolute),
        other => Err(format!("expected 'reject' or 'absolute', got '{other}'")),
    }
}

impl Flags {
    fn into_config(self) -> RunConfig {
        RunConfig {
            family: self.family,
            order: self.order,
            coefficients: self.coefficients,
            kernel: self.kernel,
            method: self.method,
            beta_method: self.beta_method,
            beta_min_bandwidth: self.beta_min_bandwidth,
            leverage_correction: self.no_leverage_correction.then_some(false),
            bandwidth: self.bandwidth,
            t0: self.t0,
            alpha: self.alpha,
            seed: self.seed,
            reps: self.reps,
            samples: self.samples,
            law: self.law,
            model: self.model,
            c: self.c,
            n: self.n,
            negative_variance: self.negative_variance,
            out: self.out,
            trajectory_out: self.trajectory_out,
        }
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::usage(e.to_string()))
        }
    }
}

fn cmd_test(input: &Path, cfg: &RunConfig) -> Result<bool, CliError> {
    let file = std::fs::File::open(input)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", input.display())))?;
    let sample = input::read_sample(std::io::BufReader::new(file))?;
    let family = cfg.family()?;
    let config = cfg.test_config(cfg.critical_seed()?)?;
    let outcome = run_test(&sample, &family, &config).map_err(CliError::usage)?;
    let mut json = outcome.report.to_json();
    json.push('\n');
    emit(cfg.out.as_deref(), &json)?;
    if let Some(path) = &cfg.trajectory_out {
        emit(Some(path), &outcome.trajectory_csv())?;
    }
    Ok(outcome.report.rejects_at_smallest_alpha())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let family = cfg.family()?;
    let config = cfg.test_config(varform_core::critical::DEFAULT_CRITICAL_SEED)?;
    let models = cfg.models()?;
    let cs = cfg.c.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0]);
    let ns = cfg.n.clone().unwrap_or_else(|| vec![50, 100, 200]);
    let reps = cfg.reps.unwrap_or(DEFAULT_REPS);
    if reps == 0 || cs.is_empty() || ns.is_empty() {
        return Err(CliError::usage(
            "simulation needs reps >= 1 and non-empty c and n lists",
        ));
    }
    let mut cells = Vec::new();
    for &model in &models {
        for &c in &cs {
            for &n in &ns {
                cells.push(Cell { model, c, n });
            }
        }
    }
    let policy = cfg.negative_variance.unwrap_or(NegativeVariance::Absolute);
    let seed = cfg.seed_or(DEFAULT_SIMULATION_SEED)?;
    let table =
        rejection_rates(&cells, &family, &config, reps, seed, policy).map_err(CliError::usage)?;
    emit(cfg.out.as_deref(), &table.to_csv())
}

fn cmd_critval(cfg: &RunConfig) -> Result<(), CliError> {
    let alphas = cfg.alphas()?;
    let law = cfg.law()?;
    let samples = cfg
        .samples
        .unwrap_or(varform_core::critical::DEFAULT_SAMPLES);
    if samples == 0 {
        return Err(CliError::usage("sample count must be positive"));
    }
    let seed = cfg.critical_seed()?;
    let null = cached_law(law, samples, seed);
    let table = critical_values(&alphas, &null).map_err(CliError::usage)?;
    let mut out = String::from("law,alpha,quantile,samples,seed\n");
    for (a, q) in table {
        out.push_str(&format!(
            "{},{},{},{samples},{seed}\n",
            law.name(),
            sig(a, 6),
            sig(q, 6)
        ));
    }
    emit(cfg.out.as_deref(), &out)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let file = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Test { input, flags } => {
            let cfg = file.overlay(flags.into_config());
            let reject = cmd_test(&input, &cfg)?;
            Ok(ExitCode::from(u8::from(reject)))
        }
        Command::Simulate { flags } => {
            cmd_simulate(&file.overlay(flags.into_config()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Critval { flags } => {
            cmd_critval(&file.overlay(flags.into_config()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
