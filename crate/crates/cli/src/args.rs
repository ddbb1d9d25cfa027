use std::path::PathBuf;

use boxcox_core::io::{Format, RunConfig, WeightsMode};
use boxcox_core::simulation::{HypothesisId, Transform};
use boxcox_core::{PenaltyFamily, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "boxcox-infer", version, about = "Sparse estimation and linear hypothesis tests for regression with an unknown monotone response transformation")]
pub struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, env = "BOXCOX_INFER_THREADS")]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Penalized estimation only (constrained when --hypothesis is given).
    Fit(FitArgs),
    /// Estimate both fits and test the linear hypothesis.
    Test(TestArgs),
    /// Monte-Carlo rejection rates on simulated data.
    Simulate(SimulateArgs),
    /// Generalized chi-squared quantile from given Psi and T matrices.
    Quantile(QuantileArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with the response and covariates.
    #[arg(long)]
    pub data: PathBuf,

    /// 0-based column holding the response.
    #[arg(long, default_value_t = 0)]
    pub response_col: usize,

    /// The first CSV row is data, not a header.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// json, csv or text (default: from the --out extension, else json).
    #[arg(long)]
    pub format: Option<Format>,
}

/// Estimation and calibration options; each overrides the --config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Number of percentile thresholds K.
    #[arg(long)]
    pub thresholds: Option<usize>,

    /// Explicit composite weights, comma separated (default: equal).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,

    /// Penalty family: scad or mcp.
    #[arg(long)]
    pub penalty: Option<PenaltyFamily>,

    /// Penalty shape parameter a.
    #[arg(long)]
    pub penalty_a: Option<f64>,

    /// `auto` (GIC over a path) or a fixed penalty level.
    #[arg(long)]
    pub lambda: Option<String>,

    /// Number of penalty levels on the GIC path.
    #[arg(long)]
    pub path_len: Option<usize>,

    /// Smallest path level as a fraction of the largest.
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,

    /// Evaluate the whole path instead of stopping once GIC cannot improve.
    #[arg(long)]
    pub full_path: bool,

    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Monte-Carlo draws for the null quantile.
    #[arg(long)]
    pub mc_draws: Option<usize>,

    /// Monte-Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Center and scale covariates before fitting (default on).
    #[arg(long, overrides_with = "no_standardize")]
    pub standardize: bool,

    /// Fit on the raw covariates.
    #[arg(long)]
    pub no_standardize: bool,

    /// Also report sandwich Wald and score statistics.
    #[arg(long)]
    pub godambe: bool,

    #[arg(long)]
    pub tol_cmd: Option<f64>,

    #[arg(long)]
    pub tol_lla: Option<f64>,

    #[arg(long)]
    pub tol_alm: Option<f64>,

    /// Augmented Lagrangian parameter.
    #[arg(long)]
    pub rho: Option<f64>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(path) => serde_json::from_str(&crate::read_text(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(k) = self.thresholds {
            run.thresholds = k;
        }
        if let Some(w) = &self.weights {
            run.weights = WeightsMode::Explicit(w.clone());
        }
        if let Some(f) = self.penalty {
            run.penalty = f;
        }
        if let Some(a) = self.penalty_a {
            run.penalty_a = a;
        }
        if let Some(l) = &self.lambda {
            run.lambda = boxcox_core::io::parse_lambda(l)?;
        }
        if let Some(v) = self.path_len {
            run.path_len = v;
        }
        if let Some(v) = self.lambda_min_ratio {
            run.lambda_min_ratio = v;
        }
        if self.full_path {
            run.early_stop = false;
        }
        if let Some(v) = self.alpha {
            run.alpha = v;
        }
        if let Some(v) = self.mc_draws {
            run.mc_draws = v;
        }
        if let Some(v) = self.seed {
            run.seed = v;
        }
        if self.standardize {
            run.standardize = true;
        }
        if self.no_standardize {
            run.standardize = false;
        }
        if self.godambe {
            run.godambe = true;
        }
        let t = &mut run.tolerances;
        t.tol_cmd = self.tol_cmd.or(t.tol_cmd);
        t.tol_lla = self.tol_lla.or(t.tol_lla);
        t.tol_alm = self.tol_alm.or(t.tol_alm);
        t.rho = self.rho.or(t.rho);
        run.test_config()?;
        Ok(run)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Hypothesis JSON ({"indices", "C", "t"}, 1-based); fits under the constraint.
    #[arg(long)]
    pub hypothesis: Option<PathBuf>,

    #[command(flatten)]
    pub run: RunArgs,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Hypothesis JSON: {"indices": [1, 2], "C": [[1, 1]], "t": [0]} (1-based).
    #[arg(long)]
    pub hypothesis: PathBuf,

    #[command(flatten)]
    pub run: RunArgs,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation setting JSON (n, p, rho_corr, g_id, h1, hypothesis_id, seed, ...).
    #[arg(long)]
    pub setting: PathBuf,

    /// Replicates per h1 value.
    #[arg(long)]
    pub replicates: Option<usize>,

    /// Master seed for the replicate streams.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Run every listed h1 (comma separated) instead of the setting's value.
    #[arg(long, value_delimiter = ',')]
    pub h1: Option<Vec<f64>>,

    /// Response transformation: g1, g2 or identity.
    #[arg(long)]
    pub g_id: Option<Transform>,

    /// Hypothesis preset: i, ii, iii or iv.
    #[arg(long)]
    pub hypothesis_id: Option<HypothesisId>,

    /// Also run the OLS Wald baseline.
    #[arg(long)]
    pub baseline: bool,

    /// Keep per-replicate reports in JSON output.
    #[arg(long)]
    pub keep_replicates: bool,

    /// Penalty family: scad or mcp.
    #[arg(long)]
    pub penalty: Option<PenaltyFamily>,

    /// Penalty shape parameter a.
    #[arg(long)]
    pub penalty_a: Option<f64>,

    /// `auto` (GIC over a path) or a fixed penalty level.
    #[arg(long)]
    pub lambda: Option<String>,

    /// Number of penalty levels on the GIC path.
    #[arg(long)]
    pub path_len: Option<usize>,

    /// Smallest path level as a fraction of the largest.
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,

    /// Number of percentile thresholds K.
    #[arg(long)]
    pub thresholds: Option<usize>,

    /// Monte-Carlo draws for the null quantile.
    #[arg(long)]
    pub mc_draws: Option<usize>,

    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Center and scale covariates before fitting (default off for simulations).
    #[arg(long)]
    pub standardize: bool,

    /// Also report sandwich Wald and score statistics.
    #[arg(long)]
    pub godambe: bool,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct QuantileArgs {
    /// JSON with square matrices {"psi": [[...]], "tau": [[...]]}.
    #[arg(long)]
    pub input: PathBuf,

    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Monte-Carlo draws.
    #[arg(long, default_value_t = boxcox_core::inference::DEFAULT_MC_DRAWS)]
    pub mc_draws: usize,

    /// Monte-Carlo seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Also report the p-value of this statistic.
    #[arg(long)]
    pub statistic: Option<f64>,

    #[command(flatten)]
    pub output: OutputArgs,
}
