//! Data-generating processes, hypothesis presets and rejection-rate studies.

use std::fmt;
use std::str::FromStr;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::inference::{run_linear_test, GodambeReport, TestConfig, TestReport};
use crate::solver::LinearHypothesis;

/// Response transformation `g` of the simulated model `g(Y) = Xβ* + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    G1,
    G2,
    Identity,
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g1" => Ok(Transform::G1),
            "g2" => Ok(Transform::G2),
            "identity" | "id" => Ok(Transform::Identity),
            other => Err(Error::invalid(format!("unknown transform `{other}` (expected g1, g2, identity)"))),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::G1 => "g1",
            Transform::G2 => "g2",
            Transform::Identity => "identity",
        })
    }
}

/// The four linear hypotheses of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypothesisId {
    I,
    Ii,
    Iii,
    Iv,
}

impl FromStr for HypothesisId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(HypothesisId::I),
            "ii" | "2" => Ok(HypothesisId::Ii),
            "iii" | "3" => Ok(HypothesisId::Iii),
            "iv" | "4" => Ok(HypothesisId::Iv),
            other => Err(Error::invalid(format!("unknown hypothesis `{other}` (expected i, ii, iii, iv)"))),
        }
    }
}

impl fmt::Display for HypothesisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HypothesisId::I => "i",
            HypothesisId::Ii => "ii",
            HypothesisId::Iii => "iii",
            HypothesisId::Iv => "iv",
        };
        f.write_str(s)
    }
}

/// `n × p` matrix with i.i.d. rows from `N(0, Σ)`, `Σ_jl = ρ^|j−l|`, drawn
/// by the AR(1) recursion along each row.
pub fn gen_ar1_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("AR(1) correlation must lie in (-1, 1), got {rho}")));
    }
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = if j == 0 { z } else { rho * prev + innov * z };
            x[(i, j)] = prev;
        }
    }
    Ok(x)
}

/// `g⁻¹(t)`.
pub fn transform_inverse(g: Transform, t: f64) -> f64 {
    match g {
        Transform::G1 => 0.5 * (2.0 * t - 1.0).cbrt() + 0.5,
        Transform::G2 => {
            let u = (t - 2.0) / 3.0;
            u.exp() / (1.0 + 0.5 * u * u)
        }
        Transform::Identity => t,
    }
}

/// Latent `2x₁ − (2+h₁)x₂ + ε`.
pub fn gen_latent<R: Rng + ?Sized>(x: &DMatrix<f64>, h1: f64, rng: &mut R) -> Result<DVector<f64>> {
    if x.ncols() < 2 {
        return Err(Error::invalid("the simulated model needs p >= 2"));
    }
    Ok(DVector::from_iterator(
        x.nrows(),
        (0..x.nrows()).map(|i| {
            let eps: f64 = rng.sample(StandardNormal);
            2.0 * x[(i, 0)] - (2.0 + h1) * x[(i, 1)] + eps
        }),
    ))
}

/// `y_i = g⁻¹(2x_i1 − (2+h₁)x_i2 + ε_i)` with `ε_i ~ N(0, 1)`.
pub fn gen_response<R: Rng + ?Sized>(x: &DMatrix<f64>, h1: f64, g: Transform, rng: &mut R) -> Result<DVector<f64>> {
    Ok(gen_latent(x, h1, rng)?.map(|t| transform_inverse(g, t)))
}

/// True coefficients `(2, −(2+h₁), 0, …, 0)`.
pub fn true_beta(p: usize, h1: f64) -> Vec<f64> {
    let mut b = vec![0.0; p];
    b[0] = 2.0;
    if p > 1 {
        b[1] = -(2.0 + h1);
    }
    b
}

pub fn hypothesis_preset(id: HypothesisId, p: usize) -> Result<LinearHypothesis> {
    let need = match id {
        HypothesisId::I | HypothesisId::Ii => 2,
        HypothesisId::Iii | HypothesisId::Iv => 4,
    };
    if p < need {
        return Err(Error::invalid(format!("hypothesis {id} needs p >= {need}, got {p}")));
    }
    match id {
        HypothesisId::I => LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0], dvector![0.0], p),
        HypothesisId::Ii => LinearHypothesis::from_one_based(&[2], dmatrix![1.0], dvector![-2.0], p),
        HypothesisId::Iii => {
            LinearHypothesis::from_one_based(&[1, 2, 3, 4], dmatrix![1.0, 1.0, 1.0, 1.0], dvector![0.0], p)
        }
        HypothesisId::Iv => LinearHypothesis::from_one_based(
            &[1, 2, 3, 4],
            dmatrix![1.0, 1.0, 0.0, 0.0; 0.0, 1.0, 0.0, 0.0; 1.0, 1.0, 1.0, 1.0],
            dvector![0.0, -2.0, 0.0],
            p,
        ),
    }
}

/// Classical OLS Wald test on the columns `M ∪ extra` (plus an intercept).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl BaselineResult {
    pub fn reject_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// OLS on `[1, X_M, X_extra]` and the Wald statistic
/// `n dᵀ(σ̂² C (XᵀX/n)⁻¹_MM Cᵀ)⁻¹ d`, `d = Cβ̂_M − t`, against `χ²_r`.
pub fn linear_wald_baseline(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    hypothesis: &LinearHypothesis,
    extra: &[usize],
) -> Result<BaselineResult> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::dims(format!("{} responses for {n} rows", y.len())));
    }
    if let Some(&j) = hypothesis.indices().iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::invalid(format!("hypothesis column {} out of range", j + 1)));
    }
    let mut cols: Vec<usize> = hypothesis.indices().to_vec();
    for &j in extra {
        if j >= x.ncols() {
            return Err(Error::invalid(format!("baseline column {} out of range", j + 1)));
        }
        if !cols.contains(&j) {
            cols.push(j);
        }
    }
    let d = cols.len() + 1;
    if n <= d {
        return Err(Error::invalid(format!("OLS baseline needs n > {d}")));
    }
    let mut z = DMatrix::zeros(n, d);
    z.column_mut(0).fill(1.0);
    for (q, &j) in cols.iter().enumerate() {
        z.set_column(q + 1, &x.column(j));
    }
    let gram = z.transpose() * &z / n as f64;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("OLS baseline design is rank deficient"))?;
    let coef = chol.solve(&(z.transpose() * y / n as f64));
    let resid = y - &z * &coef;
    let sigma2 = resid.norm_squared() / (n - d) as f64;
    let m = hypothesis.m();
    let beta_m = coef.rows(1, m).into_owned();
    let diff = hypothesis.c() * beta_m - hypothesis.t();
    let inv = chol.inverse();
    let inv_mm = inv.view((1, 1), (m, m));
    let cov = hypothesis.c() * inv_mm * hypothesis.c().transpose() * sigma2;
    let cov_chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("OLS Wald covariance is singular".into()))?;
    let statistic = n as f64 * diff.dot(&cov_chol.solve(&diff));
    let df = hypothesis.r();
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(BaselineResult {
        statistic,
        df,
        p_value: chi.sf(statistic),
    })
}

pub const DEFAULT_REPLICATES: usize = 600;

fn default_alpha() -> f64 {
    0.05
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

/// One rejection-rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub n: usize,
    pub p: usize,
    pub rho_corr: f64,
    pub g_id: Transform,
    pub h1: f64,
    pub hypothesis_id: HypothesisId,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
    /// Also run the OLS Wald baseline on each replicate.
    #[serde(default)]
    pub baseline: bool,
    #[serde(default)]
    pub test: TestConfig,
}

impl SimSetting {
    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(Error::invalid(format!("simulation needs n >= 20, got {}", self.n)));
        }
        if self.p < 4 {
            return Err(Error::invalid(format!("simulation needs p >= 4, got {}", self.p)));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be >= 1"));
        }
        if !(self.rho_corr.abs() < 1.0) {
            return Err(Error::invalid(format!("rho_corr must lie in (-1, 1), got {}", self.rho_corr)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !self.h1.is_finite() {
            return Err(Error::invalid("h1 must be finite"));
        }
        Ok(())
    }
}

/// Independent RNG for replicate `index` of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Monte-Carlo seed of replicate `index` (SplitMix64 of the pair).
pub fn replicate_mc_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulated `(X, y)` of one replicate.
pub fn gen_replicate(setting: &SimSetting, index: usize) -> Result<crate::model::Dataset> {
    let mut rng = replicate_rng(setting.seed, index);
    let x = gen_ar1_design(setting.n, setting.p, setting.rho_corr, &mut rng)?;
    let y = gen_response(&x, setting.h1, setting.g_id, &mut rng)?;
    crate::model::Dataset::new(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub report: Option<TestReport>,
    pub baseline: Option<BaselineResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub h1: f64,
    pub statistic: String,
    pub rejections: usize,
    pub valid: usize,
    pub rejection_pct: f64,
    pub std_err_pct: f64,
}

impl RejectionRow {
    pub fn new(h1: f64, statistic: &str, rejections: usize, valid: usize) -> Self {
        let p = if valid == 0 { 0.0 } else { rejections as f64 / valid as f64 };
        let se = if valid == 0 { 0.0 } else { (p * (1.0 - p) / valid as f64).sqrt() };
        Self {
            h1,
            statistic: statistic.to_string(),
            rejections,
            valid,
            rejection_pct: 100.0 * p,
            std_err_pct: 100.0 * se,
        }
    }

    /// `rate(se)` with two decimals, e.g. `6.50(1.01)`.
    pub fn formatted(&self) -> String {
        format!("{:.2}({:.2})", self.rejection_pct, self.std_err_pct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub rows: Vec<RejectionRow>,
    pub metadata: SimSetting,
    pub failures: usize,
    /// More than 5% of replicates failed.
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcomes: Vec<ReplicateOutcome>,
}

impl RejectionTable {
    pub fn row(&self, statistic: &str) -> Option<&RejectionRow> {
        self.rows.iter().find(|r| r.statistic == statistic)
    }
}

pub fn run_replicate(setting: &SimSetting, index: usize, hyp: &LinearHypothesis) -> ReplicateOutcome {
    let run = || -> Result<(TestReport, Option<BaselineResult>)> {
        let data = gen_replicate(setting, index)?;
        let config = TestConfig {
            alpha: setting.alpha,
            seed: replicate_mc_seed(setting.seed, index),
            ..setting.test
        };
        let report = run_linear_test(&data, hyp, &config)?;
        let baseline = if setting.baseline {
            Some(linear_wald_baseline(&data.x, &data.y, hyp, &[0, 1])?)
        } else {
            None
        };
        Ok((report, baseline))
    };
    match run() {
        Ok((report, baseline)) => ReplicateOutcome {
            replicate: index,
            report: Some(report),
            baseline,
            error: None,
        },
        Err(e) => ReplicateOutcome {
            replicate: index,
            report: None,
            baseline: None,
            error: Some(e.to_string()),
        },
    }
}

/// Rejection percentages of `T_L`, `T_W`, `T_S` (and the baseline or the
/// sandwich statistics when enabled) over independent replicates.
/// Replicates run in parallel; each has its own RNG stream.
pub fn run_rejection_study(setting: &SimSetting) -> Result<RejectionTable> {
    setting.validate()?;
    let hyp = hypothesis_preset(setting.hypothesis_id, setting.p)?;
    let outcomes: Vec<ReplicateOutcome> = (0..setting.replicates)
        .into_par_iter()
        .map(|i| run_replicate(setting, i, &hyp))
        .collect();
    Ok(tabulate(setting, outcomes))
}

/// [`run_rejection_study`] at each `h1` in turn, rows concatenated in
/// `h1` order. Every `h1` reuses the same replicate seeds.
pub fn run_rejection_curve(setting: &SimSetting, h1_values: &[f64]) -> Result<RejectionTable> {
    if h1_values.is_empty() {
        return Err(Error::invalid("no h1 values given"));
    }
    let mut rows = Vec::new();
    let mut failures = 0;
    let mut flagged = false;
    for &h1 in h1_values {
        let table = run_rejection_study(&SimSetting {
            h1,
            ..setting.clone()
        })?;
        rows.extend(table.rows);
        failures += table.failures;
        flagged |= table.flagged;
    }
    Ok(RejectionTable {
        rows,
        metadata: setting.clone(),
        failures,
        flagged,
        outcomes: Vec::new(),
    })
}

pub fn tabulate(setting: &SimSetting, outcomes: Vec<ReplicateOutcome>) -> RejectionTable {
    let reports: Vec<&TestReport> = outcomes.iter().filter_map(|o| o.report.as_ref()).collect();
    let failures = outcomes.len() - reports.len();
    let valid = reports.len();
    let count = |f: &dyn Fn(&TestReport) -> bool| reports.iter().filter(|r| f(r)).count();
    let mut rows = vec![
        RejectionRow::new(setting.h1, "T_L", count(&|r| r.decisions.t_l), valid),
        RejectionRow::new(setting.h1, "T_W", count(&|r| r.decisions.t_w), valid),
        RejectionRow::new(setting.h1, "T_S", count(&|r| r.decisions.t_s), valid),
    ];
    if setting.test.godambe {
        let g = |f: &dyn Fn(&GodambeReport) -> bool| {
            reports.iter().filter(|r| r.godambe.as_ref().is_some_and(f)).count()
        };
        rows.push(RejectionRow::new(setting.h1, "godambe_wald", g(&|x| x.wald_reject), valid));
        rows.push(RejectionRow::new(setting.h1, "godambe_score", g(&|x| x.score_reject), valid));
    }
    if setting.baseline {
        let base: Vec<&BaselineResult> = outcomes.iter().filter_map(|o| o.baseline.as_ref()).collect();
        let rej = base.iter().filter(|b| b.reject_at(setting.alpha)).count();
        rows.push(RejectionRow::new(setting.h1, "ols_wald", rej, base.len()));
    }
    let flagged = failures as f64 > 0.05 * outcomes.len() as f64;
    if failures > 0 {
        log::warn!("{failures} of {} replicates failed", outcomes.len());
    }
    RejectionTable {
        rows,
        metadata: setting.clone(),
        failures,
        flagged,
        outcomes,
    }
}
