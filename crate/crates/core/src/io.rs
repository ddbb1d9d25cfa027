//! Data ingestion, run configuration and report output for the command line.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::inference::{run_linear_test_on, GenChiSq, LambdaChoice, TestConfig, TestReport};
use crate::model::{CompositeDesign, Dataset, DEFAULT_THRESHOLDS};
use crate::penalty::{PenaltyFamily, PenaltySpec, DEFAULT_SCAD_A};
use crate::simulation::RejectionTable;
use crate::solver::{fit_constrained, fit_unconstrained, LinearHypothesis, Problem, SolverConfig};
use crate::tuning::{gic_score, lambda_grid, select_lambda, LambdaPath, TuningConfig};

/// Read a numeric CSV file; column `response_col` (0-based) becomes `y`
/// and the remaining columns form `X` in file order.
pub fn load_csv(path: impl AsRef<Path>, response_col: usize, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, response_col, has_header)
}

/// [`load_csv`] on any reader.
pub fn read_csv<R: Read>(reader: R, response_col: usize, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut width = header.as_ref().map(Vec::len);
    let mut cells: Vec<f64> = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::invalid(format!(
                "ragged row at line {line}: expected {w} fields, found {}",
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let place = || match &header {
                Some(h) => format!("line {line}, column {} (`{}`)", c + 1, h[c]),
                None => format!("line {line}, column {}", c + 1),
            };
            if cell.is_empty() {
                return Err(Error::invalid(format!("missing value at {}", place())));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::invalid(format!("non-numeric cell `{cell}` at {}", place())))?;
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite cell `{cell}` at {}", place())));
            }
            cells.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::invalid("file has no data rows"))?;
    if response_col >= width {
        return Err(Error::invalid(format!(
            "response column {response_col} out of range: the file has {width} columns (0-based)"
        )));
    }
    if width < 2 {
        return Err(Error::invalid("need a response column and at least one covariate"));
    }
    let at = |i: usize, j: usize| cells[i * width + j];
    let covariates: Vec<usize> = (0..width).filter(|&j| j != response_col).collect();
    let x = DMatrix::from_fn(rows, covariates.len(), |i, q| at(i, covariates[q]));
    let y = DVector::from_fn(rows, |i, _| at(i, response_col));
    let data = Dataset::new(x, y)?;
    match header {
        Some(h) => data.with_column_names(covariates.iter().map(|&j| h[j].clone()).collect()),
        None => Ok(data),
    }
}

/// User-facing hypothesis `C β_M = t` with 1-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    pub indices: Vec<usize>,
    /// Row-major.
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

impl HypothesisConfig {
    pub fn to_hypothesis(&self, p: usize) -> Result<LinearHypothesis> {
        let m = self.indices.len();
        if self.c.is_empty() {
            return Err(Error::invalid("C must have at least one row"));
        }
        if let Some(row) = self.c.iter().position(|r| r.len() != m) {
            return Err(Error::dims(format!(
                "row {} of C has {} entries but there are {m} indices",
                row + 1,
                self.c[row].len()
            )));
        }
        if let Some(&j) = self.indices.iter().find(|&&j| j == 0 || j > p) {
            return Err(Error::invalid(format!("hypothesis index {j} out of range 1..={p}")));
        }
        let c = DMatrix::from_fn(self.c.len(), m, |i, j| self.c[i][j]);
        LinearHypothesis::from_one_based(&self.indices, c, DVector::from_column_slice(&self.t), p)
    }
}

/// Parse `{"indices": [...], "C": [[...]], "t": [...]}` against `p`
/// covariates.
pub fn parse_hypothesis_config(text: &str, p: usize) -> Result<LinearHypothesis> {
    let config: HypothesisConfig = serde_json::from_str(text)?;
    config.to_hypothesis(p)
}

/// Composite weights across the threshold layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsMode {
    #[default]
    Equal,
    /// One positive weight per layer, summing to 1.
    Explicit(Vec<f64>),
}

/// Optional solver overrides; unset entries keep the solver defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub tol_cmd: Option<f64>,
    pub tol_lla: Option<f64>,
    pub tol_alm: Option<f64>,
    pub rho: Option<f64>,
    pub max_cmd_cycles: Option<usize>,
    pub max_lla_iters: Option<usize>,
    pub max_alm_iters: Option<usize>,
}

/// Everything a `fit` or `test` run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub thresholds: usize,
    pub weights: WeightsMode,
    pub penalty: PenaltyFamily,
    pub penalty_a: f64,
    pub lambda: LambdaChoice,
    pub path_len: usize,
    pub lambda_min_ratio: f64,
    pub early_stop: bool,
    pub alpha: f64,
    pub mc_draws: usize,
    pub seed: u64,
    /// Center and scale covariates before fitting; on by default for
    /// user data.
    pub standardize: bool,
    pub godambe: bool,
    pub tolerances: ToleranceOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        let test = TestConfig::default();
        Self {
            thresholds: DEFAULT_THRESHOLDS,
            weights: WeightsMode::Equal,
            penalty: PenaltyFamily::Scad,
            penalty_a: DEFAULT_SCAD_A,
            lambda: LambdaChoice::Auto,
            path_len: test.tuning.path_len,
            lambda_min_ratio: test.tuning.lambda_min_ratio,
            early_stop: test.tuning.early_stop,
            alpha: test.alpha,
            mc_draws: test.mc_draws,
            seed: test.seed,
            standardize: true,
            godambe: false,
            tolerances: ToleranceOverrides::default(),
        }
    }
}

impl RunConfig {
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let o = &self.tolerances;
        let config = SolverConfig {
            penalty: PenaltySpec::new(self.penalty, self.penalty_a, 0.0)?,
            rho: o.rho.unwrap_or(d.rho),
            tol_cmd: o.tol_cmd.unwrap_or(d.tol_cmd),
            tol_lla: o.tol_lla.unwrap_or(d.tol_lla),
            tol_alm: o.tol_alm.unwrap_or(d.tol_alm),
            max_cmd_cycles: o.max_cmd_cycles.unwrap_or(d.max_cmd_cycles),
            max_lla_iters: o.max_lla_iters.unwrap_or(d.max_lla_iters),
            max_alm_iters: o.max_alm_iters.unwrap_or(d.max_alm_iters),
            standardize: self.standardize,
            record_trace: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn test_config(&self) -> Result<TestConfig> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.path_len == 0 {
            return Err(Error::invalid("path length must be >= 1"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if let LambdaChoice::Fixed(l) = self.lambda {
            LambdaPath::single(l)?;
        }
        Ok(TestConfig {
            solver: self.solver_config()?,
            tuning: TuningConfig {
                path_len: self.path_len,
                lambda_min_ratio: self.lambda_min_ratio,
                early_stop: self.early_stop,
            },
            lambda: self.lambda,
            thresholds: self.thresholds,
            alpha: self.alpha,
            mc_draws: self.mc_draws,
            seed: self.seed,
            godambe: self.godambe,
        })
    }

    /// Dichotomized response with the configured weights.
    pub fn design(&self, y: &[f64]) -> Result<(CompositeDesign, Vec<String>)> {
        let (design, warnings) = CompositeDesign::from_response(y, self.thresholds).stage("dichotomize")?;
        match &self.weights {
            WeightsMode::Equal => Ok((design, warnings)),
            WeightsMode::Explicit(w) => {
                if w.len() != design.k() {
                    return Err(Error::dims(format!(
                        "{} explicit weights but the response supports {} threshold layers",
                        w.len(),
                        design.k()
                    )));
                }
                Ok((design.with_weights(w.clone())?, warnings))
            }
        }
    }
}

/// `auto` or a nonnegative number.
pub fn parse_lambda(s: &str) -> Result<LambdaChoice> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(LambdaChoice::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::invalid(format!("lambda must be `auto` or a number, got `{s}`")))?;
    LambdaPath::single(v)?;
    Ok(LambdaChoice::Fixed(v))
}

/// Full test on a dataset under a run configuration.
pub fn run_test(data: &Dataset, hyp: &LinearHypothesis, run: &RunConfig) -> Result<TestReport> {
    let config = run.test_config()?;
    let (design, warnings) = run.design(data.y.as_slice())?;
    run_linear_test_on(data, &design, hyp, &config, warnings)
}

/// Result of an estimation-only run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `true` when the fit obeys the supplied hypothesis.
    pub constrained: bool,
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// 1-based.
    pub active_set: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
    pub objective: f64,
    pub likelihood: f64,
    pub gic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_residual: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Penalized estimate (constrained when `hyp` is given), with λ chosen by
/// GIC unless fixed.
pub fn run_fit(data: &Dataset, hyp: Option<&LinearHypothesis>, run: &RunConfig) -> Result<FitReport> {
    let config = run.test_config()?;
    let (design, mut warnings) = run.design(data.y.as_slice())?;
    if let Some(h) = hyp {
        if h.indices().iter().any(|&j| j >= data.p()) {
            return Err(Error::invalid("hypothesis index exceeds the number of covariates"));
        }
    }
    let unpenalized = hyp.map_or(&[][..], |h| h.indices());
    let problem = Problem::with_standardization(&data.x, &design, unpenalized, config.solver.standardize)?;
    let fit = match config.lambda {
        LambdaChoice::Auto => {
            let path = lambda_grid(&problem, hyp, config.tuning.path_len, config.tuning.lambda_min_ratio, &config.solver)
                .stage("lambda grid")?;
            select_lambda(&problem, hyp, &path, &config.solver, config.tuning.early_stop)
                .stage("fit")?
                .best_fit
        }
        LambdaChoice::Fixed(l) => match hyp {
            Some(h) => fit_constrained(&problem, h, l, &config.solver, None),
            None => fit_unconstrained(&problem, l, &config.solver, None),
        }
        .stage("fit")?,
    };
    if !fit.converged {
        warnings.push("fit did not converge".into());
    }
    let names = data.column_names.clone();
    Ok(FitReport {
        constrained: hyp.is_some(),
        lambda: fit.lambda,
        gic: gic_score(&fit, data.n(), data.p(), fit.likelihood),
        beta: fit.coef.beta.clone(),
        intercepts: fit.coef.intercepts.clone(),
        thresholds: design.thresholds().to_vec(),
        active_set: fit.active_set.iter().map(|j| j + 1).collect(),
        active_names: names.as_ref().map(|n| fit.active_set.iter().map(|&j| n[j].clone()).collect()),
        column_names: names,
        objective: fit.objective,
        likelihood: fit.likelihood,
        constraint_residual: fit.constraint_residual,
        converged: fit.converged,
        warnings,
    })
}

/// Matrices for a standalone calibration, both `r × r`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileInput {
    pub psi: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileReport {
    pub quantile: f64,
    pub alpha: f64,
    pub mc_draws: usize,
    pub seed: u64,
    pub df: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 || rows.iter().any(|row| row.len() != r) {
        return Err(Error::dims(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

/// Monte-Carlo `(1−α)` quantile of `ZᵀT^{1/2}Ψ⁻¹T^{1/2}Z`, with the p-value
/// of `statistic` when supplied.
pub fn run_quantile(
    input: &QuantileInput,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
    statistic: Option<f64>,
) -> Result<QuantileReport> {
    let psi = square(&input.psi, "psi")?;
    let tau = square(&input.tau, "tau")?;
    if psi.nrows() != tau.nrows() {
        return Err(Error::dims("psi and tau must have the same size"));
    }
    // supplied matrices that are not positive definite are bad input here
    let a = crate::inference::shape_matrix(&psi, &tau).map_err(|e| Error::invalid(e.to_string()))?;
    let sampler = GenChiSq::sample(&a, mc_draws, seed)?;
    Ok(QuantileReport {
        quantile: sampler.quantile(alpha)?,
        alpha,
        mc_draws,
        seed,
        df: psi.nrows(),
        statistic,
        p_value: statistic.map(|s| sampler.p_value(s)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" | "txt" => Ok(Format::Text),
            other => Err(Error::invalid(format!("unknown output format `{other}`"))),
        }
    }
}

impl Format {
    /// Format implied by a file extension, if any.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension().and_then(|e| e.to_str()).and_then(|e| e.parse().ok())
    }
}

/// Anything the command line can print.
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Test(&'a TestReport),
    Table(&'a RejectionTable),
    Fit(&'a FitReport),
    Quantile(&'a QuantileReport),
}

/// Deterministic serialization of a report.
pub fn emit_report(report: Report<'_>, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = match report {
                Report::Test(r) => serde_json::to_string_pretty(r),
                Report::Table(r) => serde_json::to_string_pretty(r),
                Report::Fit(r) => serde_json::to_string_pretty(r),
                Report::Quantile(r) => serde_json::to_string_pretty(r),
            }
            .expect("report types serialize to JSON");
            s.push('\n');
            s
        }
        Format::Csv => match report {
            Report::Test(r) => test_csv(r),
            Report::Table(r) => table_csv(r),
            Report::Fit(r) => fit_csv(r),
            Report::Quantile(r) => quantile_csv(r),
        },
        Format::Text => match report {
            Report::Test(r) => test_text(r),
            Report::Table(r) => table_text(r),
            Report::Fit(r) => fit_text(r),
            Report::Quantile(r) => quantile_text(r),
        },
    }
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).expect("writing CSV to memory");
    String::from_utf8(w.into_inner().expect("flushing CSV to memory")).expect("CSV output is UTF-8")
}

fn test_csv(r: &TestReport) -> String {
    csv_string(|w| {
        w.write_record(["statistic", "value", "p_value", "reject", "critical_value"])?;
        let q = r.quantile.to_string();
        for (name, v, p, d) in [
            ("T_L", r.t_l, r.p_values.t_l, r.decisions.t_l),
            ("T_W", r.t_w, r.p_values.t_w, r.decisions.t_w),
            ("T_S", r.t_s, r.p_values.t_s, r.decisions.t_s),
        ] {
            w.write_record([name, &v.to_string(), &p.to_string(), &d.to_string(), &q])?;
        }
        if let Some(g) = &r.godambe {
            let q = g.quantile.to_string();
            w.write_record(["godambe_wald", &g.wald.to_string(), &g.wald_p_value.to_string(), &g.wald_reject.to_string(), &q])?;
            w.write_record(["godambe_score", &g.score.to_string(), &g.score_p_value.to_string(), &g.score_reject.to_string(), &q])?;
        }
        Ok(())
    })
}

fn table_csv(t: &RejectionTable) -> String {
    csv_string(|w| {
        for row in &t.rows {
            w.serialize(row)?;
        }
        Ok(())
    })
}

fn fit_csv(r: &FitReport) -> String {
    csv_string(|w| {
        w.write_record(["term", "estimate"])?;
        for (j, b) in r.beta.iter().enumerate() {
            let name = r.column_names.as_ref().map_or_else(|| format!("beta{}", j + 1), |n| n[j].clone());
            w.write_record([name, b.to_string()])?;
        }
        for (k, b) in r.intercepts.iter().enumerate() {
            w.write_record([format!("intercept{}", k + 1), b.to_string()])?;
        }
        Ok(())
    })
}

fn quantile_csv(r: &QuantileReport) -> String {
    csv_string(|w| {
        w.write_record(["quantile", "alpha", "mc_draws", "seed", "df", "statistic", "p_value"])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        w.write_record([
            r.quantile.to_string(),
            r.alpha.to_string(),
            r.mc_draws.to_string(),
            r.seed.to_string(),
            r.df.to_string(),
            opt(r.statistic),
            opt(r.p_value),
        ])
    })
}

fn join(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(usize::to_string).collect();
    format!("{{{}}}", parts.join(", "))
}

fn test_text(r: &TestReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14}{:>14}{:>12}  reject", "statistic", "value", "p-value");
    for (name, v, p, d) in [
        ("T_L", r.t_l, r.p_values.t_l, r.decisions.t_l),
        ("T_W", r.t_w, r.p_values.t_w, r.decisions.t_w),
        ("T_S", r.t_s, r.p_values.t_s, r.decisions.t_s),
    ] {
        let _ = writeln!(s, "{name:<14}{v:>14.4}{p:>12.4}  {}", if d { "yes" } else { "no" });
    }
    if let Some(g) = &r.godambe {
        for (name, v, p, d) in [
            ("godambe_wald", g.wald, g.wald_p_value, g.wald_reject),
            ("godambe_score", g.score, g.score_p_value, g.score_reject),
        ] {
            let _ = writeln!(s, "{name:<14}{v:>14.4}{p:>12.4}  {}", if d { "yes" } else { "no" });
        }
    }
    let _ = writeln!(
        s,
        "critical value {:.4} at alpha {} ({} Monte-Carlo draws, seed {})",
        r.quantile, r.alpha, r.mc_draws, r.seeds.mc_seed
    );
    let _ = writeln!(s, "constraints r = {}, thresholds K = {}", r.df, r.thresholds_used);
    let _ = writeln!(
        s,
        "lambda: unconstrained {:.6}, constrained {:.6}",
        r.lambda.unconstrained, r.lambda.constrained
    );
    match &r.column_names {
        Some(n) => {
            let _ = writeln!(s, "active (unconstrained): {}", n.unconstrained.join(", "));
            let _ = writeln!(s, "active (constrained): {}", n.constrained.join(", "));
        }
        None => {
            let _ = writeln!(s, "active (unconstrained): {}", join(&r.active_sets.unconstrained));
            let _ = writeln!(s, "active (constrained): {}", join(&r.active_sets.constrained));
        }
    }
    if !r.converged {
        let _ = writeln!(s, "warning: a fit did not converge");
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

/// Statistics down, `h1` across, cells as `rate(se)`.
fn table_text(t: &RejectionTable) -> String {
    let mut h1s: Vec<f64> = Vec::new();
    let mut stats: Vec<&str> = Vec::new();
    for row in &t.rows {
        if !h1s.contains(&row.h1) {
            h1s.push(row.h1);
        }
        if !stats.contains(&row.statistic.as_str()) {
            stats.push(&row.statistic);
        }
    }
    let m = &t.metadata;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "n = {}, p = {}, rho = {}, g = {}, hypothesis ({}), alpha = {}, replicates = {}, seed = {}",
        m.n,
        m.p,
        m.rho_corr,
        m.g_id,
        m.hypothesis_id,
        m.alpha,
        m.replicates,
        m.seed
    );
    let _ = write!(s, "{:<14}", "statistic");
    for h in &h1s {
        let _ = write!(s, "{:>16}", format!("h1={h}"));
    }
    s.push('\n');
    for stat in stats {
        let _ = write!(s, "{stat:<14}");
        for &h in &h1s {
            let cell = t
                .rows
                .iter()
                .find(|r| r.h1 == h && r.statistic == stat)
                .map_or_else(|| "-".to_string(), |r| r.formatted());
            let _ = write!(s, "{cell:>16}");
        }
        s.push('\n');
    }
    if t.failures > 0 {
        let _ = writeln!(s, "failed replicates: {}{}", t.failures, if t.flagged { " (more than 5%)" } else { "" });
    }
    s
}

fn fit_text(r: &FitReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} fit at lambda {:.6}; objective {:.6}, M_n {:.6}, GIC {:.4}",
        if r.constrained { "constrained" } else { "unconstrained" },
        r.lambda,
        r.objective,
        r.likelihood,
        r.gic
    );
    if let Some(res) = r.constraint_residual {
        let _ = writeln!(s, "constraint residual {res:e}");
    }
    let _ = writeln!(s, "nonzero coefficients:");
    for &j in &r.active_set {
        let name = r.column_names.as_ref().map_or_else(|| format!("beta{j}"), |n| n[j - 1].clone());
        let _ = writeln!(s, "  {name:<20}{:>14.6}", r.beta[j - 1]);
    }
    let _ = writeln!(s, "intercepts:");
    for (b, th) in r.intercepts.iter().zip(&r.thresholds) {
        let _ = writeln!(s, "  threshold {th:<14.6}{b:>14.6}");
    }
    if !r.converged {
        let _ = writeln!(s, "warning: the fit did not converge");
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn quantile_text(r: &QuantileReport) -> String {
    let mut s = format!(
        "quantile {:.6} at alpha {} (r = {}, {} draws, seed {})\n",
        r.quantile, r.alpha, r.df, r.mc_draws, r.seed
    );
    if let (Some(x), Some(p)) = (r.statistic, r.p_value) {
        let _ = writeln!(s, "statistic {x:.6}: p-value {p:.6}");
    }
    s
}
