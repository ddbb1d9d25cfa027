//! λ paths and GIC model selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CoefVector;
use crate::solver::cmd::{cmd_solve, CmdState};
use crate::solver::{fit_constrained, fit_unconstrained, AlmStart, FitResult, LinearHypothesis, Problem, SolverConfig};

pub const DEFAULT_PATH_LEN: usize = 50;
pub const DEFAULT_LAMBDA_MIN_RATIO: f64 = 0.01;
/// Relative GIC difference below which two fits count as tied.
pub const GIC_TIE_TOL: f64 = 1e-10;

/// Log-spaced, strictly decreasing penalty levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub values: Vec<f64>,
}

impl LambdaPath {
    /// `count` log-spaced values from `max` down to `ratio·max`.
    pub fn log_spaced(max: f64, ratio: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("path length must be >= 1"));
        }
        if !(max > 0.0) || !max.is_finite() {
            return Err(Error::invalid(format!("lambda_max must be positive, got {max}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid(format!("lambda_min ratio must lie in (0, 1), got {ratio}")));
        }
        if count == 1 {
            return Ok(Self { values: vec![max] });
        }
        let (hi, lo) = (max.ln(), (max * ratio).ln());
        let step = (hi - lo) / (count - 1) as f64;
        let values = (0..count)
            .map(|i| if i + 1 == count { max * ratio } else { (hi - step * i as f64).exp() })
            .collect();
        Ok(Self { values })
    }

    /// A single user-supplied level.
    pub fn single(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { values: vec![lambda] })
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Relative headroom of the top of a λ grid over [`lambda_max`]. At exactly
/// `lambda_max` the maximizing coordinate sits on the KKT boundary and the
/// solver's finite tolerance can let it in with a vanishing coefficient.
pub const LAMBDA_MAX_HEADROOM: f64 = 1e-3;

fn tight(config: &SolverConfig) -> SolverConfig {
    SolverConfig {
        tol_cmd: config.tol_cmd.min(1e-10),
        tol_alm: config.tol_alm.min(1e-9),
        max_cmd_cycles: config.max_cmd_cycles.max(10_000),
        ..config.clone()
    }
}

/// Fit with every penalized coordinate held at zero: `β_M` and the
/// intercepts are estimated without penalty. Internal scale.
pub fn null_fit(problem: &Problem<'_>, config: &SolverConfig) -> Result<CoefVector> {
    let omega: Vec<f64> = (0..problem.p())
        .map(|j| if problem.is_penalized(j) { f64::INFINITY } else { 0.0 })
        .collect();
    let init = CoefVector::zeros(problem.p(), problem.k());
    let out = cmd_solve(problem, &init, &omega, None, &tight(config))?;
    Ok(out.coef)
}

fn max_penalized_gradient(problem: &Problem<'_>, internal: &CoefVector) -> Result<f64> {
    let state = CmdState::new(problem, internal, None)?;
    Ok((0..problem.p())
        .filter(|&j| problem.is_penalized(j))
        .map(|j| state.gradient(j).abs())
        .fold(0.0, f64::max))
}

/// Smallest λ at which the first (ℓ1) LLA step keeps every penalized
/// coefficient at zero: `max_{j∉M} |(1/n) score_j|` at [`null_fit`].
pub fn lambda_max(problem: &Problem<'_>, config: &SolverConfig) -> Result<f64> {
    let null = null_fit(problem, config)?;
    let max = max_penalized_gradient(problem, &null)?;
    if !(max > 0.0) {
        return Err(Error::NoSignal);
    }
    Ok(max)
}

/// [`lambda_max`] of the constrained problem: the same bound at the null
/// fit whose `β_M` satisfies the hypothesis.
pub fn lambda_max_constrained(problem: &Problem<'_>, hypothesis: &LinearHypothesis, config: &SolverConfig) -> Result<f64> {
    let free = lambda_max(problem, config)?;
    // far above either bound, so no penalized coordinate can enter
    let fit = fit_constrained(problem, hypothesis, 1e6 * (1.0 + free), &tight(config), None)?;
    if fit.coef.beta.iter().enumerate().any(|(j, &b)| problem.is_penalized(j) && b != 0.0) {
        return Err(Error::Numerical("constrained null fit has a nonzero penalized coefficient".into()));
    }
    let max = max_penalized_gradient(problem, &problem.to_internal(&fit.coef))?;
    if !(max > 0.0) {
        return Err(Error::NoSignal);
    }
    Ok(max)
}

/// `count` levels from the top bound down to `ratio` times it. The top is
/// [`lambda_max`] (or the larger of the unconstrained and constrained
/// bounds when a hypothesis is given) raised by [`LAMBDA_MAX_HEADROOM`], so
/// every path starts from the empty penalized model.
pub fn lambda_grid(
    problem: &Problem<'_>,
    hypothesis: Option<&LinearHypothesis>,
    count: usize,
    ratio: f64,
    config: &SolverConfig,
) -> Result<LambdaPath> {
    if count < 2 {
        return Err(Error::invalid("a lambda grid needs at least 2 points"));
    }
    let mut top = lambda_max(problem, config)?;
    if let Some(h) = hypothesis {
        top = top.max(lambda_max_constrained(problem, h, config)?);
    }
    LambdaPath::log_spaced(top * (1.0 + LAMBDA_MAX_HEADROOM), ratio, count)
}

/// `c_n = max{log n, log(log n)·log p}`.
pub fn gic_weight(n: usize, p: usize) -> f64 {
    let ln = (n as f64).ln();
    ln.max(ln.ln() * (p as f64).ln())
}

/// `−n·M_n + c_n·‖β‖₀`, counting every nonzero slope including `M`.
pub fn gic_score(fit: &FitResult, n: usize, p: usize, m_n: f64) -> f64 {
    -(n as f64) * m_n + gic_weight(n, p) * fit.coef.nonzero_count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub path_len: usize,
    pub lambda_min_ratio: f64,
    /// Stop descending the path once `c_n‖β‖₀` alone exceeds the best GIC
    /// so far.
    pub early_stop: bool,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            path_len: DEFAULT_PATH_LEN,
            lambda_min_ratio: DEFAULT_LAMBDA_MIN_RATIO,
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub best_lambda: f64,
    pub best_fit: FitResult,
    /// GIC at each evaluated λ, in path order; `+∞` marks a failed fit.
    pub criterion_values: Vec<f64>,
    /// The evaluated prefix of the path (shorter than the path only after an
    /// early stop).
    pub lambdas: Vec<f64>,
}

/// Fit every λ of `path` in order, warm-starting each fit from the previous
/// one, and keep the GIC minimizer. Ties (within [`GIC_TIE_TOL`]) go to the
/// larger λ.
///
/// With a hypothesis the constrained estimator is fitted; otherwise the
/// unconstrained one. Either way the problem's unpenalized set is left
/// unpenalized.
pub fn select_lambda(
    problem: &Problem<'_>,
    hypothesis: Option<&LinearHypothesis>,
    path: &LambdaPath,
    config: &SolverConfig,
    early_stop: bool,
) -> Result<SelectionResult> {
    if path.values.is_empty() {
        return Err(Error::invalid("empty lambda path"));
    }
    let (n, p) = (problem.n(), problem.p());
    let c_n = gic_weight(n, p);
    let mut best: Option<(f64, FitResult)> = None;
    let mut criterion_values = Vec::with_capacity(path.count());
    let mut lambdas = Vec::with_capacity(path.count());
    let mut prev: Option<FitResult> = None;
    let mut last_error = None;
    for &lambda in &path.values {
        let fit = match hypothesis {
            Some(h) => fit_constrained(
                problem,
                h,
                lambda,
                config,
                prev.as_ref().map(|f| AlmStart {
                    coef: &f.coef,
                    dual: Some(&f.dual),
                }),
            ),
            None => fit_unconstrained(problem, lambda, config, prev.as_ref().map(|f| &f.coef)),
        };
        lambdas.push(lambda);
        let fit = match fit {
            Ok(f) => f,
            Err(e) if e.is_numerical() => {
                log::warn!("fit at lambda {lambda:e} failed: {e}");
                criterion_values.push(f64::INFINITY);
                last_error = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let gic = gic_score(&fit, n, p, fit.likelihood);
        criterion_values.push(gic);
        let floor = c_n * fit.coef.nonzero_count() as f64;
        if best.as_ref().is_none_or(|(b, _)| gic < *b - GIC_TIE_TOL * b.abs().max(1.0)) {
            best = Some((gic, fit.clone()));
        }
        prev = Some(fit);
        if early_stop && best.as_ref().is_some_and(|(b, _)| floor > *b) {
            break;
        }
    }
    match best {
        Some((_, best_fit)) => Ok(SelectionResult {
            best_lambda: best_fit.lambda,
            best_fit,
            criterion_values,
            lambdas,
        }),
        None => Err(last_error.unwrap_or_else(|| Error::Numerical("every fit on the path failed".into()))),
    }
}
