//! Partial penalized likelihood-ratio, Wald and score tests of `H₀: Cβ_M = t`.

pub mod gchisq;
pub mod plugin;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result, StageExt};
use crate::model::{composite_score, CompositeDesign, Dataset, DEFAULT_THRESHOLDS};
use crate::solver::{FitResult, LinearHypothesis, Problem, SolverConfig};
use crate::tuning::{lambda_grid, select_lambda, LambdaPath, TuningConfig};

pub use gchisq::{gen_chisq_quantile, shape_matrix, GenChiSq, DEFAULT_MC_DRAWS};
pub use plugin::{sensitivity_matrix, variability_matrix, BlockOrder, PluginMatrices};

use plugin::{cholesky, embed_constraint};

/// `d = Cβ_M − t`.
fn constraint_gap(fit: &FitResult, hyp: &LinearHypothesis) -> DVector<f64> {
    hyp.residual(&fit.coef.beta)
}

/// `n dᵀ Ψ̂⁻¹ d` with `d = Cβ̂_{a,M} − t`.
pub fn wald_statistic(fit_a: &FitResult, hyp: &LinearHypothesis, plugins: &PluginMatrices, n: usize) -> Result<f64> {
    let d = constraint_gap(fit_a, hyp);
    let chol = cholesky(&plugins.psi_hat, "psi")?;
    Ok((n as f64 * d.dot(&chol.solve(&d))).max(0.0))
}

/// Composite score at `fit_0` in block order `[M; Ŝ₀; intercepts]`, the
/// gradient of `n·M_n`.
pub fn block_score(
    fit_0: &FitResult,
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    order: &BlockOrder,
) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(composite_score(design, x, &fit_0.coef, &order.columns)?))
}

/// `(1/n) Sᵀ K̂₀⁻¹ S` with `S` and `K̂₀` at the constrained estimate and its
/// active set `Ŝ₀`.
pub fn score_statistic(
    fit_0: &FitResult,
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    hyp: &LinearHypothesis,
) -> Result<f64> {
    let order = BlockOrder::new(hyp.indices(), &fit_0.active_set, design.k())?;
    let s = block_score(fit_0, design, x, &order)?;
    let k0 = sensitivity_matrix(design, x, &fit_0.coef, &order)?;
    let chol = cholesky(&k0, "null sensitivity matrix")?;
    Ok((s.dot(&chol.solve(&s)) / design.n() as f64).max(0.0))
}

/// `2n(M_n(𝓑̂ₐ) − M_n(𝓑̂₀))`, clamped at 0.
pub fn lr_statistic(fit_a: &FitResult, fit_0: &FitResult, n: usize) -> f64 {
    let t = 2.0 * n as f64 * (fit_a.likelihood - fit_0.likelihood);
    if t < -1e-8 * n as f64 {
        log::debug!("likelihood ratio {t:e} is negative beyond rounding; clamped at 0");
    }
    t.max(0.0)
}

/// Sandwich Wald statistic `n dᵀ T̂⁻¹ d`, referred to `χ²_r`.
pub fn godambe_wald(fit_a: &FitResult, hyp: &LinearHypothesis, plugins: &PluginMatrices, n: usize) -> Result<f64> {
    let d = constraint_gap(fit_a, hyp);
    let chol = cholesky(&plugins.tau_hat, "tau")?;
    Ok((n as f64 * d.dot(&chol.solve(&d))).max(0.0))
}

/// Sandwich score statistic
/// `(1/n) Sᵀ K̂₀⁻¹E (Eᵀ K̂₀⁻¹ V̂₀ K̂₀⁻¹ E)⁻¹ Eᵀ K̂₀⁻¹ S`, referred to `χ²_r`.
pub fn godambe_score(
    fit_0: &FitResult,
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    hyp: &LinearHypothesis,
) -> Result<f64> {
    let order = BlockOrder::new(hyp.indices(), &fit_0.active_set, design.k())?;
    let s = block_score(fit_0, design, x, &order)?;
    let k0 = sensitivity_matrix(design, x, &fit_0.coef, &order)?;
    let v0 = variability_matrix(design, x, &fit_0.coef, &order)?;
    let chol = cholesky(&k0, "null sensitivity matrix")?;
    let e = embed_constraint(hyp, order.dim());
    let g = chol.solve(&e);
    let mid = g.transpose() * &v0 * &g;
    let mid = (&mid + mid.transpose()) * 0.5;
    let u = g.transpose() * &s;
    let mid_chol = cholesky(&mid, "null sandwich")?;
    Ok((u.dot(&mid_chol.solve(&u)) / design.n() as f64).max(0.0))
}

/// Penalty level used for a test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaChoice {
    /// GIC over a data-driven path.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub solver: SolverConfig,
    pub tuning: TuningConfig,
    pub lambda: LambdaChoice,
    pub thresholds: usize,
    pub alpha: f64,
    pub mc_draws: usize,
    pub seed: u64,
    /// Also compute the sandwich-information statistics.
    pub godambe: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            tuning: TuningConfig::default(),
            lambda: LambdaChoice::Auto,
            thresholds: DEFAULT_THRESHOLDS,
            alpha: 0.05,
            mc_draws: DEFAULT_MC_DRAWS,
            seed: 0,
            godambe: false,
        }
    }
}

/// One value per statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerStatistic<T> {
    #[serde(rename = "T_L")]
    pub t_l: T,
    #[serde(rename = "T_W")]
    pub t_w: T,
    #[serde(rename = "T_S")]
    pub t_s: T,
}

/// 1-based active sets of the two fits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSets {
    pub unconstrained: Vec<usize>,
    pub constrained: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedLambdas {
    pub unconstrained: f64,
    pub constrained: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub mc_seed: u64,
}

/// Sandwich statistics and their `χ²_r` calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GodambeReport {
    pub wald: f64,
    pub score: f64,
    pub df: usize,
    pub quantile: f64,
    pub wald_p_value: f64,
    pub score_p_value: f64,
    pub wald_reject: bool,
    pub score_reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    #[serde(rename = "T_L")]
    pub t_l: f64,
    #[serde(rename = "T_W")]
    pub t_w: f64,
    #[serde(rename = "T_S")]
    pub t_s: f64,
    /// Monte-Carlo `(1−α)` quantile of the generalized chi-squared null.
    pub quantile: f64,
    pub p_values: PerStatistic<f64>,
    pub decisions: PerStatistic<bool>,
    pub alpha: f64,
    pub mc_draws: usize,
    pub active_sets: ActiveSets,
    pub seeds: SeedRecord,
    pub lambda: SelectedLambdas,
    /// Number of constraints `r`.
    pub df: usize,
    pub thresholds_used: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<ActiveSetNames>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub godambe: Option<GodambeReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSetNames {
    pub unconstrained: Vec<String>,
    pub constrained: Vec<String>,
}

/// Both fitted estimators behind a test.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPair {
    pub unconstrained: FitResult,
    pub constrained: FitResult,
}

/// Select and fit `𝓑̂ₐ` and `𝓑̂₀` on one problem; both selections share one
/// λ path.
pub fn fit_pair(problem: &Problem<'_>, hyp: &LinearHypothesis, config: &TestConfig) -> Result<FittedPair> {
    let path = match config.lambda {
        LambdaChoice::Auto => lambda_grid(problem, Some(hyp), config.tuning.path_len, config.tuning.lambda_min_ratio, &config.solver)
            .stage("lambda grid")?,
        LambdaChoice::Fixed(l) => LambdaPath::single(l)?,
    };
    let early = config.tuning.early_stop;
    let a = select_lambda(problem, None, &path, &config.solver, early).stage("unconstrained fit")?;
    let c = select_lambda(problem, Some(hyp), &path, &config.solver, early).stage("constrained fit")?;
    Ok(FittedPair {
        unconstrained: a.best_fit,
        constrained: c.best_fit,
    })
}

/// The full testing procedure on `(X, y)`.
pub fn run_linear_test(dataset: &Dataset, hyp: &LinearHypothesis, config: &TestConfig) -> Result<TestReport> {
    let (design, warnings) =
        CompositeDesign::from_response(dataset.y.as_slice(), config.thresholds).stage("dichotomize")?;
    run_linear_test_on(dataset, &design, hyp, config, warnings)
}

/// [`run_linear_test`] on an already dichotomized response (for example one
/// carrying explicit composite weights).
pub fn run_linear_test_on(
    dataset: &Dataset,
    design: &CompositeDesign,
    hyp: &LinearHypothesis,
    config: &TestConfig,
    warnings: Vec<String>,
) -> Result<TestReport> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    if hyp.indices().iter().any(|&j| j >= dataset.p()) {
        return Err(Error::invalid("hypothesis index exceeds the number of covariates"));
    }
    if design.n() != dataset.n() {
        return Err(Error::dims(format!("design has {} rows, data has {}", design.n(), dataset.n())));
    }
    let problem = Problem::for_hypothesis(&dataset.x, design, hyp, config.solver.standardize)?;
    let fits = fit_pair(&problem, hyp, config)?;
    test_from_fits(dataset, design, hyp, &fits, config, warnings)
}

/// Statistics, calibration and decisions from already fitted estimators.
pub fn test_from_fits(
    dataset: &Dataset,
    design: &CompositeDesign,
    hyp: &LinearHypothesis,
    fits: &FittedPair,
    config: &TestConfig,
    warnings: Vec<String>,
) -> Result<TestReport> {
    let (x, n) = (&dataset.x, dataset.n());
    let fit_a = &fits.unconstrained;
    let fit_0 = &fits.constrained;
    let plugins = PluginMatrices::at(design, x, &fit_a.coef, &fit_a.active_set, hyp).stage("plug-in matrices")?;
    let t_w = wald_statistic(fit_a, hyp, &plugins, n).stage("wald statistic")?;
    let t_s = score_statistic(fit_0, design, x, hyp).stage("score statistic")?;
    let t_l = lr_statistic(fit_a, fit_0, n);
    let (quantile, sampler) =
        gen_chisq_quantile(&plugins.psi_hat, &plugins.tau_hat, config.alpha, config.mc_draws, config.seed)
            .stage("generalized chi-squared calibration")?;
    let godambe = if config.godambe {
        let wald = godambe_wald(fit_a, hyp, &plugins, n).stage("godambe wald")?;
        let score = godambe_score(fit_0, design, x, hyp).stage("godambe score")?;
        let chi = ChiSquared::new(hyp.r() as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        let q = chi.inverse_cdf(1.0 - config.alpha);
        Some(GodambeReport {
            wald,
            score,
            df: hyp.r(),
            quantile: q,
            wald_p_value: chi.sf(wald),
            score_p_value: chi.sf(score),
            wald_reject: wald > q,
            score_reject: score > q,
        })
    } else {
        None
    };
    let one_based = |s: &[usize]| s.iter().map(|j| j + 1).collect::<Vec<_>>();
    let column_names = dataset.column_names.as_ref().map(|names| ActiveSetNames {
        unconstrained: fit_a.active_set.iter().map(|&j| names[j].clone()).collect(),
        constrained: fit_0.active_set.iter().map(|&j| names[j].clone()).collect(),
    });
    let mut warnings = warnings;
    if !fit_a.converged {
        warnings.push("unconstrained fit did not converge".into());
    }
    if !fit_0.converged {
        warnings.push("constrained fit did not converge".into());
    }
    Ok(TestReport {
        t_l,
        t_w,
        t_s,
        quantile,
        p_values: PerStatistic {
            t_l: sampler.p_value(t_l),
            t_w: sampler.p_value(t_w),
            t_s: sampler.p_value(t_s),
        },
        decisions: PerStatistic {
            t_l: t_l > quantile,
            t_w: t_w > quantile,
            t_s: t_s > quantile,
        },
        alpha: config.alpha,
        mc_draws: config.mc_draws,
        active_sets: ActiveSets {
            unconstrained: one_based(&fit_a.active_set),
            constrained: one_based(&fit_0.active_set),
        },
        seeds: SeedRecord { mc_seed: config.seed },
        lambda: SelectedLambdas {
            unconstrained: fit_a.lambda,
            constrained: fit_0.lambda,
        },
        df: hyp.r(),
        thresholds_used: design.k(),
        converged: fit_a.converged && fit_0.converged,
        column_names,
        godambe,
        warnings,
    })
}
