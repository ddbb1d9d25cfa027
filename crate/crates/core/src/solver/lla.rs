//! Local linear approximation of the folded-concave penalty.

use crate::error::{Error, Result};
use crate::model::CoefVector;

use super::cmd::cmd_solve;
use super::{max_abs_change, Augmentation, FitResult, Iterations, Problem, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LlaOutcome {
    /// Internal-scale coefficients.
    pub coef: CoefVector,
    pub likelihood: f64,
    pub lla_iters: usize,
    pub cmd_cycles: usize,
    pub converged: bool,
    /// Penalized objective (with augmentation terms) after each iteration.
    pub trace: Vec<f64>,
    /// Per-cycle CMD objectives, concatenated, when tracing is on.
    pub cmd_traces: Vec<Vec<f64>>,
}

/// Iterate `ω ← p′λ(|β|)` and a CMD solve from `init` (internal scale) until
/// the coefficients move by at most `tol_lla` or the weights repeat.
pub fn lla_solve(
    problem: &Problem<'_>,
    aug: Option<&Augmentation<'_>>,
    config: &SolverConfig,
    init: &CoefVector,
) -> Result<LlaOutcome> {
    config.validate()?;
    let spec = config.penalty;
    let mut coef = init.clone();
    let mut omega = problem.lla_weights(&spec, &coef.beta);
    let mut out = LlaOutcome {
        coef: coef.clone(),
        likelihood: f64::NAN,
        lla_iters: 0,
        cmd_cycles: 0,
        converged: false,
        trace: Vec::new(),
        cmd_traces: Vec::new(),
    };
    for it in 1..=config.max_lla_iters {
        let cmd = cmd_solve(problem, &coef, &omega, aug, config)?;
        out.lla_iters = it;
        out.cmd_cycles += cmd.cycles;
        let change = max_abs_change(&coef, &cmd.coef);
        coef = cmd.coef;
        out.likelihood = cmd.likelihood;
        if config.record_trace {
            let mut value = -cmd.likelihood + problem.penalty_total(&spec, &coef.beta);
            if let Some(a) = aug {
                value += a.penalty(&coef.beta);
            }
            out.trace.push(value);
            out.cmd_traces.push(cmd.trace);
        }
        let next = problem.lla_weights(&spec, &coef.beta);
        let settled = change <= config.tol_lla || next == omega;
        omega = next;
        if settled {
            out.converged = cmd.converged;
            break;
        }
    }
    if !out.likelihood.is_finite() {
        return Err(Error::Numerical("non-finite likelihood after LLA".into()));
    }
    out.coef = coef;
    Ok(out)
}

/// Partial penalized estimator without the constraint: the penalty applies to
/// every coordinate outside the problem's unpenalized set. `init` is on the
/// original scale; zeros are used when absent.
pub fn fit_unconstrained(
    problem: &Problem<'_>,
    lambda: f64,
    config: &SolverConfig,
    init: Option<&CoefVector>,
) -> Result<FitResult> {
    let config = SolverConfig {
        penalty: config.penalty.with_lambda(lambda),
        ..*config
    };
    config.validate()?;
    let start = match init {
        Some(c) => problem.to_internal(c),
        None => CoefVector::zeros(problem.p(), problem.k()),
    };
    let out = lla_solve(problem, None, &config, &start)?;
    let objective = -out.likelihood + problem.penalty_total(&config.penalty, &out.coef.beta);
    let coef = problem.to_external(&out.coef);
    Ok(FitResult {
        active_set: problem.active_set(&coef.beta),
        coef,
        objective,
        likelihood: out.likelihood,
        lambda,
        dual: Vec::new(),
        constraint_residual: None,
        iterations: Iterations {
            cmd_cycles: out.cmd_cycles,
            lla_iters: out.lla_iters,
            alm_iters: 0,
        },
        converged: out.converged,
    })
}
