//! Method of multipliers for `Cβ_M = t`.

use crate::error::{Error, Result};
use crate::model::CoefVector;

use super::lla::lla_solve;
use super::{max_abs_change, Augmentation, FitResult, Iterations, LinearHypothesis, Problem, SolverConfig};

/// Warm start for a constrained fit: original-scale coefficients and dual.
#[derive(Debug, Clone, Copy)]
pub struct AlmStart<'s> {
    pub coef: &'s CoefVector,
    pub dual: Option<&'s [f64]>,
}

/// Constrained partial penalized estimator.
///
/// Alternates a primal LLA solve of the augmented Lagrangian with the dual
/// step `v ← v + ρ(Cβ_M − t)`. Stops once `‖Cβ_M − t‖∞ ≤ tol_alm` and the
/// primal iterate moved by at most `√tol_alm`.
pub fn fit_constrained(
    problem: &Problem<'_>,
    hypothesis: &LinearHypothesis,
    lambda: f64,
    config: &SolverConfig,
    start: Option<AlmStart<'_>>,
) -> Result<FitResult> {
    let config = SolverConfig {
        penalty: config.penalty.with_lambda(lambda),
        ..*config
    };
    config.validate()?;
    let hyp = problem.internal_hypothesis(hypothesis)?;
    let mut coef = match start {
        Some(s) => problem.to_internal(s.coef),
        None => CoefVector::zeros(problem.p(), problem.k()),
    };
    let mut dual = match start.and_then(|s| s.dual) {
        Some(v) if v.len() == hyp.r() => v.to_vec(),
        Some(v) => {
            return Err(Error::dims(format!("dual has {} entries for {} constraints", v.len(), hyp.r())));
        }
        None => vec![0.0; hyp.r()],
    };
    let primal_tol = config.tol_alm.sqrt();
    let mut iters = Iterations::default();
    let mut converged = false;
    let mut likelihood = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=config.max_alm_iters {
        let aug = Augmentation {
            hypothesis: &hyp,
            dual: &dual,
            rho: config.rho,
        };
        let out = lla_solve(problem, Some(&aug), &config, &coef)?;
        iters.alm_iters = it;
        iters.lla_iters += out.lla_iters;
        iters.cmd_cycles += out.cmd_cycles;
        let change = max_abs_change(&coef, &out.coef);
        coef = out.coef;
        likelihood = out.likelihood;
        let res = hyp.residual(&coef.beta);
        residual = res.amax();
        for (v, r) in dual.iter_mut().zip(res.iter()) {
            *v += config.rho * r;
        }
        if residual <= config.tol_alm && change <= primal_tol {
            converged = out.converged;
            break;
        }
    }
    if !converged {
        log::debug!("ALM stopped after {} iterations, residual {residual:e}", iters.alm_iters);
    }
    let objective = -likelihood + problem.penalty_total(&config.penalty, &coef.beta);
    let coef = problem.to_external(&coef);
    Ok(FitResult {
        active_set: problem.active_set(&coef.beta),
        constraint_residual: Some(hypothesis.residual(&coef.beta).amax()),
        coef,
        objective,
        likelihood,
        lambda,
        dual,
        iterations: iters,
        converged,
    })
}
