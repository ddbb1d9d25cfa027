//! Coordinate majorization descent for the weighted-ℓ1 composite probit
//! problem
//!
//! ```text
//! (1/n) Σ_k w_k Σ_i L(r_ki) + Σ_{j∉M} ω_j |β_j| [+ vᵀ(Cβ_M − t) + ρ/2 ‖Cβ_M − t‖²]
//! ```
//!
//! Since `0 < L″ < 1` and `Σ_k w_k = 1`, each coordinate sees a quadratic
//! majorizer with curvature `(1/n) Σ_i x_ij²` (plus `ρ‖C_j‖²` on `M`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::CoefVector;
use crate::probit::{probit_loss, probit_loss_grad};

use super::{soft_threshold, Augmentation, Problem, SolverConfig};

#[derive(Debug, Clone)]
struct Slack {
    /// Internal-scale `C`, `r × m`, column-major.
    c: Vec<f64>,
    r: usize,
    /// `ρ‖C_q‖²` per column of `C`.
    col_norm2: Vec<f64>,
    rho: f64,
    t: Vec<f64>,
    dual: Vec<f64>,
    tau: Vec<f64>,
}

impl Slack {
    fn rebuild(&mut self, beta: &[f64], m_indices: &[usize]) {
        for l in 0..self.r {
            let cb: f64 = m_indices
                .iter()
                .enumerate()
                .map(|(q, &j)| self.c[q * self.r + l] * beta[j])
                .sum();
            self.tau[l] = self.rho * (cb - self.t[l]) + self.dual[l];
        }
    }
}

/// Coefficients plus the cached quantities every coordinate update needs.
///
/// `lp[k*n+i] = L′(r_ki)·y̌_ki` and `u_i = Σ_k w_k lp_ki`, so that the
/// partial derivative in `β_j` is `(1/n) Σ_i x_ij u_i`.
#[derive(Debug, Clone)]
pub struct CmdState<'p, 'a> {
    problem: &'p Problem<'a>,
    beta: Vec<f64>,
    intercepts: Vec<f64>,
    margins: Vec<f64>,
    lp: Vec<f64>,
    u: Vec<f64>,
    slack: Option<Slack>,
}

impl<'p, 'a> CmdState<'p, 'a> {
    /// `coef` is on the problem's internal scale.
    pub fn new(problem: &'p Problem<'a>, coef: &CoefVector, aug: Option<&Augmentation<'_>>) -> Result<Self> {
        if coef.beta.len() != problem.p() || coef.intercepts.len() != problem.k() {
            return Err(Error::dims(format!(
                "coefficients ({}, {}) do not fit p = {}, K = {}",
                coef.beta.len(),
                coef.intercepts.len(),
                problem.p(),
                problem.k()
            )));
        }
        if coef.beta.iter().chain(&coef.intercepts).any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial coefficients must be finite"));
        }
        let slack = match aug {
            None => None,
            Some(a) => {
                let h = a.hypothesis;
                if h.indices() != problem.unpenalized() {
                    return Err(Error::invalid("constraint indices differ from the unpenalized set"));
                }
                if a.dual.len() != h.r() {
                    return Err(Error::dims(format!("dual has {} entries for {} constraints", a.dual.len(), h.r())));
                }
                let col_norm2 = h.c().column_iter().map(|c| a.rho * c.norm_squared()).collect();
                Some(Slack {
                    c: h.c().as_slice().to_vec(),
                    r: h.r(),
                    col_norm2,
                    rho: a.rho,
                    t: h.t().as_slice().to_vec(),
                    dual: a.dual.to_vec(),
                    tau: a.slack(&coef.beta),
                })
            }
        };
        let mut state = Self {
            problem,
            beta: coef.beta.clone(),
            intercepts: coef.intercepts.clone(),
            margins: Vec::new(),
            lp: Vec::new(),
            u: Vec::new(),
            slack,
        };
        state.refresh();
        Ok(state)
    }

    /// Rebuild margins and derivative caches from the coefficients.
    pub fn refresh(&mut self) {
        let coef = CoefVector {
            beta: self.beta.clone(),
            intercepts: self.intercepts.clone(),
        };
        self.margins = crate::model::margins_unchecked(self.problem.design(), self.problem.x(), &coef);
        let signs = self.problem.design().signs();
        self.lp = self
            .margins
            .iter()
            .zip(signs)
            .map(|(&r, &s)| probit_loss_grad(r) * s)
            .collect();
        self.rebuild_u();
        if let Some(slack) = self.slack.as_mut() {
            slack.rebuild(&self.beta, self.problem.unpenalized());
        }
    }

    fn rebuild_u(&mut self) {
        let n = self.problem.n();
        self.u.clear();
        self.u.resize(n, 0.0);
        for (k, &w) in self.problem.design().weights().iter().enumerate() {
            for (ui, &l) in self.u.iter_mut().zip(&self.lp[k * n..(k + 1) * n]) {
                *ui += w * l;
            }
        }
    }

    pub fn problem(&self) -> &Problem<'a> {
        self.problem
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn coef(&self) -> CoefVector {
        CoefVector {
            beta: self.beta.clone(),
            intercepts: self.intercepts.clone(),
        }
    }

    /// Incrementally maintained margins, layer-major.
    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    /// Incrementally maintained slackness `τ`; empty without a constraint.
    pub fn tau(&self) -> &[f64] {
        self.slack.as_ref().map_or(&[], |s| &s.tau)
    }

    /// `M_n` at the current coefficients.
    pub fn likelihood(&self) -> f64 {
        self.problem.likelihood(&self.margins)
    }

    /// `(1/n) Σ_k w_k Σ_i L′(r_ki) y̌_ki x_ij`, the derivative of `−M_n` in `β_j`.
    pub fn gradient(&self, j: usize) -> f64 {
        let col = self.problem.column(j);
        col.iter().zip(&self.u).map(|(a, b)| a * b).sum::<f64>() / self.problem.n() as f64
    }

    /// Exact weighted-ℓ1 objective, including augmentation terms.
    pub fn objective(&self, omega: &[f64], aug: Option<&Augmentation<'_>>) -> f64 {
        let n = self.problem.n();
        let mut loss = 0.0;
        for (k, &w) in self.problem.design().weights().iter().enumerate() {
            loss += w * self.margins[k * n..(k + 1) * n].iter().map(|&r| probit_loss(r)).sum::<f64>();
        }
        let mut value = loss / n as f64;
        for (j, &b) in self.beta.iter().enumerate() {
            // ω may be +∞ for screened coordinates, which stay at 0
            if b != 0.0 && self.problem.is_penalized(j) {
                value += omega[j] * b.abs();
            }
        }
        if let Some(a) = aug {
            value += a.penalty(&self.beta);
        }
        value
    }

    fn set_beta(&mut self, j: usize, new: f64) -> f64 {
        let delta = new - self.beta[j];
        if delta == 0.0 {
            return 0.0;
        }
        self.beta[j] = new;
        let n = self.problem.n();
        let col = self.problem.column(j);
        let signs = self.problem.design().signs();
        for k in 0..self.problem.k() {
            let range = k * n..(k + 1) * n;
            for (((r, l), &s), &xij) in self.margins[range.clone()]
                .iter_mut()
                .zip(&mut self.lp[range.clone()])
                .zip(&signs[range])
                .zip(col)
            {
                *r += s * xij * delta;
                *l = probit_loss_grad(*r) * s;
            }
        }
        self.rebuild_u();
        if let (Some(slack), Some(q)) = (self.slack.as_mut(), self.problem.position_in_m(j)) {
            let cq = &slack.c[q * slack.r..(q + 1) * slack.r];
            for (t, &c) in slack.tau.iter_mut().zip(cq) {
                *t += slack.rho * c * delta;
            }
        }
        delta
    }
}

/// Soft-thresholded majorization step on a penalized coordinate with weight
/// `omega` (which may be `+∞`). Returns the change in `β_j`.
pub fn cmd_update_penalized(state: &mut CmdState<'_, '_>, j: usize, omega: f64) -> Result<f64> {
    if j >= state.problem.p() || !state.problem.is_penalized(j) {
        return Err(Error::invalid(format!("coordinate {j} is not a penalized coordinate")));
    }
    if !(omega >= 0.0) {
        return Err(Error::invalid(format!("LLA weight must be >= 0, got {omega}")));
    }
    Ok(update_penalized(state, j, omega))
}

#[inline]
fn update_penalized(state: &mut CmdState<'_, '_>, j: usize, omega: f64) -> f64 {
    let s = state.problem.col_scale(j);
    if s == 0.0 {
        return 0.0;
    }
    if omega == f64::INFINITY {
        return state.set_beta(j, 0.0);
    }
    let z = state.beta[j] - state.gradient(j) / s;
    let new = soft_threshold(z, omega / s);
    state.set_beta(j, new)
}

/// Majorization step on a coordinate of `M`, including the augmentation
/// terms when a constraint is attached. Returns the change in `β_j`.
pub fn cmd_update_constrained(state: &mut CmdState<'_, '_>, j: usize) -> Result<f64> {
    if j >= state.problem.p() || state.problem.is_penalized(j) {
        return Err(Error::invalid(format!("coordinate {j} is not in the unpenalized set")));
    }
    Ok(update_constrained(state, j))
}

#[inline]
fn update_constrained(state: &mut CmdState<'_, '_>, j: usize) -> f64 {
    let mut num = state.gradient(j);
    let mut den = state.problem.col_scale(j);
    if let (Some(slack), Some(q)) = (state.slack.as_ref(), state.problem.position_in_m(j)) {
        let cq = &slack.c[q * slack.r..(q + 1) * slack.r];
        num += cq.iter().zip(&slack.tau).map(|(c, t)| c * t).sum::<f64>();
        den += slack.col_norm2[q];
    }
    if den == 0.0 {
        return 0.0;
    }
    let new = state.beta[j] - num / den;
    state.set_beta(j, new)
}

/// Majorization step on intercept `b_k`; only layer `k` moves. Returns the
/// change in `b_k`.
pub fn cmd_update_intercept(state: &mut CmdState<'_, '_>, k: usize) -> Result<f64> {
    if k >= state.problem.k() {
        return Err(Error::invalid(format!("layer {k} out of range (K = {})", state.problem.k())));
    }
    Ok(update_intercept(state, k))
}

#[inline]
fn update_intercept(state: &mut CmdState<'_, '_>, k: usize) -> f64 {
    let n = state.problem.n();
    let range = k * n..(k + 1) * n;
    let step = state.lp[range.clone()].iter().sum::<f64>() / n as f64;
    if step == 0.0 {
        return 0.0;
    }
    state.intercepts[k] += step;
    let w = state.problem.design().weights()[k];
    let signs = &state.problem.design().signs()[range.clone()];
    for (((r, l), &s), ui) in state.margins[range.clone()]
        .iter_mut()
        .zip(&mut state.lp[range])
        .zip(signs)
        .zip(&mut state.u)
    {
        *r -= s * step;
        let new = probit_loss_grad(*r) * s;
        *ui += w * (new - *l);
        *l = new;
    }
    step
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmdOutcome {
    /// Internal-scale coefficients.
    pub coef: CoefVector,
    pub cycles: usize,
    pub converged: bool,
    /// Exact objective after each cycle, when requested.
    pub trace: Vec<f64>,
    /// `M_n` at `coef`.
    pub likelihood: f64,
}

/// One pass over `coords` (penalized ascending, then `M`), then every
/// intercept. Returns the largest coefficient change.
fn sweep(state: &mut CmdState<'_, '_>, omega: &[f64], coords: &[usize]) -> f64 {
    let mut change = 0.0f64;
    for &j in coords {
        let d = if state.problem.is_penalized(j) {
            update_penalized(state, j, omega[j])
        } else {
            update_constrained(state, j)
        };
        change = change.max(d.abs());
    }
    for k in 0..state.problem.k() {
        change = change.max(update_intercept(state, k).abs());
    }
    change
}

fn sweep_order(problem: &Problem<'_>, beta: &[f64], full: bool) -> Vec<usize> {
    let mut coords: Vec<usize> = (0..problem.p())
        .filter(|&j| problem.is_penalized(j) && (full || beta[j] != 0.0))
        .collect();
    coords.extend_from_slice(problem.unpenalized());
    coords
}

/// Anderson mixing over successive restricted sweeps.
struct Anderson {
    depth: usize,
    last: Option<(Vec<f64>, Vec<f64>)>,
    dg: Vec<Vec<f64>>,
    df: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            last: None,
            dg: Vec::new(),
            df: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.last = None;
        self.dg.clear();
        self.df.clear();
    }

    /// Given the iterate `x` and its sweep image `g`, propose the next
    /// iterate, or `None` while the history is too short.
    fn propose(&mut self, x: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        if let Some((g_prev, f_prev)) = self.last.take() {
            self.dg.push(g.iter().zip(&g_prev).map(|(a, b)| a - b).collect());
            self.df.push(f.iter().zip(&f_prev).map(|(a, b)| a - b).collect());
            if self.dg.len() > self.depth {
                self.dg.remove(0);
                self.df.remove(0);
            }
        }
        self.last = Some((g.to_vec(), f.clone()));
        let m = self.df.len();
        if m == 0 {
            return None;
        }
        let gram = DMatrix::from_fn(m, m, |a, b| dot(&self.df[a], &self.df[b]));
        let rhs = DVector::from_fn(m, |a, _| dot(&self.df[a], &f));
        let ridge = 1e-12 * gram.trace().max(f64::MIN_POSITIVE);
        let gamma = (gram + DMatrix::identity(m, m) * ridge).cholesky()?.solve(&rhs);
        let mut next = g.to_vec();
        for (col, &c) in self.dg.iter().zip(gamma.iter()) {
            for (v, d) in next.iter_mut().zip(col) {
                *v -= c * d;
            }
        }
        next.iter().all(|v| v.is_finite()).then_some(next)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ANDERSON_DEPTH: usize = 5;

impl CmdState<'_, '_> {
    fn pack(&self, coords: &[usize]) -> Vec<f64> {
        coords
            .iter()
            .map(|&j| self.beta[j])
            .chain(self.intercepts.iter().copied())
            .collect()
    }

    fn unpack(&mut self, coords: &[usize], v: &[f64]) {
        for (&j, &b) in coords.iter().zip(v) {
            self.beta[j] = b;
        }
        self.intercepts.copy_from_slice(&v[coords.len()..]);
        self.refresh();
    }
}

/// Minimize the weighted-ℓ1 objective from `init` (internal scale).
///
/// A full sweep is followed by sweeps restricted to `M` and the coordinates
/// that were nonzero after it, until they settle; another full sweep then
/// checks whether any zero coordinate wants to enter. Convergence means a full
/// sweep moved no coefficient by more than `tol_cmd`.
///
/// Restricted sweeps are Anderson-mixed: a mixed iterate replaces the plain
/// sweep result only when it has a strictly lower exact objective, so the
/// objective still never increases from one cycle to the next.
pub fn cmd_solve(
    problem: &Problem<'_>,
    init: &CoefVector,
    omega: &[f64],
    aug: Option<&Augmentation<'_>>,
    config: &SolverConfig,
) -> Result<CmdOutcome> {
    if omega.len() != problem.p() {
        return Err(Error::dims(format!("{} weights for {} coefficients", omega.len(), problem.p())));
    }
    if omega.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("LLA weights must be >= 0"));
    }
    let mut state = CmdState::new(problem, init, aug)?;
    let mut trace = Vec::new();
    let mut cycles = 0;
    let mut converged = false;
    let all = sweep_order(problem, &state.beta, true);
    let mut mixer = Anderson::new(ANDERSON_DEPTH);
    'outer: while cycles < config.max_cmd_cycles {
        let change = sweep(&mut state, omega, &all);
        cycles += 1;
        if config.record_trace {
            trace.push(state.objective(omega, aug));
        }
        if !change.is_finite() {
            return Err(Error::Numerical("coordinate descent diverged".into()));
        }
        if change <= config.tol_cmd {
            converged = true;
            break;
        }
        let active = sweep_order(problem, &state.beta, false);
        mixer.clear();
        loop {
            if cycles >= config.max_cmd_cycles {
                break 'outer;
            }
            let x = state.pack(&active);
            let change = sweep(&mut state, omega, &active);
            cycles += 1;
            if !change.is_finite() {
                return Err(Error::Numerical("coordinate descent diverged".into()));
            }
            if change <= config.tol_cmd {
                if config.record_trace {
                    trace.push(state.objective(omega, aug));
                }
                break;
            }
            let g = state.pack(&active);
            let mut current = None;
            if let Some(candidate) = mixer.propose(&x, &g) {
                let before = state.objective(omega, aug);
                let saved = state.clone();
                state.unpack(&active, &candidate);
                let after = state.objective(omega, aug);
                if after < before {
                    current = Some(after);
                } else {
                    state = saved;
                    mixer.clear();
                    current = Some(before);
                }
            }
            if config.record_trace {
                trace.push(current.unwrap_or_else(|| state.objective(omega, aug)));
            }
        }
    }
    if !converged {
        log::debug!("CMD stopped after {cycles} cycles without converging");
    }
    Ok(CmdOutcome {
        likelihood: state.likelihood(),
        coef: state.coef(),
        cycles,
        converged,
        trace,
    })
}
