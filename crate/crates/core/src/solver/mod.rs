//! Partial penalized composite probit estimators.
//!
//! Three nested loops:
//! * [`cmd`]: coordinate majorization descent for a weighted-ℓ1 problem, using
//!   the unit bound on the probit loss curvature;
//! * [`lla`]: local linear approximation of the folded-concave penalty;
//! * [`alm`]: method of multipliers for the linear constraint `Cβ_M = t`.

pub mod alm;
pub mod cmd;
pub mod lla;

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{likelihood_from_margins, CoefVector, CompositeDesign};
use crate::penalty::{PenaltyFamily, PenaltySpec, DEFAULT_SCAD_A};

pub use alm::{fit_constrained, AlmStart};
pub use cmd::{cmd_solve, cmd_update_constrained, cmd_update_intercept, cmd_update_penalized, CmdOutcome, CmdState};
pub use lla::{fit_unconstrained, lla_solve, LlaOutcome};

/// `S(z, t) = sgn(z)·(|z| − t)₊`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `H₀: C β_M = t`, with `M` stored 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHypothesis {
    indices: Vec<usize>,
    c: DMatrix<f64>,
    t: DVector<f64>,
}

impl LinearHypothesis {
    /// `indices` are 0-based column positions into `β`.
    pub fn new(indices: Vec<usize>, c: DMatrix<f64>, t: DVector<f64>, p: usize) -> Result<Self> {
        let m = indices.len();
        if m == 0 {
            return Err(Error::invalid("hypothesis must involve at least one coefficient"));
        }
        if let Some(&j) = indices.iter().find(|&&j| j >= p) {
            return Err(Error::invalid(format!("hypothesis index {} out of range 1..={p}", j + 1)));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != m {
            return Err(Error::invalid("hypothesis indices must be distinct"));
        }
        if c.ncols() != m {
            return Err(Error::dims(format!("C has {} columns but M has {m} indices", c.ncols())));
        }
        if c.nrows() != t.len() {
            return Err(Error::dims(format!("C has {} rows but t has {} entries", c.nrows(), t.len())));
        }
        if c.nrows() == 0 || c.nrows() > m {
            return Err(Error::invalid(format!("C must have between 1 and {m} rows")));
        }
        if c.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("hypothesis entries must be finite"));
        }
        let rank = numerical_rank(&c);
        if rank < c.nrows() {
            return Err(Error::invalid(format!(
                "C must have full row rank: rank {rank} < {} rows",
                c.nrows()
            )));
        }
        Ok(Self { indices, c, t })
    }

    /// Same as [`LinearHypothesis::new`] with 1-based indices.
    pub fn from_one_based(indices: &[usize], c: DMatrix<f64>, t: DVector<f64>, p: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::invalid("hypothesis indices are 1-based"));
        }
        Self::new(indices.iter().map(|&j| j - 1).collect(), c, t, p)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn t(&self) -> &DVector<f64> {
        &self.t
    }

    /// Number of restricted coefficients `m`.
    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// Number of constraints `r`.
    pub fn r(&self) -> usize {
        self.c.nrows()
    }

    /// `Cβ_M − t`.
    pub fn residual(&self, beta: &[f64]) -> DVector<f64> {
        let bm = DVector::from_iterator(self.m(), self.indices.iter().map(|&j| beta[j]));
        &self.c * bm - &self.t
    }
}

fn numerical_rank(c: &DMatrix<f64>) -> usize {
    let sv = c.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let tol = max * 1e-10 * c.nrows().max(c.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Family and shape; the level is supplied per fit.
    pub penalty: PenaltySpec,
    /// Augmentation parameter of the method of multipliers.
    pub rho: f64,
    pub tol_cmd: f64,
    pub tol_lla: f64,
    pub tol_alm: f64,
    pub max_cmd_cycles: usize,
    pub max_lla_iters: usize,
    pub max_alm_iters: usize,
    pub standardize: bool,
    /// Record the exact objective after every CMD cycle.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltySpec {
                family: PenaltyFamily::Scad,
                a: DEFAULT_SCAD_A,
                lambda: 0.0,
            },
            rho: 1.0,
            tol_cmd: 1e-7,
            tol_lla: 1e-6,
            tol_alm: 1e-6,
            max_cmd_cycles: 10_000,
            max_lla_iters: 50,
            max_alm_iters: 200,
            standardize: false,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        PenaltySpec::new(self.penalty.family, self.penalty.a, self.penalty.lambda)?;
        for (name, v) in [
            ("rho", self.rho),
            ("tol_cmd", self.tol_cmd),
            ("tol_lla", self.tol_lla),
            ("tol_alm", self.tol_alm),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_cmd_cycles == 0 || self.max_lla_iters == 0 || self.max_alm_iters == 0 {
            return Err(Error::invalid("iteration caps must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterations {
    pub cmd_cycles: usize,
    pub lla_iters: usize,
    pub alm_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coef: CoefVector,
    /// `−M_n + Σ_{j∉M} pλ(|β_j|)`.
    pub objective: f64,
    /// Unpenalized composite likelihood `M_n` at the estimate.
    pub likelihood: f64,
    /// Nonzero penalized coefficients (0-based, ascending).
    pub active_set: Vec<usize>,
    pub lambda: f64,
    /// Dual variable; empty for unconstrained fits.
    pub dual: Vec<f64>,
    /// `‖Cβ_M − t‖∞`; `None` for unconstrained fits.
    pub constraint_residual: Option<f64>,
    pub iterations: Iterations,
    pub converged: bool,
}

/// Column centering and scaling applied before a fit.
///
/// The internal design is `x̃_j = (x_j − c_j)/s_j`, so `β̃_j = s_j·β_j` and
/// `b̃_k = b_k − Σ_j c_j β_j`. Constant columns keep `s_j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    fn from_columns(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut center = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            center.push(mean);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { center, scale }
    }

    pub fn to_internal(&self, coef: &CoefVector) -> CoefVector {
        let shift: f64 = coef.beta.iter().zip(&self.center).map(|(b, c)| b * c).sum();
        CoefVector {
            beta: coef.beta.iter().zip(&self.scale).map(|(b, s)| b * s).collect(),
            intercepts: coef.intercepts.iter().map(|b| b - shift).collect(),
        }
    }

    pub fn to_external(&self, coef: &CoefVector) -> CoefVector {
        let beta: Vec<f64> = coef.beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let shift: f64 = beta.iter().zip(&self.center).map(|(b, c)| b * c).sum();
        CoefVector {
            intercepts: coef.intercepts.iter().map(|b| b + shift).collect(),
            beta,
        }
    }
}

/// Data blocks shared by every fit on one dataset: the (possibly
/// standardized) design, the dichotomized layers and the unpenalized set `M`.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    x: Cow<'a, DMatrix<f64>>,
    design: &'a CompositeDesign,
    unpenalized: Vec<usize>,
    position_in_m: Vec<Option<usize>>,
    col_scale: Vec<f64>,
    scaling: Option<Scaling>,
}

impl<'a> Problem<'a> {
    /// `unpenalized` holds 0-based columns excluded from the penalty (the
    /// tested set `M`), in the order used for every block vector.
    pub fn new(x: &'a DMatrix<f64>, design: &'a CompositeDesign, unpenalized: &[usize]) -> Result<Self> {
        Self::build(Cow::Borrowed(x), design, unpenalized, None)
    }

    /// As [`Problem::new`], standardizing the columns when `standardize` is
    /// set. Fits on a standardized problem still report original-scale
    /// coefficients.
    pub fn with_standardization(
        x: &'a DMatrix<f64>,
        design: &'a CompositeDesign,
        unpenalized: &[usize],
        standardize: bool,
    ) -> Result<Self> {
        if !standardize {
            return Self::new(x, design, unpenalized);
        }
        let scaling = Scaling::from_columns(x);
        let mut xs = x.clone();
        for (j, mut col) in xs.column_iter_mut().enumerate() {
            let (c, s) = (scaling.center[j], scaling.scale[j]);
            col.iter_mut().for_each(|v| *v = (*v - c) / s);
        }
        Self::build(Cow::Owned(xs), design, unpenalized, Some(scaling))
    }

    fn build(
        x: Cow<'a, DMatrix<f64>>,
        design: &'a CompositeDesign,
        unpenalized: &[usize],
        scaling: Option<Scaling>,
    ) -> Result<Self> {
        if x.nrows() != design.n() {
            return Err(Error::dims(format!("design has {} rows, layers have {}", x.nrows(), design.n())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix has non-finite entries"));
        }
        let p = x.ncols();
        let mut position_in_m = vec![None; p];
        for (q, &j) in unpenalized.iter().enumerate() {
            if j >= p {
                return Err(Error::invalid(format!("unpenalized index {} out of range 1..={p}", j + 1)));
            }
            if position_in_m[j].replace(q).is_some() {
                return Err(Error::invalid("unpenalized indices must be distinct"));
            }
        }
        let n = x.nrows() as f64;
        let col_scale: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / n).collect();
        let flat: Vec<usize> = (0..p).filter(|&j| col_scale[j] == 0.0).collect();
        if !flat.is_empty() {
            log::warn!("{} all-zero column(s) will be skipped by the solver (first: {})", flat.len(), flat[0] + 1);
        }
        Ok(Self {
            x,
            design,
            unpenalized: unpenalized.to_vec(),
            position_in_m,
            col_scale,
            scaling,
        })
    }

    /// Problem whose unpenalized set is the hypothesis' `M`.
    pub fn for_hypothesis(
        x: &'a DMatrix<f64>,
        design: &'a CompositeDesign,
        hyp: &LinearHypothesis,
        standardize: bool,
    ) -> Result<Self> {
        Self::with_standardization(x, design, hyp.indices(), standardize)
    }

    /// The design the solver works on.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn design(&self) -> &CompositeDesign {
        self.design
    }

    pub fn scaling(&self) -> Option<&Scaling> {
        self.scaling.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.design.k()
    }

    pub fn unpenalized(&self) -> &[usize] {
        &self.unpenalized
    }

    pub fn is_penalized(&self, j: usize) -> bool {
        self.position_in_m[j].is_none()
    }

    pub(crate) fn position_in_m(&self, j: usize) -> Option<usize> {
        self.position_in_m[j]
    }

    /// `(1/n) Σ_i x_ij²` on the internal design.
    pub fn col_scale(&self, j: usize) -> f64 {
        self.col_scale[j]
    }

    pub(crate) fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn to_internal(&self, coef: &CoefVector) -> CoefVector {
        match &self.scaling {
            Some(s) => s.to_internal(coef),
            None => coef.clone(),
        }
    }

    pub fn to_external(&self, coef: &CoefVector) -> CoefVector {
        match &self.scaling {
            Some(s) => s.to_external(coef),
            None => coef.clone(),
        }
    }

    /// The hypothesis restated for internal-scale coefficients.
    pub fn internal_hypothesis(&self, hyp: &LinearHypothesis) -> Result<LinearHypothesis> {
        if hyp.indices() != self.unpenalized.as_slice() {
            return Err(Error::invalid("hypothesis indices differ from the problem's unpenalized set"));
        }
        let Some(s) = &self.scaling else {
            return Ok(hyp.clone());
        };
        let mut c = hyp.c().clone();
        for (q, &j) in hyp.indices().iter().enumerate() {
            c.column_mut(q).iter_mut().for_each(|v| *v /= s.scale[j]);
        }
        Ok(LinearHypothesis {
            indices: hyp.indices.clone(),
            c,
            t: hyp.t.clone(),
        })
    }

    /// Nonzero penalized coefficients.
    pub fn active_set(&self, beta: &[f64]) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| self.is_penalized(j) && beta[j] != 0.0)
            .collect()
    }

    /// `Σ_{j∉M} pλ(|β_j|)`.
    pub fn penalty_total(&self, spec: &PenaltySpec, beta: &[f64]) -> f64 {
        beta.iter()
            .enumerate()
            .filter(|&(j, &b)| b != 0.0 && self.is_penalized(j))
            .map(|(_, &b)| spec.value(b.abs()))
            .sum()
    }

    /// LLA weights `p′λ(|β_j|)` for penalized coordinates, 0 on `M`.
    pub fn lla_weights(&self, spec: &PenaltySpec, beta: &[f64]) -> Vec<f64> {
        beta.iter()
            .enumerate()
            .map(|(j, &b)| if self.is_penalized(j) { spec.deriv(b.abs()) } else { 0.0 })
            .collect()
    }

    pub(crate) fn likelihood(&self, margins: &[f64]) -> f64 {
        likelihood_from_margins(self.design, margins)
    }
}

/// Linear constraint with its multiplier, as seen by one primal solve.
#[derive(Debug, Clone)]
pub struct Augmentation<'h> {
    /// Internal-scale hypothesis.
    pub hypothesis: &'h LinearHypothesis,
    pub dual: &'h [f64],
    pub rho: f64,
}

impl Augmentation<'_> {
    /// `τ = ρ(Cβ_M − t) + v`.
    pub fn slack(&self, beta: &[f64]) -> Vec<f64> {
        let res = self.hypothesis.residual(beta);
        res.iter()
            .zip(self.dual)
            .map(|(r, v)| self.rho * r + v)
            .collect()
    }

    /// `vᵀ(Cβ_M − t) + ρ/2‖Cβ_M − t‖²`.
    pub fn penalty(&self, beta: &[f64]) -> f64 {
        let res = self.hypothesis.residual(beta);
        res.iter().zip(self.dual).map(|(r, v)| v * r).sum::<f64>() + 0.5 * self.rho * res.norm_squared()
    }
}

pub(crate) fn max_abs_change(a: &CoefVector, b: &CoefVector) -> f64 {
    a.beta
        .iter()
        .zip(&b.beta)
        .chain(a.intercepts.iter().zip(&b.intercepts))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
