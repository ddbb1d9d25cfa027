//! Plug-in sensitivity and variability matrices on the block `[M; Ŝ; intercepts]`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{linear_predictor, CoefVector, CompositeDesign};
use crate::probit::{log_normal_cdf, log_normal_pdf, sigma_weight};
use crate::solver::LinearHypothesis;

/// Allowed asymmetry of an assembled matrix before symmetrization.
const SYMMETRY_TOL: f64 = 1e-8;
/// Relative eigenvalue slack for positive semi-definiteness.
const PSD_SLACK: f64 = 1e-8;

/// Column layout of the block vectors: `M` in hypothesis order, then `Ŝ`
/// ascending, then `K` intercepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockOrder {
    /// 0-based covariate columns (`M` then `Ŝ`).
    pub columns: Vec<usize>,
    pub m: usize,
    pub k: usize,
}

impl BlockOrder {
    pub fn new(unpenalized: &[usize], active: &[usize], k: usize) -> Result<Self> {
        if let Some(j) = active.iter().find(|j| unpenalized.contains(j)) {
            return Err(Error::invalid(format!("active set overlaps M at column {}", j + 1)));
        }
        let mut active = active.to_vec();
        active.sort_unstable();
        let mut columns = unpenalized.to_vec();
        columns.extend(active);
        Ok(Self {
            columns,
            m: unpenalized.len(),
            k,
        })
    }

    /// Block dimension `d = m + |Ŝ| + K`.
    pub fn dim(&self) -> usize {
        self.columns.len() + self.k
    }
}

fn check_inputs(design: &CompositeDesign, x: &DMatrix<f64>, coef: &CoefVector, order: &BlockOrder) -> Result<()> {
    if x.nrows() != design.n() {
        return Err(Error::dims(format!("design has {} rows, layers have {}", x.nrows(), design.n())));
    }
    if coef.beta.len() != x.ncols() || coef.intercepts.len() != design.k() || order.k != design.k() {
        return Err(Error::dims("coefficients do not match the design"));
    }
    if coef.beta.iter().chain(&coef.intercepts).any(|v| !v.is_finite()) {
        return Err(Error::invalid("plug-in coefficients must be finite"));
    }
    if order.columns.iter().any(|&j| j >= x.ncols()) {
        return Err(Error::invalid("block column out of range"));
    }
    Ok(())
}

/// `η_ki = x_iᵀβ − b_k`, layer-major.
fn layer_predictors(x: &DMatrix<f64>, coef: &CoefVector) -> Vec<f64> {
    let eta = linear_predictor(x, &coef.beta);
    let n = eta.len();
    let mut out = Vec::with_capacity(n * coef.intercepts.len());
    for &b in &coef.intercepts {
        out.extend(eta.iter().map(|e| e - b));
    }
    out
}

/// Assemble `(1/n) Σ_i Σ_{k,k′} c_i(k,k′) x_i^k (x_i^{k′})ᵀ` where
/// `x_i^k = (z_i, −e_k)` and `z_i` holds the block columns.
fn assemble(x: &DMatrix<f64>, order: &BlockOrder, n: usize, mut coupling: impl FnMut(usize, &mut [f64])) -> DMatrix<f64> {
    let (q, k) = (order.columns.len(), order.k);
    let d = q + k;
    let mut out = DMatrix::zeros(d, d);
    let mut c = vec![0.0; k * k];
    let mut z = vec![0.0; q];
    let mut row_sum = vec![0.0; k];
    for i in 0..n {
        coupling(i, &mut c);
        for (zq, &j) in z.iter_mut().zip(&order.columns) {
            *zq = x[(i, j)];
        }
        let mut total = 0.0;
        for a in 0..k {
            row_sum[a] = (0..k).map(|b| c[a * k + b]).sum();
            total += row_sum[a];
        }
        for a in 0..q {
            for b in 0..q {
                out[(a, b)] += total * z[a] * z[b];
            }
        }
        // cross blocks carry the −e_k intercept columns
        for a in 0..q {
            for kk in 0..k {
                let col_sum: f64 = (0..k).map(|kp| c[kp * k + kk]).sum();
                out[(a, q + kk)] -= z[a] * col_sum;
                out[(q + kk, a)] -= z[a] * row_sum[kk];
            }
        }
        for a in 0..k {
            for b in 0..k {
                out[(q + a, q + b)] += c[a * k + b];
            }
        }
    }
    out / n as f64
}

fn symmetrize(mut m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(1.0);
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Numerical(format!("{what} is not symmetric (asymmetry {asym:e})")));
    }
    m = (&m + m.transpose()) * 0.5;
    Ok(m)
}

/// `K̂ = (1/n) Σ_k w_k Σ_i Σ(η_ki) x_i^k (x_i^k)ᵀ`.
pub fn sensitivity_matrix(
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    coef: &CoefVector,
    order: &BlockOrder,
) -> Result<DMatrix<f64>> {
    check_inputs(design, x, coef, order)?;
    let (n, k) = (design.n(), design.k());
    let eta = layer_predictors(x, coef);
    let w = design.weights();
    let m = assemble(x, order, n, |i, c| {
        c.fill(0.0);
        for a in 0..k {
            c[a * k + a] = w[a] * sigma_weight(eta[a * n + i]);
        }
    });
    symmetrize(m, "sensitivity matrix")
}

/// `V̂ = (1/n) Σ_i Σ_{k,k′} w_k w_{k′} x_i^k (x_i^{k′})ᵀ φ(η_k)φ(η_{k′}) / (Φ(η_min(k,k′))·Φ(−η_max(k,k′)))`,
/// with layers indexed in ascending-threshold order and each ratio formed in
/// log space.
pub fn variability_matrix(
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    coef: &CoefVector,
    order: &BlockOrder,
) -> Result<DMatrix<f64>> {
    check_inputs(design, x, coef, order)?;
    let (n, k) = (design.n(), design.k());
    let eta = layer_predictors(x, coef);
    let w = design.weights();
    let mut bad = None;
    let m = assemble(x, order, n, |i, c| {
        for a in 0..k {
            let ea = eta[a * n + i];
            for b in 0..k {
                let eb = eta[b * n + i];
                let (lo, hi) = if a <= b { (ea, eb) } else { (eb, ea) };
                let log_ratio = log_normal_pdf(ea) + log_normal_pdf(eb) - log_normal_cdf(lo) - log_normal_cdf(-hi);
                let v = w[a] * w[b] * log_ratio.exp();
                if !v.is_finite() && bad.is_none() {
                    bad = Some((i, a, b));
                }
                c[a * k + b] = v;
            }
        }
    });
    if let Some((i, a, b)) = bad {
        return Err(Error::Numerical(format!(
            "variability term is not finite at observation {}, layers ({}, {})",
            i + 1,
            a + 1,
            b + 1
        )));
    }
    symmetrize(m, "variability matrix")
}

/// Plug-in matrices at one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginMatrices {
    pub k_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    /// `Ψ̂ = C Ω̂_mm Cᵀ`, `Ω̂ = K̂⁻¹`.
    pub psi_hat: DMatrix<f64>,
    /// `T̂ = Eᵀ K̂⁻¹ V̂ K̂⁻¹ E`, `E = [Cᵀ; 0]`.
    pub tau_hat: DMatrix<f64>,
    pub block_order: BlockOrder,
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: what.to_string(),
        min_eigenvalue: m.clone().symmetric_eigenvalues().min(),
    })
}

/// `E = [Cᵀ; 0]`, `d × r`.
pub(crate) fn embed_constraint(hyp: &LinearHypothesis, d: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(d, hyp.r());
    e.view_mut((0, 0), (hyp.m(), hyp.r())).copy_from(&hyp.c().transpose());
    e
}

impl PluginMatrices {
    /// Build every plug-in at `coef`, using `active` as `Ŝ`.
    pub fn at(
        design: &CompositeDesign,
        x: &DMatrix<f64>,
        coef: &CoefVector,
        active: &[usize],
        hyp: &LinearHypothesis,
    ) -> Result<Self> {
        let order = BlockOrder::new(hyp.indices(), active, design.k())?;
        let k_hat = sensitivity_matrix(design, x, coef, &order)?;
        let v_hat = variability_matrix(design, x, coef, &order)?;
        let chol = cholesky(&k_hat, "sensitivity matrix")?;
        let e = embed_constraint(hyp, order.dim());
        let g = chol.solve(&e);
        let psi_hat = symmetrize(e.transpose() * &g, "psi")?;
        let tau_hat = symmetrize(g.transpose() * &v_hat * &g, "tau")?;
        Ok(Self {
            k_hat,
            v_hat,
            psi_hat,
            tau_hat,
            block_order: order,
        })
    }

    /// `Ω̂_mm`, the leading `m × m` block of `K̂⁻¹`.
    pub fn omega_mm(&self) -> Result<DMatrix<f64>> {
        let chol = cholesky(&self.k_hat, "sensitivity matrix")?;
        let m = self.block_order.m;
        let mut e = DMatrix::zeros(self.block_order.dim(), m);
        e.view_mut((0, 0), (m, m)).fill_with_identity();
        Ok(e.transpose() * chol.solve(&e))
    }
}

/// Eigenvalue floor for a matrix that should be PSD: entries below
/// `−slack·trace` are an error, the rest are clamped at 0.
pub(crate) fn clamp_psd_eigenvalues(values: &mut [f64], trace: f64, what: &str) -> Result<()> {
    let floor = -PSD_SLACK * trace.abs().max(f64::MIN_POSITIVE);
    for v in values.iter_mut() {
        if *v < floor {
            return Err(Error::NotPositiveDefinite {
                what: what.to_string(),
                min_eigenvalue: *v,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}
