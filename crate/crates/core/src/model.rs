//! Dichotomized response layers and the composite probit likelihood.
//!
//! The continuous response is cut at `K` increasing thresholds; each cut gives
//! a probit model sharing the slope vector `β` with its own intercept `b_k`.
//! Only the resulting labels enter the likelihood, so every quantity here is
//! invariant under strictly increasing transformations of the response.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probit::{link_h, log_normal_cdf, probit_loss, probit_loss_grad};

/// Default number of thresholds (5%, 10%, ..., 95% percentiles).
pub const DEFAULT_THRESHOLDS: usize = 19;

/// Raw regression data: `n × p` design and continuous response.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::dims(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::invalid("need at least two observations"));
        }
        if x.ncols() < 1 {
            return Err(Error::invalid("need at least one covariate"));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % x.nrows(), pos / x.nrows());
            return Err(Error::invalid(format!("non-finite covariate at row {i}, column {j}")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite response at row {i}")));
        }
        Ok(Self {
            x,
            y,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::dims(format!(
                "{} column names for {} covariates",
                names.len(),
                self.p()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Copy with every covariate centered and scaled to unit (population)
    /// variance. Constant columns are centered only.
    pub fn standardized(&self) -> Self {
        let n = self.n() as f64;
        let mut x = self.x.clone();
        for mut col in x.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
        Self {
            x,
            y: self.y.clone(),
            column_names: self.column_names.clone(),
        }
    }
}

/// Thresholds produced by [`compute_thresholds`].
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub values: Vec<f64>,
    pub requested: usize,
    pub warning: Option<String>,
}

/// Type-1 empirical quantiles at levels `k/(K+1)`, `k = 1..K`, with tied
/// levels collapsed.
pub fn compute_thresholds(y: &[f64], k: usize) -> Result<Thresholds> {
    if k == 0 {
        return Err(Error::invalid("number of thresholds must be >= 1"));
    }
    let n = y.len();
    if n < k {
        return Err(Error::invalid(format!("need at least {k} observations for {k} thresholds")));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted[0] == sorted[n - 1] {
        return Err(Error::ConstantResponse);
    }
    let mut values: Vec<f64> = Vec::with_capacity(k);
    for level in 1..=k {
        // order statistic ⌈q·n⌉ computed in integers to avoid rounding
        let rank = (level * n).div_ceil(k + 1).max(1);
        let v = sorted[rank - 1];
        if values.last() != Some(&v) {
            values.push(v);
        }
    }
    let warning = (values.len() < k).then(|| {
        format!(
            "tied responses collapsed {k} threshold levels into {}",
            values.len()
        )
    });
    Ok(Thresholds {
        values,
        requested: k,
        warning,
    })
}

pub fn equal_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Dichotomized response layers; the representation every fit runs on.
///
/// `labels` and `signs` are stored layer-major: entry `(k, i)` sits at
/// `k * n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeDesign {
    thresholds: Vec<f64>,
    weights: Vec<f64>,
    labels: Vec<u8>,
    signs: Vec<f64>,
    n: usize,
}

impl CompositeDesign {
    /// Percentile thresholds with equal weights. Levels that would label every
    /// observation 1 (a threshold at the sample minimum) are dropped.
    pub fn from_response(y: &[f64], k: usize) -> Result<(Self, Vec<String>)> {
        let th = compute_thresholds(y, k)?;
        let mut warnings: Vec<String> = th.warning.into_iter().collect();
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let values: Vec<f64> = th.values.into_iter().filter(|&t| t > min).collect();
        if values.is_empty() {
            return Err(Error::ConstantResponse);
        }
        if values.len() < k && warnings.is_empty() {
            warnings.push(format!("dropped threshold levels at the response minimum; K = {}", values.len()));
        }
        let weights = equal_weights(values.len());
        Ok((dichotomize(y, &values, &weights)?, warnings))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of layers `K`.
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self, k: usize, i: usize) -> u8 {
        self.labels[k * self.n + i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// All signs, layer-major.
    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn layer_signs(&self, k: usize) -> &[f64] {
        &self.signs[k * self.n..(k + 1) * self.n]
    }

    /// Fraction of ones in layer `k`.
    pub fn layer_mean(&self, k: usize) -> f64 {
        let ones: usize = self.labels[k * self.n..(k + 1) * self.n]
            .iter()
            .map(|&l| l as usize)
            .sum();
        ones as f64 / self.n as f64
    }

    /// Same labels with a different weight vector.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, self.k())?;
        Ok(Self {
            weights,
            ..self.clone()
        })
    }
}

fn check_weights(weights: &[f64], k: usize) -> Result<()> {
    if weights.len() != k {
        return Err(Error::dims(format!("{} weights for {k} thresholds", weights.len())));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid("composite weights must be positive"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("composite weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Cut `y` at each threshold: label 1 iff `y_i ≥ threshold_k`.
pub fn dichotomize(y: &[f64], thresholds: &[f64], weights: &[f64]) -> Result<CompositeDesign> {
    check_weights(weights, thresholds.len())?;
    if thresholds.is_empty() {
        return Err(Error::invalid("at least one threshold is required"));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("thresholds must be strictly increasing"));
    }
    let n = y.len();
    let k = thresholds.len();
    let mut labels = Vec::with_capacity(k * n);
    for (layer, &th) in thresholds.iter().enumerate() {
        let row: Vec<u8> = y.iter().map(|&v| u8::from(v >= th)).collect();
        let ones: usize = row.iter().map(|&l| l as usize).sum();
        if ones == 0 || ones == n {
            return Err(Error::DegenerateLayer {
                layer,
                threshold: th,
            });
        }
        labels.extend(row);
    }
    let signs = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    Ok(CompositeDesign {
        thresholds: thresholds.to_vec(),
        weights: weights.to_vec(),
        labels,
        signs,
        n,
    })
}

/// Slopes `β` and per-layer intercepts `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefVector {
    pub beta: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl CoefVector {
    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            beta: vec![0.0; p],
            intercepts: vec![0.0; k],
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.beta.iter().filter(|&&b| b != 0.0).count()
    }
}

fn check_dims(design: &CompositeDesign, x: &DMatrix<f64>, coef: &CoefVector) -> Result<()> {
    if x.nrows() != design.n() {
        return Err(Error::dims(format!("design has {} rows, layers have {}", x.nrows(), design.n())));
    }
    if coef.beta.len() != x.ncols() {
        return Err(Error::dims(format!("beta has {} entries for {} covariates", coef.beta.len(), x.ncols())));
    }
    if coef.intercepts.len() != design.k() {
        return Err(Error::dims(format!(
            "{} intercepts for {} layers",
            coef.intercepts.len(),
            design.k()
        )));
    }
    Ok(())
}

/// `Xβ`, skipping zero coefficients.
pub fn linear_predictor(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; x.nrows()];
    for (j, &bj) in beta.iter().enumerate() {
        if bj != 0.0 {
            for (e, &xij) in eta.iter_mut().zip(x.column(j).iter()) {
                *e += xij * bj;
            }
        }
    }
    eta
}

/// Signed margins `r_ki = y̌_ki (x_iᵀβ − b_k)`, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginState {
    pub margins: Vec<f64>,
}

impl MarginState {
    pub fn new(design: &CompositeDesign, x: &DMatrix<f64>, coef: &CoefVector) -> Result<Self> {
        check_dims(design, x, coef)?;
        Ok(Self {
            margins: margins_unchecked(design, x, coef),
        })
    }

    /// Largest deviation from margins rebuilt from `coef`.
    pub fn max_deviation(&self, design: &CompositeDesign, x: &DMatrix<f64>, coef: &CoefVector) -> f64 {
        margins_unchecked(design, x, coef)
            .iter()
            .zip(&self.margins)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn margins_unchecked(design: &CompositeDesign, x: &DMatrix<f64>, coef: &CoefVector) -> Vec<f64> {
    let n = design.n();
    let eta = linear_predictor(x, &coef.beta);
    let mut margins = Vec::with_capacity(design.k() * n);
    for (k, &bk) in coef.intercepts.iter().enumerate() {
        margins.extend(
            design
                .layer_signs(k)
                .iter()
                .zip(&eta)
                .map(|(&s, &e)| s * (e - bk)),
        );
    }
    margins
}

/// `M_n` from precomputed margins: `−Σ_k w_k (1/n) Σ_i L(r_ki)`.
pub(crate) fn likelihood_from_margins(design: &CompositeDesign, margins: &[f64]) -> f64 {
    let n = design.n();
    let mut total = 0.0;
    for (k, &w) in design.weights().iter().enumerate() {
        let layer: f64 = margins[k * n..(k + 1) * n].iter().map(|&r| probit_loss(r)).sum();
        total += w * layer;
    }
    -total / n as f64
}

/// Composite probit log-likelihood `M_n(β, b)`.
pub fn composite_likelihood(design: &CompositeDesign, x: &DMatrix<f64>, coef: &CoefVector) -> Result<f64> {
    check_dims(design, x, coef)?;
    let margins = margins_unchecked(design, x, coef);
    let value = likelihood_from_margins(design, &margins);
    debug_assert!({
        let alt = likelihood_link_form(design, x, coef);
        (alt - value).abs() <= 1e-10 * (1.0 + value.abs())
    });
    Ok(value)
}

/// `M_n` in its `ỹ·h(η) + log(1 − Φ(η))` form.
pub fn composite_likelihood_link_form(
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    coef: &CoefVector,
) -> Result<f64> {
    check_dims(design, x, coef)?;
    Ok(likelihood_link_form(design, x, coef))
}

fn likelihood_link_form(design: &CompositeDesign, x: &DMatrix<f64>, coef: &CoefVector) -> f64 {
    let n = design.n();
    let eta = linear_predictor(x, &coef.beta);
    let mut total = 0.0;
    for (k, (&w, &bk)) in design.weights().iter().zip(&coef.intercepts).enumerate() {
        let layer: f64 = eta
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let t = e - bk;
                f64::from(design.label(k, i)) * link_h(t) + log_normal_cdf(-t)
            })
            .sum();
        total += w * layer;
    }
    total / n as f64
}

/// Gradient of `n·M_n` with respect to `β_j` for each `j` in `columns` (in
/// order), followed by the `K` intercepts.
pub fn composite_score(
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    coef: &CoefVector,
    columns: &[usize],
) -> Result<Vec<f64>> {
    check_dims(design, x, coef)?;
    if let Some(&j) = columns.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::invalid(format!("score column {j} out of range (p = {})", x.ncols())));
    }
    let margins = margins_unchecked(design, x, coef);
    Ok(score_from_margins(design, x, &margins, columns))
}

pub(crate) fn score_from_margins(
    design: &CompositeDesign,
    x: &DMatrix<f64>,
    margins: &[f64],
    columns: &[usize],
) -> Vec<f64> {
    let n = design.n();
    let k = design.k();
    // d/dη of the (k,i) log-likelihood term is −L′(r)·y̌
    let mut per_obs = vec![0.0; n];
    let mut per_layer = vec![0.0; k];
    for layer in 0..k {
        let w = design.weights()[layer];
        let signs = design.layer_signs(layer);
        let mut acc = 0.0;
        for i in 0..n {
            let g = -probit_loss_grad(margins[layer * n + i]) * signs[i];
            per_obs[i] += w * g;
            acc += g;
        }
        // η = xᵀβ − b_k, so the intercept carries a minus sign
        per_layer[layer] = -w * acc;
    }
    let mut out = Vec::with_capacity(columns.len() + k);
    for &j in columns {
        out.push(x.column(j).iter().zip(&per_obs).map(|(a, b)| a * b).sum());
    }
    out.extend(per_layer);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn thresholds_type1_rule() {
        let y: Vec<f64> = (1..=19).map(f64::from).collect();
        let th = compute_thresholds(&y, 19).unwrap();
        assert_eq!(th.values, y);
        assert!(th.warning.is_none());

        let th = compute_thresholds(&[1.0, 2.0, 3.0, 4.0, 5.0], 1).unwrap();
        assert_eq!(th.values, vec![3.0]);

        assert!(matches!(compute_thresholds(&[2.0; 10], 3), Err(Error::ConstantResponse)));
        assert!(compute_thresholds(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn ties_collapse_levels() {
        let y = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0];
        let th = compute_thresholds(&y, 3).unwrap();
        assert_eq!(th.values, vec![1.0, 2.0]);
        assert!(th.warning.is_some());
    }

    #[test]
    fn dichotomize_example() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let d = dichotomize(&y, &[3.0], &[1.0]).unwrap();
        assert_eq!(d.labels(), &[0, 0, 1, 1, 1]);
        assert_eq!(d.signs(), &[-1.0, -1.0, 1.0, 1.0, 1.0]);

        let ey: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let th = compute_thresholds(&ey, 1).unwrap();
        let d2 = dichotomize(&ey, &th.values, &[1.0]).unwrap();
        assert_eq!(d.labels(), d2.labels());

        assert!(matches!(
            dichotomize(&y, &[0.5], &[1.0]),
            Err(Error::DegenerateLayer { layer: 0, .. })
        ));
        assert!(dichotomize(&y, &[2.0, 4.0], &[1.0]).is_err());
        assert!(dichotomize(&y, &[4.0, 2.0], &[0.5, 0.5]).is_err());
        assert!(dichotomize(&y, &[2.0, 4.0], &[0.7, 0.7]).is_err());
    }

    #[test]
    fn from_response_drops_minimum_threshold() {
        let y: Vec<f64> = (1..=19).map(f64::from).collect();
        let (d, warnings) = CompositeDesign::from_response(&y, 19).unwrap();
        assert_eq!(d.k(), 18);
        assert_eq!(d.thresholds()[0], 2.0);
        assert!(!warnings.is_empty());
        assert_relative_eq!(d.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn likelihood_at_origin_with_balanced_layers() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let d = dichotomize(&y, &[4.0], &[1.0]).unwrap();
        let x = dmatrix![0.3; -1.0; 2.0; 0.5; 1.5; -0.7];
        let m = composite_likelihood(&d, &x, &CoefVector::zeros(1, 1)).unwrap();
        assert_relative_eq!(m, -std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn single_layer_matches_probit_loglik() {
        // Σ y log Φ(η) + (1−y) log Φ(−η), divided by n, from a 40-digit mpmath evaluation
        let y = [0.2, 1.4, -0.3, 2.2, 0.9];
        let x = dmatrix![1.0, 0.5; -0.4, 1.2; 0.8, -1.1; 1.9, 0.3; -0.2, -0.6];
        let d = dichotomize(&y, &[0.5], &[1.0]).unwrap();
        let coef = CoefVector {
            beta: vec![0.7, -0.4],
            intercepts: vec![0.25],
        };
        let want = -1.051_698_457_666_122_1;
        let got = composite_likelihood(&d, &x, &coef).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-13);
    }

    #[test]
    fn orthogonal_shift_leaves_likelihood_unchanged() {
        let y = [0.1, 0.5, 0.9, 1.3];
        let x = dmatrix![1.0, 1.0; 2.0, 2.0; -1.0, -1.0; 0.5, 0.5];
        let d = dichotomize(&y, &[0.4, 1.0], &[0.5, 0.5]).unwrap();
        let a = CoefVector {
            beta: vec![0.3, 0.2],
            intercepts: vec![-0.1, 0.4],
        };
        // (1, −1) is orthogonal to every row
        let b = CoefVector {
            beta: vec![1.3, -0.8],
            intercepts: a.intercepts.clone(),
        };
        let ma = composite_likelihood(&d, &x, &a).unwrap();
        let mb = composite_likelihood(&d, &x, &b).unwrap();
        assert_relative_eq!(ma, mb, epsilon = 1e-14);
    }

    #[test]
    fn score_sign_at_origin() {
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let x = DMatrix::from_fn(10, 1, |i, _| (i as f64).sin());
        let d = dichotomize(&y, &[2.0, 5.0, 8.0], &equal_weights(3)).unwrap();
        let s = composite_score(&d, &x, &CoefVector::zeros(1, 3), &[0]).unwrap();
        for k in 0..3 {
            let ybar = d.layer_mean(k);
            let entry = s[1 + k];
            assert_eq!(entry.signum(), (0.5 - ybar).signum());
            let want = -10.0 * d.weights()[k] * crate::probit::link_h_prime(0.0) * (ybar - 0.5);
            assert_relative_eq!(entry, want, epsilon = 1e-12);
        }
        assert!(composite_score(&d, &x, &CoefVector::zeros(1, 3), &[1]).is_err());
    }

    #[test]
    fn margins_roundtrip() {
        let y = [0.1, 0.5, 0.9, 1.3];
        let x = dmatrix![1.0; 2.0; -1.0; 0.5];
        let d = dichotomize(&y, &[0.4, 1.0], &[0.5, 0.5]).unwrap();
        let c = CoefVector {
            beta: vec![0.3],
            intercepts: vec![-0.1, 0.4],
        };
        let m = MarginState::new(&d, &x, &c).unwrap();
        assert_eq!(m.max_deviation(&d, &x, &c), 0.0);
        assert_relative_eq!(m.margins[1], 1.0 * (0.6 + 0.1), epsilon = 1e-15);
    }

    #[test]
    fn standardize_columns() {
        let x = dmatrix![1.0, 5.0; 2.0, 5.0; 3.0, 5.0; 6.0, 5.0];
        let ds = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let s = ds.standardized();
        assert_relative_eq!(s.x.column(0).sum(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.x.column(0).norm_squared() / 4.0, 1.0, epsilon = 1e-12);
        assert_eq!(s.x.column(1).norm(), 0.0);
    }
}
