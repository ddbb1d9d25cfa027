//! Monte-Carlo calibration against the generalized chi-squared law of
//! `ZᵀAZ`, `A = T̂^{1/2} Ψ̂⁻¹ T̂^{1/2}`, `Z ~ N(0, I_r)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::plugin::{cholesky, clamp_psd_eigenvalues};

pub const DEFAULT_MC_DRAWS: usize = 100_000;
pub const MIN_MC_DRAWS: usize = 1_000;
/// Draws per RNG stream; fixes the stream layout independently of threads.
const CHUNK: usize = 4_096;

/// `T̂^{1/2} Ψ̂⁻¹ T̂^{1/2}` with the square root from a symmetric
/// eigendecomposition of `T̂` (tiny negative eigenvalues clamped at 0).
pub fn shape_matrix(psi_hat: &DMatrix<f64>, tau_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = psi_hat.nrows();
    if psi_hat.shape() != (r, r) || tau_hat.shape() != (r, r) || r == 0 {
        return Err(Error::dims("psi and tau must be square matrices of the same size"));
    }
    let chol = cholesky(psi_hat, "psi")?;
    let eig = tau_hat.clone().symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    clamp_psd_eigenvalues(&mut values, tau_hat.trace(), "tau")?;
    let root_diag = DVector::from_iterator(r, values.iter().map(|v| v.sqrt()));
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&root_diag) * eig.eigenvectors.transpose();
    let a = &root * chol.solve(&root);
    Ok((&a + a.transpose()) * 0.5)
}

/// Sorted Monte-Carlo draws of `ZᵀAZ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenChiSq {
    draws: Vec<f64>,
}

impl GenChiSq {
    /// Draw `count` values of `ZᵀAZ`. Draws come in fixed-size chunks, chunk
    /// `c` using ChaCha stream `c` of `seed`, so the result does not depend
    /// on the thread count.
    pub fn sample(a: &DMatrix<f64>, count: usize, seed: u64) -> Result<Self> {
        if count < MIN_MC_DRAWS {
            return Err(Error::invalid(format!("need at least {MIN_MC_DRAWS} Monte-Carlo draws, got {count}")));
        }
        let r = a.nrows();
        if a.shape() != (r, r) || r == 0 {
            return Err(Error::dims("shape matrix must be square"));
        }
        let a_flat: Vec<f64> = a.as_slice().to_vec();
        let chunks = count.div_ceil(CHUNK);
        let mut draws: Vec<f64> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let len = CHUNK.min(count - c * CHUNK);
                let mut z = vec![0.0; r];
                let a_flat = &a_flat;
                (0..len)
                    .map(move |_| {
                        for zi in z.iter_mut() {
                            *zi = rng.sample(StandardNormal);
                        }
                        let mut q = 0.0;
                        for col in 0..r {
                            let az: f64 = (0..r).map(|row| a_flat[col * r + row] * z[row]).sum();
                            q += z[col] * az;
                        }
                        q
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        draws.sort_by(|x, y| x.total_cmp(y));
        Ok(Self { draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    /// Empirical `(1−α)` quantile: the `⌈(1−α)N⌉`-th order statistic.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let n = self.draws.len();
        let rank = (((1.0 - alpha) * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.draws[rank - 1])
    }

    /// Add-one Monte-Carlo p-value `(#{draws ≥ x} + 1)/(N + 1)`.
    pub fn p_value(&self, x: f64) -> f64 {
        let below = self.draws.partition_point(|&d| d < x);
        let at_or_above = self.draws.len() - below;
        (at_or_above + 1) as f64 / (self.draws.len() + 1) as f64
    }
}

/// `(1−α)` quantile of `ZᵀT̂^{1/2}Ψ̂⁻¹T̂^{1/2}Z` from `draws` Monte-Carlo
/// draws, along with the sampler for p-values.
pub fn gen_chisq_quantile(
    psi_hat: &DMatrix<f64>,
    tau_hat: &DMatrix<f64>,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<(f64, GenChiSq)> {
    let a = shape_matrix(psi_hat, tau_hat)?;
    let sampler = GenChiSq::sample(&a, draws, seed)?;
    Ok((sampler.quantile(alpha)?, sampler))
}
