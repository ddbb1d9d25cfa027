//! Standard-normal and probit-loss kernels.
//!
//! Every derived quantity goes through `log Φ(t)` and `log Φ(−t)` so that the
//! margins seen during early solver iterations (which can be large in
//! magnitude) never produce `0/0`, `inf/inf` or `log(0)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

/// `log(sqrt(2π))`
const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
/// `sqrt(2/π)`
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Lower-tail switch point for `log Φ`.
const LOWER_TAIL_SWITCH: f64 = -1.0;
/// `erfcx` switches from the product form to the continued fraction here.
const ERFCX_CF_SWITCH: f64 = 4.0;
const ERFCX_CF_TERMS: usize = 28;

/// A kernel evaluation carrying the value and its natural log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub log_value: f64,
}

/// Scaled complementary error function `exp(x²)·erfc(x)` for `x ≥ 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < ERFCX_CF_SWITCH {
        (x * x).exp() * erfc(x)
    } else {
        // erfc(x) = exp(-x²)/√π · 1/(x + ½/(x + 1/(x + 3/2/(x + …))))
        let mut f = x;
        for k in (1..=ERFCX_CF_TERMS).rev() {
            f = x + (k as f64 * 0.5) / f;
        }
        1.0 / (PI.sqrt() * f)
    }
}

#[inline]
pub fn log_normal_pdf(t: f64) -> f64 {
    -LOG_SQRT_2PI - 0.5 * t * t
}

#[inline]
pub fn normal_pdf(t: f64) -> f64 {
    log_normal_pdf(t).exp()
}

/// `Φ(t)`; underflows gracefully to 0 only beyond t ≈ −38.
#[inline]
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t * FRAC_1_SQRT_2)
}

/// `log Φ(t)`, accurate in both tails.
pub fn log_normal_cdf(t: f64) -> f64 {
    if t < LOWER_TAIL_SWITCH {
        // Φ(t) = ½·erfcx(x)·exp(−x²), x = −t/√2
        let x = -t * FRAC_1_SQRT_2;
        (0.5 * erfcx(x)).ln() - x * x
    } else {
        (-0.5 * erfc(t * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// `Φ(t)` together with `log Φ(t)`.
pub fn normal_cdf_value(t: f64) -> KernelValue {
    let log_value = log_normal_cdf(t);
    KernelValue {
        value: log_value.exp(),
        log_value,
    }
}

/// Inverse Mills ratio `φ(t)/Φ(t)`.
#[inline]
pub fn mills_ratio(t: f64) -> f64 {
    if t < LOWER_TAIL_SWITCH {
        SQRT_2_OVER_PI / erfcx(-t * FRAC_1_SQRT_2)
    } else {
        // Φ(t) ≥ 0.158 here, so the direct ratio is safe
        normal_pdf(t) / (1.0 - 0.5 * erfc(t * FRAC_1_SQRT_2))
    }
}

/// Probit loss `L(t) = −log Φ(t)`.
#[inline]
pub fn probit_loss(t: f64) -> f64 {
    -log_normal_cdf(t)
}

/// `L′(t) = −φ(t)/Φ(t)`.
#[inline]
pub fn probit_loss_grad(t: f64) -> f64 {
    -mills_ratio(t)
}

/// `L″(t) = m(t)·(t + m(t))` with `m` the inverse Mills ratio; lies in (0, 1).
pub fn probit_loss_hess(t: f64) -> f64 {
    let m = mills_ratio(t);
    m * (t + m)
}

/// Probit log-odds link `h(η) = log(Φ(η)/(1−Φ(η)))`.
pub fn link_h(eta: f64) -> f64 {
    log_normal_cdf(eta) - log_normal_cdf(-eta)
}

/// `h′(η) = φ(η)/(Φ(η)(1−Φ(η)))`.
pub fn link_h_prime(eta: f64) -> f64 {
    (log_normal_pdf(eta) - log_normal_cdf(eta) - log_normal_cdf(-eta)).exp()
}

/// Fisher weight `φ(t)²/(Φ(t)(1−Φ(t)))`.
pub fn sigma_weight(t: f64) -> f64 {
    (2.0 * log_normal_pdf(t) - log_normal_cdf(t) - log_normal_cdf(-t)).exp()
}
