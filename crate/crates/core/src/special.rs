//! Normal-distribution helpers with accurate tails.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{PI, SQRT_2};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Beyond this `|t|` the upper tail is evaluated through the Mills ratio.
pub const MILLS_CROSSOVER: f64 = 6.0;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Mills ratio `R(t) = (1 − Φ(t)) / φ(t)` for `t > 0`, from the Laplace
/// continued fraction evaluated bottom-up.
pub fn mills_ratio(t: f64) -> f64 {
    debug_assert!(t > 0.0);
    let mut f = t;
    for k in (1..=80).rev() {
        f = t + k as f64 / f;
    }
    1.0 / f
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 − Φ(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `ln(1 − Φ(t))`, accurate far into the upper tail.
pub fn norm_ln_sf(t: f64) -> f64 {
    if t > MILLS_CROSSOVER {
        norm_ln_pdf(t) + mills_ratio(t).ln()
    } else {
        norm_sf(t).ln()
    }
}

pub fn norm_ln_cdf(x: f64) -> f64 {
    norm_ln_sf(-x)
}

/// Standard normal quantile.
pub fn norm_quantile(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    if u < 0.5 {
        -SQRT_2 * erfc_inv(2.0 * u)
    } else {
        SQRT_2 * erfc_inv(2.0 * (1.0 - u))
    }
}

/// Quantile of the upper tail: the `x` with `1 − Φ(x) = s`.
pub fn norm_isf(s: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * s)
}
