//! GLM links, observation weights and monomial regressors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_ln_cdf, norm_ln_pdf, norm_ln_sf};

/// Cap on `|η|` when exponentiating for the log link.
pub const ETA_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Probit,
    Log,
}

/// Value of `w(η)` together with its exact logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub value: f64,
    pub ln: f64,
    /// The value was clamped into the positive normal range or `η` hit the
    /// overflow guard; callers should treat the node through its bounds.
    pub saturated: bool,
}

impl Link {
    /// `ln w(η)`, exact in log space for every finite `η`.
    pub fn ln_weight(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let a = eta.abs();
                -a - 2.0 * (-a).exp().ln_1p()
            }
            Link::Probit => {
                // w is even in η; φ(t)² / (Φ(t)(1 − Φ(t))) at t = |η|.
                let t = eta.abs();
                2.0 * norm_ln_pdf(t) - norm_ln_cdf(t) - norm_ln_sf(t)
            }
            Link::Log => eta,
        }
    }

    pub fn weight(self, eta: f64) -> Weight {
        let mut saturated = false;
        let ln = match self {
            Link::Log if eta.abs() > ETA_GUARD => {
                saturated = true;
                eta.clamp(-ETA_GUARD, ETA_GUARD)
            }
            _ => self.ln_weight(eta),
        };
        let mut value = ln.exp();
        if value < f64::MIN_POSITIVE {
            value = f64::MIN_POSITIVE;
            saturated = true;
        }
        Weight {
            value,
            ln: self.ln_weight(eta),
            saturated,
        }
    }

    /// Inverse link `μ(η)`.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Link::Logit => expit(eta),
            Link::Probit => crate::special::norm_cdf(eta),
            Link::Log => eta.min(ETA_GUARD).exp(),
        }
    }
}

impl FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "log" | "poisson" => Ok(Link::Log),
            other => Err(Error::Parse(format!("unknown link `{other}`"))),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Log => "log",
        })
    }
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Monomial regressor `Π_k x_k^{e_k}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegressorTerm {
    pub exponents: Vec<u32>,
}

impl RegressorTerm {
    pub fn intercept(factors: usize) -> Self {
        Self {
            exponents: vec![0; factors],
        }
    }

    pub fn main(factors: usize, k: usize) -> Self {
        let mut exponents = vec![0; factors];
        exponents[k] = 1;
        Self { exponents }
    }

    pub fn interaction(factors: usize, a: usize, b: usize) -> Self {
        let mut exponents = vec![0; factors];
        exponents[a] += 1;
        exponents[b] += 1;
        Self { exponents }
    }

    pub fn is_intercept(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }

    /// Parses `1`, `x2`, `x1*x3`, `x1^2`.
    pub fn parse(s: &str, factors: usize) -> Result<Self> {
        let s = s.trim();
        let mut exponents = vec![0u32; factors];
        if s == "1" {
            return Ok(Self { exponents });
        }
        for factor in s.split('*') {
            let factor = factor.trim();
            let (name, power) = match factor.split_once('^') {
                Some((n, e)) => (
                    n.trim(),
                    e.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Parse(format!("bad exponent in `{s}`")))?,
                ),
                None => (factor, 1),
            };
            let idx = name
                .strip_prefix('x')
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&k| k >= 1 && k <= factors)
                .ok_or_else(|| Error::Parse(format!("bad factor `{name}` in term `{s}`")))?;
            exponents[idx - 1] += power;
        }
        Ok(Self { exponents })
    }
}

impl fmt::Display for RegressorTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_intercept() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(k, &e)| {
                if e == 1 {
                    format!("x{}", k + 1)
                } else {
                    format!("x{}^{}", k + 1, e)
                }
            })
            .collect();
        f.write_str(&parts.join("*"))
    }
}

/// Intercept, main effects and all two-factor interactions.
pub fn two_factor_terms(factors: usize) -> Vec<RegressorTerm> {
    let mut terms = vec![RegressorTerm::intercept(factors)];
    terms.extend((0..factors).map(|k| RegressorTerm::main(factors, k)));
    for a in 0..factors {
        for b in (a + 1)..factors {
            terms.push(RegressorTerm::interaction(factors, a, b));
        }
    }
    terms
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn weights_at_zero() {
        assert_eq!(Link::Logit.weight(0.0).value, 0.25);
        assert_relative_eq!(
            Link::Probit.weight(0.0).value,
            2.0 / std::f64::consts::PI,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            Link::Probit.weight(0.0).value,
            std::f64::consts::FRAC_2_PI,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            Link::Log.weight(1.0).value,
            std::f64::consts::E,
            epsilon = 1e-15
        );
    }

    #[test]
    fn probit_tail_matches_asymptote() {
        // w(η) √(2π) e^{η²/2} / |η| → 1
        let eta: f64 = 8.0;
        let ratio = (Link::Probit.ln_weight(eta)
            + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + 0.5 * eta * eta
            - eta.ln())
        .exp();
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
        let far = 200.0_f64;
        let ratio = (Link::Probit.ln_weight(far)
            + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + 0.5 * far * far
            - far.ln())
        .exp();
        assert!((ratio - 1.0).abs() < 1e-4);
    }

    #[test]
    fn probit_is_smooth_across_crossover() {
        let a = Link::Probit.ln_weight(6.0 - 1e-9);
        let b = Link::Probit.ln_weight(6.0 + 1e-9);
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn log_link_guard_flags_saturation() {
        let w = Link::Log.weight(800.0);
        assert!(w.saturated && w.value.is_finite());
        assert_eq!(w.ln, 800.0);
        let w = Link::Logit.weight(-1000.0);
        assert!(w.saturated && w.value > 0.0);
    }

    #[test]
    fn term_parsing_round_trips() {
        let t = RegressorTerm::parse("x1*x3", 3).unwrap();
        assert_eq!(t.exponents, vec![1, 0, 1]);
        assert_eq!(t.to_string(), "x1*x3");
        assert!(RegressorTerm::parse("1", 3).unwrap().is_intercept());
        assert_eq!(
            RegressorTerm::parse("x2^2", 2).unwrap().exponents,
            vec![0, 2]
        );
        assert!(RegressorTerm::parse("x4", 3).is_err());
        assert!(RegressorTerm::parse("y1", 3).is_err());
    }

    proptest! {
        #[test]
        fn logit_weight_is_bernoulli_variance(eta in -30.0f64..30.0) {
            let pi = expit(eta);
            let w = Link::Logit.weight(eta).value;
            prop_assert!((w - pi * (1.0 - pi)).abs() <= 1e-14);
        }

        #[test]
        fn weights_are_positive_and_even(eta in -50.0f64..50.0) {
            for link in [Link::Logit, Link::Probit] {
                let w = link.weight(eta);
                prop_assert!(w.value > 0.0);
                prop_assert!((link.ln_weight(eta) - link.ln_weight(-eta)).abs() < 1e-12);
            }
        }
    }
}
