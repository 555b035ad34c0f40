//! Independent-product priors with sampling, quantiles and moment flags.

use std::f64::consts::PI;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::models::ParamVector;
use crate::seed;
use crate::special::{norm_cdf, norm_isf, norm_quantile, norm_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prior1D {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `log X ~ N(mu, sigma²)`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Cauchy {
        loc: f64,
        scale: f64,
    },
    /// `sign · |C|` with `C ~ Cauchy(0, scale)`.
    HalfCauchy {
        scale: f64,
        sign: Sign,
    },
    StudentT {
        df: f64,
        loc: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    Yes,
    No,
    NotApplicable,
}

impl Flag {
    fn from_bool(b: bool) -> Self {
        if b {
            Flag::Yes
        } else {
            Flag::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Flag::Yes
    }

    pub fn is_no(self) -> bool {
        self == Flag::No
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Yes => "yes",
            Flag::No => "no",
            Flag::NotApplicable => "n/a",
        }
    }
}

/// Analytic moment facts about one prior component.
///
/// The tail-specific flags refine the two-sided ones: `upper_mean_finite`
/// is `E[X; X > 1] < ∞`, `lower_mean_finite` is `E[|X|; X < −1] < ∞`, and
/// the log-tail flags split `E|log X|` at 1 for positive-support families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentFlags {
    pub mean_abs_finite: Flag,
    pub second_moment_finite: Flag,
    pub expected_log_finite: Flag,
    pub expected_inverse_finite: Flag,
    pub upper_mean_finite: Flag,
    pub lower_mean_finite: Flag,
    pub upper_second_finite: Flag,
    pub lower_second_finite: Flag,
    pub log_upper_finite: Flag,
    pub log_lower_finite: Flag,
    pub support: (f64, f64),
}

impl MomentFlags {
    /// Every neighbourhood of 0 has positive probability.
    pub fn mass_near_zero(&self) -> bool {
        self.support.0 <= 0.0 && self.support.1 >= 0.0
    }

    pub fn positive_support(&self) -> bool {
        self.support.0 >= 0.0
    }
}

impl Prior1D {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior1D::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior1D::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            Prior1D::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            Prior1D::Cauchy { loc, scale } => loc.is_finite() && scale > 0.0 && scale.is_finite(),
            Prior1D::HalfCauchy { scale, .. } => scale > 0.0 && scale.is_finite(),
            Prior1D::StudentT { df, loc, scale } => {
                df > 0.0 && df.is_finite() && loc.is_finite() && scale > 0.0 && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPrior(format!("{self:?}")))
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Prior1D::Normal { .. } => "normal",
            Prior1D::LogNormal { .. } => "lognormal",
            Prior1D::Uniform { .. } => "uniform",
            Prior1D::Cauchy { .. } => "cauchy",
            Prior1D::HalfCauchy { .. } => "halfcauchy",
            Prior1D::StudentT { .. } => "studentt",
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Prior1D::LogNormal { .. } => (0.0, f64::INFINITY),
            Prior1D::Uniform { a, b } => (a, b),
            Prior1D::HalfCauchy {
                sign: Sign::Positive,
                ..
            } => (0.0, f64::INFINITY),
            Prior1D::HalfCauchy {
                sign: Sign::Negative,
                ..
            } => (f64::NEG_INFINITY, 0.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn student(df: f64, loc: f64, scale: f64) -> StudentsT {
        StudentsT::new(loc, scale, df).expect("validated Student-t parameters")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Prior1D::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            Prior1D::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_cdf((x.ln() - mu) / sigma)
                }
            }
            Prior1D::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Prior1D::Cauchy { loc, scale } => 0.5 + ((x - loc) / scale).atan() / PI,
            Prior1D::HalfCauchy { scale, sign } => {
                let y = sign.factor() * x;
                let fy = if y <= 0.0 {
                    0.0
                } else {
                    2.0 * (y / scale).atan() / PI
                };
                match sign {
                    Sign::Positive => fy,
                    Sign::Negative => 1.0 - fy,
                }
            }
            Prior1D::StudentT { df, loc, scale } => Self::student(df, loc, scale).cdf(x),
        }
    }

    /// Upper tail probability `1 − F(x)`, computed without cancellation where
    /// the family allows.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Prior1D::Normal { mean, sd } => norm_sf((x - mean) / sd),
            Prior1D::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    norm_sf((x.ln() - mu) / sigma)
                }
            }
            Prior1D::Cauchy { loc, scale } => 0.5 - ((x - loc) / scale).atan() / PI,
            _ => 1.0 - self.cdf(x),
        }
    }

    pub fn inv_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Probability(u));
        }
        Ok(match *self {
            Prior1D::Normal { mean, sd } => mean + sd * norm_quantile(u),
            Prior1D::LogNormal { mu, sigma } => (mu + sigma * norm_quantile(u)).exp(),
            Prior1D::Uniform { a, b } => a + (b - a) * u,
            Prior1D::Cauchy { loc, scale } => {
                if u < 0.5 {
                    loc - scale / (PI * u).tan()
                } else {
                    loc + scale / (PI * (1.0 - u)).tan()
                }
            }
            Prior1D::HalfCauchy { scale, sign } => match sign {
                Sign::Positive => scale * (0.5 * PI * u).tan(),
                Sign::Negative => -scale * (0.5 * PI * (1.0 - u)).tan(),
            },
            Prior1D::StudentT { df, loc, scale } => Self::student(df, loc, scale).inverse_cdf(u),
        })
    }

    /// Quantile addressed by upper-tail probability `s`, `x` with
    /// `1 − F(x) = s`.
    pub fn inv_sf(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Probability(s));
        }
        Ok(match *self {
            Prior1D::Normal { mean, sd } => mean + sd * norm_isf(s),
            Prior1D::LogNormal { mu, sigma } => (mu + sigma * norm_isf(s)).exp(),
            Prior1D::Uniform { a, b } => b - (b - a) * s,
            Prior1D::Cauchy { loc, scale } => loc + scale / (PI * s).tan(),
            Prior1D::HalfCauchy {
                scale,
                sign: Sign::Positive,
            } => scale / (0.5 * PI * s).tan(),
            _ => self.inv_cdf(1.0 - s)?,
        })
    }

    /// Transport of a standard normal abscissa `z` to this prior.
    pub fn from_std_normal(&self, z: f64) -> Result<f64> {
        match *self {
            Prior1D::Normal { mean, sd } => Ok(mean + sd * z),
            Prior1D::LogNormal { mu, sigma } => Ok((mu + sigma * z).exp()),
            _ if z <= 0.0 => self.inv_cdf(norm_cdf(z).max(f64::MIN_POSITIVE)),
            _ => self.inv_sf(norm_sf(z).max(f64::MIN_POSITIVE)),
        }
    }

    pub fn median(&self) -> f64 {
        self.inv_cdf(0.5).expect("0.5 is a valid probability")
    }

    pub fn moment_flags(&self) -> MomentFlags {
        use Flag::*;
        let support = self.support();
        let positive = support.0 >= 0.0;
        let (upper_mean, lower_mean, upper_second, lower_second) = match *self {
            Prior1D::Normal { .. } | Prior1D::LogNormal { .. } | Prior1D::Uniform { .. } => {
                (true, true, true, true)
            }
            Prior1D::Cauchy { .. } => (false, false, false, false),
            Prior1D::HalfCauchy { sign, .. } => match sign {
                Sign::Positive => (false, true, false, true),
                Sign::Negative => (true, false, true, false),
            },
            Prior1D::StudentT { df, .. } => (df > 1.0, df > 1.0, df > 2.0, df > 2.0),
        };
        // Log and reciprocal moments only make sense on positive support.
        let (log_upper, log_lower, inverse) = if !positive {
            (NotApplicable, NotApplicable, NotApplicable)
        } else {
            match *self {
                Prior1D::LogNormal { .. } => (Yes, Yes, Yes),
                // Bounded density near 0: ∫ |log x| converges, ∫ 1/x does not
                // unless the support stays away from 0.
                Prior1D::Uniform { a, .. } => (Yes, Yes, Flag::from_bool(a > 0.0)),
                Prior1D::HalfCauchy { .. } => (Yes, Yes, No),
                _ => (NotApplicable, NotApplicable, NotApplicable),
            }
        };
        let expected_log = match (log_upper, log_lower) {
            (NotApplicable, _) | (_, NotApplicable) => NotApplicable,
            (Yes, Yes) => Yes,
            _ => No,
        };
        MomentFlags {
            mean_abs_finite: Flag::from_bool(upper_mean && lower_mean),
            second_moment_finite: Flag::from_bool(upper_second && lower_second),
            expected_log_finite: expected_log,
            expected_inverse_finite: inverse,
            upper_mean_finite: Flag::from_bool(upper_mean),
            lower_mean_finite: Flag::from_bool(lower_mean),
            upper_second_finite: Flag::from_bool(upper_second),
            lower_second_finite: Flag::from_bool(lower_second),
            log_upper_finite: log_upper,
            log_lower_finite: log_lower,
            support,
        }
    }
}

/// How the independent components map to model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorTransform {
    Direct,
    /// Components are `(θ₁, δ, θ₃)`; parameters `(θ₁, θ₁ + δ, θ₃)`.
    CompartmentalDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPrior {
    pub components: Vec<Prior1D>,
    pub labels: Vec<String>,
    pub transform: PriorTransform,
}

/// Uniform draw strictly inside `(0, 1)`.
#[inline]
pub fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

impl JointPrior {
    pub fn new(components: Vec<Prior1D>) -> Result<Self> {
        for c in &components {
            c.validate()?;
        }
        let labels = (0..components.len()).map(|j| format!("beta{j}")).collect();
        Ok(Self {
            components,
            labels,
            transform: PriorTransform::Direct,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    /// Compartmental prior on `(θ₁, δ, θ₃)`; `delta` must have positive support.
    pub fn compartmental_delta(theta1: Prior1D, delta: Prior1D, theta3: Prior1D) -> Result<Self> {
        let mut jp = Self::new(vec![theta1, delta, theta3])?;
        if jp.components.iter().any(|c| c.support().0 < 0.0) {
            return Err(Error::Support(
                "compartmental components must have positive support".into(),
            ));
        }
        jp.transform = PriorTransform::CompartmentalDelta;
        jp.labels = vec!["theta1".into(), "delta".into(), "theta3".into()];
        Ok(jp)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Applies the transform to raw component values.
    pub fn map_raw(&self, mut raw: Vec<f64>) -> ParamVector {
        if self.transform == PriorTransform::CompartmentalDelta {
            raw[1] += raw[0];
        }
        ParamVector(raw)
    }

    pub fn from_uniforms(&self, u: &[f64]) -> Result<ParamVector> {
        let raw = self
            .components
            .iter()
            .zip(u)
            .map(|(c, &ui)| c.inv_cdf(ui))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.map_raw(raw))
    }

    pub fn from_std_normal(&self, z: &[f64]) -> Result<ParamVector> {
        let raw = self
            .components
            .iter()
            .zip(z)
            .map(|(c, &zi)| c.from_std_normal(zi))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.map_raw(raw))
    }

    pub fn sample_with(&self, rng: &mut impl RngCore) -> ParamVector {
        let raw: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.inv_cdf(open_uniform(rng)).expect("open uniform"))
            .collect();
        self.map_raw(raw)
    }

    /// `n` independent draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<ParamVector> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }

    pub fn median(&self) -> ParamVector {
        self.map_raw(self.components.iter().map(|c| c.median()).collect())
    }
}

/// `β₀ ~ Cauchy(0, 10)`, `β_j ~ Cauchy(0, 2.5)` for `j ≥ 1`.
pub fn gelman_prior(p: usize) -> JointPrior {
    let mut comps = vec![Prior1D::Cauchy {
        loc: 0.0,
        scale: 10.0,
    }];
    comps.extend((1..p).map(|_| Prior1D::Cauchy {
        loc: 0.0,
        scale: 2.5,
    }));
    JointPrior::new(comps).expect("valid Cauchy components")
}
