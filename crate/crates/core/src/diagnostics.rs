//! Singular-prior verdicts from analytic moment flags, and an empirical
//! divergence probe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DEFAULT_RCOND;
use crate::models::{Design, Link, ModelSpec};
use crate::objective::DesignContext;
use crate::priors::{Flag, JointPrior, MomentFlags, Prior1D, PriorTransform, Sign};
use crate::seed;

/// The result a verdict rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Exponential rate: non-singular iff `E β < ∞`.
    ExponentialRateMean,
    /// Exponential scale: singular iff `E 1/θ = ∞` or `E log θ = ∞`.
    ExponentialScaleMoments,
    /// Exponential scale with a `U(0, a)` prior.
    ExponentialScaleUniform,
    /// Compartmental tail conditions on `θ₁`, `θ₃` and `δ`.
    CompartmentalTails,
    /// Logistic: all first moments finite.
    LogisticFiniteMeans,
    /// Logistic: an independent heavy-tailed coefficient on a non-vanishing
    /// regressor.
    LogisticHeavyComponent,
    /// Logistic with intercept under independent Cauchy priors.
    LogisticCauchyPrior,
    /// Probit: all pairwise cross moments finite.
    ProbitFiniteCrossMoments,
    /// Probit: an independent coefficient with infinite upper second moment.
    ProbitHeavyComponent,
    /// Probit with intercept under independent Cauchy priors.
    ProbitCauchyPrior,
    /// Poisson: all first moments finite.
    PoissonFiniteMeans,
    /// Poisson: negative heavy-tailed coefficient on a positive regressor.
    PoissonNegativeHeavy,
    /// Poisson with intercept under a negative half-Cauchy prior.
    PoissonNegativeHalfCauchy,
    /// Logistic in `(μ, β₁)` form: `E|μβ₁|`, `E|β₁|` finite and
    /// `E log|β₁| > −∞`.
    LocationSlopeMoments,
}

impl Rule {
    pub fn citation(self) -> &'static str {
        match self {
            Rule::ExponentialRateMean => "Prop 1",
            Rule::ExponentialScaleMoments => "Prop 2",
            Rule::ExponentialScaleUniform => "Cor 1",
            Rule::CompartmentalTails => "Prop 3",
            Rule::LogisticFiniteMeans => "Thm 1",
            Rule::LogisticHeavyComponent => "Prop 4",
            Rule::LogisticCauchyPrior => "Cor 2",
            Rule::ProbitFiniteCrossMoments => "Thm 2",
            Rule::ProbitHeavyComponent => "Prop 6",
            Rule::ProbitCauchyPrior => "Cor 3",
            Rule::PoissonFiniteMeans => "Thm 3",
            Rule::PoissonNegativeHeavy => "Poisson Prop",
            Rule::PoissonNegativeHalfCauchy => "Poisson Cor",
            Rule::LocationSlopeMoments => "Prop 7",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Singular(Rule),
    NonSingular(Rule),
    /// Conditions that could not be decided.
    Inconclusive(Vec<String>),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Singular(_) => "singular",
            Verdict::NonSingular(_) => "non-singular",
            Verdict::Inconclusive(_) => "inconclusive",
        }
    }

    pub fn citation(&self) -> Option<&'static str> {
        match self {
            Verdict::Singular(r) | Verdict::NonSingular(r) => Some(r.citation()),
            Verdict::Inconclusive(_) => None,
        }
    }

    /// CLI exit code: 0 non-singular, 2 singular, 3 inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::NonSingular(_) => 0,
            Verdict::Singular(_) => 2,
            Verdict::Inconclusive(_) => 3,
        }
    }
}

fn is_cauchy(p: &Prior1D) -> bool {
    matches!(p, Prior1D::Cauchy { .. })
}

/// Index of the intercept term, if any.
fn intercept_index(model: &ModelSpec) -> Option<usize> {
    match model {
        ModelSpec::Glm { terms, .. } => terms.iter().position(|t| t.is_intercept()),
        _ => None,
    }
}

/// Every other component puts mass in each neighbourhood of 0, so the
/// conditioning event `{|β_k| < δ, k ≠ j}` has positive probability.
fn others_near_zero(flags: &[MomentFlags], j: usize) -> bool {
    flags
        .iter()
        .enumerate()
        .all(|(k, f)| k == j || f.mass_near_zero())
}

pub fn diagnose(model: &ModelSpec, prior: &JointPrior) -> Result<Verdict> {
    let p = model.n_params();
    if prior.dim() != p {
        return Err(Error::Dimension {
            expected: p,
            got: prior.dim(),
        });
    }
    let flags: Vec<MomentFlags> = prior.components.iter().map(|c| c.moment_flags()).collect();
    let all = |pred: fn(&MomentFlags) -> Flag| flags.iter().all(|f| pred(f).is_yes());

    Ok(match model {
        ModelSpec::ExponentialBeta => {
            if flags[0].support.0 < 0.0 {
                return Err(Error::Support(
                    "rate prior must have positive support".into(),
                ));
            }
            if flags[0].upper_mean_finite.is_yes() {
                Verdict::NonSingular(Rule::ExponentialRateMean)
            } else {
                Verdict::Singular(Rule::ExponentialRateMean)
            }
        }
        ModelSpec::ExponentialTheta => {
            let f = &flags[0];
            if !f.positive_support() {
                return Err(Error::Support(
                    "scale prior must have positive support".into(),
                ));
            }
            let singular = f.expected_inverse_finite.is_no() || f.log_upper_finite.is_no();
            if singular {
                if matches!(prior.components[0], Prior1D::Uniform { a, .. } if a == 0.0) {
                    Verdict::Singular(Rule::ExponentialScaleUniform)
                } else {
                    Verdict::Singular(Rule::ExponentialScaleMoments)
                }
            } else {
                Verdict::NonSingular(Rule::ExponentialScaleMoments)
            }
        }
        ModelSpec::Compartmental => diagnose_compartmental(prior, &flags),
        ModelSpec::Glm { link, .. } => {
            let heavy_intercept = intercept_index(model);
            match link {
                Link::Logit => {
                    if all(|f| f.mean_abs_finite) {
                        Verdict::NonSingular(Rule::LogisticFiniteMeans)
                    } else if heavy_intercept.is_some_and(|j| {
                        let f = &flags[j];
                        f.upper_mean_finite.is_no()
                            && f.support.1 > 1.0
                            && others_near_zero(&flags, j)
                    }) {
                        if prior.components.iter().all(is_cauchy) {
                            Verdict::Singular(Rule::LogisticCauchyPrior)
                        } else {
                            Verdict::Singular(Rule::LogisticHeavyComponent)
                        }
                    } else {
                        Verdict::Inconclusive(vec![inconclusive_glm_note(model, "E|β_j| = ∞")])
                    }
                }
                Link::Probit => {
                    if all(|f| f.second_moment_finite) {
                        Verdict::NonSingular(Rule::ProbitFiniteCrossMoments)
                    } else if heavy_intercept
                        .filter(|&j| {
                            let f = &flags[j];
                            f.upper_second_finite.is_no()
                                && f.support.1 > 1.0
                                && others_near_zero(&flags, j)
                        })
                        .is_some()
                    {
                        if prior.components.iter().all(is_cauchy) {
                            Verdict::Singular(Rule::ProbitCauchyPrior)
                        } else {
                            Verdict::Singular(Rule::ProbitHeavyComponent)
                        }
                    } else {
                        Verdict::Inconclusive(vec![inconclusive_glm_note(model, "E β_j² = ∞")])
                    }
                }
                Link::Log => {
                    if all(|f| f.mean_abs_finite) {
                        Verdict::NonSingular(Rule::PoissonFiniteMeans)
                    } else if let Some(j) = heavy_intercept.filter(|&j| {
                        let f = &flags[j];
                        f.support.1 <= 0.0
                            && f.support.0 < -1.0
                            && f.lower_mean_finite.is_no()
                            && others_near_zero(&flags, j)
                            && flags
                                .iter()
                                .enumerate()
                                .all(|(k, g)| k == j || g.mean_abs_finite.is_yes())
                    }) {
                        if matches!(
                            prior.components[j],
                            Prior1D::HalfCauchy {
                                sign: Sign::Negative,
                                ..
                            }
                        ) {
                            Verdict::Singular(Rule::PoissonNegativeHalfCauchy)
                        } else {
                            Verdict::Singular(Rule::PoissonNegativeHeavy)
                        }
                    } else {
                        Verdict::Inconclusive(vec![inconclusive_glm_note(
                            model,
                            "negative-support heavy intercept with finite other means",
                        )])
                    }
                }
            }
        }
        ModelSpec::LogisticMuBeta => {
            // Under independence E|μβ₁| = E|μ| E|β₁|. Every supported family
            // has a bounded density at 0, so E log|β₁| > −∞ always holds.
            let (mu, b1) = (&flags[0], &flags[1]);
            if mu.mean_abs_finite.is_yes() && b1.mean_abs_finite.is_yes() {
                Verdict::NonSingular(Rule::LocationSlopeMoments)
            } else {
                let mut missing = Vec::new();
                if mu.mean_abs_finite.is_no() || b1.mean_abs_finite.is_no() {
                    missing.push("E|μ β₁| < ∞".to_string());
                }
                if b1.mean_abs_finite.is_no() {
                    missing.push("E|β₁| < ∞".to_string());
                }
                Verdict::Inconclusive(missing)
            }
        }
    })
}

fn inconclusive_glm_note(model: &ModelSpec, what: &str) -> String {
    if intercept_index(model).is_none() {
        format!("{what} on a non-intercept term: monomials vanish inside the cube, so not every design is singular")
    } else {
        format!("{what} without an independent heavy-tailed intercept")
    }
}

fn diagnose_compartmental(prior: &JointPrior, flags: &[MomentFlags]) -> Verdict {
    let (t1, t3) = (&flags[0], &flags[2]);
    let mut missing = Vec::new();
    // Standing hypothesis: ∫_{θ₃>1} log θ₃ dP < ∞.
    match t3.log_upper_finite {
        Flag::Yes => {}
        Flag::No => return Verdict::Inconclusive(vec!["∫_{θ₃>1} log θ₃ dP = ∞".into()]),
        Flag::NotApplicable => {
            return Verdict::Inconclusive(vec!["θ₃ prior must have positive support".into()])
        }
    }
    if t1.upper_mean_finite.is_no() {
        return Verdict::Singular(Rule::CompartmentalTails);
    }
    if t3.log_lower_finite.is_no() {
        return Verdict::Singular(Rule::CompartmentalTails);
    }
    match prior.transform {
        PriorTransform::CompartmentalDelta => {
            if flags[1].log_lower_finite.is_no() {
                return Verdict::Singular(Rule::CompartmentalTails);
            }
            missing.push("no non-singularity converse for the compartmental model".into());
        }
        PriorTransform::Direct => {
            missing.push(
                "δ = θ₂ − θ₁ log-integrability is undecidable for a prior on (θ₁, θ₂)".into(),
            );
        }
    }
    Verdict::Inconclusive(missing)
}

/// Nested Monte Carlo estimates of `E log|M(ξ;β)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub sizes: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Running estimate using node midpoints.
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Least-squares slope of the estimate against `ln N`.
    pub slope: f64,
}

impl ProbeReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.estimates.windows(2).all(|w| w[1] < w[0])
    }
}

pub fn divergence_probe(
    model: &ModelSpec,
    prior: &JointPrior,
    xi: &Design,
    sizes: &[usize],
    seed: u64,
) -> Result<ProbeReport> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] == 0 {
        return Err(Error::InvalidParameter(
            "probe sizes must be increasing and positive".into(),
        ));
    }
    let mut ctx = DesignContext::new(model, xi)?;
    let mut rng = seed::rng(seed);
    let (mut slo, mut shi, mut smid, mut smid2) = (0.0, 0.0, 0.0, 0.0);
    let mut report = ProbeReport {
        sizes: sizes.to_vec(),
        lower: Vec::new(),
        upper: Vec::new(),
        estimates: Vec::new(),
        std_errors: Vec::new(),
        slope: 0.0,
    };
    let mut drawn = 0usize;
    for &n in sizes {
        while drawn < n {
            let beta = prior.sample_with(&mut rng);
            let v = ctx.node_value(&beta, DEFAULT_RCOND)?;
            let mid = 0.5 * (v.lower() + v.upper());
            slo += v.lower();
            shi += v.upper();
            smid += mid;
            smid2 += mid * mid;
            drawn += 1;
        }
        let nf = n as f64;
        let mean = smid / nf;
        let var = (smid2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
        report.lower.push(slo / nf);
        report.upper.push(shi / nf);
        report.estimates.push(mean);
        report.std_errors.push((var / nf).sqrt());
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = report.estimates.iter().sum::<f64>() / xs.len() as f64;
    let sxy: f64 = xs
        .iter()
        .zip(&report.estimates)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    report.slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(report)
}
