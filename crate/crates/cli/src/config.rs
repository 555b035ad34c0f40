//! Run configuration: one TOML file with `[model]`, `[[prior]]`,
//! `[quadrature]`, `[search]`, `[profile]` and `[output]` blocks.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use bodx::models::{two_factor_terms, Link, ModelSpec, RegressorTerm};
use bodx::priors::{JointPrior, Prior1D, Sign};
use bodx::quadrature::{self, QuadratureScheme};
use bodx::seed;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; every stochastic step derives its own stream from it.
    pub seed: u64,
    pub model: ModelBlock,
    #[serde(default)]
    pub prior: Vec<PriorBlock>,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
    #[serde(default)]
    pub search: SearchBlock,
    #[serde(default)]
    pub profile: ProfileBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// `glm`, `exponential-beta`, `exponential-theta`, `compartmental` or
    /// `logistic-mu-beta`.
    pub family: String,
    pub link: Option<String>,
    pub factors: Option<usize>,
    /// Regressor terms such as `"1"`, `"x1"`, `"x1*x2"`, `"x2^2"`; omitted
    /// means intercept, main effects and two-factor interactions.
    pub terms: Option<Vec<String>>,
    /// Compartmental prior coordinates: `direct` (θ₁, θ₂, θ₃) or `delta`
    /// (θ₁, δ = θ₂ − θ₁, θ₃).
    pub transform: Option<String>,
    /// Upper end of the time axis for search (default 10× the prior-median
    /// lifetime).
    pub time_upper: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    pub label: Option<String>,
    pub family: String,
    pub loc: Option<f64>,
    pub scale: Option<f64>,
    pub sd: Option<f64>,
    pub var: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub df: Option<f64>,
    pub sign: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureBlock {
    /// `radial-spherical`, `monte-carlo` or `lhs`.
    pub method: String,
    pub n: Option<usize>,
    pub n_radial: Option<usize>,
    pub n_rotations: Option<usize>,
    pub seed: Option<u64>,
}

impl Default for QuadratureBlock {
    fn default() -> Self {
        Self {
            method: "radial-spherical".into(),
            n: None,
            n_radial: Some(3),
            n_rotations: Some(1),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchBlock {
    pub n: usize,
    pub starts: usize,
    pub max_passes: usize,
    pub grid_points: usize,
    pub golden_iters: usize,
    pub tol: f64,
    pub rcond: f64,
    pub seed: Option<u64>,
}

impl Default for SearchBlock {
    fn default() -> Self {
        let s = bodx::SearchSettings::default();
        Self {
            n: 16,
            starts: s.n_starts,
            max_passes: s.max_passes,
            grid_points: s.grid_points,
            golden_iters: s.golden_iters,
            tol: s.tol,
            rcond: bodx::linalg::DEFAULT_RCOND,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileBlock {
    pub local_starts: usize,
    pub grid_points: usize,
    pub draws_per_point: usize,
    pub marginal_draws: usize,
    /// Ψ quadrature size (Latin hypercube) for the `psi` objective.
    pub psi_nodes: usize,
    /// Largest tolerated weight of uninformative nodes in Ψ.
    pub max_bracket_mass: f64,
}

impl Default for ProfileBlock {
    fn default() -> Self {
        Self {
            local_starts: 10,
            grid_points: 21,
            draws_per_point: 2000,
            marginal_draws: 10_000,
            psi_nodes: 1000,
            max_bracket_mass: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("bodx-out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.model()?;
        cfg.prior()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<ModelSpec> {
        let m = &self.model;
        Ok(match m.family.as_str() {
            "exponential-beta" => ModelSpec::ExponentialBeta,
            "exponential-theta" => ModelSpec::ExponentialTheta,
            "compartmental" => ModelSpec::Compartmental,
            "logistic-mu-beta" => ModelSpec::LogisticMuBeta,
            "glm" => {
                let link: Link = m
                    .link
                    .as_deref()
                    .context("model.link is required for a glm")?
                    .parse()?;
                let q = m.factors.context("model.factors is required for a glm")?;
                let terms = match &m.terms {
                    None => two_factor_terms(q),
                    Some(ts) => ts
                        .iter()
                        .map(|t| RegressorTerm::parse(t, q))
                        .collect::<bodx::Result<Vec<_>>>()?,
                };
                ModelSpec::glm(link, terms)
            }
            other => bail!("unknown model family `{other}`"),
        })
    }

    pub fn prior(&self) -> Result<JointPrior> {
        let model = self.model()?;
        let comps = self
            .prior
            .iter()
            .enumerate()
            .map(|(i, b)| {
                b.to_prior()
                    .with_context(|| format!("prior block {}", i + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        if comps.len() != model.n_params() {
            bail!(
                "model has {} parameters but {} prior blocks were given",
                model.n_params(),
                comps.len()
            );
        }
        let delta = matches!(model, ModelSpec::Compartmental)
            && self.model.transform.as_deref() == Some("delta");
        let jp = if delta {
            JointPrior::compartmental_delta(comps[0], comps[1], comps[2])?
        } else {
            if let Some(t) = &self.model.transform {
                if t != "direct" {
                    bail!("unknown transform `{t}`");
                }
            }
            JointPrior::new(comps)?
        };
        let labels: Vec<String> = self
            .prior
            .iter()
            .zip(model.param_labels())
            .map(|(b, d)| b.label.clone().unwrap_or(d))
            .collect();
        Ok(jp.with_labels(labels))
    }

    pub fn quadrature_seed(&self) -> u64 {
        self.quadrature
            .seed
            .unwrap_or_else(|| seed::derive(self.seed, "quadrature"))
    }

    pub fn search_seed(&self) -> u64 {
        self.search
            .seed
            .unwrap_or_else(|| seed::derive(self.seed, "search"))
    }

    pub fn quadrature(&self) -> Result<QuadratureScheme> {
        let prior = self.prior()?;
        let q = &self.quadrature;
        let s = self.quadrature_seed();
        Ok(match q.method.as_str() {
            "radial-spherical" => quadrature::radial_spherical(
                &prior,
                q.n_radial.unwrap_or(3),
                q.n_rotations.unwrap_or(1),
                s,
            )?,
            "monte-carlo" => {
                quadrature::monte_carlo(&prior, q.n.context("quadrature.n is required")?, s)?
            }
            "lhs" => {
                quadrature::latin_hypercube(&prior, q.n.context("quadrature.n is required")?, s)?
            }
            other => bail!("unknown quadrature method `{other}`"),
        })
    }

    pub fn search_settings(
        &self,
        starts: Option<usize>,
        seed: Option<u64>,
    ) -> bodx::SearchSettings {
        let s = &self.search;
        let time_upper = self.model.time_upper.or_else(|| {
            let model = self.model().ok()?;
            let median = self.prior().ok()?.median();
            Some(bodx::optimizer::default_time_upper(&model, &median))
        });
        bodx::SearchSettings {
            n_starts: starts.unwrap_or(s.starts),
            max_passes: s.max_passes,
            grid_points: s.grid_points,
            golden_iters: s.golden_iters,
            seed: seed.unwrap_or_else(|| self.search_seed()),
            tol: s.tol,
            time_upper,
        }
    }
}

fn need(v: Option<f64>, key: &str) -> Result<f64> {
    v.with_context(|| format!("missing `{key}`"))
}

/// Standard deviation from exactly one of `sd` and `var`.
fn spread(b: &PriorBlock) -> Result<f64> {
    match (b.sd, b.var) {
        (Some(sd), None) => Ok(sd),
        (None, Some(v)) if v > 0.0 => Ok(v.sqrt()),
        (None, Some(v)) => bail!("var must be positive, got {v}"),
        (Some(_), Some(_)) => bail!("give `sd` or `var`, not both"),
        (None, None) => bail!("`{}` needs an explicit `sd` or `var`", b.family),
    }
}

impl PriorBlock {
    pub fn to_prior(&self) -> Result<Prior1D> {
        let p = match self.family.as_str() {
            "normal" => Prior1D::Normal {
                mean: need(self.loc, "loc")?,
                sd: spread(self)?,
            },
            "lognormal" => Prior1D::LogNormal {
                mu: need(self.loc, "loc")?,
                sigma: spread(self)?,
            },
            "uniform" => Prior1D::Uniform {
                a: need(self.a, "a")?,
                b: need(self.b, "b")?,
            },
            "cauchy" => Prior1D::Cauchy {
                loc: self.loc.unwrap_or(0.0),
                scale: need(self.scale, "scale")?,
            },
            "half-cauchy" => Prior1D::HalfCauchy {
                scale: need(self.scale, "scale")?,
                sign: match self.sign.as_deref().unwrap_or("positive") {
                    "positive" => Sign::Positive,
                    "negative" => Sign::Negative,
                    s => bail!("sign must be `positive` or `negative`, got `{s}`"),
                },
            },
            "student-t" => Prior1D::StudentT {
                df: need(self.df, "df")?,
                loc: self.loc.unwrap_or(0.0),
                scale: need(self.scale, "scale")?,
            },
            other => bail!("unknown prior family `{other}`"),
        };
        p.validate()?;
        Ok(p)
    }
}
