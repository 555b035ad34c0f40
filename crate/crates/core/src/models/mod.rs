//! Model families and their Fisher information matrices (σ² = γ = 1).

pub mod compartmental;
pub mod design;
pub mod glm;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

pub use design::{Design, Region};
pub use glm::{expit, two_factor_terms, Link, RegressorTerm, Weight};

/// A parameter vector; labels live on the [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// `δ = θ₂ − θ₁` for the compartmental model.
    pub fn delta(&self) -> f64 {
        self.0[1] - self.0[0]
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `E y = e^{−βx}`, p = 1.
    ExponentialBeta,
    /// `E y = e^{−x/θ}`, p = 1.
    ExponentialTheta,
    /// `E y = θ₃(e^{−θ₁x} − e^{−θ₂x})`, p = 3.
    Compartmental,
    Glm {
        link: Link,
        terms: Vec<RegressorTerm>,
    },
    /// Logistic model `logit π = β₁(x − μ)` with parameters `(μ, β₁)`.
    LogisticMuBeta,
}

impl ModelSpec {
    pub fn glm(link: Link, terms: Vec<RegressorTerm>) -> Self {
        ModelSpec::Glm { link, terms }
    }

    pub fn n_params(&self) -> usize {
        match self {
            ModelSpec::ExponentialBeta | ModelSpec::ExponentialTheta => 1,
            ModelSpec::Compartmental => 3,
            ModelSpec::Glm { terms, .. } => terms.len(),
            ModelSpec::LogisticMuBeta => 2,
        }
    }

    pub fn region(&self) -> Region {
        match self {
            ModelSpec::ExponentialBeta | ModelSpec::ExponentialTheta | ModelSpec::Compartmental => {
                Region::TimeAxis
            }
            ModelSpec::Glm { terms, .. } => Region::Cube {
                factors: terms.first().map_or(1, |t| t.exponents.len()),
            },
            ModelSpec::LogisticMuBeta => Region::Cube { factors: 1 },
        }
    }

    pub fn link(&self) -> Option<Link> {
        match self {
            ModelSpec::Glm { link, .. } => Some(*link),
            ModelSpec::LogisticMuBeta => Some(Link::Logit),
            _ => None,
        }
    }

    pub fn param_labels(&self) -> Vec<String> {
        match self {
            ModelSpec::ExponentialBeta => vec!["beta".into()],
            ModelSpec::ExponentialTheta => vec!["theta".into()],
            ModelSpec::Compartmental => vec!["theta1".into(), "theta2".into(), "theta3".into()],
            ModelSpec::Glm { terms, .. } => (0..terms.len()).map(|j| format!("beta{j}")).collect(),
            ModelSpec::LogisticMuBeta => vec!["mu".into(), "beta1".into()],
        }
    }

    pub fn validate_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        match self {
            ModelSpec::ExponentialBeta | ModelSpec::ExponentialTheta if theta[0] <= 0.0 => Err(
                Error::InvalidParameter(format!("exponential parameter must be > 0, got {}", theta[0])),
            ),
            ModelSpec::Compartmental
                if !(theta[0] > 0.0 && theta[1] > theta[0] && theta[2] > 0.0) =>
            {
                Err(Error::InvalidParameter(format!(
                    "compartmental parameters need theta2 > theta1 > 0 and theta3 > 0, got {theta:?}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn check_design(&self, xi: &Design) -> Result<()> {
        let want = self.region();
        if want != xi.region() {
            return Err(Error::InvalidDesign(format!(
                "design region {:?} does not match model region {want:?}",
                xi.region()
            )));
        }
        Ok(())
    }

    /// Regression vector `f(x)` (GLM terms; `(1, x)` for the μ/β₁ form).
    pub fn regress(&self, x: &[f64]) -> Result<Vec<f64>> {
        let region = self.region();
        if x.len() != region.factors() {
            return Err(Error::Dimension {
                expected: region.factors(),
                got: x.len(),
            });
        }
        if let Some(j) = x.iter().position(|&v| !region.contains(v)) {
            return Err(Error::OutOfRegion {
                index: j,
                detail: format!("coordinate {} outside region", x[j]),
            });
        }
        match self {
            ModelSpec::Glm { terms, .. } => Ok(terms.iter().map(|t| t.eval(x)).collect()),
            ModelSpec::LogisticMuBeta => Ok(vec![1.0, x[0]]),
            _ => Err(Error::Unsupported(
                "regression vectors exist only for GLM families".into(),
            )),
        }
    }

    /// Rows of the model matrix `F`.
    pub fn model_rows(&self, xi: &Design) -> Result<Vec<Vec<f64>>> {
        self.check_design(xi)?;
        xi.points().map(|x| self.regress(x)).collect()
    }

    /// `FᵀF`.
    pub fn model_matrix(&self, xi: &Design) -> Result<SymMatrix> {
        let rows = self.model_rows(xi)?;
        let p = rows[0].len();
        let mut m = SymMatrix::zeros(p);
        for f in &rows {
            m.add_outer(1.0, f);
        }
        Ok(m)
    }

    /// Linear predictor at each design point.
    pub fn linear_predictors(&self, xi: &Design, beta: &[f64]) -> Result<Vec<f64>> {
        match self {
            ModelSpec::Glm { terms, .. } => Ok(xi
                .points()
                .map(|x| terms.iter().zip(beta).map(|(t, b)| t.eval(x) * b).sum())
                .collect()),
            ModelSpec::LogisticMuBeta => {
                Ok(xi.points().map(|x| beta[1] * (x[0] - beta[0])).collect())
            }
            _ => Err(Error::Unsupported(
                "linear predictor only defined for GLMs".into(),
            )),
        }
    }

    pub fn info_matrix(&self, xi: &Design, theta: &[f64]) -> Result<SymMatrix> {
        self.validate_params(theta)?;
        self.check_design(xi)?;
        let m = match self {
            ModelSpec::ExponentialBeta => {
                let b = theta[0];
                let v: f64 = xi
                    .points()
                    .map(|x| x[0] * x[0] * (-2.0 * b * x[0]).exp())
                    .sum();
                SymMatrix::from_diag(&[v])
            }
            ModelSpec::ExponentialTheta => {
                let t = theta[0];
                let v: f64 = xi
                    .points()
                    .map(|x| x[0] * x[0] * (-2.0 * x[0] / t).exp())
                    .sum::<f64>()
                    / t.powi(4);
                SymMatrix::from_diag(&[v])
            }
            ModelSpec::Compartmental => {
                let mut m = SymMatrix::zeros(3);
                for x in xi.points() {
                    m.add_outer(1.0, &compartmental::gradient(theta, x[0]));
                }
                m
            }
            ModelSpec::Glm { link, terms } => {
                let mut m = SymMatrix::zeros(terms.len());
                for x in xi.points() {
                    let f: Vec<f64> = terms.iter().map(|t| t.eval(x)).collect();
                    let eta: f64 = f.iter().zip(theta).map(|(a, b)| a * b).sum();
                    m.add_outer(link.weight(eta).value, &f);
                }
                m
            }
            ModelSpec::LogisticMuBeta => {
                let (mu, b1) = (theta[0], theta[1]);
                let mut m = SymMatrix::zeros(2);
                for x in xi.points() {
                    let eta = b1 * (x[0] - mu);
                    let w = Link::Logit.weight(eta).value;
                    m.add_outer(w, &[-b1, x[0] - mu]);
                }
                m
            }
        };
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(m)
    }

    /// Median-based lifetime scale used to close the time axis for search.
    pub fn lifetime(&self, theta: &[f64]) -> Option<f64> {
        match self {
            ModelSpec::ExponentialBeta => Some(1.0 / theta[0]),
            ModelSpec::ExponentialTheta => Some(theta[0]),
            ModelSpec::Compartmental => Some(1.0 / theta[0]),
            _ => None,
        }
    }
}

/// `S_xx = Σ x_i²` for a single-factor design.
pub fn sxx(xi: &Design) -> f64 {
    xi.points().map(|x| x[0] * x[0]).sum()
}
