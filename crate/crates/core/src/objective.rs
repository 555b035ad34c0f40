//! Bayesian D-objective `φ(ξ;𝒬) = Σ v_l log|M(ξ;β_l)|` with per-node bound
//! substitution for ill-conditioned nodes, the EW criterion and the mean
//! local efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_det_gram, log_det_psd, LogDet, SymMatrix, DEFAULT_RCOND};
use crate::models::{compartmental, sxx, Design, Link, ModelSpec};
use crate::quadrature::QuadratureScheme;

/// Contribution of one parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeValue {
    Exact(f64),
    Bounded { lower: f64, upper: f64 },
}

impl NodeValue {
    pub fn lower(self) -> f64 {
        match self {
            NodeValue::Exact(v) => v,
            NodeValue::Bounded { lower, .. } => lower,
        }
    }

    pub fn upper(self) -> f64 {
        match self {
            NodeValue::Exact(v) => v,
            NodeValue::Bounded { upper, .. } => upper,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, NodeValue::Exact(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBracket {
    pub lower: f64,
    pub upper: f64,
    /// Indices of ill-conditioned nodes.
    pub s_set: Vec<usize>,
    pub exact: bool,
}

impl ObjectiveBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Design-dependent quantities reused across nodes.
#[derive(Debug, Clone)]
pub struct DesignContext<'a> {
    model: &'a ModelSpec,
    xi: &'a Design,
    rows: Vec<Vec<f64>>,
    log_ftf: Option<Result<f64>>,
}

impl<'a> DesignContext<'a> {
    pub fn new(model: &'a ModelSpec, xi: &'a Design) -> Result<Self> {
        let rows = match model {
            ModelSpec::Glm { .. } | ModelSpec::LogisticMuBeta => model.model_rows(xi)?,
            _ => {
                if xi.region() != model.region() {
                    return Err(Error::InvalidDesign(
                        "design region does not match the model".into(),
                    ));
                }
                Vec::new()
            }
        };
        Ok(Self {
            model,
            xi,
            rows,
            log_ftf: None,
        })
    }

    pub fn design(&self) -> &Design {
        self.xi
    }

    fn base_log_det(&mut self) -> Result<f64> {
        if self.log_ftf.is_none() {
            let p = self.rows[0].len();
            let mut m = SymMatrix::zeros(p);
            for f in &self.rows {
                m.add_outer_upper(1.0, f);
            }
            m.symmetrize();
            let r = match log_det_psd(&m, DEFAULT_RCOND) {
                Ok(LogDet::Value(v)) => Ok(v),
                Ok(LogDet::IllConditioned(_)) => Err(Error::SingularBaseDesign),
                Err(e) => Err(e),
            };
            self.log_ftf = Some(r);
        }
        match self.log_ftf.as_ref().expect("just computed") {
            Ok(v) => Ok(*v),
            Err(_) => Err(Error::SingularBaseDesign),
        }
    }

    /// Analytic bounds on `log|M(ξ;β)|` that hold for every `β`.
    pub fn point_bounds(&mut self, beta: &[f64]) -> Result<(f64, f64)> {
        self.model.validate_params(beta)?;
        match self.model {
            ModelSpec::Glm { link, .. } => {
                let p = self.rows[0].len() as f64;
                let (lo, hi) = self.ln_weight_range(*link, beta, |f, b| {
                    f.iter().zip(b).map(|(x, y)| x * y).sum()
                });
                let base = self.base_log_det()?;
                Ok((base + p * lo, base + p * hi))
            }
            ModelSpec::LogisticMuBeta => {
                let (mu, b1) = (beta[0], beta[1]);
                let (lo, hi) = self.ln_weight_range(Link::Logit, beta, |f, _| b1 * (f[1] - mu));
                let base = self.base_log_det()? + 2.0 * b1.abs().ln();
                Ok((base + 2.0 * lo, base + 2.0 * hi))
            }
            ModelSpec::ExponentialBeta => exponential_bounds(self.xi, beta[0]),
            ModelSpec::ExponentialTheta => {
                let (lo, hi) = exponential_bounds(self.xi, 1.0 / beta[0])?;
                let shift = 4.0 * beta[0].ln();
                Ok((lo - shift, hi - shift))
            }
            ModelSpec::Compartmental => {
                let times: Vec<f64> = self.xi.points().map(|x| x[0]).collect();
                let (lo, hi) = compartmental::log_det_bounds(beta, &times);
                if lo == f64::NEG_INFINITY {
                    return Err(Error::SingularBaseDesign);
                }
                Ok((lo, hi))
            }
        }
    }

    fn ln_weight_range(
        &self,
        link: Link,
        beta: &[f64],
        eta: impl Fn(&[f64], &[f64]) -> f64,
    ) -> (f64, f64) {
        self.rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                let lw = link.ln_weight(eta(f, beta));
                (lo.min(lw), hi.max(lw))
            })
    }

    /// Rows `g_i` with `M(ξ;β) = Σ g_i g_iᵀ` (flattened), or `None` if a
    /// weight saturated. Square-root weights come from `ln w`, so they do not
    /// underflow before the weights themselves would.
    fn root_rows(&self, beta: &[f64]) -> Result<Option<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.xi.n() * beta.len());
        match self.model {
            ModelSpec::Glm { link, .. } => {
                for f in &self.rows {
                    let eta: f64 = f.iter().zip(beta).map(|(x, y)| x * y).sum();
                    let w = link.weight(eta);
                    if w.saturated {
                        return Ok(None);
                    }
                    let s = (0.5 * w.ln).exp();
                    out.extend(f.iter().map(|v| s * v));
                }
            }
            ModelSpec::LogisticMuBeta => {
                let (mu, b1) = (beta[0], beta[1]);
                for f in &self.rows {
                    let w = Link::Logit.weight(b1 * (f[1] - mu));
                    if w.saturated {
                        return Ok(None);
                    }
                    let s = (0.5 * w.ln).exp();
                    out.extend([-b1 * s, (f[1] - mu) * s]);
                }
            }
            ModelSpec::Compartmental => {
                for x in self.xi.points() {
                    out.extend(compartmental::gradient(beta, x[0]));
                }
            }
            ModelSpec::ExponentialBeta | ModelSpec::ExponentialTheta => {
                let m = self.model.info_matrix(self.xi, beta)?;
                out.push(m.get(0, 0).sqrt());
            }
        }
        Ok(Some(out))
    }

    /// `log|M(ξ;β)|` if well-conditioned, otherwise its bounds.
    pub fn node_value(&mut self, beta: &[f64], rcond_threshold: f64) -> Result<NodeValue> {
        self.model.validate_params(beta)?;
        if let Some(rows) = self.root_rows(beta)? {
            if let LogDet::Value(v) = log_det_gram(&rows, beta.len(), rcond_threshold)? {
                return Ok(NodeValue::Exact(v));
            }
        }
        let (lower, upper) = self.point_bounds(beta)?;
        Ok(NodeValue::Bounded { lower, upper })
    }
}

fn exponential_bounds(xi: &Design, beta: f64) -> Result<(f64, f64)> {
    let s = sxx(xi);
    if s <= 0.0 {
        return Err(Error::SingularBaseDesign);
    }
    let xmax = xi.points().map(|x| x[0]).fold(0.0, f64::max);
    let xmin = xi
        .points()
        .map(|x| x[0])
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok((s.ln() - 2.0 * beta * xmax, s.ln() - 2.0 * beta * xmin))
}

/// Per-`β` bounds on `log|M(ξ;β)|`.
pub fn phi_point_bounds(xi: &Design, model: &ModelSpec, beta: &[f64]) -> Result<(f64, f64)> {
    DesignContext::new(model, xi)?.point_bounds(beta)
}

/// Evaluates `(φ_L, φ_U)` and the ill-conditioned set.
pub fn phi(
    xi: &Design,
    model: &ModelSpec,
    q: &QuadratureScheme,
    rcond_threshold: f64,
) -> Result<ObjectiveBracket> {
    let mut ctx = DesignContext::new(model, xi)?;
    let (mut lower, mut upper) = (0.0, 0.0);
    let mut s_set = Vec::new();
    for (l, (beta, &v)) in q.nodes.iter().zip(&q.weights).enumerate() {
        let node = ctx.node_value(beta, rcond_threshold)?;
        if !node.is_exact() {
            s_set.push(l);
        }
        if v > 0.0 {
            lower += v * node.lower();
            upper += v * node.upper();
        }
    }
    if lower.is_nan() || upper.is_nan() {
        return Err(Error::NonFinite);
    }
    let exact = s_set.is_empty();
    Ok(ObjectiveBracket {
        lower,
        upper,
        s_set,
        exact,
    })
}

/// `log|Σ_i Ê[w(η_i)] f(x_i)f(x_i)ᵀ|`.
pub fn ew_objective(xi: &Design, model: &ModelSpec, q: &QuadratureScheme) -> Result<f64> {
    let link = match model {
        ModelSpec::Glm { link, .. } => *link,
        _ => return Err(Error::Unsupported("the EW criterion needs a GLM".into())),
    };
    let rows = model.model_rows(xi)?;
    let p = rows[0].len();
    let mut m = SymMatrix::zeros(p);
    for f in &rows {
        let ew = q.expect(|b| link.weight(f.iter().zip(b).map(|(x, y)| x * y).sum()).value);
        m.add_outer_upper(ew, f);
    }
    m.symmetrize();
    match log_det_psd(&m, DEFAULT_RCOND)? {
        LogDet::Value(v) => Ok(v),
        LogDet::IllConditioned(r) => Err(Error::IllConditioned(r)),
    }
}

/// Ψ estimate with the mass of nodes whose efficiency was only bracketed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEfficiency {
    pub value: f64,
    /// Total weight of nodes that contributed a bracket midpoint.
    pub bracket_mass: f64,
}

/// Bracket width above which a node's efficiency counts as uninformative.
pub const UNINFORMATIVE_WIDTH: f64 = 0.9;

/// `Ψ = Σ v_l eff(ξ;β_l)`; `eff_at(l)` returns the efficiency bracket at
/// node `l`.
pub fn mean_local_efficiency(
    q: &QuadratureScheme,
    mut eff_at: impl FnMut(usize) -> Result<(f64, f64)>,
) -> Result<MeanEfficiency> {
    let (mut value, mut bracket_mass) = (0.0, 0.0);
    for (l, &v) in q.weights.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let (lo, hi) = eff_at(l)?;
        value += v * 0.5 * (lo + hi);
        if hi - lo > 1e-12 {
            bracket_mass += v;
        }
    }
    Ok(MeanEfficiency {
        value,
        bracket_mass,
    })
}

/// Record written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub lower: f64,
    pub upper: f64,
    pub n_ill: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl EvaluationReport {
    pub fn new(b: &ObjectiveBracket, threshold: f64, seed: u64) -> Self {
        Self {
            lower: b.lower,
            upper: b.upper,
            n_ill: b.s_set.len(),
            threshold,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{two_factor_terms, ParamVector, Region, RegressorTerm};
    use crate::priors::{JointPrior, Prior1D};
    use crate::quadrature::{latin_hypercube, monte_carlo};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn factorial3() -> Design {
        let mut pts = Vec::new();
        for a in [-1.0, 1.0] {
            for b in [-1.0, 1.0] {
                for c in [-1.0, 1.0] {
                    pts.push(vec![a, b, c]);
                }
            }
        }
        Design::new(Region::Cube { factors: 3 }, &pts).unwrap()
    }

    #[test]
    fn bounds_collapse_at_zero_linear_predictor() {
        let model = ModelSpec::glm(Link::Logit, two_factor_terms(3));
        let xi = factorial3();
        let (lo, hi) = phi_point_bounds(&xi, &model, &[0.0; 7]).unwrap();
        let expect = 7.0 * 8f64.ln() + 7.0 * 0.25f64.ln();
        assert_relative_eq!(lo, expect, epsilon = 1e-12);
        assert_relative_eq!(hi, expect, epsilon = 1e-12);
        let q = QuadratureScheme::point_mass(ParamVector(vec![0.0; 7]));
        let b = phi(&xi, &model, &q, DEFAULT_RCOND).unwrap();
        assert!(b.exact);
        assert_relative_eq!(b.lower, expect, epsilon = 1e-12);
        assert_eq!(b.lower, b.upper);
    }

    #[test]
    fn exact_bracket_equals_weighted_sum() {
        let model = ModelSpec::glm(Link::Logit, two_factor_terms(3));
        let xi = factorial3();
        let prior = JointPrior::new(vec![Prior1D::Normal { mean: 0.0, sd: 0.5 }; 7]).unwrap();
        let q = monte_carlo(&prior, 50, 3).unwrap();
        let b = phi(&xi, &model, &q, DEFAULT_RCOND).unwrap();
        assert!(b.exact && b.s_set.is_empty());
        let direct: f64 = q
            .nodes
            .iter()
            .zip(&q.weights)
            .map(|(beta, v)| {
                v * log_det_psd(&model.info_matrix(&xi, beta).unwrap(), DEFAULT_RCOND)
                    .unwrap()
                    .value()
                    .unwrap()
            })
            .sum();
        assert_relative_eq!(b.lower, direct, epsilon = 1e-10);
    }

    #[test]
    fn singular_base_design_is_reported() {
        let model = ModelSpec::glm(Link::Logit, two_factor_terms(3));
        let xi = Design::new(Region::Cube { factors: 3 }, &vec![vec![1.0, 1.0, 1.0]; 8]).unwrap();
        let q = QuadratureScheme::point_mass(ParamVector(vec![0.0; 7]));
        assert!(matches!(
            phi(&xi, &model, &q, DEFAULT_RCOND),
            Err(Error::SingularBaseDesign)
        ));
    }

    #[test]
    fn raising_threshold_never_narrows_bracket() {
        let model = ModelSpec::glm(Link::Logit, two_factor_terms(2));
        let xi = Design::new(
            Region::Cube { factors: 2 },
            &[
                vec![-1.0, -1.0],
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, 1.0],
                vec![0.0, 0.3],
            ],
        )
        .unwrap();
        let prior = JointPrior::new(vec![
            Prior1D::Cauchy {
                loc: 0.0,
                scale: 5.0
            };
            4
        ])
        .unwrap();
        let q = monte_carlo(&prior, 300, 8).unwrap();
        let mut last_width = -1.0;
        let mut last_s = 0;
        for t in [1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4] {
            let b = phi(&xi, &model, &q, t).unwrap();
            assert!(b.s_set.len() >= last_s);
            assert!(b.width() >= last_width - 1e-12);
            last_width = b.width();
            last_s = b.s_set.len();
        }
    }

    #[test]
    fn theta_objective_is_beta_objective_minus_four_log_theta() {
        let prior = JointPrior::new(vec![Prior1D::Uniform { a: 0.2, b: 3.0 }]).unwrap();
        let q = latin_hypercube(&prior, 200, 1).unwrap();
        let xi = Design::from_values(Region::TimeAxis, &[0.5, 1.0, 2.5]).unwrap();
        let bt = phi(&xi, &ModelSpec::ExponentialTheta, &q, DEFAULT_RCOND).unwrap();
        let qb = QuadratureScheme::new(
            q.nodes
                .iter()
                .map(|t| ParamVector(vec![1.0 / t[0]]))
                .collect(),
            q.weights.clone(),
        )
        .unwrap();
        let bb = phi(&xi, &ModelSpec::ExponentialBeta, &qb, DEFAULT_RCOND).unwrap();
        let elog = q.expect(|t| t[0].ln());
        assert_relative_eq!(bt.lower, bb.lower - 4.0 * elog, epsilon = 1e-10);
    }

    #[test]
    fn ew_symmetry_and_point_mass() {
        let model = ModelSpec::glm(
            Link::Logit,
            vec![RegressorTerm::intercept(1), RegressorTerm::main(1, 0)],
        );
        let xi = Design::from_values(Region::Cube { factors: 1 }, &[-0.8, 0.8, 0.1]).unwrap();
        let beta = ParamVector(vec![0.4, 1.2]);
        let q = QuadratureScheme::point_mass(beta.clone());
        let direct = log_det_psd(&model.info_matrix(&xi, &beta).unwrap(), DEFAULT_RCOND)
            .unwrap()
            .value()
            .unwrap();
        assert_relative_eq!(
            ew_objective(&xi, &model, &q).unwrap(),
            direct,
            epsilon = 1e-12
        );

        // β₀ symmetric about 0, slope fixed at 0: E w identical at ±x.
        let nodes = vec![ParamVector(vec![1.3, 0.0]), ParamVector(vec![-1.3, 0.0])];
        let q = QuadratureScheme::new(nodes, vec![0.5, 0.5]).unwrap();
        let ew = |x: f64| q.expect(|b| Link::Logit.weight(b[0] + b[1] * x).value);
        assert_eq!(ew(-0.8), ew(0.8));
    }

    /// `log|FᵀWF|` by Cauchy–Binet over p-subsets of rows, in log space.
    fn cauchy_binet_log_det(rows: &[Vec<f64>], ln_w: &[f64]) -> f64 {
        let n = rows.len();
        let p = rows[0].len();
        let mut terms = Vec::new();
        let mut idx: Vec<usize> = (0..p).collect();
        loop {
            let sub: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
            let d = lu_det(sub);
            if d != 0.0 {
                terms.push(idx.iter().map(|&i| ln_w[i]).sum::<f64>() + 2.0 * d.abs().ln());
            }
            // next combination
            let mut k = p;
            while k > 0 && idx[k - 1] == n - p + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for j in k..p {
                idx[j] = idx[j - 1] + 1;
            }
        }
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    fn lu_det(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        let mut det = 1.0;
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            if a[piv][c] == 0.0 {
                return 0.0;
            }
            if piv != c {
                a.swap(piv, c);
                det = -det;
            }
            det *= a[c][c];
            for r in (c + 1)..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        det
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn logistic_point_bounds_contain_exact(
            pts in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 2), 4..9),
            beta in proptest::collection::vec(-6.0f64..6.0, 4),
        ) {
            let model = ModelSpec::glm(Link::Logit, two_factor_terms(2));
            let xi = Design::new(Region::Cube { factors: 2 }, &pts).unwrap();
            let rows = model.model_rows(&xi).unwrap();
            let ln_w: Vec<f64> = model.linear_predictors(&xi, &beta).unwrap()
                .iter().map(|&e| Link::Logit.ln_weight(e)).collect();
            let exact = cauchy_binet_log_det(&rows, &ln_w);
            if let Ok((lo, hi)) = phi_point_bounds(&xi, &model, &beta) {
                prop_assert!(lo <= exact + 1e-9 && exact <= hi + 1e-9);
            }
        }
    }
}
