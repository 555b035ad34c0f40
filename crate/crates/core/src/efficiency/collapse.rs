//! Collapse of Bayesian efficiency for the one-parameter exponential model
//! under `θ ~ U(ε, a)` as `ε → 0`, measured against the one-run design at
//! `x_ε = −1/ln ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::compartmental::log_sum_exp;
use crate::models::Design;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub epsilon: f64,
    pub x_eps: f64,
    pub phi_xi: f64,
    pub phi_zeta: f64,
    /// `exp{φ(ξ) − φ(ζ_ε)}` (one parameter).
    pub rel_eff: f64,
    /// `S_xx (ε^K ln ε)²` with `K` fitted over the whole sequence.
    pub envelope: f64,
    pub k: f64,
}

/// `E β` under `θ ~ U(ε, a)`.
pub fn mean_beta(epsilon: f64, a: f64) -> f64 {
    (a.ln() - epsilon.ln()) / (a - epsilon)
}

/// `φ(ξ) = E log Σ x_i² e^{−2x_i/θ}` under `θ ~ U(ε, a)`, by composite Simpson
/// in `u = ln θ` with `n_grid` intervals.
pub fn phi_uniform_theta(xs: &[f64], epsilon: f64, a: f64, n_grid: usize) -> f64 {
    let n = n_grid.max(2) + n_grid % 2;
    let (u0, u1) = (epsilon.ln(), a.ln());
    let h = (u1 - u0) / n as f64;
    let mut terms: Vec<f64> = Vec::with_capacity(xs.len());
    let mut total = 0.0;
    for k in 0..=n {
        let u = u0 + h * k as f64;
        let theta = u.exp();
        terms.clear();
        terms.extend(
            xs.iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| 2.0 * x.ln() - 2.0 * x / theta),
        );
        let g = log_sum_exp(&terms) * theta;
        let c = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += c * g;
    }
    total * h / 3.0 / (a - epsilon)
}

/// `φ(ζ_ε) = 2 ln x_ε − 2 x_ε E β`.
pub fn phi_one_point(x: f64, epsilon: f64, a: f64) -> f64 {
    2.0 * x.ln() - 2.0 * x * mean_beta(epsilon, a)
}

pub fn epsilon_collapse_experiment(
    xi: &Design,
    a: f64,
    epsilons: &[f64],
    n_grid: usize,
) -> Result<Vec<CollapseRow>> {
    if xi.factors() != 1 {
        return Err(Error::InvalidDesign(
            "collapse experiment needs a time-axis design".into(),
        ));
    }
    let xs: Vec<f64> = (0..xi.n()).map(|i| xi.get(i, 0)).collect();
    if !xs.iter().any(|&x| x > 0.0) {
        return Err(Error::SingularBaseDesign);
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "ε list must be strictly decreasing".into(),
        ));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e < a && e < 1.0)) {
        return Err(Error::InvalidParameter(
            "every ε must lie in (0, min(a, 1))".into(),
        ));
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let x_min = xs
        .iter()
        .cloned()
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut rows: Vec<CollapseRow> = epsilons
        .iter()
        .map(|&eps| {
            let x_eps = -1.0 / eps.ln();
            let phi_xi = phi_uniform_theta(&xs, eps, a, n_grid);
            let phi_zeta = phi_one_point(x_eps, eps, a);
            CollapseRow {
                epsilon: eps,
                x_eps,
                phi_xi,
                phi_zeta,
                rel_eff: (phi_xi - phi_zeta).exp(),
                envelope: f64::NAN,
                k: f64::NAN,
            }
        })
        .collect();
    // Largest K with 2(x_min − x_ε) E β ≥ −2K ln ε at every ε.
    let k = rows
        .iter()
        .map(|r| (x_min - r.x_eps) * mean_beta(r.epsilon, a) / (-r.epsilon.ln()))
        .fold(f64::INFINITY, f64::min);
    for r in &mut rows {
        r.k = k;
        r.envelope = sxx * (r.epsilon.powf(k) * r.epsilon.ln()).powi(2);
    }
    Ok(rows)
}
