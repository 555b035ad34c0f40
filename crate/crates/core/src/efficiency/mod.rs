//! Local and Bayesian D-efficiency, the efficiency emulator and the profile
//! pipeline.

pub mod collapse;
pub mod emulator;
pub mod profile;

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::DEFAULT_RCOND;
use crate::models::{Design, ModelSpec};
use crate::objective::{mean_local_efficiency, phi, DesignContext, MeanEfficiency, NodeValue};
use crate::optimizer::{local_d_optimal_side, BoundSide, SearchSettings};
use crate::quadrature::QuadratureScheme;
use crate::seed;

pub use collapse::{epsilon_collapse_experiment, CollapseRow};
pub use emulator::{Emulator, EmulatorSettings};
pub use profile::{efficiency_profile, ProfileReport, ProfileSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBracket {
    pub lower: f64,
    pub upper: f64,
}

impl EfficiencyBracket {
    fn new(lower: f64, upper: f64) -> Self {
        let lower = lower.clamp(0.0, 1.0);
        let upper = upper.clamp(0.0, 1.0);
        Self {
            lower: lower.min(upper),
            upper,
        }
    }

    pub fn point(v: f64) -> Self {
        Self::new(v, v)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEffSettings {
    pub search: SearchSettings,
    pub rcond_threshold: f64,
}

impl Default for LocalEffSettings {
    fn default() -> Self {
        Self {
            search: SearchSettings {
                n_starts: 10,
                ..SearchSettings::default()
            },
            rcond_threshold: DEFAULT_RCOND,
        }
    }
}

/// Maxima of the lower and upper node bounds over designs at one `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimum {
    pub lower_max: f64,
    pub upper_max: f64,
    /// The lower-bound maximizer was well-conditioned, so both maxima are
    /// the exact local optimum.
    pub certified: bool,
}

/// Local optima keyed by run count and the bit pattern of `β`; shareable
/// between designs and threads.
#[derive(Debug, Default)]
pub struct LocalOptimumCache {
    map: Mutex<HashMap<(usize, Vec<u64>), LocalOptimum>>,
}

impl LocalOptimumCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &(usize, Vec<u64>)) -> Option<LocalOptimum> {
        self.map.lock().expect("cache lock").get(key).copied()
    }

    fn put(&self, key: (usize, Vec<u64>), v: LocalOptimum) {
        self.map.lock().expect("cache lock").insert(key, v);
    }
}

/// Analytic locally optimal design where one is known: the one-parameter
/// exponential models put every run at `1/β` (resp. `θ`).
pub fn known_local_optimum(model: &ModelSpec, beta: &[f64], n: usize) -> Option<Design> {
    let x = match model {
        ModelSpec::ExponentialBeta => 1.0 / beta[0],
        ModelSpec::ExponentialTheta => beta[0],
        _ => return None,
    };
    Design::from_values(model.region(), &vec![x; n]).ok()
}

fn key_of(n: usize, beta: &[f64]) -> (usize, Vec<u64>) {
    (n, beta.iter().map(|b| b.to_bits()).collect())
}

pub fn local_optimum(
    model: &ModelSpec,
    beta: &[f64],
    n: usize,
    settings: &LocalEffSettings,
    cache: &LocalOptimumCache,
) -> Result<LocalOptimum> {
    let key = key_of(n, beta);
    if let Some(v) = cache.get(&key) {
        return Ok(v);
    }
    let node_at = |d: &Design| -> Result<NodeValue> {
        DesignContext::new(model, d)?.node_value(beta, settings.rcond_threshold)
    };
    let opt = if let Some(d) = known_local_optimum(model, beta, n) {
        let v = node_at(&d)?;
        LocalOptimum {
            lower_max: v.lower(),
            upper_max: v.upper(),
            certified: v.is_exact(),
        }
    } else {
        let mut search = settings.search.clone();
        let tag: String = key.1.iter().map(|b| format!("{b:x}")).collect();
        search.seed = seed::derive(settings.search.seed, &format!("local:{tag}"));
        let lo = local_d_optimal_side(model, beta, n, &search, BoundSide::Lower)?;
        let lo_node = node_at(&lo.best)?;
        if lo_node.is_exact() {
            LocalOptimum {
                lower_max: lo.best_value,
                upper_max: lo.best_value,
                certified: true,
            }
        } else {
            let hi = local_d_optimal_side(model, beta, n, &search, BoundSide::Upper)?;
            LocalOptimum {
                lower_max: lo.best_value,
                upper_max: hi.best_value.max(lo_node.upper()),
                certified: false,
            }
        }
    };
    cache.put(key, opt);
    Ok(opt)
}

/// Local D-efficiency of `xi` at `beta`, bracketed when either `xi` or the
/// local optimum is ill-conditioned.
pub fn local_eff(
    xi: &Design,
    model: &ModelSpec,
    beta: &[f64],
    settings: &LocalEffSettings,
    cache: &LocalOptimumCache,
) -> Result<EfficiencyBracket> {
    let p = model.n_params() as f64;
    let v = DesignContext::new(model, xi)?.node_value(beta, settings.rcond_threshold)?;
    let opt = local_optimum(model, beta, xi.n(), settings, cache)?;
    Ok(match v {
        NodeValue::Exact(val) if opt.certified => {
            EfficiencyBracket::point(((val - opt.lower_max) / p).exp())
        }
        _ => EfficiencyBracket::new(
            ((v.lower() - opt.upper_max) / p).exp(),
            ((v.upper() - opt.lower_max) / p).exp(),
        ),
    })
}

/// Local efficiency brackets at every node of `q`, in node order.
pub fn node_efficiencies(
    xi: &Design,
    model: &ModelSpec,
    q: &QuadratureScheme,
    settings: &LocalEffSettings,
    cache: &LocalOptimumCache,
) -> Result<Vec<EfficiencyBracket>> {
    q.nodes
        .par_iter()
        .map(|b| local_eff(xi, model, b, settings, cache))
        .collect()
}

/// `exp{[φ_L(ξ_L) − φ_U(ξ_U)]/p}`, at most 1.
pub fn bayes_eff_lower_bound(
    xi_l: &Design,
    xi_u: &Design,
    model: &ModelSpec,
    q: &QuadratureScheme,
    rcond_threshold: f64,
) -> Result<f64> {
    let p = model.n_params() as f64;
    let lo = phi(xi_l, model, q, rcond_threshold)?.lower;
    let hi = phi(xi_u, model, q, rcond_threshold)?.upper;
    Ok(((lo - hi) / p).exp().min(1.0))
}

/// Mean local efficiency `Ψ(ξ)` over `q`.
pub fn psi(
    xi: &Design,
    model: &ModelSpec,
    q: &QuadratureScheme,
    settings: &LocalEffSettings,
    cache: &LocalOptimumCache,
) -> Result<MeanEfficiency> {
    let effs = node_efficiencies(xi, model, q, settings, cache)?;
    mean_local_efficiency(q, |l| Ok((effs[l].lower, effs[l].upper)))
}
