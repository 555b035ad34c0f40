//! Bayesian D-optimal design for nonlinear models under parameter
//! uncertainty.
//!
//! The crate covers four model families (exponential decay in two
//! parameterizations, a three-parameter compartmental model, and GLMs with
//! logit/probit/log links), checks whether a prior makes every design
//! singular, evaluates the Bayesian D-objective with analytic lower/upper
//! bounds for ill-conditioned quadrature nodes, searches exact designs by
//! coordinate exchange, and assesses designs through local and Bayesian
//! D-efficiency.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch, and
// matrix kernels read better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod efficiency;
pub mod error;
pub mod linalg;
pub mod models;
pub mod objective;
pub mod optimizer;
pub mod priors;
pub mod quadrature;
pub mod seed;
pub mod special;

pub use diagnostics::{diagnose, divergence_probe, ProbeReport, Rule, Verdict};
pub use efficiency::{
    bayes_eff_lower_bound, local_eff, EfficiencyBracket, Emulator, EmulatorSettings,
    LocalEffSettings, LocalOptimumCache,
};
pub use error::{Error, Result};
pub use linalg::{loewner_leq, log_det_psd, LogDet, SymMatrix};
pub use models::{Design, Link, ModelSpec, ParamVector, Region, RegressorTerm};
pub use objective::{ew_objective, mean_local_efficiency, phi, phi_point_bounds, ObjectiveBracket};
pub use optimizer::{coordinate_exchange, local_d_optimal, SearchResult, SearchSettings};
pub use priors::{gelman_prior, JointPrior, MomentFlags, Prior1D, PriorTransform};
pub use quadrature::QuadratureScheme;
