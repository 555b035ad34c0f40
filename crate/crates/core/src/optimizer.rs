//! Continuous coordinate exchange with random multistart.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DEFAULT_RCOND;
use crate::models::{Design, ModelSpec, Region};
use crate::objective::DesignContext;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub n_starts: usize,
    pub max_passes: usize,
    pub grid_points: usize,
    pub golden_iters: usize,
    pub seed: u64,
    pub tol: f64,
    /// Upper end of the search interval on a time axis; `None` lets the
    /// caller pick a model-based default.
    pub time_upper: Option<f64>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            n_starts: 20,
            max_passes: 25,
            grid_points: 21,
            golden_iters: 30,
            seed: 0,
            tol: 1e-9,
            time_upper: None,
        }
    }
}

impl SearchSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.max_passes == 0 || self.grid_points < 2 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(
                "search needs ≥1 start, ≥1 pass, ≥2 grid points and tol > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start_value: f64,
    pub final_value: f64,
    pub passes: usize,
    pub accepted_moves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Design,
    pub best_value: f64,
    pub trace: Vec<StartTrace>,
}

impl SearchResult {
    /// CSV lines `start,start_value,final_value,passes,accepted_moves`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("start,start_value,final_value,passes,accepted_moves\n");
        for (k, t) in self.trace.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                k + 1,
                t.start_value,
                t.final_value,
                t.passes,
                t.accepted_moves
            ));
        }
        s
    }
}

fn eval<F: Fn(&Design) -> Result<f64>>(f: &F, d: &Design) -> f64 {
    match f(d) {
        Ok(v) if !v.is_nan() => v,
        _ => f64::NEG_INFINITY,
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximizes the objective along coordinate `(i, j)`; returns the best
/// value and location found (which may equal the incumbent).
fn line_search<F: Fn(&Design) -> Result<f64>>(
    f: &F,
    d: &mut Design,
    i: usize,
    j: usize,
    (lo, hi): (f64, f64),
    settings: &SearchSettings,
) -> (f64, f64) {
    let g = settings.grid_points;
    let step = (hi - lo) / (g - 1) as f64;
    let at = |d: &mut Design, x: f64| {
        d.set(i, j, x);
        eval(f, d)
    };
    let values: Vec<f64> = (0..g)
        .map(|k| at(d, if k + 1 == g { hi } else { lo + k as f64 * step }))
        .collect();
    let kbest = (0..g).fold(0, |b, k| if values[k] > values[b] { k } else { b });
    let (mut best_x, mut best_v) = (lo + kbest as f64 * step, values[kbest]);
    if kbest + 1 == g {
        best_x = hi;
    }
    if best_v > f64::NEG_INFINITY && settings.golden_iters > 0 {
        let mut a = (lo + (kbest as f64 - 1.0) * step).max(lo);
        let mut b = (lo + (kbest as f64 + 1.0) * step).min(hi);
        let mut c = b - INV_PHI * (b - a);
        let mut e = a + INV_PHI * (b - a);
        let mut fc = at(d, c);
        let mut fe = at(d, e);
        for _ in 0..settings.golden_iters {
            if fc >= fe {
                b = e;
                e = c;
                fe = fc;
                c = b - INV_PHI * (b - a);
                fc = at(d, c);
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + INV_PHI * (b - a);
                fe = at(d, e);
            }
        }
        for (x, v) in [(c, fc), (e, fe)] {
            if v > best_v {
                best_v = v;
                best_x = x;
            }
        }
    }
    (best_x, best_v)
}

fn run_start<F: Fn(&Design) -> Result<f64>>(
    f: &F,
    region: Region,
    n: usize,
    settings: &SearchSettings,
    bounds: (f64, f64),
    k: usize,
) -> Result<(Design, StartTrace)> {
    let mut rng = seed::rng(settings.seed.wrapping_add(k as u64));
    let q = region.factors();
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..q)
                .map(|_| rng.random_range(bounds.0..=bounds.1))
                .collect()
        })
        .collect();
    let mut d = Design::new(region, &pts)?;
    let start_value = eval(f, &d);
    let mut current = start_value;
    let mut passes = 0;
    let mut accepted = 0;
    while passes < settings.max_passes {
        passes += 1;
        let mut improved = false;
        for i in 0..n {
            for j in 0..q {
                let incumbent = d.get(i, j);
                let (x, v) = line_search(f, &mut d, i, j, bounds, settings);
                if v > current + settings.tol {
                    d.set(i, j, x);
                    current = v;
                    accepted += 1;
                    improved = true;
                } else {
                    d.set(i, j, incumbent);
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok((
        d,
        StartTrace {
            start_value,
            final_value: current,
            passes,
            accepted_moves: accepted,
        },
    ))
}

/// Maximizes `objective` over `n`-run designs; errors and NaN count as −∞.
pub fn coordinate_exchange<F>(
    objective: F,
    region: Region,
    n: usize,
    settings: &SearchSettings,
) -> Result<SearchResult>
where
    F: Fn(&Design) -> Result<f64> + Sync,
{
    settings.validate()?;
    if n == 0 {
        return Err(Error::InvalidDesign("need at least one run".into()));
    }
    let time_upper = settings.time_upper.unwrap_or(10.0);
    if !(time_upper > 0.0) {
        return Err(Error::InvalidParameter(
            "time_upper must be positive".into(),
        ));
    }
    let bounds = region.search_bounds(time_upper);
    let runs: Vec<(Design, StartTrace)> = (0..settings.n_starts)
        .into_par_iter()
        .map(|k| run_start(&objective, region, n, settings, bounds, k))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, (_, t)) in runs.iter().enumerate() {
        if t.final_value > runs[best].1.final_value {
            best = k;
        }
    }
    let trace = runs.iter().map(|(_, t)| *t).collect();
    let (best_design, best_trace) = runs.into_iter().nth(best).expect("at least one start");
    Ok(SearchResult {
        best: best_design,
        best_value: best_trace.final_value,
        trace,
    })
}

/// Which side of the node bracket a local search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// Search interval on a time axis: `10×` the lifetime scale at `theta`.
pub fn default_time_upper(model: &ModelSpec, theta: &[f64]) -> f64 {
    model.lifetime(theta).map_or(10.0, |l| 10.0 * l)
}

/// Searches the maximizer of `log|M(ξ;θ)|`, falling back to one side of
/// the node bounds where the matrix is ill-conditioned.
pub fn local_d_optimal_side(
    model: &ModelSpec,
    theta: &[f64],
    n: usize,
    settings: &SearchSettings,
    side: BoundSide,
) -> Result<SearchResult> {
    model.validate_params(theta)?;
    let mut s = settings.clone();
    if s.time_upper.is_none() {
        s.time_upper = Some(default_time_upper(model, theta));
    }
    coordinate_exchange(
        |d| {
            let v = DesignContext::new(model, d)?.node_value(theta, DEFAULT_RCOND)?;
            Ok(match side {
                BoundSide::Lower => v.lower(),
                BoundSide::Upper => v.upper(),
            })
        },
        model.region(),
        n,
        &s,
    )
}

pub fn local_d_optimal(
    model: &ModelSpec,
    theta: &[f64],
    n: usize,
    settings: &SearchSettings,
) -> Result<SearchResult> {
    local_d_optimal_side(model, theta, n, settings, BoundSide::Lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::log_det_psd;
    use crate::models::{Link, RegressorTerm};

    fn quick(n_starts: usize, seed: u64) -> SearchSettings {
        SearchSettings {
            n_starts,
            seed,
            ..SearchSettings::default()
        }
    }

    fn linear_logdet(d: &Design) -> Result<f64> {
        let m = ModelSpec::glm(
            Link::Logit,
            vec![RegressorTerm::intercept(1), RegressorTerm::main(1, 0)],
        )
        .model_matrix(d)?;
        log_det_psd(&m, DEFAULT_RCOND)?
            .value()
            .ok_or(Error::SingularBaseDesign)
    }

    #[test]
    fn linear_model_picks_endpoints() {
        let r = coordinate_exchange(linear_logdet, Region::Cube { factors: 1 }, 2, &quick(5, 1))
            .unwrap();
        let mut x: Vec<f64> = r.best.points().map(|p| p[0]).collect();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((x[0] + 1.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
        assert_eq!(r.trace.len(), 5);
    }

    #[test]
    fn exponential_beta_local_optimum_at_inverse_rate() {
        let beta = 0.7;
        let r = local_d_optimal(&ModelSpec::ExponentialBeta, &[beta], 1, &quick(3, 2)).unwrap();
        assert!((r.best.get(0, 0) - 1.0 / beta).abs() < 1e-4);
    }

    #[test]
    fn exponential_theta_concentrates_at_theta() {
        let theta = 1.8;
        let r = local_d_optimal(&ModelSpec::ExponentialTheta, &[theta], 3, &quick(3, 3)).unwrap();
        for p in r.best.points() {
            assert!((p[0] - theta).abs() < 1e-3);
        }
        // Grid oracle over single points.
        let grid_best = (1..=2000)
            .map(|k| k as f64 * 0.01)
            .max_by(|a, b| {
                let f = |x: f64| x * x * (-2.0 * x / theta).exp();
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        assert!((grid_best - theta).abs() <= 0.01);
    }

    #[test]
    fn logistic_two_point_design() {
        let model = ModelSpec::glm(
            Link::Logit,
            vec![RegressorTerm::intercept(1), RegressorTerm::main(1, 0)],
        );
        let b1 = 3.0;
        let r = local_d_optimal(&model, &[0.0, b1], 2, &quick(5, 4)).unwrap();
        let mut eta: Vec<f64> = r.best.points().map(|p| b1 * p[0]).collect();
        eta.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Brute-force oracle over symmetric designs {−c, c}.
        let f = |c: f64| {
            let w = Link::Logit.weight(c).value;
            (w * w * 4.0 * c * c).ln()
        };
        let c_star = (1..=30000)
            .map(|k| k as f64 * 1e-4)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((c_star - 1.5434).abs() < 1e-3);
        assert!(
            (eta[0] + c_star).abs() < 2e-3 && (eta[1] - c_star).abs() < 2e-3,
            "{eta:?}"
        );
    }

    #[test]
    fn logit_at_zero_finds_factorial_corners() {
        let model = ModelSpec::glm(Link::Logit, crate::models::two_factor_terms(2));
        let r = local_d_optimal(&model, &[0.0; 4], 4, &quick(6, 5)).unwrap();
        for p in r.best.points() {
            assert!(p.iter().all(|v| (v.abs() - 1.0).abs() < 1e-6), "{p:?}");
        }
    }

    #[test]
    fn traces_are_monotone_and_designs_feasible() {
        let model = ModelSpec::glm(Link::Probit, crate::models::two_factor_terms(2));
        let theta = [0.5, 1.0, -0.7, 0.3];
        let r = local_d_optimal(&model, &theta, 6, &quick(4, 6)).unwrap();
        for t in &r.trace {
            assert!(t.final_value >= t.start_value);
        }
        assert!(r
            .best
            .points()
            .all(|p| p.iter().all(|v| (-1.0..=1.0).contains(v))));
        let best = r
            .trace
            .iter()
            .map(|t| t.final_value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, r.best_value);
    }

    #[test]
    fn doubling_starts_never_hurts() {
        let model = ModelSpec::glm(Link::Logit, crate::models::two_factor_terms(2));
        let theta = [1.0, -2.0, 1.5, 0.5];
        let a = local_d_optimal(&model, &theta, 5, &quick(3, 7)).unwrap();
        let b = local_d_optimal(&model, &theta, 5, &quick(6, 7)).unwrap();
        assert!(b.best_value >= a.best_value);
    }
}
