//! Three-parameter compartmental model
//! `η(x) = θ₃ (e^{−θ₁x} − e^{−θ₂x})`, θ₂ > θ₁ > 0.
//!
//! Factoring `e^{−θ₁x}` and `θ₃` out of each gradient leaves
//! `g̃(x) = (−x, x e^{−δx}, 1 − e^{−δx})` with `δ = θ₂ − θ₁`, so that
//! `|M| = θ₃⁴ Σ_{i<j<k} e^{−2θ₁(x_i+x_j+x_k)} det[g̃_i; g̃_j; g̃_k]²`.
//! The triple determinants vanish like `δ⁴` and are evaluated through a
//! cancellation-free series when `δx` is small.

use crate::linalg::SymMatrix;

/// Below this `δ·x_max` the triple determinant uses the series form.
const SERIES_CUTOFF: f64 = 2.0;

pub fn gradient(theta: &[f64], x: f64) -> [f64; 3] {
    let (t1, t2, t3) = (theta[0], theta[1], theta[2]);
    let e1 = (-t1 * x).exp();
    let e2 = (-t2 * x).exp();
    [-t3 * x * e1, t3 * x * e2, e1 - e2]
}

pub fn reduced_gradient(delta: f64, x: f64) -> [f64; 3] {
    let e = (-delta * x).exp();
    [-x, x * e, -(-delta * x).exp_m1()]
}

/// `M̃_{δ,1} = Σ g̃(x_i) g̃(x_i)ᵀ`.
pub fn mtilde(delta: f64, times: &[f64]) -> SymMatrix {
    let mut m = SymMatrix::zeros(3);
    for &x in times {
        m.add_outer(1.0, &reduced_gradient(delta, x));
    }
    m
}

/// `A_k(t) = Σ_m (−t)^m / (m+k)!`, for `0 ≤ t < 2`.
fn a_series(k: u32, t: f64) -> f64 {
    let mut fact = 1.0;
    for j in 2..=k {
        fact *= j as f64;
    }
    let mut term = 1.0 / fact;
    let mut sum = term;
    for m in 1..40u32 {
        term *= -t / (m + k) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn det3(r: [[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// `ln |det[g̃(x_a); g̃(x_b); g̃(x_c)]|`, `-∞` when the rows are dependent.
pub fn ln_abs_triple_det(delta: f64, x: [f64; 3]) -> f64 {
    // Repeated or zero times give dependent rows exactly.
    if x[0] == x[1] || x[1] == x[2] || x[0] == x[2] || x.contains(&0.0) {
        return f64::NEG_INFINITY;
    }
    let xmax = x[0].max(x[1]).max(x[2]);
    if delta * xmax < SERIES_CUTOFF {
        // det = δ⁴ x₁x₂x₃ (det[1, x, x²A₃] + det[1, x²A₂, xA₂])
        let mut r1 = [[0.0; 3]; 3];
        let mut r2 = [[0.0; 3]; 3];
        for (i, &xi) in x.iter().enumerate() {
            let t = delta * xi;
            let a2 = a_series(2, t);
            let a3 = a_series(3, t);
            r1[i] = [1.0, xi, xi * xi * a3];
            r2[i] = [1.0, xi * xi * a2, xi * a2];
        }
        let core = det3(r1) + det3(r2);
        let prod = x[0] * x[1] * x[2];
        if core == 0.0 || prod == 0.0 {
            return f64::NEG_INFINITY;
        }
        4.0 * delta.ln() + prod.abs().ln() + core.abs().ln()
    } else {
        let d = det3([
            reduced_gradient(delta, x[0]),
            reduced_gradient(delta, x[1]),
            reduced_gradient(delta, x[2]),
        ]);
        if d == 0.0 {
            f64::NEG_INFINITY
        } else {
            d.abs().ln()
        }
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Cauchy–Binet `ln Σ_{triples} e^{−2θ₁ s_{abc}} det_{abc}²` with the
/// exponential weight scale `theta1` (use 0 for `M̃_{δ,1}` itself).
fn log_cauchy_binet(delta: f64, theta1: f64, times: &[f64]) -> f64 {
    let n = times.len();
    let mut terms = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                let x = [times[a], times[b], times[c]];
                let ld = ln_abs_triple_det(delta, x);
                if ld.is_finite() {
                    terms.push(2.0 * ld - 2.0 * theta1 * (x[0] + x[1] + x[2]));
                }
            }
        }
    }
    log_sum_exp(&terms)
}

/// `ln |M̃_{δ,1}|` without cancellation; `-∞` for fewer than three distinct
/// positive times.
pub fn mtilde_log_det(delta: f64, times: &[f64]) -> f64 {
    log_cauchy_binet(delta, 0.0, times)
}

/// `ln |M(ξ;θ)|` evaluated robustly.
pub fn log_det_info(theta: &[f64], times: &[f64]) -> f64 {
    let delta = theta[1] - theta[0];
    4.0 * theta[2].ln() + log_cauchy_binet(delta, theta[0], times)
}

/// Lower and upper bounds on `ln |M(ξ;θ)|`:
/// `4 ln θ₃ + ln|M̃_{δ,1}| − 6θ₁ x_max ≤ ln|M| ≤ … − 6θ₁ x_min`.
pub fn log_det_bounds(theta: &[f64], times: &[f64]) -> (f64, f64) {
    let delta = theta[1] - theta[0];
    let base = 4.0 * theta[2].ln() + mtilde_log_det(delta, times);
    let xmax = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let xmin = times.iter().cloned().fold(f64::INFINITY, f64::min);
    (base - 6.0 * theta[0] * xmax, base - 6.0 * theta[0] * xmin)
}
