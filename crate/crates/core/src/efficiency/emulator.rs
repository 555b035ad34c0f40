//! Gaussian-process emulator of local efficiency: constant mean, anisotropic
//! squared-exponential correlation with a nugget, hyperparameters by
//! multistart maximization of the concentrated log likelihood.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatorSettings {
    pub n_starts: usize,
    pub max_evals: usize,
    pub min_nugget: f64,
    pub max_nugget: f64,
    pub seed: u64,
    /// Clamp predictions into `[0, 1]`.
    pub clamp_unit: bool,
}

impl Default for EmulatorSettings {
    fn default() -> Self {
        Self {
            n_starts: 5,
            max_evals: 400,
            min_nugget: 1e-8,
            max_nugget: 0.1,
            seed: 0,
            clamp_unit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emulator {
    /// Standardized training inputs.
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    centre: Vec<f64>,
    scale: Vec<f64>,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub nugget: f64,
    pub mean: f64,
    /// `R⁻¹ (y − μ 1)`.
    alpha: Vec<f64>,
    /// Cholesky factor of `R`, row-major lower triangle.
    chol: Vec<f64>,
    /// `R⁻¹ 1` and `1ᵀ R⁻¹ 1`.
    rinv_one: Vec<f64>,
    one_rinv_one: f64,
    clamp_unit: bool,
    constant: bool,
}

fn chol_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let l = d.sqrt();
        a[j * n + j] = l;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }
    true
}

/// Solves `L Lᵀ x = b`.
fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solves `L y = b`.
fn forward(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

#[inline]
fn corr(a: &[f64], b: &[f64], inv_ls2: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((x, y), w) in a.iter().zip(b).zip(inv_ls2) {
        let d = x - y;
        s += d * d * w;
    }
    (-0.5 * s).exp()
}

struct Fit {
    loglik: f64,
    chol: Vec<f64>,
    mean: f64,
    sigma2: f64,
    alpha: Vec<f64>,
    rinv_one: Vec<f64>,
    one_rinv_one: f64,
}

fn fit_at(x: &[Vec<f64>], y: &[f64], ls: &[f64], nugget: f64) -> Option<Fit> {
    let n = x.len();
    let inv_ls2: Vec<f64> = ls.iter().map(|l| 1.0 / (l * l)).collect();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        r[i * n + i] = 1.0 + nugget;
        for j in 0..i {
            r[i * n + j] = corr(&x[i], &x[j], &inv_ls2);
        }
    }
    if !chol_in_place(&mut r, n) {
        return None;
    }
    let ones = vec![1.0; n];
    let rinv_one = chol_solve(&r, n, &ones);
    let one_rinv_one: f64 = rinv_one.iter().sum();
    let rinv_y = chol_solve(&r, n, y);
    let mean = rinv_y.iter().sum::<f64>() / one_rinv_one;
    let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let alpha = chol_solve(&r, n, &resid);
    let sigma2 = resid.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    if !(sigma2 > 0.0) {
        return None;
    }
    let logdet: f64 = (0..n).map(|i| 2.0 * r[i * n + i].ln()).sum();
    let loglik = -0.5 * (n as f64 * sigma2.ln() + logdet);
    Some(Fit {
        loglik,
        chol: r,
        mean,
        sigma2,
        alpha,
        rinv_one,
        one_rinv_one,
    })
}

/// Nelder–Mead minimization inside a box (coordinates are clipped).
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: Vec<f64>,
    step: f64,
    lo: &[f64],
    hi: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let d = start.len();
    let clip = |v: &mut Vec<f64>| {
        for k in 0..d {
            v[k] = v[k].clamp(lo[k], hi[k]);
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for k in 0..d {
        let mut v = start.clone();
        v[k] += if v[k] + step <= hi[k] { step } else { -step };
        clip(&mut v);
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = d + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[d] - vals[0]).abs() < 1e-9 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut v: Vec<f64> = (0..d)
                .map(|k| centroid[k] + t * (simplex[d][k] - centroid[k]))
                .collect();
            clip(&mut v);
            v
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = if fr < vals[d] {
                along(-0.5)
            } else {
                along(0.5)
            };
            let fc = f(&xc);
            evals += 1;
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    let v: Vec<f64> = (0..d)
                        .map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]))
                        .collect();
                    vals[i] = f(&v);
                    simplex[i] = v;
                    evals += 1;
                }
            }
        }
    }
    let best = (0..=d).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
    (simplex[best].clone(), vals[best])
}

impl Emulator {
    pub fn fit(inputs: &[Vec<f64>], outputs: &[f64], settings: &EmulatorSettings) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::Emulator(
                "inputs and outputs differ in length".into(),
            ));
        }
        if outputs.iter().any(|v| !v.is_finite()) || inputs.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite);
        }
        // Drop exact duplicate inputs, keeping the first occurrence.
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (x, &y) in inputs.iter().zip(outputs) {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                xs.push(x.clone());
                ys.push(y);
            }
        }
        if xs.len() < inputs.len() {
            log::info!(
                "emulator: dropped {} duplicate training inputs",
                inputs.len() - xs.len()
            );
        }
        let n = xs.len();
        if n < 5 {
            return Err(Error::Emulator(format!(
                "need at least 5 training points, got {n}"
            )));
        }
        let d = xs[0].len();
        let centre: Vec<f64> = (0..d)
            .map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n as f64)
            .collect();
        let scale: Vec<f64> = (0..d)
            .map(|k| {
                let v = xs.iter().map(|x| (x[k] - centre[k]).powi(2)).sum::<f64>() / n as f64;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| (0..d).map(|k| (x[k] - centre[k]) / scale[k]).collect())
            .collect();

        let ymin = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let ymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if ymax - ymin <= 1e-14 * (1.0 + ymax.abs()) {
            return Ok(Self {
                inputs: z,
                outputs: ys,
                centre,
                scale,
                lengthscales: vec![1.0; d],
                signal_variance: 0.0,
                nugget: settings.min_nugget,
                mean: ymin,
                alpha: vec![0.0; n],
                chol: Vec::new(),
                rinv_one: Vec::new(),
                one_rinv_one: 0.0,
                clamp_unit: settings.clamp_unit,
                constant: true,
            });
        }

        // Parameters: log lengthscales then log nugget.
        let mut lo = vec![(0.05f64).ln(); d];
        let mut hi = vec![(50.0f64).ln(); d];
        lo.push(settings.min_nugget.ln());
        hi.push(settings.max_nugget.ln());
        let mut obj = |t: &[f64]| -> f64 {
            let ls: Vec<f64> = t[..d].iter().map(|v| v.exp()).collect();
            match fit_at(&z, &ys, &ls, t[d].exp()) {
                Some(f) => -f.loglik,
                None => f64::INFINITY,
            }
        };
        let mut rng = seed::rng(settings.seed);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in 0..settings.n_starts.max(1) {
            let start: Vec<f64> = if s == 0 {
                let mut v = vec![0.0; d];
                v.push((1e-6f64).ln().max(lo[d]));
                v
            } else {
                (0..=d).map(|k| rng.random_range(lo[k]..hi[k])).collect()
            };
            let (t, v) = nelder_mead(&mut obj, start, 0.7, &lo, &hi, settings.max_evals);
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((t, v));
            }
        }
        let (t, v) = best.expect("at least one start");
        if !v.is_finite() {
            return Err(Error::Emulator(
                "no positive-definite hyperparameter setting found".into(),
            ));
        }
        let ls: Vec<f64> = t[..d].iter().map(|v| v.exp()).collect();
        let nugget = t[d].exp();
        let fit = fit_at(&z, &ys, &ls, nugget).expect("optimum was feasible");
        Ok(Self {
            inputs: z,
            outputs: ys,
            centre,
            scale,
            lengthscales: ls,
            signal_variance: fit.sigma2,
            nugget,
            mean: fit.mean,
            alpha: fit.alpha,
            chol: fit.chol,
            rinv_one: fit.rinv_one,
            one_rinv_one: fit.one_rinv_one,
            clamp_unit: settings.clamp_unit,
            constant: false,
        })
    }

    pub fn n_train(&self) -> usize {
        self.outputs.len()
    }

    /// Predictive mean and standard deviation (universal-kriging variance
    /// without the nugget).
    pub fn predict(&self, beta: &[f64]) -> (f64, f64) {
        if self.constant {
            return (self.mean, 0.0);
        }
        let z: Vec<f64> = beta
            .iter()
            .zip(self.centre.iter().zip(&self.scale))
            .map(|(b, (c, s))| (b - c) / s)
            .collect();
        let inv_ls2: Vec<f64> = self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let r: Vec<f64> = self.inputs.iter().map(|x| corr(x, &z, &inv_ls2)).collect();
        let mut m = self.mean + r.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let n = self.inputs.len();
        let v = forward(&self.chol, n, &r);
        let rr: f64 = v.iter().map(|x| x * x).sum();
        let u = 1.0
            - r.iter()
                .zip(&self.rinv_one)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let var = self.signal_variance * (1.0 - rr + u * u / self.one_rinv_one);
        if self.clamp_unit {
            m = m.clamp(0.0, 1.0);
        }
        (m, var.max(0.0).sqrt())
    }

    pub fn predict_mean(&self, beta: &[f64]) -> f64 {
        if self.constant {
            return self.mean;
        }
        let z: Vec<f64> = beta
            .iter()
            .zip(self.centre.iter().zip(&self.scale))
            .map(|(b, (c, s))| (b - c) / s)
            .collect();
        let inv_ls2: Vec<f64> = self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let m = self.mean
            + self
                .inputs
                .iter()
                .zip(&self.alpha)
                .map(|(x, a)| a * corr(x, &z, &inv_ls2))
                .sum::<f64>();
        if self.clamp_unit {
            m.clamp(0.0, 1.0)
        } else {
            m
        }
    }
}
