//! Emulator-based profiles of local efficiency: conditional summaries given
//! one coordinate, and the marginal distribution under the prior.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::emulator::{Emulator, EmulatorSettings};
use super::{node_efficiencies, EfficiencyBracket, LocalEffSettings, LocalOptimumCache};
use crate::error::{Error, Result};
use crate::models::{Design, ModelSpec, ParamVector};
use crate::objective::UNINFORMATIVE_WIDTH;
use crate::priors::{open_uniform, JointPrior};
use crate::quadrature::QuadratureScheme;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSettings {
    pub grid_points: usize,
    pub draws_per_point: usize,
    pub marginal_draws: usize,
    pub kde_points: usize,
    /// Probability levels bounding each coordinate grid.
    pub grid_levels: (f64, f64),
    pub seed: u64,
    pub local: LocalEffSettings,
    pub emulator: EmulatorSettings,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            grid_points: 21,
            draws_per_point: 2000,
            marginal_draws: 10_000,
            kde_points: 201,
            grid_levels: (0.01, 0.99),
            seed: 0,
            local: LocalEffSettings::default(),
            emulator: EmulatorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateProfile {
    pub label: String,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub q10: Vec<f64>,
    pub q90: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub n_nodes: usize,
    /// Nodes left out of training because their bracket was uninformative.
    pub n_dropped: usize,
    pub coordinates: Vec<CoordinateProfile>,
    pub kde_grid: Vec<f64>,
    pub kde_density: Vec<f64>,
    pub bandwidth: f64,
    pub mean: f64,
    pub quartiles: (f64, f64, f64),
    pub mode: f64,
    pub prob_below_0_2: f64,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let m = data.iter().sum::<f64>() / n;
    let sd = (data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let s = sorted(data);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-3
    }
}

/// Gaussian KDE on `[0, 1]` with reflection at both ends.
pub fn reflected_kde(data: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
    let n = data.len() as f64;
    let c = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&t| {
            let k = |d: f64| (-0.5 * (d / h).powi(2)).exp();
            c * data
                .iter()
                .map(|&x| k(t - x) + k(t + x) + k(t - (2.0 - x)))
                .sum::<f64>()
        })
        .collect()
}

fn std_uniforms(rng: &mut impl RngCore, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| open_uniform(rng)).collect())
        .collect()
}

/// Computes node efficiencies of `xi` over `q`, then profiles.
pub fn efficiency_profile(
    xi: &Design,
    model: &ModelSpec,
    prior: &JointPrior,
    q: &QuadratureScheme,
    settings: &ProfileSettings,
) -> Result<ProfileReport> {
    let cache = LocalOptimumCache::new();
    let effs = node_efficiencies(xi, model, q, &settings.local, &cache)?;
    profile_from_brackets(model, prior, &q.nodes, &effs, settings)
}

/// Profiles from precomputed node brackets. Nodes whose bracket is at least
/// `UNINFORMATIVE_WIDTH` wide are dropped; the rest train on the midpoint.
pub fn profile_from_brackets(
    model: &ModelSpec,
    prior: &JointPrior,
    nodes: &[ParamVector],
    effs: &[EfficiencyBracket],
    settings: &ProfileSettings,
) -> Result<ProfileReport> {
    if nodes.len() != effs.len() {
        return Err(Error::Dimension {
            expected: nodes.len(),
            got: effs.len(),
        });
    }
    let p = model.n_params();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (b, e) in nodes.iter().zip(effs) {
        if e.width() < UNINFORMATIVE_WIDTH {
            xs.push(b.0.clone());
            ys.push(e.midpoint());
        }
    }
    let n_dropped = nodes.len() - xs.len();
    log::info!(
        "profile: {n_dropped} of {} nodes dropped as uninformative",
        nodes.len()
    );
    if xs.len() < 5 * p {
        return Err(Error::Emulator(format!(
            "only {} trainable nodes, need at least {}",
            xs.len(),
            5 * p
        )));
    }
    let em_settings = EmulatorSettings {
        seed: seed::derive(settings.seed, "emulator"),
        ..settings.emulator.clone()
    };
    let em = Emulator::fit(&xs, &ys, &em_settings)?;
    let mut report = profile_with_emulator(&em, prior, settings)?;
    report.n_nodes = nodes.len();
    report.n_dropped = n_dropped;
    Ok(report)
}

/// Conditional and marginal summaries of the emulator's predictions.
pub fn profile_with_emulator(
    em: &Emulator,
    prior: &JointPrior,
    settings: &ProfileSettings,
) -> Result<ProfileReport> {
    let d = prior.dim();
    let (lo_level, hi_level) = settings.grid_levels;
    if !(0.0 < lo_level && lo_level < hi_level && hi_level < 1.0) || settings.grid_points < 2 {
        return Err(Error::InvalidParameter("profile grid settings".into()));
    }
    let mut rng = seed::rng_for(settings.seed, "profile:conditional");
    // Common random numbers across every grid point and coordinate.
    let base = std_uniforms(&mut rng, settings.draws_per_point, d);
    let mut coordinates = Vec::with_capacity(d);
    for j in 0..d {
        let comp = &prior.components[j];
        let lo = comp.inv_cdf(lo_level)?;
        let hi = comp.inv_cdf(hi_level)?;
        let m = settings.grid_points;
        let grid: Vec<f64> = (0..m)
            .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
            .collect();
        let mut prof = CoordinateProfile {
            label: prior.labels[j].clone(),
            grid: grid.clone(),
            mean: Vec::with_capacity(m),
            q10: Vec::with_capacity(m),
            q90: Vec::with_capacity(m),
        };
        for &g in &grid {
            let uj = comp.cdf(g).clamp(1e-300, 1.0 - 1e-16);
            let preds: Vec<f64> = base
                .iter()
                .map(|u| {
                    let mut u = u.clone();
                    u[j] = uj;
                    prior.from_uniforms(&u).map(|b| em.predict_mean(&b))
                })
                .collect::<Result<_>>()?;
            let s = sorted(&preds);
            prof.mean
                .push(preds.iter().sum::<f64>() / preds.len() as f64);
            prof.q10.push(quantile_sorted(&s, 0.1));
            prof.q90.push(quantile_sorted(&s, 0.9));
        }
        coordinates.push(prof);
    }

    let mut rng = seed::rng_for(settings.seed, "profile:marginal");
    let preds: Vec<f64> = (0..settings.marginal_draws)
        .map(|_| em.predict_mean(&prior.sample_with(&mut rng)))
        .collect();
    let s = sorted(&preds);
    let h = silverman_bandwidth(&preds);
    let kp = settings.kde_points.max(2);
    let kde_grid: Vec<f64> = (0..kp).map(|k| k as f64 / (kp - 1) as f64).collect();
    let kde_density = reflected_kde(&preds, &kde_grid, h);
    let imax = (0..kp).fold(0, |b, i| {
        if kde_density[i] > kde_density[b] {
            i
        } else {
            b
        }
    });
    Ok(ProfileReport {
        n_nodes: 0,
        n_dropped: 0,
        coordinates,
        kde_grid: kde_grid.clone(),
        kde_density,
        bandwidth: h,
        mean: preds.iter().sum::<f64>() / preds.len() as f64,
        quartiles: (
            quantile_sorted(&s, 0.25),
            quantile_sorted(&s, 0.5),
            quantile_sorted(&s, 0.75),
        ),
        mode: kde_grid[imax],
        prob_below_0_2: preds.iter().filter(|&&e| e < 0.2).count() as f64 / preds.len() as f64,
    })
}

#[allow(clippy::too_many_arguments)]
fn svg_panel(
    out: &mut String,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    title: &str,
    xs: &[f64],
    series: &[(&[f64], &str, bool)],
    y_range: (f64, f64),
) {
    let xmin = xs.first().copied().unwrap_or(0.0);
    let xmax = xs.last().copied().unwrap_or(1.0);
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let yspan = if y_range.1 > y_range.0 {
        y_range.1 - y_range.0
    } else {
        1.0
    };
    let px = |x: f64| x0 + w * (x - xmin) / xspan;
    let py = |y: f64| y0 + h - h * (y - y_range.0) / yspan;
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{title}</text>"#,
        x0 + w / 2.0,
        y0 - 6.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="10">{xmin:.3}</text><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{xmax:.3}</text>"#,
        x0,
        y0 + h + 12.0,
        x0 + w,
        y0 + h + 12.0
    );
    for (ys, colour, dashed) in series {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let dash = if *dashed {
            r#" stroke-dasharray="4 3""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}"{dash}/>"#,
            pts.join(" ")
        );
    }
}

impl ProfileReport {
    pub fn to_svg(&self) -> String {
        let panels = self.coordinates.len() + 1;
        let cols = panels.min(3);
        let rows = panels.div_ceil(cols);
        let (pw, ph, pad) = (260.0, 180.0, 40.0);
        let width = cols as f64 * (pw + pad) + pad;
        let height = rows as f64 * (ph + pad) + pad;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif">"#
        );
        for (k, c) in self.coordinates.iter().enumerate() {
            let x0 = pad + (k % cols) as f64 * (pw + pad);
            let y0 = pad + (k / cols) as f64 * (ph + pad);
            svg_panel(
                &mut out,
                x0,
                y0,
                pw,
                ph,
                &c.label,
                &c.grid,
                &[
                    (&c.mean, "black", false),
                    (&c.q10, "grey", true),
                    (&c.q90, "grey", true),
                ],
                (0.0, 1.0),
            );
        }
        let k = self.coordinates.len();
        let ymax = self.kde_density.iter().cloned().fold(0.0, f64::max);
        svg_panel(
            &mut out,
            pad + (k % cols) as f64 * (pw + pad),
            pad + (k / cols) as f64 * (ph + pad),
            pw,
            ph,
            "efficiency density",
            &self.kde_grid,
            &[(&self.kde_density, "black", false)],
            (0.0, ymax),
        );
        out.push_str("</svg>\n");
        out
    }

    /// Writes `profile_coord_<j>.csv`, `marginal_kde.csv` and `profile.svg`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (j, c) in self.coordinates.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("profile_coord_{j}.csv")))?;
            w.write_record([
                format!("beta_{j}"),
                "mean".into(),
                "q10".into(),
                "q90".into(),
            ])?;
            for k in 0..c.grid.len() {
                w.write_record([
                    format!("{}", c.grid[k]),
                    format!("{}", c.mean[k]),
                    format!("{}", c.q10[k]),
                    format!("{}", c.q90[k]),
                ])?;
            }
            w.flush()?;
        }
        let mut w = csv::Writer::from_path(dir.join("marginal_kde.csv"))?;
        w.write_record(["eff", "density"])?;
        for (x, d) in self.kde_grid.iter().zip(&self.kde_density) {
            w.write_record([format!("{x}"), format!("{d}")])?;
        }
        w.flush()?;
        fs::write(dir.join("profile.svg"), self.to_svg())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Region;
    use crate::priors::Prior1D;
    use crate::quadrature::latin_hypercube;

    #[test]
    fn quantiles_and_bandwidth() {
        let s: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        assert_eq!(quantile_sorted(&s, 0.5), 5.0);
        assert_eq!(quantile_sorted(&s, 0.25), 2.5);
        assert!(silverman_bandwidth(&s) > 0.0);
    }

    #[test]
    fn reflected_kde_integrates_to_one() {
        let mut rng = seed::rng(3);
        let data: Vec<f64> = (0..500).map(|_| open_uniform(&mut rng).powi(2)).collect();
        let h = silverman_bandwidth(&data);
        let grid: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
        let dens = reflected_kde(&data, &grid, h);
        // Trapezoid rule.
        let total: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) / 2000.0).sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn exponential_profile_tracks_closed_form() {
        let prior = JointPrior::new(vec![Prior1D::Uniform { a: 0.2, b: 2.0 }]).unwrap();
        let q = latin_hypercube(&prior, 40, 1).unwrap();
        let xi = Design::from_values(Region::TimeAxis, &[0.7]).unwrap();
        let settings = ProfileSettings {
            draws_per_point: 50,
            marginal_draws: 2000,
            ..ProfileSettings::default()
        };
        let r =
            efficiency_profile(&xi, &ModelSpec::ExponentialTheta, &prior, &q, &settings).unwrap();
        assert_eq!(r.n_dropped, 0);
        let c = &r.coordinates[0];
        for k in 0..c.grid.len() {
            let t = 0.7 / c.grid[k];
            let exact = t * t * (2.0 - 2.0 * t).exp();
            assert!(
                (c.mean[k] - exact).abs() < 0.02,
                "{} {} {}",
                c.grid[k],
                c.mean[k],
                exact
            );
            assert!(c.q10[k] <= c.q90[k]);
            assert!((0.0..=1.0).contains(&c.mean[k]));
        }
        assert!(r.quartiles.0 <= r.quartiles.1 && r.quartiles.1 <= r.quartiles.2);
    }

    #[test]
    fn too_few_trainable_nodes() {
        let prior = JointPrior::new(vec![Prior1D::Uniform { a: 0.2, b: 2.0 }]).unwrap();
        let nodes: Vec<ParamVector> = (0..10)
            .map(|i| ParamVector(vec![0.2 + 0.1 * i as f64]))
            .collect();
        let mut effs = vec![
            EfficiencyBracket {
                lower: 0.0,
                upper: 1.0
            };
            10
        ];
        for e in effs.iter_mut().take(4) {
            *e = EfficiencyBracket::point(0.5);
        }
        let r = profile_from_brackets(
            &ModelSpec::ExponentialTheta,
            &prior,
            &nodes,
            &effs,
            &ProfileSettings::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn files_are_written() {
        let prior = JointPrior::new(vec![Prior1D::Uniform { a: 0.2, b: 2.0 }]).unwrap();
        let nodes: Vec<ParamVector> = (0..12)
            .map(|i| ParamVector(vec![0.2 + 0.15 * i as f64]))
            .collect();
        let effs: Vec<EfficiencyBracket> = nodes
            .iter()
            .map(|b| {
                let t: f64 = 0.7 / b[0];
                EfficiencyBracket::point(t * t * (2.0 - 2.0 * t).exp())
            })
            .collect();
        let settings = ProfileSettings {
            draws_per_point: 20,
            marginal_draws: 200,
            ..ProfileSettings::default()
        };
        let r = profile_from_brackets(
            &ModelSpec::ExponentialTheta,
            &prior,
            &nodes,
            &effs,
            &settings,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write_files(dir.path()).unwrap();
        let c0 = fs::read_to_string(dir.path().join("profile_coord_0.csv")).unwrap();
        assert!(c0.starts_with("beta_0,mean,q10,q90\n"));
        assert_eq!(c0.lines().count(), 22);
        let k = fs::read_to_string(dir.path().join("marginal_kde.csv")).unwrap();
        assert!(k.starts_with("eff,density\n"));
        let svg = fs::read_to_string(dir.path().join("profile.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
