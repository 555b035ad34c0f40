//! Weighted parameter samples approximating prior expectations.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, symmetric_eigen, SymMatrix};
use crate::models::ParamVector;
use crate::priors::{open_uniform, JointPrior};
use crate::seed;
use crate::special::norm_quantile;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureScheme {
    pub nodes: Vec<ParamVector>,
    pub weights: Vec<f64>,
}

impl QuadratureScheme {
    /// Checks weights are finite and non-negative and normalizes them.
    pub fn new(nodes: Vec<ParamVector>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::Quadrature(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Quadrature(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Quadrature("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { nodes, weights })
    }

    pub fn point_mass(beta: ParamVector) -> Self {
        Self {
            nodes: vec![beta],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    /// `Σ v_l g(β_l)`.
    pub fn expect(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(b, &w)| w * g(b))
            .sum()
    }

    /// CSV `weight,beta_0,...,beta_{p-1}` with round-trip precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["weight".to_string()];
        header.extend((0..self.dim()).map(|j| format!("beta_{j}")));
        wr.write_record(&header)?;
        for (b, v) in self.nodes.iter().zip(&self.weights) {
            let mut rec = vec![format!("{v:e}")];
            rec.extend(b.iter().map(|x| format!("{x:e}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn monte_carlo(prior: &JointPrior, n: usize, seed: u64) -> Result<QuadratureScheme> {
    if n == 0 {
        return Err(Error::Quadrature("need at least one node".into()));
    }
    QuadratureScheme::new(prior.sample(n, seed), vec![1.0 / n as f64; n])
}

/// Stratified uniforms `(π_j(i) + U)/n` per margin, mapped through the
/// prior quantile functions.
pub fn latin_hypercube(prior: &JointPrior, n: usize, seed: u64) -> Result<QuadratureScheme> {
    if n == 0 {
        return Err(Error::Quadrature("need at least one node".into()));
    }
    let mut rng = seed::rng(seed);
    let p = prior.dim();
    let mut u = vec![vec![0.0; p]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..p {
        perm.shuffle(&mut rng);
        for (i, &k) in perm.iter().enumerate() {
            u[i][j] = (k as f64 + open_uniform(&mut rng)) / n as f64;
        }
    }
    let nodes = u
        .iter()
        .map(|ui| {
            let clamped: Vec<f64> = ui
                .iter()
                .map(|&x| x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
                .collect();
            prior.from_uniforms(&clamped)
        })
        .collect::<Result<Vec<_>>>()?;
    QuadratureScheme::new(nodes, vec![1.0 / n as f64; n])
}

/// Unit vectors of a regular simplex centred at the origin.
fn simplex_vertices(p: usize) -> Vec<Vec<f64>> {
    // Orthonormal basis of {y ∈ ℝ^{p+1} : Σ y = 0}.
    let mut basis: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut v = vec![0.0; p + 1];
            v[i] = 1.0;
            v[p] = -1.0;
            v
        })
        .collect();
    gram_schmidt(&mut basis);
    let c = 1.0 / (p + 1) as f64;
    (0..=p)
        .map(|j| {
            let mut y = vec![-c; p + 1];
            y[j] += 1.0;
            let mut v: Vec<f64> = basis.iter().map(|b| crate::linalg::dot(b, &y)).collect();
            let n = crate::linalg::dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        })
        .collect()
}

/// Degree-5 spherical design: simplex vertices, normalized edge midpoints
/// and all antipodes, with weights summing to 1.
pub fn spherical_directions(p: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if p == 1 {
        return Ok(vec![(vec![1.0], 0.5), (vec![-1.0], 0.5)]);
    }
    let pf = p as f64;
    let wv = pf * (7.0 - pf) / (2.0 * (pf + 1.0).powi(2) * (pf + 2.0));
    let wm = 2.0 * (pf - 1.0).powi(2) / (pf * (pf + 1.0).powi(2) * (pf + 2.0));
    if wv < 0.0 {
        return Err(Error::Quadrature(format!(
            "spherical rule has negative weights for p = {p} (> 7)"
        )));
    }
    let verts = simplex_vertices(p);
    let mut out = Vec::with_capacity((p + 1) * (p + 2));
    for v in &verts {
        out.push((v.clone(), wv));
        out.push((v.iter().map(|x| -x).collect(), wv));
    }
    for a in 0..=p {
        for b in (a + 1)..=p {
            let mut m: Vec<f64> = verts[a].iter().zip(&verts[b]).map(|(x, y)| x + y).collect();
            let n = crate::linalg::dot(&m, &m).sqrt();
            m.iter_mut().for_each(|x| *x /= n);
            out.push((m.iter().map(|x| -x).collect(), wm));
            out.push((m, wm));
        }
    }
    Ok(out)
}

/// Gauss–Radau rule for `t ~ Gamma(p/2)` with a fixed node at 0: returns
/// the free nodes, their weights and the weight left for `t = 0`.
pub fn radial_rule(p: usize, n_radial: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let alpha = p as f64 / 2.0;
    // Golub–Welsch on the Jacobi matrix of generalized Laguerre with
    // exponent α (the measure t·t^{α−1}e^{−t}).
    let mut j = SymMatrix::zeros(n_radial);
    for k in 0..n_radial {
        j.set(k, k, 2.0 * k as f64 + alpha + 1.0);
        if k > 0 {
            j.set(k - 1, k, ((k as f64) * (k as f64 + alpha)).sqrt());
        }
    }
    let (t, vecs) = symmetric_eigen(&j);
    let w: Vec<f64> = t
        .iter()
        .zip(&vecs)
        .map(|(&ti, v)| alpha * v[0] * v[0] / ti)
        .collect();
    let w0 = 1.0 - w.iter().sum::<f64>();
    if w0 < -1e-12 || t.iter().any(|&x| x <= 0.0) {
        return Err(Error::Quadrature(format!(
            "radial rule with {n_radial} nodes leaves negative centre weight {w0}"
        )));
    }
    Ok((t, w, w0.max(0.0)))
}

/// Haar-random orthogonal matrix (rows) from Gram–Schmidt on Gaussians.
fn random_rotation(p: usize, rng: &mut impl RngCore) -> Vec<Vec<f64>> {
    loop {
        let mut g: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..p).map(|_| norm_quantile(open_uniform(rng))).collect())
            .collect();
        let norms = gram_schmidt(&mut g);
        if norms.iter().all(|&n| n > 1e-8) {
            return g;
        }
    }
}

/// Radial-spherical rule for the standard `p`-variate normal: abscissae and
/// weights. Node count `n_rotations · n_radial · (p+1)(p+2) + 1`.
pub fn std_normal_radial_spherical(
    p: usize,
    n_radial: usize,
    n_rotations: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if p == 0 || n_radial == 0 || n_rotations == 0 {
        return Err(Error::Quadrature(
            "dimension, radial count and rotation count must be positive".into(),
        ));
    }
    let dirs = spherical_directions(p)?;
    let (t, wr, w0) = radial_rule(p, n_radial)?;
    let mut rng = seed::rng(seed);
    let mut z = vec![vec![0.0; p]];
    let mut w = vec![w0];
    for _ in 0..n_rotations {
        let rot = random_rotation(p, &mut rng);
        for (dir, wd) in &dirs {
            let u: Vec<f64> = rot.iter().map(|row| crate::linalg::dot(row, dir)).collect();
            for (&ti, &wi) in t.iter().zip(&wr) {
                let r = (2.0 * ti).sqrt();
                z.push(u.iter().map(|x| r * x).collect());
                w.push(wi * wd / n_rotations as f64);
            }
        }
    }
    Ok((z, w))
}

/// Radial-spherical rule transported componentwise to `prior`.
pub fn radial_spherical(
    prior: &JointPrior,
    n_radial: usize,
    n_rotations: usize,
    seed: u64,
) -> Result<QuadratureScheme> {
    let (z, w) = std_normal_radial_spherical(prior.dim(), n_radial, n_rotations, seed)?;
    let nodes = z
        .iter()
        .map(|zi| prior.from_std_normal(zi))
        .collect::<Result<Vec<_>>>()?;
    QuadratureScheme::new(nodes, w)
}
