//! Small dense symmetric-matrix kernel.
//!
//! Information matrices in this crate are at most a handful of rows wide, so
//! everything here is plain row-major storage with textbook algorithms:
//! Cholesky for log-determinants (with an explicit conditioning verdict) and
//! cyclic Jacobi for eigen-decompositions.

use crate::error::{Error, Result};

/// Default threshold on the reciprocal condition estimate.
pub const DEFAULT_RCOND: f64 = 1e-12;

/// Default tolerance for Loewner-order comparisons.
pub const DEFAULT_LOEWNER_TOL: f64 = 1e-10;

/// Natural log of the smallest positive normal `f64`. A log-determinant
/// below this value corresponds to a determinant that evaluates to zero (or a
/// subnormal) in double precision.
pub const LN_MIN_POSITIVE: f64 = -708.396_418_532_264_1;

/// Dense symmetric matrix. Upper triangle is authoritative; the lower
/// triangle is kept as a mirror so that row access is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Builds from full row-major rows, mirroring the upper triangle.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::Dimension {
                expected: 1,
                got: 0,
            });
        }
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: row.len(),
                });
            }
            for j in i..dim {
                m.set(i, j, row[j]);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets entry (i, j) and its mirror.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    /// `self += weight * v vᵀ`.
    pub fn add_outer(&mut self, weight: f64, v: &[f64]) {
        self.add_outer_upper(weight, v);
        self.symmetrize();
    }

    /// Rank-one update of the upper triangle only; call [`Self::symmetrize`]
    /// after a batch of updates.
    #[inline]
    pub fn add_outer_upper(&mut self, weight: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        let p = self.dim;
        for i in 0..p {
            let wi = weight * v[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * p..(i + 1) * p];
            for j in i..p {
                row[j] += wi * v[j];
            }
        }
    }

    /// Copies the upper triangle into the lower one.
    pub fn symmetrize(&mut self) {
        let p = self.dim;
        for i in 0..p {
            for j in 0..i {
                self.data[i * p + j] = self.data[j * p + i];
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// Symmetric congruence `P M Pᵀ` for a permutation given as the image of
    /// each index.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                out.set(perm[i], perm[j], self.get(i, j));
            }
        }
        out
    }
}

/// Outcome of a log-determinant evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDet {
    Value(f64),
    IllConditioned(f64),
}

impl LogDet {
    pub fn value(self) -> Option<f64> {
        match self {
            LogDet::Value(v) => Some(v),
            LogDet::IllConditioned(_) => None,
        }
    }

    pub fn is_ill_conditioned(self) -> bool {
        matches!(self, LogDet::IllConditioned(_))
    }
}

/// Lower-triangular Cholesky factor, or `None` when a pivot is not positive.
pub fn cholesky(m: &SymMatrix) -> Option<Vec<f64>> {
    let p = m.dim();
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[j * p + j] = ljj;
        for i in (j + 1)..p {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / ljj;
        }
    }
    Some(l)
}

/// Log-determinant of a positive semi-definite matrix with conditioning check.
///
/// A `Value` is returned only when the Cholesky factorization succeeds, the
/// reciprocal condition estimate `min(L_ii)² / max(L_ii)²` is at least
/// `rcond_threshold`, and the determinant is representable as a normal
/// double. Anything else is `IllConditioned` carrying the estimate (zero when
/// the factorization broke down).
pub fn log_det_psd(m: &SymMatrix, rcond_threshold: f64) -> Result<LogDet> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let p = m.dim();
    let Some(l) = cholesky(m) else {
        return Ok(LogDet::IllConditioned(0.0));
    };
    let (mut lo, mut hi, mut logdet) = (f64::INFINITY, 0.0_f64, 0.0);
    for i in 0..p {
        let d = l[i * p + i];
        lo = lo.min(d);
        hi = hi.max(d);
        logdet += 2.0 * d.ln();
    }
    let rcond = (lo / hi).powi(2);
    if rcond < rcond_threshold || logdet < LN_MIN_POSITIVE {
        return Ok(LogDet::IllConditioned(rcond));
    }
    Ok(LogDet::Value(logdet))
}

/// Below this Cholesky condition estimate [`log_det_gram`] switches to QR.
const GRAM_QR_SWITCH: f64 = 1e-4;

/// `log|AᵀA|` for an `n × p` matrix `A` given row-major.
///
/// Well-conditioned Gram matrices go through Cholesky. Otherwise the value
/// comes from Householder QR of `A`, which avoids forming `AᵀA`, so graded
/// rows (weights spanning many orders of magnitude) lose `log κ(A)` digits
/// instead of `log κ(AᵀA)`. The conditioning rule is the one used by
/// [`log_det_psd`], applied to `R` (the Cholesky factor of `AᵀA` up to signs).
pub fn log_det_gram(a: &[f64], p: usize, rcond_threshold: f64) -> Result<LogDet> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = a.len() / p;
    if n < p {
        return Ok(LogDet::IllConditioned(0.0));
    }
    let mut g = SymMatrix::zeros(p);
    for row in a.chunks_exact(p) {
        g.add_outer_upper(1.0, row);
    }
    g.symmetrize();
    if let Some(l) = cholesky(&g) {
        let (mut lo, mut hi, mut logdet) = (f64::INFINITY, 0.0_f64, 0.0);
        for i in 0..p {
            let d = l[i * p + i];
            lo = lo.min(d);
            hi = hi.max(d);
            logdet += 2.0 * d.ln();
        }
        if (lo / hi).powi(2) >= GRAM_QR_SWITCH.max(rcond_threshold) && logdet >= LN_MIN_POSITIVE {
            return Ok(LogDet::Value(logdet));
        }
    }
    log_det_qr(a, n, p, rcond_threshold)
}

fn log_det_qr(a: &[f64], n: usize, p: usize, rcond_threshold: f64) -> Result<LogDet> {
    let mut order: Vec<usize> = (0..n).collect();
    let norm2 = |i: usize| a[i * p..(i + 1) * p].iter().map(|v| v * v).sum::<f64>();
    order.sort_by(|&x, &y| norm2(y).total_cmp(&norm2(x)));
    // Column-major working copy.
    let mut w = vec![0.0; n * p];
    for (r, &i) in order.iter().enumerate() {
        for j in 0..p {
            w[j * n + r] = a[i * p + j];
        }
    }
    let (mut lo, mut hi, mut logdet) = (f64::INFINITY, 0.0_f64, 0.0);
    for k in 0..p {
        let col = &w[k * n..(k + 1) * n];
        let scale = col[k..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(LogDet::IllConditioned(0.0));
        }
        let norm = scale
            * col[k..]
                .iter()
                .map(|v| (v / scale).powi(2))
                .sum::<f64>()
                .sqrt();
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        // v = x − αe₁ in place; vᵀv/2 = ‖x‖(‖x‖ + |x₁|) = ‖x‖ |v₁|.
        w[k * n + k] -= alpha;
        let vtv_half = norm * w[k * n + k].abs();
        for j in (k + 1)..p {
            let mut dotv = 0.0;
            for r in k..n {
                dotv += w[k * n + r] * w[j * n + r];
            }
            let f = dotv / vtv_half;
            for r in k..n {
                w[j * n + r] -= f * w[k * n + r];
            }
        }
        let d = alpha.abs();
        lo = lo.min(d);
        hi = hi.max(d);
        logdet += 2.0 * d.ln();
    }
    let rcond = (lo / hi).powi(2);
    if rcond < rcond_threshold || logdet < LN_MIN_POSITIVE {
        return Ok(LogDet::IllConditioned(rcond));
    }
    Ok(LogDet::Value(logdet))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with their unit eigenvectors
/// (`vectors[k]` belongs to `values[k]`).
pub fn symmetric_eigen(m: &SymMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = m.dim();
    let mut a = m.rows();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = m.max_abs();
    if scale > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..p {
                for j in (i + 1)..p {
                    off += a[i][j] * a[i][j];
                }
            }
            if off.sqrt() <= 1e-16 * scale {
                break;
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    if a[i][j].abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..p {
                        let (aki, akj) = (a[k][i], a[k][j]);
                        a[k][i] = c * aki - s * akj;
                        a[k][j] = s * aki + c * akj;
                    }
                    for k in 0..p {
                        let (aik, ajk) = (a[i][k], a[j][k]);
                        a[i][k] = c * aik - s * ajk;
                        a[j][k] = s * aik + c * ajk;
                    }
                    for row in v.iter_mut() {
                        let (vi, vj) = (row[i], row[j]);
                        row[i] = c * vi - s * vj;
                        row[j] = s * vi + c * vj;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| a[x][x].total_cmp(&a[y][y]));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..p).map(|r| v[r][k]).collect())
        .collect();
    (values, vectors)
}

pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    symmetric_eigen(m).0[0]
}

/// `a ⪯ b` in the Loewner order: the smallest eigenvalue of `b − a` is at
/// least `−tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    let diff = b.sub(a)?;
    Ok(min_eigenvalue(&diff) >= -tol)
}

/// Orthonormalizes the given vectors in place (modified Gram–Schmidt) and
/// returns the norms each vector had before it was normalized.
pub fn gram_schmidt(vectors: &mut [Vec<f64>]) -> Vec<f64> {
    let mut norms = Vec::with_capacity(vectors.len());
    for k in 0..vectors.len() {
        for j in 0..k {
            let d = dot(&vectors[k], &vectors[j]);
            let (head, tail) = vectors.split_at_mut(k);
            for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                *x -= d * y;
            }
        }
        let n = dot(&vectors[k], &vectors[k]).sqrt();
        for x in vectors[k].iter_mut() {
            *x /= n;
        }
        norms.push(n);
    }
    norms
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
