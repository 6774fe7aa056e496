//! Transition path theory observables from a committor on a point cloud.
//!
//! Integrals against the Gibbs measure are Monte-Carlo estimates with
//! self-normalized importance weights w_i ∝ μ(x_i)/ρ̂(x_i), so ν_AB is
//! reported per unit mass of the normalized Gibbs measure.

use serde::{Deserialize, Serialize};

use crate::bvp::Region;
use crate::cloud::{squared_distance, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::spatial::{neighbors_within, CellGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub dim: usize,
    /// Row-major gradients, `dim` values per point.
    pub values: Vec<f64>,
    /// Points whose neighborhood was rank deficient; their gradient is zero.
    pub degenerate: usize,
}

impl GradientField {
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn default_k_neighbors(dim: usize) -> usize {
    4 * (dim + 1)
}

/// Solves the small dense system `a x = b` in place by Gaussian elimination
/// with partial pivoting. Returns false when a pivot is negligible.
fn dense_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return false;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap();
        if a[piv * n + col].abs() <= 1e-13 * scale {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    true
}

/// The `k` nearest points to point `i` (including `i`), by growing a radius
/// search on the grid.
fn k_nearest(cloud: &PointCloud, grid: Option<&CellGrid>, i: usize, k: usize, r0: f64) -> Vec<usize> {
    let p = cloud.point(i);
    let mut r = r0;
    for attempt in 0.. {
        let mut cand = if attempt < 4 {
            neighbors_within(cloud, grid, p, r)
        } else {
            (0..cloud.len()).collect()
        };
        if cand.len() >= k || cand.len() == cloud.len() {
            cand.sort_by(|&a, &b| {
                squared_distance(cloud.point(a), p)
                    .total_cmp(&squared_distance(cloud.point(b), p))
                    .then(a.cmp(&b))
            });
            cand.truncate(k);
            return cand;
        }
        r *= 2.0;
    }
    unreachable!()
}

/// Gradient of `q` at every point from a Gaussian-weighted least-squares
/// affine fit over the `k` nearest neighbors.
pub fn estimate_gradient(cloud: &PointCloud, q: &[f64], k: usize, epsilon: f64) -> Result<GradientField> {
    let m = cloud.dim();
    let n = cloud.len();
    if q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q.len(),
        });
    }
    if k < m + 1 {
        return Err(invalid("k_neighbors", format!("need at least {} neighbors", m + 1)));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let mut values = vec![0.0; n * m];
    let mut degenerate = 0;
    if n == 0 {
        return Ok(GradientField { dim: m, values, degenerate });
    }
    // Radius that holds about k points on average, from the bounding box.
    let extents: Vec<f64> = (0..m)
        .map(|c| {
            let (lo, hi) = cloud
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[c]), b.max(p[c])));
            hi - lo
        })
        .collect();
    let widest = extents.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let vol: f64 = extents.iter().map(|e| e.max(1e-3 * widest)).product();
    let r0 = (vol * k as f64 / n as f64).powf(1.0 / m as f64).max(1e-12);
    let grid = CellGrid::build(cloud, r0);
    let s = m + 1;
    for i in 0..n {
        let nb = k_nearest(cloud, grid.as_ref(), i, k, r0);
        let xi = cloud.point(i);
        let d2min = nb.iter().map(|&j| squared_distance(cloud.point(j), xi)).fold(f64::INFINITY, f64::min);
        let mut a = vec![0.0; s * s];
        let mut b = vec![0.0; s];
        let mut row = vec![0.0; s];
        for &j in &nb {
            let xj = cloud.point(j);
            let w = (-(squared_distance(xj, xi) - d2min) / epsilon).exp();
            row[0] = 1.0;
            for c in 0..m {
                row[c + 1] = xj[c] - xi[c];
            }
            for r in 0..s {
                b[r] += w * row[r] * q[j];
                for c in 0..s {
                    a[r * s + c] += w * row[r] * row[c];
                }
            }
        }
        if dense_solve(&mut a, &mut b, s) {
            values[i * m..(i + 1) * m].copy_from_slice(&b[1..]);
        } else {
            degenerate += 1;
        }
    }
    Ok(GradientField { dim: m, values, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TptQuantities {
    #[serde(rename = "nu_AB")]
    pub nu_ab: f64,
    /// Standard error of the self-normalized estimate of ν_AB.
    #[serde(rename = "nu_AB_stderr")]
    pub nu_ab_stderr: f64,
    #[serde(rename = "rho_A")]
    pub rho_a: f64,
    #[serde(rename = "k_AB")]
    pub k_ab: f64,
    pub n: usize,
    pub eps: f64,
    pub warnings: Vec<String>,
    /// Reactive current J_i = β⁻¹μ_i∇q_i, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current: Option<Vec<f64>>,
}

/// Normalized importance weights w_i ∝ μ_i/ρ_i.
pub fn importance_weights(mu: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != rho.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: rho.len(),
        });
    }
    let raw: Vec<f64> = mu
        .iter()
        .zip(rho)
        .enumerate()
        .map(|(i, (&m, &r))| {
            if !(m >= 0.0 && m.is_finite()) {
                Err(Error::NegativeMeasure { index: i })
            } else if !(r > 0.0) {
                Err(invalid("rho", format!("density estimate vanishes at point {i}")))
            } else {
                Ok(m / r)
            }
        })
        .collect::<Result<_>>()?;
    let total: f64 = raw.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateMeasure);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

pub struct TptInput<'a> {
    pub q: &'a [f64],
    pub mu: &'a [f64],
    pub rho: &'a [f64],
    pub labels: &'a [Region],
    pub gradients: &'a GradientField,
    pub beta: f64,
    pub eps: f64,
}

pub fn compute_tpt(input: &TptInput<'_>, keep_current: bool) -> Result<TptQuantities> {
    let n = input.q.len();
    for len in [input.mu.len(), input.rho.len(), input.labels.len(), input.gradients.values.len() / input.gradients.dim.max(1)] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    if !(input.beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    if let Some(i) = input.q.iter().position(|v| !(-1e-8..=1.0 + 1e-8).contains(v)) {
        return Err(invalid("q", format!("value at point {i} lies outside [0, 1]")));
    }
    let w = importance_weights(input.mu, input.rho)?;
    let g2 = |i: usize| input.gradients.at(i).iter().map(|v| v * v).sum::<f64>();
    let h: Vec<f64> = (0..n)
        .map(|i| if input.labels[i] == Region::Interior { g2(i) / input.beta } else { 0.0 })
        .collect();
    let nu_ab: f64 = w.iter().zip(&h).map(|(a, b)| a * b).sum();
    let nu_ab_stderr = w.iter().zip(&h).map(|(a, b)| a * a * (b - nu_ab).powi(2)).sum::<f64>().sqrt();
    let rho_a: f64 = (0..n)
        .filter(|&i| input.labels[i] != Region::B)
        .map(|i| w[i] * (1.0 - input.q[i]))
        .sum();
    if !(rho_a > 0.0) {
        return Err(Error::UndefinedEscapeRate);
    }
    let mut warnings = Vec::new();
    if input.gradients.degenerate > 0 {
        warnings.push(format!(
            "{} points had rank-deficient neighborhoods; their gradients were set to zero",
            input.gradients.degenerate
        ));
    }
    let current = keep_current.then(|| {
        let m = input.gradients.dim;
        let mut j = vec![0.0; n * m];
        for i in 0..n {
            for c in 0..m {
                j[i * m + c] = input.mu[i] * input.gradients.at(i)[c] / input.beta;
            }
        }
        j
    });
    Ok(TptQuantities {
        nu_ab,
        nu_ab_stderr,
        rho_a,
        k_ab: nu_ab / rho_a,
        n,
        eps: input.eps,
        warnings,
        current,
    })
}
