//! Kernel density estimates on a hexagonal patch of the triangular lattice.
//!
//! The patch has circumradius 1 and lattice step δ = 1/n_r. At a point far
//! from the edge the estimate with the point itself ("biased") is
//! (1 + 6Σ_k e^{−k²δ²/ε})/n and without it ("unbiased") 6Σ_k e^{−k²δ²/ε}/n,
//! with k = 1..⌊3√ε/δ⌋. These are compared to a uniform reference density.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Result};
use crate::kernel::{build_kernel_with, kde, log_grid, KernelOptions};

use super::fit::{golden_section, power_law_fit};
use super::scaling::hexagon_point_count;

/// Reference density ρ_ε for the relative error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HexReference {
    /// (πε)^{d/2}·2/(3√3), the uniform density smoothed over R².
    HalfExponent,
    /// (πε)^d·2/(3√3); reproduces the reference optimal-ε fit.
    FullExponent,
}

impl HexReference {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "half-exponent" => Some(Self::HalfExponent),
            "full-exponent" => Some(Self::FullExponent),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::HalfExponent => "half-exponent",
            Self::FullExponent => "full-exponent",
        }
    }

    pub fn density(self, eps: f64) -> f64 {
        let d = 2.0;
        let p = match self {
            Self::HalfExponent => d / 2.0,
            Self::FullExponent => d,
        };
        (std::f64::consts::PI * eps).powf(p) * 2.0 / (3.0 * 3f64.sqrt())
    }
}

pub fn ring_count(eps: f64, delta: f64) -> usize {
    (3.0 * eps.sqrt() / delta).floor() as usize
}

/// Closed-form truncated estimate at an interior lattice point.
pub fn hexagon_kde(eps: f64, delta: f64, n: usize, biased: bool) -> f64 {
    let s: f64 = (1..=ring_count(eps, delta))
        .map(|k| (-((k as f64) * delta).powi(2) / eps).exp())
        .sum();
    (if biased { 1.0 } else { 0.0 } + 6.0 * s) / n as f64
}

pub fn relative_error(eps: f64, delta: f64, n: usize, biased: bool, reference: HexReference) -> f64 {
    let r = reference.density(eps);
    (hexagon_kde(eps, delta, n, biased) - r).abs() / r
}

/// Lattice point δ·(i + j/2, j√3/2) in axial coordinates.
fn lattice(delta: f64, i: i64, j: i64) -> [f64; 2] {
    [delta * (i as f64 + 0.5 * j as f64), delta * (0.75f64.sqrt() * j as f64)]
}

/// All lattice points of the hexagon with `rings` rings, center first.
pub fn hexagon_cloud(rings: usize) -> PointCloud {
    let r = rings as i64;
    let delta = 1.0 / rings.max(1) as f64;
    let mut c = PointCloud::with_capacity(2, hexagon_point_count(rings));
    c.push(&[0.0, 0.0]);
    for i in -r..=r {
        for j in -r..=r {
            if (i, j) != (0, 0) && (i + j).abs() <= r {
                c.push(&lattice(delta, i, j));
            }
        }
    }
    c
}

/// The center and the first `k` points along each of the six lattice rays.
pub fn ray_cloud(delta: f64, k: usize) -> PointCloud {
    let dirs = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
    let mut c = PointCloud::with_capacity(2, 1 + 6 * k);
    c.push(&[0.0, 0.0]);
    for &(a, b) in &dirs {
        for s in 1..=k as i64 {
            c.push(&lattice(delta, a * s, b * s));
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexagonStudy {
    pub rings: usize,
    pub delta: f64,
    pub n: usize,
    pub eps_grid: Vec<f64>,
    pub biased: Vec<f64>,
    pub unbiased: Vec<f64>,
    /// Grid values of ε at local minima of the biased error.
    pub local_minima: Vec<f64>,
    pub eps_opt: f64,
    pub err_opt: f64,
}

pub fn study_rings(rings: usize, eps_grid: &[f64], reference: HexReference) -> Result<HexagonStudy> {
    if rings < 10 {
        return Err(invalid("rings", "need at least 10 rings"));
    }
    if eps_grid.len() < 3 {
        return Err(invalid("eps_grid", "need at least three values"));
    }
    let delta = 1.0 / rings as f64;
    let n = hexagon_point_count(rings);
    let biased: Vec<f64> = eps_grid.iter().map(|&e| relative_error(e, delta, n, true, reference)).collect();
    let unbiased: Vec<f64> = eps_grid.iter().map(|&e| relative_error(e, delta, n, false, reference)).collect();
    let m = eps_grid.len();
    let local_minima: Vec<f64> = (0..m)
        .filter(|&i| (i == 0 || biased[i] <= biased[i - 1]) && (i + 1 == m || biased[i] <= biased[i + 1]))
        .map(|i| eps_grid[i])
        .collect();
    let best = (0..m).min_by(|&a, &b| biased[a].total_cmp(&biased[b])).unwrap();
    let lo = eps_grid[best.saturating_sub(1)].ln();
    let hi = eps_grid[(best + 1).min(m - 1)].ln();
    let f = |le: f64| relative_error(le.exp(), delta, n, true, reference);
    let le = golden_section(f, lo, hi, 1e-10);
    let (eps_opt, err_opt) = if f(le) <= biased[best] {
        (le.exp(), f(le))
    } else {
        (eps_grid[best], biased[best])
    };
    Ok(HexagonStudy {
        rings,
        delta,
        n,
        eps_grid: eps_grid.to_vec(),
        biased,
        unbiased,
        local_minima,
        eps_opt,
        err_opt,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexCrossCheck {
    pub rings: usize,
    pub eps: f64,
    /// Closed form vs generic kde on the ray sub-cloud, rescaled to the full n.
    pub closed_biased: f64,
    pub kde_biased: f64,
    pub closed_unbiased: f64,
    pub kde_unbiased: f64,
    /// Full-lattice sum over ‖x‖² ≤ 9ε vs kde on the full hexagon with cutoff e^{−9}.
    pub lattice_sum: f64,
    pub lattice_kde: f64,
}

impl HexCrossCheck {
    pub fn max_relative_gap(&self) -> f64 {
        let g = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        g(self.closed_biased, self.kde_biased)
            .max(g(self.closed_unbiased, self.kde_unbiased))
            .max(g(self.lattice_sum, self.lattice_kde))
    }
}

/// Ties the closed form to the production kernel and KDE code.
pub fn cross_check(rings: usize, eps: f64) -> Result<HexCrossCheck> {
    let delta = 1.0 / rings as f64;
    let n = hexagon_point_count(rings);
    let k = ring_count(eps, delta);
    if k == 0 || k > rings {
        return Err(invalid("eps", "truncation radius must fit inside the hexagon"));
    }
    let rays = ray_cloud(delta, k);
    let scale = rays.len() as f64 / n as f64;
    let dense = |diag: bool| -> Result<f64> {
        let opts = KernelOptions {
            cutoff: 0.0,
            include_diagonal: diag,
            ..KernelOptions::default()
        };
        Ok(kde(&build_kernel_with(&rays, eps, &opts)?).values[0] * scale)
    };
    let kde_biased = dense(true)?;
    let kde_unbiased = dense(false)?;

    let hex = hexagon_cloud(rings);
    let tau = (-9.0f64).exp();
    let opts = KernelOptions {
        cutoff: tau,
        ..KernelOptions::default()
    };
    let lattice_kde = kde(&build_kernel_with(&hex, eps, &opts)?).values[0];
    let lattice_sum = hex
        .iter()
        .map(|p| (-(p[0] * p[0] + p[1] * p[1]) / eps).exp())
        .filter(|&v| v >= tau)
        .sum::<f64>()
        / n as f64;
    Ok(HexCrossCheck {
        rings,
        eps,
        closed_biased: hexagon_kde(eps, delta, n, true),
        kde_biased,
        closed_unbiased: hexagon_kde(eps, delta, n, false),
        kde_unbiased,
        lattice_sum,
        lattice_kde,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexagonReport {
    pub reference: HexReference,
    pub studies: Vec<HexagonStudy>,
    pub fit_coef: f64,
    pub fit_exponent: f64,
    pub cross_check: HexCrossCheck,
}

impl HexagonReport {
    pub fn results_csv(&self) -> String {
        let mut s = String::from("rings,delta,n,eps,biased_rel_err,unbiased_rel_err\n");
        for st in &self.studies {
            for ((e, b), u) in st.eps_grid.iter().zip(&st.biased).zip(&st.unbiased) {
                let _ = writeln!(s, "{},{:.17e},{},{:.17e},{:.17e},{:.17e}", st.rings, st.delta, st.n, e, b, u);
            }
        }
        s
    }

    pub fn optima_csv(&self) -> String {
        let mut s = String::from("rings,delta,n,eps_opt,rel_err_opt,local_minima\n");
        for st in &self.studies {
            let _ = writeln!(
                s,
                "{},{:.17e},{},{:.17e},{:.17e},{}",
                st.rings,
                st.delta,
                st.n,
                st.eps_opt,
                st.err_opt,
                st.local_minima.len()
            );
        }
        s
    }
}

pub fn hexagon_study(
    rings: &[usize],
    eps_grid: &[f64],
    reference: HexReference,
    check: (usize, f64),
) -> Result<HexagonReport> {
    if rings.len() < 2 {
        return Err(invalid("rings", "need at least two ring counts for a fit"));
    }
    let studies = rings
        .iter()
        .map(|&r| study_rings(r, eps_grid, reference))
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = studies.iter().map(|s| s.delta).collect();
    let opts: Vec<f64> = studies.iter().map(|s| s.eps_opt).collect();
    let (fit_coef, fit_exponent) = power_law_fit(&deltas, &opts)?;
    Ok(HexagonReport {
        reference,
        studies,
        fit_coef,
        fit_exponent,
        cross_check: cross_check(check.0, check.1)?,
    })
}

pub fn default_eps_grid() -> Vec<f64> {
    log_grid(1e-4, 1.0, 200)
}
