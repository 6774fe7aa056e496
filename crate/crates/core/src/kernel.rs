//! Sparse Gaussian kernel matrices, kernel density estimates and the Ksum
//! bandwidth heuristic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{squared_distance, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::spatial::CellGrid;
use crate::sparse::CsrMatrix;

pub const DEFAULT_CUTOFF: f64 = 1e-8;
pub const DEFAULT_MAX_NNZ: usize = 150_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Entries below this value are dropped; 0 keeps every nonzero entry.
    pub cutoff: f64,
    pub include_diagonal: bool,
    /// Largest number of stored entries before assembly gives up.
    pub max_nnz: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            cutoff: DEFAULT_CUTOFF,
            include_diagonal: true,
            max_nnz: DEFAULT_MAX_NNZ,
        }
    }
}

/// Distance beyond which exp(−d²/ε) < cutoff. Infinite when the cutoff is 0.
pub fn cutoff_radius(epsilon: f64, cutoff: f64) -> f64 {
    if cutoff > 0.0 {
        (epsilon * (1.0 / cutoff).ln()).sqrt()
    } else {
        f64::INFINITY
    }
}

#[inline]
pub fn gaussian(d2: f64, epsilon: f64) -> f64 {
    (-d2 / epsilon).exp()
}

/// K_ij = exp(−‖x_i − x_j‖²/ε), stored where K_ij ≥ cutoff.
#[derive(Debug, Clone)]
pub struct SparseKernel {
    pub epsilon: f64,
    pub cutoff: f64,
    pub includes_diagonal: bool,
    pub matrix: CsrMatrix,
}

impl SparseKernel {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_bandwidth(epsilon: f64, cutoff: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(0.0..1.0).contains(&cutoff) {
        return Err(invalid("cutoff", format!("must lie in [0, 1), got {cutoff}")));
    }
    Ok(())
}

/// Neighbor lookup shared by kernel assembly and the local generator rows.
pub struct KernelNeighbors<'a> {
    cloud: &'a PointCloud,
    grid: Option<CellGrid>,
    pub epsilon: f64,
    pub cutoff: f64,
    radius: f64,
}

impl<'a> KernelNeighbors<'a> {
    pub fn new(cloud: &'a PointCloud, epsilon: f64, cutoff: f64) -> Result<Self> {
        check_bandwidth(epsilon, cutoff)?;
        let radius = cutoff_radius(epsilon, cutoff);
        let grid = if radius.is_finite() {
            CellGrid::build(cloud, radius)
        } else {
            None
        };
        Ok(Self {
            cloud,
            grid,
            epsilon,
            cutoff,
            radius,
        })
    }

    pub fn cloud(&self) -> &PointCloud {
        self.cloud
    }

    /// Calls `f(j, K(p, x_j))` for every point whose kernel value at `p` is
    /// stored, i.e. nonzero and at least the cutoff. Order is unspecified.
    pub fn for_each(&self, p: &[f64], mut f: impl FnMut(usize, f64)) {
        let visit = |j: usize| {
            let v = gaussian(squared_distance(self.cloud.point(j), p), self.epsilon);
            if v >= self.cutoff && v > 0.0 {
                f(j, v);
            }
        };
        match &self.grid {
            Some(g) => g.for_each_candidate(p, self.radius, visit),
            None => (0..self.cloud.len()).for_each(visit),
        }
    }

    /// Sorted `(j, K(p, x_j))` pairs.
    pub fn row(&self, p: &[f64]) -> Vec<(u32, f64)> {
        let mut r = Vec::new();
        self.for_each(p, |j, v| r.push((j as u32, v)));
        r.sort_unstable_by_key(|e| e.0);
        r
    }

    /// Σ_j K(p, x_j) over stored entries.
    pub fn row_sum(&self, p: &[f64]) -> f64 {
        let r = self.row(p);
        r.iter().map(|e| e.1).sum()
    }
}

pub fn build_kernel(cloud: &PointCloud, epsilon: f64, cutoff: f64) -> Result<SparseKernel> {
    build_kernel_with(
        cloud,
        epsilon,
        &KernelOptions {
            cutoff,
            ..KernelOptions::default()
        },
    )
}

/// Assembles the kernel row by row. Each row is computed independently from
/// the symmetric distance, so the stored matrix is exactly symmetric.
pub fn build_kernel_with(
    cloud: &PointCloud,
    epsilon: f64,
    opts: &KernelOptions,
) -> Result<SparseKernel> {
    let nb = KernelNeighbors::new(cloud, epsilon, opts.cutoff)?;
    let n = cloud.len();
    if n > u32::MAX as usize {
        return Err(invalid("cloud", "too many points"));
    }
    // Probe a few rows to fail early on clouds that would exhaust memory.
    if n > 0 {
        let probes = n.min(64);
        let sampled: usize = (0..probes).map(|k| nb.row(cloud.point(k * n / probes)).len()).sum();
        let estimate = sampled * n / probes;
        if estimate > opts.max_nnz {
            return Err(Error::Capacity {
                requested: estimate,
                budget: opts.max_nnz,
            });
        }
    }
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = nb.row(cloud.point(i));
            if !opts.include_diagonal {
                r.retain(|e| e.0 as usize != i);
            }
            r
        })
        .collect();
    let nnz: usize = rows.iter().map(Vec::len).sum();
    if nnz > opts.max_nnz {
        return Err(Error::Capacity {
            requested: nnz,
            budget: opts.max_nnz,
        });
    }
    Ok(SparseKernel {
        epsilon,
        cutoff: opts.cutoff,
        includes_diagonal: opts.include_diagonal,
        matrix: CsrMatrix::from_rows(n, rows),
    })
}

/// ρ_i = (1/n) Σ_j K_ij.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

pub fn kde(kernel: &SparseKernel) -> DensityEstimate {
    let n = kernel.n() as f64;
    DensityEstimate {
        values: kernel.matrix.row_sums().into_iter().map(|s| s / n).collect(),
        epsilon: kernel.epsilon,
    }
}

/// Default ksum scan grid: 64 log-spaced values over [1e-4, 10].
pub fn default_ksum_grid() -> Vec<f64> {
    log_grid(1e-4, 10.0, 64)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k == count - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsumRow {
    pub epsilon: f64,
    pub s: f64,
    pub dlog_s_dlog_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsumScan {
    pub rows: Vec<KsumRow>,
    pub eps_star: f64,
    pub star_index: usize,
}

impl KsumScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,S,dlogS_dlogeps\n");
        for r in &self.rows {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r.epsilon, r.s, r.dlog_s_dlog_eps));
        }
        s
    }
}

/// S(ε) = Σ_ij exp(−‖x_i − x_j‖²/ε) for every ε in `eps`, without cutoff.
pub fn kernel_sums(cloud: &PointCloud, eps: &[f64]) -> Vec<f64> {
    let n = cloud.len();
    let inv: Vec<f64> = eps.iter().map(|e| 1.0 / e).collect();
    let per_row: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; inv.len()];
            let xi = cloud.point(i);
            for j in i + 1..n {
                let d2 = squared_distance(xi, cloud.point(j));
                for (a, &w) in acc.iter_mut().zip(&inv) {
                    let t = d2 * w;
                    // exp underflows to exactly 0 past this point.
                    if t < 746.0 {
                        *a += (-t).exp();
                    }
                }
            }
            acc
        })
        .collect();
    let mut s = vec![0.0; eps.len()];
    for row in per_row {
        for (t, v) in s.iter_mut().zip(row) {
            *t += v;
        }
    }
    s.iter().map(|v| n as f64 + 2.0 * v).collect()
}

/// Ksum heuristic: ε* maximizes d log S / d log ε over interior grid points.
pub fn ksum_scan(cloud: &PointCloud, eps_grid: &[f64]) -> Result<KsumScan> {
    if eps_grid.len() < 3 {
        return Err(invalid("eps_grid", "need at least three values"));
    }
    if eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        || eps_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid("eps_grid", "values must be positive and strictly increasing"));
    }
    if cloud.is_empty() {
        return Err(invalid("cloud", "must not be empty"));
    }
    let s = kernel_sums(cloud, eps_grid);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(invalid("cloud", "kernel sum is not finite"));
    }
    let le: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
    let ls: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let m = eps_grid.len();
    let slope = |k: usize| {
        let (a, b) = match k {
            0 => (0, 1),
            k if k == m - 1 => (m - 2, m - 1),
            k => (k - 1, k + 1),
        };
        (ls[b] - ls[a]) / (le[b] - le[a])
    };
    let rows: Vec<KsumRow> = (0..m)
        .map(|k| KsumRow {
            epsilon: eps_grid[k],
            s: s[k],
            dlog_s_dlog_eps: slope(k),
        })
        .collect();
    let star_index = (1..m - 1)
        .max_by(|&a, &b| rows[a].dlog_s_dlog_eps.total_cmp(&rows[b].dlog_s_dlog_eps).then(b.cmp(&a)))
        .expect("at least one interior point");
    Ok(KsumScan {
        eps_star: eps_grid[star_index],
        star_index,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = PointCloud::new(dim);
        for _ in 0..n {
            let p: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
            c.push(&p);
        }
        c
    }

    #[test]
    fn analytic_entries() {
        let eps: f64 = 0.3;
        let c = PointCloud::from_rows(&[[0.0, 0.0], [eps.sqrt(), 0.0]]).unwrap();
        let k = build_kernel(&c, eps, 0.0).unwrap();
        assert!((k.matrix.get(0, 1) - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(k.matrix.get(0, 0), 1.0);
        let one = PointCloud::from_rows(&[[2.0]]).unwrap();
        let k1 = build_kernel(&one, 0.1, 1e-8).unwrap();
        assert_eq!(k1.matrix.to_dense(), vec![vec![1.0]]);
        assert_eq!(kde(&k1).values, vec![1.0]);
        let d = 0.2;
        let line = PointCloud::from_rows(&[[0.0], [d], [2.0 * d]]).unwrap();
        let kl = build_kernel(&line, 0.5, 0.0).unwrap();
        assert!((kl.matrix.get(0, 2) - kl.matrix.get(0, 1).powi(4)).abs() < 1e-15);
        let rho = kde(&build_kernel(&c, eps, 0.0).unwrap());
        assert!((rho.values[0] - (1.0 + (-1.0f64).exp()) / 2.0).abs() < 1e-16);
    }

    #[test]
    fn kernel_is_symmetric_with_unit_diagonal() {
        let c = random_cloud(300, 2, 1);
        let k = build_kernel(&c, 0.01, 1e-8).unwrap();
        assert!(k.matrix.is_symmetric());
        assert!(k.matrix.diagonal().iter().all(|&v| v == 1.0));
        assert!(k.matrix.values().iter().all(|&v| v > 0.0 && v <= 1.0 && v >= 1e-8));
    }

    #[test]
    fn sparse_kde_matches_dense() {
        for dim in [1, 2, 3, 5] {
            let c = random_cloud(400, dim, dim as u64);
            let k = build_kernel(&c, 0.02, 0.0).unwrap();
            let rho = kde(&k);
            for i in 0..c.len() {
                let dense: f64 = (0..c.len())
                    .map(|j| gaussian(squared_distance(c.point(i), c.point(j)), 0.02))
                    .sum::<f64>()
                    / c.len() as f64;
                assert!((rho.values[i] - dense).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn excluded_diagonal() {
        let c = random_cloud(50, 2, 9);
        let opts = KernelOptions {
            cutoff: 0.0,
            include_diagonal: false,
            ..KernelOptions::default()
        };
        let k = build_kernel_with(&c, 0.05, &opts).unwrap();
        let full = build_kernel(&c, 0.05, 0.0).unwrap();
        assert!(!k.matrix.contains(3, 3));
        let a = kde(&k).values;
        let b = kde(&full).values;
        for i in 0..50 {
            assert!((b[i] - a[i] - 1.0 / 50.0).abs() < 1e-15);
        }
    }

    #[test]
    fn capacity_budget_is_enforced() {
        let c = random_cloud(200, 2, 3);
        let opts = KernelOptions {
            cutoff: 0.0,
            max_nnz: 1000,
            ..KernelOptions::default()
        };
        assert!(matches!(
            build_kernel_with(&c, 1.0, &opts),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn bad_parameters() {
        let c = random_cloud(5, 2, 3);
        assert!(build_kernel(&c, 0.0, 1e-8).is_err());
        assert!(build_kernel(&c, 1.0, 1.0).is_err());
        assert!(build_kernel(&c, 1.0, -0.1).is_err());
    }

    #[test]
    fn ksum_limits_and_slope() {
        let c = random_cloud(100, 2, 4);
        let grid = log_grid(1e-8, 1e4, 40);
        let scan = ksum_scan(&c, &grid).unwrap();
        let n = 100.0;
        assert!((scan.rows[0].s - n).abs() < 1e-9);
        assert!((scan.rows.last().unwrap().s - n * n).abs() / (n * n) < 1e-3);
        assert!(scan.rows.windows(2).all(|w| w[1].s >= w[0].s));
        let best = scan.rows[scan.star_index].dlog_s_dlog_eps;
        assert!(scan.rows[1..39].iter().all(|r| r.dlog_s_dlog_eps <= best));
        assert!(scan.star_index > 0 && scan.star_index < 39);
        assert!(ksum_scan(&c, &[0.1, 0.2]).is_err());
        assert!(ksum_scan(&c, &[0.1, 0.3, 0.2]).is_err());
    }
}
