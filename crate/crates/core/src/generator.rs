//! Diffusion-map and target-measure diffusion-map generators.
//!
//! Both pipelines scale column `j` of the kernel, renormalize rows to get a
//! Markov matrix `P`, and set `L = (P − I)/ε`:
//!
//! * TMDmap scales by `μ_j^{1/2} / ρ_j`,
//! * Dmap scales by `ρ_j^{−α}`,
//!
//! where `ρ` is the kernel density estimate and `μ` the unnormalized target
//! measure. The sign convention `L = (P − I)/ε` makes `L` a generator: its
//! off-diagonal entries are nonnegative and its rows sum to zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::kernel::{DensityEstimate, KernelNeighbors, SparseKernel};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorMode {
    Dmap { alpha: f64 },
    Tmdmap,
}

/// Every stage of the pipeline K → D → K_norm → P → L.
#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    pub epsilon: f64,
    pub mode: GeneratorMode,
    /// Target measure (TMDmap only).
    pub mu: Option<Vec<f64>>,
    /// Kernel density estimate, the diagonal of D_ε.
    pub d_eps: Vec<f64>,
    /// Column scaling applied to K.
    pub col_scale: Vec<f64>,
    pub k_norm: CsrMatrix,
    /// Row sums of `k_norm`, the diagonal of D_{ε,μ}.
    pub d_norm: Vec<f64>,
    pub p: CsrMatrix,
    pub l: CsrMatrix,
}

fn check_measure(mu: &[f64]) -> Result<()> {
    if let Some(index) = mu.iter().position(|m| !(*m >= 0.0 && m.is_finite())) {
        return Err(Error::NegativeMeasure { index });
    }
    if mu.iter().all(|&m| m == 0.0) {
        return Err(Error::DegenerateMeasure);
    }
    Ok(())
}

fn check_lengths(kernel: &SparseKernel, kde: &DensityEstimate) -> Result<()> {
    if kde.values.len() != kernel.n() {
        return Err(Error::DimensionMismatch {
            expected: kernel.n(),
            found: kde.values.len(),
        });
    }
    if let Some(i) = kde.values.iter().position(|r| !(*r > 0.0)) {
        return Err(invalid("kde", format!("density estimate vanishes at point {i}")));
    }
    Ok(())
}

pub fn build_tmdmap(
    kernel: &SparseKernel,
    kde: &DensityEstimate,
    mu: &[f64],
) -> Result<GeneratorBundle> {
    check_lengths(kernel, kde)?;
    if mu.len() != kernel.n() {
        return Err(Error::DimensionMismatch {
            expected: kernel.n(),
            found: mu.len(),
        });
    }
    check_measure(mu)?;
    let scale: Vec<f64> = mu.iter().zip(&kde.values).map(|(m, r)| m.sqrt() / r).collect();
    assemble(kernel, kde, scale, GeneratorMode::Tmdmap, Some(mu.to_vec()))
}

pub fn build_dmap(kernel: &SparseKernel, kde: &DensityEstimate, alpha: f64) -> Result<GeneratorBundle> {
    check_lengths(kernel, kde)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    let scale: Vec<f64> = kde.values.iter().map(|r| r.powf(-alpha)).collect();
    assemble(kernel, kde, scale, GeneratorMode::Dmap { alpha }, None)
}

fn assemble(
    kernel: &SparseKernel,
    kde: &DensityEstimate,
    scale: Vec<f64>,
    mode: GeneratorMode,
    mu: Option<Vec<f64>>,
) -> Result<GeneratorBundle> {
    let k = &kernel.matrix;
    let n = k.nrows();
    let eps = kernel.epsilon;
    let mut kn_vals = Vec::with_capacity(k.nnz());
    let mut d_norm = Vec::with_capacity(n);
    for i in 0..n {
        let (c, v) = k.row(i);
        let mut s = 0.0;
        for (&j, &a) in c.iter().zip(v) {
            let w = a * scale[j as usize];
            kn_vals.push(w);
            s += w;
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateRow { row: i });
        }
        d_norm.push(s);
    }
    let k_norm = CsrMatrix::from_parts(
        n,
        n,
        k.row_ptr().to_vec(),
        k.col_indices().to_vec(),
        kn_vals,
    );
    let mut p_vals = Vec::with_capacity(k.nnz());
    for (i, &d) in d_norm.iter().enumerate() {
        p_vals.extend(k_norm.row(i).1.iter().map(|w| w / d));
    }
    let p = CsrMatrix::from_parts(
        n,
        n,
        k.row_ptr().to_vec(),
        k.col_indices().to_vec(),
        p_vals,
    );
    let l = generator_from_markov(&p, eps);
    Ok(GeneratorBundle {
        epsilon: eps,
        mode,
        mu,
        d_eps: kde.values.clone(),
        col_scale: scale,
        k_norm,
        d_norm,
        p,
        l,
    })
}

/// L = (P − I)/ε, inserting diagonal entries that `P` does not store.
fn generator_from_markov(p: &CsrMatrix, eps: f64) -> CsrMatrix {
    let n = p.nrows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(p.nnz() + n);
    let mut vals = Vec::with_capacity(p.nnz() + n);
    row_ptr.push(0);
    for i in 0..n {
        let (c, v) = p.row(i);
        let mut diag_done = false;
        for (&j, &a) in c.iter().zip(v) {
            if !diag_done && j as usize > i {
                cols.push(i as u32);
                vals.push(-1.0 / eps);
                diag_done = true;
            }
            cols.push(j);
            if j as usize == i {
                vals.push((a - 1.0) / eps);
                diag_done = true;
            } else {
                vals.push(a / eps);
            }
        }
        if !diag_done {
            cols.push(i as u32);
            vals.push(-1.0 / eps);
        }
        row_ptr.push(cols.len());
    }
    CsrMatrix::from_parts(n, n, row_ptr, cols, vals)
}

/// `scale · Σ_j P_ij (f_j − f_i) / ε`, which is exactly zero for constant `f`.
pub fn apply_generator(bundle: &GeneratorBundle, f: &[f64], scale: f64) -> Result<Vec<f64>> {
    let n = bundle.p.nrows();
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f.len(),
        });
    }
    let inv = scale / bundle.epsilon;
    Ok((0..n)
        .map(|i| {
            let (c, v) = bundle.p.row(i);
            let fi = f[i];
            inv * c.iter().zip(v).map(|(&j, p)| p * (f[j as usize] - fi)).sum::<f64>()
        })
        .collect())
}

/// Worst deviations from the structural invariants of P and L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub max_p_row_error: f64,
    pub min_p_entry: f64,
    /// Largest |row sum of L| times ε.
    pub max_l_row_error_scaled: f64,
    pub min_l_offdiag: f64,
    pub max_l_diag: f64,
}

impl InvariantReport {
    /// Tolerances: P rows sum to one within 1e-12, L rows to zero within 1e-12/ε.
    pub fn holds(&self) -> bool {
        self.max_p_row_error <= 1e-12
            && self.min_p_entry >= 0.0
            && self.max_l_row_error_scaled <= 1e-12
            && self.min_l_offdiag >= 0.0
            && self.max_l_diag <= 0.0
    }
}

impl GeneratorBundle {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn invariants(&self) -> InvariantReport {
        let mut r = InvariantReport {
            max_p_row_error: 0.0,
            min_p_entry: f64::INFINITY,
            max_l_row_error_scaled: 0.0,
            min_l_offdiag: f64::INFINITY,
            max_l_diag: f64::NEG_INFINITY,
        };
        for i in 0..self.n() {
            let (_, pv) = self.p.row(i);
            r.max_p_row_error = r.max_p_row_error.max((pv.iter().sum::<f64>() - 1.0).abs());
            for &a in pv {
                r.min_p_entry = r.min_p_entry.min(a);
            }
            let (lc, lv) = self.l.row(i);
            let s: f64 = lv.iter().sum();
            r.max_l_row_error_scaled = r.max_l_row_error_scaled.max((s * self.epsilon).abs());
            for (&j, &a) in lc.iter().zip(lv) {
                if j as usize == i {
                    r.max_l_diag = r.max_l_diag.max(a);
                } else {
                    r.min_l_offdiag = r.min_l_offdiag.min(a);
                }
            }
        }
        r
    }

    pub fn write_p_matrix_market(&self, w: impl Write) -> Result<()> {
        self.p.write_matrix_market(w)
    }

    pub fn write_l_matrix_market(&self, w: impl Write) -> Result<()> {
        self.l.write_matrix_market(w)
    }
}

/// One row of `P` evaluated without assembling the whole matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRow {
    /// `(cloud index, P entry)` sorted by index.
    pub entries: Vec<(usize, f64)>,
    /// P entry of an appended query point on itself; zero for cloud rows.
    pub self_entry: f64,
    pub epsilon: f64,
}

impl LocalRow {
    /// `scale · Σ_j P_qj (f_j − f_q) / ε`.
    pub fn apply(&self, f: impl Fn(usize) -> f64, f_query: f64, scale: f64) -> f64 {
        let s: f64 = self.entries.iter().map(|&(j, p)| p * (f(j) - f_query)).sum();
        scale * s / self.epsilon
    }

    pub fn mass(&self) -> f64 {
        self.self_entry + self.entries.iter().map(|e| e.1).sum::<f64>()
    }
}

/// Evaluates single TMDmap rows on large clouds.
///
/// Kernel row sums of the cloud points are computed on demand unless supplied
/// with [`LocalGenerator::with_row_sums`].
pub struct LocalGenerator<'a> {
    nb: KernelNeighbors<'a>,
    mu: &'a [f64],
    row_sums: Option<Vec<f64>>,
}

impl<'a> LocalGenerator<'a> {
    pub fn new(cloud: &'a PointCloud, epsilon: f64, cutoff: f64, mu: &'a [f64]) -> Result<Self> {
        if mu.len() != cloud.len() {
            return Err(Error::DimensionMismatch {
                expected: cloud.len(),
                found: mu.len(),
            });
        }
        check_measure(mu)?;
        Ok(Self {
            nb: KernelNeighbors::new(cloud, epsilon, cutoff)?,
            mu,
            row_sums: None,
        })
    }

    /// Supplies Σ_k K(x_j, x_k) over the cloud (diagonal included) for every j.
    pub fn with_row_sums(mut self, sums: Vec<f64>) -> Result<Self> {
        if sums.len() != self.nb.cloud().len() {
            return Err(Error::DimensionMismatch {
                expected: self.nb.cloud().len(),
                found: sums.len(),
            });
        }
        self.row_sums = Some(sums);
        Ok(self)
    }

    fn row_sum(&self, j: usize) -> f64 {
        match &self.row_sums {
            Some(s) => s[j],
            None => self.nb.row_sum(self.nb.cloud().point(j)),
        }
    }

    fn normalize(&self, entries: Vec<(usize, f64)>, self_weight: f64) -> Result<LocalRow> {
        let total = self_weight + entries.iter().map(|e| e.1).sum::<f64>();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateRow { row: 0 });
        }
        Ok(LocalRow {
            entries: entries.into_iter().map(|(j, w)| (j, w / total)).collect(),
            self_entry: self_weight / total,
            epsilon: self.nb.epsilon,
        })
    }

    /// Row `i` of P for the cloud itself.
    pub fn row_at_index(&self, i: usize) -> Result<LocalRow> {
        let n = self.nb.cloud().len() as f64;
        let row = self.nb.row(self.nb.cloud().point(i));
        let entries = row
            .into_iter()
            .map(|(j, k)| {
                let j = j as usize;
                let rho = self.row_sum(j) / n;
                (j, k * self.mu[j].sqrt() / rho)
            })
            .collect();
        self.normalize(entries, 0.0)
    }

    /// Row of P for `query` appended to the cloud as point n+1 with measure
    /// `mu_query`. The densities of the neighbors include the query point.
    pub fn row_at_query(&self, query: &[f64], mu_query: f64) -> Result<LocalRow> {
        if query.len() != self.nb.cloud().dim() {
            return Err(Error::DimensionMismatch {
                expected: self.nb.cloud().dim(),
                found: query.len(),
            });
        }
        if !(mu_query >= 0.0 && mu_query.is_finite()) {
            return Err(Error::NegativeMeasure {
                index: self.nb.cloud().len(),
            });
        }
        let n1 = (self.nb.cloud().len() + 1) as f64;
        let row = self.nb.row(query);
        let rho_q = (1.0 + row.iter().map(|e| e.1).sum::<f64>()) / n1;
        let self_weight = mu_query.sqrt() / rho_q;
        let entries = row
            .into_iter()
            .map(|(j, k)| {
                let j = j as usize;
                let rho = (self.row_sum(j) + k) / n1;
                (j, k * self.mu[j].sqrt() / rho)
            })
            .collect();
        self.normalize(entries, self_weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, kde};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = PointCloud::new(2);
        for _ in 0..n {
            c.push(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        }
        c
    }

    #[test]
    fn two_point_hand_computation() {
        let d: f64 = 0.4;
        let eps = 0.2;
        let c = PointCloud::from_rows(&[[0.0], [d]]).unwrap();
        let k = build_kernel(&c, eps, 0.0).unwrap();
        let b = build_tmdmap(&k, &kde(&k), &[1.0, 1.0]).unwrap();
        let kk = (-d * d / eps).exp();
        let off = kk / (1.0 + kk);
        assert!((b.p.get(0, 1) - off).abs() < 1e-15);
        assert!((b.p.get(0, 0) - (1.0 - off)).abs() < 1e-15);
        assert!((b.l.get(0, 1) - off / eps).abs() < 1e-13);
        assert!((b.l.get(1, 1) + off / eps).abs() < 1e-13);
        let lf = apply_generator(&b, &[0.0, 1.0], 1.0).unwrap();
        assert!((lf[0] - off / eps).abs() < 1e-13);
        assert!((lf[1] + off / eps).abs() < 1e-13);
    }

    #[test]
    fn invariants_and_constants() {
        let c = cloud(300, 1);
        let k = build_kernel(&c, 0.05, 1e-8).unwrap();
        let mu: Vec<f64> = c.iter().map(|p| (-p[0] * p[0] * 3.0).exp()).collect();
        let b = build_tmdmap(&k, &kde(&k), &mu).unwrap();
        assert!(b.invariants().holds(), "{:?}", b.invariants());
        let lf = apply_generator(&b, &vec![3.5; 300], 4.0).unwrap();
        assert!(lf.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn measure_errors() {
        let c = cloud(10, 2);
        let k = build_kernel(&c, 0.05, 0.0).unwrap();
        let rho = kde(&k);
        let mut mu = vec![1.0; 10];
        mu[4] = -1.0;
        assert!(matches!(build_tmdmap(&k, &rho, &mu), Err(Error::NegativeMeasure { index: 4 })));
        assert!(matches!(build_tmdmap(&k, &rho, &[0.0; 10]), Err(Error::DegenerateMeasure)));
        assert!(build_tmdmap(&k, &rho, &[1.0; 3]).is_err());
        assert!(build_dmap(&k, &rho, 1.5).is_err());
    }

    #[test]
    fn dmap_alpha_zero_keeps_kernel() {
        let c = cloud(100, 3);
        let k = build_kernel(&c, 0.05, 1e-8).unwrap();
        let b = build_dmap(&k, &kde(&k), 0.0).unwrap();
        assert_eq!(b.k_norm.values(), k.matrix.values());
        let half = build_dmap(&k, &kde(&k), 0.5).unwrap();
        let diff = b
            .p
            .values()
            .iter()
            .zip(half.p.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-6);
    }

    #[test]
    fn numerically_diagonal_kernel_gives_identity() {
        let c = PointCloud::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let k = build_kernel(&c, 1e-4, 1e-8).unwrap();
        let b = build_tmdmap(&k, &kde(&k), &[1.0; 3]).unwrap();
        assert_eq!(b.p, CsrMatrix::identity(3));
        assert!(b.l.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn local_rows_match_full_bundle() {
        let base = cloud(250, 4);
        let eps = 0.08;
        let mu_of = |p: &[f64]| (-(p[0] * p[0] + 0.5 * p[1])).exp();
        let mu: Vec<f64> = base.iter().map(mu_of).collect();
        for cutoff in [0.0, 1e-8] {
            let local = LocalGenerator::new(&base, eps, cutoff, &mu).unwrap();
            let k = build_kernel(&base, eps, cutoff).unwrap();
            let full = build_tmdmap(&k, &kde(&k), &mu).unwrap();
            for i in [0, 17, 249] {
                let row = local.row_at_index(i).unwrap();
                for &(j, p) in &row.entries {
                    assert!((p - full.p.get(i, j)).abs() < 1e-13);
                }
                assert_eq!(row.entries.len(), full.p.row(i).0.len());
            }
            let q = [0.1, -0.2];
            let mut ext = base.clone();
            ext.push(&q);
            let mut mu_ext = mu.clone();
            mu_ext.push(mu_of(&q));
            let k = build_kernel(&ext, eps, cutoff).unwrap();
            let full = build_tmdmap(&k, &kde(&k), &mu_ext).unwrap();
            let row = local.row_at_query(&q, mu_of(&q)).unwrap();
            let qi = base.len();
            assert!((row.self_entry - full.p.get(qi, qi)).abs() < 1e-13);
            for &(j, p) in &row.entries {
                assert!((p - full.p.get(qi, j)).abs() < 1e-13);
            }
            let f: Vec<f64> = ext.iter().map(|p| p[0].sin() + p[1]).collect();
            let lf = apply_generator(&full, &f, 4.0).unwrap();
            let v = row.apply(|j| f[j], f[qi], 4.0);
            assert!((v - lf[qi]).abs() < 1e-10 * (1.0 + v.abs()));
        }
    }
}
