//! Committor RMSE sweeps over ε for several point-cloud generators.
//!
//! Every cloud is scored against a finite-difference reference committor
//! interpolated at its interior points. RMSE follows the unnormalized
//! definition; RMSE/√n is reported alongside because the methods produce
//! clouds of different sizes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvp::{check_maximum_principle, classify_ab, solve_dirichlet, BvpProblem, Region, MAX_PRINCIPLE_TOL};
use crate::cloud::PointCloud;
use crate::error::{invalid, Result};
use crate::generator::build_tmdmap;
use crate::kernel::{build_kernel, kde, ksum_scan, log_grid};
use crate::potentials::{target_measure, PotentialSystem};
use crate::reference::{fd_committor_2d, FdField, Grid2D};
use crate::sampling::{delta_net, euler_maruyama, metadynamics, sub_seed, MetadynamicsParams};

/// Geometry of a 2-D committor benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub beta: f64,
    pub a_center: [f64; 2],
    pub b_center: [f64; 2],
    pub radius: f64,
    /// Initial state of the trajectories.
    pub start: [f64; 2],
    /// Box scanned for the FD domain {V ≤ cutoff}.
    pub search: ((f64, f64), (f64, f64)),
    pub fd_cutoff: f64,
}

impl Benchmark {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "twowell" => Ok(Self {
                name: name.into(),
                beta: 1.0,
                a_center: [-1.0, 0.0],
                b_center: [1.0, 0.0],
                radius: 0.1,
                start: [-1.0, 0.0],
                search: ((-3.0, 3.0), (-1.0, 1.0)),
                fd_cutoff: 10.0,
            }),
            "mueller" => Ok(Self {
                name: name.into(),
                beta: 0.1,
                a_center: [-0.558, 1.441],
                b_center: [0.623, 0.028],
                radius: 0.1,
                start: [-0.558, 1.441],
                search: ((-2.0, 1.5), (-1.0, 2.5)),
                fd_cutoff: 10.0,
            }),
            _ => Err(invalid("potential", format!("no RMSE benchmark named `{name}`"))),
        }
    }

    pub fn system(&self) -> Result<PotentialSystem> {
        PotentialSystem::benchmark(&self.name, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplingMethod {
    Gibbs,
    Metadynamics,
    DeltaNet { delta: f64 },
    GridNodes,
}

impl SamplingMethod {
    pub fn tag(&self) -> String {
        match self {
            Self::Gibbs => "gibbs".into(),
            Self::Metadynamics => "metad".into(),
            Self::DeltaNet { delta } => format!("metad-delta-{delta}"),
            Self::GridNodes => "grid".into(),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            Self::DeltaNet { delta } => Some(*delta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub seed: u64,
    pub benchmark: Benchmark,
    pub em_dt: f64,
    pub em_steps: usize,
    pub em_subsample: usize,
    pub metad: MetadynamicsParams,
    pub deltas: Vec<f64>,
    /// Target size of the grid-node cloud.
    pub grid_points: usize,
    pub fd_nx: usize,
    pub fd_ny: usize,
    /// ε = ε*_Ksum · factor for each factor.
    pub eps_factors: Vec<f64>,
    pub ksum_grid: (f64, f64, usize),
    pub cutoff: f64,
}

impl SweepConfig {
    pub fn standard(benchmark: Benchmark, seed: u64) -> Self {
        Self {
            seed,
            benchmark,
            em_dt: 1e-4,
            em_steps: 1_000_000,
            em_subsample: 100,
            metad: MetadynamicsParams {
                w0: 0.5,
                sigma: 0.1,
                stride: 100,
                dt: 1e-4,
                n_steps: 1_000_000,
                seed,
                record_every: 100,
            },
            deltas: vec![0.01, 0.02, 0.03],
            grid_points: 10_000,
            fd_nx: 801,
            fd_ny: 401,
            eps_factors: default_eps_factors(),
            ksum_grid: (1e-4, 1.0, 25),
            cutoff: crate::kernel::DEFAULT_CUTOFF,
        }
    }

    pub fn methods(&self) -> Vec<SamplingMethod> {
        let mut m = vec![SamplingMethod::Gibbs, SamplingMethod::Metadynamics];
        m.extend(self.deltas.iter().map(|&delta| SamplingMethod::DeltaNet { delta }));
        m.push(SamplingMethod::GridNodes);
        m
    }
}

/// Eleven factors 2^{k/2}, k = −10..0. On the two-well and Müller benchmarks the error
/// keeps falling with ε until the graph disconnects, well below ε*.
pub fn default_eps_factors() -> Vec<f64> {
    (-10..=0).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub delta: Option<f64>,
    pub eps: f64,
    pub n: usize,
    /// Interior points inside the reference domain.
    pub n_scored: usize,
    pub rmse: f64,
    pub rmse_normalized: f64,
    pub eps_ksum: f64,
    pub at_ksum: bool,
    /// "ok", or the error that stopped this cell.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub benchmark: String,
    pub rows: Vec<SweepRow>,
    pub reference_nodes: usize,
    pub reference_dropped: usize,
}

impl SweepReport {
    /// Row with the smallest RMSE for `method`. `n_scored` is fixed per
    /// method, so this is also the row with the smallest RMSE/√n.
    pub fn best(&self, method: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.status == "ok")
            .min_by(|a, b| a.rmse_normalized.total_cmp(&b.rmse_normalized))
    }

    /// RMSE/√n at the grid ε nearest (in log) to 2·ε_opt, divided by the minimum.
    pub fn flatness(&self, method: &str) -> Option<f64> {
        let best = self.best(method)?;
        let target = (2.0 * best.eps).ln();
        let r = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.status == "ok")
            .min_by(|a, b| (a.eps.ln() - target).abs().total_cmp(&(b.eps.ln() - target).abs()))?;
        Some(r.rmse_normalized / best.rmse_normalized)
    }

    pub fn results_csv(&self) -> String {
        let mut s = String::from("method,delta,eps,n,n_scored,rmse,rmse_over_sqrt_n,eps_ksum,at_ksum,status\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.10e},{},{},{:.10e},{:.10e},{:.10e},{},{}",
                r.method,
                r.delta.map(|d| d.to_string()).unwrap_or_default(),
                r.eps,
                r.n,
                r.n_scored,
                r.rmse,
                r.rmse_normalized,
                r.eps_ksum,
                r.at_ksum,
                r.status.replace(',', ";")
            );
        }
        s
    }
}

pub fn reference_committor(cfg: &SweepConfig, sys: &PotentialSystem) -> Result<FdField> {
    let b = &cfg.benchmark;
    let grid = Grid2D::auto_fit(sys, b.fd_cutoff, b.search, cfg.fd_nx, cfg.fd_ny)?;
    fd_committor_2d(sys, &grid, b.fd_cutoff, b.a_center, b.b_center, b.radius)
}

/// Nodes of a uniform grid over the reference box with V ≤ cutoff, about
/// `target` of them.
pub fn grid_node_cloud(sys: &PotentialSystem, reference: &FdField, cutoff: f64, target: usize) -> Result<PointCloud> {
    let g = &reference.grid;
    let active = (0..g.len()).filter(|&k| reference.is_active(k)).count();
    if active == 0 || target == 0 {
        return Err(invalid("grid_points", "no active reference nodes"));
    }
    let (wx, wy) = (g.x_range.1 - g.x_range.0, g.y_range.1 - g.y_range.0);
    let area = wx * wy * active as f64 / g.len() as f64;
    let h = (area / target as f64).sqrt();
    let nx = (wx / h).round() as usize + 1;
    let ny = (wy / h).round() as usize + 1;
    let coarse = Grid2D::new(g.x_range, g.y_range, nx.max(2), ny.max(2))?;
    let mut c = PointCloud::new(2);
    for j in 0..coarse.ny {
        for i in 0..coarse.nx {
            let p = coarse.node(i, j);
            if sys.value(&p) <= cutoff && sys.inside_walls(&p) {
                c.push(&p);
            }
        }
    }
    Ok(c)
}

pub fn sample_method(cfg: &SweepConfig, sys: &PotentialSystem, method: SamplingMethod, reference: &FdField, metad_cloud: &PointCloud) -> Result<PointCloud> {
    match method {
        SamplingMethod::Gibbs => euler_maruyama(
            sys,
            &cfg.benchmark.start,
            cfg.em_dt,
            cfg.em_steps,
            cfg.em_subsample,
            sub_seed(cfg.seed, 1),
        ),
        SamplingMethod::Metadynamics => Ok(metad_cloud.clone()),
        SamplingMethod::DeltaNet { delta } => delta_net(metad_cloud, delta),
        SamplingMethod::GridNodes => grid_node_cloud(sys, reference, cfg.benchmark.fd_cutoff, cfg.grid_points),
    }
}

struct Scored {
    rmse: f64,
    n_scored: usize,
}

fn score(cloud: &PointCloud, labels: &[Region], values: &[f64], reference: &FdField) -> Result<Scored> {
    let (mut ss, mut n) = (0.0, 0);
    for (i, p) in cloud.iter().enumerate() {
        if labels[i] != Region::Interior {
            continue;
        }
        if let Some(r) = reference.interpolate(p) {
            ss += (values[i] - r).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(invalid("cloud", "no interior point lies in the reference domain"));
    }
    Ok(Scored { rmse: ss.sqrt(), n_scored: n })
}

/// TMDmap committor on `cloud` at bandwidth `eps`, scored against `reference`.
pub fn committor_rmse(
    cloud: &PointCloud,
    labels: &[Region],
    mu: &[f64],
    eps: f64,
    cutoff: f64,
    beta: f64,
    reference: &FdField,
) -> Result<(f64, usize)> {
    let bundle = {
        let k = build_kernel(cloud, eps, cutoff)?;
        build_tmdmap(&k, &kde(&k), mu)?
    };
    let problem = BvpProblem::committor(labels, 4.0 / beta)?;
    let sol = solve_dirichlet(&bundle, &problem)?;
    let mp = check_maximum_principle(&problem, &sol, MAX_PRINCIPLE_TOL);
    if !mp.holds() {
        return Err(invalid(
            "solution",
            format!("maximum principle violated by {:.3e}", mp.worst_violation),
        ));
    }
    let s = score(cloud, labels, &sol.values, reference)?;
    Ok((s.rmse, s.n_scored))
}

pub fn rmse_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.eps_factors.is_empty() || cfg.eps_factors.iter().any(|f| !(*f > 0.0)) {
        return Err(invalid("eps_factors", "need positive factors"));
    }
    let sys = cfg.benchmark.system()?;
    let reference = reference_committor(cfg, &sys)?;
    let mut metad = cfg.metad;
    metad.seed = sub_seed(cfg.seed, 2);
    let metad_cloud = metadynamics(&sys, &metad, &cfg.benchmark.start)?.cloud;
    let methods = cfg.methods();
    let mut rows = Vec::new();
    for method in methods {
        let cloud = sample_method(cfg, &sys, method, &reference, &metad_cloud)?;
        let b = &cfg.benchmark;
        let labels = classify_ab(&cloud, &b.a_center, &b.b_center, b.radius)?;
        let mu = target_measure(&sys, &cloud)?;
        let (lo, hi, count) = cfg.ksum_grid;
        let eps_star = ksum_scan(&cloud, &log_grid(lo, hi, count))?.eps_star;
        let cells: Vec<SweepRow> = cfg
            .eps_factors
            .par_iter()
            .map(|&f| {
                let eps = eps_star * f;
                let (rmse, n_scored, status) = match committor_rmse(&cloud, &labels, &mu, eps, cfg.cutoff, b.beta, &reference) {
                    Ok((r, n)) => (r, n, "ok".to_string()),
                    Err(e) => (f64::NAN, 0, e.to_string()),
                };
                SweepRow {
                    method: method.tag(),
                    delta: method.delta(),
                    eps,
                    n: cloud.len(),
                    n_scored,
                    rmse,
                    rmse_normalized: rmse / (n_scored.max(1) as f64).sqrt(),
                    eps_ksum: eps_star,
                    at_ksum: f == 1.0,
                    status,
                }
            })
            .collect();
        rows.extend(cells);
    }
    Ok(SweepReport {
        benchmark: cfg.benchmark.name.clone(),
        rows,
        reference_nodes: (0..reference.grid.len()).filter(|&k| reference.is_active(k)).count(),
        reference_dropped: reference.dropped_nodes,
    })
}
