//! Config-driven experiment runs producing a manifest and output files.

use std::fs;
use std::path::Path;

use serde_json::json;

use crate::error::{invalid, Result};
use crate::kernel::log_grid;
use crate::potentials::CircleSystem;
use crate::sampling::{CircleDensity, MetadynamicsParams};

use super::bias::{bias_prefactor_experiment, BiasConfig, BiasReport, QueryMode};
use super::config::{Config, Manifest, ParamSpec, Params};
use super::hexagon::{hexagon_study, HexReference, HexagonReport};
use super::rmse::{rmse_sweep, Benchmark, SweepConfig, SweepReport};
use super::svg::Plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    BiasPrefactor,
    RmseSweep,
    Hexagon,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Self::BiasPrefactor, Self::RmseSweep, Self::Hexagon];

    pub fn name(self) -> &'static str {
        match self {
            Self::BiasPrefactor => "bias-prefactor",
            Self::RmseSweep => "rmse-sweep",
            Self::Hexagon => "hexagon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn schema(self) -> &'static [ParamSpec] {
        match self {
            Self::BiasPrefactor => BIAS_SCHEMA,
            Self::RmseSweep => RMSE_SCHEMA,
            Self::Hexagon => HEXAGON_SCHEMA,
        }
    }
}

const fn p(key: &'static str, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, default: Some(default), help }
}

pub const BIAS_SCHEMA: &[ParamSpec] = &[
    p("seed", "2024", "master RNG seed"),
    p("repeats", "50", "independent clouds per ε"),
    p("eps_min", "0.023", "smallest ε"),
    p("eps_max", "0.033", "largest ε"),
    p("eps_count", "10", "equispaced ε values"),
    p("schedule_coef", "0.25", "n/ln n = coef·ε^exponent"),
    p("schedule_exponent", "-2.5", "see schedule_coef"),
    p("densities", "fractional-normal,uniform", "uniform, fractional-normal, wrapped-normal"),
    p("beta", "1", "inverse temperature"),
    p("query", "append", "append θ=π to the cloud, or use the nearest point"),
    p("cutoff", "0", "kernel cutoff τ; 0 keeps dense rows"),
    p("max_query_gap", "0.05", "nearest mode: resample beyond this angle"),
    p("plot", "true", "write plot.svg"),
];

pub const RMSE_SCHEMA: &[ParamSpec] = &[
    p("seed", "2024", "master RNG seed"),
    p("potential", "twowell", "twowell or mueller"),
    p("em_dt", "1e-4", "Euler-Maruyama step"),
    p("em_steps", "1000000", "Euler-Maruyama steps"),
    p("em_subsample", "100", "keep every k-th state"),
    p("metad_w0", "0.5", "bump height"),
    p("metad_sigma", "0.1", "bump width"),
    p("metad_stride", "100", "steps between deposits"),
    p("metad_dt", "1e-4", "metadynamics step"),
    p("metad_steps", "1000000", "metadynamics steps"),
    p("metad_record_every", "100", "keep every k-th state"),
    p("deltas", "0.01,0.02,0.03", "δ-net spacings applied to the metadynamics cloud"),
    p("grid_points", "10000", "approximate size of the grid-node cloud"),
    p("fd_nx", "801", "reference grid nodes in x"),
    p("fd_ny", "401", "reference grid nodes in y"),
    p(
        "eps_factors",
        "0.03125,0.04419417382415922,0.0625,0.08838834764831845,0.125,0.1767766952966369,0.25,0.3535533905932738,0.5,0.7071067811865476,1",
        "ε = ε*·factor",
    ),
    p("ksum_eps_min", "1e-4", "ksum scan range"),
    p("ksum_eps_max", "1", "ksum scan range"),
    p("ksum_grid_size", "25", "ksum scan points"),
    p("cutoff", "1e-8", "kernel cutoff τ"),
    p("plot", "true", "write plot.svg"),
];

pub const HEXAGON_SCHEMA: &[ParamSpec] = &[
    p("seed", "0", "unused; the study is deterministic"),
    p("rings", "50,150,250,350,450", "ring counts n_r"),
    p("eps_min", "1e-4", "ε scan range"),
    p("eps_max", "1", "ε scan range"),
    p("eps_count", "200", "log-spaced scan points"),
    p("reference", "full-exponent", "full-exponent or half-exponent"),
    p("check_rings", "50", "ring count of the explicit-cloud cross-check"),
    p("check_eps", "0.0123", "ε of the cross-check"),
    p("plot", "true", "write plot.svg"),
];

/// Files of a finished run, in write order. The manifest is always first.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    fn finish(experiment: Experiment, params: &Params, mut files: Vec<(String, String)>) -> Result<Self> {
        let names: Vec<String> = files.iter().map(|f| f.0.clone()).collect();
        let manifest = Manifest::new(experiment.name(), params, names)?;
        files.insert(0, ("manifest.json".into(), manifest.to_json()));
        Ok(Self { manifest, files })
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, content) in &self.files {
            fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}

pub fn run_experiment(experiment: Experiment, config: &Config) -> Result<RunOutput> {
    let params = Params::resolve(config, experiment.schema())?;
    match experiment {
        Experiment::BiasPrefactor => run_bias(&params),
        Experiment::RmseSweep => run_rmse(&params),
        Experiment::Hexagon => run_hexagon(&params),
    }
}

/// Re-runs the experiment recorded in a manifest.
pub fn rerun_manifest(manifest: &Manifest) -> Result<RunOutput> {
    let e = Experiment::parse(&manifest.experiment)
        .ok_or_else(|| invalid("experiment", format!("unknown experiment `{}`", manifest.experiment)))?;
    run_experiment(e, &manifest.config()?)
}

fn json_text(v: serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn bias_config(params: &Params) -> Result<BiasConfig> {
    let seed = params.u64("seed")?;
    let count = params.usize("eps_count")?;
    let (lo, hi) = (params.f64("eps_min")?, params.f64("eps_max")?);
    if count < 3 || !(0.0 < lo && lo < hi) {
        return Err(invalid("eps", "need eps_count ≥ 3 and 0 < eps_min < eps_max"));
    }
    let densities = params
        .list("densities")
        .iter()
        .map(|s| CircleDensity::parse(s).ok_or_else(|| invalid("densities", format!("unknown density `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let query = QueryMode::parse(params.str("query"))
        .ok_or_else(|| invalid("query", "expected `append` or `nearest`"))?;
    let system = CircleSystem {
        beta: params.f64("beta")?,
        ..CircleSystem::default()
    };
    system.validate()?;
    Ok(BiasConfig {
        seed,
        repeats: params.usize("repeats")?,
        eps: (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
        schedule_coef: params.f64("schedule_coef")?,
        schedule_exponent: params.f64("schedule_exponent")?,
        densities,
        system,
        query,
        cutoff: params.f64("cutoff")?,
        max_query_gap: params.f64("max_query_gap")?,
    })
}

fn bias_plot(report: &BiasReport) -> String {
    let mut plot = Plot::new("Mean consistency error at θ = π", "ε", "mean signed error");
    for f in &report.fits {
        let label = format!("{} / {}", f.density.tag(), f.test_function.tag());
        plot = plot.scatter(&label, f.eps_values.iter().cloned().zip(f.mean_errors.iter().cloned()).collect());
    }
    plot.render()
}

fn run_bias(params: &Params) -> Result<RunOutput> {
    let cfg = bias_config(params)?;
    let report = bias_prefactor_experiment(&cfg)?;
    let summary = json!({
        "n": report.n,
        "resampled": report.resampled,
        "fits": report.fits.iter().map(|f| json!({
            "density": f.density.tag(),
            "test_function": f.test_function.tag(),
            "intercept": f.intercept,
            "slope": f.slope,
            "quadratic_coef": f.quadratic_coef,
            "quadratic_ci": [f.quadratic_ci.0, f.quadratic_ci.1],
        })).collect::<Vec<_>>(),
    });
    let mut files = vec![
        ("results.csv".to_string(), report.table_csv()),
        ("errors.csv".to_string(), report.results_csv()),
        ("summary.json".to_string(), json_text(summary)),
    ];
    if params.bool("plot")? {
        files.push(("plot.svg".into(), bias_plot(&report)));
    }
    RunOutput::finish(Experiment::BiasPrefactor, params, files)
}

pub fn sweep_config(params: &Params) -> Result<SweepConfig> {
    let seed = params.u64("seed")?;
    let benchmark = Benchmark::by_name(params.str("potential"))?;
    let metad = MetadynamicsParams {
        w0: params.f64("metad_w0")?,
        sigma: params.f64("metad_sigma")?,
        stride: params.usize("metad_stride")?,
        dt: params.f64("metad_dt")?,
        n_steps: params.usize("metad_steps")?,
        seed,
        record_every: params.usize("metad_record_every")?,
    };
    metad.validate()?;
    let ksum_count = params.usize("ksum_grid_size")?;
    if ksum_count < 2 {
        return Err(invalid("ksum_grid_size", "need at least 2 points"));
    }
    Ok(SweepConfig {
        seed,
        benchmark,
        em_dt: params.f64("em_dt")?,
        em_steps: params.usize("em_steps")?,
        em_subsample: params.usize("em_subsample")?,
        metad,
        deltas: params.f64_list("deltas")?,
        grid_points: params.usize("grid_points")?,
        fd_nx: params.usize("fd_nx")?,
        fd_ny: params.usize("fd_ny")?,
        eps_factors: params.f64_list("eps_factors")?,
        ksum_grid: (params.f64("ksum_eps_min")?, params.f64("ksum_eps_max")?, ksum_count),
        cutoff: params.f64("cutoff")?,
    })
}

fn rmse_plot(report: &SweepReport) -> String {
    let mut plot = Plot::new(&format!("Committor RMSE, {}", report.benchmark), "ε", "RMSE").log_axes(true, true);
    let mut methods: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    for m in methods {
        let pts = report
            .rows
            .iter()
            .filter(|r| r.method == m && r.status == "ok")
            .map(|r| (r.eps, r.rmse))
            .collect();
        plot = plot.line(m, pts);
    }
    plot.render()
}

fn run_rmse(params: &Params) -> Result<RunOutput> {
    let cfg = sweep_config(params)?;
    let report = rmse_sweep(&cfg)?;
    let best: Vec<_> = cfg
        .methods()
        .iter()
        .filter_map(|m| {
            let tag = m.tag();
            report.best(&tag).map(|r| {
                json!({
                    "method": tag,
                    "eps": r.eps,
                    "n": r.n,
                    "rmse": r.rmse,
                    "rmse_over_sqrt_n": r.rmse_normalized,
                    "flatness_at_2x": report.flatness(&tag),
                })
            })
        })
        .collect();
    let summary = json!({
        "benchmark": report.benchmark,
        "reference_nodes": report.reference_nodes,
        "reference_dropped": report.reference_dropped,
        "best": best,
    });
    let mut files = vec![
        ("results.csv".to_string(), report.results_csv()),
        ("summary.json".to_string(), json_text(summary)),
    ];
    if params.bool("plot")? {
        files.push(("plot.svg".into(), rmse_plot(&report)));
    }
    RunOutput::finish(Experiment::RmseSweep, params, files)
}

pub fn hexagon_inputs(params: &Params) -> Result<(Vec<usize>, Vec<f64>, HexReference, (usize, f64))> {
    let rings = params.usize_list("rings")?;
    if let Some(r) = rings.iter().find(|&&r| r < 10) {
        return Err(invalid("rings", format!("ring count {r} is below 10")));
    }
    let (lo, hi, count) = (params.f64("eps_min")?, params.f64("eps_max")?, params.usize("eps_count")?);
    if count < 3 || !(0.0 < lo && lo < hi) {
        return Err(invalid("eps", "need eps_count ≥ 3 and 0 < eps_min < eps_max"));
    }
    let reference = HexReference::parse(params.str("reference"))
        .ok_or_else(|| invalid("reference", "expected `full-exponent` or `half-exponent`"))?;
    let check = (params.usize("check_rings")?, params.f64("check_eps")?);
    Ok((rings, log_grid(lo, hi, count), reference, check))
}

fn hexagon_plot(report: &HexagonReport) -> String {
    let mut plot = Plot::new("Optimal ε against lattice spacing", "δ", "ε*").log_axes(true, true);
    let pts: Vec<(f64, f64)> = report.studies.iter().map(|s| (s.delta, s.eps_opt)).collect();
    let fit = pts
        .iter()
        .map(|&(d, _)| (d, report.fit_coef * d.powf(report.fit_exponent)))
        .collect();
    plot = plot.scatter("ε*", pts).line("fit", fit);
    plot.render()
}

fn run_hexagon(params: &Params) -> Result<RunOutput> {
    params.u64("seed")?;
    let (rings, grid, reference, check) = hexagon_inputs(params)?;
    let report = hexagon_study(&rings, &grid, reference, check)?;
    let cc = &report.cross_check;
    let summary = json!({
        "reference": report.reference.tag(),
        "fit_coef": report.fit_coef,
        "fit_exponent": report.fit_exponent,
        "cross_check": {
            "rings": cc.rings,
            "eps": cc.eps,
            "max_relative_gap": cc.max_relative_gap(),
        },
    });
    let mut files = vec![
        ("results.csv".to_string(), report.optima_csv()),
        ("curves.csv".to_string(), report.results_csv()),
        ("summary.json".to_string(), json_text(summary)),
    ];
    if params.bool("plot")? {
        files.push(("plot.svg".into(), hexagon_plot(&report)));
    }
    RunOutput::finish(Experiment::Hexagon, params, files)
}

/// Default parameters of an experiment as config text.
pub fn default_config_text(experiment: Experiment) -> String {
    let params = Params::resolve(&Config::default(), experiment.schema()).expect("schema defaults resolve");
    params.to_config().to_text()
}
