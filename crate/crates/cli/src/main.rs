use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tmdmap::bvp::{check_maximum_principle, classify_ab, solve_dirichlet, BvpProblem, MAX_PRINCIPLE_TOL};
use tmdmap::cloud::{parse_point_table, PointCloud};
use tmdmap::experiments::config::{schema_help, Config, Manifest, LIBRARY_VERSION};
use tmdmap::experiments::config::Params;
use tmdmap::experiments::run::{rerun_manifest, run_experiment, Experiment, RunOutput};
use tmdmap::generator::build_tmdmap;
use tmdmap::kernel::{build_kernel, default_ksum_grid, kde, ksum_scan, log_grid, DEFAULT_CUTOFF};
use tmdmap::potentials::{target_measure, PotentialSystem};
use tmdmap::sampling::{
    delta_net, euler_maruyama, metadynamics, sample_circle_density, CircleDensity, MetadynamicsParams,
};
use tmdmap::tpt::{compute_tpt, default_k_neighbors, estimate_gradient, TptInput};

#[derive(Parser)]
#[command(name = "tmdmap", version, about = "Target measure diffusion maps on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a point cloud and write it as CSV.
    Sample(SampleArgs),
    /// Kernel-sum scan for choosing ε.
    Ksum(KsumArgs),
    /// Solve the committor problem on a point cloud.
    SolveCommittor(SolveArgs),
    /// Run a configured experiment.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Transition rate, escape rate and ρ_A from a committor solution.
    TptSummary(TptArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Em,
    Metad,
    CircleUniform,
    CircleNonuniform,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    potential: String,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    out: PathBuf,
    /// Thin the cloud to a δ-net.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    #[arg(long, default_value_t = 1_000_000)]
    steps: usize,
    /// Keep every k-th state.
    #[arg(long, default_value_t = 100)]
    subsample: usize,
    /// Start point, comma separated. Defaults to the origin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.5)]
    w0: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    stride: usize,
    /// Points for the circle methods.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
}

#[derive(Args)]
struct KsumArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    eps_min: f64,
    #[arg(long, default_value_t = 10.0)]
    eps_max: f64,
    #[arg(long, default_value_t = 64)]
    grid_size: usize,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Geometry {
    #[arg(long)]
    potential: String,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// ε, or `auto` for the ksum choice.
    #[arg(long, default_value = "auto")]
    eps: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    a_center: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    b_center: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    radius: f64,
    /// Kernel cutoff τ; 0 keeps every pair.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    /// Recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TptArgs {
    /// CSV with columns x1..xm,q as written by solve-committor.
    #[arg(long)]
    solution: PathBuf,
    #[command(flatten)]
    geometry: Geometry,
    #[arg(long)]
    k_neighbors: Option<usize>,
    /// Also write the reactive current as CSV.
    #[arg(long)]
    current: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-run from a manifest written by an earlier run.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Override one key, e.g. `--set repeats=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, required_unless_present_any = ["print_config", "schema"])]
    out: Option<PathBuf>,
    /// Print the resolved default config and exit.
    #[arg(long)]
    print_config: bool,
    /// Print the accepted keys and exit.
    #[arg(long)]
    schema: bool,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    BiasPrefactor(RunArgs),
    RmseSweep {
        #[arg(long, value_parser = ["mueller", "twowell"])]
        potential: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    Hexagon(RunArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sample(a) => sample(a),
        Command::Ksum(a) => ksum(a),
        Command::SolveCommittor(a) => solve_committor(a),
        Command::Experiment(e) => experiment(e),
        Command::TptSummary(a) => tpt_summary(a),
    }
}

fn sample(a: SampleArgs) -> Result<()> {
    let cloud = match a.method {
        Method::CircleUniform => sample_circle_density(CircleDensity::Uniform, a.n, a.seed)?,
        Method::CircleNonuniform => sample_circle_density(CircleDensity::FractionalNormal, a.n, a.seed)?,
        Method::Em | Method::Metad => {
            let sys = PotentialSystem::benchmark(&a.potential, a.beta)?;
            let x0 = a.x0.clone().unwrap_or_else(|| vec![0.0; sys.dim()]);
            if let Method::Em = a.method {
                euler_maruyama(&sys, &x0, a.dt, a.steps, a.subsample, a.seed)?
            } else {
                let p = MetadynamicsParams {
                    w0: a.w0,
                    sigma: a.sigma,
                    stride: a.stride,
                    dt: a.dt,
                    n_steps: a.steps,
                    seed: a.seed,
                    record_every: a.subsample,
                };
                metadynamics(&sys, &p, &x0)?.cloud
            }
        }
    };
    let cloud = match a.delta {
        Some(d) => delta_net(&cloud, d)?,
        None => cloud,
    };
    cloud.write_csv(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} points to {}", cloud.len(), a.out.display());
    Ok(())
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    PointCloud::read_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn ksum(a: KsumArgs) -> Result<()> {
    let cloud = read_cloud(&a.cloud)?;
    let scan = ksum_scan(&cloud, &log_grid(a.eps_min, a.eps_max, a.grid_size))?;
    match &a.out {
        Some(p) => fs::write(p, scan.to_csv())?,
        None => print!("{}", scan.to_csv()),
    }
    eprintln!("eps* = {:.6e}", scan.eps_star);
    Ok(())
}

fn resolve_eps(spec: &str, cloud: &PointCloud) -> Result<f64> {
    if spec == "auto" {
        return Ok(ksum_scan(cloud, &default_ksum_grid())?.eps_star);
    }
    let e: f64 = spec.parse().with_context(|| format!("--eps `{spec}` is neither a number nor `auto`"))?;
    if !(e > 0.0 && e.is_finite()) {
        bail!("--eps must be positive");
    }
    Ok(e)
}

fn solve_committor(a: SolveArgs) -> Result<()> {
    let cloud = read_cloud(&a.cloud)?;
    let g = &a.geometry;
    let sys = PotentialSystem::benchmark(&g.potential, g.beta)?;
    let eps = resolve_eps(&g.eps, &cloud)?;
    let labels = classify_ab(&cloud, &g.a_center, &g.b_center, g.radius)?;
    let mu = target_measure(&sys, &cloud)?;
    let kernel = build_kernel(&cloud, eps, g.cutoff)?;
    let bundle = build_tmdmap(&kernel, &kde(&kernel), &mu)?;
    let problem = BvpProblem::committor(&labels, 4.0 / g.beta)?;
    let sol = solve_dirichlet(&bundle, &problem)?;
    let mp = check_maximum_principle(&problem, &sol, MAX_PRINCIPLE_TOL);
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("committor.csv"), cloud.to_csv_with_values(Some(&sol.values)))?;
    let manifest = json!({
        "command": "solve-committor",
        "library_version": LIBRARY_VERSION,
        "cloud": a.cloud.display().to_string(),
        "potential": g.potential,
        "beta": g.beta,
        "eps": eps,
        "n": cloud.len(),
        "tau": g.cutoff,
        "a_center": g.a_center,
        "b_center": g.b_center,
        "radius": g.radius,
        "seed": a.seed,
        "interior": problem.interior.len(),
        "kernel_nnz": kernel.matrix.nnz(),
        "solver": sol.solver.tag(),
        "iterations": sol.iterations,
        "residual": sol.residual_norm,
        "maximum_principle": mp.holds(),
        "maximum_principle_violation": mp.worst_violation,
    });
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    if !mp.holds() {
        bail!("maximum principle violated by {:.3e}", mp.worst_violation);
    }
    eprintln!("solved {} unknowns at eps = {eps:.6e} ({})", problem.interior.len(), sol.solver.tag());
    Ok(())
}

fn tpt_summary(a: TptArgs) -> Result<()> {
    let text = fs::read_to_string(&a.solution).with_context(|| format!("reading {}", a.solution.display()))?;
    let table = parse_point_table(&text)?;
    let q = table.column("q").context("solution has no `q` column")?;
    let cloud = table.cloud;
    let g = &a.geometry;
    let sys = PotentialSystem::benchmark(&g.potential, g.beta)?;
    let eps = resolve_eps(&g.eps, &cloud)?;
    let labels = classify_ab(&cloud, &g.a_center, &g.b_center, g.radius)?;
    let mu = target_measure(&sys, &cloud)?;
    let rho = kde(&build_kernel(&cloud, eps, g.cutoff)?).values;
    let k = a.k_neighbors.unwrap_or_else(|| default_k_neighbors(cloud.dim()));
    let gradients = estimate_gradient(&cloud, &q, k, eps)?;
    let input = TptInput {
        q: &q,
        mu: &mu,
        rho: &rho,
        labels: &labels,
        gradients: &gradients,
        beta: g.beta,
        eps,
    };
    let mut out = compute_tpt(&input, a.current.is_some())?;
    if let (Some(path), Some(j)) = (&a.current, out.current.take()) {
        let dim = cloud.dim();
        let mut s: String = (1..=dim).map(|k| format!("x{k},")).collect();
        s += &(1..=dim).map(|k| format!("j{k}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for (p, jv) in cloud.iter().zip(j.chunks_exact(dim)) {
            let row: Vec<String> = p.iter().chain(jv).map(|v| format!("{v:.16e}")).collect();
            s += &row.join(",");
            s.push('\n');
        }
        fs::write(path, s)?;
    }
    let text = serde_json::to_string_pretty(&out)? + "\n";
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn experiment(cmd: ExperimentCommand) -> Result<()> {
    let (exp, potential, run) = match cmd {
        ExperimentCommand::BiasPrefactor(r) => (Experiment::BiasPrefactor, None, r),
        ExperimentCommand::RmseSweep { potential, run } => (Experiment::RmseSweep, potential, run),
        ExperimentCommand::Hexagon(r) => (Experiment::Hexagon, None, r),
    };
    if run.schema {
        print!("{}", schema_help(exp.schema()));
        return Ok(());
    }
    let mut config = match (&run.config, &run.manifest) {
        (Some(p), _) => Config::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        (None, Some(p)) => {
            let m = Manifest::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
            if m.experiment != exp.name() {
                bail!("manifest records experiment `{}`, not `{}`", m.experiment, exp.name());
            }
            if run.overrides.is_empty() && potential.is_none() && !run.print_config {
                return finish(rerun_manifest(&m)?, &run);
            }
            m.config()?
        }
        (None, None) => Config::default(),
    };
    if let Some(p) = potential {
        config.set("potential", &p)?;
    }
    for o in &run.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("--set `{o}` is not KEY=VALUE"))?;
        config.set(k.trim(), v)?;
    }
    if run.print_config {
        let params = Params::resolve(&config, exp.schema())?;
        let text = params.to_config().to_text();
        print!("{text}");
        return Ok(());
    }
    finish(run_experiment(exp, &config)?, &run)
}

fn finish(out: RunOutput, run: &RunArgs) -> Result<()> {
    let dir = run.out.as_ref().context("--out is required")?;
    out.write_to(dir)?;
    for (name, _) in &out.files {
        eprintln!("wrote {}", dir.join(name).display());
    }
    Ok(())
}
