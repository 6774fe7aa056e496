//! Bias-prefactor regression on the circle.
//!
//! For each ε the cloud size n(ε) solves n/ln n = c·ε^p. The signed error
//! 4β⁻¹(Lf)(x) − ℒf(x) at θ = π is averaged over repeats and fitted by a + bε.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::generator::{GeneratorBundle, LocalGenerator, LocalRow};
use crate::potentials::{angular_distance, circle_measure, circle_potential, embed_angle, CircleSystem, CIRCLE_QUERY};
use crate::reference::CircleCommittor;
use crate::sampling::{embed_angles, rng_from_seed, sample_circle_angles, sub_seed, CircleDensity};

use super::fit::poly_fit;
use super::scaling::schedule_n;

/// 4β⁻¹(Lf)(x_i) − ℒf(x_i), with (Lf)_i = Σ_j P_ij(f_j − f_i)/ε.
pub fn consistency_error(bundle: &GeneratorBundle, f: &[f64], lf_true: &[f64], at: usize, beta: f64) -> Result<f64> {
    let n = bundle.n();
    if f.len() != n || lf_true.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f.len().min(lf_true.len()),
        });
    }
    if at >= n {
        return Err(invalid("at", format!("index {at} out of range for {n} points")));
    }
    let (cols, vals) = bundle.p.row(at);
    let s: f64 = cols.iter().zip(vals).map(|(&j, &p)| p * (f[j as usize] - f[at])).sum();
    Ok(4.0 / beta * s / bundle.epsilon - lf_true[at])
}

/// t_k = e^{−κ}I_k(κ) for k = 0..=k_max by Miller's backward recurrence,
/// normalized so that t_0 + 2Σ_{k≥1} t_k = 1.
pub fn scaled_bessel_i(kappa: f64, k_max: usize) -> Vec<f64> {
    let start = 2 * k_max + 40 + (2.0 * kappa.sqrt()) as usize;
    let mut t = vec![0.0; start + 2];
    t[start + 1] = 0.0;
    t[start] = 1e-300;
    for k in (1..=start).rev() {
        t[k - 1] = t[k + 1] + 2.0 * k as f64 / kappa * t[k];
        if t[k - 1] > 1e250 {
            for v in t[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = t[0] + 2.0 * t[1..].iter().sum::<f64>();
    t.truncate(k_max + 1);
    t.iter_mut().for_each(|v| *v /= norm);
    t
}

/// Σ_j exp(−‖ψ(θ_i) − ψ(θ_j)‖²/ε) for points ψ(θ) = (cos θ, sin θ), diagonal
/// included, from the Fourier expansion of e^{(2/ε)(cos Δ − 1)}. Cost O(n·K)
/// with K ≈ 10√(2/ε).
pub fn circle_kernel_row_sums(thetas: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let kappa = 2.0 / eps;
    let k_max = (10.0 * kappa.sqrt()).ceil() as usize + 10;
    let t = scaled_bessel_i(kappa, k_max);
    let n = thetas.len();
    // Calls f(k, cos kθ, sin kθ) for k = 0..=k_max, re-anchoring the rotation
    // every 16 steps to bound round-off.
    let harmonics = |th: f64, f: &mut dyn FnMut(usize, f64, f64)| {
        let (s1, c1) = th.sin_cos();
        let (mut ck, mut sk) = (1.0, 0.0);
        for k in 0..=k_max {
            f(k, ck, sk);
            if (k + 1) % 16 == 0 {
                let (a, b) = ((k + 1) as f64 * th).sin_cos();
                ck = b;
                sk = a;
            } else {
                let nc = ck * c1 - sk * s1;
                sk = sk * c1 + ck * s1;
                ck = nc;
            }
        }
    };
    let (mut c, mut s) = (vec![0.0; k_max + 1], vec![0.0; k_max + 1]);
    for &th in thetas {
        harmonics(th, &mut |k, ck, sk| {
            c[k] += ck;
            s[k] += sk;
        });
    }
    Ok(thetas
        .iter()
        .map(|&th| {
            let mut acc = t[0] * n as f64;
            harmonics(th, &mut |k, ck, sk| {
                if k > 0 {
                    acc += 2.0 * t[k] * (ck * c[k] + sk * s[k]);
                }
            });
            acc
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    Sin,
    Committor,
}

impl TestFunction {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Committor => "committor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    /// θ = π is appended to the cloud.
    Append,
    /// The sampled point nearest θ = π is used.
    Nearest,
}

impl QueryMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "append" => Some(Self::Append),
            "nearest" => Some(Self::Nearest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasConfig {
    pub seed: u64,
    pub repeats: usize,
    pub eps: Vec<f64>,
    pub schedule_coef: f64,
    pub schedule_exponent: f64,
    pub densities: Vec<CircleDensity>,
    pub system: CircleSystem,
    pub query: QueryMode,
    pub cutoff: f64,
    /// Nearest-point mode resamples when no point lies within this angle of π.
    pub max_query_gap: f64,
}

impl BiasConfig {
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            repeats: 50,
            eps: (0..10).map(|k| 0.023 + 0.001 * k as f64 * 10.0 / 9.0).collect(),
            schedule_coef: 0.25,
            schedule_exponent: -2.5,
            densities: vec![CircleDensity::FractionalNormal, CircleDensity::Uniform],
            system: CircleSystem::default(),
            query: QueryMode::Append,
            cutoff: 0.0,
            max_query_gap: 0.05,
        }
    }
}

/// One fitted combination of sampling density and test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelFit {
    pub density: CircleDensity,
    pub test_function: TestFunction,
    pub intercept: f64,
    pub slope: f64,
    pub eps_values: Vec<f64>,
    /// errors[e][r] for ε index e and repeat r.
    pub errors: Vec<Vec<f64>>,
    pub mean_errors: Vec<f64>,
    pub quadratic_coef: f64,
    pub quadratic_ci: (f64, f64),
}

impl ErrorModelFit {
    pub fn quadratic_ci_contains_zero(&self) -> bool {
        self.quadratic_ci.0 <= 0.0 && 0.0 <= self.quadratic_ci.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub eps: Vec<f64>,
    pub n: Vec<usize>,
    pub fits: Vec<ErrorModelFit>,
    /// Repeats redrawn because no point was near θ = π (nearest mode only).
    pub resampled: usize,
}

/// Reference magnitudes of the slope, in (density, function) order
/// (fractional-normal, sin), (uniform, sin), (fractional-normal, committor), (uniform, committor).
pub const TARGET_ABS_SLOPES: [(CircleDensity, TestFunction, f64); 4] = [
    (CircleDensity::FractionalNormal, TestFunction::Sin, 1.024),
    (CircleDensity::Uniform, TestFunction::Sin, 0.778),
    (CircleDensity::FractionalNormal, TestFunction::Committor, 1.148),
    (CircleDensity::Uniform, TestFunction::Committor, 0.398),
];

impl BiasReport {
    pub fn fit(&self, density: CircleDensity, f: TestFunction) -> Option<&ErrorModelFit> {
        self.fits.iter().find(|x| x.density == density && x.test_function == f)
    }

    /// Per-(ε, repeat) errors.
    pub fn results_csv(&self) -> String {
        let mut s = String::from("density,test_function,eps,n,repeat,error\n");
        for f in &self.fits {
            for (e, errs) in f.errors.iter().enumerate() {
                for (r, v) in errs.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{},{},{:.17e},{},{},{:.17e}",
                        f.density.tag(),
                        f.test_function.tag(),
                        self.eps[e],
                        self.n[e],
                        r,
                        v
                    );
                }
            }
        }
        s
    }

    /// One row per combination, in the fixed reference order.
    pub fn table_csv(&self) -> String {
        let mut s = String::from(
            "density,test_function,intercept,slope,abs_slope,target_abs_slope,quad_coef,quad_ci_lo,quad_ci_hi\n",
        );
        for f in &self.fits {
            let target = TARGET_ABS_SLOPES
                .iter()
                .find(|p| p.0 == f.density && p.1 == f.test_function)
                .map(|p| format!("{}", p.2))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{:.10e},{:.10e},{:.10e},{},{:.10e},{:.10e},{:.10e}",
                f.density.tag(),
                f.test_function.tag(),
                f.intercept,
                f.slope,
                f.slope.abs(),
                target,
                f.quadratic_coef,
                f.quadratic_ci.0,
                f.quadratic_ci.1
            );
        }
        s
    }
}

/// ℒ sin at θ: β⁻¹(−sin θ) − V′(θ) cos θ.
fn generator_of_sin(sys: &CircleSystem, theta: f64) -> f64 {
    sys.generator_of(theta, theta.cos(), -theta.sin())
}

/// Errors of both test functions for one cloud.
fn one_repeat(
    cfg: &BiasConfig,
    committor: &CircleCommittor,
    density: CircleDensity,
    eps: f64,
    n: usize,
    seed: u64,
) -> Result<([f64; 2], usize)> {
    let sys = &cfg.system;
    let mut resampled = 0;
    let mut attempt = 0u64;
    loop {
        let mut rng = rng_from_seed(sub_seed(seed, attempt));
        let thetas = sample_circle_angles(density, n, &mut rng);
        let cloud = embed_angles(&thetas);
        let mu = circle_measure(sys.beta, &thetas);
        let mut gen = LocalGenerator::new(&cloud, eps, cfg.cutoff, &mu)?;
        if cfg.cutoff == 0.0 {
            gen = gen.with_row_sums(circle_kernel_row_sums(&thetas, eps)?)?;
        }
        let (row, theta_q): (LocalRow, f64) = match cfg.query {
            QueryMode::Append => {
                let q = CIRCLE_QUERY;
                (gen.row_at_query(&embed_angle(q), (-sys.beta * circle_potential(q)).exp())?, q)
            }
            QueryMode::Nearest => {
                let (i, gap) = thetas
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| (i, angular_distance(t, CIRCLE_QUERY)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .ok_or_else(|| invalid("n", "empty cloud"))?;
                if gap > cfg.max_query_gap {
                    resampled += 1;
                    attempt += 1;
                    if attempt > 100 {
                        return Err(invalid("density", "no sample lands near the query point"));
                    }
                    continue;
                }
                (gen.row_at_index(i)?, thetas[i])
            }
        };
        let scale = 4.0 / sys.beta;
        let e_sin = row.apply(|j| thetas[j].sin(), theta_q.sin(), scale) - generator_of_sin(sys, theta_q);
        // ℒq = 0 away from A and B.
        let e_q = row.apply(|j| committor.eval(thetas[j]), committor.eval(theta_q), scale);
        return Ok(([e_sin, e_q], resampled));
    }
}

pub fn bias_prefactor_experiment(cfg: &BiasConfig) -> Result<BiasReport> {
    if cfg.eps.len() < 3 {
        return Err(invalid("eps", "need at least three values"));
    }
    if cfg.repeats == 0 {
        return Err(invalid("repeats", "must be at least 1"));
    }
    if cfg.densities.is_empty() {
        return Err(invalid("densities", "need at least one density"));
    }
    let committor = CircleCommittor::new(cfg.system)?;
    let n: Vec<usize> = cfg
        .eps
        .iter()
        .map(|&e| schedule_n(e, cfg.schedule_coef, cfg.schedule_exponent))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.densities.len())
        .flat_map(|d| (0..cfg.eps.len()).flat_map(move |e| (0..cfg.repeats).map(move |r| (d, e, r))))
        .collect();
    let results: Vec<([f64; 2], usize)> = jobs
        .par_iter()
        .map(|&(d, e, r)| {
            let seed = sub_seed(sub_seed(sub_seed(cfg.seed, d as u64), e as u64), r as u64);
            one_repeat(cfg, &committor, cfg.densities[d], cfg.eps[e], n[e], seed)
        })
        .collect::<Result<_>>()?;
    let resampled = results.iter().map(|r| r.1).sum();
    let mut fits = Vec::new();
    for f_idx in 0..2 {
        let tf = [TestFunction::Sin, TestFunction::Committor][f_idx];
        for (d, &density) in cfg.densities.iter().enumerate() {
            let errors: Vec<Vec<f64>> = (0..cfg.eps.len())
                .map(|e| {
                    (0..cfg.repeats)
                        .map(|r| results[(d * cfg.eps.len() + e) * cfg.repeats + r].0[f_idx])
                        .collect()
                })
                .collect();
            let mean_errors: Vec<f64> = errors.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            let lin = poly_fit(&cfg.eps, &mean_errors, 1)?;
            let quad = poly_fit(&cfg.eps, &mean_errors, 2)?;
            fits.push(ErrorModelFit {
                density,
                test_function: tf,
                intercept: lin.coefficients[0],
                slope: lin.coefficients[1],
                eps_values: cfg.eps.clone(),
                errors,
                mean_errors,
                quadratic_coef: quad.coefficients[2],
                quadratic_ci: quad.confidence_95(2),
            });
        }
    }
    Ok(BiasReport {
        eps: cfg.eps.clone(),
        n,
        fits,
        resampled,
    })
}

/// Analytic check value: the error of f = sin at θ = π reduces to 4β⁻¹(Lf)(π).
pub fn sin_generator_at_pi(sys: &CircleSystem) -> f64 {
    generator_of_sin(sys, PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, kde};
    use crate::generator::build_tmdmap;
    use crate::potentials::circle_potential_derivative;

    fn bessel_i_series(k: usize, x: f64) -> f64 {
        // Σ_m (x/2)^{2m+k} / (m!(m+k)!), scaled by e^{−x}, via logs.
        let mut s = 0.0;
        for m in 0..400 {
            let lg = (2 * m + k) as f64 * (x / 2.0).ln() - ln_fact(m) - ln_fact(m + k) - x;
            s += lg.exp();
        }
        s
    }

    fn ln_fact(m: usize) -> f64 {
        (1..=m).map(|v| (v as f64).ln()).sum()
    }

    #[test]
    fn bessel_coefficients_match_power_series() {
        for &kappa in &[0.5, 3.0, 20.0] {
            let t = scaled_bessel_i(kappa, 30);
            for k in [0, 1, 2, 5, 10] {
                let r = bessel_i_series(k, kappa);
                assert!((t[k] - r).abs() <= 1e-13 * r.max(1e-300) + 1e-300, "k={k} kappa={kappa}");
            }
        }
    }

    #[test]
    fn circle_row_sums_match_direct_sums() {
        let mut rng = rng_from_seed(5);
        let thetas = sample_circle_angles(CircleDensity::Uniform, 400, &mut rng);
        let cloud = embed_angles(&thetas);
        for &eps in &[0.01, 0.03, 0.5] {
            let fast = circle_kernel_row_sums(&thetas, eps).unwrap();
            let k = build_kernel(&cloud, eps, 0.0).unwrap();
            let direct = k.matrix.row_sums();
            for (a, b) in fast.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-11 * b, "{a} {b}");
            }
        }
    }

    #[test]
    fn consistency_error_examples() {
        let mut rng = rng_from_seed(8);
        let thetas = sample_circle_angles(CircleDensity::Uniform, 300, &mut rng);
        let cloud = embed_angles(&thetas);
        let k = build_kernel(&cloud, 0.05, 0.0).unwrap();
        let mu = circle_measure(1.0, &thetas);
        let b = build_tmdmap(&k, &kde(&k), &mu).unwrap();
        let zeros = vec![0.0; 300];
        assert_eq!(consistency_error(&b, &vec![2.5; 300], &zeros, 7, 1.0).unwrap(), 0.0);
        assert!(consistency_error(&b, &zeros, &zeros, 300, 1.0).is_err());
        // ℒ sin(π) = 0 since sin π = 0 and V′(π) = 0.
        let sys = CircleSystem::default();
        assert!(sin_generator_at_pi(&sys).abs() < 1e-15);
        assert!(circle_potential_derivative(PI).abs() < 1e-15);
        assert!((circle_potential(PI) - 2.25).abs() < 1e-15);
    }

    #[test]
    fn single_repeat_is_reproducible() {
        let mut cfg = BiasConfig::standard(11);
        cfg.repeats = 1;
        cfg.eps = vec![0.03, 0.031, 0.033];
        cfg.schedule_coef = 0.01;
        let a = bias_prefactor_experiment(&cfg).unwrap();
        let b = bias_prefactor_experiment(&cfg).unwrap();
        assert_eq!(a.results_csv(), b.results_csv());
        assert_eq!(a.fits.len(), 4);
        assert_eq!(a.resampled, 0);
    }
}
