//! Point-cloud generators: Euler–Maruyama, metadynamics, direct sampling on
//! the circle, and greedy δ-nets.
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`; Gaussian draws
//! use the ziggurat sampler of `rand_distr::StandardNormal`. Identical seeds
//! give bit-identical trajectories within one build.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::{squared_distance, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::potentials::{embed_angle, PotentialSystem};
use crate::spatial::{DynamicGrid, MAX_GRID_DIM};

/// Trajectories leaving this radius are reported as diverged.
pub const DIVERGENCE_RADIUS: f64 = 1e6;

/// Bump terms with ‖x − c‖²/(2σ²) above this are skipped.
pub const BUMP_CUTOFF: f64 = 40.0;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed (splitmix64 finalizer).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Stepper<'a> {
    sys: &'a PotentialSystem,
    dt: f64,
    noise: f64,
    grad: Vec<f64>,
    bias_grad: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a PotentialSystem, dt: f64) -> Self {
        let m = sys.dim();
        Self {
            sys,
            dt,
            noise: (2.0 * dt / sys.beta()).sqrt(),
            grad: vec![0.0; m],
            bias_grad: vec![0.0; m],
        }
    }

    fn step(
        &mut self,
        x: &mut [f64],
        rng: &mut ChaCha8Rng,
        bias: Option<&GaussianBias>,
        step: usize,
    ) -> Result<()> {
        self.sys.gradient(x, &mut self.grad);
        if let Some(b) = bias.filter(|b| !b.is_empty()) {
            b.gradient(x, &mut self.bias_grad);
            for (g, bg) in self.grad.iter_mut().zip(&self.bias_grad) {
                *g += bg;
            }
        }
        for (c, g) in x.iter_mut().zip(&self.grad) {
            let xi: f64 = rng.sample(StandardNormal);
            *c += -g * self.dt + self.noise * xi;
        }
        self.sys.reflect(x);
        let r2: f64 = x.iter().map(|c| c * c).sum();
        if !(r2 <= DIVERGENCE_RADIUS * DIVERGENCE_RADIUS) {
            return Err(Error::Diverged { step });
        }
        Ok(())
    }
}

fn check_start(sys: &PotentialSystem, x0: &[f64], dt: f64) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: x0.len(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    if x0.iter().any(|c| !c.is_finite()) {
        return Err(invalid("x0", "must be finite"));
    }
    Ok(())
}

/// Overdamped Langevin dynamics x ← x − ∇V(x)Δt + √(2β⁻¹Δt)ξ.
///
/// The state after step `k` (1-based) is kept when `k % subsample == 0`, so
/// the output has `n_steps / subsample` points.
pub fn euler_maruyama(
    sys: &PotentialSystem,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    subsample: usize,
    seed: u64,
) -> Result<PointCloud> {
    check_start(sys, x0, dt)?;
    if subsample == 0 {
        return Err(invalid("subsample", "must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut st = Stepper::new(sys, dt);
    let mut x = x0.to_vec();
    let mut out = PointCloud::with_capacity(sys.dim(), n_steps / subsample);
    for k in 1..=n_steps {
        st.step(&mut x, &mut rng, None, k)?;
        if k % subsample == 0 {
            out.push(&x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetadynamicsParams {
    pub w0: f64,
    pub sigma: f64,
    /// Deposit a bump after every `stride`-th step.
    pub stride: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// Keep every `record_every`-th visited state; 1 keeps all.
    pub record_every: usize,
}

impl MetadynamicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0) {
            return Err(invalid("w0", "must be positive"));
        }
        if !(self.sigma > 0.0) {
            return Err(invalid("sigma", "must be positive"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(())
    }
}

/// Sum of Gaussian bumps w0·exp(−‖x − c‖²/(2σ²)).
#[derive(Debug, Clone)]
pub struct GaussianBias {
    w0: f64,
    sigma: f64,
    centers: Vec<f64>,
    dim: usize,
    cell: f64,
    grid: Option<HashMap<[i64; MAX_GRID_DIM], Vec<u32>>>,
}

impl GaussianBias {
    pub fn new(dim: usize, w0: f64, sigma: f64) -> Self {
        let cell = sigma * (2.0 * BUMP_CUTOFF).sqrt();
        Self {
            w0,
            sigma,
            centers: Vec::new(),
            dim,
            cell,
            grid: (dim <= MAX_GRID_DIM).then(HashMap::new),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }

    fn key(&self, x: &[f64]) -> [i64; MAX_GRID_DIM] {
        let mut k = [0i64; MAX_GRID_DIM];
        for (s, c) in k.iter_mut().zip(x) {
            *s = (c / self.cell).floor() as i64;
        }
        k
    }

    pub fn deposit(&mut self, x: &[f64]) {
        let id = self.len() as u32;
        self.centers.extend_from_slice(x);
        let key = self.key(x);
        if let Some(g) = self.grid.as_mut() {
            g.entry(key).or_default().push(id);
        }
    }

    fn for_each_near(&self, x: &[f64], mut f: impl FnMut(&[f64])) {
        match &self.grid {
            None => (0..self.len()).for_each(|k| f(self.center(k))),
            Some(g) => {
                let base = self.key(x);
                let total = 3i64.pow(self.dim as u32);
                for code in 0..total {
                    let mut key = base;
                    let mut c = code;
                    for s in key.iter_mut().take(self.dim) {
                        *s += c % 3 - 1;
                        c /= 3;
                    }
                    if let Some(ids) = g.get(&key) {
                        for &id in ids {
                            f(self.center(id as usize));
                        }
                    }
                }
            }
        }
    }

    /// Bias value, skipping bumps beyond the cutoff.
    pub fn value(&self, x: &[f64]) -> f64 {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut v = 0.0;
        self.for_each_near(x, |c| {
            let a = squared_distance(x, c) * inv;
            if a <= BUMP_CUTOFF {
                v += (-a).exp();
            }
        });
        self.w0 * v
    }

    /// Bias value as the plain sum over every bump.
    pub fn value_exact(&self, x: &[f64]) -> f64 {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        (0..self.len())
            .map(|k| self.w0 * (-squared_distance(x, self.center(k)) * inv).exp())
            .sum()
    }

    pub fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let s2 = self.sigma * self.sigma;
        let inv = 1.0 / (2.0 * s2);
        self.for_each_near(x, |c| {
            let a = squared_distance(x, c) * inv;
            if a <= BUMP_CUTOFF {
                let w = -self.w0 * (-a).exp() / s2;
                for ((g, xi), ci) in grad.iter_mut().zip(x).zip(c) {
                    *g += w * (xi - ci);
                }
            }
        });
    }
}

/// Result of a metadynamics run.
#[derive(Debug, Clone)]
pub struct MetadynamicsRun {
    pub cloud: PointCloud,
    pub bias: GaussianBias,
}

/// Euler–Maruyama under V + W, where W gains a bump at the current state
/// after every `stride`-th step.
pub fn metadynamics(
    sys: &PotentialSystem,
    params: &MetadynamicsParams,
    x0: &[f64],
) -> Result<MetadynamicsRun> {
    params.validate()?;
    check_start(sys, x0, params.dt)?;
    let mut rng = rng_from_seed(params.seed);
    let mut st = Stepper::new(sys, params.dt);
    let mut bias = GaussianBias::new(sys.dim(), params.w0, params.sigma);
    let mut x = x0.to_vec();
    let mut cloud = PointCloud::with_capacity(sys.dim(), params.n_steps / params.record_every);
    for k in 1..=params.n_steps {
        st.step(&mut x, &mut rng, Some(&bias), k)?;
        if k % params.record_every == 0 {
            cloud.push(&x);
        }
        if k % params.stride == 0 {
            bias.deposit(&x);
        }
    }
    Ok(MetadynamicsRun { cloud, bias })
}

/// Sampling densities for the circle study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircleDensity {
    /// θ ~ U[0, 2π).
    Uniform,
    /// θ = π + 0.1 + 0.2π·frac(Z) with frac(z) = z − ⌊z⌋.
    FractionalNormal,
    /// θ = π + 0.1 + 0.2π·Z wrapped into [0, 2π).
    WrappedNormal,
}

impl CircleDensity {
    pub const CENTER: f64 = PI + 0.1;
    pub const SPREAD: f64 = 0.2 * PI;

    pub fn tag(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::FractionalNormal => "fractional-normal",
            Self::WrappedNormal => "wrapped-normal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Self::Uniform),
            "fractional-normal" => Some(Self::FractionalNormal),
            "wrapped-normal" => Some(Self::WrappedNormal),
            _ => None,
        }
    }

    pub fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        let t = match self {
            Self::Uniform => rng.random::<f64>() * TAU,
            Self::FractionalNormal => {
                let z: f64 = rng.sample(StandardNormal);
                Self::CENTER + Self::SPREAD * (z - z.floor())
            }
            Self::WrappedNormal => {
                let z: f64 = rng.sample(StandardNormal);
                Self::CENTER + Self::SPREAD * z
            }
        };
        let w = t.rem_euclid(TAU);
        if w >= TAU {
            0.0
        } else {
            w
        }
    }
}

pub fn sample_circle_angles(kind: CircleDensity, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| kind.draw(rng)).collect()
}

pub fn embed_angles(thetas: &[f64]) -> PointCloud {
    let mut c = PointCloud::with_capacity(2, thetas.len());
    for &t in thetas {
        c.push(&embed_angle(t));
    }
    c
}

/// Draws `n` angles from `kind` and embeds them on the unit circle.
pub fn sample_circle_density(kind: CircleDensity, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok(embed_angles(&sample_circle_angles(kind, n, &mut rng)))
}

/// Indices kept by the greedy δ-net: a point is admitted unless an admitted
/// point lies strictly closer than δ. Input order is preserved.
pub fn delta_net_indices(cloud: &PointCloud, delta: f64) -> Result<Vec<usize>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", "must be positive"));
    }
    let mut keep = Vec::new();
    if cloud.dim() <= MAX_GRID_DIM {
        let mut grid = DynamicGrid::new(cloud.dim(), delta);
        for (i, p) in cloud.iter().enumerate() {
            if !grid.any_closer_than(p, delta) {
                grid.insert(p);
                keep.push(i);
            }
        }
    } else {
        let d2 = delta * delta;
        for (i, p) in cloud.iter().enumerate() {
            if keep.iter().all(|&k| squared_distance(cloud.point(k), p) >= d2) {
                keep.push(i);
            }
        }
    }
    Ok(keep)
}

pub fn delta_net(cloud: &PointCloud, delta: f64) -> Result<PointCloud> {
    Ok(cloud.subset(&delta_net_indices(cloud, delta)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::potentials::{Flat, Quadratic};

    #[test]
    fn zero_noise_keeps_flat_trajectory_fixed() {
        let sys = PotentialSystem::new(Arc::new(Flat { dim: 2 }), 1e300).unwrap();
        let c = euler_maruyama(&sys, &[0.3, -0.2], 1e-3, 100, 10, 1).unwrap();
        assert_eq!(c.len(), 10);
        for p in c.iter() {
            assert!((p[0] - 0.3).abs() < 1e-100 && (p[1] + 0.2).abs() < 1e-100);
        }
    }

    #[test]
    fn ornstein_uhlenbeck_variance() {
        let sys = PotentialSystem::new(Arc::new(Quadratic { dim: 2 }), 1.0).unwrap();
        let c = euler_maruyama(&sys, &[0.0, 0.0], 0.01, 1_000_000, 10, 4).unwrap();
        assert_eq!(c.len(), 100_000);
        for k in 0..2 {
            let mean = c.iter().map(|p| p[k]).sum::<f64>() / c.len() as f64;
            let var = c.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / c.len() as f64;
            assert!((var - 1.0).abs() < 0.05, "variance {var}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let sys = PotentialSystem::new(Arc::new(Quadratic { dim: 1 }), 1.0).unwrap();
        // dt = 3 makes x ← −2x + noise, which grows geometrically.
        match euler_maruyama(&sys, &[1.0], 3.0, 1000, 1, 0) {
            Err(Error::Diverged { step }) => assert!(step > 5 && step < 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let sys = PotentialSystem::benchmark("twowell", 1.0).unwrap();
        let a = euler_maruyama(&sys, &[-1.0, 0.0], 1e-3, 2000, 7, 99).unwrap();
        let b = euler_maruyama(&sys, &[-1.0, 0.0], 1e-3, 2000, 7, 99).unwrap();
        let c = euler_maruyama(&sys, &[-1.0, 0.0], 1e-3, 2000, 7, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|p| p[1].abs() <= 1.0));
    }

    #[test]
    fn metadynamics_without_deposits_equals_plain_dynamics() {
        let sys = PotentialSystem::benchmark("twowell", 1.0).unwrap();
        let p = MetadynamicsParams {
            w0: 0.5,
            sigma: 0.1,
            stride: 10_000,
            dt: 1e-3,
            n_steps: 5000,
            seed: 8,
            record_every: 1,
        };
        let run = metadynamics(&sys, &p, &[1.0, 0.0]).unwrap();
        let em = euler_maruyama(&sys, &[1.0, 0.0], 1e-3, 5000, 1, 8).unwrap();
        assert!(run.bias.is_empty());
        assert_eq!(run.cloud, em);
    }

    #[test]
    fn bias_matches_explicit_sum() {
        let mut rng = rng_from_seed(2);
        let mut b = GaussianBias::new(2, 0.5, 0.1);
        for _ in 0..300 {
            b.deposit(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        }
        for _ in 0..50 {
            let x = [rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)];
            let explicit: f64 = (0..b.len())
                .map(|k| {
                    let c = b.center(k);
                    0.5 * (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / 0.02).exp()
                })
                .sum();
            assert!((b.value(&x) - explicit).abs() < 1e-12);
            assert!((b.value_exact(&x) - explicit).abs() < 1e-12);
            let mut g = [0.0; 2];
            b.gradient(&x, &mut g);
            let h = 1e-6;
            let fx = (b.value_exact(&[x[0] + h, x[1]]) - b.value_exact(&[x[0] - h, x[1]])) / (2.0 * h);
            assert!((fx - g[0]).abs() < 1e-4 * (1.0 + g[0].abs()));
        }
    }

    #[test]
    fn circle_samples_lie_on_circle() {
        for kind in [
            CircleDensity::Uniform,
            CircleDensity::FractionalNormal,
            CircleDensity::WrappedNormal,
        ] {
            let c = sample_circle_density(kind, 1000, 5).unwrap();
            for p in c.iter() {
                assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12);
            }
        }
        let u = sample_circle_density(CircleDensity::Uniform, 100_000, 1).unwrap();
        let mean_cos = u.iter().map(|p| p[0]).sum::<f64>() / u.len() as f64;
        assert!(mean_cos.abs() < 0.02);
    }

    #[test]
    fn fractional_normal_support_and_mode() {
        let mut rng = rng_from_seed(3);
        let t = sample_circle_angles(CircleDensity::FractionalNormal, 50_000, &mut rng);
        let lo = CircleDensity::CENTER;
        let hi = lo + CircleDensity::SPREAD;
        assert!(t.iter().all(|&x| x >= lo && x < hi));
        // frac(Z) has density 1 + 2Σ_m e^{−2π²m²}cos(2πmu), flat to about 1e-8.
        let bins = 20;
        let mut hist = vec![0usize; bins];
        for &x in &t {
            hist[(((x - lo) / (hi - lo)) * bins as f64) as usize] += 1;
        }
        let mean = t.len() as f64 / bins as f64;
        assert!(hist.iter().all(|&h| (h as f64 - mean).abs() < 0.1 * mean), "{hist:?}");
    }

    #[test]
    fn delta_net_examples() {
        let empty = PointCloud::new(2);
        assert!(delta_net(&empty, 0.1).unwrap().is_empty());
        let same = PointCloud::from_rows(&[[0.5, 0.5]; 5]).unwrap();
        assert_eq!(delta_net_indices(&same, 0.1).unwrap(), vec![0]);
        let d = 0.25;
        let line = PointCloud::from_rows(&[[0.0], [d / 2.0], [d], [1.5 * d], [2.0 * d]]).unwrap();
        assert_eq!(delta_net_indices(&line, d).unwrap(), vec![0, 2, 4]);
        assert!(delta_net(&line, 0.0).is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 0), sub_seed(1, 1));
        assert_ne!(sub_seed(1, 0), sub_seed(2, 0));
        assert_eq!(sub_seed(7, 3), sub_seed(7, 3));
    }
}
