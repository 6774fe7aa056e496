//! Benchmark potential-energy landscapes and the Gibbs target measure.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};

/// Exponent arguments above this make the Müller energy `+inf`.
pub const EXP_CLAMP: f64 = 700.0;

/// A smooth potential on R^m.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes the gradient at `x` into `grad`.
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn name(&self) -> &str;
}

/// V(θ) = (4cos²(θ/2) − 3/2)², written as (1/2 + 2cosθ)².
pub fn circle_potential(theta: f64) -> f64 {
    let u = 0.5 + 2.0 * theta.cos();
    u * u
}

pub fn circle_potential_derivative(theta: f64) -> f64 {
    -4.0 * theta.sin() * (0.5 + 2.0 * theta.cos())
}

pub fn circle_potential_second_derivative(theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    8.0 * s * s - 4.0 * c * (0.5 + 2.0 * c)
}

/// Angle of a point in the plane, in [0, 2π).
pub fn angle_of(x: &[f64]) -> f64 {
    let t = x[1].atan2(x[0]);
    if t < 0.0 {
        (t + TAU).min(TAU.next_down())
    } else {
        t
    }
}

/// Embedding ψ(θ) = (cosθ, sinθ).
pub fn embed_angle(theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c, s]
}

/// Wrapped angular distance in [0, π].
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// The circle potential evaluated on R² through the polar angle.
#[derive(Debug, Clone, Copy, Default)]
pub struct Circle;

impl Potential for Circle {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        circle_potential(angle_of(x))
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            grad[0] = 0.0;
            grad[1] = 0.0;
            return;
        }
        let dv = circle_potential_derivative(angle_of(x));
        grad[0] = -dv * x[1] / r2;
        grad[1] = dv * x[0] / r2;
    }

    fn name(&self) -> &str {
        "circle"
    }
}

/// Parameters of the one-dimensional circle study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSystem {
    pub theta1: f64,
    pub theta2: f64,
    pub r: f64,
    pub beta: f64,
}

impl Default for CircleSystem {
    fn default() -> Self {
        let theta1 = 2.0 * (3.0f64.sqrt() / (2.0 * 2.0f64.sqrt())).acos();
        Self {
            theta1,
            theta2: TAU - theta1,
            r: 0.1,
            beta: 1.0,
        }
    }
}

impl CircleSystem {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.theta1 && self.theta1 < self.theta2 && self.theta2 < TAU) {
            return Err(invalid("theta", "need 0 < theta1 < theta2 < 2pi"));
        }
        if !(self.r > 0.0 && self.theta1 + self.r < self.theta2 - self.r) {
            return Err(invalid("r", "arcs must be disjoint and non-empty"));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("beta", "must be positive"));
        }
        Ok(())
    }

    pub fn in_a(&self, theta: f64) -> bool {
        angular_distance(theta, self.theta1) <= self.r
    }

    pub fn in_b(&self, theta: f64) -> bool {
        angular_distance(theta, self.theta2) <= self.r
    }

    /// (ℒf)(θ) = β⁻¹f″ − V′f′.
    pub fn generator_of(&self, theta: f64, df: f64, d2f: f64) -> f64 {
        d2f / self.beta - circle_potential_derivative(theta) * df
    }

    pub fn system(&self) -> PotentialSystem {
        PotentialSystem::new(Arc::new(Circle), self.beta).expect("beta validated")
    }
}

/// Müller's four-term potential on R².
#[derive(Debug, Clone, Copy, Default)]
pub struct Mueller;

impl Mueller {
    pub const A: [f64; 4] = [-1.0, -1.0, -6.5, 0.7];
    pub const B: [f64; 4] = [0.0, 0.0, 11.0, 0.6];
    pub const C: [f64; 4] = [-10.0, -10.0, -6.5, 0.7];
    pub const D: [f64; 4] = [-200.0, -100.0, -170.0, 15.0];
    pub const X: [f64; 4] = [1.0, 0.0, -0.5, -1.0];
    pub const Y: [f64; 4] = [0.0, 0.5, 1.5, 1.0];

    fn exponent(i: usize, x: &[f64]) -> (f64, f64, f64) {
        let dx = x[0] - Self::X[i];
        let dy = x[1] - Self::Y[i];
        let e = Self::A[i] * dx * dx + Self::B[i] * dx * dy + Self::C[i] * dy * dy;
        (e, dx, dy)
    }
}

impl Potential for Mueller {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..4 {
            let (e, _, _) = Self::exponent(i, x);
            if e > EXP_CLAMP {
                return f64::INFINITY;
            }
            v += Self::D[i] * e.exp();
        }
        v
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = 0.0;
        grad[1] = 0.0;
        for i in 0..4 {
            let (e, dx, dy) = Self::exponent(i, x);
            if e > EXP_CLAMP {
                grad[0] = f64::INFINITY;
                grad[1] = f64::INFINITY;
                return;
            }
            let w = Self::D[i] * e.exp();
            grad[0] += w * (2.0 * Self::A[i] * dx + Self::B[i] * dy);
            grad[1] += w * (Self::B[i] * dx + 2.0 * Self::C[i] * dy);
        }
    }

    fn name(&self) -> &str {
        "mueller"
    }
}

/// V(x₁, x₂) = (x₁² − 1)².
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoWell;

impl Potential for TwoWell {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u = x[0] * x[0] - 1.0;
        u * u
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
        grad[1] = 0.0;
    }

    fn name(&self) -> &str {
        "twowell"
    }
}

/// V(x) = ‖x‖²/2.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub dim: usize,
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|c| c * c).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(x);
    }

    fn name(&self) -> &str {
        "quadratic"
    }
}

/// V ≡ 0.
#[derive(Debug, Clone, Copy)]
pub struct Flat {
    pub dim: usize,
}

impl Potential for Flat {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
    }

    fn name(&self) -> &str {
        "flat"
    }
}

/// Built-in potential by name: `circle`, `mueller`, `twowell`, `quadratic`, `flat`.
/// The last two live on R².
pub fn potential_by_name(name: &str) -> Option<Arc<dyn Potential>> {
    match name {
        "circle" => Some(Arc::new(Circle)),
        "mueller" => Some(Arc::new(Mueller)),
        "twowell" => Some(Arc::new(TwoWell)),
        "quadratic" => Some(Arc::new(Quadratic { dim: 2 })),
        "flat" => Some(Arc::new(Flat { dim: 2 })),
        _ => None,
    }
}

/// A potential with inverse temperature and optional reflecting walls.
///
/// `walls[k] = Some((lo, hi))` confines coordinate `k` to `[lo, hi]`; the
/// samplers reflect at the walls and the finite-difference reference masks
/// everything outside them.
#[derive(Clone)]
pub struct PotentialSystem {
    potential: Arc<dyn Potential>,
    beta: f64,
    walls: Vec<Option<(f64, f64)>>,
}

impl fmt::Debug for PotentialSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSystem")
            .field("potential", &self.potential.name())
            .field("beta", &self.beta)
            .field("walls", &self.walls)
            .finish()
    }
}

impl PotentialSystem {
    pub fn new(potential: Arc<dyn Potential>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive and finite, got {beta}")));
        }
        let dim = potential.dim();
        Ok(Self {
            potential,
            beta,
            walls: vec![None; dim],
        })
    }

    pub fn by_name(name: &str, beta: f64) -> Result<Self> {
        let p = potential_by_name(name)
            .ok_or_else(|| invalid("potential", format!("unknown potential `{name}`")))?;
        Self::new(p, beta)
    }

    /// Default system for a named benchmark. The two-well gets walls at
    /// |x₂| ≤ 1 because its Gibbs measure is not normalizable in x₂.
    pub fn benchmark(name: &str, beta: f64) -> Result<Self> {
        let sys = Self::by_name(name, beta)?;
        if name == "twowell" {
            sys.with_wall(1, -1.0, 1.0)
        } else {
            Ok(sys)
        }
    }

    pub fn with_wall(mut self, coord: usize, lo: f64, hi: f64) -> Result<Self> {
        if coord >= self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: coord + 1,
            });
        }
        if !(lo < hi) {
            return Err(invalid("wall", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        self.walls[coord] = Some((lo, hi));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn name(&self) -> &str {
        self.potential.name()
    }

    pub fn potential(&self) -> &Arc<dyn Potential> {
        &self.potential
    }

    pub fn walls(&self) -> &[Option<(f64, f64)>] {
        &self.walls
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }

    pub fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.potential.gradient(x, grad)
    }

    pub fn inside_walls(&self, x: &[f64]) -> bool {
        self.walls.iter().zip(x).all(|(w, &c)| match w {
            Some((lo, hi)) => *lo <= c && c <= *hi,
            None => true,
        })
    }

    /// Folds `x` back into the walls by mirror reflection.
    pub fn reflect(&self, x: &mut [f64]) {
        for (w, c) in self.walls.iter().zip(x.iter_mut()) {
            if let Some((lo, hi)) = *w {
                let width = hi - lo;
                let mut t = (*c - lo).rem_euclid(2.0 * width);
                if t > width {
                    t = 2.0 * width - t;
                }
                *c = lo + t;
            }
        }
    }

    /// exp(−βV(x)).
    pub fn density(&self, x: &[f64]) -> f64 {
        (-self.beta * self.value(x)).exp()
    }
}

/// Unnormalized Gibbs weights μᵢ = exp(−βV(xᵢ)). Values may underflow to 0.
pub fn target_measure(sys: &PotentialSystem, cloud: &PointCloud) -> Result<Vec<f64>> {
    if cloud.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: cloud.dim(),
        });
    }
    Ok(cloud.iter().map(|x| sys.density(x)).collect())
}

/// Gibbs weights for angles on the circle.
pub fn circle_measure(beta: f64, thetas: &[f64]) -> Vec<f64> {
    thetas.iter().map(|&t| (-beta * circle_potential(t)).exp()).collect()
}

/// θ = π, the evaluation point of the bias study.
pub const CIRCLE_QUERY: f64 = PI;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_check(p: &dyn Potential, rng: &mut ChaCha8Rng, lo: f64, hi: f64) {
        let h = 1e-6;
        let m = p.dim();
        for _ in 0..100 {
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(lo..hi)).collect();
            let mut g = vec![0.0; m];
            p.gradient(&x, &mut g);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            for k in 0..m {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
                let err = (fd - g[k]).abs() / gnorm.max(1.0);
                assert!(err < 1e-4, "{} at {x:?}: fd {fd} vs {}", p.name(), g[k]);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        fd_check(&Mueller, &mut rng, -1.5, 1.5);
        fd_check(&TwoWell, &mut rng, -2.0, 2.0);
        fd_check(&Quadratic { dim: 3 }, &mut rng, -2.0, 2.0);
        fd_check(&Flat { dim: 2 }, &mut rng, -2.0, 2.0);
        fd_check(&Circle, &mut rng, 0.3, 2.0);
    }

    #[test]
    fn circle_values() {
        let cs = CircleSystem::default();
        assert!(circle_potential(cs.theta1).abs() < 1e-15);
        assert!(circle_potential(cs.theta2).abs() < 1e-15);
        assert!((circle_potential(0.0) - 6.25).abs() < 1e-15);
        assert!((circle_potential(PI) - 2.25).abs() < 1e-14);
        assert!((cs.theta1 - 1.8235).abs() < 1e-4);
        assert!((cs.theta2 - 4.4597).abs() < 1e-4);
        for k in 0..50 {
            let t = 0.1 * k as f64;
            let printed = (4.0 * (t / 2.0).cos().powi(2) - 1.5).powi(2);
            assert!((circle_potential(t) - printed).abs() < 1e-12);
            let h = 1e-5;
            let d2 = (circle_potential_derivative(t + h) - circle_potential_derivative(t - h)) / (2.0 * h);
            assert!((d2 - circle_potential_second_derivative(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_potentials_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            assert_eq!(TwoWell.value(&[a, b]), TwoWell.value(&[-a, b]));
            let t: f64 = rng.random_range(0.0..TAU);
            // TAU − t is itself rounded, so allow a few ulps.
            let (v, w) = (circle_potential(t), circle_potential(TAU - t));
            assert!((v - w).abs() <= 1e-13 * v.abs().max(1.0), "{t}");
        }
    }

    #[test]
    fn twowell_values() {
        assert_eq!(TwoWell.value(&[1.0, 3.0]), 0.0);
        assert_eq!(TwoWell.value(&[-1.0, -7.0]), 0.0);
        assert_eq!(TwoWell.value(&[0.0, 0.0]), 1.0);
        assert_eq!(TwoWell.value(&[2.0, 5.0]), 9.0);
    }

    #[test]
    fn mueller_direct_sum() {
        let x = [1.0, 0.0];
        let mut want = 0.0;
        for i in 0..4 {
            let dx = x[0] - Mueller::X[i];
            let dy = x[1] - Mueller::Y[i];
            want += Mueller::D[i]
                * (Mueller::A[i] * dx * dx + Mueller::B[i] * dx * dy + Mueller::C[i] * dy * dy).exp();
        }
        assert!((Mueller.value(&x) - want).abs() < 1e-12);
        assert!(Mueller.value(&[-0.558, 1.441]) < Mueller.value(&[0.0, 1.0]));
        assert_eq!(Mueller.value(&[40.0, 40.0]), f64::INFINITY);
    }

    #[test]
    fn target_measure_values() {
        let c = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let tw = PotentialSystem::by_name("twowell", 1.0).unwrap();
        let mu = target_measure(&tw, &c).unwrap();
        assert!((mu[0] / mu[1] - (-1.0f64).exp()).abs() < 1e-15);
        let flat = PotentialSystem::by_name("flat", 3.0).unwrap();
        assert_eq!(target_measure(&flat, &c).unwrap(), vec![1.0, 1.0]);
        let circ = CircleSystem::default().system();
        let p = PointCloud::from_rows(&[embed_angle(0.0)]).unwrap();
        assert!((target_measure(&circ, &p).unwrap()[0] - (-6.25f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn beta_must_be_positive() {
        assert!(PotentialSystem::by_name("twowell", 0.0).is_err());
        assert!(PotentialSystem::by_name("twowell", -1.0).is_err());
        assert!(PotentialSystem::by_name("nope", 1.0).is_err());
    }

    #[test]
    fn reflection_folds_into_walls() {
        let s = PotentialSystem::benchmark("twowell", 1.0).unwrap();
        for (x, want) in [(1.5, 0.5), (-1.25, -0.75), (3.5, -0.5), (0.2, 0.2)] {
            let mut p = [7.0, x];
            s.reflect(&mut p);
            assert!((p[1] - want).abs() < 1e-12, "{x} -> {}", p[1]);
            assert_eq!(p[0], 7.0);
        }
    }

    #[test]
    fn angles() {
        assert_eq!(angle_of(&[1.0, 0.0]), 0.0);
        assert!((angle_of(&[0.0, -1.0]) - 1.5 * PI).abs() < 1e-15);
        assert!((angular_distance(0.05, TAU - 0.05) - 0.1).abs() < 1e-12);
        let cs = CircleSystem::default();
        assert!(cs.in_a(cs.theta1 + cs.r * 0.999));
        assert!(!cs.in_a(cs.theta1 + cs.r * 1.001));
    }
}
