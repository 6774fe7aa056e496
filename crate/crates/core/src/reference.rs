//! Reference solutions: the analytic committor on the circle and a
//! finite-difference committor on masked 2-D grids.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use crate::error::{invalid, Error, Result};
use crate::linsolve::{solve_cholesky, SolveOutcome, DEFAULT_TOL};
use crate::potentials::{circle_potential, CircleSystem, PotentialSystem};
use crate::quadrature::integrate;
use crate::sparse::CsrMatrix;

pub const QUAD_TOL: f64 = 1e-10;
const TABLE_NODES: usize = 4096;

/// Cubic Hermite interpolant of a monotone primitive on [a, b].
#[derive(Debug, Clone)]
struct HermiteTable {
    a: f64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    fn eval(&self, t: f64) -> f64 {
        let m = self.values.len() - 1;
        let s = ((t - self.a) / self.h).clamp(0.0, m as f64);
        let k = (s.floor() as usize).min(m - 1);
        let u = s - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * self.h, self.slopes[k + 1] * self.h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }
}

/// Analytic committor of the circle system.
///
/// On the arc from A to B through π, q(θ) = ∫_{θ₁+r}^θ e^{βV} / Z_in; on the
/// other arc q decreases from 1 at θ₂ + r to 0 at θ₁ − r + 2π with
/// normalizer Z_out. q = 0 on A and 1 on B.
#[derive(Debug, Clone)]
pub struct CircleCommittor {
    pub sys: CircleSystem,
    pub z_inner: f64,
    pub z_outer: f64,
    inner: HermiteTable,
    outer: HermiteTable,
}

impl CircleCommittor {
    pub fn new(sys: CircleSystem) -> Result<Self> {
        sys.validate()?;
        let w = |t: f64| (sys.beta * circle_potential(t)).exp();
        let (a_in, b_in) = (sys.theta1 + sys.r, sys.theta2 - sys.r);
        let (a_out, b_out) = (sys.theta2 + sys.r, sys.theta1 - sys.r + TAU);
        let z_inner = integrate(w, a_in, b_in, QUAD_TOL);
        let z_outer = integrate(w, a_out, b_out, QUAD_TOL);
        let table = |a: f64, b: f64| {
            let h = (b - a) / TABLE_NODES as f64;
            let mut values = Vec::with_capacity(TABLE_NODES + 1);
            let mut acc = 0.0;
            values.push(0.0);
            for k in 0..TABLE_NODES {
                let lo = a + h * k as f64;
                acc += integrate(w, lo, lo + h, QUAD_TOL / TABLE_NODES as f64);
                values.push(acc);
            }
            let slopes = (0..=TABLE_NODES).map(|k| w(a + h * k as f64)).collect();
            HermiteTable { a, h, values, slopes }
        };
        Ok(Self {
            sys,
            z_inner,
            z_outer,
            inner: table(a_in, b_in),
            outer: table(a_out, b_out),
        })
    }

    fn locate(&self, theta: f64) -> Branch {
        let t = theta.rem_euclid(TAU);
        let s = &self.sys;
        if s.in_a(t) {
            Branch::A
        } else if s.in_b(t) {
            Branch::B
        } else if t > s.theta1 && t < s.theta2 {
            Branch::Inner(t)
        } else if t >= s.theta2 {
            Branch::Outer(t)
        } else {
            Branch::Outer(t + TAU)
        }
    }

    /// q(θ) by adaptive quadrature to absolute tolerance 1e-10.
    pub fn value(&self, theta: f64) -> f64 {
        let w = |t: f64| (self.sys.beta * circle_potential(t)).exp();
        let s = &self.sys;
        match self.locate(theta) {
            Branch::A => 0.0,
            Branch::B => 1.0,
            Branch::Inner(t) => (integrate(w, s.theta1 + s.r, t, QUAD_TOL) / self.z_inner).clamp(0.0, 1.0),
            Branch::Outer(t) => {
                (integrate(w, t, s.theta1 - s.r + TAU, QUAD_TOL) / self.z_outer).clamp(0.0, 1.0)
            }
        }
    }

    /// q(θ) from the tabulated primitive; agrees with [`Self::value`] to about 1e-12.
    pub fn eval(&self, theta: f64) -> f64 {
        match self.locate(theta) {
            Branch::A => 0.0,
            Branch::B => 1.0,
            Branch::Inner(t) => (self.inner.eval(t) / self.z_inner).clamp(0.0, 1.0),
            Branch::Outer(t) => (1.0 - self.outer.eval(t) / self.z_outer).clamp(0.0, 1.0),
        }
    }

    /// q′(θ); zero inside A and B.
    pub fn derivative(&self, theta: f64) -> f64 {
        let w = |t: f64| (self.sys.beta * circle_potential(t)).exp();
        match self.locate(theta) {
            Branch::A | Branch::B => 0.0,
            Branch::Inner(t) => w(t) / self.z_inner,
            Branch::Outer(t) => -w(t) / self.z_outer,
        }
    }
}

enum Branch {
    A,
    B,
    Inner(f64),
    Outer(f64),
}

/// Uniform grid on a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(invalid("grid", "need at least 3 nodes per axis"));
        }
        if !(x_range.0 < x_range.1 && y_range.0 < y_range.1) {
            return Err(invalid("grid", "ranges must be increasing"));
        }
        Ok(Self {
            x_range,
            y_range,
            nx,
            ny,
        })
    }

    /// Bounding box of {V ≤ cutoff} (clipped to the system walls) found by a
    /// 801×801 scan of `search`, widened by 5% on each side.
    pub fn auto_fit(
        sys: &PotentialSystem,
        cutoff: f64,
        search: ((f64, f64), (f64, f64)),
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if sys.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: sys.dim(),
            });
        }
        let clip = |r: (f64, f64), k: usize| match sys.walls()[k] {
            Some((lo, hi)) => (r.0.max(lo), r.1.min(hi)),
            None => r,
        };
        let (sx, sy) = (clip(search.0, 0), clip(search.1, 1));
        let m = 801;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..m {
            let x = sx.0 + (sx.1 - sx.0) * i as f64 / (m - 1) as f64;
            for j in 0..m {
                let y = sy.0 + (sy.1 - sy.0) * j as f64 / (m - 1) as f64;
                if sys.value(&[x, y]) <= cutoff {
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
        }
        if !x0.is_finite() {
            return Err(invalid("cutoff", "no grid point satisfies V <= cutoff"));
        }
        let (mx, my) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
        let wx = clip((x0 - mx, x1 + mx), 0);
        let wy = clip((y0 - my, y1 + my), 1);
        Self::new(wx, wy, nx, ny)
    }

    pub fn hx(&self) -> f64 {
        (self.x_range.1 - self.x_range.0) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / (self.ny - 1) as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x_range.0 + self.hx() * i as f64,
            self.y_range.0 + self.hy() * j as f64,
        ]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Inactive,
    Free,
    Dirichlet,
}

/// Finite-difference solution on a masked grid.
#[derive(Debug, Clone)]
pub struct FdField {
    pub grid: Grid2D,
    pub kind: Vec<NodeKind>,
    /// Values at every node; NaN on inactive nodes.
    pub values: Vec<f64>,
    pub potential: Vec<f64>,
    pub beta: f64,
    pub residual: f64,
    /// Active nodes dropped because their component has no Dirichlet node.
    pub dropped_nodes: usize,
}

/// Solves β⁻¹e^{βV}∇·(e^{−βV}∇q) = 0 on `{V ≤ cutoff}` inside the walls with
/// Dirichlet data from `dirichlet` and zero flux across the mask boundary.
///
/// The scheme is the five-point flux form with face weights
/// exp(−β(V_C + V_N)/2); the resulting matrix is a symmetric M-matrix.
pub fn fd_solve_2d(
    sys: &PotentialSystem,
    grid: &Grid2D,
    cutoff: f64,
    dirichlet: impl Fn(&[f64; 2]) -> Option<f64>,
    require_connection: Option<(f64, f64)>,
) -> Result<FdField> {
    if sys.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: sys.dim(),
        });
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let n = grid.len();
    let beta = sys.beta();
    let mut kind = vec![NodeKind::Inactive; n];
    let mut values = vec![f64::NAN; n];
    let mut potential = vec![f64::INFINITY; n];
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.node(i, j);
            let k = grid.index(i, j);
            let v = sys.value(&p);
            potential[k] = v;
            if let Some(g) = dirichlet(&p) {
                kind[k] = NodeKind::Dirichlet;
                values[k] = g;
            } else if v <= cutoff && sys.inside_walls(&p) {
                kind[k] = NodeKind::Free;
            }
        }
    }
    let neighbors = |k: usize| {
        let (i, j) = (k % nx, k / nx);
        let mut out = [usize::MAX; 4];
        if i > 0 {
            out[0] = k - 1;
        }
        if i + 1 < nx {
            out[1] = k + 1;
        }
        if j > 0 {
            out[2] = k - nx;
        }
        if j + 1 < ny {
            out[3] = k + nx;
        }
        out
    };
    // Drop components without Dirichlet nodes; check that A and B connect.
    let mut comp = vec![usize::MAX; n];
    let mut dropped_nodes = 0;
    let mut connected = require_connection.is_none();
    let mut queue = VecDeque::new();
    let mut next_id = 0;
    for start in 0..n {
        if kind[start] == NodeKind::Inactive || comp[start] != usize::MAX {
            continue;
        }
        let id = next_id;
        next_id += 1;
        comp[start] = id;
        queue.push_back(start);
        let mut members = Vec::new();
        let mut seen_values = (false, false);
        while let Some(k) = queue.pop_front() {
            members.push(k);
            if kind[k] == NodeKind::Dirichlet {
                if let Some((ga, gb)) = require_connection {
                    seen_values.0 |= values[k] == ga;
                    seen_values.1 |= values[k] == gb;
                }
            }
            for m in neighbors(k) {
                if m != usize::MAX && kind[m] != NodeKind::Inactive && comp[m] == usize::MAX {
                    comp[m] = id;
                    queue.push_back(m);
                }
            }
        }
        if seen_values.0 && seen_values.1 {
            connected = true;
        }
        if !members.iter().any(|&k| kind[k] == NodeKind::Dirichlet) {
            dropped_nodes += members.len();
            for k in members {
                kind[k] = NodeKind::Inactive;
            }
        }
    }
    if !connected {
        return Err(Error::DisconnectedDomain);
    }
    let mut unknown = vec![usize::MAX; n];
    let mut free = Vec::new();
    for k in 0..n {
        if kind[k] == NodeKind::Free {
            unknown[k] = free.len();
            free.push(k);
        }
    }
    let (hx2, hy2) = (grid.hx().powi(2), grid.hy().powi(2));
    let face = |a: usize, b: usize| (-beta * 0.5 * (potential[a] + potential[b])).exp();
    let mut rows = Vec::with_capacity(free.len());
    let mut rhs = Vec::with_capacity(free.len());
    for &k in &free {
        let mut row = Vec::with_capacity(5);
        let mut diag = 0.0;
        let mut b = 0.0;
        for (dir, m) in neighbors(k).into_iter().enumerate() {
            if m == usize::MAX || kind[m] == NodeKind::Inactive {
                continue;
            }
            let w = face(k, m) / if dir < 2 { hx2 } else { hy2 };
            diag += w;
            match kind[m] {
                NodeKind::Free => row.push((unknown[m] as u32, -w)),
                NodeKind::Dirichlet => b += w * values[m],
                NodeKind::Inactive => unreachable!(),
            }
        }
        row.push((unknown[k] as u32, diag));
        rows.push(row);
        rhs.push(b);
    }
    let a = CsrMatrix::from_rows(free.len(), rows);
    let SolveOutcome { x, residual, .. } = solve_cholesky(&a, &rhs, DEFAULT_TOL)?;
    for (&k, &u) in free.iter().zip(&x) {
        values[k] = u;
    }
    Ok(FdField {
        grid: *grid,
        kind,
        values,
        potential,
        beta,
        residual,
        dropped_nodes,
    })
}

/// Committor with q = 0 on the closed ball around `a_center` and 1 around `b_center`.
pub fn fd_committor_2d(
    sys: &PotentialSystem,
    grid: &Grid2D,
    cutoff: f64,
    a_center: [f64; 2],
    b_center: [f64; 2],
    radius: f64,
) -> Result<FdField> {
    let h = grid.hx().max(grid.hy());
    if 2.0 * radius < 4.0 * h {
        return Err(invalid(
            "grid",
            format!("spacing {h:.4} does not resolve balls of radius {radius} with 4 cells"),
        ));
    }
    let r2 = radius * radius;
    let inside = |p: &[f64; 2], c: &[f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= r2;
    fd_solve_2d(
        sys,
        grid,
        cutoff,
        |p| {
            if inside(p, &a_center) {
                Some(0.0)
            } else if inside(p, &b_center) {
                Some(1.0)
            } else {
                None
            }
        },
        Some((0.0, 1.0)),
    )
}

impl FdField {
    pub fn is_active(&self, k: usize) -> bool {
        self.kind[k] != NodeKind::Inactive
    }

    /// Bilinear interpolation renormalized over the active corners of the
    /// enclosing cell. `None` outside the grid or when no corner is active.
    pub fn interpolate(&self, p: &[f64]) -> Option<f64> {
        let g = &self.grid;
        let sx = (p[0] - g.x_range.0) / g.hx();
        let sy = (p[1] - g.y_range.0) / g.hy();
        if !(sx >= 0.0 && sy >= 0.0 && sx <= (g.nx - 1) as f64 && sy <= (g.ny - 1) as f64) {
            return None;
        }
        let i = (sx.floor() as usize).min(g.nx - 2);
        let j = (sy.floor() as usize).min(g.ny - 2);
        let (u, v) = (sx - i as f64, sy - j as f64);
        let corners = [
            (g.index(i, j), (1.0 - u) * (1.0 - v)),
            (g.index(i + 1, j), u * (1.0 - v)),
            (g.index(i, j + 1), (1.0 - u) * v),
            (g.index(i + 1, j + 1), u * v),
        ];
        let (mut s, mut w) = (0.0, 0.0);
        for (k, c) in corners {
            if self.is_active(k) {
                s += c * self.values[k];
                w += c;
            }
        }
        (w > 0.0).then(|| s / w)
    }

    /// Self-normalized Gibbs quadrature over the active nodes:
    /// returns (ρ_A, ν_AB) with ρ_A = ∫(1 − q)μ and ν_AB = β⁻¹∫‖∇q‖²μ.
    pub fn tpt_quadrature(&self) -> (f64, f64) {
        let g = &self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let mu = |k: usize| (-self.beta * self.potential[k]).exp();
        let mut mass = 0.0;
        let mut rho_a = 0.0;
        let mut energy = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                if !self.is_active(k) {
                    continue;
                }
                mass += mu(k);
                rho_a += (1.0 - self.values[k]) * mu(k);
                for (m, h) in [(i + 1 < g.nx).then(|| (k + 1, hx)), (j + 1 < g.ny).then(|| (k + g.nx, hy))]
                    .into_iter()
                    .flatten()
                {
                    if self.is_active(m) {
                        let w = (-self.beta * 0.5 * (self.potential[k] + self.potential[m])).exp();
                        energy += w * ((self.values[m] - self.values[k]) / h).powi(2);
                    }
                }
            }
        }
        (rho_a / mass, energy / (self.beta * mass))
    }

    /// Grid dump with columns `x,y,q,active`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,q,active\n");
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let k = self.grid.index(i, j);
                let p = self.grid.node(i, j);
                s.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{}\n",
                    p[0],
                    p[1],
                    self.values[k],
                    u8::from(self.is_active(k))
                ));
            }
        }
        s
    }
}

/// (Σ|a_i − b_i|²)^{1/2}, without the 1/n.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// rmse / √n.
pub fn rmse_normalized(a: &[f64], b: &[f64]) -> Result<f64> {
    let r = rmse(a, b)?;
    Ok(if a.is_empty() { 0.0 } else { r / (a.len() as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    use crate::potentials::Flat;

    #[test]
    fn circle_committor_anchor_values() {
        let cs = CircleSystem::default();
        let q = CircleCommittor::new(cs).unwrap();
        assert_eq!(q.value(cs.theta1 + cs.r), 0.0);
        assert!((q.value(cs.theta2 - cs.r) - 1.0).abs() < 1e-12);
        assert!((q.value(PI) - 0.5).abs() < 1e-6);
        assert_eq!(q.value(cs.theta1), 0.0);
        assert_eq!(q.value(cs.theta2), 1.0);
        assert!((q.value(cs.theta2 + cs.r) - 1.0).abs() < 1e-12);
        assert!(q.value(cs.theta1 - cs.r).abs() < 1e-12);
    }

    #[test]
    fn circle_committor_is_monotone_on_inner_arc() {
        let cs = CircleSystem::default();
        let q = CircleCommittor::new(cs).unwrap();
        let (a, b) = (cs.theta1 + cs.r, cs.theta2 - cs.r);
        let mut prev = -1.0;
        for k in 0..1000 {
            let v = q.value(a + (b - a) * k as f64 / 999.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn table_matches_quadrature() {
        let q = CircleCommittor::new(CircleSystem::default()).unwrap();
        for k in 0..400 {
            let t = TAU * k as f64 / 400.0;
            assert!((q.eval(t) - q.value(t)).abs() < 1e-11, "theta {t}");
        }
    }

    #[test]
    fn flat_strip_is_linear() {
        let sys = PotentialSystem::new(Arc::new(Flat { dim: 2 }), 1.0).unwrap();
        let grid = Grid2D::new((0.0, 1.0), (0.0, 0.5), 201, 101).unwrap();
        let f = fd_solve_2d(
            &sys,
            &grid,
            1.0,
            |p| {
                if p[0] <= 0.05 + 1e-12 {
                    Some(0.0)
                } else if p[0] >= 0.95 - 1e-12 {
                    Some(1.0)
                } else {
                    None
                }
            },
            Some((0.0, 1.0)),
        )
        .unwrap();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let x = grid.node(i, j)[0];
                let want = ((x - 0.05) / 0.9).clamp(0.0, 1.0);
                assert!((f.values[grid.index(i, j)] - want).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn disconnected_sets_are_rejected() {
        let sys = PotentialSystem::new(Arc::new(Flat { dim: 2 }), 1.0).unwrap();
        let grid = Grid2D::new((0.0, 1.0), (0.0, 1.0), 21, 21).unwrap();
        // A negative cutoff deactivates every free node, leaving A and B apart.
        let r =fd_solve_2d(&sys, &grid, -1.0, |p| (p[0] < 0.1).then_some(0.0).or((p[0] > 0.9).then_some(1.0)), Some((0.0, 1.0)));
        assert!(matches!(r, Err(Error::DisconnectedDomain)));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let n = 9;
        let a = vec![0.5; n];
        let b = vec![0.2; n];
        assert!((rmse(&a, &b).unwrap() - 0.3 * 3.0).abs() < 1e-12);
        assert!((rmse_normalized(&a, &b).unwrap() - 0.3).abs() < 1e-12);
        assert!((rmse(&[0.0, 0.3, 1.0], &[0.0, 0.0, 1.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!(rmse(&[0.0], &[]).is_err());
    }
}
