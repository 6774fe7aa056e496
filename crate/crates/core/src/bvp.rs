//! Dirichlet boundary-value problems on a generator, the committor problem in
//! particular.
//!
//! With `L = (P − I)/ε` the problem `s·L^{II} u = f − s·L^{ID} g` is solved as
//! `(P − I)^{II} u = (ε/s) f − P^{ID} g`, which has the same solution and the
//! same relative residual.

use serde::{Deserialize, Serialize};

use crate::cloud::{squared_distance, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::generator::GeneratorBundle;
use crate::linsolve::{solve, SolverKind, SolverOptions};
use crate::potentials::CircleSystem;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    A,
    B,
    Interior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvpProblem {
    pub n: usize,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    /// Boundary values, aligned with `boundary`.
    pub g: Vec<f64>,
    /// Right-hand side, aligned with `interior`.
    pub rhs: Vec<f64>,
    /// Factor in front of the generator, 4β⁻¹ in the Langevin setting.
    pub scale: f64,
}

impl BvpProblem {
    pub fn new(
        n: usize,
        boundary: Vec<(usize, f64)>,
        rhs: Option<Vec<f64>>,
        scale: f64,
    ) -> Result<Self> {
        let mut is_boundary = vec![false; n];
        for &(i, _) in &boundary {
            if i >= n {
                return Err(invalid("boundary", format!("index {i} out of range for {n} points")));
            }
            if is_boundary[i] {
                return Err(invalid("boundary", format!("index {i} listed twice")));
            }
            is_boundary[i] = true;
        }
        let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
        let rhs = rhs.unwrap_or_else(|| vec![0.0; interior.len()]);
        let p = Self {
            n,
            interior,
            boundary: boundary.iter().map(|b| b.0).collect(),
            g: boundary.iter().map(|b| b.1).collect(),
            rhs,
            scale,
        };
        p.validate()?;
        Ok(p)
    }

    /// Committor data: g = 0 on A, g = 1 on B, f = 0.
    pub fn committor(labels: &[Region], scale: f64) -> Result<Self> {
        let boundary = labels
            .iter()
            .enumerate()
            .filter_map(|(i, r)| match r {
                Region::A => Some((i, 0.0)),
                Region::B => Some((i, 1.0)),
                Region::Interior => None,
            })
            .collect();
        Self::new(labels.len(), boundary, None, scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundary.is_empty() {
            return Err(Error::EmptyBoundary { set: "boundary" });
        }
        if self.g.len() != self.boundary.len() {
            return Err(Error::DimensionMismatch {
                expected: self.boundary.len(),
                found: self.g.len(),
            });
        }
        if self.rhs.len() != self.interior.len() {
            return Err(Error::DimensionMismatch {
                expected: self.interior.len(),
                found: self.rhs.len(),
            });
        }
        if self.interior.len() + self.boundary.len() != self.n {
            return Err(invalid("partition", "interior and boundary must cover every point"));
        }
        let mut seen = vec![false; self.n];
        for &i in self.interior.iter().chain(&self.boundary) {
            if i >= self.n || seen[i] {
                return Err(invalid("partition", "interior and boundary must be disjoint"));
            }
            seen[i] = true;
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid("scale", "must be positive"));
        }
        if self.g.iter().chain(&self.rhs).any(|v| !v.is_finite()) {
            return Err(invalid("data", "boundary values and right-hand side must be finite"));
        }
        Ok(())
    }

    /// Same problem with boundary values g ↦ 1 − g.
    pub fn swapped(&self) -> Self {
        let mut p = self.clone();
        p.g.iter_mut().for_each(|v| *v = 1.0 - *v);
        p
    }
}

/// Closed balls of `radius` around the two centers.
pub fn classify_ab(
    cloud: &PointCloud,
    a_center: &[f64],
    b_center: &[f64],
    radius: f64,
) -> Result<Vec<Region>> {
    if a_center.len() != cloud.dim() || b_center.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: a_center.len().max(b_center.len()),
        });
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius", "must be positive"));
    }
    if a_center == b_center {
        return Err(invalid("centers", "A and B centers must differ"));
    }
    let r2 = radius * radius;
    let labels = cloud
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let in_a = squared_distance(p, a_center) <= r2;
            let in_b = squared_distance(p, b_center) <= r2;
            match (in_a, in_b) {
                (true, true) => Err(Error::OverlappingSets { index: i }),
                (true, false) => Ok(Region::A),
                (false, true) => Ok(Region::B),
                (false, false) => Ok(Region::Interior),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    require_both(&labels)?;
    Ok(labels)
}

/// Arc membership A = [θ₁ − r, θ₁ + r], B = [θ₂ − r, θ₂ + r] in wrapped angle.
pub fn classify_circle_arcs(thetas: &[f64], sys: &CircleSystem) -> Result<Vec<Region>> {
    sys.validate()?;
    let labels: Vec<Region> = thetas
        .iter()
        .map(|&t| {
            if sys.in_a(t) {
                Region::A
            } else if sys.in_b(t) {
                Region::B
            } else {
                Region::Interior
            }
        })
        .collect();
    require_both(&labels)?;
    Ok(labels)
}

fn require_both(labels: &[Region]) -> Result<()> {
    if !labels.contains(&Region::A) {
        return Err(Error::EmptyBoundary { set: "A" });
    }
    if !labels.contains(&Region::B) {
        return Err(Error::EmptyBoundary { set: "B" });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub values: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub solver: SolverKind,
}

/// The interior block `(P − I)^{II}` and right-hand side of the reduced system.
pub fn reduced_system(bundle: &GeneratorBundle, problem: &BvpProblem) -> Result<(CsrMatrix, Vec<f64>)> {
    problem.validate()?;
    if problem.n != bundle.n() {
        return Err(Error::DimensionMismatch {
            expected: bundle.n(),
            found: problem.n,
        });
    }
    let mut local = vec![u32::MAX; problem.n];
    for (k, &i) in problem.interior.iter().enumerate() {
        local[i] = k as u32;
    }
    let mut gval = vec![0.0; problem.n];
    for (&i, &g) in problem.boundary.iter().zip(&problem.g) {
        gval[i] = g;
    }
    let m = problem.interior.len();
    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut rhs = Vec::with_capacity(m);
    row_ptr.push(0);
    let f_factor = bundle.epsilon / problem.scale;
    for (k, &i) in problem.interior.iter().enumerate() {
        let (c, v) = bundle.p.row(i);
        let mut b = f_factor * problem.rhs[k];
        let mut diag_seen = false;
        for (&j, &p) in c.iter().zip(v) {
            let j = j as usize;
            let lj = local[j];
            if lj == u32::MAX {
                b -= p * gval[j];
                continue;
            }
            if !diag_seen && lj as usize > k {
                cols.push(k as u32);
                vals.push(-1.0);
                diag_seen = true;
            }
            cols.push(lj);
            if j == i {
                vals.push(p - 1.0);
                diag_seen = true;
            } else {
                vals.push(p);
            }
        }
        if !diag_seen {
            cols.push(k as u32);
            vals.push(-1.0);
        }
        row_ptr.push(cols.len());
        rhs.push(b);
    }
    Ok((CsrMatrix::from_parts(m, m, row_ptr, cols, vals), rhs))
}

pub fn solve_dirichlet(bundle: &GeneratorBundle, problem: &BvpProblem) -> Result<FieldSolution> {
    solve_dirichlet_with(bundle, problem, &SolverOptions::default())
}

pub fn solve_dirichlet_with(
    bundle: &GeneratorBundle,
    problem: &BvpProblem,
    opts: &SolverOptions,
) -> Result<FieldSolution> {
    let (a, b) = reduced_system(bundle, problem)?;
    let mut values = vec![0.0; problem.n];
    for (&i, &g) in problem.boundary.iter().zip(&problem.g) {
        values[i] = g;
    }
    if a.nrows() == 0 {
        return Ok(FieldSolution {
            values,
            residual_norm: 0.0,
            iterations: 0,
            solver: SolverKind::Trivial,
        });
    }
    let out = solve(&a, &b, opts)?;
    for (&i, &u) in problem.interior.iter().zip(&out.x) {
        values[i] = u;
    }
    Ok(FieldSolution {
        values,
        residual_norm: out.residual,
        iterations: out.iterations,
        solver: out.solver,
    })
}

/// Relative residual of `s·L^{II}u = f − s·L^{ID}g` computed from `L` itself.
pub fn recompute_residual(bundle: &GeneratorBundle, problem: &BvpProblem, values: &[f64]) -> f64 {
    let mut is_interior = vec![false; problem.n];
    for &i in &problem.interior {
        is_interior[i] = true;
    }
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for (k, &i) in problem.interior.iter().enumerate() {
        let (c, v) = bundle.l.row(i);
        let mut lhs = 0.0;
        let mut rhs = problem.rhs[k];
        for (&j, &l) in c.iter().zip(v) {
            let j = j as usize;
            if is_interior[j] {
                lhs += problem.scale * l * values[j];
            } else {
                rhs -= problem.scale * l * values[j];
            }
        }
        r2 += (lhs - rhs) * (lhs - rhs);
        b2 += rhs * rhs;
    }
    if b2 > 0.0 {
        (r2 / b2).sqrt()
    } else {
        r2.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximumPrincipleReport {
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    /// Index with the largest excursion outside [lower, upper], if any.
    pub worst_index: Option<usize>,
    pub worst_violation: f64,
}

impl MaximumPrincipleReport {
    pub fn holds(&self) -> bool {
        self.worst_index.is_none()
    }
}

pub const MAX_PRINCIPLE_TOL: f64 = 1e-8;

/// Checks min g − tol ≤ u_i ≤ max g + tol for every point.
pub fn check_maximum_principle(problem: &BvpProblem, solution: &FieldSolution, tol: f64) -> MaximumPrincipleReport {
    let lower = problem.g.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = problem.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut worst_index = None;
    let mut worst_violation = 0.0;
    for (i, &u) in solution.values.iter().enumerate() {
        let excess = (lower - u).max(u - upper);
        if excess > tol && excess > worst_violation || !u.is_finite() && worst_index.is_none() {
            worst_violation = if u.is_finite() { excess } else { f64::INFINITY };
            worst_index = Some(i);
        }
    }
    MaximumPrincipleReport {
        lower,
        upper,
        tol,
        worst_index,
        worst_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::build_tmdmap;
    use crate::kernel::{build_kernel, kde};

    fn chain_bundle() -> GeneratorBundle {
        let c = PointCloud::from_rows(&[[0.0], [0.3], [0.5]]).unwrap();
        let k = build_kernel(&c, 0.2, 0.0).unwrap();
        build_tmdmap(&k, &kde(&k), &[1.0, 0.7, 0.4]).unwrap()
    }

    #[test]
    fn single_unknown_elimination() {
        let b = chain_bundle();
        let p = BvpProblem::new(3, vec![(0, 0.0), (2, 1.0)], None, 4.0).unwrap();
        let s = solve_dirichlet(&b, &p).unwrap();
        let want = -b.l.get(1, 2) / b.l.get(1, 1);
        assert!((s.values[1] - want).abs() < 1e-14);
        assert_eq!((s.values[0], s.values[2]), (0.0, 1.0));
        assert!(recompute_residual(&b, &p, &s.values) < 1e-12);
    }

    #[test]
    fn empty_interior_returns_boundary_data() {
        let b = chain_bundle();
        let p = BvpProblem::new(3, vec![(0, 0.2), (1, 0.5), (2, 0.9)], None, 1.0).unwrap();
        let s = solve_dirichlet(&b, &p).unwrap();
        assert_eq!(s.values, vec![0.2, 0.5, 0.9]);
        assert_eq!(s.solver, SolverKind::Trivial);
    }

    #[test]
    fn general_rhs_uses_scale() {
        let b = chain_bundle();
        let f = 0.7;
        let p = BvpProblem::new(3, vec![(0, 0.0), (2, 1.0)], Some(vec![f]), 2.0).unwrap();
        let s = solve_dirichlet(&b, &p).unwrap();
        // 2·(L11 u + L12·1) = f
        let want = (f / 2.0 - b.l.get(1, 2)) / b.l.get(1, 1);
        assert!((s.values[1] - want).abs() < 1e-13);
        assert!(recompute_residual(&b, &p, &s.values) < 1e-12);
    }

    #[test]
    fn problem_validation() {
        assert!(BvpProblem::new(3, vec![], None, 1.0).is_err());
        assert!(BvpProblem::new(3, vec![(0, 0.0), (0, 1.0)], None, 1.0).is_err());
        assert!(BvpProblem::new(3, vec![(5, 0.0)], None, 1.0).is_err());
        assert!(BvpProblem::new(3, vec![(0, 0.0)], Some(vec![1.0]), 1.0).is_err());
        assert!(BvpProblem::new(3, vec![(0, 0.0)], None, 0.0).is_err());
    }

    #[test]
    fn ball_classification() {
        let c = PointCloud::from_rows(&[[0.0, 0.0], [1.125, 0.0], [0.5, 0.5], [1.0, 0.0]]).unwrap();
        let l = classify_ab(&c, &[0.0, 0.0], &[1.0, 0.0], 0.125).unwrap();
        assert_eq!(l, vec![Region::A, Region::B, Region::Interior, Region::B]);
        assert!(matches!(
            classify_ab(&c, &[0.0, 0.0], &[0.05, 0.0], 0.1),
            Err(Error::OverlappingSets { index: 0 })
        ));
        assert!(matches!(
            classify_ab(&c, &[0.0, 0.0], &[5.0, 5.0], 0.1),
            Err(Error::EmptyBoundary { set: "B" })
        ));
    }

    #[test]
    fn circle_arcs() {
        let cs = CircleSystem::default();
        let t = [cs.theta1 - 0.099, cs.theta2 + 0.1, std::f64::consts::PI, 0.0];
        let l = classify_circle_arcs(&t, &cs).unwrap();
        assert_eq!(l, vec![Region::A, Region::B, Region::Interior, Region::Interior]);
    }

    #[test]
    fn maximum_principle_report() {
        let p = BvpProblem::new(4, vec![(0, 0.0), (3, 1.0)], None, 1.0).unwrap();
        let mut s = FieldSolution {
            values: vec![0.0, 0.4, 0.6, 1.0],
            residual_norm: 0.0,
            iterations: 0,
            solver: SolverKind::Trivial,
        };
        assert!(check_maximum_principle(&p, &s, 1e-8).holds());
        s.values[2] = 1.2;
        let r = check_maximum_principle(&p, &s, 1e-8);
        assert_eq!(r.worst_index, Some(2));
        assert!((r.worst_violation - 0.2).abs() < 1e-12);
    }
}
