//! Least-squares fits and scalar root finding / minimization.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Polynomial least-squares fit y ≈ Σ_k c_k x^k with coefficient standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub dof: usize,
}

impl PolyFit {
    /// Two-sided 95% confidence interval of coefficient `k`.
    pub fn confidence_95(&self, k: usize) -> (f64, f64) {
        let t = student_t_975(self.dof);
        let c = self.coefficients[k];
        let h = t * self.std_errors[k];
        (c - h, c + h)
    }
}

/// 97.5% quantile of Student's t with `dof` degrees of freedom.
pub fn student_t_975(dof: usize) -> f64 {
    const T: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    match dof {
        0 => f64::INFINITY,
        1..=30 => T[dof - 1],
        31..=60 => 2.000 + (2.042 - 2.000) * (60 - dof) as f64 / 30.0,
        _ => 1.960,
    }
}

/// Solves the symmetric positive definite system `a x = b` (row-major) by Cholesky.
fn spd_solve(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn chol_apply_inverse(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

pub fn poly_fit(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    let m = degree + 1;
    if x.len() != y.len() {
        return Err(invalid("fit", "x and y lengths differ"));
    }
    if x.len() < m {
        return Err(invalid("fit", format!("need at least {m} points")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("fit", "values must be finite"));
    }
    // Work in u = (x − shift)/scale for conditioning, then map back.
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift = 0.5 * (lo + hi);
    let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let u: Vec<f64> = x.iter().map(|v| (v - shift) / scale).collect();
    let mut ata = vec![0.0; m * m];
    let mut aty = vec![0.0; m];
    for (&ui, &yi) in u.iter().zip(y) {
        let pw: Vec<f64> = (0..m).map(|k| ui.powi(k as i32)).collect();
        for r in 0..m {
            aty[r] += pw[r] * yi;
            for c in 0..m {
                ata[r * m + c] += pw[r] * pw[c];
            }
        }
    }
    let l = spd_solve(&ata, m).ok_or_else(|| invalid("fit", "x values do not determine the polynomial"))?;
    let mut cu = aty;
    chol_apply_inverse(&l, m, &mut cu);
    let residuals: Vec<f64> = u
        .iter()
        .zip(y)
        .map(|(&ui, &yi)| yi - (0..m).map(|k| cu[k] * ui.powi(k as i32)).sum::<f64>())
        .collect();
    let dof = x.len() - m;
    let sigma2 = if dof > 0 {
        residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64
    } else {
        0.0
    };
    // Coefficients in x: c_x = T c_u where x^k terms come from expanding ((x − s)/h)^j.
    let mut t = vec![0.0; m * m];
    for j in 0..m {
        for k in 0..=j {
            let binom = (0..k).fold(1.0, |acc, i| acc * (j - i) as f64 / (i + 1) as f64);
            t[k * m + j] = binom * (-shift).powi((j - k) as i32) / scale.powi(j as i32);
        }
    }
    let coefficients: Vec<f64> = (0..m).map(|k| (0..m).map(|j| t[k * m + j] * cu[j]).sum()).collect();
    // Var(c_x) = σ² T (AᵀA)⁻¹ Tᵀ.
    let mut std_errors = Vec::with_capacity(m);
    for k in 0..m {
        let mut row: Vec<f64> = (0..m).map(|j| t[k * m + j]).collect();
        let orig = row.clone();
        chol_apply_inverse(&l, m, &mut row);
        let var: f64 = orig.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>() * sigma2;
        std_errors.push(var.max(0.0).sqrt());
    }
    Ok(PolyFit {
        coefficients,
        std_errors,
        residuals,
        dof,
    })
}

/// Fits y = c·x^p by least squares on (ln x, ln y); returns (c, p).
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(invalid("fit", "power-law fit needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let f = poly_fit(&lx, &ly, 1)?;
    Ok((f.coefficients[0].exp(), f.coefficients[1]))
}

/// Root of `f` on [a, b] by bisection; `f(a)` and `f(b)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(invalid("bracket", format!("f does not change sign on [{a}, {b}]")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Minimizer of `f` on [a, b] by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_polynomials_are_recovered() {
        let x: Vec<f64> = (0..10).map(|k| 0.023 + 0.001 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 - 1.5 * v + 4.0 * v * v).collect();
        let f = poly_fit(&x, &y, 2).unwrap();
        assert!((f.coefficients[0] - 0.3).abs() < 1e-9);
        assert!((f.coefficients[1] + 1.5).abs() < 1e-7);
        assert!((f.coefficients[2] - 4.0).abs() < 1e-5);
        let lin = poly_fit(&x, &x.iter().map(|v| 2.0 + 3.0 * v).collect::<Vec<_>>(), 1).unwrap();
        assert!((lin.coefficients[1] - 3.0).abs() < 1e-10);
        assert!(poly_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn standard_error_of_slope() {
        // Hand-computed: x = 0..4, y = [0, 1, 1, 3, 4] gives slope 1, residual
        // sum of squares 0.8 on 3 dof, se = sqrt(σ²/Σ(x−x̄)²) = sqrt(0.8/3/10).
        let f = poly_fit(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, 1.0, 3.0, 4.0], 1).unwrap();
        assert!((f.coefficients[1] - 1.0).abs() < 1e-12);
        assert!((f.std_errors[1] - (0.8 / 3.0 / 10.0f64).sqrt()).abs() < 1e-12);
        let (lo, hi) = f.confidence_95(1);
        assert!((hi - lo - 2.0 * 3.182 * f.std_errors[1]).abs() < 1e-12);
    }

    #[test]
    fn power_law() {
        let x = [0.02, 0.01, 0.005, 0.002];
        let y: Vec<f64> = x.iter().map(|v: &f64| 0.5425 * v.powf(0.6509)).collect();
        let (c, p) = power_law_fit(&x, &y).unwrap();
        assert!((c - 0.5425).abs() < 1e-10 && (p - 0.6509).abs() < 1e-12);
    }

    #[test]
    fn roots_and_minima() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-14).is_err());
        let m = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-10);
        assert!((m - 0.3).abs() < 1e-8);
    }
}
