//! n–ε scaling relations of the error model.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

use super::fit::bisect;

/// α = (2π)^{−d/4} √(ln n / (n ε^{4+d/2})).
pub fn variance_alpha(n: f64, eps: f64, d: f64) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(invalid("n", "must be at least 2"));
    }
    if !(eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    Ok((2.0 * PI).powf(-d / 4.0) * (n.ln() / (n * eps.powf(4.0 + d / 2.0))).sqrt())
}

/// ε with (2π)^{d/2} n / ln n = ε^{−4−d/2}, from the closed form.
pub fn neps_epsilon(n: f64, d: f64) -> Result<f64> {
    if !(n > 1.0) {
        return Err(invalid("n", "must exceed 1"));
    }
    Ok(((2.0 * PI).powf(d / 2.0) * n / n.ln()).powf(-1.0 / (4.0 + d / 2.0)))
}

/// Same ε found by bisection on ln α(n, ε) = 0 over ε ∈ [1e-8, 1e8].
pub fn neps_epsilon_by_root(n: f64, d: f64) -> Result<f64> {
    variance_alpha(n, 1.0, d)?;
    let g = |le: f64| variance_alpha(n, le.exp(), d).map(f64::ln).unwrap_or(f64::NAN);
    Ok(bisect(g, (1e-8f64).ln(), (1e8f64).ln(), 1e-14)?.exp())
}

/// n with n / ln n = coef·ε^{exponent}, by bisection on [10, 1e9] rounded to
/// the nearest integer.
pub fn schedule_n(eps: f64, coef: f64, exponent: f64) -> Result<usize> {
    if !(eps > 0.0 && coef > 0.0) {
        return Err(invalid("schedule", "eps and coef must be positive"));
    }
    let target = coef * eps.powf(exponent);
    let n = bisect(|n| n / n.ln() - target, 10.0, 1e9, 1e-9)?;
    Ok(n.round() as usize)
}

/// Points in a hexagonal patch of the triangular lattice with `rings` rings.
pub fn hexagon_point_count(rings: usize) -> usize {
    3 * rings * rings + 3 * rings + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_is_one_on_the_scaling_curve() {
        for &(n, d) in &[(1e4, 2.0), (1e5, 1.0), (3e3, 3.0)] {
            let e = neps_epsilon(n, d).unwrap();
            assert!((variance_alpha(n, e, d).unwrap() - 1.0).abs() < 1e-10);
            let r = neps_epsilon_by_root(n, d).unwrap();
            assert!((r - e).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_decreases_in_n() {
        for &e in &[0.01, 0.1, 1.0] {
            let a: Vec<f64> = (1..200).map(|k| variance_alpha(3.0 * k as f64, e, 2.0).unwrap()).collect();
            assert!(a.windows(2).all(|w| w[1] < w[0]));
        }
        assert!(variance_alpha(1.0, 0.1, 2.0).is_err());
    }

    #[test]
    fn schedule_matches_defining_relation() {
        for &e in &[0.023, 0.028, 0.033] {
            let n = schedule_n(e, 0.25, -2.5).unwrap() as f64;
            let t = 0.25 * e.powf(-2.5);
            assert!((n / n.ln() - t).abs() < 1.0);
        }
    }

    #[test]
    fn schedule_sizes_over_bias_grid() {
        let lo = schedule_n(0.033, 0.25, -2.5).unwrap();
        let hi = schedule_n(0.023, 0.25, -2.5).unwrap();
        assert!(lo >= 10_000 && hi <= 35_000, "{lo} {hi}");
        assert!(hi > 30_000);
    }

    #[test]
    fn hexagon_counts() {
        assert_eq!(hexagon_point_count(50), 7651);
        assert_eq!(hexagon_point_count(0), 1);
    }
}
