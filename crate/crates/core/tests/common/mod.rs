//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmdmap::cloud::PointCloud;
use tmdmap::sparse::CsrMatrix;

pub fn uniform_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = PointCloud::new(dim);
    let mut p = vec![0.0; dim];
    for _ in 0..n {
        for x in p.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        c.push(&p);
    }
    c
}

/// Dense P of TMDmap straight from the definitions, all pairs kept.
pub fn dense_tmdmap_p(cloud: &PointCloud, eps: f64, mu: &[f64]) -> Vec<Vec<f64>> {
    dense_p(cloud, eps, |rho, j| mu[j].sqrt() / rho)
}

/// Dense P of the α-normalized diffusion map.
pub fn dense_dmap_p(cloud: &PointCloud, eps: f64, alpha: f64) -> Vec<Vec<f64>> {
    dense_p(cloud, eps, |rho, _| rho.powf(-alpha))
}

fn dense_p(cloud: &PointCloud, eps: f64, col: impl Fn(f64, usize) -> f64) -> Vec<Vec<f64>> {
    let n = cloud.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d2: f64 = cloud.point(i).iter().zip(cloud.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / eps).exp()
                })
                .collect()
        })
        .collect();
    let rho: Vec<f64> = k.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..n).map(|j| col(rho[j], j)).collect();
    k.iter()
        .map(|r| {
            let w: Vec<f64> = r.iter().zip(&scale).map(|(a, s)| a * s).collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(|v| v / t).collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &CsrMatrix, dense: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in dense.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((a.get(i, j) - v).abs());
        }
    }
    m
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
