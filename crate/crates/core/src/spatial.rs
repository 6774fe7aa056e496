//! Uniform spatial hash grid for fixed-radius neighbor queries in 1 to 3
//! dimensions. Higher dimensions fall back to brute force.

use std::collections::HashMap;

use crate::cloud::{squared_distance, PointCloud};

/// Largest dimension served by the hash grid.
pub const MAX_GRID_DIM: usize = 3;

type Key = [i64; MAX_GRID_DIM];

fn cell_key(p: &[f64], inv_cell: f64) -> Key {
    let mut k = [0i64; MAX_GRID_DIM];
    for (slot, &c) in k.iter_mut().zip(p) {
        *slot = (c * inv_cell).floor() as i64;
    }
    k
}

/// Visits every key in the (2·reach+1)^dim block around `center`.
fn for_each_key_around(center: Key, dim: usize, reach: i64, mut f: impl FnMut(&Key)) {
    let span = 2 * reach + 1;
    let total = span.pow(dim as u32);
    for code in 0..total {
        let mut key = center;
        let mut c = code;
        for slot in key.iter_mut().take(dim) {
            *slot += c % span - reach;
            c /= span;
        }
        f(&key);
    }
}

/// Static grid over a point cloud.
#[derive(Debug, Clone)]
pub struct CellGrid {
    dim: usize,
    inv_cell: f64,
    /// Point indices grouped by cell.
    order: Vec<u32>,
    cells: HashMap<Key, (u32, u32)>,
}

impl CellGrid {
    /// Returns `None` when the dimension exceeds `MAX_GRID_DIM`.
    pub fn build(cloud: &PointCloud, cell: f64) -> Option<Self> {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let dim = cloud.dim();
        if dim > MAX_GRID_DIM {
            return None;
        }
        let inv_cell = 1.0 / cell;
        let mut keyed: Vec<(Key, u32)> = cloud
            .iter()
            .enumerate()
            .map(|(i, p)| (cell_key(p, inv_cell), i as u32))
            .collect();
        keyed.sort_unstable();
        let mut cells = HashMap::new();
        let mut start = 0;
        while start < keyed.len() {
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == keyed[start].0 {
                end += 1;
            }
            cells.insert(keyed[start].0, (start as u32, end as u32));
            start = end;
        }
        Some(Self {
            dim,
            inv_cell,
            order: keyed.into_iter().map(|(_, i)| i).collect(),
            cells,
        })
    }

    /// Calls `f(j)` for every point index `j` in cells that may hold points
    /// within `radius` of `p`. Callers filter by exact distance.
    pub fn for_each_candidate(&self, p: &[f64], radius: f64, mut f: impl FnMut(usize)) {
        let reach = (radius * self.inv_cell).ceil() as i64;
        let center = cell_key(p, self.inv_cell);
        for_each_key_around(center, self.dim, reach, |key| {
            if let Some(&(a, b)) = self.cells.get(key) {
                for &j in &self.order[a as usize..b as usize] {
                    f(j as usize);
                }
            }
        });
    }
}

/// Indices of all points of `cloud` within distance `radius` (inclusive) of `p`,
/// in increasing order.
pub fn neighbors_within(
    cloud: &PointCloud,
    grid: Option<&CellGrid>,
    p: &[f64],
    radius: f64,
) -> Vec<usize> {
    let r2 = radius * radius;
    let mut out = Vec::new();
    match grid {
        Some(g) => g.for_each_candidate(p, radius, |j| {
            if squared_distance(cloud.point(j), p) <= r2 {
                out.push(j);
            }
        }),
        None => {
            for (j, q) in cloud.iter().enumerate() {
                if squared_distance(q, p) <= r2 {
                    out.push(j);
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Incrementally filled grid, used by the greedy δ-net.
#[derive(Debug, Default)]
pub struct DynamicGrid {
    dim: usize,
    inv_cell: f64,
    cells: HashMap<Key, Vec<u32>>,
    points: Vec<f64>,
}

impl DynamicGrid {
    pub fn new(dim: usize, cell: f64) -> Self {
        assert!(dim <= MAX_GRID_DIM && dim > 0);
        Self {
            dim,
            inv_cell: 1.0 / cell,
            cells: HashMap::new(),
            points: Vec::new(),
        }
    }

    pub fn insert(&mut self, p: &[f64]) {
        let id = (self.points.len() / self.dim) as u32;
        self.points.extend_from_slice(p);
        self.cells.entry(cell_key(p, self.inv_cell)).or_default().push(id);
    }

    /// True when some stored point lies strictly closer than `radius` to `p`.
    /// Requires `radius <= cell size`.
    pub fn any_closer_than(&self, p: &[f64], radius: f64) -> bool {
        let r2 = radius * radius;
        let center = cell_key(p, self.inv_cell);
        let mut hit = false;
        for_each_key_around(center, self.dim, 1, |key| {
            if hit {
                return;
            }
            if let Some(ids) = self.cells.get(key) {
                hit = ids.iter().any(|&id| {
                    let q = &self.points[id as usize * self.dim..(id as usize + 1) * self.dim];
                    squared_distance(p, q) < r2
                });
            }
        });
        hit
    }
}
