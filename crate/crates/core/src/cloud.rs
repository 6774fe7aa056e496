//! Point clouds and their CSV representation.
//!
//! A cloud is stored row-major: point `i` occupies `coords[i*dim..(i+1)*dim]`.
//! On disk a cloud is a CSV file with header `x1,...,xm` and one row per
//! point written with 17 significant digits, so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "point cloud dimension must be positive");
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        assert!(dim > 0, "point cloud dimension must be positive");
        Self {
            dim,
            coords: Vec::with_capacity(dim * n),
        }
    }

    /// Builds a cloud from flat row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(invalid(
                "coords",
                format!("length {} is not a multiple of {dim}", coords.len()),
            ));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(invalid(
                "coords",
                format!("non-finite coordinate in point {}", pos / dim),
            ));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        let mut coords = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::from_flat(dim, coords)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Appends a point. Panics when the length does not match the dimension.
    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "point has wrong dimension");
        self.coords.extend_from_slice(p);
    }

    /// The sub-cloud made of `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.push(self.point(i));
        }
        out
    }

    pub fn to_csv_string(&self) -> String {
        self.to_csv_with_values(None)
    }

    /// CSV with an optional trailing value column named `q`.
    pub fn to_csv_with_values(&self, values: Option<&[f64]>) -> String {
        let mut s = String::with_capacity(self.coords.len() * 25 + 16);
        for k in 0..self.dim {
            if k > 0 {
                s.push(',');
            }
            let _ = write!(s, "x{}", k + 1);
        }
        if values.is_some() {
            s.push_str(",q");
        }
        s.push('\n');
        for (i, p) in self.iter().enumerate() {
            for (k, c) in p.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{c:.16e}");
            }
            if let Some(v) = values {
                let _ = write!(s, ",{:.16e}", v[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_csv_string().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(parse_point_table(&text)?.cloud)
    }
}

/// A parsed CSV table: coordinate columns `x1..xm` and any extra named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    pub cloud: PointCloud,
    pub extra_names: Vec<String>,
    /// Row-major extra columns, `extra_names.len()` values per point.
    pub extra: Vec<f64>,
}

impl PointTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.extra_names.iter().position(|c| c == name)?;
        let w = self.extra_names.len();
        Some(self.extra.chunks_exact(w).map(|r| r[k]).collect())
    }
}

/// Parses a point CSV. The header must start with `x1,...,xm` (m >= 1);
/// further columns are kept as extras. Blank lines are skipped.
pub fn parse_point_table(text: &str) -> Result<PointTable> {
    parse_point_reader(text.as_bytes())
}

pub fn parse_point_reader(reader: impl BufRead) -> Result<PointTable> {
    let mut lines = reader.lines().enumerate();
    let (header_line, header) = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
            None => {
                return Err(Error::Parse {
                    line: 0,
                    message: "missing header".into(),
                })
            }
        }
    };
    let names: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let dim = names
        .iter()
        .enumerate()
        .take_while(|(k, c)| **c == format!("x{}", k + 1))
        .count();
    if dim == 0 {
        return Err(Error::Parse {
            line: header_line,
            message: "header must begin with column x1".into(),
        });
    }
    let extra_names = names[dim..].to_vec();
    let width = names.len();
    let mut coords = Vec::new();
    let mut extra = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (k, field) in line.split(',').enumerate() {
            if k >= width {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {width} fields"),
                });
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("cannot parse `{}` as a number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "non-finite value".into(),
                });
            }
            if k < dim {
                coords.push(v);
            } else {
                extra.push(v);
            }
            count += 1;
        }
        if count != width {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {width} fields, found {count}"),
            });
        }
    }
    Ok(PointTable {
        cloud: PointCloud { dim, coords },
        extra_names,
        extra,
    })
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_lossless() {
        let c = PointCloud::from_rows(&[[0.1, -2.0 / 3.0], [1e-300, 12345.678901234567]]).unwrap();
        let back = parse_point_table(&c.to_csv_string()).unwrap();
        assert_eq!(back.cloud, c);
        assert!(back.extra_names.is_empty());
    }

    #[test]
    fn extra_columns_are_kept() {
        let t = parse_point_table("x1,x2,q\n0,1,0.5\n2,3,1\n").unwrap();
        assert_eq!(t.cloud.dim(), 2);
        assert_eq!(t.column("q").unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(parse_point_table("").is_err());
        assert!(parse_point_table("y,x1\n1,2\n").is_err());
        assert!(parse_point_table("x1,x2\n1\n").is_err());
        assert!(parse_point_table("x1,x2\n1,2,3\n").is_err());
        assert!(parse_point_table("x1\nnan\n").is_err());
        assert!(parse_point_table("x1\nabc\n").is_err());
    }

    #[test]
    fn empty_body_gives_empty_cloud() {
        let t = parse_point_table("x1,x2,x3\n").unwrap();
        assert!(t.cloud.is_empty());
        assert_eq!(t.cloud.dim(), 3);
    }
}
