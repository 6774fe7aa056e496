//! Compressed sparse row matrices with sorted column indices.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw parts. Column indices must be strictly
    /// increasing within each row.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        vals: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(cols.len(), vals.len());
        assert_eq!(*row_ptr.last().unwrap(), cols.len());
        debug_assert!((0..nrows).all(|i| {
            let c = &cols[row_ptr[i]..row_ptr[i + 1]];
            c.windows(2).all(|w| w[0] < w[1]) && c.iter().all(|&j| (j as usize) < ncols)
        }));
        Self {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Builds a matrix from per-row `(col, value)` lists; each list is sorted here.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let nrows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self::from_parts(nrows, ncols, row_ptr, cols, vals)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts(n, n, (0..=n).collect(), (0..n as u32).collect(), vec![1.0; n])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&(j as u32)) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).0.binary_search(&(j as u32)).is_ok()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j as usize]).sum();
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j as usize] = a;
            }
        }
        d
    }

    /// True when the stored pattern and values are symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).all(|(&j, &a)| {
                    let (cj, vj) = self.row(j as usize);
                    matches!(cj.binary_search(&(i as u32)), Ok(k) if vj[k] == a)
                })
            })
    }

    /// Writes the matrix in Matrix Market coordinate real general format.
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, a)?;
            }
        }
        Ok(())
    }
}

/// Reads a Matrix Market coordinate real general file as written by
/// [`CsrMatrix::write_matrix_market`].
pub fn read_matrix_market(text: &str) -> Result<CsrMatrix> {
    let parse_err = |line: usize, message: &str| Error::Parse {
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().eq_ignore_ascii_case("%%MatrixMarket matrix coordinate real general") => {}
        _ => return Err(parse_err(1, "expected a coordinate real general header")),
    }
    let mut size = None;
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut expected = 0usize;
    let mut seen = 0usize;
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(i + 1, "expected three fields"));
        }
        match size {
            None => {
                let nr: usize = f[0].parse().map_err(|_| parse_err(i + 1, "bad row count"))?;
                let nc: usize = f[1].parse().map_err(|_| parse_err(i + 1, "bad column count"))?;
                expected = f[2].parse().map_err(|_| parse_err(i + 1, "bad entry count"))?;
                if nc > u32::MAX as usize || nr > (1 << 32) {
                    return Err(parse_err(i + 1, "matrix too large"));
                }
                rows = vec![Vec::new(); nr];
                size = Some((nr, nc));
            }
            Some((nr, nc)) => {
                let r: usize = f[0].parse().map_err(|_| parse_err(i + 1, "bad row index"))?;
                let c: usize = f[1].parse().map_err(|_| parse_err(i + 1, "bad column index"))?;
                let v: f64 = f[2].parse().map_err(|_| parse_err(i + 1, "bad value"))?;
                if r == 0 || r > nr || c == 0 || c > nc {
                    return Err(parse_err(i + 1, "index out of range"));
                }
                if rows[r - 1].iter().any(|e| e.0 as usize == c - 1) {
                    return Err(parse_err(i + 1, "duplicate entry"));
                }
                rows[r - 1].push(((c - 1) as u32, v));
                seen += 1;
            }
        }
    }
    let (_, nc) = size.ok_or_else(|| parse_err(0, "missing size line"))?;
    if seen != expected {
        return Err(parse_err(0, "entry count does not match size line"));
    }
    Ok(CsrMatrix::from_rows(nc, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_rows(
            3,
            vec![
                vec![(2, 3.0), (0, 1.0)],
                vec![],
                vec![(1, -0.5), (2, 2.0)],
            ],
        )
    }

    #[test]
    fn basic_access() {
        let a = sample();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.diagonal(), vec![1.0, 0.0, 2.0]);
        assert_eq!(a.row_sums(), vec![4.0, 0.0, 1.5]);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![10.0, 0.0, 5.0]);
        assert!(a.matvec(&[1.0]).is_err());
        assert!(!a.is_symmetric());
        assert!(CsrMatrix::identity(4).is_symmetric());
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = sample();
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n3 3 4\n"));
        assert_eq!(read_matrix_market(&text).unwrap(), a);
    }

    #[test]
    fn matrix_market_rejects_garbage() {
        assert!(read_matrix_market("").is_err());
        assert!(read_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").is_err());
        assert!(read_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n").is_err());
        assert!(read_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 1 2\n").is_err());
    }
}
