//! Compressed sparse row operator used as the graph shift operator.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows above this count are processed in parallel. Each output row is
/// computed by the same sequential loop either way, so results do not depend
/// on the thread count.
const PAR_ROW_THRESHOLD: usize = 4096;

/// Largest dimension accepted by [`SparseOperator::dense_csv`].
pub const DENSE_DUMP_CAP: usize = 256;

/// Square sparse operator in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds an operator from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed and explicit zeros dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::IndexOutOfRange { u: r, v: c, n });
            }
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        let op = SparseOperator { n, indptr, indices, values, symmetric };
        if symmetric {
            let dev = op.asymmetry();
            if dev > 0.0 {
                return Err(Error::NotSymmetric(dev));
            }
        }
        Ok(op)
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn zeros(n: usize) -> Self {
        SparseOperator { n, indptr: vec![0; n + 1], indices: Vec::new(), values: Vec::new(), symmetric: true }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Iterates over stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.values[p]))
        })
    }

    /// Stored value at `(row, col)`, zero when absent.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.indptr[row]..self.indptr[row + 1];
        match self.indices[span.clone()].binary_search(&col) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    /// Maximum of `|a(u,v) - a(v,u)|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        self.iter().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(0.0, f64::max)
    }

    /// `alpha * self + beta * I`.
    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        let mut triplets: Vec<(usize, usize, f64)> = self.iter().map(|(r, c, v)| (r, c, alpha * v)).collect();
        if beta != 0.0 {
            triplets.extend((0..self.n).map(|i| (i, i, beta)));
        }
        // affine maps of a validated operator keep symmetry exactly
        Self::from_triplets(self.n, &triplets, false)
            .map(|mut op| {
                op.symmetric = self.symmetric;
                op
            })
            .expect("indices already validated")
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = -*v);
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::shape(format!("operator is {0}x{0}, vector has length {1}", self.n, x.len())));
        }
        Ok((0..self.n)
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|p| self.values[p] * x[self.indices[p]]).sum())
            .collect())
    }

    /// Dense product `self * x`.
    pub fn matmul(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.n, x.ncols()));
        self.matmul_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes `self * x` into `out`, overwriting it.
    pub fn matmul_into(&self, x: &ArrayView2<f64>, out: &mut Array2<f64>) -> Result<()> {
        self.check_rows(x.nrows())?;
        if out.dim() != (self.n, x.ncols()) {
            return Err(Error::shape(format!("output buffer {:?}, expected ({}, {})", out.dim(), self.n, x.ncols())));
        }
        let row_kernel = |r: usize, mut out_row: ndarray::ArrayViewMut1<f64>| {
            out_row.fill(0.0);
            for p in self.indptr[r]..self.indptr[r + 1] {
                out_row.scaled_add(self.values[p], &x.row(self.indices[p]));
            }
        };
        if self.n >= PAR_ROW_THRESHOLD {
            out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(r, row)| row_kernel(r, row));
        } else {
            out.axis_iter_mut(Axis(0)).enumerate().for_each(|(r, row)| row_kernel(r, row));
        }
        Ok(())
    }

    /// `out = alpha * self * x - prev`, the update used by three-term recurrences.
    pub fn recurrence_step(
        &self,
        alpha: f64,
        x: &ArrayView2<f64>,
        prev: &ArrayView2<f64>,
        out: &mut Array2<f64>,
    ) -> Result<()> {
        self.matmul_into(x, out)?;
        if prev.dim() != out.dim() {
            return Err(Error::shape(format!("recurrence operand {:?} vs {:?}", prev.dim(), out.dim())));
        }
        Zip::from(out).and(prev).for_each(|o, &p| *o = alpha * *o - p);
        Ok(())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for (r, c, v) in self.iter() {
            m[[r, c]] = v;
        }
        m
    }

    pub fn diagonal(&self) -> Array1<f64> {
        Array1::from_iter((0..self.n).map(|i| self.get(i, i)))
    }

    /// Comma-separated dense dump, one row per line. Debug aid for small operators.
    pub fn dense_csv(&self) -> Result<String> {
        if self.n > DENSE_DUMP_CAP {
            return Err(Error::param(format!("dense dump limited to n <= {DENSE_DUMP_CAP}, got {}", self.n)));
        }
        let dense = self.to_dense();
        let mut s = String::new();
        for row in dense.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        Ok(s)
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.n {
            return Err(Error::shape(format!("operator is {0}x{0}, operand has {1} rows", self.n, rows)));
        }
        Ok(())
    }
}
