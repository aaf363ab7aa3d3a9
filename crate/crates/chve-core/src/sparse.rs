//! Compressed sparse row matrices with a triplet-based assembly builder.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// CSR matrix. Column indices are sorted and unique within each row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Csr {
        Csr {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Csr {
        Csr {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.vals[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
        y
    }

    /// y += alpha * A x
    pub fn matvec_add(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] += alpha * acc;
        }
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * y[*c];
            }
            total += x[i] * acc;
        }
        total
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for j in 0..self.n_cols {
            row_ptr[j + 1] = row_ptr[j] + counts[j];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for i in 0..self.n_rows {
            let (cols, rv) = self.row(i);
            for (c, v) in cols.iter().zip(rv) {
                let slot = next[*c];
                col_idx[slot] = i;
                vals[slot] = *v;
                next[*c] += 1;
            }
        }
        Csr {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.vals {
            *v *= s;
        }
    }

    /// Maximum absolute asymmetry ‖A − Aᵀ‖_max (matrix must be square).
    pub fn asymmetry(&self) -> f64 {
        let at = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let d = (v - at.get(i, *c)).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// A + alpha * B, matching shapes required.
    pub fn add_scaled(&self, other: &Csr, alpha: f64) -> Result<Csr> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::InvalidArgument(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut builder = CooBuilder::new(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                builder.push(i, *c, *v);
            }
            let (cols, vals) = other.row(i);
            for (c, v) in cols.iter().zip(vals) {
                builder.push(i, *c, alpha * v);
            }
        }
        Ok(builder.into_csr())
    }
}

/// Triplet accumulator for finite element assembly. Duplicate entries are
/// summed in a deterministic (sorted, insertion-stable) order.
#[derive(Debug)]
pub struct CooBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> CooBuilder {
        CooBuilder {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn into_csr(self) -> Csr {
        // Bucket the triplets by row with a counting pass (keeps insertion
        // order within each row), then sort each short row segment by column
        // with the insertion index as tiebreak. That reproduces a globally
        // stable (row, col) order, so duplicate summation stays
        // deterministic, without sorting the full triplet list at once.
        let n_rows = self.n_rows;
        let mut starts = vec![0usize; n_rows + 1];
        for &(i, _, _) in &self.entries {
            starts[i + 1] += 1;
        }
        for i in 0..n_rows {
            starts[i + 1] += starts[i];
        }
        let mut by_row: Vec<(usize, usize, f64)> = vec![(0, 0, 0.0); self.entries.len()];
        let mut next = starts.clone();
        for &(i, j, v) in &self.entries {
            let slot = next[i];
            by_row[slot] = (j, slot - starts[i], v);
            next[i] += 1;
        }
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut row_ptr = vec![0usize; n_rows + 1];
        for i in 0..n_rows {
            row_ptr[i] = col_idx.len();
            let seg = &mut by_row[starts[i]..starts[i + 1]];
            seg.sort_unstable_by_key(|&(j, k, _)| (j, k));
            for &(j, _, v) in seg.iter() {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
        }
        row_ptr[n_rows] = col_idx.len();
        Csr {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            vals,
        }
    }
}
