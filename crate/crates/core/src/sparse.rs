//! Compressed sparse row matrices with a fixed per-row accumulation order.

use ndarray::{Array2, ArrayView2, Axis};
use ndarray::parallel::prelude::*;

use crate::error::{GwmError, Result};
use crate::scalar::Scalar;

/// Row-compressed sparse matrix. Column indices within a row are strictly increasing,
/// which fixes the accumulation order of every product and keeps results bitwise stable.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    /// Builds a matrix from per-row entry lists. Entries are sorted by column and
    /// duplicate columns are summed in input order; explicit zeros are dropped.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if j >= cols {
                    return Err(GwmError::ShapeMismatch(format!(
                        "column {j} out of range in row {i} (cols = {cols})"
                    )));
                }
                if last == Some(j) {
                    let slot = values.last_mut().expect("previous entry exists");
                    *slot = *slot + v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        let mut m = Self { rows: n, cols, indptr, indices, values };
        m.prune_zeros();
        Ok(m)
    }

    /// Converts a dense matrix, keeping only non-zero entries.
    pub fn from_dense(dense: ArrayView2<'_, T>) -> Self {
        let cols = dense.ncols();
        let entries = dense
            .axis_iter(Axis(0))
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(cols, entries).expect("dense columns are in range")
    }

    fn prune_zeros(&mut self) {
        if self.values.iter().all(|v| !v.is_zero()) {
            return;
        }
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if !self.values[k].is_zero() {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr.push(indices.len());
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (idx, vals) = self.row(i);
        match idx.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    /// Iterates `(row, col, value)` over stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (idx, vals) = self.row(i);
            idx.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).1.iter().copied().sum()).collect()
    }

    /// First `(i, j)` where `self[i][j] != self[j][i]`, if any.
    pub fn asymmetry(&self) -> Option<(usize, usize)> {
        if self.rows != self.cols {
            return Some((self.rows, self.cols));
        }
        self.iter().find(|&(i, j, v)| self.get(j, i) != v).map(|(i, j, _)| (i, j))
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry().is_none()
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, usize, T) -> T) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] = f(i, self.indices[k], self.values[k]);
            }
        }
        out.prune_zeros();
        out
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut d = Array2::zeros((self.rows, self.cols));
        for (i, j, v) in self.iter() {
            d[[i, j]] = v;
        }
        d
    }

    /// `self · x` for a dense right-hand side. Rows are computed in parallel; each
    /// output row accumulates its neighbours in ascending column order.
    pub fn mul_dense(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.nrows() != self.cols {
            return Err(GwmError::ShapeMismatch(format!(
                "sparse {}x{} times dense {}x{}",
                self.rows,
                self.cols,
                x.nrows(),
                x.ncols()
            )));
        }
        let d = x.ncols();
        let mut out = Array2::<T>::zeros((self.rows, d));
        out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            let (idx, vals) = self.row(i);
            for (&j, &a) in idx.iter().zip(vals) {
                let src = x.row(j);
                for (o, &s) in row.iter_mut().zip(src.iter()) {
                    *o = *o + a * s;
                }
            }
        });
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(GwmError::ShapeMismatch(format!(
                "sparse {}x{} times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let (idx, vals) = self.row(i);
                idx.iter().zip(vals).fold(T::zero(), |acc, (&j, &a)| acc + a * x[j])
            })
            .collect())
    }
}
