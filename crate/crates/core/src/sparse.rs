//! Compressed sparse row matrices assembled from triplets, and a sparse LU
//! solver that reuses its symbolic analysis while the pattern is unchanged.

use crate::error::{Error, Result};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::linalg::solvers::Solve;
use std::fmt::Write as _;

/// Real CSR matrix with sorted, duplicate-free column indices in each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    /// Sums duplicate entries. Explicit zeros are kept so that the pattern
    /// depends only on the triplet positions.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            count[i + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut perm: Vec<usize> = Vec::new();
        for i in 0..nrows {
            let (a, b) = (count[i], count[i + 1]);
            perm.clear();
            perm.extend(a..b);
            perm.sort_unstable_by_key(|&k| cols[k]);
            let mut last = usize::MAX;
            for &k in &perm {
                if cols[k] == last {
                    *out_vals.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    out_vals.push(vals[k]);
                    last = cols[k];
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals: out_vals,
        }
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

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut count = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            count[j + 1] += 1;
        }
        for j in 0..self.ncols {
            count[j + 1] += count[j];
        }
        let mut fill = count.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                col_idx[fill[j]] = i;
                vals[fill[j]] = v;
                fill[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: count,
            col_idx,
            vals,
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in matmul");
        let mut acc = vec![0.0; other.ncols];
        let mut marker = vec![usize::MAX; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                vals.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// `a·self + b·other`.
    pub fn add_scaled(&self, a: f64, other: &SparseMatrix, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            t.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, b * v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn scale(&mut self, c: f64) {
        self.vals.iter_mut().for_each(|v| *v *= c);
    }

    /// Scales row `i` by `d[i]`.
    pub fn scale_rows(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.nrows);
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.vals[k] *= d[i];
            }
        }
    }

    /// Drops entries with `|a_ij| ≤ tol · max_ij |a_ij|`.
    pub fn prune_relative(&self, tol: f64) -> Self {
        let amax = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cut = tol * amax;
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if v.abs() > cut {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        d
    }

    /// Coordinate text format: a `rows cols nnz` header, then one
    /// `i j value` line per stored entry.
    pub fn to_coo_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:.17e}");
            }
        }
        s
    }
}

/// Sparse LU for square CSR matrices. The symbolic factorisation is cached
/// and reused whenever a matrix with the same pattern is factorised.
#[derive(Default)]
pub struct SparseLu {
    pattern: Option<(Vec<usize>, Vec<usize>)>,
    symbolic: Option<SymbolicLu<usize>>,
    numeric: Option<Lu<usize, f64>>,
    symbolic_count: usize,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of symbolic analyses performed so far.
    pub fn symbolic_count(&self) -> usize {
        self.symbolic_count
    }

    pub fn factorize(&mut self, a: &SparseMatrix) -> Result<()> {
        if a.nrows != a.ncols {
            return Err(Error::Factorization(format!(
                "matrix is {}x{}, not square",
                a.nrows, a.ncols
            )));
        }
        if a.vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let n = a.nrows;
        let same = matches!(&self.pattern, Some((rp, ci)) if rp == &a.row_ptr && ci == &a.col_idx);
        if !same {
            self.pattern = Some((a.row_ptr.clone(), a.col_idx.clone()));
            self.symbolic = None;
        }
        let (rp, ci) = self.pattern.as_ref().unwrap();
        // the CSR arrays of A are the CSC arrays of Aᵀ
        let sym = SymbolicSparseColMatRef::new_checked(n, n, rp, None, ci);
        if self.symbolic.is_none() {
            let s = SymbolicLu::try_new(sym)
                .map_err(|e| Error::Factorization(format!("symbolic analysis: {e:?}")))?;
            self.symbolic = Some(s);
            self.symbolic_count += 1;
        }
        let mat = SparseColMatRef::new(sym, &a.vals);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone().unwrap(), mat)
            .map_err(|e| Error::Factorization(format!("numeric factorisation: {e:?}")))?;
        self.numeric = Some(lu);
        Ok(())
    }

    /// Solves `A x = b` with the last factorised `A`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::Factorization("solve before factorisation".into()))?;
        let mut x = b.to_vec();
        let n = x.len();
        let m = faer::MatMut::from_column_major_slice_mut(&mut x, n, 1);
        // the stored factorisation is of Aᵀ
        lu.solve_transpose_in_place(m);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("singular matrix".into()));
        }
        Ok(x)
    }
}
