//! Block compressed-row matrices over conforming nodes.

use std::sync::Arc;

use crate::physics::Block;

/// Sorted compressed-row sparsity pattern of an `n × n` node graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from per-row column lists (need not be sorted or unique).
    pub fn from_rows(rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows {
            let mut r = r.clone();
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        Self { n: rows.len(), row_ptr, cols }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(&(0..n).map(|i| vec![i]).collect::<Vec<_>>())
    }

    /// Pattern of `self · self`: rows reach every column two steps away.
    pub fn squared(&self) -> Self {
        let rows: Vec<Vec<usize>> =
            (0..self.n).map(|i| self.row(i).iter().flat_map(|&k| self.row(k).iter().copied()).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Storage index of entry `(i, j)`.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.cols[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    pub fn col(&self, idx: usize) -> usize {
        self.cols[idx]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).iter().all(|&j| self.find(j, i).is_some()))
    }
}

/// Sparse matrix of dense `m × m` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    pattern: Arc<Pattern>,
    m: usize,
    values: Vec<f64>,
}

impl BlockSparseMatrix {
    pub fn zeros(pattern: Arc<Pattern>, m: usize) -> Self {
        let len = pattern.nnz() * m * m;
        Self { pattern, m, values: vec![0.0; len] }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    /// Number of scalar rows (`n · m`).
    pub fn dim(&self) -> usize {
        self.pattern.n() * self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block_at(&self, idx: usize) -> &[f64] {
        let s = self.m * self.m;
        &self.values[idx * s..(idx + 1) * s]
    }

    pub fn block_at_mut(&mut self, idx: usize) -> &mut [f64] {
        let s = self.m * self.m;
        &mut self.values[idx * s..(idx + 1) * s]
    }

    /// Entry `(r, c)` of block `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize, r: usize, c: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |idx| self.block_at(idx)[r * self.m + c])
    }

    pub fn block(&self, i: usize, j: usize) -> Block {
        let mut b = [[0.0; 4]; 4];
        if let Some(idx) = self.pattern.find(i, j) {
            let s = self.block_at(idx);
            for (r, row) in b.iter_mut().enumerate().take(self.m) {
                for (c, v) in row.iter_mut().enumerate().take(self.m) {
                    *v = s[r * self.m + c];
                }
            }
        }
        b
    }

    /// Adds `scale · b` to block `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` is outside the pattern.
    pub fn add_block(&mut self, i: usize, j: usize, b: &Block, scale: f64) {
        let idx = self.pattern.find(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.add_block_at(idx, b, scale);
    }

    pub fn add_block_at(&mut self, idx: usize, b: &Block, scale: f64) {
        let m = self.m;
        let s = self.block_at_mut(idx);
        for r in 0..m {
            for c in 0..m {
                s[r * m + c] += scale * b[r][c];
            }
        }
    }

    /// Adds `scale · I` to block `(i, j)`.
    pub fn add_identity(&mut self, i: usize, j: usize, scale: f64) {
        let idx = self.pattern.find(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        let m = self.m;
        let s = self.block_at_mut(idx);
        for r in 0..m {
            s[r * m + r] += scale;
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.m;
        for i in 0..self.n() {
            let yi = &mut y[i * m..(i + 1) * m];
            yi.iter_mut().for_each(|v| *v = 0.0);
            for idx in self.pattern.row_range(i) {
                let j = self.pattern.col(idx);
                let b = self.block_at(idx);
                let xj = &x[j * m..(j + 1) * m];
                for r in 0..m {
                    yi[r] += (0..m).map(|c| b[r * m + c] * xj[c]).sum::<f64>();
                }
            }
        }
    }

    /// `self += scale · other`; patterns must be identical.
    pub fn axpy(&mut self, scale: f64, other: &BlockSparseMatrix) {
        assert!(self.same_layout(other), "axpy requires matching patterns");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    /// Adds `scale · other` where `other`'s pattern is contained in `self`'s.
    pub fn add_subpattern(&mut self, scale: f64, other: &BlockSparseMatrix) {
        assert_eq!(self.m, other.m);
        if self.same_layout(other) {
            return self.axpy(scale, other);
        }
        let s = self.m * self.m;
        for i in 0..other.n() {
            for oidx in other.pattern.row_range(i) {
                let j = other.pattern.col(oidx);
                let idx = self.pattern.find(i, j).expect("sub-pattern entry missing");
                for k in 0..s {
                    self.values[idx * s + k] += scale * other.values[oidx * s + k];
                }
            }
        }
    }

    pub fn same_layout(&self, other: &BlockSparseMatrix) -> bool {
        self.m == other.m && (Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Copy of the matrix on a larger pattern containing this one.
    pub fn with_pattern(&self, pattern: Arc<Pattern>) -> Self {
        let mut out = Self::zeros(pattern, self.m);
        out.add_subpattern(1.0, self);
        out
    }

    /// Copy of the entries that lie in a smaller pattern; the rest are dropped.
    pub fn restricted(&self, pattern: Arc<Pattern>) -> Self {
        let mut out = Self::zeros(pattern, self.m);
        let s = self.m * self.m;
        for i in 0..out.n() {
            for idx in out.pattern.row_range(i) {
                if let Some(src) = self.pattern.find(i, out.pattern.col(idx)) {
                    out.values[idx * s..(idx + 1) * s].copy_from_slice(&self.values[src * s..(src + 1) * s]);
                }
            }
        }
        out
    }

    /// Dense row-major copy (for tests and small oracles).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let m = self.m;
        let mut a = vec![vec![0.0; d]; d];
        for i in 0..self.n() {
            for idx in self.pattern.row_range(i) {
                let j = self.pattern.col(idx);
                let b = self.block_at(idx);
                for r in 0..m {
                    for c in 0..m {
                        a[i * m + r][j * m + c] += b[r * m + c];
                    }
                }
            }
        }
        a
    }

    /// Scalar-level triplets `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.m;
        (0..self.n()).flat_map(move |i| {
            self.pattern.row_range(i).flat_map(move |idx| {
                let j = self.pattern.col(idx);
                let b = self.block_at(idx);
                (0..m * m).map(move |k| (i * m + k / m, j * m + k % m, b[k]))
            })
        })
    }

    /// Replaces scalar row `r` of node `i` by the unit row.
    pub fn set_identity_row(&mut self, i: usize, r: usize) {
        let m = self.m;
        for idx in self.pattern.row_range(i) {
            let j = self.pattern.col(idx);
            let b = self.block_at_mut(idx);
            for c in 0..m {
                b[r * m + c] = if j == i && c == r { 1.0 } else { 0.0 };
            }
        }
    }

    /// Sum of the blocks of row `i`.
    pub fn row_sum(&self, i: usize) -> Block {
        let mut s = [[0.0; 4]; 4];
        let m = self.m;
        for idx in self.pattern.row_range(i) {
            let b = self.block_at(idx);
            for r in 0..m {
                for c in 0..m {
                    s[r][c] += b[r * m + c];
                }
            }
        }
        s
    }
}
