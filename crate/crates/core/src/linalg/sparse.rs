//! Compressed sparse row storage.
//!
//! Matrices are kept in canonical form: column indices strictly increasing
//! within each row. Assembly goes through [`TripletBuilder`] (duplicates are
//! summed) or through a fixed pattern plus [`CsrMatrix::add_at`].

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating the canonical-form
    /// invariants.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_rows + 1,
                found: row_offsets.len(),
            });
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::contract("row offsets do not span the column index array"));
        }
        if col_indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: col_indices.len(),
                found: values.len(),
            });
        }
        for r in 0..n_rows {
            let (s, e) = (row_offsets[r], row_offsets[r + 1]);
            if e < s {
                return Err(Error::contract(format!("row offsets decrease at row {r}")));
            }
            let cols = &col_indices[s..e];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::contract(format!("column index out of range in row {r}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::contract(format!("row {r} is not in canonical order")));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Summing conversion from (row, col, value) triplets.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut b = TripletBuilder::new(n_rows, n_cols);
        for &(r, c, v) in triplets {
            b.push(r, c, v)?;
        }
        Ok(b.build())
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(n_rows, n_cols);
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(r, c, v).expect("in range");
                }
            }
        }
        b.build()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Iterator over `(col, value)` of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        self.col_indices[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        self.col_indices[s..e].binary_search(&c).ok().map(|k| s + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to an entry that must already exist in the pattern.
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        let k = self
            .position(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not in sparsity pattern"));
        self.values[k] += v;
    }

    /// Same pattern, all values zero.
    pub fn zeroed_like(&self) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v = 0.0);
        m
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: y.len(),
            });
        }
        self.mul_unchecked(x, y);
        Ok(())
    }

    /// `y = A x` without dimension checks; panics on short slices.
    pub(crate) fn mul_unchecked(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
            let mut acc = 0.0;
            for k in s..e {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yr = acc;
        }
    }

    /// `y = Aᵀ x`.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                let k = next[c];
                cols[k] = r;
                vals[k] = v;
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `alpha * self + beta * other`, union of patterns.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::contract(format!(
                "cannot combine {}x{} with {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut offsets = Vec::with_capacity(self.n_rows + 1);
        offsets.push(0);
        let mut cols = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut vals = Vec::with_capacity(cols.capacity());
        for r in 0..self.n_rows {
            let mut a = self.row(r).peekable();
            let mut b = other.row(r).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ca, va)), Some((cb, vb))) => {
                        if ca == cb {
                            cols.push(ca);
                            vals.push(alpha * va + beta * vb);
                            a.next();
                            b.next();
                        } else if ca < cb {
                            cols.push(ca);
                            vals.push(alpha * va);
                            a.next();
                        } else {
                            cols.push(cb);
                            vals.push(beta * vb);
                            b.next();
                        }
                    }
                    (Some((ca, va)), None) => {
                        cols.push(ca);
                        vals.push(alpha * va);
                        a.next();
                    }
                    (None, Some((cb, vb))) => {
                        cols.push(cb);
                        vals.push(beta * vb);
                        b.next();
                    }
                    (None, None) => break,
                }
            }
            offsets.push(cols.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: offsets,
            col_indices: cols,
            values: vals,
        })
    }

    /// Replaces each listed row by the corresponding identity row.
    ///
    /// The diagonal entry is inserted if absent from the pattern.
    pub fn set_identity_rows(&mut self, rows: &[usize]) {
        let mut mark = vec![false; self.n_rows];
        for &r in rows {
            mark[r] = true;
        }
        let mut offsets = Vec::with_capacity(self.n_rows + 1);
        offsets.push(0);
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            if mark[r] {
                cols.push(r);
                vals.push(1.0);
            } else {
                for (c, v) in self.row(r) {
                    cols.push(c);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        self.row_offsets = offsets;
        self.col_indices = cols;
        self.values = vals;
    }

    /// Zeroes each listed row, keeping its pattern.
    pub fn zero_rows(&mut self, rows: &[usize]) {
        for &r in rows {
            let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
            self.values[s..e].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Assembles a block matrix. `blocks[i][j]` may be `None` for a zero
    /// block; every block row/column must have at least one block fixing its
    /// size, passed as `row_sizes`/`col_sizes`.
    pub fn from_blocks(
        blocks: &[Vec<Option<&CsrMatrix>>],
        row_sizes: &[usize],
        col_sizes: &[usize],
    ) -> Result<Self> {
        let col_starts: Vec<usize> = col_sizes
            .iter()
            .scan(0, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect();
        let n_rows: usize = row_sizes.iter().sum();
        let n_cols: usize = col_sizes.iter().sum();
        let mut offsets = Vec::with_capacity(n_rows + 1);
        offsets.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (bi, brow) in blocks.iter().enumerate() {
            for (bj, b) in brow.iter().enumerate() {
                if let Some(m) = b {
                    if m.n_rows != row_sizes[bi] || m.n_cols != col_sizes[bj] {
                        return Err(Error::contract(format!(
                            "block ({bi}, {bj}) has shape {}x{}, expected {}x{}",
                            m.n_rows, m.n_cols, row_sizes[bi], col_sizes[bj]
                        )));
                    }
                }
            }
            for r in 0..row_sizes[bi] {
                for (bj, b) in brow.iter().enumerate() {
                    if let Some(m) = b {
                        for (c, v) in m.row(r) {
                            cols.push(col_starts[bj] + c);
                            vals.push(v);
                        }
                    }
                }
                offsets.push(cols.len());
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets: offsets,
            col_indices: cols,
            values: vals,
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let d = self.linear_combination(1.0, &t, -1.0).expect("square");
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        d.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
    }
}

/// Accumulates triplets and produces a canonical [`CsrMatrix`].
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) -> Result<()> {
        if r >= self.n_rows || c >= self.n_cols {
            return Err(Error::contract(format!(
                "entry ({r}, {c}) outside {}x{}",
                self.n_rows, self.n_cols
            )));
        }
        self.entries.push((r, c, v));
        Ok(())
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut offsets = vec![0usize; self.n_rows + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n_rows {
            offsets[i + 1] += offsets[i];
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: offsets,
            col_indices: cols,
            values: vals,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
