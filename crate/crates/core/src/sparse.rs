//! Triplet assembly and compressed-column storage.

use std::fmt::Write as _;

/// Triplet-form sparse matrix. Call [`SparseMatrix::finalize`] to merge duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            triplets: Vec::new(),
        }
    }

    /// Adds an entry; exact zeros are skipped.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.push_entry(row, col, value);
        }
    }

    /// Adds an entry even when it is zero, so the sparsity pattern does not
    /// depend on the value.
    pub fn push_entry(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols, "({row}, {col}) outside {}x{}", self.rows, self.cols);
        self.triplets.push((row, col, value));
    }

    /// Adds the nonzeros of a dense block whose top-left corner sits at `(row0, col0)`.
    pub fn push_block<R, C, S>(&mut self, row0: usize, col0: usize, block: &nalgebra::Matrix<f64, R, C, S>)
    where
        R: nalgebra::Dim,
        C: nalgebra::Dim,
        S: nalgebra::RawStorage<f64, R, C>,
    {
        for j in 0..block.ncols() {
            for i in 0..block.nrows() {
                self.push(row0 + i, col0 + j, block[(i, j)]);
            }
        }
    }

    /// Adds every entry of a dense block, zeros included.
    pub fn push_block_entries<R, C, S>(&mut self, row0: usize, col0: usize, block: &nalgebra::Matrix<f64, R, C, S>)
    where
        R: nalgebra::Dim,
        C: nalgebra::Dim,
        S: nalgebra::RawStorage<f64, R, C>,
    {
        for j in 0..block.ncols() {
            for i in 0..block.nrows() {
                self.push_entry(row0 + i, col0 + j, block[(i, j)]);
            }
        }
    }

    /// Diagonal entries, zeros included.
    pub fn push_diagonal(&mut self, offset: usize, diag: &[f64]) {
        for (i, d) in diag.iter().enumerate() {
            self.push_entry(offset + i, offset + i, *d);
        }
    }

    /// Sorts column-major and sums duplicate entries. Explicit zeros are kept.
    pub fn finalize(&mut self) {
        self.triplets
            .sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.triplets.len());
        for &(r, c, v) in &self.triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        self.triplets = merged;
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        for &(r, c, v) in &self.triplets {
            y[c] += v * x[r];
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.triplets {
            m[(r, c)] += v;
        }
        m
    }

    pub fn to_csc(&self) -> CscMatrix {
        let mut sorted = self.clone();
        sorted.finalize();
        let mut col_ptr = vec![0usize; self.cols + 1];
        for &(_, c, _) in &sorted.triplets {
            col_ptr[c + 1] += 1;
        }
        for c in 0..self.cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix {
            rows: self.rows,
            cols: self.cols,
            col_ptr,
            row_idx: sorted.triplets.iter().map(|t| t.0).collect(),
            values: sorted.triplets.iter().map(|t| t.2).collect(),
        }
    }

    /// Matrix Market coordinate format, 1-based indices.
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "%%MatrixMarket matrix coordinate real general");
        let _ = writeln!(out, "{} {} {}", self.rows, self.cols, self.triplets.len());
        for &(r, c, v) in &self.triplets {
            let _ = writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v);
        }
        out
    }
}

/// Compressed sparse column matrix with sorted row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub rows: usize,
    pub cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.cols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn transpose_mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (j, yj) in y.iter_mut().enumerate().take(self.cols) {
            *yj = self.column(j).map(|(i, v)| v * x[i]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        self.transpose_mul_vec_into(x, &mut y);
        y
    }

    /// Scales in place: `A ← diag(left) · A · diag(right)`.
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for j in 0..self.cols {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                self.values[p] *= left[self.row_idx[p]] * right[j];
            }
        }
    }

    /// Infinity norm of each column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| self.column(j).fold(0.0, |m, (_, v)| f64::max(m, v.abs())))
            .collect()
    }

    /// Infinity norm of each row.
    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (&i, &v) in self.row_idx.iter().zip(&self.values) {
            out[i] = f64::max(out[i], v.abs());
        }
        out
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut t = SparseMatrix::new(self.cols, self.rows);
        for j in 0..self.cols {
            for (i, v) in self.column(j) {
                t.triplets.push((j, i, v));
            }
        }
        t.to_csc()
    }

    pub fn to_triplets(&self) -> SparseMatrix {
        let mut t = SparseMatrix::new(self.rows, self.cols);
        for j in 0..self.cols {
            for (i, v) in self.column(j) {
                t.triplets.push((i, j, v));
            }
        }
        t
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let t = self.transpose();
        let a = self.to_triplets();
        let b = t.to_triplets();
        let mut diff = a;
        diff.triplets
            .extend(b.triplets.iter().map(|&(r, c, v)| (r, c, -v)));
        diff.finalize();
        diff.triplets.iter().all(|t| t.2.abs() <= tol)
    }
}
