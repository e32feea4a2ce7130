//! Sparse LDLᵀ for symmetric quasi-definite matrices, plus a minimum-degree
//! fill-reducing ordering.

use crate::error::SolverError;
use crate::sparse::CscMatrix;

const NONE: usize = usize::MAX;

/// Minimum-degree elimination order on an undirected graph.
///
/// `adjacency[i]` lists the neighbours of `i` (no self loops). Returns
/// `perm` with `perm[new] = old`. Ties go to the lowest index, so the result
/// is deterministic.
pub fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut adj: Vec<Vec<usize>> = adjacency
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let mut queue: std::collections::BTreeSet<(usize, usize)> =
        (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    let mut scratch = Vec::new();

    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            // adj[u] ← (adj[u] ∪ nbrs) \ {u, v}, kept sorted.
            scratch.clear();
            let (a, b) = (&adj[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = if j >= b.len() || (i < a.len() && a[i] < b[j]) {
                    i += 1;
                    a[i - 1]
                } else if i >= a.len() || b[j] < a[i] {
                    j += 1;
                    b[j - 1]
                } else {
                    i += 1;
                    j += 1;
                    a[i - 1]
                };
                if next != u && next != v {
                    scratch.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut scratch);
            queue.insert((adj[u].len(), u));
        }
    }
    order
}

/// Inverse of a permutation.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// `A = L D Lᵀ` with unit lower-triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d_inv: Vec<f64>,
}

impl LdlFactor {
    /// Factors a matrix given by its upper triangle (diagonal included) in CSC.
    pub fn factor(upper: &CscMatrix) -> Result<Self, SolverError> {
        let n = upper.cols;
        let (etree, lnz) = elimination_tree(upper)?;

        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut li = vec![0usize; total];
        let mut lx = vec![0.0; total];
        let mut d = vec![0.0; n];
        let mut d_inv = vec![0.0; n];
        let mut next_in_col: Vec<usize> = lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = Vec::with_capacity(n);
        let mut elim = Vec::with_capacity(n);

        for k in 0..n {
            y_idx.clear();
            for (i, v) in upper.column(k) {
                if i == k {
                    d[k] = v;
                    continue;
                }
                y_vals[i] = v;
                if y_used[i] {
                    continue;
                }
                y_used[i] = true;
                elim.clear();
                elim.push(i);
                let mut next = etree[i];
                while next != NONE && next < k {
                    if y_used[next] {
                        break;
                    }
                    y_used[next] = true;
                    elim.push(next);
                    next = etree[next];
                }
                while let Some(e) = elim.pop() {
                    y_idx.push(e);
                }
            }
            for &c in y_idx.iter().rev() {
                let yc = y_vals[c];
                let end = next_in_col[c];
                for p in lp[c]..end {
                    y_vals[li[p]] -= lx[p] * yc;
                }
                li[end] = k;
                lx[end] = yc * d_inv[c];
                d[k] -= yc * lx[end];
                next_in_col[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(SolverError::ZeroPivot(k));
            }
            d_inv[k] = 1.0 / d[k];
        }
        Ok(Self { n, lp, li, lx, d_inv })
    }

    /// Number of negative pivots (inertia check for quasi-definite systems).
    pub fn negative_pivots(&self) -> usize {
        self.d_inv.iter().filter(|d| **d < 0.0).count()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for p in self.lp[i]..self.lp[i + 1] {
                    x[self.li[p]] -= self.lx[p] * xi;
                }
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.d_inv) {
            *xi *= di;
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[p] * x[self.li[p]];
            }
            x[i] = acc;
        }
    }
}

fn elimination_tree(upper: &CscMatrix) -> Result<(Vec<usize>, Vec<usize>), SolverError> {
    let n = upper.cols;
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for (row, _) in upper.column(j) {
            if row > j {
                return Err(SolverError::Dimension(format!(
                    "entry ({row}, {j}) below the diagonal in upper-triangular input"
                )));
            }
            let mut i = row;
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    Ok((etree, lnz))
}
