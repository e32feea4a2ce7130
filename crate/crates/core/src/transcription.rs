//! Sparse QP over the stacked decision vector
//! `χ = [γ(1); f(0); γ(2); f(1); …; γ(N); f(N−1)]`.

use std::io::Write as _;
use std::path::Path;

use crate::contact::{normal_force_bounds, FootParams, StanceConstraintBlock};
use crate::cost::{stage_cost_weight, CostWeights, ReferenceTrajectory};
use crate::error::TranscriptionError;
use crate::model::{ControlVector, DiscreteModel, MomentumState, StateMatrix, CONTROL_DIM, STATE_DIM};
use crate::sparse::SparseMatrix;

pub const STAGE_DIM: usize = STATE_DIM + CONTROL_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChiLayout {
    pub n_stages: usize,
}

impl ChiLayout {
    pub fn new(n_stages: usize) -> Result<Self, TranscriptionError> {
        if n_stages == 0 {
            return Err(TranscriptionError::EmptyHorizon);
        }
        Ok(Self { n_stages })
    }

    pub fn total_dim(&self) -> usize {
        STAGE_DIM * self.n_stages
    }

    /// Offset of `γ(k)`, `k ∈ 1..=N`.
    pub fn state_offset(&self, k: usize) -> Result<usize, TranscriptionError> {
        if k == 0 || k > self.n_stages {
            return Err(TranscriptionError::StateIndex { k, n: self.n_stages });
        }
        Ok(STAGE_DIM * (k - 1))
    }

    /// Offset of `f(k)`, `k ∈ 0..N`.
    pub fn control_offset(&self, k: usize) -> Result<usize, TranscriptionError> {
        if k >= self.n_stages {
            return Err(TranscriptionError::ControlIndex { k, n: self.n_stages });
        }
        Ok(STAGE_DIM * k + STATE_DIM)
    }

    pub fn state_at(&self, chi: &[f64], k: usize) -> crate::model::StateVector {
        let o = STAGE_DIM * (k - 1);
        crate::model::StateVector::from_row_slice(&chi[o..o + STATE_DIM])
    }

    pub fn control_at(&self, chi: &[f64], k: usize) -> ControlVector {
        let o = STAGE_DIM * k + STATE_DIM;
        ControlVector::from_row_slice(&chi[o..o + CONTROL_DIM])
    }

    /// Interleaves per-stage states and controls into `χ`.
    pub fn stack(&self, states: &[crate::model::StateVector], controls: &[ControlVector]) -> Vec<f64> {
        let mut chi = Vec::with_capacity(self.total_dim());
        for (s, f) in states.iter().zip(controls) {
            chi.extend_from_slice(s.as_slice());
            chi.extend_from_slice(f.as_slice());
        }
        chi
    }
}

/// `min ½χᵀHχ + χᵀg + c  s.t.  A_eq χ = b_eq,  A χ ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: SparseMatrix,
    pub gradient: Vec<f64>,
    pub eq_matrix: SparseMatrix,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: SparseMatrix,
    pub ineq_rhs: Vec<f64>,
    pub cost_constant: f64,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.hessian.mul_vec(x);
        0.5 * dot(x, &hx) + dot(x, &self.gradient)
    }

    /// Writes H, g, A_eq, b_eq, A, b as Matrix Market sections in one file.
    pub fn dump(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        let vector = |name: &str, v: &[f64]| {
            let mut s = format!("% {name}\n%%MatrixMarket matrix array real general\n{} 1\n", v.len());
            for x in v {
                s.push_str(&format!("{x:.17e}\n"));
            }
            s
        };
        writeln!(file, "% hessian")?;
        file.write_all(self.hessian.to_matrix_market().as_bytes())?;
        file.write_all(vector("gradient", &self.gradient).as_bytes())?;
        writeln!(file, "% eq_matrix")?;
        file.write_all(self.eq_matrix.to_matrix_market().as_bytes())?;
        file.write_all(vector("eq_rhs", &self.eq_rhs).as_bytes())?;
        writeln!(file, "% ineq_matrix")?;
        file.write_all(self.ineq_matrix.to_matrix_market().as_bytes())?;
        file.write_all(vector("ineq_rhs", &self.ineq_rhs).as_bytes())?;
        writeln!(file, "% cost_constant\n{:.17e}", self.cost_constant)?;
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row block `k` encodes `Ev γ(k) + F f(k) − γ(k+1) = −G − S⁰` with the
/// `γ(0)` term moved to the right-hand side of block 0.
pub fn build_equality(
    model: &DiscreteModel,
    gamma0: &MomentumState,
    layout: &ChiLayout,
) -> (SparseMatrix, Vec<f64>) {
    let n = layout.n_stages;
    let mut a = SparseMatrix::new(STATE_DIM * n, layout.total_dim());
    let mut b = vec![0.0; STATE_DIM * n];
    let neg_identity = -StateMatrix::identity();
    let constant = -(model.g + model.s0);
    let from_gamma0 = model.ev * gamma0.to_vector();

    for k in 0..n {
        let row = STATE_DIM * k;
        // The angular-momentum rows depend on the expansion point; they are
        // stored in full so the pattern is the same at every feedback.
        if k > 0 {
            let col = STAGE_DIM * (k - 1);
            a.push_block(row, col, &model.ev.fixed_rows::<6>(0));
            a.push_block_entries(row + 6, col, &model.ev.fixed_view::<3, 3>(6, 0));
            a.push_block(row + 6, col + 3, &model.ev.fixed_view::<3, 6>(6, 3));
        }
        let col = STAGE_DIM * k + STATE_DIM;
        a.push_block(row, col, &model.f.fixed_rows::<6>(0));
        a.push_block_entries(row + 6, col, &model.f.fixed_rows::<3>(6));
        a.push_block(row, STAGE_DIM * k, &neg_identity);
        for i in 0..STATE_DIM {
            b[row + i] = constant[i];
        }
        if k == 0 {
            for i in 0..STATE_DIM {
                b[i] -= from_gamma0[i];
            }
        }
    }
    a.finalize();
    (a, b)
}

/// Per stage, the left then right foot block on the `f(k)` columns. Only the
/// right foot's normal-force bounds vary with `impact_stage`.
pub fn build_inequalities(
    left: &StanceConstraintBlock,
    right: &StanceConstraintBlock,
    impact_stage: usize,
    layout: &ChiLayout,
    params: &FootParams,
) -> (SparseMatrix, Vec<f64>) {
    let n_c = left.a.nrows();
    let n = layout.n_stages;
    let mut a = SparseMatrix::new(2 * n_c * n, layout.total_dim());
    let mut b = Vec::with_capacity(2 * n_c * n);
    for k in 0..n {
        let col = STAGE_DIM * k + STATE_DIM;
        let row = 2 * n_c * k;
        a.push_block(row, col, &left.a);
        b.extend(left.b.iter());

        let (lower, upper) = normal_force_bounds(k, impact_stage, params);
        let right_k = right.with_normal_bounds(params, lower, upper);
        a.push_block(row + n_c, col + 6, &right_k.a);
        b.extend(right_k.b.iter());
    }
    a.finalize();
    (a, b)
}

/// Quadratic form of the horizon cost: `½χᵀHχ + χᵀg + c`.
pub fn build_cost(
    weights: &CostWeights,
    refs: &ReferenceTrajectory,
    impact_stage_clamped: usize,
    f_prev: &ControlVector,
    layout: &ChiLayout,
) -> Result<(SparseMatrix, Vec<f64>, f64), TranscriptionError> {
    let n = layout.n_stages;
    if refs.len() != n {
        return Err(TranscriptionError::ReferenceLength {
            got: refs.len(),
            expected: n,
        });
    }
    let dim = layout.total_dim();
    let mut h = SparseMatrix::new(dim, dim);
    let mut g = vec![0.0; dim];
    let mut constant = 0.0;
    let kf = weights.force();
    let kdf = weights.force_rate();

    for k in 1..=n {
        let w = stage_cost_weight(k, impact_stage_clamped, n, weights)?;
        let off = layout.state_offset(k)?;
        let r = refs.at(k);
        h.push_diagonal(off, w.as_slice());
        for i in 0..STATE_DIM {
            g[off + i] = -w[i] * r[i];
            constant += 0.5 * w[i] * r[i] * r[i];
        }
    }

    for k in 0..n {
        let off = layout.control_offset(k)?;
        let nominal = refs.wrench_at(k);
        for i in 0..CONTROL_DIM {
            g[off + i] = -kf[i] * nominal[i];
            constant += 0.5 * kf[i] * nominal[i] * nominal[i];
        }
        let rate_terms = if k + 1 < n { 2.0 } else { 1.0 };
        let diag: Vec<f64> = (0..CONTROL_DIM).map(|i| kf[i] + rate_terms * kdf[i]).collect();
        h.push_diagonal(off, &diag);
        if k > 0 {
            let prev = layout.control_offset(k - 1)?;
            for i in 0..CONTROL_DIM {
                h.push(off + i, prev + i, -kdf[i]);
                h.push(prev + i, off + i, -kdf[i]);
            }
        }
    }
    let f0 = layout.control_offset(0)?;
    for i in 0..CONTROL_DIM {
        g[f0 + i] -= kdf[i] * f_prev[i];
        constant += 0.5 * kdf[i] * f_prev[i] * f_prev[i];
    }
    h.finalize();
    Ok((h, g, constant))
}
