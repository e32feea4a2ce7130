//! Convex QP solver.
//!
//! Operator splitting (ADMM) on `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u`, with the
//! equality block folded in as rows where `l = u`. The linear system at each
//! iteration is the quasi-definite matrix `[P + σI, Aᵀ; A, −diag(1/ρ)]`,
//! factored with a sparse LDLᵀ under a cached minimum-degree ordering. Data is
//! equilibrated (Ruiz), the penalty adapts on a fixed iteration schedule, and
//! a converged iterate is polished by solving the equality-constrained problem
//! on the detected active set.

pub mod ldl;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::sparse::{CscMatrix, SparseMatrix};
use crate::transcription::QpProblem;
use ldl::LdlFactor;

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const EQ_RHO_FACTOR: f64 = 1e3;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE_ITERS: usize = 5;
/// Active-set rounds for polish attempts during the iteration and at the end.
const EARLY_POLISH_ROUNDS: usize = 6;
const FINAL_POLISH_ROUNDS: usize = 20;
const EARLY_POLISH_FACTOR: f64 = 1e3;
const EARLY_POLISH_SPACING: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    /// Initial penalty.
    pub rho: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub adaptive_rho: bool,
    /// Iterations between penalty updates.
    pub adaptive_rho_interval: usize,
    /// The penalty is only changed when the suggested value differs by this factor.
    pub adaptive_rho_tolerance: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub scaling_iterations: usize,
    pub infeasibility_tolerance: f64,
    /// Iterations between termination checks.
    pub check_interval: usize,
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            abs_tolerance: 1e-6,
            rel_tolerance: 1e-6,
            max_iterations: 4000,
            rho: 0.1,
            rho_min: 1e-6,
            rho_max: 1e6,
            adaptive_rho: true,
            adaptive_rho_interval: 25,
            adaptive_rho_tolerance: 5.0,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iterations: 10,
            infeasibility_tolerance: 1e-5,
            check_interval: 5,
            polish: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        let check = |ok: bool, field: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(SolverError::InvalidSettings {
                    field,
                    reason: reason.to_string(),
                })
            }
        };
        check(self.abs_tolerance > 0.0, "abs_tolerance", "must be > 0")?;
        check(self.rel_tolerance > 0.0, "rel_tolerance", "must be > 0")?;
        check(self.max_iterations > 0, "max_iterations", "must be > 0")?;
        check(self.rho > 0.0, "rho", "must be > 0")?;
        check(
            self.rho_min > 0.0 && self.rho_min <= self.rho_max,
            "rho_min",
            "must be > 0 and <= rho_max",
        )?;
        check(self.sigma > 0.0, "sigma", "must be > 0")?;
        check(self.alpha > 0.0 && self.alpha < 2.0, "alpha", "must lie in (0, 2)")?;
        check(
            self.adaptive_rho_interval > 0,
            "adaptive_rho_interval",
            "must be > 0",
        )?;
        check(
            self.adaptive_rho_tolerance >= 1.0,
            "adaptive_rho_tolerance",
            "must be >= 1",
        )?;
        check(
            self.infeasibility_tolerance > 0.0,
            "infeasibility_tolerance",
            "must be > 0",
        )?;
        check(self.check_interval > 0, "check_interval", "must be > 0")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub primal: Vec<f64>,
    pub dual_eq: Vec<f64>,
    pub dual_ineq: Vec<f64>,
    /// `½xᵀHx + gᵀx + cost_constant`.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

/// Infinity norms of the stationarity, primal feasibility and complementarity residuals.
pub fn kkt_residuals(problem: &QpProblem, solution: &QpSolution) -> KktResiduals {
    let x = &solution.primal;
    let mut grad = problem.hessian.mul_vec(x);
    for (g, q) in grad.iter_mut().zip(&problem.gradient) {
        *g += q;
    }
    let eq_t = problem.eq_matrix.transpose_mul_vec(&solution.dual_eq);
    let in_t = problem.ineq_matrix.transpose_mul_vec(&solution.dual_ineq);
    let stationarity = grad
        .iter()
        .zip(&eq_t)
        .zip(&in_t)
        .map(|((g, a), b)| (g + a + b).abs())
        .fold(0.0, f64::max);

    let eq_res = problem
        .eq_matrix
        .mul_vec(x)
        .iter()
        .zip(&problem.eq_rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let slack: Vec<f64> = problem
        .ineq_matrix
        .mul_vec(x)
        .iter()
        .zip(&problem.ineq_rhs)
        .map(|(a, b)| a - b)
        .collect();
    let ineq_res = slack.iter().map(|s| s.max(0.0)).fold(0.0, f64::max);
    let dual_neg = solution
        .dual_ineq
        .iter()
        .map(|y| (-y).max(0.0))
        .fold(0.0, f64::max);
    let complementarity = slack
        .iter()
        .zip(&solution.dual_ineq)
        .map(|(s, y)| (s * y).abs())
        .fold(0.0, f64::max);
    KktResiduals {
        stationarity,
        primal: eq_res.max(ineq_res).max(dual_neg),
        complementarity,
    }
}

/// Per-group thresholds matching the termination test, in unscaled units:
/// `abs + rel · (magnitude of the terms in that residual)`.
pub fn kkt_tolerances(problem: &QpProblem, solution: &QpSolution, settings: &SolverSettings) -> KktResiduals {
    let x = &solution.primal;
    let primal_scale = inf_norm(&problem.eq_matrix.mul_vec(x))
        .max(inf_norm(&problem.ineq_matrix.mul_vec(x)))
        .max(inf_norm(&problem.eq_rhs))
        .max(problem.ineq_rhs.iter().filter(|b| b.is_finite()).fold(0.0, |m, b| f64::max(m, b.abs())));
    let dual_scale = inf_norm(&problem.hessian.mul_vec(x))
        .max(inf_norm(&problem.gradient))
        .max(inf_norm(&problem.eq_matrix.transpose_mul_vec(&solution.dual_eq)))
        .max(inf_norm(&problem.ineq_matrix.transpose_mul_vec(&solution.dual_ineq)));
    let primal = settings.abs_tolerance + settings.rel_tolerance * primal_scale;
    KktResiduals {
        stationarity: settings.abs_tolerance + settings.rel_tolerance * dual_scale,
        primal,
        complementarity: primal * inf_norm(&solution.dual_ineq).max(1.0),
    }
}

impl KktResiduals {
    /// True when every group is at or below the matching entry of `tol`.
    pub fn within(&self, tol: &KktResiduals) -> bool {
        self.stationarity <= tol.stationarity
            && self.primal <= tol.primal
            && self.complementarity <= tol.complementarity
    }
}

/// One-shot solve with a fresh solver instance.
pub fn solve(
    problem: &QpProblem,
    warm_start: Option<&QpSolution>,
    settings: &SolverSettings,
) -> Result<QpSolution, SolverError> {
    QpSolver::new(settings.clone())?.solve(problem, warm_start)
}

/// Sparsity pattern and fill-reducing ordering of the ADMM matrix, reused
/// while the problem structure stays the same.
#[derive(Debug, Clone)]
struct KktTemplate {
    p_pattern: (Vec<usize>, Vec<usize>),
    a_pattern: (Vec<usize>, Vec<usize>),
    /// `perm[new] = old` over the `n + m` KKT indices.
    perm: Vec<usize>,
    matrix: CscMatrix,
    /// KKT value slot of every stored entry of P's upper triangle, in CSC order.
    p_slots: Vec<usize>,
    a_slots: Vec<usize>,
    diag_x_slots: Vec<usize>,
    diag_y_slots: Vec<usize>,
}

impl KktTemplate {
    fn build(p: &CscMatrix, a: &CscMatrix) -> Self {
        let n = p.cols;
        let m = a.rows;
        let mut adjacency = vec![Vec::new(); n + m];
        for j in 0..n {
            for (i, _) in p.column(j) {
                if i != j {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
            for (i, _) in a.column(j) {
                adjacency[n + i].push(j);
                adjacency[j].push(n + i);
            }
        }
        let perm = ldl::minimum_degree(&adjacency);
        let inv = ldl::invert(&perm);

        // Tagged triplets: (row, col, source id).
        let mut entries: Vec<(usize, usize, usize)> = Vec::new();
        let upper = |r: usize, c: usize| {
            let (r, c) = (inv[r], inv[c]);
            if r <= c {
                (r, c)
            } else {
                (c, r)
            }
        };
        let mut n_p = 0;
        for j in 0..n {
            for (i, _) in p.column(j) {
                if i <= j {
                    let (r, c) = upper(i, j);
                    entries.push((r, c, n_p));
                    n_p += 1;
                }
            }
        }
        let base_a = n_p;
        let mut n_a = 0;
        for j in 0..n {
            for (i, _) in a.column(j) {
                let (r, c) = upper(j, n + i);
                entries.push((r, c, base_a + n_a));
                n_a += 1;
            }
        }
        let base_dx = base_a + n_a;
        for j in 0..n {
            let (r, c) = upper(j, j);
            entries.push((r, c, base_dx + j));
        }
        let base_dy = base_dx + n;
        for i in 0..m {
            let (r, c) = upper(n + i, n + i);
            entries.push((r, c, base_dy + i));
        }
        entries.sort_unstable_by(|x, y| x.1.cmp(&y.1).then(x.0.cmp(&y.0)));

        let total = base_dy + m;
        let mut slot_of = vec![0usize; total];
        let mut col_ptr = vec![0usize; n + m + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, src) in &entries {
            if last != Some((r, c)) {
                row_idx.push(r);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
            slot_of[src] = row_idx.len() - 1;
        }
        for c in 0..n + m {
            col_ptr[c + 1] += col_ptr[c];
        }
        let nnz = row_idx.len();
        Self {
            p_pattern: (p.col_ptr.clone(), p.row_idx.clone()),
            a_pattern: (a.col_ptr.clone(), a.row_idx.clone()),
            perm,
            matrix: CscMatrix {
                rows: n + m,
                cols: n + m,
                col_ptr,
                row_idx,
                values: vec![0.0; nnz],
            },
            p_slots: slot_of[..base_a].to_vec(),
            a_slots: slot_of[base_a..base_dx].to_vec(),
            diag_x_slots: slot_of[base_dx..base_dy].to_vec(),
            diag_y_slots: slot_of[base_dy..].to_vec(),
        }
    }

    fn matches(&self, p: &CscMatrix, a: &CscMatrix) -> bool {
        self.p_pattern.0 == p.col_ptr
            && self.p_pattern.1 == p.row_idx
            && self.a_pattern.0 == a.col_ptr
            && self.a_pattern.1 == a.row_idx
    }

    fn factor(
        &mut self,
        p: &CscMatrix,
        a: &CscMatrix,
        sigma: f64,
        rho: &[f64],
    ) -> Result<LdlFactor, SolverError> {
        let values = &mut self.matrix.values;
        values.iter_mut().for_each(|v| *v = 0.0);
        let mut k = 0;
        for j in 0..p.cols {
            for (i, v) in p.column(j) {
                if i <= j {
                    values[self.p_slots[k]] += v;
                    k += 1;
                }
            }
        }
        for (slot, v) in self.a_slots.iter().zip(&a.values) {
            values[*slot] += v;
        }
        for slot in &self.diag_x_slots {
            values[*slot] += sigma;
        }
        for (slot, r) in self.diag_y_slots.iter().zip(rho) {
            values[*slot] -= 1.0 / r;
        }
        LdlFactor::factor(&self.matrix)
    }
}

/// Solver instance; owns the ordering cache and scratch space.
#[derive(Debug, Clone)]
pub struct QpSolver {
    settings: SolverSettings,
    template: Option<KktTemplate>,
}

struct Scaled {
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
}

impl QpSolver {
    pub fn new(settings: SolverSettings) -> Result<Self, SolverError> {
        settings.validate()?;
        Ok(Self {
            settings,
            template: None,
        })
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn solve(
        &mut self,
        problem: &QpProblem,
        warm_start: Option<&QpSolution>,
    ) -> Result<QpSolution, SolverError> {
        let n = problem.dim();
        let m_eq = problem.eq_rhs.len();
        let m_in = problem.ineq_rhs.len();
        let m = m_eq + m_in;
        check_dims(problem)?;

        let p_full = problem.hessian.to_csc();
        let mut a_trip = SparseMatrix::new(m, n);
        a_trip.triplets.extend(problem.eq_matrix.triplets.iter().copied());
        a_trip
            .triplets
            .extend(problem.ineq_matrix.triplets.iter().map(|&(r, c, v)| (r + m_eq, c, v)));
        let a_full = a_trip.to_csc();
        let mut l = problem.eq_rhs.clone();
        l.extend(std::iter::repeat_n(f64::NEG_INFINITY, m_in));
        let mut u = problem.eq_rhs.clone();
        u.extend(problem.ineq_rhs.iter().copied());

        let s = self.scale(&p_full, &problem.gradient, &a_full, &l, &u);
        let settings = self.settings.clone();

        if !self
            .template
            .as_ref()
            .is_some_and(|t| t.matches(&s.p, &s.a))
        {
            self.template = Some(KktTemplate::build(&s.p, &s.a));
        }
        let template = self.template.as_mut().expect("template initialised");

        let is_eq: Vec<bool> = (0..m).map(|i| s.l[i] == s.u[i]).collect();
        let mut rho_scalar = settings.rho;
        let rho_vec = |rho: f64| -> Vec<f64> {
            is_eq
                .iter()
                .map(|&eq| if eq { rho * EQ_RHO_FACTOR } else { rho })
                .collect()
        };
        let mut rho = rho_vec(rho_scalar);
        let mut rho_inv: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
        let mut factor = template.factor(&s.p, &s.a, settings.sigma, &rho)?;

        // Iterates in scaled space.
        let mut x = vec![0.0; n];
        let mut z = vec![0.0; m];
        let mut y = vec![0.0; m];
        if let Some(ws) = warm_start {
            if ws.primal.len() == n && ws.dual_eq.len() == m_eq && ws.dual_ineq.len() == m_in {
                for j in 0..n {
                    x[j] = ws.primal[j] / s.d[j];
                }
                let ax = s.a.mul_vec(&x);
                for i in 0..m {
                    z[i] = ax[i].clamp(s.l[i], s.u[i]);
                    let yi = if i < m_eq { ws.dual_eq[i] } else { ws.dual_ineq[i - m_eq] };
                    y[i] = s.c * yi / s.e[i];
                }
            }
        }

        let alpha = settings.alpha;
        let sigma = settings.sigma;
        let mut rhs = vec![0.0; n + m];
        let mut work = vec![0.0; n + m];
        let mut x_prev = x.clone();
        let mut z_prev = z.clone();
        let mut y_prev = y.clone();
        let mut status = SolveStatus::MaxIterations;
        let mut iterations = settings.max_iterations;
        let mut next_polish = 0;
        let mut last_signature: Vec<i8> = Vec::new();
        let mut early_polished = false;

        for iter in 1..=settings.max_iterations {
            std::mem::swap(&mut x, &mut x_prev);
            std::mem::swap(&mut z, &mut z_prev);
            std::mem::swap(&mut y, &mut y_prev);

            for j in 0..n {
                rhs[j] = sigma * x_prev[j] - s.q[j];
            }
            for i in 0..m {
                rhs[n + i] = z_prev[i] - y_prev[i] * rho_inv[i];
            }
            for (k, &old) in template.perm.iter().enumerate() {
                work[k] = rhs[old];
            }
            factor.solve_in_place(&mut work);
            for (k, &old) in template.perm.iter().enumerate() {
                rhs[old] = work[k];
            }
            for j in 0..n {
                x[j] = alpha * rhs[j] + (1.0 - alpha) * x_prev[j];
            }
            for i in 0..m {
                let z_tilde = z_prev[i] + (rhs[n + i] - y_prev[i]) * rho_inv[i];
                let z_relaxed = alpha * z_tilde + (1.0 - alpha) * z_prev[i];
                z[i] = (z_relaxed + y_prev[i] * rho_inv[i]).clamp(s.l[i], s.u[i]);
                y[i] = y_prev[i] + rho[i] * (z_relaxed - z[i]);
            }

            let check = iter % settings.check_interval == 0 || iter == settings.max_iterations;
            let adapt = settings.adaptive_rho && iter % settings.adaptive_rho_interval == 0;
            if !(check || adapt) {
                continue;
            }
            let res = residuals(&s, &x, &z, &y, &settings);
            if check {
                if res.prim <= res.eps_prim && res.dual <= res.eps_dual {
                    status = SolveStatus::Solved;
                    iterations = iter;
                    break;
                }
                // Close to convergence the active set has usually settled; a
                // successful polish ends the solve early.
                let loose = res.prim <= EARLY_POLISH_FACTOR * res.eps_prim
                    && res.dual <= EARLY_POLISH_FACTOR * res.eps_dual;
                let settled = loose && {
                    let current = active_signature(&s, &z, &y);
                    let same = current == last_signature;
                    last_signature = current;
                    same
                };
                if settings.polish && iter >= next_polish && settled {
                    next_polish = iter + EARLY_POLISH_SPACING;
                    if let Some((xp, yp)) = polish(&s, template, &x, &z, &y, &settings, EARLY_POLISH_ROUNDS) {
                        x = xp;
                        y = yp;
                        early_polished = true;
                        status = SolveStatus::Solved;
                        iterations = iter;
                        break;
                    }
                }
                if primal_infeasible(&s, &y, &y_prev, settings.infeasibility_tolerance) {
                    status = SolveStatus::PrimalInfeasible;
                    iterations = iter;
                    break;
                }
            }
            if adapt {
                let suggested = suggest_rho(&s, &x, &z, &y, rho_scalar)
                    .clamp(settings.rho_min, settings.rho_max);
                let tol = settings.adaptive_rho_tolerance;
                if suggested > rho_scalar * tol || suggested < rho_scalar / tol {
                    rho_scalar = suggested;
                    rho = rho_vec(rho_scalar);
                    rho_inv = rho.iter().map(|r| 1.0 / r).collect();
                    factor = template.factor(&s.p, &s.a, sigma, &rho)?;
                }
            }
        }

        let mut polished = early_polished;
        if settings.polish && !early_polished && status != SolveStatus::PrimalInfeasible {
            if let Some((xp, yp)) = polish(&s, template, &x, &z, &y, &settings, FINAL_POLISH_ROUNDS) {
                x = xp;
                y = yp;
                polished = true;
                status = SolveStatus::Solved;
            }
        }
        let primal: Vec<f64> = x.iter().zip(&s.d).map(|(v, d)| v * d).collect();
        let dual: Vec<f64> = y
            .iter()
            .zip(&s.e)
            .map(|(v, e)| v * e / s.c)
            .collect();
        let dual_eq = dual[..m_eq].to_vec();
        let dual_ineq = dual[m_eq..].iter().map(|v| v.max(0.0)).collect();
        let objective = problem.objective(&primal) + problem.cost_constant;
        Ok(QpSolution {
            primal,
            dual_eq,
            dual_ineq,
            objective,
            status,
            iterations,
            polished,
        })
    }

    fn scale(&self, p: &CscMatrix, q: &[f64], a: &CscMatrix, l: &[f64], u: &[f64]) -> Scaled {
        let n = p.cols;
        let m = a.rows;
        let mut p = p.clone();
        let mut a = a.clone();
        let mut q = q.to_vec();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;
        let limit = |v: f64| {
            if v < MIN_SCALING {
                1.0
            } else {
                v.min(MAX_SCALING)
            }
        };
        for _ in 0..self.settings.scaling_iterations {
            let p_norms = p.col_inf_norms();
            let a_col = a.col_inf_norms();
            let a_row = a.row_inf_norms();
            let dx: Vec<f64> = (0..n)
                .map(|j| 1.0 / limit(p_norms[j].max(a_col[j])).sqrt())
                .collect();
            let dz: Vec<f64> = (0..m).map(|i| 1.0 / limit(a_row[i]).sqrt()).collect();
            p.scale(&dx, &dx);
            a.scale(&dz, &dx);
            for j in 0..n {
                q[j] *= dx[j];
                d[j] *= dx[j];
            }
            for i in 0..m {
                e[i] *= dz[i];
            }
            let p_mean = if n > 0 {
                p.col_inf_norms().iter().sum::<f64>() / n as f64
            } else {
                0.0
            };
            let q_norm = inf_norm(&q);
            let gamma = 1.0 / limit(p_mean.max(q_norm));
            p.values.iter_mut().for_each(|v| *v *= gamma);
            q.iter_mut().for_each(|v| *v *= gamma);
            c *= gamma;
        }
        let l = l.iter().zip(&e).map(|(v, e)| v * e).collect();
        let u = u.iter().zip(&e).map(|(v, e)| v * e).collect();
        Scaled { p, q, a, l, u, d, e, c }
    }
}

fn check_dims(problem: &QpProblem) -> Result<(), SolverError> {
    let n = problem.dim();
    let h = &problem.hessian;
    if h.rows != n || h.cols != n {
        return Err(SolverError::Dimension(format!(
            "hessian is {}x{}, gradient has {n} entries",
            h.rows, h.cols
        )));
    }
    if problem.eq_matrix.cols != n || problem.eq_matrix.rows != problem.eq_rhs.len() {
        return Err(SolverError::Dimension("equality block".into()));
    }
    if problem.ineq_matrix.cols != n || problem.ineq_matrix.rows != problem.ineq_rhs.len() {
        return Err(SolverError::Dimension("inequality block".into()));
    }
    Ok(())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

fn residuals(s: &Scaled, x: &[f64], z: &[f64], y: &[f64], settings: &SolverSettings) -> Residuals {
    let ax = s.a.mul_vec(x);
    let px = s.p.mul_vec(x);
    let aty = s.a.transpose_mul_vec(y);
    let mut prim: f64 = 0.0;
    let mut ax_norm: f64 = 0.0;
    let mut z_norm: f64 = 0.0;
    for i in 0..ax.len() {
        let inv = 1.0 / s.e[i];
        prim = prim.max(((ax[i] - z[i]) * inv).abs());
        ax_norm = ax_norm.max((ax[i] * inv).abs());
        z_norm = z_norm.max((z[i] * inv).abs());
    }
    let mut dual: f64 = 0.0;
    let mut px_norm: f64 = 0.0;
    let mut aty_norm: f64 = 0.0;
    let mut q_norm: f64 = 0.0;
    let scale = 1.0 / s.c;
    for j in 0..x.len() {
        let inv = scale / s.d[j];
        dual = dual.max(((px[j] + s.q[j] + aty[j]) * inv).abs());
        px_norm = px_norm.max((px[j] * inv).abs());
        aty_norm = aty_norm.max((aty[j] * inv).abs());
        q_norm = q_norm.max((s.q[j] * inv).abs());
    }
    Residuals {
        prim,
        dual,
        eps_prim: settings.abs_tolerance + settings.rel_tolerance * ax_norm.max(z_norm),
        eps_dual: settings.abs_tolerance
            + settings.rel_tolerance * px_norm.max(aty_norm).max(q_norm),
    }
}

fn suggest_rho(s: &Scaled, x: &[f64], z: &[f64], y: &[f64], rho: f64) -> f64 {
    let ax = s.a.mul_vec(x);
    let px = s.p.mul_vec(x);
    let aty = s.a.transpose_mul_vec(y);
    let tiny = 1e-30;
    let prim = ax.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let prim_scale = inf_norm(&ax).max(inf_norm(z)).max(tiny);
    let dual = (0..x.len())
        .map(|j| (px[j] + s.q[j] + aty[j]).abs())
        .fold(0.0, f64::max);
    let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&s.q)).max(tiny);
    let ratio = (prim / prim_scale) / (dual / dual_scale).max(tiny);
    rho * ratio.sqrt()
}

fn primal_infeasible(s: &Scaled, y: &[f64], y_prev: &[f64], eps: f64) -> bool {
    let m = y.len();
    if m == 0 {
        return false;
    }
    let dy_scaled: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
    let dy: Vec<f64> = dy_scaled.iter().zip(&s.e).map(|(v, e)| v * e).collect();
    let norm = inf_norm(&dy);
    if norm < 1e-12 {
        return false;
    }
    let mut support = 0.0;
    for i in 0..m {
        // Bounds are scaled by e, dy_scaled by 1/e: u_i dy_i = ū_i dȳ_i.
        if dy_scaled[i] > 0.0 {
            if s.u[i].is_infinite() {
                return false;
            }
            support += s.u[i] * dy_scaled[i];
        } else if dy_scaled[i] < 0.0 {
            if s.l[i].is_infinite() {
                return false;
            }
            support += s.l[i] * dy_scaled[i];
        }
    }
    if support >= -eps * norm {
        return false;
    }
    let aty = s.a.transpose_mul_vec(&dy_scaled);
    let aty_norm = aty
        .iter()
        .zip(&s.d)
        .map(|(v, d)| (v / d).abs())
        .fold(0.0, f64::max);
    aty_norm <= eps * norm
}

/// Which bound each inequality row is predicted to be pinned to: -1 lower, 1 upper, 0 none.
fn active_signature(s: &Scaled, z: &[f64], y: &[f64]) -> Vec<i8> {
    (0..z.len())
        .map(|i| {
            if s.l[i] == s.u[i] {
                0
            } else if z[i] - s.l[i] < -y[i] {
                -1
            } else if s.u[i] - z[i] < y[i] {
                1
            } else {
                0
            }
        })
        .collect()
}

/// Solves the equality-constrained QP on the active set suggested by the
/// ADMM iterate. Returns scaled `(x, y)` when the result passes the KKT test.
/// Solves the equality-constrained QP on a guessed active set. Rows whose
/// multiplier comes out with the wrong sign are released and rows the
/// candidate violates are pinned, for a few rounds.
fn polish(
    s: &Scaled,
    template: &KktTemplate,
    x_admm: &[f64],
    z: &[f64],
    y: &[f64],
    settings: &SolverSettings,
    rounds: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = s.a.rows;
    let mut active: Vec<Option<f64>> = vec![None; m];
    for i in 0..m {
        if s.l[i] == s.u[i] || z[i] - s.l[i] < -y[i] {
            active[i] = Some(s.l[i]);
        } else if s.u[i] - z[i] < y[i] {
            active[i] = Some(s.u[i]);
        }
    }
    let res_admm = residuals(s, x_admm, z, y, settings);

    // Primal-dual active-set rounds: release every wrong-sign row and pin
    // every violated one. At degenerate vertices this can cycle; on a repeat
    // fall back to releasing the worst row of the last violation-free set.
    let mut bulk = true;
    let mut seen: Vec<Vec<Option<f64>>> = Vec::new();
    let mut fallback: Option<Vec<Option<f64>>> = None;
    for _ in 0..rounds {
        let (x, y_pol) = solve_active_set(s, template, &active)?;
        let ax = s.a.mul_vec(&x);
        let z_pol: Vec<f64> = (0..m).map(|i| ax[i].clamp(s.l[i], s.u[i])).collect();
        let res = residuals(s, &x, &z_pol, &y_pol, settings);

        let mut wrong_sign: Vec<(usize, f64)> = Vec::new();
        let mut violated: Vec<(usize, f64)> = Vec::new();
        for i in 0..m {
            if s.l[i] == s.u[i] {
                continue;
            }
            let yi = y_pol[i] * s.e[i] / s.c;
            match active[i] {
                Some(b) if b == s.u[i] && yi < -res.eps_dual => wrong_sign.push((i, -yi)),
                Some(b) if b == s.l[i] && yi > res.eps_dual => wrong_sign.push((i, yi)),
                None if ax[i] > s.u[i] + res.eps_prim => violated.push((i, s.u[i])),
                None if ax[i] < s.l[i] - res.eps_prim => violated.push((i, s.l[i])),
                _ => {}
            }
        }
        if wrong_sign.is_empty() && violated.is_empty() {
            let ok = res.prim <= res.eps_prim
                && res.dual <= res.eps_dual
                && res.prim <= res_admm.prim.max(res.eps_prim)
                && res.dual <= res_admm.dual.max(res.eps_dual);
            return ok.then_some((x, y_pol));
        }
        if violated.is_empty() {
            fallback = Some(active.clone());
        }

        let worst = wrong_sign.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|w| w.0);
        if bulk {
            seen.push(active.clone());
            wrong_sign.iter().for_each(|&(i, _)| active[i] = None);
            violated.iter().for_each(|&(i, bound)| active[i] = Some(bound));
            if seen.contains(&active) {
                bulk = false;
                active = fallback.take()?;
                // Re-derive the worst row for the restored set next round.
                continue;
            }
        } else {
            if let Some(w) = worst {
                active[w] = None;
            }
            violated.iter().for_each(|&(i, bound)| active[i] = Some(bound));
        }
    }
    None
}

fn solve_active_set(
    s: &Scaled,
    template: &KktTemplate,
    active: &[Option<f64>],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = s.p.cols;
    let m = s.a.rows;
    let active_rows: Vec<usize> = (0..m).filter(|&i| active[i].is_some()).collect();
    let n_act = active_rows.len();
    let mut row_pos = vec![usize::MAX; m];
    for (k, &i) in active_rows.iter().enumerate() {
        row_pos[i] = k;
    }

    // Reuse the cached ordering restricted to the kept indices.
    let order: Vec<usize> = template
        .perm
        .iter()
        .filter_map(|&old| {
            if old < n {
                Some(old)
            } else if row_pos[old - n] != usize::MAX {
                Some(n + row_pos[old - n])
            } else {
                None
            }
        })
        .collect();
    let inv = ldl::invert(&order);
    let dim = n + n_act;

    let build = |delta: f64| -> CscMatrix {
        let mut t = SparseMatrix::new(dim, dim);
        let mut push = |r: usize, c: usize, v: f64| {
            let (r, c) = (inv[r], inv[c]);
            t.triplets.push(if r <= c { (r, c, v) } else { (c, r, v) });
        };
        for j in 0..n {
            for (i, v) in s.p.column(j) {
                if i <= j {
                    push(i, j, v);
                }
            }
            push(j, j, delta);
            for (i, v) in s.a.column(j) {
                if row_pos[i] != usize::MAX {
                    push(j, n + row_pos[i], v);
                }
            }
        }
        for k in 0..n_act {
            push(n + k, n + k, -delta);
        }
        t.to_csc()
    };
    let factor = LdlFactor::factor(&build(POLISH_DELTA)).ok()?;

    let mut rhs = vec![0.0; dim];
    for j in 0..n {
        rhs[j] = -s.q[j];
    }
    for (k, &i) in active_rows.iter().enumerate() {
        rhs[n + k] = active[i].expect("active row");
    }

    let apply_true = |sol: &[f64]| -> Vec<f64> {
        let xs = &sol[..n];
        let mut out = s.p.mul_vec(xs);
        let mut ya = vec![0.0; m];
        for (k, &i) in active_rows.iter().enumerate() {
            ya[i] = sol[n + k];
        }
        let aty = s.a.transpose_mul_vec(&ya);
        for j in 0..n {
            out[j] += aty[j];
        }
        let ax = s.a.mul_vec(xs);
        out.extend(active_rows.iter().map(|&i| ax[i]));
        out
    };
    let permuted_solve = |b: &[f64]| -> Vec<f64> {
        let mut w: Vec<f64> = order.iter().map(|&old| b[old]).collect();
        factor.solve_in_place(&mut w);
        let mut out = vec![0.0; dim];
        for (k, &old) in order.iter().enumerate() {
            out[old] = w[k];
        }
        out
    };

    let mut sol = permuted_solve(&rhs);
    for _ in 0..POLISH_REFINE_ITERS {
        let kx = apply_true(&sol);
        let r: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
        let dx = permuted_solve(&r);
        for (s, d) in sol.iter_mut().zip(&dx) {
            *s += d;
        }
    }
    let x: Vec<f64> = sol[..n].to_vec();
    let mut y_pol = vec![0.0; m];
    for (k, &i) in active_rows.iter().enumerate() {
        y_pol[i] = sol[n + k];
    }
    if x.iter().chain(&y_pol).any(|v| !v.is_finite()) {
        return None;
    }

    Some((x, y_pol))
}
