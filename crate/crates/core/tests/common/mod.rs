#![allow(dead_code)]

use momentum_mpc::sparse::SparseMatrix;
use momentum_mpc::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Small dense inequality-constrained QP, kept alongside its sparse form.
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DenseQp {
    pub fn to_problem(&self) -> QpProblem {
        let n = self.g.len();
        let m = self.b.len();
        let mut hessian = SparseMatrix::new(n, n);
        for i in 0..n {
            for j in 0..n {
                if self.h[(i, j)] != 0.0 {
                    hessian.push(i, j, self.h[(i, j)]);
                }
            }
        }
        let mut ineq = SparseMatrix::new(m, n);
        for i in 0..m {
            for j in 0..n {
                if self.a[(i, j)] != 0.0 {
                    ineq.push(i, j, self.a[(i, j)]);
                }
            }
        }
        QpProblem {
            hessian,
            gradient: self.g.as_slice().to_vec(),
            eq_matrix: SparseMatrix::new(0, n),
            eq_rhs: vec![],
            ineq_matrix: ineq,
            ineq_rhs: self.b.as_slice().to_vec(),
            cost_constant: 0.0,
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }
}

/// Strictly convex, feasible by construction: `b = A·x₀ + slack` with
/// some slacks zero so that constraints tend to bind.
pub fn random_qp<R: Rng>(rng: &mut R) -> DenseQp {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=8);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(m, |_, _| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) });
    let b = &a * x0 + slack;
    DenseQp { h, g, a, b }
}

/// Solves the equality-constrained problem on every subset of rows and keeps
/// the best point that is feasible with nonnegative multipliers.
pub fn enumerate_active_sets(qp: &DenseQp) -> DVector<f64> {
    let n = qp.g.len();
    let m = qp.b.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > n {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.g));
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = qp.a[(i, j)];
                kkt[(j, n + r)] = qp.a[(i, j)];
            }
            rhs[n + r] = qp.b[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let mu = sol.rows(n, k);
        let feasible = (&qp.a * &x - &qp.b).iter().all(|v| *v <= 1e-9);
        if !feasible || mu.iter().any(|v| *v < -1e-9) {
            continue;
        }
        let f = qp.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.expect("feasible problem has a KKT point").1
}
