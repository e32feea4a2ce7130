//! Static checks on a scenario: builds the first-cycle QP and verifies its
//! structure and solution without running the simulation.

use nalgebra::DMatrix;

use crate::config::ScenarioConfig;
use crate::contact::stance_block;
use crate::controller::MpcController;
use crate::error::SimError;
use crate::model::{exact_momentum_rate, linearize, ContactGeometry};
use crate::sim::initial_plant_state;
use crate::solver::SolveStatus;
use crate::controller::{equilibrium_wrench, SteppingState};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the invariant suite on the first controller cycle of `config`.
pub fn check_scenario(config: &ScenarioConfig) -> Result<Vec<CheckResult>, SimError> {
    config.validate()?;
    let ctrl = config.controller_config();
    let plant = initial_plant_state(config);
    let wrench = equilibrium_wrench(
        &plant.momentum.com_position,
        &ctrl.left_foot,
        &plant.right_foot,
        plant.right_contact,
        ctrl.mass,
        ctrl.gravity,
    );
    let stepping = if plant.right_contact {
        SteppingState::double_support(plant.right_foot, &wrench)
    } else {
        SteppingState::single_support(plant.right_foot, &wrench)
    };
    let mut results = Vec::new();
    let mut record = |name, passed, detail: String| results.push(CheckResult { name, passed, detail });

    let geometry = ContactGeometry::new(ctrl.left_foot, plant.right_foot, ctrl.mass, ctrl.gravity)
        .map_err(crate::error::ControllerError::from)?;
    let affine = linearize(&plant.momentum, &wrench, &geometry);
    let exact = exact_momentum_rate(&plant.momentum, &wrench, &geometry);
    let gap = (affine.evaluate(&plant.momentum.to_vector(), &wrench.to_vector()) - exact).amax();
    record("taylor_exact_at_expansion", gap < 1e-12, format!("residual {gap:.3e}"));

    let mut controller = MpcController::new(ctrl.clone())?;
    let (output, _) = controller.control_step(&plant.momentum, &wrench, plant.right_contact, &stepping)?;
    let problem = controller.last_problem().expect("problem assembled").clone();

    let h = problem.hessian.to_dense();
    let asym = (&h - h.transpose()).amax();
    record("hessian_symmetric", asym < 1e-12, format!("max asymmetry {asym:.3e}"));
    let min_eig = DMatrix::symmetric_eigenvalues(&h).min();
    record("hessian_psd", min_eig > -1e-9, format!("min eigenvalue {min_eig:.3e}"));

    let layout = *controller.layout();
    let chi = layout.stack(&output.predicted_states, &output.predicted_controls);
    let eq = problem.eq_matrix.mul_vec(&chi);
    let eq_res = eq
        .iter()
        .zip(&problem.eq_rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    record("dynamics_residual", eq_res < 1e-4, format!("max residual {eq_res:.3e}"));

    let status_ok = output.solve_stats.status == SolveStatus::Solved;
    record(
        "solver_status",
        status_ok,
        format!("{:?} after {} iterations", output.solve_stats.status, output.solve_stats.iterations),
    );
    let (kkt, tol) = (&output.solve_stats.kkt, &output.solve_stats.kkt_tolerance);
    record(
        "kkt_residuals",
        kkt.within(tol),
        format!(
            "stationarity {:.3e} (tol {:.1e}), primal {:.3e} (tol {:.1e}), complementarity {:.3e} (tol {:.1e})",
            kkt.stationarity, tol.stationarity, kkt.primal, tol.primal, kkt.complementarity, tol.complementarity
        ),
    );

    let block = stance_block(&ctrl.foot);
    let violation = block.violation(&output.wrench_command.left.to_vector());
    record("stance_wrench_feasible", violation <= 1e-5, format!("max violation {violation:.3e}"));

    let fz = output.wrench_command.total_force().z;
    let weight = ctrl.mass * ctrl.gravity;
    record(
        "vertical_force_balance",
        (fz - weight).abs() <= 1e-2 * weight,
        format!("f_z {fz:.4} N vs m g {weight:.4} N"),
    );
    Ok(results)
}
