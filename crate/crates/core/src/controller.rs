//! Receding-horizon loop: re-linearize at the feedback, manage the stepping
//! state machine, assemble and solve the QP, apply the first wrench.

use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::{stance_block, support_polygon, FootParams, SupportPolygon};
use crate::cost::{build_references, clamp_impact_stage, nominal_wrenches, CostWeights};
use crate::error::ControllerError;
use crate::model::{
    discretize, linearize, ContactGeometry, ContactWrench, ControlVector, MomentumState,
    StateVector, WrenchPair, CONTROL_DIM, STATE_DIM,
};
use crate::solver::{kkt_residuals, kkt_tolerances, KktResiduals, QpSolution, QpSolver, SolveStatus, SolverSettings};
use crate::transcription::{
    build_cost, build_equality, build_inequalities, ChiLayout, QpProblem, STAGE_DIM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteppingPhase {
    DoubleSupport,
    SingleSupport,
    Swing,
    PostStep,
}

impl SteppingPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            SteppingPhase::DoubleSupport => "double_support",
            SteppingPhase::SingleSupport => "single_support",
            SteppingPhase::Swing => "swing",
            SteppingPhase::PostStep => "post_step",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteppingState {
    pub phase: SteppingPhase,
    /// Stage at which the right foot is expected to touch down (`k_impact`).
    pub impact_index: usize,
    pub planned_impact_time: f64,
    /// Touchdown point during and after a step; the right foot location in
    /// double support.
    pub swing_target: Vector3<f64>,
    /// Last applied wrench, the `f(−1)` datum of the wrench-rate cost.
    pub f_prev: ControlVector,
}

impl SteppingState {
    /// Standing on the left foot with the right foot lifted.
    pub fn single_support(right_foot: Vector3<f64>, f_prev: &WrenchPair) -> Self {
        Self {
            phase: SteppingPhase::SingleSupport,
            impact_index: 0,
            planned_impact_time: 0.0,
            swing_target: right_foot,
            f_prev: f_prev.to_vector(),
        }
    }

    pub fn double_support(right_foot: Vector3<f64>, f_prev: &WrenchPair) -> Self {
        Self {
            phase: SteppingPhase::DoubleSupport,
            impact_index: 0,
            planned_impact_time: 0.0,
            swing_target: right_foot,
            f_prev: f_prev.to_vector(),
        }
    }

    /// Impact stage used by the QP: beyond the horizon when no step is planned.
    pub fn effective_impact_stage(&self, horizon: usize) -> usize {
        match self.phase {
            SteppingPhase::SingleSupport => horizon + 1,
            SteppingPhase::Swing => self.impact_index,
            SteppingPhase::DoubleSupport | SteppingPhase::PostStep => 0,
        }
    }

    pub fn right_foot_loaded(&self) -> bool {
        matches!(self.phase, SteppingPhase::DoubleSupport | SteppingPhase::PostStep)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub dt: f64,
    pub horizon: usize,
    pub mass: f64,
    pub gravity: f64,
    pub com_height: f64,
    pub left_foot: Vector3<f64>,
    pub foot: FootParams,
    pub weights: CostWeights,
    pub solver: SolverSettings,
    pub trigger_margin: f64,
    pub step_duration: f64,
    pub reach_radius: f64,
    pub step_target: StepTarget,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 25,
            mass: crate::model::DEFAULT_MASS,
            gravity: crate::model::DEFAULT_GRAVITY,
            com_height: 0.53,
            left_foot: Vector3::new(0.0, 0.08, 0.0),
            foot: FootParams::default(),
            weights: CostWeights::default(),
            solver: SolverSettings::default(),
            trigger_margin: 0.02,
            step_duration: 0.6,
            reach_radius: 0.35,
            step_target: StepTarget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub polished: bool,
    pub wall_time: Duration,
    /// Whole cycle: linearization, assembly and solve.
    pub cycle_time: Duration,
    pub kkt: KktResiduals,
    /// Thresholds the residuals are held to on a solved status.
    pub kkt_tolerance: KktResiduals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    /// `f(0)`, or the held previous command when the QP was infeasible.
    pub wrench_command: WrenchPair,
    /// `γ(1..=N)`.
    pub predicted_states: Vec<StateVector>,
    /// `f(0..N)`.
    pub predicted_controls: Vec<ControlVector>,
    pub solve_stats: SolveStats,
    /// Impact stage the QP was built with.
    pub impact_stage: usize,
    /// A step was planned during this cycle.
    pub triggered: bool,
    /// The solver did not certify the solution.
    pub degraded: bool,
}

/// `k_impact` bookkeeping: reset on contact, otherwise count down and
/// saturate at one.
pub fn update_impact_index(current: usize, contact_established: bool) -> usize {
    if contact_established {
        0
    } else {
        current.saturating_sub(1).max(1)
    }
}

/// `⌈t_impact / dt⌉`, robust to representation error in the quotient.
pub fn initial_impact_index(t_impact: f64, dt: f64) -> usize {
    let ratio = t_impact / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() < 1e-9 * ratio.abs().max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Instantaneous capture point `x_xy + ẋ_xy·√(z/g)`.
pub fn capture_point(state: &MomentumState, com_height: f64, gravity: f64) -> Vector2<f64> {
    let omega_inv = (com_height / gravity).sqrt();
    state.com_position.xy() + state.com_velocity.xy() * omega_inv
}

/// Fires when the capture point lies farther than `margin` outside the polygon.
pub fn step_trigger(
    state: &MomentumState,
    polygon: &SupportPolygon,
    com_height: f64,
    gravity: f64,
    margin: f64,
) -> bool {
    let cp = capture_point(state, com_height, gravity);
    polygon.signed_distance(&cp) > margin
}

/// Which capture point the footstep is placed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepTarget {
    /// The capture point at the moment the step is planned.
    Instantaneous,
    /// The capture point extrapolated to touchdown, with the centre of
    /// pressure held at the point of the stance foot closest to it.
    #[default]
    Touchdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub reach_radius: f64,
    pub step_duration: f64,
    pub com_height: f64,
    pub gravity: f64,
    pub target: StepTarget,
    pub foot_half_length: f64,
    pub foot_half_width: f64,
}

/// Pendulum extrapolation of the capture point over `duration`.
pub fn predicted_capture_point(
    state: &MomentumState,
    stance_foot: &Vector3<f64>,
    params: &StepParams,
    duration: f64,
) -> Vector2<f64> {
    let cp = capture_point(state, params.com_height, params.gravity);
    let cop = Vector2::new(
        cp.x.clamp(stance_foot.x - params.foot_half_length, stance_foot.x + params.foot_half_length),
        cp.y.clamp(stance_foot.y - params.foot_half_width, stance_foot.y + params.foot_half_width),
    );
    let omega = (params.gravity / params.com_height).sqrt();
    cop + (cp - cop) * (omega * duration).exp()
}

/// Touchdown target and duration. Stands in for an external footstep planner:
/// a capture point, clamped to a disc around the stance foot.
pub fn plan_step(
    state: &MomentumState,
    stance_foot: &Vector3<f64>,
    params: &StepParams,
) -> (Vector3<f64>, f64) {
    let cp = match params.target {
        StepTarget::Instantaneous => capture_point(state, params.com_height, params.gravity),
        StepTarget::Touchdown => predicted_capture_point(state, stance_foot, params, params.step_duration),
    };
    let offset = cp - stance_foot.xy();
    let dist = offset.norm();
    let target = if dist > params.reach_radius {
        stance_foot.xy() + offset * (params.reach_radius / dist)
    } else {
        cp
    };
    (Vector3::new(target.x, target.y, 0.0), params.step_duration)
}

/// Wrench pair with zero momentum rate for a CoM at rest. With both feet
/// loaded the weight is split by where the CoM projects onto the segment
/// between them, so the vertical forces carry the moment along that line;
/// foot torques absorb whatever is left.
pub fn equilibrium_wrench(
    com: &Vector3<f64>,
    left_foot: &Vector3<f64>,
    right_foot: &Vector3<f64>,
    right_loaded: bool,
    mass: f64,
    gravity: f64,
) -> WrenchPair {
    let weight = mass * gravity;
    let right_share = if right_loaded {
        let span = (right_foot - left_foot).xy();
        let along = (com - left_foot).xy().dot(&span) / span.norm_squared().max(f64::EPSILON);
        along.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let shares = [1.0 - right_share, right_share];
    let forces = shares.map(|s| Vector3::new(0.0, 0.0, weight * s));
    let moment = (left_foot - com).cross(&forces[0]) + (right_foot - com).cross(&forces[1]);
    let left = ContactWrench::new(forces[0], -moment * shares[0]);
    let right = if right_loaded {
        ContactWrench::new(forces[1], -moment * shares[1])
    } else {
        ContactWrench::zero()
    };
    WrenchPair::new(left, right)
}

pub struct MpcController {
    config: ControllerConfig,
    layout: ChiLayout,
    solver: QpSolver,
    previous: Option<QpSolution>,
    last_command: Option<WrenchPair>,
    last_problem: Option<QpProblem>,
}

impl MpcController {
    pub fn new(config: ControllerConfig) -> Result<Self, ControllerError> {
        config.foot.validate()?;
        let layout = ChiLayout::new(config.horizon)?;
        let solver = QpSolver::new(config.solver.clone())?;
        if !(config.dt > 0.0 && config.dt.is_finite()) {
            return Err(crate::error::ModelError::InvalidTimeStep(config.dt).into());
        }
        Ok(Self {
            config,
            layout,
            solver,
            previous: None,
            last_command: None,
            last_problem: None,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn layout(&self) -> &ChiLayout {
        &self.layout
    }

    /// The QP assembled in the most recent cycle.
    pub fn last_problem(&self) -> Option<&QpProblem> {
        self.last_problem.as_ref()
    }

    /// Forgets the warm start.
    pub fn reset_warm_start(&mut self) {
        self.previous = None;
    }

    pub fn step_params(&self) -> StepParams {
        StepParams {
            reach_radius: self.config.reach_radius,
            step_duration: self.config.step_duration,
            com_height: self.config.com_height,
            gravity: self.config.gravity,
            target: self.config.step_target,
            foot_half_length: self.config.foot.foot_half_length,
            foot_half_width: self.config.foot.foot_half_width,
        }
    }

    /// Support polygon implied by the stepping phase (planned touchdown
    /// included once a step is under way).
    pub fn support_polygon(&self, stepping: &SteppingState) -> Result<SupportPolygon, ControllerError> {
        let feet: Vec<Vector3<f64>> = match stepping.phase {
            SteppingPhase::SingleSupport => vec![self.config.left_foot],
            _ => vec![self.config.left_foot, stepping.swing_target],
        };
        Ok(support_polygon(&feet, &self.config.foot)?)
    }

    /// Runs one controller cycle.
    ///
    /// `contact_established` reports whether the right foot is touching the
    /// ground according to the plant.
    pub fn control_step(
        &mut self,
        feedback: &MomentumState,
        measured_wrench: &WrenchPair,
        contact_established: bool,
        stepping: &SteppingState,
    ) -> Result<(ControllerOutput, SteppingState), ControllerError> {
        let cycle_start = Instant::now();
        let cfg = &self.config;
        let n = cfg.horizon;
        let mut next = stepping.clone();

        if next.phase == SteppingPhase::Swing {
            next.impact_index = update_impact_index(next.impact_index, contact_established);
            if next.impact_index == 0 {
                next.phase = SteppingPhase::PostStep;
            }
        }

        let mut triggered = false;
        if next.phase == SteppingPhase::SingleSupport {
            let polygon = support_polygon(&[cfg.left_foot], &cfg.foot)?;
            if step_trigger(feedback, &polygon, cfg.com_height, cfg.gravity, cfg.trigger_margin) {
                let (target, t_impact) = plan_step(feedback, &cfg.left_foot, &self.step_params());
                next.phase = SteppingPhase::Swing;
                next.swing_target = target;
                next.planned_impact_time = t_impact;
                next.impact_index = initial_impact_index(t_impact, cfg.dt).max(1);
                triggered = true;
            }
        }

        let geometry = ContactGeometry::new(cfg.left_foot, next.swing_target, cfg.mass, cfg.gravity)?;
        let continuous = linearize(feedback, measured_wrench, &geometry);
        let model = discretize(&continuous, cfg.dt)?;

        let impact_stage = next.effective_impact_stage(n);
        let centroid = self.support_polygon(&next)?.centroid();
        let refs = build_references(feedback, &centroid, cfg.com_height, n)
            .with_wrenches(nominal_wrenches(impact_stage, n, cfg.mass, cfg.gravity));

        let (eq_matrix, eq_rhs) = build_equality(&model, feedback, &self.layout);
        let block = stance_block(&cfg.foot);
        let (ineq_matrix, ineq_rhs) =
            build_inequalities(&block, &block, impact_stage, &self.layout, &cfg.foot);
        let (hessian, gradient, cost_constant) = build_cost(
            &cfg.weights,
            &refs,
            clamp_impact_stage(impact_stage, n),
            &next.f_prev,
            &self.layout,
        )?;
        let problem = QpProblem {
            hessian,
            gradient,
            eq_matrix,
            eq_rhs,
            ineq_matrix,
            ineq_rhs,
            cost_constant,
        };

        let start = Instant::now();
        let warm = self.previous.as_ref().map(|p| shift_solution(p, &self.layout, block.a.nrows()));
        let solution = self.solver.solve(&problem, warm.as_ref())?;
        let wall_time = start.elapsed();
        let kkt = kkt_residuals(&problem, &solution);
        let kkt_tolerance = kkt_tolerances(&problem, &solution, &cfg.solver);

        let predicted_states: Vec<StateVector> =
            (1..=n).map(|k| self.layout.state_at(&solution.primal, k)).collect();
        let predicted_controls: Vec<ControlVector> =
            (0..n).map(|k| self.layout.control_at(&solution.primal, k)).collect();

        let infeasible = solution.status == SolveStatus::PrimalInfeasible;
        let wrench_command = if infeasible {
            self.last_command
                .unwrap_or_else(|| WrenchPair::from_vector(&stepping.f_prev))
        } else {
            WrenchPair::from_vector(&predicted_controls[0])
        };
        next.f_prev = wrench_command.to_vector();
        self.last_command = Some(wrench_command);

        let mut stats = SolveStats {
            status: solution.status,
            iterations: solution.iterations,
            polished: solution.polished,
            wall_time,
            cycle_time: Duration::ZERO,
            kkt,
            kkt_tolerance,
        };
        if infeasible {
            self.previous = None;
        } else {
            self.previous = Some(solution);
        }
        self.last_problem = Some(problem);

        stats.cycle_time = cycle_start.elapsed();
        Ok((
            ControllerOutput {
                wrench_command,
                predicted_states,
                predicted_controls,
                solve_stats: stats.clone(),
                impact_stage,
                triggered,
                degraded: stats.status != SolveStatus::Solved,
            },
            next,
        ))
    }
}

/// Moves every stage block one step earlier and repeats the last one.
pub fn shift_solution(previous: &QpSolution, layout: &ChiLayout, rows_per_foot: usize) -> QpSolution {
    let shift = |v: &[f64], block: usize| -> Vec<f64> {
        if v.len() < block {
            return v.to_vec();
        }
        let mut out = Vec::with_capacity(v.len());
        out.extend_from_slice(&v[block..]);
        out.extend_from_slice(&v[v.len() - block..]);
        out
    };
    debug_assert_eq!(previous.primal.len(), layout.total_dim());
    QpSolution {
        primal: shift(&previous.primal, STAGE_DIM),
        dual_eq: shift(&previous.dual_eq, STATE_DIM),
        dual_ineq: shift(&previous.dual_ineq, 2 * rows_per_foot),
        objective: previous.objective,
        status: previous.status,
        iterations: previous.iterations,
        polished: previous.polished,
    }
}

// Keeps CONTROL_DIM referenced for readers of the layout math above.
const _: () = assert!(STAGE_DIM == STATE_DIM + CONTROL_DIM);
