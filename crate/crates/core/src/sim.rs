//! Closed-loop simulation: exact-dynamics plant, push disturbances, swing foot
//! motion, wrench tracking, run summary.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::{InitialStance, PushConfig, ScenarioConfig, TrackerConfig};
use crate::controller::{equilibrium_wrench, ControllerOutput, MpcController, SteppingPhase, SteppingState};
use crate::error::SimError;
use crate::model::{exact_momentum_rate, ContactGeometry, ContactWrench, MomentumState, StateVector, WrenchPair};
use crate::solver::SolveStatus;
use crate::transcription::QpProblem;

/// External force on the upper body over `[start_time, start_time + duration)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushEvent {
    pub start_time: f64,
    pub duration: f64,
    pub force: Vector3<f64>,
    /// Application point relative to the CoM.
    pub offset: Vector3<f64>,
}

impl PushEvent {
    /// Horizontal push; `angle_deg = 0` points right (−y), positive angles
    /// rotate towards the front (+x).
    pub fn from_config(push: &PushConfig, offset: Vector3<f64>) -> Self {
        let theta = push.angle_deg.to_radians();
        Self {
            start_time: push.start_time,
            duration: push.duration,
            force: Vector3::new(theta.sin(), -theta.cos(), 0.0) * push.magnitude,
            offset,
        }
    }

    /// Mean force over `[t0, t1]`, so a tick receives exactly its share of the impulse.
    pub fn mean_force(&self, t0: f64, t1: f64) -> Vector3<f64> {
        let overlap = (t1.min(self.start_time + self.duration) - t0.max(self.start_time)).max(0.0);
        self.force * (overlap / (t1 - t0))
    }
}

/// Force and moment about the CoM from all pushes, averaged over a tick.
pub fn push_wrench(pushes: &[PushEvent], t0: f64, t1: f64) -> (Vector3<f64>, Vector3<f64>) {
    pushes.iter().fold((Vector3::zeros(), Vector3::zeros()), |(f, m), p| {
        let force = p.mean_force(t0, t1);
        (f + force, m + p.offset.cross(&force))
    })
}

/// Momentum rate with the push added to the contact wrenches.
pub fn plant_rate(
    state: &MomentumState,
    wrenches: &WrenchPair,
    geometry: &ContactGeometry,
    push_force: &Vector3<f64>,
    push_moment: &Vector3<f64>,
) -> StateVector {
    let mut rate = exact_momentum_rate(state, wrenches, geometry);
    for i in 0..3 {
        rate[3 + i] += push_force[i] / geometry.mass;
        rate[6 + i] += push_moment[i];
    }
    rate
}

/// One RK4 step with the wrenches and push held constant over the tick.
pub fn rk4_step(
    state: &MomentumState,
    wrenches: &WrenchPair,
    geometry: &ContactGeometry,
    push_force: &Vector3<f64>,
    push_moment: &Vector3<f64>,
    dt: f64,
) -> MomentumState {
    let f = |v: &StateVector| {
        plant_rate(&MomentumState::from_vector(v), wrenches, geometry, push_force, push_moment)
    };
    MomentumState::from_vector(&rk4(&state.to_vector(), f, dt))
}

/// Classic fourth-order Runge-Kutta step of `ẏ = f(y)`.
pub fn rk4<F: Fn(&StateVector) -> StateVector>(y: &StateVector, f: F, dt: f64) -> StateVector {
    let k1 = f(y);
    let k2 = f(&(y + k1 * (dt / 2.0)));
    let k3 = f(&(y + k2 * (dt / 2.0)));
    let k4 = f(&(y + k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Realized wrench: first-order lag on the command plus Gaussian noise.
#[derive(Debug, Clone)]
pub struct WrenchTrackerModel {
    time_constant: f64,
    force_noise: Option<Normal<f64>>,
    torque_noise: Option<Normal<f64>>,
    lagged: WrenchPair,
    rng: ChaCha8Rng,
}

impl WrenchTrackerModel {
    pub fn new(config: &TrackerConfig, seed: u64, initial: WrenchPair) -> Self {
        let normal = |std: f64| (std > 0.0).then(|| Normal::new(0.0, std).expect("finite std"));
        Self {
            time_constant: config.time_constant,
            force_noise: normal(config.force_noise_std),
            torque_noise: normal(config.torque_noise_std),
            lagged: initial,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn ideal() -> Self {
        Self::new(&TrackerConfig::default(), 0, WrenchPair::zero())
    }

    /// Wrench applied over the next tick. An unloaded right foot transmits nothing.
    pub fn track(&mut self, command: &WrenchPair, right_contact: bool, dt: f64) -> WrenchPair {
        let blend = dt / (self.time_constant + dt);
        let cmd = command.to_vector();
        let mut lagged = self.lagged.to_vector();
        lagged += (cmd - lagged) * blend;
        let mut realized = lagged;
        for i in 0..12 {
            let noise = if i % 6 < 3 { &self.force_noise } else { &self.torque_noise };
            if let Some(n) = noise {
                realized[i] += n.sample(&mut self.rng);
            }
        }
        if !right_contact {
            for i in 6..12 {
                lagged[i] = 0.0;
                realized[i] = 0.0;
            }
        }
        self.lagged = WrenchPair::from_vector(&lagged);
        WrenchPair::from_vector(&realized)
    }
}

/// Minimum-jerk swing from lift-off to touchdown with a vertical bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingMotion {
    pub start_time: f64,
    pub duration: f64,
    pub start: Vector3<f64>,
    pub target: Vector3<f64>,
    pub apex: f64,
}

impl SwingMotion {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        let tau = ((t - self.start_time) / self.duration).clamp(0.0, 1.0);
        let s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
        let mut p = self.start + (self.target - self.start) * s;
        p.z += self.apex * 16.0 * tau * tau * (1.0 - tau) * (1.0 - tau);
        p
    }

    pub fn touchdown_time(&self) -> f64 {
        self.start_time + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub time: f64,
    pub momentum: MomentumState,
    pub right_foot: Vector3<f64>,
    pub right_contact: bool,
    pub swing: Option<SwingMotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickRecord {
    pub time: f64,
    pub state: MomentumState,
    pub commanded: WrenchPair,
    pub realized: WrenchPair,
    /// Impact stage the QP was built with.
    pub k_impact: usize,
    pub trigger: bool,
    pub phase: SteppingPhase,
    pub right_contact: bool,
    pub solve_status: SolveStatus,
    pub solve_iterations: usize,
    pub solve_ms: f64,
    /// Controller prediction for the next tick.
    #[serde(skip)]
    pub predicted_next: StateVector,
    /// Largest right-foot wrench component the plan holds before touchdown.
    #[serde(skip)]
    pub planned_swing_wrench: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    Fell { time: f64, height: f64 },
    SolverFailure { time: f64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub outcome: RunOutcome,
    pub step_taken: bool,
    pub trigger_time: Option<f64>,
    pub landing_time: Option<f64>,
    pub step_target: Option<[f64; 2]>,
    pub final_centroid: [f64; 2],
    pub final_com: [f64; 3],
    pub final_distance_to_centroid: f64,
    /// First time after which the CoM stays within the settle tolerance of
    /// the final centroid.
    pub settle_time: Option<f64>,
    pub max_transverse_excursion: f64,
    pub max_vertical_excursion: f64,
    pub degraded_cycles: usize,
    pub max_solver_iterations: usize,
    pub median_solve_ms: f64,
    pub max_solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: ScenarioConfig,
    pub ticks: Vec<TickRecord>,
    pub summary: RunSummary,
    /// Solve times, kept apart from the ticks so logs stay reproducible.
    pub solve_times_ms: Vec<f64>,
    /// Full controller cycle times.
    pub cycle_times_ms: Vec<f64>,
}

impl RunLog {
    pub fn fell(&self) -> bool {
        matches!(self.summary.outcome, RunOutcome::Fell { .. })
    }
}

pub fn initial_plant_state(config: &ScenarioConfig) -> PlantState {
    let left = config.left_foot();
    let right = config.right_foot();
    let double = config.robot.initial_stance == InitialStance::Double;
    let base = if double { (left + right) / 2.0 } else { left };
    let com = Vector3::new(base.x, base.y, config.robot.com_height) + Vector3::from(config.robot.initial_com_offset);
    PlantState {
        time: 0.0,
        momentum: MomentumState::at_rest(com),
        right_foot: right,
        right_contact: double,
        swing: None,
    }
}

/// Fixed plant data: stance foot and inertial parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub left_foot: Vector3<f64>,
    pub mass: f64,
    pub gravity: f64,
}

/// Advances the plant by one tick. Returns the new state and the wrench
/// actually applied.
pub fn plant_step(
    state: &PlantState,
    commanded: &WrenchPair,
    pushes: &[PushEvent],
    dt: f64,
    params: &PlantParams,
    tracker: &mut WrenchTrackerModel,
) -> Result<(PlantState, WrenchPair), SimError> {
    let realized = tracker.track(commanded, state.right_contact, dt);
    let geometry = ContactGeometry::new(params.left_foot, state.right_foot, params.mass, params.gravity)
        .map_err(crate::error::ControllerError::from)?;
    let (push_force, push_moment) = push_wrench(pushes, state.time, state.time + dt);
    let mut next = state.clone();
    next.momentum = rk4_step(&state.momentum, &realized, &geometry, &push_force, &push_moment, dt);
    next.time = state.time + dt;
    if let Some(swing) = state.swing {
        if !state.right_contact {
            if next.time >= swing.touchdown_time() - 1e-9 * dt {
                next.right_contact = true;
                next.right_foot = swing.target;
                next.swing = None;
            } else {
                next.right_foot = swing.position(next.time);
            }
        }
    }
    Ok((next, realized))
}

/// One closed-loop tick as seen by an observer of [`run_scenario_observed`].
pub struct Cycle<'a> {
    pub time: f64,
    pub state: &'a MomentumState,
    /// Wrench the controller linearized around.
    pub measured: &'a WrenchPair,
    pub output: &'a ControllerOutput,
    pub stepping: &'a SteppingState,
    pub problem: &'a QpProblem,
    pub realized: &'a WrenchPair,
    pub next_state: &'a MomentumState,
    /// Push force and moment applied over the tick.
    pub push: (Vector3<f64>, Vector3<f64>),
}

/// Runs a scenario to completion, a fall, or a persistent solver failure.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunLog, SimError> {
    run_scenario_observed(config, |_| {})
}

/// [`run_scenario`] with a callback after every tick.
pub fn run_scenario_observed<F: FnMut(&Cycle)>(config: &ScenarioConfig, mut observer: F) -> Result<RunLog, SimError> {
    config.validate()?;
    let ctrl_config = config.controller_config();
    let dt = ctrl_config.dt;
    let mass = ctrl_config.mass;
    let gravity = ctrl_config.gravity;
    let left = ctrl_config.left_foot;
    let params = PlantParams { left_foot: left, mass, gravity };
    let mut controller = MpcController::new(ctrl_config)?;

    let offset = Vector3::from(config.simulation.push_offset);
    let pushes: Vec<PushEvent> = config
        .simulation
        .pushes
        .iter()
        .map(|p| PushEvent::from_config(p, offset))
        .collect();

    let mut plant = initial_plant_state(config);
    let initial_wrench = equilibrium_wrench(
        &plant.momentum.com_position,
        &left,
        &plant.right_foot,
        plant.right_contact,
        mass,
        gravity,
    );
    let mut stepping = if plant.right_contact {
        SteppingState::double_support(plant.right_foot, &initial_wrench)
    } else {
        SteppingState::single_support(plant.right_foot, &initial_wrench)
    };
    let mut tracker = WrenchTrackerModel::new(&config.simulation.tracker, config.simulation.seed, initial_wrench);
    let mut measured = initial_wrench;

    let n_ticks = (config.simulation.duration / dt).round() as usize;
    let mut ticks = Vec::with_capacity(n_ticks);
    let mut solve_times_ms = Vec::with_capacity(n_ticks);
    let mut cycle_times_ms = Vec::with_capacity(n_ticks);
    let mut outcome = RunOutcome::Completed;
    let mut consecutive_failures = 0usize;
    let mut trigger_time = None;
    let mut landing_time = None;
    let mut step_target = None;

    for _ in 0..n_ticks {
        let t = plant.time;
        let (output, next) =
            controller.control_step(&plant.momentum, &measured, plant.right_contact, &stepping)?;

        if output.triggered {
            trigger_time = Some(t);
            step_target = Some([next.swing_target.x, next.swing_target.y]);
            plant.swing = Some(SwingMotion {
                start_time: t,
                duration: next.planned_impact_time + config.simulation.impact_timing_error,
                start: plant.right_foot,
                target: next.swing_target,
                apex: config.simulation.swing_apex,
            });
        }
        if stepping.phase == SteppingPhase::Swing && next.phase == SteppingPhase::PostStep {
            landing_time = Some(t);
        }

        let (next_plant, realized) =
            plant_step(&plant, &output.wrench_command, &pushes, dt, &params, &mut tracker)?;

        if let Some(problem) = controller.last_problem() {
            observer(&Cycle {
                time: t,
                state: &plant.momentum,
                measured: &measured,
                output: &output,
                stepping: &next,
                problem,
                realized: &realized,
                next_state: &next_plant.momentum,
                push: push_wrench(&pushes, t, t + dt),
            });
        }

        let solve_ms = output.solve_stats.wall_time.as_secs_f64() * 1e3;
        solve_times_ms.push(solve_ms);
        cycle_times_ms.push(output.solve_stats.cycle_time.as_secs_f64() * 1e3);
        ticks.push(TickRecord {
            time: t,
            state: plant.momentum,
            commanded: output.wrench_command,
            realized,
            k_impact: output.impact_stage,
            trigger: output.triggered,
            phase: next.phase,
            right_contact: plant.right_contact,
            solve_status: output.solve_stats.status,
            solve_iterations: output.solve_stats.iterations,
            solve_ms: if config.output.log_wall_time { solve_ms } else { 0.0 },
            predicted_next: output.predicted_states[0],
            planned_swing_wrench: output
                .predicted_controls
                .iter()
                .take(output.impact_stage)
                .flat_map(|f| f.fixed_rows::<6>(6).iter().map(|v| v.abs()).collect::<Vec<_>>())
                .fold(0.0, f64::max),
        });

        let t_next = next_plant.time;
        plant = next_plant;
        measured = realized;
        stepping = next;

        if output.degraded {
            consecutive_failures += 1;
        } else {
            consecutive_failures = 0;
        }
        if consecutive_failures >= config.controller.max_consecutive_failures {
            outcome = RunOutcome::SolverFailure {
                time: t,
                count: consecutive_failures,
            };
            break;
        }
        let height = plant.momentum.com_position.z;
        if !plant.momentum.is_finite() || height < config.simulation.fall_height {
            outcome = RunOutcome::Fell { time: t_next, height };
            break;
        }
    }

    let final_polygon = controller.support_polygon(&stepping)?;
    let summary = summarize(config, &ticks, &solve_times_ms, final_polygon.centroid(), outcome, trigger_time, landing_time, step_target);
    Ok(RunLog {
        config: config.clone(),
        ticks,
        summary,
        solve_times_ms,
        cycle_times_ms,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    config: &ScenarioConfig,
    ticks: &[TickRecord],
    solve_times_ms: &[f64],
    centroid: Vector2<f64>,
    outcome: RunOutcome,
    trigger_time: Option<f64>,
    landing_time: Option<f64>,
    step_target: Option<[f64; 2]>,
) -> RunSummary {
    let initial = ticks.first().map(|t| t.state.com_position).unwrap_or_default();
    let last = ticks.last().map(|t| t.state.com_position).unwrap_or_default();
    let tol = config.simulation.settle_tolerance;

    let mut settle_time = None;
    for t in ticks.iter().rev() {
        if (t.state.com_position.xy() - centroid).norm() > tol {
            break;
        }
        settle_time = Some(t.time);
    }
    if matches!(outcome, RunOutcome::Fell { .. }) {
        settle_time = None;
    }

    let max_transverse_excursion = ticks
        .iter()
        .map(|t| (t.state.com_position.xy() - initial.xy()).norm())
        .fold(0.0, f64::max);
    let max_vertical_excursion = ticks
        .iter()
        .map(|t| (t.state.com_position.z - initial.z).abs())
        .fold(0.0, f64::max);

    let mut sorted = solve_times_ms.to_vec();
    sorted.sort_by(f64::total_cmp);

    RunSummary {
        scenario: config.name.clone(),
        outcome,
        step_taken: trigger_time.is_some(),
        trigger_time,
        landing_time,
        step_target,
        final_centroid: [centroid.x, centroid.y],
        final_com: [last.x, last.y, last.z],
        final_distance_to_centroid: (last.xy() - centroid).norm(),
        settle_time,
        max_transverse_excursion,
        max_vertical_excursion,
        degraded_cycles: ticks.iter().filter(|t| t.solve_status != SolveStatus::Solved).count(),
        max_solver_iterations: ticks.iter().map(|t| t.solve_iterations).max().unwrap_or(0),
        median_solve_ms: median(&sorted),
        max_solve_ms: sorted.last().copied().unwrap_or(0.0),
    }
}

/// Median of an ascending slice; zero when empty.
pub fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Left-foot equilibrium wrench for a CoM directly above the foot.
pub fn standing_wrench(mass: f64, gravity: f64) -> WrenchPair {
    WrenchPair::new(
        ContactWrench::new(Vector3::new(0.0, 0.0, mass * gravity), Vector3::zeros()),
        ContactWrench::zero(),
    )
}
