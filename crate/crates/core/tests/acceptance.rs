//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::{enumerate_active_sets, random_qp};
use momentum_mpc::config::{bundled_scenario, bundled_scenario_names};
use momentum_mpc::controller::{initial_impact_index, update_impact_index};
use momentum_mpc::cost::{clamp_impact_stage, evaluate_cost_direct, CostWeights, ReferenceTrajectory};
use momentum_mpc::model::{
    discretize, exact_momentum_rate, linearize, ContactGeometry, ControlVector, StateVector, WrenchPair,
};
use momentum_mpc::output::csv_string;
use momentum_mpc::sim::{median, run_scenario, RunLog};
use momentum_mpc::solver::{kkt_residuals, solve};
use momentum_mpc::transcription::{build_cost, build_equality, ChiLayout};
use momentum_mpc::{MomentumState, SolveStatus, SolverSettings, SteppingPhase};
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_vec3(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
}

fn random_geometry(rng: &mut ChaCha8Rng) -> ContactGeometry {
    ContactGeometry::new(
        Vector3::new(0.0, 0.08, 0.0) + random_vec3(rng, 0.05),
        Vector3::new(0.0, -0.08, 0.0) + random_vec3(rng, 0.05),
        rng.random_range(10.0..80.0),
        9.81,
    )
    .unwrap()
}

fn random_state(rng: &mut ChaCha8Rng) -> MomentumState {
    MomentumState::new(
        Vector3::new(0.0, 0.0, 0.53) + random_vec3(rng, 0.1),
        random_vec3(rng, 0.5),
        random_vec3(rng, 1.0),
    )
}

fn random_wrench(rng: &mut ChaCha8Rng) -> WrenchPair {
    WrenchPair::from_vector(&ControlVector::from_fn(|i, _| {
        if i % 6 == 2 {
            rng.random_range(0.0..300.0)
        } else {
            rng.random_range(-30.0..30.0)
        }
    }))
}

fn taylor() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_exact: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let geometry = random_geometry(&mut rng);
        let state = random_state(&mut rng);
        let wrench = random_wrench(&mut rng);
        let model = linearize(&state, &wrench, &geometry);
        let x0 = state.to_vector();
        let f0 = wrench.to_vector();
        let at_point = exact_momentum_rate(&state, &wrench, &geometry);
        let scale = at_point.amax().max(1.0);
        worst_exact = worst_exact.max((model.evaluate(&x0, &f0) - at_point).amax() / scale);

        let dx = StateVector::from_fn(|_, _| rng.random_range(-1.0..1.0)) * 0.05;
        let df = ControlVector::from_fn(|_, _| rng.random_range(-1.0..1.0)) * 20.0;
        let error = |h: f64| {
            let x = x0 + dx * h;
            let f = f0 + df * h;
            let exact = exact_momentum_rate(&MomentumState::from_vector(&x), &WrenchPair::from_vector(&f), &geometry);
            (exact - model.evaluate(&x, &f)).norm()
        };
        let ratio = error(1.0) / error(0.5);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        worst_exact < 1e-12 && lo >= 3.5 && hi <= 4.5 && elapsed < 1.0,
        format!("expansion error {worst_exact:.1e}, halving ratio in [{lo:.4}, {hi:.4}], {elapsed:.3} s"),
    )
}

fn transcription() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_cost, mut worst_rollout): (f64, f64) = (0.0, 0.0);
    for n in [1, 2, 3, 5] {
        let layout = ChiLayout::new(n).unwrap();
        for _ in 0..100 {
            let mut weights = CostWeights::zero();
            for v in weights.k_gamma.iter_mut().skip(2).chain(weights.k_gamma_imp.iter_mut()) {
                *v = rng.random_range(0.0..100.0);
            }
            for v in weights.k_f.iter_mut().chain(weights.k_df.iter_mut()) {
                *v = rng.random_range(0.0..1.0);
            }
            let refs = ReferenceTrajectory::new((0..n).map(|_| StateVector::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect())
                .with_wrenches((0..n).map(|_| random_wrench(&mut rng).to_vector()).collect());
            let impact = rng.random_range(0..n + 3);
            let f_prev = random_wrench(&mut rng).to_vector();

            let geometry = random_geometry(&mut rng);
            let gamma0 = random_state(&mut rng);
            let model = discretize(&linearize(&gamma0, &random_wrench(&mut rng), &geometry), 0.01).unwrap();
            let mut state = gamma0.to_vector();
            let (mut states, mut controls) = (Vec::new(), Vec::new());
            for _ in 0..n {
                let f = random_wrench(&mut rng).to_vector();
                state = model.step(&state, &f);
                states.push(state);
                controls.push(f);
            }
            let chi = layout.stack(&states, &controls);

            let (a, b) = build_equality(&model, &gamma0, &layout);
            let residual = a.mul_vec(&chi).iter().zip(&b).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
            worst_rollout = worst_rollout.max(residual);

            let (h, g, c) = build_cost(&weights, &refs, clamp_impact_stage(impact, n), &f_prev, &layout).unwrap();
            let hx = h.mul_vec(&chi);
            let quad = 0.5 * chi.iter().zip(&hx).map(|(x, y)| x * y).sum::<f64>()
                + chi.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>()
                + c;
            let direct = evaluate_cost_direct(&states, &controls, &refs, &weights, impact, &f_prev);
            worst_cost = worst_cost.max((quad - direct).abs() / direct.abs().max(1.0));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        worst_cost <= 1e-9 && worst_rollout < 1e-12 && elapsed < 10.0,
        format!("cost mismatch {worst_cost:.1e}, rollout residual {worst_rollout:.1e}, {elapsed:.3} s"),
    )
}

fn qp_solver() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let settings = SolverSettings::default();
    let (mut worst_primal, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    let mut unsolved = 0;
    for _ in 0..200 {
        let qp = random_qp(&mut rng);
        let problem = qp.to_problem();
        let sol = solve(&problem, None, &settings).unwrap();
        if sol.status != SolveStatus::Solved {
            unsolved += 1;
        }
        let expected = enumerate_active_sets(&qp);
        worst_primal = worst_primal.max((DVector::from_column_slice(&sol.primal) - expected).amax());
        worst_kkt = worst_kkt.max(kkt_residuals(&problem, &sol).max());
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        unsolved == 0 && worst_primal <= 1e-5 && worst_kkt <= 1e-6 && elapsed < 30.0,
        format!("primal error {worst_primal:.1e}, KKT {worst_kkt:.1e}, {unsolved} unsolved, {elapsed:.3} s"),
    )
}

fn swing_wrench(logs: &BTreeMap<&str, RunLog>) -> Verdict {
    let mut solves = 0;
    let mut worst: f64 = 0.0;
    for log in logs.values() {
        for t in log.ticks.iter().filter(|t| t.phase == SteppingPhase::Swing && t.k_impact > 0) {
            solves += 1;
            worst = worst.max(t.planned_swing_wrench);
        }
    }
    verdict(solves > 0 && worst <= 1e-8, format!("{solves} swing solves, max planned |f_r| {worst:.1e}"))
}

fn impact_index(logs: &BTreeMap<&str, RunLog>) -> Verdict {
    let mut seq = vec![5];
    for contact in [false, false, false, false, false, true] {
        seq.push(update_impact_index(*seq.last().unwrap(), contact));
    }
    let initial = initial_impact_index(0.6, 0.01);
    let mut closed_loop_ok = true;
    for log in logs.values() {
        for pair in log.ticks.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.phase == SteppingPhase::Swing && a.phase == SteppingPhase::Swing && !b.trigger {
                closed_loop_ok &= b.k_impact + 1 == a.k_impact || (a.k_impact == 1 && b.k_impact == 1);
            }
        }
    }
    verdict(
        seq == [5, 4, 3, 2, 1, 1, 0] && initial == 60 && closed_loop_ok,
        format!("sequence {seq:?}, initial index {initial}, closed-loop countdown consistent: {closed_loop_ok}"),
    )
}

fn regulation(logs: &BTreeMap<&str, RunLog>) -> Verdict {
    let log = &logs["no_push_regulation"];
    let weight = log.config.robot.mass * log.config.robot.gravity;
    let end = log.ticks.len() as f64 * log.config.controller.dt;
    let steady: Vec<_> = log.ticks.iter().filter(|t| t.time >= end - 1.0).collect();
    let worst_fz = steady
        .iter()
        .map(|t| (t.commanded.total_force().z - weight).abs())
        .fold(0.0, f64::max);
    let excursion = log.summary.max_transverse_excursion;
    verdict(
        !log.fell() && end >= 5.0 - 1e-9 && excursion < 1e-3 && worst_fz <= 1e-3 * weight,
        format!("transverse excursion {:.2e} m, steady |Σf_z − mg| {worst_fz:.2e} N over {end:.2} s", excursion),
    )
}

fn push_dichotomy(logs: &BTreeMap<&str, RunLog>, runtime: f64) -> Verdict {
    let mut pass = runtime < 60.0;
    let mut parts = Vec::new();
    for name in ["side_push_20deg", "back_push_neg20deg", "front_push_45deg"] {
        let s = &logs[name].summary;
        let settle = match (s.landing_time, s.settle_time) {
            (Some(land), Some(settle)) => Some((settle - land).max(0.0)),
            _ => None,
        };
        let ok = s.step_taken && !logs[name].fell() && settle.is_some_and(|d| d <= 3.0) && s.final_distance_to_centroid <= 0.02;
        pass &= ok;
        parts.push(format!(
            "{name}: step {} fell {} settle-after-landing {} final {:.3} m",
            s.step_taken,
            logs[name].fell(),
            settle.map_or("none".into(), |d| format!("{d:.2} s")),
            s.final_distance_to_centroid
        ));
    }
    let s = &logs["sub_threshold_push"].summary;
    let ok = !s.step_taken && !logs["sub_threshold_push"].fell() && s.settle_time.is_some();
    pass &= ok;
    parts.push(format!(
        "sub_threshold_push: step {} fell {} final {:.3} m",
        s.step_taken,
        logs["sub_threshold_push"].fell(),
        s.final_distance_to_centroid
    ));
    parts.push(format!("{runtime:.1} s"));
    verdict(pass, parts.join("; "))
}

fn timing(logs: &BTreeMap<&str, RunLog>) -> Verdict {
    let mut cycles: Vec<f64> = logs.values().flat_map(|l| l.cycle_times_ms.iter().copied()).collect();
    cycles.sort_by(f64::total_cmp);
    let m = median(&cycles);
    verdict(m < 10.0, format!("median control_step {m:.2} ms over {} cycles", cycles.len()))
}

fn determinism(logs: &BTreeMap<&str, RunLog>) -> Verdict {
    let mismatched: Vec<&str> = logs
        .par_iter()
        .filter(|(name, first)| {
            let again = run_scenario(&bundled_scenario(name).unwrap()).unwrap();
            csv_string(&again.ticks) != csv_string(&first.ticks)
        })
        .map(|(name, _)| *name)
        .collect();
    verdict(
        mismatched.is_empty(),
        format!("{} bundled scenarios rerun, differing CSVs: {mismatched:?}", logs.len()),
    )
}

fn main() {
    let mut results = vec![(1, "Taylor expansion", taylor()), (2, "transcription oracle", transcription()), (3, "QP solver", qp_solver())];

    let mut logs = BTreeMap::new();
    let mut push_runtime = 0.0;
    for name in bundled_scenario_names() {
        let start = Instant::now();
        let log = run_scenario(&bundled_scenario(name).unwrap()).unwrap();
        if matches!(name, "side_push_20deg" | "back_push_neg20deg" | "front_push_45deg" | "sub_threshold_push") {
            push_runtime += start.elapsed().as_secs_f64();
        }
        logs.insert(name, log);
    }
    let timed: BTreeMap<&str, RunLog> = logs
        .iter()
        .filter(|(_, l)| l.config.controller.weights == CostWeights::default())
        .map(|(n, l)| (*n, l.clone()))
        .collect();

    results.push((4, "swing wrench", swing_wrench(&logs)));
    results.push((5, "impact index", impact_index(&logs)));
    results.push((6, "regulation", regulation(&logs)));
    results.push((7, "push dichotomy", push_dichotomy(&logs, push_runtime)));
    results.push((8, "cycle time", timing(&timed)));
    results.push((9, "determinism", determinism(&logs)));

    let mut failed = 0;
    for (id, name, v) in &results {
        println!("criterion {id} {} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
