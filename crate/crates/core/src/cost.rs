//! Stage weights, state references and a direct evaluation of the horizon cost.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::TranscriptionError;
use crate::model::{ControlVector, MomentumState, StateVector, CONTROL_DIM, STATE_DIM};

/// Diagonal gain matrices of the four cost terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    /// Applied at every stage. Transverse CoM entries (0, 1) must be zero.
    pub k_gamma: [f64; STATE_DIM],
    /// Added from the (clamped) impact stage on, and always at the terminal stage.
    pub k_gamma_imp: [f64; STATE_DIM],
    pub k_f: [f64; CONTROL_DIM],
    pub k_df: [f64; CONTROL_DIM],
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            k_gamma: [0.0, 0.0, 100.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1],
            k_gamma_imp: [50.0, 50.0, 100.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1],
            k_f: [1e-3; CONTROL_DIM],
            k_df: [1e-2; CONTROL_DIM],
        }
    }
}

impl CostWeights {
    pub fn zero() -> Self {
        Self {
            k_gamma: [0.0; STATE_DIM],
            k_gamma_imp: [0.0; STATE_DIM],
            k_f: [0.0; CONTROL_DIM],
            k_df: [0.0; CONTROL_DIM],
        }
    }

    /// Returns the offending field and reason.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let groups: [(&str, &[f64]); 4] = [
            ("k_gamma", &self.k_gamma),
            ("k_gamma_imp", &self.k_gamma_imp),
            ("k_f", &self.k_f),
            ("k_df", &self.k_df),
        ];
        for (name, values) in groups {
            if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err((name.to_string(), format!("entries must be finite and >= 0, got {v}")));
            }
        }
        if self.k_gamma[0] != 0.0 || self.k_gamma[1] != 0.0 {
            return Err((
                "k_gamma".to_string(),
                "transverse CoM position entries (0, 1) must be zero".to_string(),
            ));
        }
        Ok(())
    }

    pub fn gamma(&self) -> StateVector {
        StateVector::from_row_slice(&self.k_gamma)
    }

    pub fn gamma_imp(&self) -> StateVector {
        StateVector::from_row_slice(&self.k_gamma_imp)
    }

    pub fn force(&self) -> ControlVector {
        ControlVector::from_row_slice(&self.k_f)
    }

    pub fn force_rate(&self) -> ControlVector {
        ControlVector::from_row_slice(&self.k_df)
    }
}

/// `γ^d(k)` for `k = 1..=N`, stored at index `k − 1`, and the nominal
/// wrench `f^d(k)` for `k = 0..N` that the force regularizer pulls towards.
/// An empty `wrenches` means a zero nominal wrench.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub stages: Vec<StateVector>,
    pub wrenches: Vec<ControlVector>,
}

impl ReferenceTrajectory {
    pub fn new(stages: Vec<StateVector>) -> Self {
        Self {
            stages,
            wrenches: Vec::new(),
        }
    }

    pub fn with_wrenches(mut self, wrenches: Vec<ControlVector>) -> Self {
        self.wrenches = wrenches;
        self
    }

    /// Nominal wrench for control stage `k` (0-based).
    pub fn wrench_at(&self, k: usize) -> ControlVector {
        self.wrenches.get(k).copied().unwrap_or_else(ControlVector::zeros)
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Reference at stage `k` (1-based).
    pub fn at(&self, k: usize) -> &StateVector {
        &self.stages[k - 1]
    }
}

/// Constant reference: CoM over `centroid` at `com_height`, at rest, no angular momentum.
/// The feedback state does not enter the references.
pub fn build_references(
    _current: &MomentumState,
    centroid: &Vector2<f64>,
    com_height: f64,
    n_stages: usize,
) -> ReferenceTrajectory {
    let mut r = StateVector::zeros();
    r[0] = centroid.x;
    r[1] = centroid.y;
    r[2] = com_height;
    ReferenceTrajectory::new(vec![r; n_stages])
}

/// Gravity-compensating vertical forces per control stage: the whole weight
/// on the left foot before `impact_stage`, split evenly afterwards.
pub fn nominal_wrenches(impact_stage: usize, n_stages: usize, mass: f64, gravity: f64) -> Vec<ControlVector> {
    let weight = mass * gravity;
    (0..n_stages)
        .map(|k| {
            let mut f = ControlVector::zeros();
            if k < impact_stage {
                f[2] = weight;
            } else {
                f[2] = 0.5 * weight;
                f[8] = 0.5 * weight;
            }
            f
        })
        .collect()
}

/// `k̄_imp = min(k_impact, N)`.
pub fn clamp_impact_stage(impact_stage: usize, n_stages: usize) -> usize {
    impact_stage.min(n_stages)
}

/// Diagonal state weight for stage `stage` in `1..=N`.
pub fn stage_cost_weight(
    stage: usize,
    impact_stage_clamped: usize,
    n_stages: usize,
    weights: &CostWeights,
) -> Result<StateVector, TranscriptionError> {
    if stage == 0 || stage > n_stages {
        return Err(TranscriptionError::CostStage(stage));
    }
    let mut w = weights.gamma();
    if stage >= impact_stage_clamped || stage == n_stages {
        w += weights.gamma_imp();
    }
    Ok(w)
}

fn weighted_sq(v: &StateVector, w: &StateVector) -> f64 {
    v.component_mul(v).dot(w)
}

fn weighted_sq_control(v: &ControlVector, w: &ControlVector) -> f64 {
    v.component_mul(v).dot(w)
}

/// Direct summation of the horizon cost.
///
/// `states[k − 1] = γ(k)` for `k = 1..=N` and `controls[k] = f(k)` for `k = 0..N`.
pub fn evaluate_cost_direct(
    states: &[StateVector],
    controls: &[ControlVector],
    refs: &ReferenceTrajectory,
    weights: &CostWeights,
    impact_stage: usize,
    f_prev: &ControlVector,
) -> f64 {
    let n = states.len();
    let k_bar = clamp_impact_stage(impact_stage, n).max(1);
    let kg = weights.gamma();
    let kgi = weights.gamma_imp();
    let kf = weights.force();
    let kdf = weights.force_rate();

    let mut total = 0.0;
    for k in 1..=n {
        let e = states[k - 1] - refs.at(k);
        total += weighted_sq(&e, &kg);
        if k >= k_bar {
            total += weighted_sq(&e, &kgi);
        }
    }
    let mut prev = *f_prev;
    for (k, f) in controls.iter().enumerate() {
        total += weighted_sq_control(&(f - refs.wrench_at(k)), &kf);
        total += weighted_sq_control(&(f - prev), &kdf);
        prev = *f;
    }
    0.5 * total
}
