//! Reduced centroidal momentum dynamics.
//!
//! The state is `γ = [x_com; ẋ_com; h_ang] ∈ R⁹` and the control is the pair of
//! foot wrenches `f = [f_l; f_r] ∈ R¹²`, each wrench stacked as
//! `[force; torque]`. The exact dynamics are bilinear in (CoM position, contact
//! force) through the angular momentum rate; [`linearize`] expands them to first
//! order around the latest feedback so the predictive model is affine.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const STATE_DIM: usize = 9;
pub const CONTROL_DIM: usize = 12;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type ControlVector = SVector<f64, CONTROL_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputMatrix = SMatrix<f64, STATE_DIM, CONTROL_DIM>;

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_MASS: f64 = 30.0;

/// Centroidal state: CoM position, CoM velocity and angular momentum about the CoM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub com_position: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
    pub angular_momentum: Vector3<f64>,
}

impl MomentumState {
    pub fn new(
        com_position: Vector3<f64>,
        com_velocity: Vector3<f64>,
        angular_momentum: Vector3<f64>,
    ) -> Self {
        Self {
            com_position,
            com_velocity,
            angular_momentum,
        }
    }

    /// CoM at rest at `com_position`, zero angular momentum.
    pub fn at_rest(com_position: Vector3<f64>) -> Self {
        Self::new(com_position, Vector3::zeros(), Vector3::zeros())
    }

    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.com_position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.com_velocity);
        v.fixed_rows_mut::<3>(6).copy_from(&self.angular_momentum);
        v
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            com_position: v.fixed_rows::<3>(0).into_owned(),
            com_velocity: v.fixed_rows::<3>(3).into_owned(),
            angular_momentum: v.fixed_rows::<3>(6).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// 6D contact wrench, force first.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactWrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl ContactWrench {
    pub fn new(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self { force, torque }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.force);
        v.fixed_rows_mut::<3>(3).copy_from(&self.torque);
        v
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            force: Vector3::new(s[0], s[1], s[2]),
            torque: Vector3::new(s[3], s[4], s[5]),
        }
    }
}

/// Left and right foot wrenches; flattened as `[f_l; f_r]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WrenchPair {
    pub left: ContactWrench,
    pub right: ContactWrench,
}

impl WrenchPair {
    pub fn new(left: ContactWrench, right: ContactWrench) -> Self {
        Self { left, right }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> ControlVector {
        let mut v = ControlVector::zeros();
        v.fixed_rows_mut::<6>(0).copy_from(&self.left.to_vector());
        v.fixed_rows_mut::<6>(6).copy_from(&self.right.to_vector());
        v
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            left: ContactWrench::from_slice(&s[0..6]),
            right: ContactWrench::from_slice(&s[6..12]),
        }
    }

    pub fn from_vector(v: &ControlVector) -> Self {
        Self::from_slice(v.as_slice())
    }

    pub fn total_force(&self) -> Vector3<f64> {
        self.left.force + self.right.force
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactGeometry {
    pub left_foot_position: Vector3<f64>,
    pub right_foot_position: Vector3<f64>,
    pub mass: f64,
    /// Magnitude of the gravitational acceleration, acting along −z.
    pub gravity: f64,
}

impl ContactGeometry {
    pub fn new(
        left_foot_position: Vector3<f64>,
        right_foot_position: Vector3<f64>,
        mass: f64,
        gravity: f64,
    ) -> Result<Self, ModelError> {
        let geometry = Self {
            left_foot_position,
            right_foot_position,
            mass,
            gravity,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(ModelError::InvalidMass(self.mass));
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return Err(ModelError::InvalidGravity(self.gravity));
        }
        Ok(())
    }

    /// Wrench pair that holds the CoM still: full weight on the left foot.
    pub fn left_support_equilibrium(&self) -> WrenchPair {
        WrenchPair::new(
            ContactWrench::new(Vector3::new(0.0, 0.0, self.mass * self.gravity), Vector3::zeros()),
            ContactWrench::zero(),
        )
    }
}

/// Cross-product matrix: `skew(v) * y == v × y`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Maps a wrench applied at `foot_position` to the equivalent wrench at the CoM.
pub fn adjoint_transform(
    foot_position: &Vector3<f64>,
    com_position: &Vector3<f64>,
) -> SMatrix<f64, 6, 6> {
    let mut x = SMatrix::<f64, 6, 6>::identity();
    x.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&skew(&(foot_position - com_position)));
    x
}

/// Exact (bilinear) momentum rate `[ẋ; ẍ; ḣ]`. This is the plant model.
pub fn exact_momentum_rate(
    state: &MomentumState,
    wrenches: &WrenchPair,
    geometry: &ContactGeometry,
) -> StateVector {
    let mut rate = StateVector::zeros();
    let com = state.com_position;
    let accel = wrenches.total_force() / geometry.mass - Vector3::new(0.0, 0.0, geometry.gravity);
    let h_dot = (geometry.left_foot_position - com).cross(&wrenches.left.force)
        + wrenches.left.torque
        + (geometry.right_foot_position - com).cross(&wrenches.right.force)
        + wrenches.right.torque;
    rate.fixed_rows_mut::<3>(0).copy_from(&state.com_velocity);
    rate.fixed_rows_mut::<3>(3).copy_from(&accel);
    rate.fixed_rows_mut::<3>(6).copy_from(&h_dot);
    rate
}

/// Continuous affine model `γ̇ = Ẽv γ + F̃ f + G̃ + S̃⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousAffineModel {
    pub ev_tilde: StateMatrix,
    pub f_tilde: InputMatrix,
    pub g_tilde: StateVector,
    pub s0_tilde: StateVector,
    pub expansion_com: Vector3<f64>,
    pub expansion_wrench: WrenchPair,
}

impl ContinuousAffineModel {
    pub fn evaluate(&self, state: &StateVector, control: &ControlVector) -> StateVector {
        self.ev_tilde * state + self.f_tilde * control + self.g_tilde + self.s0_tilde
    }
}

/// First-order expansion of the angular momentum rate around
/// `(expansion_state.com_position, expansion_wrench forces)`.
pub fn linearize(
    expansion_state: &MomentumState,
    expansion_wrench: &WrenchPair,
    geometry: &ContactGeometry,
) -> ContinuousAffineModel {
    let com0 = expansion_state.com_position;
    let force_skew = skew(&expansion_wrench.total_force());
    let inv_mass = 1.0 / geometry.mass;

    let mut ev_tilde = StateMatrix::zeros();
    ev_tilde
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&Matrix3::identity());
    ev_tilde.fixed_view_mut::<3, 3>(6, 0).copy_from(&force_skew);

    let mut f_tilde = InputMatrix::zeros();
    let scaled_identity = Matrix3::identity() * inv_mass;
    f_tilde.fixed_view_mut::<3, 3>(3, 0).copy_from(&scaled_identity);
    f_tilde.fixed_view_mut::<3, 3>(3, 6).copy_from(&scaled_identity);
    f_tilde
        .fixed_view_mut::<3, 3>(6, 0)
        .copy_from(&skew(&(geometry.left_foot_position - com0)));
    f_tilde
        .fixed_view_mut::<3, 3>(6, 3)
        .copy_from(&Matrix3::identity());
    f_tilde
        .fixed_view_mut::<3, 3>(6, 6)
        .copy_from(&skew(&(geometry.right_foot_position - com0)));
    f_tilde
        .fixed_view_mut::<3, 3>(6, 9)
        .copy_from(&Matrix3::identity());

    let mut g_tilde = StateVector::zeros();
    g_tilde[5] = -geometry.gravity;

    let mut s0_tilde = StateVector::zeros();
    s0_tilde
        .fixed_rows_mut::<3>(6)
        .copy_from(&(-force_skew * com0));

    ContinuousAffineModel {
        ev_tilde,
        f_tilde,
        g_tilde,
        s0_tilde,
        expansion_com: com0,
        expansion_wrench: *expansion_wrench,
    }
}

/// Forward-Euler discretization `γ(k+1) = Ev γ(k) + F f(k) + G + S⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub ev: StateMatrix,
    pub f: InputMatrix,
    pub g: StateVector,
    pub s0: StateVector,
    pub dt: f64,
}

impl DiscreteModel {
    pub fn step(&self, state: &StateVector, control: &ControlVector) -> StateVector {
        self.ev * state + self.f * control + self.g + self.s0
    }
}

pub fn discretize(model: &ContinuousAffineModel, dt: f64) -> Result<DiscreteModel, ModelError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ModelError::InvalidTimeStep(dt));
    }
    Ok(DiscreteModel {
        ev: StateMatrix::identity() + model.ev_tilde * dt,
        f: model.f_tilde * dt,
        g: model.g_tilde * dt,
        s0: model.s0_tilde * dt,
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geometry() -> ContactGeometry {
        ContactGeometry::new(
            Vector3::new(0.0, 0.1, 0.0),
            Vector3::new(0.05, -0.12, 0.0),
            DEFAULT_MASS,
            DEFAULT_GRAVITY,
        )
        .unwrap()
    }

    #[test]
    fn skew_matches_definition() {
        let s = skew(&Vector3::new(1.0, 2.0, 3.0));
        let expected = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(s, expected);
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let ex = Vector3::x();
        let ey = Vector3::y();
        assert_eq!(skew(&ex) * ey, Vector3::z());
        assert_eq!(-skew(&ey) * ex, Vector3::z());
    }

    #[test]
    fn adjoint_lever_arm() {
        let com = Vector3::new(0.3, -0.2, 0.5);
        assert_eq!(adjoint_transform(&com, &com), SMatrix::<f64, 6, 6>::identity());

        let x = adjoint_transform(&Vector3::new(0.0, 0.0, 0.0), &Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(
            x.fixed_view::<3, 3>(3, 0).into_owned(),
            skew(&Vector3::new(0.0, 0.0, -1.0))
        );

        let x = adjoint_transform(&Vector3::new(0.1, 0.0, 0.0), &Vector3::new(0.0, 0.0, 0.5));
        let w = Vector6::new(0.0, 0.0, 294.3, 0.0, 0.0, 0.0);
        let out = x * w;
        assert_relative_eq!(out[3], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out[4], -29.43, epsilon = 1e-12);
        assert_relative_eq!(out[5], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn static_equilibrium_and_free_fall() {
        let geometry = ContactGeometry::new(
            Vector3::zeros(),
            Vector3::new(0.0, -0.2, 0.0),
            30.0,
            9.81,
        )
        .unwrap();
        let state = MomentumState::at_rest(Vector3::new(0.0, 0.0, 0.53));
        let eq = WrenchPair::new(
            ContactWrench::new(Vector3::new(0.0, 0.0, 294.3), Vector3::zeros()),
            ContactWrench::zero(),
        );
        let rate = exact_momentum_rate(&state, &eq, &geometry);
        assert!(rate.amax() < 1e-12, "{rate}");

        let rate = exact_momentum_rate(&state, &WrenchPair::zero(), &geometry);
        let mut expected = StateVector::zeros();
        expected[5] = -9.81;
        assert_eq!(rate, expected);
    }

    #[test]
    fn offset_foot_produces_pitch_moment() {
        let geometry = ContactGeometry::new(
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::zeros(),
            30.0,
            9.81,
        )
        .unwrap();
        let state = MomentumState::at_rest(Vector3::new(0.0, 0.0, 0.5));
        let w = WrenchPair::new(
            ContactWrench::new(Vector3::new(0.0, 0.0, 294.3), Vector3::zeros()),
            ContactWrench::zero(),
        );
        let rate = exact_momentum_rate(&state, &w, &geometry);
        assert_relative_eq!(rate[6], 0.0, epsilon = 1e-12);
        assert_relative_eq!(rate[7], -29.43, epsilon = 1e-12);
        assert_relative_eq!(rate[8], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn affine_model_structure() {
        let geometry = geometry();
        let state = MomentumState::new(
            Vector3::new(0.01, 0.08, 0.52),
            Vector3::new(0.1, -0.2, 0.0),
            Vector3::new(0.3, 0.1, -0.2),
        );
        let w = WrenchPair::from_slice(&[
            5.0, -3.0, 200.0, 1.0, -2.0, 0.1, 2.0, 1.0, 90.0, 0.5, 0.2, 0.0,
        ]);
        let m = linearize(&state, &w, &geometry);
        assert_eq!(m.f_tilde.fixed_rows::<3>(0).amax(), 0.0);
        assert_relative_eq!(m.f_tilde[(3, 0)], 1.0 / geometry.mass);
        assert_relative_eq!(m.f_tilde[(3, 6)], 1.0 / geometry.mass);
        assert_eq!(m.f_tilde[(3, 3)], 0.0);
        assert_eq!(m.ev_tilde.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::identity());
        assert_eq!(
            m.ev_tilde.fixed_view::<3, 3>(6, 0).into_owned(),
            skew(&w.total_force())
        );
        for (i, g) in m.g_tilde.iter().enumerate() {
            if i == 5 {
                assert_eq!(*g, -geometry.gravity);
            } else {
                assert_eq!(*g, 0.0);
            }
        }
        assert_eq!(m.s0_tilde.fixed_rows::<6>(0).amax(), 0.0);

        let affine = m.evaluate(&state.to_vector(), &w.to_vector());
        let exact = exact_momentum_rate(&state, &w, &geometry);
        assert!((affine - exact).amax() <= 1e-12 * exact.amax().max(1.0));
    }

    #[test]
    fn zero_expansion_wrench_removes_coupling() {
        let m = linearize(
            &MomentumState::at_rest(Vector3::new(0.0, 0.0, 0.5)),
            &WrenchPair::zero(),
            &geometry(),
        );
        assert_eq!(m.ev_tilde.fixed_view::<3, 3>(6, 0).amax(), 0.0);
        assert_eq!(m.s0_tilde.amax(), 0.0);
    }

    #[test]
    fn discretize_relations() {
        let geometry = geometry();
        let state = MomentumState::at_rest(Vector3::new(0.0, 0.1, 0.53));
        let w = geometry.left_support_equilibrium();
        let c = linearize(&state, &w, &geometry);

        let d = discretize(&c, 0.01).unwrap();
        assert_eq!(d.ev, StateMatrix::identity() + c.ev_tilde * 0.01);
        assert_eq!(d.f, c.f_tilde * 0.01);

        let tiny = discretize(&c, 1e-12).unwrap();
        assert!((tiny.ev - StateMatrix::identity()).amax() < 1e-9);
        assert!(tiny.f.amax() <= 1e-12 && tiny.g.amax() < 1e-10 && tiny.s0.amax() < 1e-9);

        let next = d.step(&state.to_vector(), &w.to_vector());
        assert!((next - state.to_vector()).amax() < 1e-14);

        assert!(discretize(&c, 0.0).is_err());
        assert!(discretize(&c, -0.01).is_err());
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ContactGeometry::new(Vector3::zeros(), Vector3::zeros(), 0.0, 9.81).is_err());
        assert!(ContactGeometry::new(Vector3::zeros(), Vector3::zeros(), 1.0, -9.81).is_err());
    }

    #[test]
    fn exact_rate_is_affine_in_torques_and_velocity() {
        let geometry = geometry();
        let base = MomentumState::new(
            Vector3::new(0.02, 0.05, 0.5),
            Vector3::new(0.1, 0.2, -0.1),
            Vector3::zeros(),
        );
        let w = WrenchPair::from_slice(&[
            1.0, 2.0, 150.0, 0.3, 0.1, 0.0, -1.0, 0.5, 120.0, 0.0, 0.2, 0.1,
        ]);
        let r0 = exact_momentum_rate(&base, &w, &geometry);
        let mut w2 = w;
        w2.left.torque += Vector3::new(1.0, -2.0, 0.5);
        w2.right.torque += Vector3::new(-0.5, 0.0, 1.0);
        let r1 = exact_momentum_rate(&base, &w2, &geometry);
        let diff = r1 - r0;
        assert_relative_eq!(diff[6], 0.5, epsilon = 1e-12);
        assert_relative_eq!(diff[7], -2.0, epsilon = 1e-12);
        assert_relative_eq!(diff[8], 1.5, epsilon = 1e-12);
    }

    fn vec3() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn skew_is_anticommutative(x in vec3(), y in vec3()) {
            let s = skew(&x) * y + skew(&y) * x;
            prop_assert!(s.amax() < 1e-15);
            prop_assert_eq!(skew(&x).transpose(), -skew(&x));
            prop_assert!((skew(&x) * y - x.cross(&y)).amax() < 1e-15);
        }

        #[test]
        fn affine_matches_exact_at_expansion(
            com in vec3(), vel in vec3(), h in vec3(),
            fl in vec3(), fr in vec3(), tl in vec3(), tr in vec3(),
        ) {
            let geometry = geometry();
            let state = MomentumState::new(com, vel, h);
            let w = WrenchPair::new(
                ContactWrench::new(fl * 300.0, tl * 10.0),
                ContactWrench::new(fr * 300.0, tr * 10.0),
            );
            let m = linearize(&state, &w, &geometry);
            let exact = exact_momentum_rate(&state, &w, &geometry);
            let affine = m.evaluate(&state.to_vector(), &w.to_vector());
            prop_assert!((affine - exact).amax() <= 1e-12 * exact.amax().max(1.0));
        }

        #[test]
        fn input_jacobian_matches_central_differences(
            com in vec3(), fl in vec3(), fr in vec3(),
        ) {
            let geometry = geometry();
            let state = MomentumState::at_rest(com);
            let w = WrenchPair::new(
                ContactWrench::new(fl * 300.0, Vector3::zeros()),
                ContactWrench::new(fr * 300.0, Vector3::zeros()),
            );
            let m = linearize(&state, &w, &geometry);
            let h = 1e-6;
            let base = w.to_vector();
            for j in 0..CONTROL_DIM {
                let mut plus = base;
                let mut minus = base;
                plus[j] += h;
                minus[j] -= h;
                let d = (exact_momentum_rate(&state, &WrenchPair::from_vector(&plus), &geometry)
                    - exact_momentum_rate(&state, &WrenchPair::from_vector(&minus), &geometry))
                    / (2.0 * h);
                for i in 0..STATE_DIM {
                    let expected = m.f_tilde[(i, j)];
                    prop_assert!((d[i] - expected).abs() <= 1e-6 * expected.abs().max(1.0));
                }
            }
        }
    }
}
