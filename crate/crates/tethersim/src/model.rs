//! Reduced flight model of the aircraft: first-order roll/pitch rate dynamics,
//! the lift-equilibrium turn-rate relation, small-angle vertical speed, the
//! thrust/drag airspeed balance, and the point-mass kinematic closure.
//!
//! Every operation is a pure function; the same relations serve as the
//! simulation plant and as the design model for the controller gains.

use nalgebra::Vector3;
use thiserror::Error;

/// Ground speed below which speed-dividing laws are considered degenerate.
pub const EPS_SPEED: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("ground speed {0} m/s too low for turn-rate relation")]
    DegenerateSpeed(f64),
    #[error("invalid model parameter: {0}")]
    InvalidParams(String),
}

/// Identified attitude-rate parameters plus the drag constants that close the
/// airspeed balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeModelParams {
    /// Roll rate pole, 1/s (negative).
    pub a_roll: f64,
    /// Roll input gain, 1/s^2.
    pub b_roll: f64,
    /// Pitch rate pole, 1/s (negative).
    pub a_pitch: f64,
    /// Pitch input gain, 1/s^2.
    pub b_pitch: f64,
    /// Drag coefficient, dimensionless.
    pub drag_coeff: f64,
    /// Air density, kg/m^3.
    pub air_density: f64,
    /// Reference area, m^2.
    pub ref_area: f64,
    /// Aircraft mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s^2.
    pub gravity: f64,
    /// Airspeed below which a stall warning is logged (not acted on), m/s.
    pub stall_warning_speed: f64,
}

impl Default for AttitudeModelParams {
    fn default() -> Self {
        Self {
            a_roll: -2.3,
            b_roll: 12.6,
            a_pitch: -4.65,
            b_pitch: 30.0,
            drag_coeff: 0.05,
            air_density: 1.2,
            ref_area: 0.3,
            mass: 1.2,
            gravity: 9.81,
            stall_warning_speed: 7.0,
        }
    }
}

impl AttitudeModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            self.a_roll,
            self.b_roll,
            self.a_pitch,
            self.b_pitch,
            self.drag_coeff,
            self.air_density,
            self.ref_area,
            self.mass,
            self.gravity,
            self.stall_warning_speed,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParams("non-finite value".into()));
        }
        if self.a_roll >= 0.0 {
            return Err(ModelError::InvalidParams("a_roll must be negative".into()));
        }
        if self.a_pitch >= 0.0 {
            return Err(ModelError::InvalidParams("a_pitch must be negative".into()));
        }
        if self.b_roll <= 0.0 {
            return Err(ModelError::InvalidParams("b_roll must be positive".into()));
        }
        if self.b_pitch <= 0.0 {
            return Err(ModelError::InvalidParams("b_pitch must be positive".into()));
        }
        if self.mass <= 0.0 {
            return Err(ModelError::InvalidParams("mass must be positive".into()));
        }
        if self.air_density <= 0.0 {
            return Err(ModelError::InvalidParams("air_density must be positive".into()));
        }
        if self.ref_area <= 0.0 {
            return Err(ModelError::InvalidParams("ref_area must be positive".into()));
        }
        if self.drag_coeff < 0.0 {
            return Err(ModelError::InvalidParams("drag_coeff must be non-negative".into()));
        }
        if self.gravity <= 0.0 {
            return Err(ModelError::InvalidParams("gravity must be positive".into()));
        }
        Ok(())
    }

    /// Combined drag gain 0.5 * rho * A * C_D, N/(m/s)^2.
    pub fn drag_gain(&self) -> f64 {
        0.5 * self.air_density * self.ref_area * self.drag_coeff
    }
}

/// Aircraft state in the inertial frame (Z up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AircraftState {
    /// Position (X, Y, Z), m.
    pub position: Vector3<f64>,
    /// Ground speed |p_dot|, m/s.
    pub ground_speed: f64,
    /// Course angle of the horizontal velocity, rad, in (-pi, pi].
    pub course: f64,
    /// Roll angle, rad.
    pub roll: f64,
    /// Roll rate, rad/s.
    pub roll_rate: f64,
    /// Pitch angle relative to the level trim, rad.
    pub pitch: f64,
    /// Pitch rate, rad/s.
    pub pitch_rate: f64,
    /// Airspeed, m/s (non-negative).
    pub airspeed: f64,
}

impl AircraftState {
    pub fn at_rest() -> Self {
        Self {
            position: Vector3::zeros(),
            ground_speed: 0.0,
            course: 0.0,
            roll: 0.0,
            roll_rate: 0.0,
            pitch: 0.0,
            pitch_rate: 0.0,
            airspeed: 0.0,
        }
    }
}

/// Steady wind plus gust-model parameters; the instantaneous wind vector is
/// produced by the simulation's disturbance scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindModel {
    /// Steady wind (W_X, W_Y, W_Z), m/s. W_Z is zero by default.
    pub steady: Vector3<f64>,
    /// Sinusoidal gust amplitude, m/s.
    pub gust_amplitude: f64,
    /// Sinusoidal gust period, s.
    pub gust_period: f64,
    /// Band-limited noise amplitude added to the gust, m/s.
    pub gust_noise: f64,
    /// Unit direction the gust component acts along.
    pub gust_direction: Vector3<f64>,
}

impl Default for WindModel {
    fn default() -> Self {
        Self {
            steady: Vector3::zeros(),
            gust_amplitude: 0.0,
            gust_period: 7.0,
            gust_noise: 0.0,
            gust_direction: Vector3::new(1.0, 0.0, 0.0),
        }
    }
}

impl WindModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = self.steady.iter().all(|v| v.is_finite())
            && self.gust_direction.iter().all(|v| v.is_finite())
            && self.gust_amplitude.is_finite()
            && self.gust_period.is_finite()
            && self.gust_noise.is_finite();
        if !finite {
            return Err(ModelError::InvalidParams("non-finite wind value".into()));
        }
        if self.gust_period <= 0.0 {
            return Err(ModelError::InvalidParams("gust_period must be positive".into()));
        }
        Ok(())
    }
}

/// Exogenous inputs the plant sees on top of the control inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceInputs {
    /// Additive roll acceleration disturbance, rad/s^2.
    pub d_roll: f64,
    /// Additive pitch acceleration disturbance, rad/s^2.
    pub d_pitch: f64,
    /// Additive force along the airspeed axis, N.
    pub d_force: f64,
    /// Tether force magnitude applied opposing the velocity direction, N.
    pub tether_force: f64,
}

/// Normalize an angle to (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    PI - (PI - x).rem_euclid(TAU)
}

/// Roll acceleration: a_roll * roll_rate + b_roll * u_roll + d_roll.
pub fn roll_acceleration(
    state: &AircraftState,
    u_roll: f64,
    params: &AttitudeModelParams,
    d_roll: f64,
) -> f64 {
    params.a_roll * state.roll_rate + params.b_roll * u_roll + d_roll
}

/// Pitch acceleration: a_pitch * pitch_rate + b_pitch * u_pitch + d_pitch.
pub fn pitch_acceleration(
    state: &AircraftState,
    u_pitch: f64,
    params: &AttitudeModelParams,
    d_pitch: f64,
) -> f64 {
    params.a_pitch * state.pitch_rate + params.b_pitch * u_pitch + d_pitch
}

/// Course rate from the roll-induced lift equilibrium: (g / |p_dot|) * roll.
pub fn turn_rate(state: &AircraftState, params: &AttitudeModelParams) -> Result<f64, ModelError> {
    if state.ground_speed <= EPS_SPEED {
        return Err(ModelError::DegenerateSpeed(state.ground_speed));
    }
    Ok(params.gravity / state.ground_speed * state.roll)
}

/// Path curvature 1/R = g * roll / |p_dot|^2.
pub fn curvature(state: &AircraftState, params: &AttitudeModelParams) -> Result<f64, ModelError> {
    if state.ground_speed <= EPS_SPEED {
        return Err(ModelError::DegenerateSpeed(state.ground_speed));
    }
    Ok(params.gravity * state.roll / (state.ground_speed * state.ground_speed))
}

/// Small-angle vertical speed of the design relations: |p_dot| * pitch.
pub fn vertical_rate(state: &AircraftState) -> f64 {
    state.ground_speed * state.pitch
}

/// Airspeed rate from the thrust/drag/gravity/tether balance.
///
/// At steady level flight with zero disturbances this reduces to the static
/// thrust-drag equilibrium.
pub fn airspeed_derivative(
    state: &AircraftState,
    u_thrust: f64,
    params: &AttitudeModelParams,
    d_force: f64,
    tether_force: f64,
) -> f64 {
    let v = state.airspeed;
    let drag = params.drag_gain() * v * v;
    let weight = params.mass * params.gravity * state.pitch.sin();
    (u_thrust - drag - weight - tether_force + d_force) / params.mass
}

/// Inertial velocity and ground speed from airspeed, attitude, course, and
/// wind. The plant uses the exact sin/cos decomposition; the design relations
/// keep the small-angle forms.
pub fn kinematics_step(state: &AircraftState, wind: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let horizontal = state.airspeed * state.pitch.cos();
    let velocity = Vector3::new(
        horizontal * state.course.cos() + wind.x,
        horizontal * state.course.sin() + wind.y,
        state.airspeed * state.pitch.sin() + wind.z,
    );
    let speed = velocity.norm();
    (velocity, speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> AttitudeModelParams {
        AttitudeModelParams::default()
    }

    fn state_with(ground_speed: f64, roll: f64) -> AircraftState {
        AircraftState {
            ground_speed,
            roll,
            ..AircraftState::at_rest()
        }
    }

    #[test]
    fn roll_acceleration_equilibrium_is_zero() {
        let s = AircraftState::at_rest();
        assert_eq!(roll_acceleration(&s, 0.0, &params(), 0.0), 0.0);
    }

    #[test]
    fn roll_acceleration_matches_hand_value() {
        let s = AircraftState {
            roll_rate: 0.5,
            ..AircraftState::at_rest()
        };
        assert_relative_eq!(
            roll_acceleration(&s, 0.1, &params(), 0.0),
            0.11,
            max_relative = 1e-12
        );
    }

    #[test]
    fn roll_rate_steady_state_under_constant_input() {
        let p = params();
        let u = 0.1;
        let expected = -p.b_roll / p.a_roll * u;
        assert_relative_eq!(expected, 0.5478260869565218, max_relative = 1e-12);
        let s = AircraftState {
            roll_rate: expected,
            ..AircraftState::at_rest()
        };
        assert_relative_eq!(roll_acceleration(&s, u, &p, 0.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pitch_acceleration_matches_hand_value() {
        let s = AircraftState {
            pitch_rate: 0.2,
            ..AircraftState::at_rest()
        };
        assert_relative_eq!(
            pitch_acceleration(&s, 0.05, &params(), 0.0),
            0.57,
            max_relative = 1e-12
        );
        let p = params();
        assert_relative_eq!(
            -p.b_pitch / p.a_pitch * 0.05,
            0.3225806451612903,
            max_relative = 1e-12
        );
    }

    #[test]
    fn turn_rate_zero_for_level_wings() {
        assert_eq!(turn_rate(&state_with(13.0, 0.0), &params()).unwrap(), 0.0);
    }

    #[test]
    fn turn_rate_matches_hand_value() {
        let r = turn_rate(&state_with(13.0, 0.35), &params()).unwrap();
        assert_relative_eq!(r, 9.81 / 13.0 * 0.35, max_relative = 1e-12);
        assert_relative_eq!(r, 0.2641153846153846, max_relative = 1e-12);
    }

    #[test]
    fn turn_rate_errors_below_speed_floor() {
        assert_eq!(
            turn_rate(&state_with(0.3, 0.5), &params()),
            Err(ModelError::DegenerateSpeed(0.3))
        );
    }

    #[test]
    fn curvature_inverts_to_minimum_radius() {
        let c = curvature(&state_with(13.0, 0.8613659), &params()).unwrap();
        assert_relative_eq!(1.0 / c, 20.0, max_relative = 1e-5);
    }

    #[test]
    fn vertical_rate_hand_values() {
        let s = AircraftState {
            ground_speed: 12.0,
            pitch: 0.69,
            ..AircraftState::at_rest()
        };
        assert_relative_eq!(vertical_rate(&s), 8.28, max_relative = 1e-12);
        let s = AircraftState {
            ground_speed: 13.0,
            pitch: 0.0769,
            ..AircraftState::at_rest()
        };
        assert_relative_eq!(vertical_rate(&s), 0.9997, max_relative = 1e-12);
    }

    #[test]
    fn airspeed_derivative_balances_at_equilibrium() {
        let p = params();
        let s = AircraftState {
            airspeed: 13.0,
            ..AircraftState::at_rest()
        };
        let u = p.drag_gain() * 169.0;
        assert_relative_eq!(u, 1.521, max_relative = 1e-12);
        assert_relative_eq!(airspeed_derivative(&s, u, &p, 0.0, 0.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            airspeed_derivative(&s, 0.0, &p, 0.0, 0.0),
            -1.2675,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            airspeed_derivative(&s, 1.521, &p, 0.0, 6.0),
            -5.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn kinematics_straight_level() {
        let s = AircraftState {
            airspeed: 13.0,
            ..AircraftState::at_rest()
        };
        let (v, speed) = kinematics_step(&s, &Vector3::zeros());
        assert_relative_eq!(v.x, 13.0);
        assert_eq!(v.y, 0.0);
        assert_eq!(v.z, 0.0);
        assert_relative_eq!(speed, 13.0);
    }

    #[test]
    fn kinematics_crosswind_sum() {
        let s = AircraftState {
            airspeed: 13.0,
            course: std::f64::consts::FRAC_PI_2,
            ..AircraftState::at_rest()
        };
        let (v, speed) = kinematics_step(&s, &Vector3::new(2.0, 0.0, 0.0));
        assert_relative_eq!(v.x, 2.0, epsilon = 1e-12);
        assert_relative_eq!(v.y, 13.0, epsilon = 1e-12);
        assert_relative_eq!(speed, 173.0f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn kinematics_climb_decomposition() {
        let s = AircraftState {
            airspeed: 16.0,
            pitch: 0.69,
            ..AircraftState::at_rest()
        };
        let (v, _) = kinematics_step(&s, &Vector3::zeros());
        assert_relative_eq!(v.x, 16.0 * 0.69f64.cos(), max_relative = 1e-12);
        assert_relative_eq!(v.x, 12.339936239953706, max_relative = 1e-12);
        assert_relative_eq!(v.z, 16.0 * 0.69f64.sin(), max_relative = 1e-12);
        assert_relative_eq!(v.z, 10.184594915551486, max_relative = 1e-12);
    }

    #[test]
    fn rate_dynamics_converge_to_steady_state() {
        let p = params();
        let dt = 1e-4;
        let u = 0.1;
        let mut s = AircraftState::at_rest();
        for _ in 0..200_000 {
            let acc = roll_acceleration(&s, u, &p, 0.0);
            s.roll_rate += dt * acc;
        }
        assert_relative_eq!(s.roll_rate, -p.b_roll / p.a_roll * u, max_relative = 1e-6);
    }

    #[test]
    fn wrap_angle_covers_boundaries() {
        use std::f64::consts::PI;
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI), PI);
        assert_relative_eq!(wrap_angle(0.1 - 2.0 * PI), 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-0.1), -0.1);
    }

    #[test]
    fn default_params_validate() {
        params().validate().unwrap();
        let mut p = params();
        p.a_roll = 0.1;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn turn_rate_is_odd_in_roll(speed in 0.6f64..40.0, roll in -1.5f64..1.5) {
            let p = params();
            let plus = turn_rate(&state_with(speed, roll), &p).unwrap();
            let minus = turn_rate(&state_with(speed, -roll), &p).unwrap();
            prop_assert!((plus + minus).abs() < 1e-12);
        }

        #[test]
        fn turn_rate_scales_inversely_with_speed(
            speed in 0.6f64..20.0,
            roll in -1.5f64..1.5,
            k in 1.0f64..5.0,
        ) {
            let p = params();
            let base = turn_rate(&state_with(speed, roll), &p).unwrap();
            let scaled = turn_rate(&state_with(k * speed, roll), &p).unwrap();
            prop_assert!((scaled - base / k).abs() < 1e-9);
        }

        #[test]
        fn curvature_equals_turn_rate_over_speed(speed in 0.6f64..40.0, roll in -1.5f64..1.5) {
            let p = params();
            let s = state_with(speed, roll);
            let lhs = curvature(&s, &p).unwrap();
            let rhs = turn_rate(&s, &p).unwrap() / speed;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn airspeed_derivative_decreases_in_airspeed(
            v1 in 0.0f64..30.0,
            dv in 0.01f64..10.0,
            thrust in 0.0f64..20.0,
        ) {
            let p = params();
            let lo = AircraftState { airspeed: v1, ..AircraftState::at_rest() };
            let hi = AircraftState { airspeed: v1 + dv, ..AircraftState::at_rest() };
            let f_lo = airspeed_derivative(&lo, thrust, &p, 0.0, 0.0);
            let f_hi = airspeed_derivative(&hi, thrust, &p, 0.0, 0.0);
            prop_assert!(f_hi < f_lo);
        }

        #[test]
        fn wrap_angle_lands_in_half_open_interval(x in -100.0f64..100.0) {
            use std::f64::consts::PI;
            let w = wrap_angle(x);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((x - w) / (2.0 * PI) - ((x - w) / (2.0 * PI)).round()).abs() < 1e-9);
        }
    }
}
