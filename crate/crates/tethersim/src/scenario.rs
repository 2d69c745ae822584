//! Scenario files: a flat key = value format with dotted section prefixes.
//!
//! Unknown keys are rejected, omitted keys fall back to the nominal defaults,
//! and the scenario remembers which keys were explicit so run summaries can
//! report provenance. Serialization writes every key with round-trip-exact
//! float formatting, so parse(serialize(s)) reproduces s.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use thiserror::Error;

use crate::autopilot::ControllerConfig;
use crate::ground::GroundStationParams;
use crate::model::{AttitudeModelParams, WindModel};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for '{key}': {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("invalid scenario, key group '{group}': {message}")]
    Invalid { group: String, message: String },
}

/// Plant integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

impl Integrator {
    fn as_str(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

/// Simulation run settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Plant integration step, s. The controller period is sub-divided into
    /// the nearest whole number of steps no longer than this.
    pub dt: f64,
    /// Run length, s.
    pub duration: f64,
    pub integrator: Integrator,
    /// Seed for every stochastic element of the run.
    pub seed: u64,
    /// Keep every n-th telemetry row.
    pub decimation: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.002,
            duration: 120.0,
            integrator: Integrator::Rk4,
            seed: 1,
            decimation: 1,
        }
    }
}

/// Measurement noise switches and levels (standard deviations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub enabled: bool,
    /// Roll/pitch angle noise, rad.
    pub sigma_attitude: f64,
    /// Roll/pitch rate noise, rad/s.
    pub sigma_rate: f64,
    /// Position noise per axis, m.
    pub sigma_position: f64,
    /// Airspeed noise, m/s.
    pub sigma_airspeed: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma_attitude: 0.0087,
            sigma_rate: 0.0087,
            sigma_position: 0.1,
            sigma_airspeed: 0.1,
        }
    }
}

/// Random tether-jerk style impulse schedule applied against the velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseParams {
    pub enabled: bool,
    /// First impulse time, s.
    pub start: f64,
    /// Peak force range, N.
    pub peak_min: f64,
    pub peak_max: f64,
    /// Half-sine pulse duration range, s.
    pub duration_min: f64,
    pub duration_max: f64,
    /// Start-to-start gap range, s.
    pub gap_min: f64,
    pub gap_max: f64,
}

impl Default for ImpulseParams {
    fn default() -> Self {
        Self {
            enabled: false,
            start: 50.0,
            peak_min: 3.0,
            peak_max: 8.0,
            duration_min: 0.3,
            duration_max: 0.7,
            gap_min: 3.0,
            gap_max: 6.0,
        }
    }
}

/// Sinusoidal attitude acceleration disturbances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeDisturbance {
    /// Roll channel amplitude, rad/s^2.
    pub roll_amplitude: f64,
    pub roll_period: f64,
    /// Pitch channel amplitude, rad/s^2.
    pub pitch_amplitude: f64,
    pub pitch_period: f64,
}

impl Default for AttitudeDisturbance {
    fn default() -> Self {
        Self {
            roll_amplitude: 0.0,
            roll_period: 5.0,
            pitch_amplitude: 0.0,
            pitch_period: 5.0,
        }
    }
}

/// Full run description: model, ground station, controller, disturbances,
/// and run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: AttitudeModelParams,
    pub wind: WindModel,
    pub ground: GroundStationParams,
    pub controller: ControllerConfig,
    pub sim: SimParams,
    pub noise: NoiseParams,
    pub impulses: ImpulseParams,
    pub attitude_disturbance: AttitudeDisturbance,
    /// Ground-station anchor in the inertial frame, m.
    pub station_origin: Vector3<f64>,
    /// Keys that were explicitly present in the parsed file.
    pub explicit: BTreeSet<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            model: AttitudeModelParams::default(),
            wind: WindModel::default(),
            ground: GroundStationParams::default(),
            controller: ControllerConfig::default(),
            sim: SimParams::default(),
            noise: NoiseParams::default(),
            impulses: ImpulseParams::default(),
            attitude_disturbance: AttitudeDisturbance::default(),
            station_origin: Vector3::zeros(),
            explicit: BTreeSet::new(),
        }
    }
}

/// Every key the format understands, in canonical serialization order.
pub const KEYS: &[&str] = &[
    "name",
    "model.a_roll",
    "model.b_roll",
    "model.a_pitch",
    "model.b_pitch",
    "model.drag_coeff",
    "model.air_density",
    "model.ref_area",
    "model.mass",
    "model.gravity",
    "model.stall_warning_speed",
    "wind.steady_x",
    "wind.steady_y",
    "wind.steady_z",
    "wind.gust_amplitude",
    "wind.gust_period",
    "wind.gust_noise",
    "wind.gust_direction_x",
    "wind.gust_direction_y",
    "wind.gust_direction_z",
    "ground.spring_stiffness",
    "ground.spring_max_compression",
    "ground.rail_length",
    "ground.slide_mass",
    "ground.tether_max_length",
    "ground.initial_unreeled_length",
    "ground.zone_lower",
    "ground.zone_upper",
    "ground.zone_lower_anchor",
    "ground.zone_upper_anchor",
    "ground.reel_speed_min",
    "ground.reel_speed_max",
    "ground.reel_accel_in",
    "ground.reel_accel_out",
    "ground.winch_time_constant",
    "ground.winch_accel_limit",
    "ground.control_period",
    "ground.slide_peak_accel",
    "ground.slide_release_speed",
    "ground.slide_ramp_time",
    "ground.slide_brake_accel",
    "controller.roll_eig1",
    "controller.roll_eig2",
    "controller.pitch_eig1",
    "controller.pitch_eig2",
    "controller.airspeed_gain",
    "controller.course_gain",
    "controller.altitude_gain",
    "controller.launch_accel_threshold",
    "controller.climb_airspeed_ref",
    "controller.climb_pitch_ref",
    "controller.safe_altitude",
    "controller.min_turn_radius",
    "controller.flight_airspeed_ref",
    "controller.altitude_ref",
    "controller.target_one_x",
    "controller.target_one_y",
    "controller.target_one_z",
    "controller.target_two_x",
    "controller.target_two_y",
    "controller.target_two_z",
    "controller.switch_margin",
    "controller.takeoff_course",
    "controller.roll_input_min",
    "controller.roll_input_max",
    "controller.pitch_input_min",
    "controller.pitch_input_max",
    "controller.thrust_min",
    "controller.thrust_max",
    "controller.detach_margin",
    "station.origin_x",
    "station.origin_y",
    "station.origin_z",
    "sim.dt",
    "sim.duration",
    "sim.integrator",
    "sim.seed",
    "sim.decimation",
    "noise.enabled",
    "noise.sigma_attitude",
    "noise.sigma_rate",
    "noise.sigma_position",
    "noise.sigma_airspeed",
    "impulses.enabled",
    "impulses.start",
    "impulses.peak_min",
    "impulses.peak_max",
    "impulses.duration_min",
    "impulses.duration_max",
    "impulses.gap_min",
    "impulses.gap_max",
    "disturbance.roll_amplitude",
    "disturbance.roll_period",
    "disturbance.pitch_amplitude",
    "disturbance.pitch_period",
];

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64, ScenarioError> {
    value.parse::<f64>().map_err(|e| ScenarioError::BadValue {
        line,
        key: key.into(),
        message: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, ScenarioError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ScenarioError::BadValue {
            line,
            key: key.into(),
            message: format!("expected true or false, got '{other}'"),
        }),
    }
}

impl Scenario {
    /// Current value of a known key, formatted for serialization.
    pub fn get_key(&self, key: &str) -> Option<String> {
        let s = self;
        let v = match key {
            "name" => s.name.clone(),
            "model.a_roll" => s.model.a_roll.to_string(),
            "model.b_roll" => s.model.b_roll.to_string(),
            "model.a_pitch" => s.model.a_pitch.to_string(),
            "model.b_pitch" => s.model.b_pitch.to_string(),
            "model.drag_coeff" => s.model.drag_coeff.to_string(),
            "model.air_density" => s.model.air_density.to_string(),
            "model.ref_area" => s.model.ref_area.to_string(),
            "model.mass" => s.model.mass.to_string(),
            "model.gravity" => s.model.gravity.to_string(),
            "model.stall_warning_speed" => s.model.stall_warning_speed.to_string(),
            "wind.steady_x" => s.wind.steady.x.to_string(),
            "wind.steady_y" => s.wind.steady.y.to_string(),
            "wind.steady_z" => s.wind.steady.z.to_string(),
            "wind.gust_amplitude" => s.wind.gust_amplitude.to_string(),
            "wind.gust_period" => s.wind.gust_period.to_string(),
            "wind.gust_noise" => s.wind.gust_noise.to_string(),
            "wind.gust_direction_x" => s.wind.gust_direction.x.to_string(),
            "wind.gust_direction_y" => s.wind.gust_direction.y.to_string(),
            "wind.gust_direction_z" => s.wind.gust_direction.z.to_string(),
            "ground.spring_stiffness" => s.ground.spring_stiffness.to_string(),
            "ground.spring_max_compression" => s.ground.spring_max_compression.to_string(),
            "ground.rail_length" => s.ground.rail_length.to_string(),
            "ground.slide_mass" => s.ground.slide_mass.to_string(),
            "ground.tether_max_length" => s.ground.tether_max_length.to_string(),
            "ground.initial_unreeled_length" => s.ground.initial_unreeled_length.to_string(),
            "ground.zone_lower" => s.ground.zone_lower.to_string(),
            "ground.zone_upper" => s.ground.zone_upper.to_string(),
            "ground.zone_lower_anchor" => s.ground.zone_lower_anchor.to_string(),
            "ground.zone_upper_anchor" => s.ground.zone_upper_anchor.to_string(),
            "ground.reel_speed_min" => s.ground.reel_speed_min.to_string(),
            "ground.reel_speed_max" => s.ground.reel_speed_max.to_string(),
            "ground.reel_accel_in" => s.ground.reel_accel_in.to_string(),
            "ground.reel_accel_out" => s.ground.reel_accel_out.to_string(),
            "ground.winch_time_constant" => s.ground.winch_time_constant.to_string(),
            "ground.winch_accel_limit" => s.ground.winch_accel_limit.to_string(),
            "ground.control_period" => s.ground.control_period.to_string(),
            "ground.slide_peak_accel" => s.ground.slide_peak_accel.to_string(),
            "ground.slide_release_speed" => s.ground.slide_release_speed.to_string(),
            "ground.slide_ramp_time" => s.ground.slide_ramp_time.to_string(),
            "ground.slide_brake_accel" => s.ground.slide_brake_accel.to_string(),
            "controller.roll_eig1" => s.controller.roll_eigenvalues.0.to_string(),
            "controller.roll_eig2" => s.controller.roll_eigenvalues.1.to_string(),
            "controller.pitch_eig1" => s.controller.pitch_eigenvalues.0.to_string(),
            "controller.pitch_eig2" => s.controller.pitch_eigenvalues.1.to_string(),
            "controller.airspeed_gain" => s.controller.airspeed_gain.to_string(),
            "controller.course_gain" => s.controller.course_gain.to_string(),
            "controller.altitude_gain" => s.controller.altitude_gain.to_string(),
            "controller.launch_accel_threshold" => {
                s.controller.launch_accel_threshold.to_string()
            }
            "controller.climb_airspeed_ref" => s.controller.climb_airspeed_ref.to_string(),
            "controller.climb_pitch_ref" => s.controller.climb_pitch_ref.to_string(),
            "controller.safe_altitude" => s.controller.safe_altitude.to_string(),
            "controller.min_turn_radius" => s.controller.min_turn_radius.to_string(),
            "controller.flight_airspeed_ref" => s.controller.flight_airspeed_ref.to_string(),
            "controller.altitude_ref" => s.controller.altitude_ref.to_string(),
            "controller.target_one_x" => s.controller.target_one.x.to_string(),
            "controller.target_one_y" => s.controller.target_one.y.to_string(),
            "controller.target_one_z" => s.controller.target_one.z.to_string(),
            "controller.target_two_x" => s.controller.target_two.x.to_string(),
            "controller.target_two_y" => s.controller.target_two.y.to_string(),
            "controller.target_two_z" => s.controller.target_two.z.to_string(),
            "controller.switch_margin" => s.controller.switch_margin.to_string(),
            "controller.takeoff_course" => s.controller.takeoff_course.to_string(),
            "controller.roll_input_min" => s.controller.roll_input_limits.0.to_string(),
            "controller.roll_input_max" => s.controller.roll_input_limits.1.to_string(),
            "controller.pitch_input_min" => s.controller.pitch_input_limits.0.to_string(),
            "controller.pitch_input_max" => s.controller.pitch_input_limits.1.to_string(),
            "controller.thrust_min" => s.controller.thrust_limits.0.to_string(),
            "controller.thrust_max" => s.controller.thrust_limits.1.to_string(),
            "controller.detach_margin" => s.controller.detach_margin.to_string(),
            "station.origin_x" => s.station_origin.x.to_string(),
            "station.origin_y" => s.station_origin.y.to_string(),
            "station.origin_z" => s.station_origin.z.to_string(),
            "sim.dt" => s.sim.dt.to_string(),
            "sim.duration" => s.sim.duration.to_string(),
            "sim.integrator" => s.sim.integrator.as_str().to_string(),
            "sim.seed" => s.sim.seed.to_string(),
            "sim.decimation" => s.sim.decimation.to_string(),
            "noise.enabled" => s.noise.enabled.to_string(),
            "noise.sigma_attitude" => s.noise.sigma_attitude.to_string(),
            "noise.sigma_rate" => s.noise.sigma_rate.to_string(),
            "noise.sigma_position" => s.noise.sigma_position.to_string(),
            "noise.sigma_airspeed" => s.noise.sigma_airspeed.to_string(),
            "impulses.enabled" => s.impulses.enabled.to_string(),
            "impulses.start" => s.impulses.start.to_string(),
            "impulses.peak_min" => s.impulses.peak_min.to_string(),
            "impulses.peak_max" => s.impulses.peak_max.to_string(),
            "impulses.duration_min" => s.impulses.duration_min.to_string(),
            "impulses.duration_max" => s.impulses.duration_max.to_string(),
            "impulses.gap_min" => s.impulses.gap_min.to_string(),
            "impulses.gap_max" => s.impulses.gap_max.to_string(),
            "disturbance.roll_amplitude" => s.attitude_disturbance.roll_amplitude.to_string(),
            "disturbance.roll_period" => s.attitude_disturbance.roll_period.to_string(),
            "disturbance.pitch_amplitude" => s.attitude_disturbance.pitch_amplitude.to_string(),
            "disturbance.pitch_period" => s.attitude_disturbance.pitch_period.to_string(),
            _ => return None,
        };
        Some(v)
    }

    fn set_key(&mut self, key: &str, value: &str, line: usize) -> Result<(), ScenarioError> {
        let f = |v: &mut f64| -> Result<(), ScenarioError> {
            *v = parse_f64(key, value, line)?;
            Ok(())
        };
        match key {
            "name" => {
                self.name = value.to_string();
                Ok(())
            }
            "model.a_roll" => f(&mut self.model.a_roll),
            "model.b_roll" => f(&mut self.model.b_roll),
            "model.a_pitch" => f(&mut self.model.a_pitch),
            "model.b_pitch" => f(&mut self.model.b_pitch),
            "model.drag_coeff" => f(&mut self.model.drag_coeff),
            "model.air_density" => f(&mut self.model.air_density),
            "model.ref_area" => f(&mut self.model.ref_area),
            "model.mass" => f(&mut self.model.mass),
            "model.gravity" => f(&mut self.model.gravity),
            "model.stall_warning_speed" => f(&mut self.model.stall_warning_speed),
            "wind.steady_x" => f(&mut self.wind.steady.x),
            "wind.steady_y" => f(&mut self.wind.steady.y),
            "wind.steady_z" => f(&mut self.wind.steady.z),
            "wind.gust_amplitude" => f(&mut self.wind.gust_amplitude),
            "wind.gust_period" => f(&mut self.wind.gust_period),
            "wind.gust_noise" => f(&mut self.wind.gust_noise),
            "wind.gust_direction_x" => f(&mut self.wind.gust_direction.x),
            "wind.gust_direction_y" => f(&mut self.wind.gust_direction.y),
            "wind.gust_direction_z" => f(&mut self.wind.gust_direction.z),
            "ground.spring_stiffness" => f(&mut self.ground.spring_stiffness),
            "ground.spring_max_compression" => f(&mut self.ground.spring_max_compression),
            "ground.rail_length" => f(&mut self.ground.rail_length),
            "ground.slide_mass" => f(&mut self.ground.slide_mass),
            "ground.tether_max_length" => f(&mut self.ground.tether_max_length),
            "ground.initial_unreeled_length" => f(&mut self.ground.initial_unreeled_length),
            "ground.zone_lower" => f(&mut self.ground.zone_lower),
            "ground.zone_upper" => f(&mut self.ground.zone_upper),
            "ground.zone_lower_anchor" => f(&mut self.ground.zone_lower_anchor),
            "ground.zone_upper_anchor" => f(&mut self.ground.zone_upper_anchor),
            "ground.reel_speed_min" => f(&mut self.ground.reel_speed_min),
            "ground.reel_speed_max" => f(&mut self.ground.reel_speed_max),
            "ground.reel_accel_in" => f(&mut self.ground.reel_accel_in),
            "ground.reel_accel_out" => f(&mut self.ground.reel_accel_out),
            "ground.winch_time_constant" => f(&mut self.ground.winch_time_constant),
            "ground.winch_accel_limit" => f(&mut self.ground.winch_accel_limit),
            "ground.control_period" => f(&mut self.ground.control_period),
            "ground.slide_peak_accel" => f(&mut self.ground.slide_peak_accel),
            "ground.slide_release_speed" => f(&mut self.ground.slide_release_speed),
            "ground.slide_ramp_time" => f(&mut self.ground.slide_ramp_time),
            "ground.slide_brake_accel" => f(&mut self.ground.slide_brake_accel),
            "controller.roll_eig1" => f(&mut self.controller.roll_eigenvalues.0),
            "controller.roll_eig2" => f(&mut self.controller.roll_eigenvalues.1),
            "controller.pitch_eig1" => f(&mut self.controller.pitch_eigenvalues.0),
            "controller.pitch_eig2" => f(&mut self.controller.pitch_eigenvalues.1),
            "controller.airspeed_gain" => f(&mut self.controller.airspeed_gain),
            "controller.course_gain" => f(&mut self.controller.course_gain),
            "controller.altitude_gain" => f(&mut self.controller.altitude_gain),
            "controller.launch_accel_threshold" => {
                f(&mut self.controller.launch_accel_threshold)
            }
            "controller.climb_airspeed_ref" => f(&mut self.controller.climb_airspeed_ref),
            "controller.climb_pitch_ref" => f(&mut self.controller.climb_pitch_ref),
            "controller.safe_altitude" => f(&mut self.controller.safe_altitude),
            "controller.min_turn_radius" => f(&mut self.controller.min_turn_radius),
            "controller.flight_airspeed_ref" => f(&mut self.controller.flight_airspeed_ref),
            "controller.altitude_ref" => f(&mut self.controller.altitude_ref),
            "controller.target_one_x" => f(&mut self.controller.target_one.x),
            "controller.target_one_y" => f(&mut self.controller.target_one.y),
            "controller.target_one_z" => f(&mut self.controller.target_one.z),
            "controller.target_two_x" => f(&mut self.controller.target_two.x),
            "controller.target_two_y" => f(&mut self.controller.target_two.y),
            "controller.target_two_z" => f(&mut self.controller.target_two.z),
            "controller.switch_margin" => f(&mut self.controller.switch_margin),
            "controller.takeoff_course" => f(&mut self.controller.takeoff_course),
            "controller.roll_input_min" => f(&mut self.controller.roll_input_limits.0),
            "controller.roll_input_max" => f(&mut self.controller.roll_input_limits.1),
            "controller.pitch_input_min" => f(&mut self.controller.pitch_input_limits.0),
            "controller.pitch_input_max" => f(&mut self.controller.pitch_input_limits.1),
            "controller.thrust_min" => f(&mut self.controller.thrust_limits.0),
            "controller.thrust_max" => f(&mut self.controller.thrust_limits.1),
            "controller.detach_margin" => f(&mut self.controller.detach_margin),
            "station.origin_x" => f(&mut self.station_origin.x),
            "station.origin_y" => f(&mut self.station_origin.y),
            "station.origin_z" => f(&mut self.station_origin.z),
            "sim.dt" => f(&mut self.sim.dt),
            "sim.duration" => f(&mut self.sim.duration),
            "sim.integrator" => match value {
                "euler" => {
                    self.sim.integrator = Integrator::Euler;
                    Ok(())
                }
                "rk4" => {
                    self.sim.integrator = Integrator::Rk4;
                    Ok(())
                }
                other => Err(ScenarioError::BadValue {
                    line,
                    key: key.into(),
                    message: format!("expected euler or rk4, got '{other}'"),
                }),
            },
            "sim.seed" => {
                self.sim.seed = value.parse::<u64>().map_err(|e| ScenarioError::BadValue {
                    line,
                    key: key.into(),
                    message: e.to_string(),
                })?;
                Ok(())
            }
            "sim.decimation" => {
                self.sim.decimation =
                    value.parse::<u32>().map_err(|e| ScenarioError::BadValue {
                        line,
                        key: key.into(),
                        message: e.to_string(),
                    })?;
                Ok(())
            }
            "noise.enabled" => {
                self.noise.enabled = parse_bool(key, value, line)?;
                Ok(())
            }
            "noise.sigma_attitude" => f(&mut self.noise.sigma_attitude),
            "noise.sigma_rate" => f(&mut self.noise.sigma_rate),
            "noise.sigma_position" => f(&mut self.noise.sigma_position),
            "noise.sigma_airspeed" => f(&mut self.noise.sigma_airspeed),
            "impulses.enabled" => {
                self.impulses.enabled = parse_bool(key, value, line)?;
                Ok(())
            }
            "impulses.start" => f(&mut self.impulses.start),
            "impulses.peak_min" => f(&mut self.impulses.peak_min),
            "impulses.peak_max" => f(&mut self.impulses.peak_max),
            "impulses.duration_min" => f(&mut self.impulses.duration_min),
            "impulses.duration_max" => f(&mut self.impulses.duration_max),
            "impulses.gap_min" => f(&mut self.impulses.gap_min),
            "impulses.gap_max" => f(&mut self.impulses.gap_max),
            "disturbance.roll_amplitude" => f(&mut self.attitude_disturbance.roll_amplitude),
            "disturbance.roll_period" => f(&mut self.attitude_disturbance.roll_period),
            "disturbance.pitch_amplitude" => f(&mut self.attitude_disturbance.pitch_amplitude),
            "disturbance.pitch_period" => f(&mut self.attitude_disturbance.pitch_period),
            _ => Err(ScenarioError::UnknownKey {
                line,
                key: key.into(),
            }),
        }
    }

    /// Parse a scenario file. Blank lines and '#' comments are skipped.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut scenario = Scenario::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ScenarioError::Syntax {
                line,
                text: content.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(ScenarioError::Syntax {
                    line,
                    text: content.to_string(),
                });
            }
            if !scenario.explicit.insert(key.to_string()) {
                return Err(ScenarioError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            scenario.set_key(key, value, line)?;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Serialize every key in canonical order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get_key(key).expect("every canonical key is gettable");
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    /// Whether a key was explicitly present in the source file.
    pub fn provenance(&self, key: &str) -> &'static str {
        if self.explicit.contains(key) {
            "explicit"
        } else {
            "default"
        }
    }

    /// Cross-field validation of every parameter group.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.model.validate().map_err(|e| ScenarioError::Invalid {
            group: "model".into(),
            message: e.to_string(),
        })?;
        self.wind.validate().map_err(|e| ScenarioError::Invalid {
            group: "wind".into(),
            message: e.to_string(),
        })?;
        self.ground.validate().map_err(|e| ScenarioError::Invalid {
            group: "ground".into(),
            message: e.to_string(),
        })?;
        self.controller
            .validate()
            .map_err(|e| ScenarioError::Invalid {
                group: "controller".into(),
                message: e.to_string(),
            })?;
        let sim = &self.sim;
        if !(sim.dt.is_finite() && sim.dt > 0.0) {
            return Err(ScenarioError::Invalid {
                group: "sim".into(),
                message: "sim.dt must be positive".into(),
            });
        }
        if !(sim.duration.is_finite() && sim.duration > 0.0) {
            return Err(ScenarioError::Invalid {
                group: "sim".into(),
                message: "sim.duration must be positive".into(),
            });
        }
        if sim.dt > self.ground.control_period {
            return Err(ScenarioError::Invalid {
                group: "sim".into(),
                message: "sim.dt must not exceed ground.control_period".into(),
            });
        }
        if sim.decimation == 0 {
            return Err(ScenarioError::Invalid {
                group: "sim".into(),
                message: "sim.decimation must be at least 1".into(),
            });
        }
        let n = &self.noise;
        for (name, v) in [
            ("noise.sigma_attitude", n.sigma_attitude),
            ("noise.sigma_rate", n.sigma_rate),
            ("noise.sigma_position", n.sigma_position),
            ("noise.sigma_airspeed", n.sigma_airspeed),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ScenarioError::Invalid {
                    group: "noise".into(),
                    message: format!("{name} must be non-negative"),
                });
            }
        }
        let imp = &self.impulses;
        let ranges_ok = imp.start.is_finite()
            && imp.start >= 0.0
            && 0.0 <= imp.peak_min
            && imp.peak_min <= imp.peak_max
            && 0.0 < imp.duration_min
            && imp.duration_min <= imp.duration_max
            && 0.0 < imp.gap_min
            && imp.gap_min <= imp.gap_max;
        if !ranges_ok {
            return Err(ScenarioError::Invalid {
                group: "impulses".into(),
                message: "impulse ranges must be ordered and non-negative".into(),
            });
        }
        let d = &self.attitude_disturbance;
        if !(d.roll_period > 0.0 && d.pitch_period > 0.0) {
            return Err(ScenarioError::Invalid {
                group: "disturbance".into(),
                message: "disturbance periods must be positive".into(),
            });
        }
        if !(d.roll_amplitude.is_finite() && d.pitch_amplitude.is_finite()) {
            return Err(ScenarioError::Invalid {
                group: "disturbance".into(),
                message: "disturbance amplitudes must be finite".into(),
            });
        }
        if !self.station_origin.iter().all(|v| v.is_finite()) {
            return Err(ScenarioError::Invalid {
                group: "station".into(),
                message: "station origin must be finite".into(),
            });
        }
        Ok(())
    }
}
