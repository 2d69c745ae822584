//! Hierarchical autopilot: pole-placement attitude loops at the bottom,
//! quadratic airspeed control, course and altitude guidance above them, and
//! the launch/climb/figure-eight phase logic with hysteresis target switching.

use nalgebra::Vector3;
use thiserror::Error;

use crate::model::{wrap_angle, AttitudeModelParams, EPS_SPEED};

#[derive(Debug, Error, PartialEq)]
pub enum AutopilotError {
    #[error("input gain must be nonzero")]
    ZeroGain,
    #[error("requested eigenvalue {0} is not strictly stable")]
    UnstableRequest(f64),
    #[error("ground speed {0} m/s too low for guidance law")]
    DegenerateSpeed(f64),
    #[error("invalid controller parameter: {0}")]
    InvalidConfig(String),
}

/// Figure-eight turning points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    One,
    Two,
}

impl Target {
    pub fn other(self) -> Target {
        match self {
            Target::One => Target::Two,
            Target::Two => Target::One,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Target::One => 1,
            Target::Two => 2,
        }
    }
}

/// Mission phase of the autopilot state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlightPhase {
    OnSlide,
    ClimbOut,
    FigureEight,
}

impl FlightPhase {
    pub fn index(self) -> u8 {
        match self {
            FlightPhase::OnSlide => 0,
            FlightPhase::ClimbOut => 1,
            FlightPhase::FigureEight => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Desired roll closed-loop eigenvalues (real, strictly negative).
    pub roll_eigenvalues: (f64, f64),
    /// Desired pitch closed-loop eigenvalues (real, strictly negative).
    pub pitch_eigenvalues: (f64, f64),
    /// Airspeed loop gain on the squared-speed error, N/(m/s)^2.
    pub airspeed_gain: f64,
    /// Course loop gain, 1/s.
    pub course_gain: f64,
    /// Altitude loop gain, 1/s.
    pub altitude_gain: f64,
    /// Forward acceleration that marks the launch, m/s^2.
    pub launch_accel_threshold: f64,
    /// Airspeed reference during climb-out, m/s.
    pub climb_airspeed_ref: f64,
    /// Pitch reference during climb-out, rad.
    pub climb_pitch_ref: f64,
    /// Altitude at which the climb hands over to the figure-eight, m.
    pub safe_altitude: f64,
    /// Minimum turning radius enforced by the roll reference clamp, m.
    pub min_turn_radius: f64,
    /// Airspeed reference during the figure-eight, m/s.
    pub flight_airspeed_ref: f64,
    /// Altitude reference during the figure-eight, m.
    pub altitude_ref: f64,
    /// First turning point, m.
    pub target_one: Vector3<f64>,
    /// Second turning point, m.
    pub target_two: Vector3<f64>,
    /// Hysteresis width of the target switch along the take-off course, m.
    pub switch_margin: f64,
    /// Course the slide launches along, rad.
    pub takeoff_course: f64,
    /// Roll input saturation, rad (symmetric bound as (min, max)).
    pub roll_input_limits: (f64, f64),
    /// Pitch input saturation, rad.
    pub pitch_input_limits: (f64, f64),
    /// Thrust saturation, N.
    pub thrust_limits: (f64, f64),
    /// Distance margin to full tether extension that raises the detach flag, m.
    pub detach_margin: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            roll_eigenvalues: (-2.7, -3.1),
            pitch_eigenvalues: (-2.7, -3.1),
            airspeed_gain: 0.5,
            course_gain: 1.0,
            altitude_gain: 0.1,
            launch_accel_threshold: 20.0,
            climb_airspeed_ref: 16.0,
            climb_pitch_ref: 0.69,
            safe_altitude: 20.0,
            min_turn_radius: 20.0,
            flight_airspeed_ref: 13.0,
            altitude_ref: 50.0,
            target_one: Vector3::new(30.0, 55.0, 50.0),
            target_two: Vector3::new(-30.0, 40.0, 50.0),
            switch_margin: 0.5,
            takeoff_course: 0.0,
            roll_input_limits: (-0.34, 0.34),
            pitch_input_limits: (-0.34, 0.34),
            thrust_limits: (0.0, 20.0),
            detach_margin: 10.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), AutopilotError> {
        for l in [
            self.roll_eigenvalues.0,
            self.roll_eigenvalues.1,
            self.pitch_eigenvalues.0,
            self.pitch_eigenvalues.1,
        ] {
            if !l.is_finite() || l >= 0.0 {
                return Err(AutopilotError::UnstableRequest(l));
            }
        }
        let positive = [
            ("airspeed_gain", self.airspeed_gain),
            ("course_gain", self.course_gain),
            ("altitude_gain", self.altitude_gain),
            ("launch_accel_threshold", self.launch_accel_threshold),
            ("climb_airspeed_ref", self.climb_airspeed_ref),
            ("safe_altitude", self.safe_altitude),
            ("min_turn_radius", self.min_turn_radius),
            ("flight_airspeed_ref", self.flight_airspeed_ref),
            ("altitude_ref", self.altitude_ref),
            ("switch_margin", self.switch_margin),
            ("detach_margin", self.detach_margin),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(AutopilotError::InvalidConfig(format!(
                    "{name} must be positive and finite"
                )));
            }
        }
        if !self.climb_pitch_ref.is_finite() || self.climb_pitch_ref <= 0.0 {
            return Err(AutopilotError::InvalidConfig(
                "climb_pitch_ref must be positive".into(),
            ));
        }
        if !self.takeoff_course.is_finite() {
            return Err(AutopilotError::InvalidConfig("takeoff_course must be finite".into()));
        }
        for (name, (lo, hi)) in [
            ("roll_input_limits", self.roll_input_limits),
            ("pitch_input_limits", self.pitch_input_limits),
            ("thrust_limits", self.thrust_limits),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(AutopilotError::InvalidConfig(format!(
                    "{name} must be an ordered finite pair"
                )));
            }
        }
        let targets_finite = self.target_one.iter().all(|v| v.is_finite())
            && self.target_two.iter().all(|v| v.is_finite());
        if !targets_finite {
            return Err(AutopilotError::InvalidConfig("targets must be finite".into()));
        }
        let slowest_roll = self.roll_eigenvalues.0.abs().min(self.roll_eigenvalues.1.abs());
        if slowest_roll <= self.course_gain {
            return Err(AutopilotError::InvalidConfig(
                "course_gain must stay below the slowest roll eigenvalue".into(),
            ));
        }
        let slowest_pitch = self.pitch_eigenvalues.0.abs().min(self.pitch_eigenvalues.1.abs());
        if slowest_pitch <= self.altitude_gain {
            return Err(AutopilotError::InvalidConfig(
                "altitude_gain must stay below the slowest pitch eigenvalue".into(),
            ));
        }
        Ok(())
    }
}

/// Proportional-derivative gains of one attitude loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeGains {
    /// Gain on the angle error.
    pub k_angle: f64,
    /// Gain on the rate error.
    pub k_rate: f64,
}

/// Place the closed-loop poles of the rate model x_ddot = a x_dot + b u at two
/// real eigenvalues via u = k_angle (ref - x) + k_rate (ref_dot - x_dot).
pub fn gains_from_eigenvalues(
    a: f64,
    b: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<AttitudeGains, AutopilotError> {
    if b == 0.0 || !b.is_finite() {
        return Err(AutopilotError::ZeroGain);
    }
    for l in [lambda1, lambda2] {
        if !l.is_finite() || l >= 0.0 {
            return Err(AutopilotError::UnstableRequest(l));
        }
    }
    Ok(AttitudeGains {
        k_angle: lambda1 * lambda2 / b,
        k_rate: (lambda1 + lambda2 - a) / (-b),
    })
}

/// Pole placement for a complex-conjugate pair sigma +/- i*omega (sigma < 0).
pub fn gains_from_damped_pair(
    a: f64,
    b: f64,
    sigma: f64,
    omega: f64,
) -> Result<AttitudeGains, AutopilotError> {
    if b == 0.0 || !b.is_finite() {
        return Err(AutopilotError::ZeroGain);
    }
    if !sigma.is_finite() || !omega.is_finite() || sigma >= 0.0 {
        return Err(AutopilotError::UnstableRequest(sigma));
    }
    Ok(AttitudeGains {
        k_angle: (sigma * sigma + omega * omega) / b,
        k_rate: (2.0 * sigma - a) / (-b),
    })
}

/// Closed-loop eigenvalues of the rate model under the given gains, returned
/// as (re, im) pairs.
pub fn closed_loop_eigenvalues(a: f64, b: f64, gains: &AttitudeGains) -> [(f64, f64); 2] {
    let trace = a - b * gains.k_rate;
    let det = b * gains.k_angle;
    let disc = trace * trace / 4.0 - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        [(trace / 2.0 + root, 0.0), (trace / 2.0 - root, 0.0)]
    } else {
        let root = (-disc).sqrt();
        [(trace / 2.0, root), (trace / 2.0, -root)]
    }
}

fn clamp(v: f64, limits: (f64, f64)) -> f64 {
    v.clamp(limits.0, limits.1)
}

/// Saturated roll input from angle and rate references.
pub fn roll_loop(
    roll_ref: f64,
    roll_rate_ref: f64,
    roll: f64,
    roll_rate: f64,
    gains: &AttitudeGains,
    limits: (f64, f64),
) -> f64 {
    clamp(
        gains.k_angle * (roll_ref - roll) + gains.k_rate * (roll_rate_ref - roll_rate),
        limits,
    )
}

/// Saturated pitch input; the rate reference is held at zero.
pub fn pitch_loop(
    pitch_ref: f64,
    pitch: f64,
    pitch_rate: f64,
    gains: &AttitudeGains,
    limits: (f64, f64),
) -> f64 {
    clamp(gains.k_angle * (pitch_ref - pitch) - gains.k_rate * pitch_rate, limits)
}

/// Saturated thrust from the squared-airspeed error.
pub fn airspeed_loop(airspeed_ref: f64, airspeed: f64, config: &ControllerConfig) -> f64 {
    clamp(
        config.airspeed_gain * (airspeed_ref * airspeed_ref - airspeed * airspeed),
        config.thrust_limits,
    )
}

/// Launch detection on the measured forward acceleration.
pub fn detect_launch(forward_accel: f64, config: &ControllerConfig) -> bool {
    forward_accel >= config.launch_accel_threshold
}

/// Course angle of a horizontal velocity, four-quadrant.
pub fn course_angle(vx: f64, vy: f64) -> f64 {
    vy.atan2(vx)
}

/// Roll reference that steers the course toward `course_ref`, clamped so the
/// commanded turn never exceeds the minimum-radius curvature.
pub fn course_hold_roll_ref(
    course_ref: f64,
    course: f64,
    ground_speed: f64,
    gravity: f64,
    config: &ControllerConfig,
) -> Result<f64, AutopilotError> {
    if ground_speed <= EPS_SPEED {
        return Err(AutopilotError::DegenerateSpeed(ground_speed));
    }
    let err = wrap_angle(course_ref - course);
    let raw = config.course_gain * ground_speed / gravity * err;
    let bound = ground_speed * ground_speed / (gravity * config.min_turn_radius);
    Ok(raw.clamp(-bound, bound))
}

/// Course reference pointing from the aircraft to the target, in the
/// horizontal plane.
pub fn target_course_ref(position: &Vector3<f64>, target: &Vector3<f64>) -> f64 {
    course_angle(target.x - position.x, target.y - position.y)
}

/// Pitch reference that closes the altitude loop through the vertical-rate
/// relation.
pub fn altitude_pitch_ref(
    altitude_ref: f64,
    altitude: f64,
    ground_speed: f64,
    config: &ControllerConfig,
) -> Result<f64, AutopilotError> {
    if ground_speed <= EPS_SPEED {
        return Err(AutopilotError::DegenerateSpeed(ground_speed));
    }
    Ok(config.altitude_gain / ground_speed * (altitude_ref - altitude))
}

/// Hysteresis target switch on the position projected along the take-off
/// course. Once the aircraft passes the switching line near the far target the
/// active target flips to the opposite one.
pub fn switch_target(
    position: &Vector3<f64>,
    active: Target,
    config: &ControllerConfig,
) -> Target {
    let dir = Vector3::new(config.takeoff_course.cos(), config.takeoff_course.sin(), 0.0);
    let s = position.dot(&dir);
    let s_one = config.target_one.dot(&dir);
    let s_two = config.target_two.dot(&dir);
    let (hi_target, s_hi, lo_target, s_lo) = if s_one >= s_two {
        (Target::One, s_one, Target::Two, s_two)
    } else {
        (Target::Two, s_two, Target::One, s_one)
    };
    if s > s_hi - config.switch_margin {
        hi_target.other()
    } else if s < s_lo + config.switch_margin {
        lo_target.other()
    } else {
        active
    }
}

/// Measurements the autopilot consumes each tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub time: f64,
    pub position: Vector3<f64>,
    pub ground_speed: f64,
    pub course: f64,
    pub forward_accel: f64,
    pub airspeed: f64,
    pub roll: f64,
    pub roll_rate: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
}

/// References and inputs produced by one autopilot tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutputs {
    pub u_roll: f64,
    pub u_pitch: f64,
    pub u_thrust: f64,
    pub roll_ref: f64,
    pub pitch_ref: f64,
    pub airspeed_ref: f64,
    pub course_ref: f64,
    pub phase: FlightPhase,
    pub target: Target,
}

/// Safety verdict evaluated before the control laws each tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafetyCheck {
    Nominal,
    /// Distance to the station is within the margin of full tether extension.
    TetherDetach,
    /// A measurement stopped being finite.
    SensorFault,
}

/// Check measurement sanity and tether extension margin.
pub fn safety_checks(
    meas: &Measurements,
    station_distance: f64,
    tether_max_length: f64,
    config: &ControllerConfig,
) -> SafetyCheck {
    let finite = meas.position.iter().all(|v| v.is_finite())
        && meas.ground_speed.is_finite()
        && meas.course.is_finite()
        && meas.forward_accel.is_finite()
        && meas.airspeed.is_finite()
        && meas.roll.is_finite()
        && meas.roll_rate.is_finite()
        && meas.pitch.is_finite()
        && meas.pitch_rate.is_finite()
        && station_distance.is_finite();
    if !finite {
        return SafetyCheck::SensorFault;
    }
    if station_distance >= tether_max_length - config.detach_margin {
        return SafetyCheck::TetherDetach;
    }
    SafetyCheck::Nominal
}

/// Stateful autopilot tying the phase machine to the control laws.
#[derive(Debug, Clone)]
pub struct Autopilot {
    pub config: ControllerConfig,
    pub roll_gains: AttitudeGains,
    pub pitch_gains: AttitudeGains,
    gravity: f64,
    phase: FlightPhase,
    target: Target,
}

impl Autopilot {
    pub fn new(
        config: ControllerConfig,
        model: &AttitudeModelParams,
    ) -> Result<Self, AutopilotError> {
        config.validate()?;
        let roll_gains = gains_from_eigenvalues(
            model.a_roll,
            model.b_roll,
            config.roll_eigenvalues.0,
            config.roll_eigenvalues.1,
        )?;
        let pitch_gains = gains_from_eigenvalues(
            model.a_pitch,
            model.b_pitch,
            config.pitch_eigenvalues.0,
            config.pitch_eigenvalues.1,
        )?;
        Ok(Self {
            config,
            roll_gains,
            pitch_gains,
            gravity: model.gravity,
            phase: FlightPhase::OnSlide,
            target: Target::One,
        })
    }

    pub fn phase(&self) -> FlightPhase {
        self.phase
    }

    pub fn active_target(&self) -> Target {
        self.target
    }

    fn target_position(&self, target: Target) -> Vector3<f64> {
        match target {
            Target::One => self.config.target_one,
            Target::Two => self.config.target_two,
        }
    }

    /// Pick the turning point farther from the aircraft in the horizontal
    /// plane, used when the figure-eight phase is entered.
    fn farthest_target(&self, position: &Vector3<f64>) -> Target {
        let d = |t: &Vector3<f64>| {
            let dx = t.x - position.x;
            let dy = t.y - position.y;
            dx * dx + dy * dy
        };
        if d(&self.config.target_one) >= d(&self.config.target_two) {
            Target::One
        } else {
            Target::Two
        }
    }

    /// Advance the phase machine and compute the references and inputs for
    /// one controller tick.
    pub fn step(&mut self, meas: &Measurements) -> ControlOutputs {
        match self.phase {
            FlightPhase::OnSlide => {
                if detect_launch(meas.forward_accel, &self.config) {
                    self.phase = FlightPhase::ClimbOut;
                }
            }
            FlightPhase::ClimbOut => {
                if meas.position.z >= self.config.safe_altitude {
                    self.phase = FlightPhase::FigureEight;
                    self.target = self.farthest_target(&meas.position);
                }
            }
            FlightPhase::FigureEight => {
                self.target = switch_target(&meas.position, self.target, &self.config);
            }
        }

        let (roll_ref, pitch_ref, airspeed_ref, course_ref) = match self.phase {
            FlightPhase::OnSlide => (0.0, 0.0, 0.0, self.config.takeoff_course),
            FlightPhase::ClimbOut => {
                let course_ref = self.config.takeoff_course;
                let roll_ref = course_hold_roll_ref(
                    course_ref,
                    meas.course,
                    meas.ground_speed,
                    self.gravity,
                    &self.config,
                )
                .unwrap_or(0.0);
                (
                    roll_ref,
                    self.config.climb_pitch_ref,
                    self.config.climb_airspeed_ref,
                    course_ref,
                )
            }
            FlightPhase::FigureEight => {
                let target = self.target_position(self.target);
                let course_ref = target_course_ref(&meas.position, &target);
                let roll_ref = course_hold_roll_ref(
                    course_ref,
                    meas.course,
                    meas.ground_speed,
                    self.gravity,
                    &self.config,
                )
                .unwrap_or(0.0);
                let pitch_ref = altitude_pitch_ref(
                    self.config.altitude_ref,
                    meas.position.z,
                    meas.ground_speed,
                    &self.config,
                )
                .unwrap_or(0.0);
                (roll_ref, pitch_ref, self.config.flight_airspeed_ref, course_ref)
            }
        };

        let (u_roll, u_pitch, u_thrust) = if self.phase == FlightPhase::OnSlide {
            (0.0, 0.0, 0.0)
        } else {
            (
                roll_loop(
                    roll_ref,
                    0.0,
                    meas.roll,
                    meas.roll_rate,
                    &self.roll_gains,
                    self.config.roll_input_limits,
                ),
                pitch_loop(
                    pitch_ref,
                    meas.pitch,
                    meas.pitch_rate,
                    &self.pitch_gains,
                    self.config.pitch_input_limits,
                ),
                airspeed_loop(airspeed_ref, meas.airspeed, &self.config),
            )
        };

        ControlOutputs {
            u_roll,
            u_pitch,
            u_thrust,
            roll_ref,
            pitch_ref,
            airspeed_ref,
            course_ref,
            phase: self.phase,
            target: self.target,
        }
    }
}
