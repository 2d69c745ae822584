//! Ground station: launch slide profile, spring-buffered tether geometry, and
//! the compression-zone winch speed law with its first-order actuator track.
//!
//! The spring buffer sits between the tether and the winch through a movable
//! pulley, so aircraft-side length changes map to spring compression at a 2:1
//! ratio and the spring force reaches the tether halved the same way.

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GroundError {
    #[error("spring compression {0} m outside [0, max] range")]
    OutOfRangeCompression(f64),
    #[error("invalid ground station parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundStationParams {
    /// Spring stiffness, N/m.
    pub spring_stiffness: f64,
    /// Maximum usable spring compression, m.
    pub spring_max_compression: f64,
    /// Rail length available to the slide, m.
    pub rail_length: f64,
    /// Slide mass, kg (reported in telemetry, not used by the kinematic profile).
    pub slide_mass: f64,
    /// Total tether length on the drum, m.
    pub tether_max_length: f64,
    /// Unreeled tether length at the start of the run, m.
    pub initial_unreeled_length: f64,
    /// Compression dividing the reel-in zone from the hold zone, m.
    pub zone_lower: f64,
    /// Compression dividing the hold zone from the reel-out zone, m.
    pub zone_upper: f64,
    /// Anchor compression where the reel-in ramp reaches full authority, m.
    pub zone_lower_anchor: f64,
    /// Anchor compression where the reel-out ramp reaches full authority, m.
    pub zone_upper_anchor: f64,
    /// Most negative winch speed reference (reel-in), m/s.
    pub reel_speed_min: f64,
    /// Most positive winch speed reference (reel-out), m/s.
    pub reel_speed_max: f64,
    /// Reference ramp acceleration in the reel-in zone, m/s^2 (negative).
    pub reel_accel_in: f64,
    /// Reference ramp acceleration in the reel-out zone, m/s^2 (positive).
    pub reel_accel_out: f64,
    /// Winch drive first-order time constant, s.
    pub winch_time_constant: f64,
    /// Winch drive acceleration limit, m/s^2.
    pub winch_accel_limit: f64,
    /// Controller sampling period shared by the winch law, s.
    pub control_period: f64,
    /// Peak slide acceleration during launch, m/s^2.
    pub slide_peak_accel: f64,
    /// Slide speed at which the aircraft is released, m/s.
    pub slide_release_speed: f64,
    /// Time for the slide acceleration to ramp from zero to peak, s.
    pub slide_ramp_time: f64,
    /// Deceleration applied to the slide after release, m/s^2 (positive value).
    pub slide_brake_accel: f64,
}

impl Default for GroundStationParams {
    fn default() -> Self {
        Self {
            spring_stiffness: 60.0,
            spring_max_compression: 0.32,
            rail_length: 4.5,
            slide_mass: 9.0,
            tether_max_length: 150.0,
            initial_unreeled_length: 0.0,
            zone_lower: 0.05,
            zone_upper: 0.15,
            zone_lower_anchor: 0.025,
            zone_upper_anchor: 0.235,
            reel_speed_min: -4.0,
            reel_speed_max: 12.0,
            reel_accel_in: -8.0,
            reel_accel_out: 30.0,
            winch_time_constant: 0.1,
            winch_accel_limit: 60.0,
            control_period: 0.02,
            slide_peak_accel: 40.0,
            slide_release_speed: 9.0,
            slide_ramp_time: 0.1,
            slide_brake_accel: 35.0,
        }
    }
}

impl GroundStationParams {
    pub fn validate(&self) -> Result<(), GroundError> {
        let all = [
            self.spring_stiffness,
            self.spring_max_compression,
            self.rail_length,
            self.slide_mass,
            self.tether_max_length,
            self.initial_unreeled_length,
            self.zone_lower,
            self.zone_upper,
            self.zone_lower_anchor,
            self.zone_upper_anchor,
            self.reel_speed_min,
            self.reel_speed_max,
            self.reel_accel_in,
            self.reel_accel_out,
            self.winch_time_constant,
            self.winch_accel_limit,
            self.control_period,
            self.slide_peak_accel,
            self.slide_release_speed,
            self.slide_ramp_time,
            self.slide_brake_accel,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GroundError::InvalidParams("non-finite value".into()));
        }
        if self.spring_stiffness <= 0.0 {
            return Err(GroundError::InvalidParams("spring_stiffness must be positive".into()));
        }
        if self.spring_max_compression <= 0.0 {
            return Err(GroundError::InvalidParams(
                "spring_max_compression must be positive".into(),
            ));
        }
        if self.rail_length <= 0.0 {
            return Err(GroundError::InvalidParams("rail_length must be positive".into()));
        }
        if self.slide_mass <= 0.0 {
            return Err(GroundError::InvalidParams("slide_mass must be positive".into()));
        }
        if self.tether_max_length <= 0.0 {
            return Err(GroundError::InvalidParams("tether_max_length must be positive".into()));
        }
        if self.initial_unreeled_length < 0.0
            || self.initial_unreeled_length > self.tether_max_length
        {
            return Err(GroundError::InvalidParams(
                "initial_unreeled_length must lie in [0, tether_max_length]".into(),
            ));
        }
        let ordered = 0.0 < self.zone_lower_anchor
            && self.zone_lower_anchor < self.zone_lower
            && self.zone_lower < self.zone_upper
            && self.zone_upper < self.zone_upper_anchor
            && self.zone_upper_anchor < self.spring_max_compression;
        if !ordered {
            return Err(GroundError::InvalidParams(
                "zone thresholds must satisfy 0 < lower_anchor < lower < upper < upper_anchor < max_compression".into(),
            ));
        }
        if !(self.reel_speed_min < 0.0 && 0.0 < self.reel_speed_max) {
            return Err(GroundError::InvalidParams(
                "reel speed limits must straddle zero".into(),
            ));
        }
        if self.reel_accel_in >= 0.0 {
            return Err(GroundError::InvalidParams("reel_accel_in must be negative".into()));
        }
        if self.reel_accel_out <= 0.0 {
            return Err(GroundError::InvalidParams("reel_accel_out must be positive".into()));
        }
        if self.winch_time_constant <= 0.0 {
            return Err(GroundError::InvalidParams(
                "winch_time_constant must be positive".into(),
            ));
        }
        if self.winch_accel_limit <= 0.0 {
            return Err(GroundError::InvalidParams("winch_accel_limit must be positive".into()));
        }
        if self.control_period <= 0.0 {
            return Err(GroundError::InvalidParams("control_period must be positive".into()));
        }
        if self.slide_peak_accel <= 0.0 {
            return Err(GroundError::InvalidParams("slide_peak_accel must be positive".into()));
        }
        if self.slide_release_speed <= 0.0 {
            return Err(GroundError::InvalidParams(
                "slide_release_speed must be positive".into(),
            ));
        }
        if self.slide_ramp_time <= 0.0 {
            return Err(GroundError::InvalidParams("slide_ramp_time must be positive".into()));
        }
        if self.slide_brake_accel <= 0.0 {
            return Err(GroundError::InvalidParams("slide_brake_accel must be positive".into()));
        }
        Ok(())
    }
}

/// Mutable ground-station state carried between controller ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundStationState {
    /// Unreeled tether length, m, in [0, tether_max_length].
    pub unreeled_length: f64,
    /// Actual winch line speed, m/s (positive reels out).
    pub winch_speed: f64,
    /// Winch speed reference from the zone law, m/s.
    pub winch_ref_speed: f64,
    /// Current spring compression, m.
    pub spring_compression: f64,
    /// Slide position along the rail, m.
    pub slide_position: f64,
    /// Slide speed, m/s.
    pub slide_speed: f64,
    /// Slide acceleration, m/s^2.
    pub slide_accel: f64,
    /// True once the winch has run into either end of the drum travel.
    pub rail_end: bool,
}

impl GroundStationState {
    pub fn initial(params: &GroundStationParams) -> Self {
        Self {
            unreeled_length: params.initial_unreeled_length,
            winch_speed: 0.0,
            winch_ref_speed: 0.0,
            spring_compression: 0.0,
            slide_position: 0.0,
            slide_speed: 0.0,
            slide_accel: 0.0,
            rail_end: false,
        }
    }
}

/// Tether quantities derived from aircraft position and unreeled length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetherGeometry {
    /// Straight-line distance from the station origin to the aircraft, m.
    pub distance: f64,
    /// Slack length when the tether is loose, m (zero when taut).
    pub slack: f64,
    /// Spring compression when the tether is taut, m (zero when loose).
    pub compression: f64,
    /// Tensile force transmitted to the aircraft, N (zero when loose).
    pub force: f64,
}

/// Compression-zone winch speed reference.
///
/// Below `zone_lower` the reference ramps toward reel-in speeds, scaled by the
/// normalized distance to the lower anchor and clamped non-positive. Between
/// the thresholds the previous reference is held. At or above `zone_upper` the
/// reference ramps toward reel-out speeds, scaled against the upper anchor and
/// clamped non-negative.
pub fn winch_reference_speed(
    compression: f64,
    previous_ref: f64,
    params: &GroundStationParams,
) -> Result<f64, GroundError> {
    if !compression.is_finite()
        || compression < 0.0
        || compression > params.spring_max_compression
    {
        return Err(GroundError::OutOfRangeCompression(compression));
    }
    let dt = params.control_period;
    if compression < params.zone_lower {
        let scale = (compression - params.zone_lower)
            / (params.zone_lower_anchor - params.zone_lower);
        let ramped = previous_ref + dt * params.reel_accel_in * scale;
        Ok(ramped.max(params.reel_speed_min).min(0.0))
    } else if compression < params.zone_upper {
        Ok(previous_ref)
    } else {
        let scale = (compression - params.zone_upper)
            / (params.zone_upper_anchor - params.zone_upper);
        let ramped = previous_ref + dt * params.reel_accel_out * scale;
        Ok(ramped.min(params.reel_speed_max).max(0.0))
    }
}

/// Advance the winch drive one interval: first-order lag toward the reference
/// with an acceleration clamp, then integrate the unreeled length and clip it
/// to the drum travel.
pub fn winch_track(state: &mut GroundStationState, params: &GroundStationParams, dt: f64) {
    let alpha = 1.0 - (-dt / params.winch_time_constant).exp();
    let mut dv = alpha * (state.winch_ref_speed - state.winch_speed);
    let dv_max = params.winch_accel_limit * dt;
    dv = dv.clamp(-dv_max, dv_max);
    state.winch_speed += dv;
    let next = state.unreeled_length + dt * state.winch_speed;
    if next <= 0.0 {
        state.unreeled_length = 0.0;
        state.winch_speed = 0.0;
        state.rail_end = true;
    } else if next >= params.tether_max_length {
        state.unreeled_length = params.tether_max_length;
        state.winch_speed = 0.0;
        state.rail_end = true;
    } else {
        state.unreeled_length = next;
    }
}

/// Geometry and force of the spring-buffered tether.
///
/// When the straight-line distance exceeds the unreeled length the excess is
/// taken up by the pulley-halved spring; compression beyond the usable stroke
/// saturates and adds a stiff bottom-out penalty to the force.
pub fn tether_geometry(
    aircraft_position: &Vector3<f64>,
    station_origin: &Vector3<f64>,
    state: &GroundStationState,
    params: &GroundStationParams,
) -> TetherGeometry {
    let distance = (aircraft_position - station_origin).norm();
    if distance <= state.unreeled_length {
        return TetherGeometry {
            distance,
            slack: state.unreeled_length - distance,
            compression: 0.0,
            force: 0.0,
        };
    }
    let raw = (distance - state.unreeled_length) / 2.0;
    let compression = raw.min(params.spring_max_compression);
    let mut force = params.spring_stiffness * compression / 2.0;
    if raw > params.spring_max_compression {
        force += 100.0 * params.spring_stiffness * (raw - params.spring_max_compression) / 2.0;
    }
    TetherGeometry {
        distance,
        slack: 0.0,
        compression,
        force,
    }
}

/// Kinematic launch profile of the slide at elapsed time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlideSample {
    pub accel: f64,
    pub speed: f64,
    pub position: f64,
    /// True while the aircraft is still carried by the slide.
    pub attached: bool,
}

/// Trapezoidal slide profile: acceleration ramps linearly to its peak, holds
/// until the release speed is reached, then the unloaded slide brakes to rest.
/// Position is clipped to the rail length.
pub fn slide_profile(t: f64, params: &GroundStationParams) -> SlideSample {
    let a_pk = params.slide_peak_accel;
    let t_r = params.slide_ramp_time;
    let v_rel = params.slide_release_speed;
    let v_ramp_end = 0.5 * a_pk * t_r;

    let (t_release, v_release, x_release) = if v_rel <= v_ramp_end {
        let tr = (2.0 * v_rel * t_r / a_pk).sqrt();
        (tr, v_rel, a_pk * tr * tr * tr / (6.0 * t_r))
    } else {
        let x_ramp_end = a_pk * t_r * t_r / 6.0;
        let t_hold = (v_rel - v_ramp_end) / a_pk;
        (
            t_r + t_hold,
            v_rel,
            x_ramp_end + v_ramp_end * t_hold + 0.5 * a_pk * t_hold * t_hold,
        )
    };

    let mut sample = if t < t_release.min(t_r) {
        let a = a_pk * t / t_r;
        SlideSample {
            accel: a,
            speed: 0.5 * a_pk * t * t / t_r,
            position: a_pk * t * t * t / (6.0 * t_r),
            attached: true,
        }
    } else if t < t_release {
        let dt = t - t_r;
        SlideSample {
            accel: a_pk,
            speed: v_ramp_end + a_pk * dt,
            position: a_pk * t_r * t_r / 6.0 + v_ramp_end * dt + 0.5 * a_pk * dt * dt,
            attached: true,
        }
    } else {
        let dt = t - t_release;
        let t_stop = v_release / params.slide_brake_accel;
        if dt < t_stop {
            SlideSample {
                accel: -params.slide_brake_accel,
                speed: v_release - params.slide_brake_accel * dt,
                position: x_release + v_release * dt - 0.5 * params.slide_brake_accel * dt * dt,
                attached: false,
            }
        } else {
            SlideSample {
                accel: 0.0,
                speed: 0.0,
                position: x_release + 0.5 * v_release * v_release / params.slide_brake_accel,
                attached: false,
            }
        }
    };
    if sample.position > params.rail_length {
        sample.position = params.rail_length;
        sample.speed = 0.0;
        sample.accel = 0.0;
    }
    sample
}

/// Time and travelled distance at which the slide releases the aircraft.
pub fn slide_release_point(params: &GroundStationParams) -> (f64, f64) {
    let a_pk = params.slide_peak_accel;
    let t_r = params.slide_ramp_time;
    let v_rel = params.slide_release_speed;
    let v_ramp_end = 0.5 * a_pk * t_r;
    if v_rel <= v_ramp_end {
        let tr = (2.0 * v_rel * t_r / a_pk).sqrt();
        (tr, a_pk * tr * tr * tr / (6.0 * t_r))
    } else {
        let t_hold = (v_rel - v_ramp_end) / a_pk;
        let x = a_pk * t_r * t_r / 6.0 + v_ramp_end * t_hold + 0.5 * a_pk * t_hold * t_hold;
        (t_r + t_hold, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> GroundStationParams {
        GroundStationParams::default()
    }

    #[test]
    fn hold_zone_keeps_previous_reference() {
        let r = winch_reference_speed(0.08, 0.8, &params()).unwrap();
        assert_eq!(r, 0.8);
    }

    #[test]
    fn reel_out_zone_clamps_negative_history_to_zero() {
        let r = winch_reference_speed(0.25, -1.0, &params()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn reel_in_zone_clamps_positive_history_to_zero() {
        let r = winch_reference_speed(0.02, 0.5, &params()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn reel_out_zone_ramps_up_from_zero() {
        let p = params();
        let r = winch_reference_speed(0.235, 0.0, &p).unwrap();
        assert_relative_eq!(r, p.control_period * p.reel_accel_out, max_relative = 1e-12);
    }

    #[test]
    fn reel_in_zone_ramps_down_from_zero() {
        let p = params();
        let r = winch_reference_speed(0.025, 0.0, &p).unwrap();
        assert_relative_eq!(r, p.control_period * p.reel_accel_in, max_relative = 1e-12);
    }

    #[test]
    fn reference_rejects_out_of_range_compression() {
        assert!(matches!(
            winch_reference_speed(0.4, 0.0, &params()),
            Err(GroundError::OutOfRangeCompression(_))
        ));
        assert!(matches!(
            winch_reference_speed(-0.01, 0.0, &params()),
            Err(GroundError::OutOfRangeCompression(_))
        ));
    }

    #[test]
    fn winch_track_matches_first_order_step() {
        let p = params();
        let mut s = GroundStationState::initial(&p);
        s.unreeled_length = 10.0;
        s.winch_ref_speed = 1.0;
        winch_track(&mut s, &p, 0.02);
        assert_relative_eq!(s.winch_speed, 1.0 - (-0.2f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(s.winch_speed, 0.18126924692201818, max_relative = 1e-12);
        assert_relative_eq!(s.unreeled_length, 10.0 + 0.02 * s.winch_speed, max_relative = 1e-12);
    }

    #[test]
    fn winch_track_respects_acceleration_clamp() {
        let p = params();
        let mut s = GroundStationState::initial(&p);
        s.unreeled_length = 10.0;
        s.winch_ref_speed = 12.0;
        winch_track(&mut s, &p, 0.02);
        assert_relative_eq!(s.winch_speed, p.winch_accel_limit * 0.02, max_relative = 1e-12);
    }

    #[test]
    fn winch_track_flags_drum_limits() {
        let p = params();
        let mut s = GroundStationState::initial(&p);
        s.unreeled_length = p.tether_max_length - 0.01;
        s.winch_speed = 1.0;
        s.winch_ref_speed = 1.0;
        winch_track(&mut s, &p, 0.02);
        assert_eq!(s.unreeled_length, p.tether_max_length);
        assert_eq!(s.winch_speed, 0.0);
        assert!(s.rail_end);
    }

    #[test]
    fn tether_slack_when_distance_below_length() {
        let p = params();
        let mut s = GroundStationState::initial(&p);
        s.unreeled_length = 50.0;
        let g = tether_geometry(
            &Vector3::new(30.0, 0.0, 40.0),
            &Vector3::zeros(),
            &s,
            &p,
        );
        assert_eq!(g.distance, 50.0);
        assert_eq!(g.slack, 0.0);
        assert_eq!(g.force, 0.0);
        let g = tether_geometry(&Vector3::new(30.0, 0.0, 30.0), &Vector3::zeros(), &s, &p);
        assert_relative_eq!(g.slack, 50.0 - (1800f64).sqrt(), max_relative = 1e-12);
        assert_eq!(g.force, 0.0);
    }

    #[test]
    fn tether_force_matches_hand_values() {
        let p = params();
        let mut s = GroundStationState::initial(&p);
        s.unreeled_length = 100.0;
        let g = tether_geometry(&Vector3::new(100.2, 0.0, 0.0), &Vector3::zeros(), &s, &p);
        assert_relative_eq!(g.compression, 0.1, max_relative = 1e-12);
        assert_relative_eq!(g.force, 3.0, max_relative = 1e-12);
        let g = tether_geometry(&Vector3::new(100.3, 0.0, 0.0), &Vector3::zeros(), &s, &p);
        assert_relative_eq!(g.force, 4.5, max_relative = 1e-12);
    }

    #[test]
    fn tether_bottom_out_adds_stiff_penalty() {
        let p = params();
        let mut s = GroundStationState::initial(&p);
        s.unreeled_length = 100.0;
        let g = tether_geometry(&Vector3::new(100.8, 0.0, 0.0), &Vector3::zeros(), &s, &p);
        assert_relative_eq!(g.compression, 0.32, max_relative = 1e-12);
        let base = 60.0 * 0.32 / 2.0;
        let penalty = 100.0 * 60.0 * (0.4 - 0.32) / 2.0;
        assert_relative_eq!(g.force, base + penalty, max_relative = 1e-12);
    }

    #[test]
    fn slide_release_at_configured_speed() {
        let p = params();
        let (t_rel, x_rel) = slide_release_point(&p);
        let before = slide_profile(t_rel - 1e-9, &p);
        let after = slide_profile(t_rel + 1e-9, &p);
        assert!(before.attached);
        assert!(!after.attached);
        assert_relative_eq!(before.speed, p.slide_release_speed, epsilon = 1e-6);
        assert_relative_eq!(t_rel, 0.275, max_relative = 1e-12);
        assert_relative_eq!(x_rel, 1.0291666666666666, max_relative = 1e-9);
        assert!(x_rel < 2.0);
    }

    #[test]
    fn slide_profile_is_continuous_and_stays_on_rail() {
        let p = params();
        let mut prev = slide_profile(0.0, &p);
        let dt = 1e-4;
        let mut t = dt;
        while t < 3.0 {
            let s = slide_profile(t, &p);
            assert!((s.speed - prev.speed).abs() < 50.0 * dt + 1e-9);
            assert!((s.position - prev.position).abs() < 15.0 * dt + 1e-9);
            assert!(s.position >= 0.0 && s.position <= p.rail_length);
            prev = s;
            t += dt;
        }
        assert_eq!(prev.speed, 0.0);
    }

    #[test]
    fn slide_brakes_within_rail() {
        let p = params();
        let s = slide_profile(10.0, &p);
        assert_eq!(s.speed, 0.0);
        assert!(s.position <= p.rail_length);
    }

    #[test]
    fn default_params_validate() {
        params().validate().unwrap();
        let mut p = params();
        p.zone_lower = 0.2;
        assert!(p.validate().is_err());
        let mut p = params();
        p.reel_speed_min = 0.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn reel_in_zone_never_positive(x in 0.0f64..0.0499, prev in -4.0f64..12.0) {
            let r = winch_reference_speed(x, prev, &params()).unwrap();
            prop_assert!(r <= 0.0);
            prop_assert!(r >= params().reel_speed_min);
        }

        #[test]
        fn reel_out_zone_never_negative(x in 0.15f64..0.32, prev in -4.0f64..12.0) {
            let r = winch_reference_speed(x, prev, &params()).unwrap();
            prop_assert!(r >= 0.0);
            prop_assert!(r <= params().reel_speed_max);
        }

        #[test]
        fn hold_zone_is_identity(x in 0.0501f64..0.1499, prev in -4.0f64..12.0) {
            let r = winch_reference_speed(x, prev, &params()).unwrap();
            prop_assert_eq!(r, prev);
        }

        #[test]
        fn slack_and_force_never_simultaneous(
            dx in -30.0f64..30.0,
            dz in 0.0f64..30.0,
            len in 1.0f64..140.0,
        ) {
            let p = params();
            let mut s = GroundStationState::initial(&p);
            s.unreeled_length = len;
            let g = tether_geometry(&Vector3::new(100.0 + dx, 0.0, dz), &Vector3::zeros(), &s, &p);
            prop_assert!(g.slack >= 0.0);
            prop_assert!(g.force >= 0.0);
            prop_assert_eq!(g.slack * g.force, 0.0);
            prop_assert!(g.compression <= p.spring_max_compression);
        }

        #[test]
        fn tether_force_monotone_in_distance(
            d1 in 50.0f64..149.0,
            step in 0.001f64..5.0,
        ) {
            let p = params();
            let mut s = GroundStationState::initial(&p);
            s.unreeled_length = 100.0;
            let g1 = tether_geometry(&Vector3::new(d1, 0.0, 0.0), &Vector3::zeros(), &s, &p);
            let g2 = tether_geometry(&Vector3::new(d1 + step, 0.0, 0.0), &Vector3::zeros(), &s, &p);
            prop_assert!(g2.force >= g1.force);
        }
    }
}
