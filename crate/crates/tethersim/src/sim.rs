//! Closed-loop world: measurement sampling, autopilot tick, ground-station
//! update, disturbance scheduling, and plant integration, advanced one
//! controller period at a time with zero-order-held inputs and forces.
//!
//! Determinism: every stochastic element (impulse schedule, gust noise,
//! measurement noise) draws from its own counter-based stream of the scenario
//! seed, and no state outlives the `World`, so equal seeds give equal runs.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autopilot::{
    course_angle, safety_checks, Autopilot, AutopilotError, FlightPhase, Measurements,
    SafetyCheck, Target,
};
use crate::ground::{
    slide_profile, tether_geometry, winch_reference_speed, winch_track, GroundStationState,
};
use crate::model::{
    airspeed_derivative, kinematics_step, pitch_acceleration, roll_acceleration, turn_rate,
    wrap_angle, AircraftState, EPS_SPEED,
};
use crate::scenario::{Integrator, Scenario};
use crate::telemetry::TelemetrySample;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario rejected: {0}")]
    InvalidScenario(String),
    #[error("controller rejected: {0}")]
    InvalidController(#[from] AutopilotError),
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// A non-finite measurement aborted the run at the given time.
    SensorFault { t: f64 },
}

/// One scheduled half-sine force impulse.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Impulse {
    start: f64,
    duration: f64,
    peak: f64,
}

/// Disturbance values held over one controller tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSample {
    pub wind: Vector3<f64>,
    pub impulse_force: f64,
    pub d_roll: f64,
    pub d_pitch: f64,
}

/// Full simulation state plus the schedules derived from the scenario.
pub struct World {
    pub scenario: Scenario,
    pub autopilot: Autopilot,
    pub aircraft: AircraftState,
    pub velocity: Vector3<f64>,
    pub ground: GroundStationState,
    pub t: f64,
    pub tick: u64,
    aircraft_on_slide: bool,
    tether_attached: bool,
    prev_ground_speed: f64,
    prev_course: f64,
    impulses: Vec<Impulse>,
    gust_rng: ChaCha8Rng,
    gust_noise_state: f64,
    noise_rng: ChaCha8Rng,
    pub events: RunEvents,
}

/// Event times recorded during a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunEvents {
    pub launch_detected: Option<f64>,
    pub slide_released: Option<f64>,
    pub figure_eight_entered: Option<f64>,
    pub tether_detached: Option<f64>,
    pub rail_end: Option<f64>,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<World, SimError> {
        scenario
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let autopilot = Autopilot::new(scenario.controller, &scenario.model)?;

        let mut impulse_rng = ChaCha8Rng::seed_from_u64(scenario.sim.seed);
        impulse_rng.set_stream(1);
        let mut impulses = Vec::new();
        if scenario.impulses.enabled {
            let p = &scenario.impulses;
            let mut t0 = p.start;
            while t0 < scenario.sim.duration {
                let peak = impulse_rng.gen_range(p.peak_min..=p.peak_max);
                let duration = impulse_rng.gen_range(p.duration_min..=p.duration_max);
                impulses.push(Impulse {
                    start: t0,
                    duration,
                    peak,
                });
                t0 += impulse_rng.gen_range(p.gap_min..=p.gap_max);
            }
        }

        let mut gust_rng = ChaCha8Rng::seed_from_u64(scenario.sim.seed);
        gust_rng.set_stream(2);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(scenario.sim.seed);
        noise_rng.set_stream(3);

        let mut aircraft = AircraftState::at_rest();
        aircraft.position = scenario.station_origin;
        aircraft.course = scenario.controller.takeoff_course;

        Ok(World {
            scenario: scenario.clone(),
            autopilot,
            aircraft,
            velocity: Vector3::zeros(),
            ground: GroundStationState::initial(&scenario.ground),
            t: 0.0,
            tick: 0,
            aircraft_on_slide: true,
            tether_attached: true,
            prev_ground_speed: 0.0,
            prev_course: scenario.controller.takeoff_course,
            impulses,
            gust_rng,
            gust_noise_state: 0.0,
            noise_rng,
            events: RunEvents::default(),
        })
    }

    /// Scheduled impulses as (start, duration, peak) triples.
    pub fn impulse_schedule(&self) -> Vec<(f64, f64, f64)> {
        self.impulses
            .iter()
            .map(|i| (i.start, i.duration, i.peak))
            .collect()
    }

    /// Wind, impulse force, and attitude disturbances for the tick at `t`,
    /// held constant over the controller period.
    pub fn sample_disturbances(&mut self, t: f64) -> DisturbanceSample {
        use std::f64::consts::TAU;
        let w = &self.scenario.wind;
        let mut wind = w.steady;
        if w.gust_amplitude != 0.0 || w.gust_noise != 0.0 {
            // First-order coloring with a 1 s correlation time, scaled so the
            // stationary standard deviation equals the configured noise level.
            let alpha = (-self.scenario.ground.control_period / 1.0).exp();
            let drive = w.gust_noise * ((1.0 + alpha) / (1.0 - alpha)).sqrt();
            self.gust_noise_state = alpha * self.gust_noise_state
                + (1.0 - alpha) * drive * standard_normal(&mut self.gust_rng);
            let gust = w.gust_amplitude * (TAU * t / w.gust_period).sin() + self.gust_noise_state;
            wind += w.gust_direction * gust;
        }
        let mut impulse_force = 0.0;
        for imp in &self.impulses {
            if t >= imp.start && t < imp.start + imp.duration {
                let phase = (t - imp.start) / imp.duration;
                impulse_force = imp.peak * (std::f64::consts::PI * phase).sin();
                break;
            }
        }
        let d = &self.scenario.attitude_disturbance;
        DisturbanceSample {
            wind,
            impulse_force,
            d_roll: d.roll_amplitude * (TAU * t / d.roll_period).sin(),
            d_pitch: d.pitch_amplitude * (TAU * t / d.pitch_period).sin(),
        }
    }

    fn measurements(&mut self) -> Measurements {
        let course = if self.ground_speed_true() > EPS_SPEED {
            course_angle(self.velocity.x, self.velocity.y)
        } else {
            self.prev_course
        };
        self.prev_course = course;
        let forward_accel = if self.aircraft_on_slide {
            slide_profile(self.t, &self.scenario.ground).accel
        } else {
            (self.ground_speed_true() - self.prev_ground_speed)
                / self.scenario.ground.control_period
        };
        let mut meas = Measurements {
            time: self.t,
            position: self.aircraft.position,
            ground_speed: self.ground_speed_true(),
            course,
            forward_accel,
            airspeed: self.aircraft.airspeed,
            roll: self.aircraft.roll,
            roll_rate: self.aircraft.roll_rate,
            pitch: self.aircraft.pitch,
            pitch_rate: self.aircraft.pitch_rate,
        };
        let n = &self.scenario.noise;
        if n.enabled {
            let g = |rng: &mut ChaCha8Rng, sigma: f64| sigma * standard_normal(rng);
            meas.position.x += g(&mut self.noise_rng, n.sigma_position);
            meas.position.y += g(&mut self.noise_rng, n.sigma_position);
            meas.position.z += g(&mut self.noise_rng, n.sigma_position);
            meas.roll += g(&mut self.noise_rng, n.sigma_attitude);
            meas.pitch += g(&mut self.noise_rng, n.sigma_attitude);
            meas.roll_rate += g(&mut self.noise_rng, n.sigma_rate);
            meas.pitch_rate += g(&mut self.noise_rng, n.sigma_rate);
            meas.airspeed += g(&mut self.noise_rng, n.sigma_airspeed);
        }
        meas
    }

    fn ground_speed_true(&self) -> f64 {
        self.aircraft.ground_speed
    }

    fn place_on_slide(&mut self, t: f64, wind: &Vector3<f64>) {
        let g = &self.scenario.ground;
        let sample = slide_profile(t, g);
        let dir = Vector3::new(
            self.scenario.controller.takeoff_course.cos(),
            self.scenario.controller.takeoff_course.sin(),
            0.0,
        );
        self.aircraft.position = self.scenario.station_origin + dir * sample.position;
        self.velocity = dir * sample.speed;
        self.aircraft.ground_speed = sample.speed;
        self.aircraft.course = self.scenario.controller.takeoff_course;
        self.aircraft.airspeed = (self.velocity - wind).norm();
        self.aircraft.roll = 0.0;
        self.aircraft.roll_rate = 0.0;
        self.aircraft.pitch = 0.0;
        self.aircraft.pitch_rate = 0.0;
        self.ground.slide_position = sample.position;
        self.ground.slide_speed = sample.speed;
        self.ground.slide_accel = sample.accel;
    }

    /// Derivative of the 9-state plant vector
    /// [p_x, p_y, p_z, course, roll, roll_rate, pitch, pitch_rate, airspeed].
    fn plant_derivative(
        &self,
        x: &[f64; 9],
        u_roll: f64,
        u_pitch: f64,
        u_thrust: f64,
        tether_force: f64,
        dist: &DisturbanceSample,
    ) -> [f64; 9] {
        let state = AircraftState {
            position: Vector3::new(x[0], x[1], x[2]),
            ground_speed: 0.0,
            course: x[3],
            roll: x[4],
            roll_rate: x[5],
            pitch: x[6],
            pitch_rate: x[7],
            airspeed: x[8].max(0.0),
        };
        let (velocity, speed) = kinematics_step(&state, &dist.wind);
        let moving = AircraftState {
            ground_speed: speed,
            ..state
        };
        let course_dot = turn_rate(&moving, &self.scenario.model).unwrap_or(0.0);
        let mut airspeed_dot = airspeed_derivative(
            &moving,
            u_thrust,
            &self.scenario.model,
            -dist.impulse_force,
            tether_force,
        );
        if state.airspeed <= 0.0 && airspeed_dot < 0.0 {
            airspeed_dot = 0.0;
        }
        [
            velocity.x,
            velocity.y,
            velocity.z,
            course_dot,
            state.roll_rate,
            roll_acceleration(&moving, u_roll, &self.scenario.model, dist.d_roll),
            state.pitch_rate,
            pitch_acceleration(&moving, u_pitch, &self.scenario.model, dist.d_pitch),
            airspeed_dot,
        ]
    }

    fn integrate_plant(
        &mut self,
        u_roll: f64,
        u_pitch: f64,
        u_thrust: f64,
        tether_force: f64,
        dist: &DisturbanceSample,
    ) {
        let period = self.scenario.ground.control_period;
        let n = (period / self.scenario.sim.dt).ceil().max(1.0) as usize;
        let h = period / n as f64;
        let mut x = [
            self.aircraft.position.x,
            self.aircraft.position.y,
            self.aircraft.position.z,
            self.aircraft.course,
            self.aircraft.roll,
            self.aircraft.roll_rate,
            self.aircraft.pitch,
            self.aircraft.pitch_rate,
            self.aircraft.airspeed,
        ];
        let deriv =
            |w: &World, x: &[f64; 9]| w.plant_derivative(x, u_roll, u_pitch, u_thrust, tether_force, dist);
        for _ in 0..n {
            match self.scenario.sim.integrator {
                Integrator::Euler => {
                    let k1 = deriv(self, &x);
                    for i in 0..9 {
                        x[i] += h * k1[i];
                    }
                }
                Integrator::Rk4 => {
                    let k1 = deriv(self, &x);
                    let mut x2 = x;
                    for i in 0..9 {
                        x2[i] += 0.5 * h * k1[i];
                    }
                    let k2 = deriv(self, &x2);
                    let mut x3 = x;
                    for i in 0..9 {
                        x3[i] += 0.5 * h * k2[i];
                    }
                    let k3 = deriv(self, &x3);
                    let mut x4 = x;
                    for i in 0..9 {
                        x4[i] += h * k3[i];
                    }
                    let k4 = deriv(self, &x4);
                    for i in 0..9 {
                        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
            }
            x[8] = x[8].max(0.0);
        }
        self.aircraft.position = Vector3::new(x[0], x[1], x[2]);
        self.aircraft.course = wrap_angle(x[3]);
        self.aircraft.roll = x[4];
        self.aircraft.roll_rate = x[5];
        self.aircraft.pitch = x[6];
        self.aircraft.pitch_rate = x[7];
        self.aircraft.airspeed = x[8];
        let (velocity, speed) = kinematics_step(&self.aircraft, &dist.wind);
        self.velocity = velocity;
        self.aircraft.ground_speed = speed;
    }

    /// Advance one controller tick. Returns the telemetry row for the tick,
    /// or the outcome if the run must stop.
    pub fn step(&mut self) -> Result<TelemetrySample, RunOutcome> {
        let meas = self.measurements();

        let station_distance = (self.aircraft.position - self.scenario.station_origin).norm();
        match safety_checks(
            &meas,
            station_distance,
            self.scenario.ground.tether_max_length,
            &self.scenario.controller,
        ) {
            SafetyCheck::SensorFault => return Err(RunOutcome::SensorFault { t: self.t }),
            SafetyCheck::TetherDetach => {
                if self.tether_attached {
                    self.tether_attached = false;
                    self.events.tether_detached = Some(self.t);
                }
            }
            SafetyCheck::Nominal => {}
        }

        let phase_before = self.autopilot.phase();
        let out = self.autopilot.step(&meas);
        if phase_before == FlightPhase::OnSlide && out.phase == FlightPhase::ClimbOut {
            self.events.launch_detected = Some(self.t);
        }
        if phase_before == FlightPhase::ClimbOut && out.phase == FlightPhase::FigureEight {
            self.events.figure_eight_entered = Some(self.t);
        }

        let slide = slide_profile(self.t, &self.scenario.ground);
        if self.aircraft_on_slide && !slide.attached {
            self.aircraft_on_slide = false;
            self.events.slide_released = Some(self.t);
        }
        self.ground.slide_position = slide.position;
        self.ground.slide_speed = slide.speed;
        self.ground.slide_accel = slide.accel;

        let geometry = if self.tether_attached {
            tether_geometry(
                &self.aircraft.position,
                &self.scenario.station_origin,
                &self.ground,
                &self.scenario.ground,
            )
        } else {
            crate::ground::TetherGeometry {
                distance: station_distance,
                slack: 0.0,
                compression: 0.0,
                force: 0.0,
            }
        };
        self.ground.spring_compression = geometry.compression;

        let rail_end_before = self.ground.rail_end;
        if self.tether_attached {
            self.ground.winch_ref_speed = if self.aircraft_on_slide {
                slide.speed
            } else {
                winch_reference_speed(
                    geometry.compression,
                    self.ground.winch_ref_speed,
                    &self.scenario.ground,
                )
                .expect("geometry clamps compression into range")
            };
        } else {
            self.ground.winch_ref_speed = 0.0;
        }
        winch_track(
            &mut self.ground,
            &self.scenario.ground,
            self.scenario.ground.control_period,
        );
        if self.ground.rail_end && !rail_end_before {
            self.events.rail_end = Some(self.t);
        }

        let dist = self.sample_disturbances(self.t);

        let sample = TelemetrySample {
            t: self.t,
            position: self.aircraft.position,
            ground_speed: self.aircraft.ground_speed,
            course: self.aircraft.course,
            roll: self.aircraft.roll,
            roll_rate: self.aircraft.roll_rate,
            pitch: self.aircraft.pitch,
            pitch_rate: self.aircraft.pitch_rate,
            airspeed: self.aircraft.airspeed,
            phase: out.phase,
            target: out.target,
            roll_ref: out.roll_ref,
            pitch_ref: out.pitch_ref,
            airspeed_ref: out.airspeed_ref,
            course_ref: out.course_ref,
            u_roll: out.u_roll,
            u_pitch: out.u_pitch,
            u_thrust: out.u_thrust,
            slide_position: self.ground.slide_position,
            slide_speed: self.ground.slide_speed,
            spring_compression: geometry.compression,
            winch_speed: self.ground.winch_speed,
            winch_ref_speed: self.ground.winch_ref_speed,
            unreeled_length: self.ground.unreeled_length,
            slack: geometry.slack,
            tether_force: geometry.force,
            impulse_force: dist.impulse_force,
            wind: dist.wind,
            d_roll: dist.d_roll,
            d_pitch: dist.d_pitch,
        };

        self.prev_ground_speed = self.aircraft.ground_speed;
        if self.aircraft_on_slide {
            self.place_on_slide(self.t + self.scenario.ground.control_period, &dist.wind);
        } else {
            self.integrate_plant(
                out.u_roll,
                out.u_pitch,
                out.u_thrust,
                geometry.force,
                &dist,
            );
        }

        self.t += self.scenario.ground.control_period;
        self.tick += 1;
        Ok(sample)
    }
}

/// Completed run: telemetry at full rate plus derived metrics.
pub struct RunOutput {
    pub telemetry: Vec<TelemetrySample>,
    pub metrics: RunMetrics,
    pub outcome: RunOutcome,
    pub events: RunEvents,
}

/// Run a scenario start to finish.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let mut world = World::new(scenario)?;
    let ticks = (scenario.sim.duration / scenario.ground.control_period).round() as u64;
    let mut telemetry = Vec::with_capacity(ticks as usize);
    let mut outcome = RunOutcome::Completed;
    for _ in 0..ticks {
        match world.step() {
            Ok(sample) => telemetry.push(sample),
            Err(stop) => {
                outcome = stop;
                break;
            }
        }
    }
    let metrics = compute_metrics(&telemetry, scenario, &world.events, outcome);
    Ok(RunOutput {
        telemetry,
        metrics,
        outcome,
        events: world.events,
    })
}

/// Scalar summary of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Time the launch detection fired, s.
    pub launch_time: Option<f64>,
    /// Time the climb reached the safe altitude, s.
    pub time_to_safe_altitude: Option<f64>,
    /// Time the altitude first entered the settle band around the reference, s.
    pub settle_time: Option<f64>,
    /// RMS altitude error after settling, m.
    pub altitude_rms: f64,
    /// Largest altitude error after settling, m.
    pub altitude_max_err: f64,
    /// Mean airspeed after settling, m/s.
    pub airspeed_mean: f64,
    /// Largest deviation of the airspeed from its settled mean, m/s.
    pub airspeed_max_dev: f64,
    /// Lowest altitude after the figure-eight began, m.
    pub min_altitude: f64,
    /// Largest distance from the station origin, m.
    pub max_station_distance: f64,
    /// Number of completed figure-eight laps.
    pub lap_count: usize,
    /// Mean lap period over the periodic tail, s.
    pub lap_period_mean: f64,
    /// Relative RMS shape difference of the last lap pair.
    pub lap_rms_rel: f64,
    /// Time from which every subsequent lap pair stays within the periodicity
    /// band, s.
    pub periodic_from: Option<f64>,
    /// Mean |roll| while the minimum-radius clamp was active, rad.
    pub roll_mean_clamped: f64,
    /// Fraction of figure-eight samples with the clamp active.
    pub clamped_fraction: f64,
    /// Count of taut-tether episodes.
    pub taut_count: usize,
    /// Peak tether force, N.
    pub taut_peak_force: f64,
    /// Longest taut episode, s.
    pub taut_max_duration: f64,
    /// Total taut time, s.
    pub taut_total_duration: f64,
    /// Time the tether was released by the safety check, if any, s.
    pub tether_detached: Option<f64>,
    /// Time the winch hit a drum travel limit, if any, s.
    pub rail_end: Option<f64>,
    /// Time a sensor fault aborted the run, if any, s.
    pub sensor_fault: Option<f64>,
    /// Number of telemetry rows the metrics were computed from.
    pub rows: usize,
}

const SETTLE_BAND: f64 = 1.0;
const PERIODIC_RMS_LIMIT: f64 = 0.15;
const LAP_RESAMPLE_POINTS: usize = 200;

fn resample_lap(samples: &[TelemetrySample]) -> Vec<Vector3<f64>> {
    let n = samples.len();
    let mut out = Vec::with_capacity(LAP_RESAMPLE_POINTS);
    for j in 0..LAP_RESAMPLE_POINTS {
        let pos = j as f64 * (n - 1) as f64 / (LAP_RESAMPLE_POINTS - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let p = if i + 1 < n {
            samples[i].position * (1.0 - frac) + samples[i + 1].position * frac
        } else {
            samples[n - 1].position
        };
        out.push(p);
    }
    out
}

fn lap_pair_rms(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let centroid: Vector3<f64> = b.iter().sum::<Vector3<f64>>() / b.len() as f64;
    let mut diff_sq = 0.0;
    let mut scatter_sq = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        diff_sq += (pa - pb).norm_squared();
        scatter_sq += (pb - centroid).norm_squared();
    }
    if scatter_sq == 0.0 {
        return f64::INFINITY;
    }
    (diff_sq / scatter_sq).sqrt()
}

/// Derive the run metrics from full-rate telemetry.
pub fn compute_metrics(
    telemetry: &[TelemetrySample],
    scenario: &Scenario,
    events: &RunEvents,
    outcome: RunOutcome,
) -> RunMetrics {
    let mut m = RunMetrics {
        launch_time: events.launch_detected,
        time_to_safe_altitude: events.figure_eight_entered,
        settle_time: None,
        altitude_rms: f64::NAN,
        altitude_max_err: f64::NAN,
        airspeed_mean: f64::NAN,
        airspeed_max_dev: f64::NAN,
        min_altitude: f64::NAN,
        max_station_distance: 0.0,
        lap_count: 0,
        lap_period_mean: f64::NAN,
        lap_rms_rel: f64::NAN,
        periodic_from: None,
        roll_mean_clamped: f64::NAN,
        clamped_fraction: 0.0,
        taut_count: 0,
        taut_peak_force: 0.0,
        taut_max_duration: 0.0,
        taut_total_duration: 0.0,
        tether_detached: events.tether_detached,
        rail_end: events.rail_end,
        sensor_fault: match outcome {
            RunOutcome::SensorFault { t } => Some(t),
            RunOutcome::Completed => None,
        },
        rows: telemetry.len(),
    };
    if telemetry.is_empty() {
        return m;
    }

    for s in telemetry {
        let d = (s.position - scenario.station_origin).norm();
        if d > m.max_station_distance {
            m.max_station_distance = d;
        }
    }

    let period = scenario.ground.control_period;
    let mut taut_run = 0usize;
    for s in telemetry {
        if s.tether_force > 0.0 {
            taut_run += 1;
            if taut_run == 1 {
                m.taut_count += 1;
            }
            if s.tether_force > m.taut_peak_force {
                m.taut_peak_force = s.tether_force;
            }
            m.taut_total_duration += period;
            let d = taut_run as f64 * period;
            if d > m.taut_max_duration {
                m.taut_max_duration = d;
            }
        } else {
            taut_run = 0;
        }
    }

    let fig8: Vec<&TelemetrySample> = telemetry
        .iter()
        .filter(|s| s.phase == FlightPhase::FigureEight)
        .collect();
    if fig8.is_empty() {
        return m;
    }

    m.min_altitude = fig8.iter().map(|s| s.position.z).fold(f64::INFINITY, f64::min);

    let alt_ref = scenario.controller.altitude_ref;
    m.settle_time = fig8
        .iter()
        .find(|s| (s.position.z - alt_ref).abs() <= SETTLE_BAND)
        .map(|s| s.t);

    if let Some(t_settle) = m.settle_time {
        let settled: Vec<&&TelemetrySample> = fig8.iter().filter(|s| s.t >= t_settle).collect();
        if !settled.is_empty() {
            let mut sq = 0.0;
            let mut max_err: f64 = 0.0;
            let mut speed_sum = 0.0;
            for s in &settled {
                let e = s.position.z - alt_ref;
                sq += e * e;
                max_err = max_err.max(e.abs());
                speed_sum += s.airspeed;
            }
            m.altitude_rms = (sq / settled.len() as f64).sqrt();
            m.altitude_max_err = max_err;
            m.airspeed_mean = speed_sum / settled.len() as f64;
            m.airspeed_max_dev = settled
                .iter()
                .map(|s| (s.airspeed - m.airspeed_mean).abs())
                .fold(0.0, f64::max);
        }
    }

    let gravity = scenario.model.gravity;
    let r_min = scenario.controller.min_turn_radius;
    let mut clamped = 0usize;
    let mut roll_sum = 0.0;
    for s in &fig8 {
        let bound = s.ground_speed * s.ground_speed / (gravity * r_min);
        if s.roll_ref.abs() >= bound * (1.0 - 1e-9) && bound > 0.0 {
            clamped += 1;
            roll_sum += s.roll.abs();
        }
    }
    if clamped > 0 {
        m.roll_mean_clamped = roll_sum / clamped as f64;
        m.clamped_fraction = clamped as f64 / fig8.len() as f64;
    }

    let mut boundaries = Vec::new();
    for w in fig8.windows(2) {
        if w[0].target == Target::Two && w[1].target == Target::One {
            boundaries.push(w[1].t);
        }
    }
    if boundaries.len() >= 2 {
        let laps: Vec<Vec<&TelemetrySample>> = boundaries
            .windows(2)
            .map(|b| {
                fig8.iter()
                    .filter(|s| s.t >= b[0] && s.t < b[1])
                    .copied()
                    .collect()
            })
            .collect();
        let usable: Vec<&Vec<&TelemetrySample>> =
            laps.iter().filter(|l| l.len() >= 4).collect();
        m.lap_count = usable.len();
        if usable.len() >= 2 {
            let shapes: Vec<Vec<Vector3<f64>>> = usable
                .iter()
                .map(|l| {
                    let owned: Vec<TelemetrySample> = l.iter().map(|s| **s).collect();
                    resample_lap(&owned)
                })
                .collect();
            let rels: Vec<f64> = shapes
                .windows(2)
                .map(|w| lap_pair_rms(&w[0], &w[1]))
                .collect();
            m.lap_rms_rel = *rels.last().unwrap();
            let mut from = None;
            for i in 0..rels.len() {
                if rels[i..].iter().all(|r| *r < PERIODIC_RMS_LIMIT) {
                    from = Some(i);
                    break;
                }
            }
            if let Some(i) = from {
                m.periodic_from = Some(boundaries[i + 1]);
                let periods: Vec<f64> = boundaries[i..]
                    .windows(2)
                    .map(|b| b[1] - b[0])
                    .collect();
                if !periods.is_empty() {
                    m.lap_period_mean = periods.iter().sum::<f64>() / periods.len() as f64;
                }
            }
        }
    }

    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_scenario() -> Scenario {
        let mut s = Scenario::default();
        s.ground.initial_unreeled_length = 120.0;
        s.ground.reel_speed_min = -0.05;
        s.sim.duration = 30.0;
        s
    }

    #[test]
    fn world_rejects_invalid_scenario() {
        let mut s = Scenario::default();
        s.sim.dt = -1.0;
        assert!(matches!(World::new(&s), Err(SimError::InvalidScenario(_))));
    }

    #[test]
    fn launch_sequence_times_match_slide_profile() {
        let s = quiet_scenario();
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.outcome, RunOutcome::Completed);
        let detect = out.events.launch_detected.unwrap();
        assert!((detect - 0.06).abs() < 1e-9, "detection at {detect}");
        let release = out.events.slide_released.unwrap();
        assert!((0.26..=0.30).contains(&release), "release at {release}");
    }

    #[test]
    fn same_seed_reproduces_identical_telemetry() {
        let mut s = quiet_scenario();
        s.impulses.enabled = true;
        s.impulses.start = 5.0;
        s.noise.enabled = true;
        s.sim.duration = 12.0;
        let a = run_scenario(&s).unwrap();
        let b = run_scenario(&s).unwrap();
        assert_eq!(a.telemetry.len(), b.telemetry.len());
        for (x, y) in a.telemetry.iter().zip(&b.telemetry) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn different_seed_changes_disturbed_run() {
        let mut s = quiet_scenario();
        s.impulses.enabled = true;
        s.impulses.start = 5.0;
        s.sim.duration = 12.0;
        let a = run_scenario(&s).unwrap();
        s.sim.seed = 2;
        let b = run_scenario(&s).unwrap();
        let differs = a
            .telemetry
            .iter()
            .zip(&b.telemetry)
            .any(|(x, y)| x.position != y.position);
        assert!(differs);
    }

    #[test]
    fn impulse_schedule_is_zero_outside_windows() {
        let mut s = quiet_scenario();
        s.impulses.enabled = true;
        s.impulses.start = 5.0;
        s.sim.duration = 20.0;
        let mut world = World::new(&s).unwrap();
        let d = world.sample_disturbances(1.0);
        assert_eq!(d.impulse_force, 0.0);
        let mut any_positive = false;
        let mut t = 5.0;
        while t < 20.0 {
            let d = world.sample_disturbances(t);
            if d.impulse_force > 0.0 {
                any_positive = true;
                assert!(d.impulse_force <= s.impulses.peak_max + 1e-12);
            }
            t += 0.01;
        }
        assert!(any_positive);
    }

    #[test]
    fn telemetry_time_strictly_increases() {
        let s = quiet_scenario();
        let out = run_scenario(&s).unwrap();
        for w in out.telemetry.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        assert_eq!(out.telemetry.len(), 1500);
    }

    #[test]
    fn phase_transitions_happen_once_and_in_order() {
        let s = quiet_scenario();
        let out = run_scenario(&s).unwrap();
        let phases: Vec<u8> = out.telemetry.iter().map(|s| s.phase.index()).collect();
        let mut changes = Vec::new();
        for w in phases.windows(2) {
            if w[0] != w[1] {
                changes.push((w[0], w[1]));
            }
        }
        assert_eq!(changes, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn slack_and_force_never_coexist_in_flight() {
        let s = quiet_scenario();
        let out = run_scenario(&s).unwrap();
        for row in &out.telemetry {
            assert!(row.slack * row.tether_force == 0.0);
            assert!(row.spring_compression <= s.ground.spring_max_compression + 1e-12);
        }
    }

    #[test]
    fn figure_eight_settles_on_altitude_and_airspeed() {
        let mut s = quiet_scenario();
        s.sim.duration = 90.0;
        let out = run_scenario(&s).unwrap();
        let m = &out.metrics;
        assert!(m.time_to_safe_altitude.unwrap() < 10.0);
        assert!(m.settle_time.is_some());
        assert!(m.altitude_rms < 1.0, "altitude rms {}", m.altitude_rms);
        assert!(
            (m.airspeed_mean - 12.884556335440803).abs() < 0.05,
            "settled airspeed {}",
            m.airspeed_mean
        );
        assert!(m.lap_count >= 2);
        assert!(m.periodic_from.is_some());
        assert!(m.lap_rms_rel < PERIODIC_RMS_LIMIT);
    }

    #[test]
    fn euler_and_rk4_agree_on_final_position() {
        let mut s = quiet_scenario();
        s.sim.duration = 40.0;
        let rk4 = run_scenario(&s).unwrap();
        s.sim.integrator = Integrator::Euler;
        s.sim.dt = 0.0005;
        let euler = run_scenario(&s).unwrap();
        let a = rk4.telemetry.last().unwrap().position;
        let b = euler.telemetry.last().unwrap().position;
        let rel = (a - b).norm() / a.norm();
        assert!(rel < 0.02, "integrator disagreement {rel}");
    }

    #[test]
    fn halving_dt_barely_moves_the_rk4_solution() {
        let mut s = quiet_scenario();
        s.sim.duration = 40.0;
        let coarse = run_scenario(&s).unwrap();
        s.sim.dt = 0.001;
        let fine = run_scenario(&s).unwrap();
        let a = coarse.telemetry.last().unwrap().position;
        let b = fine.telemetry.last().unwrap().position;
        let rel = (a - b).norm() / b.norm();
        assert!(rel < 0.01, "dt sensitivity {rel}");
    }

    #[test]
    fn sensor_fault_aborts_with_partial_telemetry() {
        let mut s = quiet_scenario();
        s.wind.steady.x = 1e200;
        s.sim.duration = 30.0;
        let out = run_scenario(&s).unwrap();
        assert!(matches!(out.outcome, RunOutcome::SensorFault { .. }));
        assert!(out.metrics.sensor_fault.is_some());
        assert!(out.telemetry.len() < 1500);
    }

    #[test]
    fn short_tether_detaches_and_run_continues() {
        let mut s = quiet_scenario();
        s.ground.tether_max_length = 60.0;
        s.ground.initial_unreeled_length = 55.0;
        s.sim.duration = 40.0;
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.outcome, RunOutcome::Completed);
        let detach = out.metrics.tether_detached.unwrap();
        assert!(detach > 0.0);
        for row in &out.telemetry {
            if row.t > detach {
                assert_eq!(row.tether_force, 0.0);
            }
        }
    }
}
