//! Deterministic simulator and control library for the ground-launched
//! take-off and figure-of-eight flight of a small tethered aircraft.
//!
//! The crate is organized around six pieces:
//!
//! - [`model`]: the reduced flight model (attitude rate dynamics, turn-rate
//!   and vertical-rate relations, airspeed balance, kinematics).
//! - [`ground`]: launch slide, spring-buffered tether, and winch speed law.
//! - [`autopilot`]: pole-placement attitude loops, airspeed/course/altitude
//!   guidance, phase logic, and safety checks.
//! - [`sysid`]: closed-loop grey-box identification of the attitude
//!   parameters from recorded data.
//! - [`sim`]: the closed-loop world stepping all of the above at a fixed
//!   controller rate with selectable plant integrators.
//! - [`telemetry`] and [`scenario`]: the on-disk CSV and key-value formats.

pub mod autopilot;
pub mod ground;
pub mod model;
pub mod scenario;
pub mod sim;
pub mod sysid;
pub mod telemetry;

pub use autopilot::{Autopilot, ControllerConfig, FlightPhase, Target};
pub use ground::{GroundStationParams, GroundStationState};
pub use model::{AircraftState, AttitudeModelParams, WindModel};
pub use scenario::Scenario;
pub use sim::{run_scenario, RunMetrics, RunOutcome, World};
pub use sysid::{identify, oracle_grid, IdBounds, IdDataset, IdResult};
pub use telemetry::{TelemetrySample, SCHEMA_VERSION};
