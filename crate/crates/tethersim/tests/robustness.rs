//! Seed sweeps over the stochastic scenarios: the mission envelope must hold
//! for every draw of the impulse schedule and the tether-catch transient, not
//! just the shipped default seed.

use std::path::Path;

use tethersim::scenario::Scenario;
use tethersim::sim::run_scenario;

fn load_scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(format!("scenarios/{name}.scn"));
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    Scenario::parse(&text).expect("shipped scenario parses")
}

#[test]
fn impulse_schedules_never_push_altitude_dips_past_the_envelope() {
    let base = load_scenario("nominal-impulses");
    for seed in 0..14 {
        let mut scenario = base.clone();
        scenario.sim.seed = seed;
        let run = run_scenario(&scenario).expect("run completes");
        let m = &run.metrics;
        assert!(
            m.settle_time.is_some(),
            "seed {seed}: altitude never settled"
        );
        assert!(
            m.altitude_max_err <= 10.0,
            "seed {seed}: altitude dip {:.2} m exceeds the 10 m envelope",
            m.altitude_max_err
        );
        assert!(
            m.periodic_from.is_some(),
            "seed {seed}: laps never became periodic"
        );
    }
}

#[test]
fn tether_catch_transients_stay_within_the_spring_force_cap() {
    let scenario = load_scenario("tether-catch");
    let cap = scenario.ground.spring_stiffness * scenario.ground.spring_max_compression / 2.0;
    let run = run_scenario(&scenario).expect("run completes");
    let m = &run.metrics;
    assert!(m.taut_count >= 1, "tether never went taut");
    assert!(
        m.taut_peak_force <= cap + 1e-9,
        "peak force {:.2} N exceeds the {cap} N cap",
        m.taut_peak_force
    );
    assert!(
        m.tether_detached.is_none(),
        "catch scenario must not trip the detach margin"
    );
    for s in &run.telemetry {
        assert!(
            s.slack * s.tether_force == 0.0,
            "slack and force both nonzero at t={}",
            s.t
        );
    }
}
