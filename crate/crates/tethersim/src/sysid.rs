//! Grey-box identification of the attitude rate parameters from closed-loop
//! flight data.
//!
//! The recorded reference, angle, and rate series are replayed through a
//! forward-Euler rollout of the candidate model under the same proportional
//! feedback that generated the experiment, and the parameters minimize the
//! two-norm mismatch of both the angle and rate trajectories. The problem is
//! nonconvex, so the solver multistarts a Nelder-Mead simplex from a coarse
//! grid; a brute-force grid evaluator serves as an independent oracle.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SysIdError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
}

/// Closed-loop experiment record sampled at a fixed period.
#[derive(Debug, Clone, PartialEq)]
pub struct IdDataset {
    /// Sampling period, s.
    pub sample_period: f64,
    /// Proportional feedback gain that produced the inputs, u = k (ref - angle).
    pub feedback_gain: f64,
    /// Angle reference sequence, rad.
    pub reference: Vec<f64>,
    /// Measured angle sequence, rad.
    pub angle: Vec<f64>,
    /// Measured rate sequence, rad/s.
    pub rate: Vec<f64>,
}

impl IdDataset {
    pub fn validate(&self) -> Result<(), SysIdError> {
        let n = self.reference.len();
        if n < 10 {
            return Err(SysIdError::InvalidDataset(format!(
                "need at least 10 samples, got {n}"
            )));
        }
        if self.angle.len() != n || self.rate.len() != n {
            return Err(SysIdError::InvalidDataset(
                "reference, angle, and rate lengths differ".into(),
            ));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return Err(SysIdError::InvalidDataset("sample_period must be positive".into()));
        }
        if !self.feedback_gain.is_finite() || self.feedback_gain == 0.0 {
            return Err(SysIdError::InvalidDataset("feedback_gain must be nonzero".into()));
        }
        let finite = self
            .reference
            .iter()
            .chain(&self.angle)
            .chain(&self.rate)
            .all(|v| v.is_finite());
        if !finite {
            return Err(SysIdError::InvalidDataset("non-finite sample".into()));
        }
        Ok(())
    }
}

/// Search box for the pole and input gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdBounds {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Default for IdBounds {
    fn default() -> Self {
        Self {
            a: (-20.0, -0.01),
            b: (0.01, 100.0),
        }
    }
}

impl IdBounds {
    pub fn validate(&self) -> Result<(), SysIdError> {
        let ok = self.a.0.is_finite()
            && self.a.1.is_finite()
            && self.b.0.is_finite()
            && self.b.1.is_finite()
            && self.a.0 < self.a.1
            && self.b.0 < self.b.1;
        if !ok {
            return Err(SysIdError::InvalidBounds(
                "bounds must be ordered finite intervals".into(),
            ));
        }
        Ok(())
    }

    fn contains(&self, a: f64, b: f64) -> bool {
        (self.a.0..=self.a.1).contains(&a) && (self.b.0..=self.b.1).contains(&b)
    }
}

/// Result of one identification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdResult {
    pub a: f64,
    pub b: f64,
    pub cost: f64,
    pub converged: bool,
    pub iterations: u64,
}

/// Forward-Euler rollout of the candidate closed loop from the recorded
/// initial condition, reproducing the experiment's proportional feedback.
pub fn simulate_closed_loop(a: f64, b: f64, dataset: &IdDataset) -> (Vec<f64>, Vec<f64>) {
    let n = dataset.reference.len();
    let mut angle = vec![0.0; n];
    let mut rate = vec![0.0; n];
    if n == 0 {
        return (angle, rate);
    }
    angle[0] = dataset.angle[0];
    rate[0] = dataset.rate[0];
    let dt = dataset.sample_period;
    for k in 0..n - 1 {
        let u = dataset.feedback_gain * (dataset.reference[k] - angle[k]);
        angle[k + 1] = angle[k] + dt * rate[k];
        rate[k + 1] = rate[k] + dt * (a * rate[k] + b * u);
    }
    (angle, rate)
}

/// Identification cost: two-norm of the angle mismatch plus two-norm of the
/// rate mismatch over samples 1..N. Non-finite rollouts map to +infinity.
pub fn id_cost(a: f64, b: f64, dataset: &IdDataset) -> f64 {
    let (angle, rate) = simulate_closed_loop(a, b, dataset);
    let mut sq_angle = 0.0;
    let mut sq_rate = 0.0;
    for k in 1..dataset.reference.len() {
        let ea = angle[k] - dataset.angle[k];
        let er = rate[k] - dataset.rate[k];
        sq_angle += ea * ea;
        sq_rate += er * er;
    }
    let cost = sq_angle.sqrt() + sq_rate.sqrt();
    if cost.is_finite() {
        cost
    } else {
        f64::INFINITY
    }
}

const GRID_FLAT_TOLERANCE: f64 = 1e-12;
const SIMPLEX_TOLERANCE: f64 = 1e-8;
const COST_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: u64 = 400;

fn penalized_cost(a: f64, b: f64, bounds: &IdBounds, dataset: &IdDataset) -> f64 {
    let ac = a.clamp(bounds.a.0, bounds.a.1);
    let bc = b.clamp(bounds.b.0, bounds.b.1);
    let excess = (a - ac).abs() + (b - bc).abs();
    id_cost(ac, bc, dataset) + 1e3 * excess
}

/// Nelder-Mead on the two-parameter cost, bounded by clamping with a linear
/// exterior penalty. Returns the best vertex, its cost, whether the stopping
/// tolerances were met, and the iteration count.
fn nelder_mead(
    start: (f64, f64),
    bounds: &IdBounds,
    dataset: &IdDataset,
) -> (f64, f64, f64, bool, u64) {
    let scale_a = 0.05 * (bounds.a.1 - bounds.a.0);
    let scale_b = 0.05 * (bounds.b.1 - bounds.b.0);
    let mut simplex = [
        (start.0, start.1),
        (start.0 + scale_a, start.1),
        (start.0, start.1 + scale_b),
    ];
    let mut costs = simplex.map(|(a, b)| penalized_cost(a, b, bounds, dataset));
    let mut iterations = 0u64;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]));
        let (best, mid, worst) = (order[0], order[1], order[2]);

        let spread = costs[worst] - costs[best];
        let size = ((simplex[best].0 - simplex[worst].0).abs()
            + (simplex[best].0 - simplex[mid].0).abs())
        .max(
            (simplex[best].1 - simplex[worst].1).abs()
                + (simplex[best].1 - simplex[mid].1).abs(),
        );
        if spread < COST_TOLERANCE || size < SIMPLEX_TOLERANCE {
            converged = true;
            break;
        }

        let centroid = (
            (simplex[best].0 + simplex[mid].0) / 2.0,
            (simplex[best].1 + simplex[mid].1) / 2.0,
        );
        let reflect = (
            centroid.0 + (centroid.0 - simplex[worst].0),
            centroid.1 + (centroid.1 - simplex[worst].1),
        );
        let f_reflect = penalized_cost(reflect.0, reflect.1, bounds, dataset);

        if f_reflect < costs[best] {
            let expand = (
                centroid.0 + 2.0 * (centroid.0 - simplex[worst].0),
                centroid.1 + 2.0 * (centroid.1 - simplex[worst].1),
            );
            let f_expand = penalized_cost(expand.0, expand.1, bounds, dataset);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                costs[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                costs[worst] = f_reflect;
            }
        } else if f_reflect < costs[mid] {
            simplex[worst] = reflect;
            costs[worst] = f_reflect;
        } else {
            let contract = (
                centroid.0 + 0.5 * (simplex[worst].0 - centroid.0),
                centroid.1 + 0.5 * (simplex[worst].1 - centroid.1),
            );
            let f_contract = penalized_cost(contract.0, contract.1, bounds, dataset);
            if f_contract < costs[worst] {
                simplex[worst] = contract;
                costs[worst] = f_contract;
            } else {
                for i in [mid, worst] {
                    simplex[i] = (
                        simplex[best].0 + 0.5 * (simplex[i].0 - simplex[best].0),
                        simplex[best].1 + 0.5 * (simplex[i].1 - simplex[best].1),
                    );
                    costs[i] = penalized_cost(simplex[i].0, simplex[i].1, bounds, dataset);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..3 {
        if costs[i] < costs[best] {
            best = i;
        }
    }
    let (a, b) = simplex[best];
    (
        a.clamp(bounds.a.0, bounds.a.1),
        b.clamp(bounds.b.0, bounds.b.1),
        costs[best],
        converged,
        iterations,
    )
}

fn coarse_grid(bounds: &IdBounds, per_axis: usize) -> Vec<(f64, f64)> {
    let mut points = Vec::with_capacity(per_axis * per_axis);
    for i in 0..per_axis {
        for j in 0..per_axis {
            let fa = (i as f64 + 0.5) / per_axis as f64;
            let fb = (j as f64 + 0.5) / per_axis as f64;
            points.push((
                bounds.a.0 + fa * (bounds.a.1 - bounds.a.0),
                bounds.b.0 + fb * (bounds.b.1 - bounds.b.0),
            ));
        }
    }
    points
}

/// Multistart identification. Starts the local search from the best coarse
/// grid cells plus the optional caller-supplied initial guess, and reports
/// non-convergence when the cost surface carries no information (flat grid)
/// or no start meets the stopping tolerances.
pub fn identify(
    dataset: &IdDataset,
    bounds: &IdBounds,
    init: Option<(f64, f64)>,
) -> Result<IdResult, SysIdError> {
    dataset.validate()?;
    bounds.validate()?;
    if let Some((a, b)) = init {
        if !a.is_finite() || !b.is_finite() || !bounds.contains(a, b) {
            return Err(SysIdError::InvalidBounds(
                "initial guess outside the search bounds".into(),
            ));
        }
    }

    let grid = coarse_grid(bounds, 5);
    let mut scored: Vec<((f64, f64), f64)> = grid
        .into_iter()
        .map(|p| (p, id_cost(p.0, p.1, dataset)))
        .collect();
    scored.sort_by(|x, y| x.1.total_cmp(&y.1));
    let flat = scored.last().unwrap().1 - scored.first().unwrap().1 < GRID_FLAT_TOLERANCE;
    if flat {
        let (a, b) = scored[0].0;
        return Ok(IdResult {
            a,
            b,
            cost: scored[0].1,
            converged: false,
            iterations: 0,
        });
    }

    let mut starts: Vec<(f64, f64)> = scored.iter().take(3).map(|s| s.0).collect();
    if let Some(guess) = init {
        starts.insert(0, guess);
    }

    let mut best: Option<IdResult> = None;
    let mut total_iterations = 0u64;
    for start in starts {
        let (a, b, cost, converged, iters) = nelder_mead(start, bounds, dataset);
        total_iterations += iters;
        let better = match &best {
            None => true,
            Some(r) => cost < r.cost,
        };
        if better {
            best = Some(IdResult {
                a,
                b,
                cost,
                converged,
                iterations: total_iterations,
            });
        }
    }
    let mut result = best.unwrap();
    result.iterations = total_iterations;
    Ok(result)
}

/// Exhaustive grid argmin over the bounds, used as an independent check of
/// the local solver. `resolution` points per axis.
pub fn oracle_grid(
    dataset: &IdDataset,
    bounds: &IdBounds,
    resolution: usize,
) -> Result<IdResult, SysIdError> {
    dataset.validate()?;
    bounds.validate()?;
    if resolution < 2 {
        return Err(SysIdError::InvalidBounds("resolution must be at least 2".into()));
    }
    let mut best = (bounds.a.0, bounds.b.0, f64::INFINITY);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..resolution {
        let a = bounds.a.0 + (bounds.a.1 - bounds.a.0) * i as f64 / (resolution - 1) as f64;
        for j in 0..resolution {
            let b = bounds.b.0 + (bounds.b.1 - bounds.b.0) * j as f64 / (resolution - 1) as f64;
            let cost = id_cost(a, b, dataset);
            if cost < best.2 {
                best = (a, b, cost);
            }
            if cost > worst {
                worst = cost;
            }
        }
    }
    Ok(IdResult {
        a: best.0,
        b: best.1,
        cost: best.2,
        converged: worst - best.2 >= GRID_FLAT_TOLERANCE,
        iterations: (resolution * resolution) as u64,
    })
}

/// Generate a square-wave reference experiment with the true closed loop,
/// used by tests and to build fixture data.
pub fn square_wave_experiment(
    a_true: f64,
    b_true: f64,
    feedback_gain: f64,
    amplitude: f64,
    period: f64,
    sample_period: f64,
    samples: usize,
) -> IdDataset {
    let mut reference = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = k as f64 * sample_period;
        let phase = (t / period).rem_euclid(1.0);
        reference.push(if phase < 0.5 { amplitude } else { -amplitude });
    }
    let mut dataset = IdDataset {
        sample_period,
        feedback_gain,
        reference,
        angle: vec![0.0; samples],
        rate: vec![0.0; samples],
    };
    let (angle, rate) = simulate_closed_loop(a_true, b_true, &dataset);
    dataset.angle = angle;
    dataset.rate = rate;
    dataset
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn experiment() -> IdDataset {
        square_wave_experiment(-2.3, 12.6, 0.5, 0.3, 2.0, 0.02, 500)
    }

    #[test]
    fn rollout_reproduces_its_own_data() {
        let d = experiment();
        let (angle, rate) = simulate_closed_loop(-2.3, 12.6, &d);
        assert_eq!(angle, d.angle);
        assert_eq!(rate, d.rate);
        assert_eq!(id_cost(-2.3, 12.6, &d), 0.0);
    }

    #[test]
    fn cost_positive_away_from_truth() {
        let d = experiment();
        assert!(id_cost(-2.0, 12.6, &d) > 1e-3);
        assert!(id_cost(-2.3, 13.0, &d) > 1e-3);
        assert!(id_cost(-5.0, 30.0, &d) > id_cost(-2.4, 12.7, &d));
    }

    #[test]
    fn cost_of_diverging_candidate_is_finite_or_infinite_not_nan() {
        let d = experiment();
        let c = id_cost(-0.01, 100.0, &d);
        assert!(c > 0.0);
        assert!(!c.is_nan());
    }

    #[test]
    fn identify_recovers_noiseless_parameters() {
        let d = experiment();
        let r = identify(&d, &IdBounds::default(), None).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.a, -2.3, max_relative = 1e-4);
        assert_relative_eq!(r.b, 12.6, max_relative = 1e-4);
        assert!(r.cost < 1e-4);
    }

    #[test]
    fn identify_accepts_explicit_initial_guess() {
        let d = experiment();
        let r = identify(&d, &IdBounds::default(), Some((-3.0, 10.0))).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.a, -2.3, max_relative = 1e-4);
        assert_relative_eq!(r.b, 12.6, max_relative = 1e-4);
        let err = identify(&d, &IdBounds::default(), Some((5.0, 10.0)));
        assert!(err.is_err());
    }

    #[test]
    fn identify_reports_flat_surface_as_not_converged() {
        let mut d = experiment();
        d.reference.iter_mut().for_each(|r| *r = 0.0);
        d.angle.iter_mut().for_each(|a| *a = 0.0);
        d.rate.iter_mut().for_each(|r| *r = 0.0);
        let r = identify(&d, &IdBounds::default(), None).unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn oracle_grid_brackets_truth_within_cell_size() {
        let d = experiment();
        let bounds = IdBounds::default();
        let r = oracle_grid(&d, &bounds, 200).unwrap();
        assert!(r.converged);
        let cell_a = (bounds.a.1 - bounds.a.0) / 199.0;
        let cell_b = (bounds.b.1 - bounds.b.0) / 199.0;
        assert!((r.a + 2.3).abs() <= cell_a, "a cell miss: {}", r.a);
        assert!((r.b - 12.6).abs() <= cell_b, "b cell miss: {}", r.b);
    }

    #[test]
    fn dataset_validation_rejects_short_and_ragged() {
        let mut d = experiment();
        d.angle.pop();
        assert!(d.validate().is_err());
        let d = square_wave_experiment(-2.3, 12.6, 0.5, 0.3, 2.0, 0.02, 5);
        assert!(d.validate().is_err());
    }

    #[test]
    fn identify_with_measurement_noise_stays_within_tolerance() {
        use rand::{Rng, SeedableRng};
        let mut d = experiment();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let sigma = 0.01;
        let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        for k in 0..d.angle.len() {
            d.angle[k] += sigma * normal(&mut rng);
            d.rate[k] += sigma * normal(&mut rng);
        }
        let r = identify(&d, &IdBounds::default(), None).unwrap();
        assert!(r.converged);
        assert!((r.a + 2.3).abs() / 2.3 < 0.02, "a drifted: {}", r.a);
        assert!((r.b - 12.6).abs() / 12.6 < 0.02, "b drifted: {}", r.b);
    }
}
