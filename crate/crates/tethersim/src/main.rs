//! Command line front end: run scenarios, identify model parameters from
//! telemetry, compute attitude gains, and sweep scenario/seed batches.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tethersim::autopilot::{closed_loop_eigenvalues, gains_from_damped_pair, gains_from_eigenvalues};
use tethersim::scenario::Scenario;
use tethersim::sim::{run_scenario, RunMetrics, RunOutcome, RunOutput};
use tethersim::sysid::{identify, IdBounds, IdDataset};
use tethersim::telemetry::{read_columns, write_telemetry};

const EXIT_VALIDATION: u8 = 2;
const EXIT_SAFETY: u8 = 3;
const EXIT_NO_CONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tethersim",
    about = "Simulator and control toolkit for ground-launched tethered flight",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write telemetry and metrics.
    Simulate(SimulateArgs),
    /// Identify attitude model parameters from recorded telemetry.
    Identify(IdentifyArgs),
    /// Compute attitude loop gains for requested closed-loop eigenvalues.
    Gains(GainsArgs),
    /// Run every scenario in a directory across a range of seeds.
    Batch(BatchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file to run.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (default: $TETHERSIM_OUT or ./tethersim-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the run duration, s.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Telemetry CSV with the experiment data.
    #[arg(long)]
    data: PathBuf,
    /// Which attitude channel to identify.
    #[arg(long, default_value = "roll", value_parser = ["roll", "pitch"])]
    channel: String,
    /// Proportional feedback gain used during the experiment.
    #[arg(long, default_value_t = 0.5)]
    k_id: f64,
    /// Search bounds.
    #[arg(long, default_value_t = -20.0)]
    a_min: f64,
    #[arg(long, default_value_t = -0.01)]
    a_max: f64,
    #[arg(long, default_value_t = 0.01)]
    b_min: f64,
    #[arg(long, default_value_t = 100.0)]
    b_max: f64,
    /// Optional initial guess "a,b".
    #[arg(long)]
    init: Option<String>,
    /// Optional key=value report file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GainsArgs {
    /// Rate model pole, 1/s.
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    /// Rate model input gain, 1/s^2.
    #[arg(long, allow_hyphen_values = true)]
    b: f64,
    /// First desired eigenvalue (real part when --omega is given).
    #[arg(long, allow_hyphen_values = true)]
    eig1: f64,
    /// Second desired real eigenvalue.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "omega")]
    eig2: Option<f64>,
    /// Imaginary part of a complex-conjugate pair eig1 +/- i*omega.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
}

#[derive(Args)]
struct BatchArgs {
    /// Directory containing .scn scenario files.
    #[arg(long)]
    scenarios: PathBuf,
    /// Number of seeds to run per scenario (0..seeds).
    #[arg(long, default_value_t = 4)]
    seeds: u64,
    /// Output directory (default: $TETHERSIM_OUT or ./tethersim-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Identify(args) => cmd_identify(args),
        Command::Gains(args) => cmd_gains(args),
        Command::Batch(args) => cmd_batch(args),
    }
}

fn default_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| {
        std::env::var_os("TETHERSIM_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("tethersim-out"))
    })
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn load_scenario(path: &Path) -> Result<Scenario, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Scenario::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn option_str(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "none".into(),
    }
}

fn metrics_kv(m: &RunMetrics, outcome: RunOutcome) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push(
        "outcome",
        match outcome {
            RunOutcome::Completed => "completed".into(),
            RunOutcome::SensorFault { .. } => "sensor-fault".into(),
        },
    );
    push("rows", m.rows.to_string());
    push("launch_time", option_str(m.launch_time));
    push("time_to_safe_altitude", option_str(m.time_to_safe_altitude));
    push("settle_time", option_str(m.settle_time));
    push("altitude_rms", format!("{}", m.altitude_rms));
    push("altitude_max_err", format!("{}", m.altitude_max_err));
    push("airspeed_mean", format!("{}", m.airspeed_mean));
    push("airspeed_max_dev", format!("{}", m.airspeed_max_dev));
    push("min_altitude", format!("{}", m.min_altitude));
    push("max_station_distance", format!("{}", m.max_station_distance));
    push("lap_count", m.lap_count.to_string());
    push("lap_period_mean", format!("{}", m.lap_period_mean));
    push("lap_rms_rel", format!("{}", m.lap_rms_rel));
    push("periodic_from", option_str(m.periodic_from));
    push("roll_mean_clamped", format!("{}", m.roll_mean_clamped));
    push("clamped_fraction", format!("{}", m.clamped_fraction));
    push("taut_count", m.taut_count.to_string());
    push("taut_peak_force", format!("{}", m.taut_peak_force));
    push("taut_max_duration", format!("{}", m.taut_max_duration));
    push("taut_total_duration", format!("{}", m.taut_total_duration));
    push("tether_detached", option_str(m.tether_detached));
    push("rail_end", option_str(m.rail_end));
    push("sensor_fault", option_str(m.sensor_fault));
    out
}

fn metrics_text(scenario: &Scenario, m: &RunMetrics, outcome: RunOutcome) -> String {
    let mut s = String::new();
    s.push_str(&format!("scenario: {}\n", scenario.name));
    s.push_str(&format!(
        "outcome: {}\n",
        match outcome {
            RunOutcome::Completed => "completed".to_string(),
            RunOutcome::SensorFault { t } => format!("sensor fault at t = {t:.2} s"),
        }
    ));
    s.push_str(&format!("telemetry rows: {}\n", m.rows));
    s.push_str(&format!("launch detected: {} s\n", option_str(m.launch_time)));
    s.push_str(&format!(
        "safe altitude reached: {} s\n",
        option_str(m.time_to_safe_altitude)
    ));
    s.push_str(&format!("altitude settled: {} s\n", option_str(m.settle_time)));
    s.push_str(&format!(
        "altitude error after settle: rms {:.3} m, max {:.3} m\n",
        m.altitude_rms, m.altitude_max_err
    ));
    s.push_str(&format!(
        "airspeed after settle: mean {:.3} m/s, max deviation {:.3} m/s\n",
        m.airspeed_mean, m.airspeed_max_dev
    ));
    s.push_str(&format!(
        "laps: {} complete, mean period {:.2} s, last pair shape diff {:.1}%\n",
        m.lap_count,
        m.lap_period_mean,
        100.0 * m.lap_rms_rel
    ));
    s.push_str(&format!("periodic from: {} s\n", option_str(m.periodic_from)));
    s.push_str(&format!(
        "minimum-radius turns: mean |roll| {:.1} deg over {:.1}% of samples\n",
        m.roll_mean_clamped.to_degrees(),
        100.0 * m.clamped_fraction
    ));
    s.push_str(&format!(
        "taut tether: {} episodes, peak {:.2} N, longest {:.2} s, total {:.2} s\n",
        m.taut_count, m.taut_peak_force, m.taut_max_duration, m.taut_total_duration
    ));
    s.push_str(&format!("tether detached: {}\n", option_str(m.tether_detached)));
    s.push_str(&format!("drum limit hit: {}\n", option_str(m.rail_end)));
    s
}

fn write_run(dir: &Path, scenario: &Scenario, output: &RunOutput) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let telemetry_path = dir.join("telemetry.csv");
    let mut file = fs::File::create(&telemetry_path)
        .map_err(|e| format!("cannot create {}: {e}", telemetry_path.display()))?;
    let decimated: Vec<_> = output
        .telemetry
        .iter()
        .step_by(scenario.sim.decimation.max(1) as usize)
        .copied()
        .collect();
    write_telemetry(&decimated, &mut file).map_err(|e| e.to_string())?;
    fs::write(
        dir.join("metrics.kv"),
        metrics_kv(&output.metrics, output.outcome),
    )
    .map_err(|e| e.to_string())?;
    fs::write(
        dir.join("metrics.txt"),
        metrics_text(scenario, &output.metrics, output.outcome),
    )
    .map_err(|e| e.to_string())?;
    fs::write(dir.join("scenario.scn"), scenario.to_text()).map_err(|e| e.to_string())?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> ExitCode {
    let mut scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Some(seed) = args.seed {
        scenario.sim.seed = seed;
    }
    if let Some(duration) = args.duration {
        scenario.sim.duration = duration;
        if let Err(e) = scenario.validate() {
            return fail(EXIT_VALIDATION, e);
        }
    }
    let output = match run_scenario(&scenario) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    let dir = default_out_dir(args.out);
    if let Err(e) = write_run(&dir, &scenario, &output) {
        return fail(EXIT_VALIDATION, e);
    }
    let explicit = scenario.explicit.len();
    let total = tethersim::scenario::KEYS.len();
    println!(
        "{} (seed {}): {} keys explicit, {} defaulted",
        scenario.name,
        scenario.sim.seed,
        explicit,
        total - explicit
    );
    print!("{}", metrics_text(&scenario, &output.metrics, output.outcome));
    println!("outputs in {}", dir.display());
    match output.outcome {
        RunOutcome::Completed => ExitCode::SUCCESS,
        RunOutcome::SensorFault { t } => {
            eprintln!("run terminated by sensor fault at t = {t:.2} s");
            ExitCode::from(EXIT_SAFETY)
        }
    }
}

fn cmd_identify(args: IdentifyArgs) -> ExitCode {
    let file = match fs::File::open(&args.data) {
        Ok(f) => f,
        Err(e) => return fail(EXIT_VALIDATION, format!("cannot read {}: {e}", args.data.display())),
    };
    let (angle_col, rate_col, ref_col) = if args.channel == "roll" {
        ("roll", "roll_rate", "roll_ref")
    } else {
        ("pitch", "pitch_rate", "pitch_ref")
    };
    let columns = match read_columns(BufReader::new(file), &["t", angle_col, rate_col, ref_col]) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    let t = &columns[0];
    if t.len() < 2 {
        return fail(EXIT_VALIDATION, "need at least two telemetry rows");
    }
    let dataset = IdDataset {
        sample_period: t[1] - t[0],
        feedback_gain: args.k_id,
        reference: columns[3].clone(),
        angle: columns[1].clone(),
        rate: columns[2].clone(),
    };
    let bounds = IdBounds {
        a: (args.a_min, args.a_max),
        b: (args.b_min, args.b_max),
    };
    let init = match args.init.as_deref() {
        None => None,
        Some(text) => match text.split_once(',') {
            Some((a, b)) => match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                (Ok(a), Ok(b)) => Some((a, b)),
                _ => return fail(EXIT_VALIDATION, format!("bad --init '{text}'")),
            },
            None => return fail(EXIT_VALIDATION, format!("bad --init '{text}', expected a,b")),
        },
    };
    let result = match identify(&dataset, &bounds, init) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    println!("channel: {}", args.channel);
    println!("samples: {}", dataset.reference.len());
    println!("a = {:.6}", result.a);
    println!("b = {:.6}", result.b);
    println!("cost = {:.6e}", result.cost);
    println!("iterations = {}", result.iterations);
    println!("converged = {}", result.converged);
    if let Some(report) = &args.report {
        let text = format!(
            "channel = {}\na = {}\nb = {}\ncost = {}\niterations = {}\nconverged = {}\n",
            args.channel, result.a, result.b, result.cost, result.iterations, result.converged
        );
        if let Err(e) = fs::write(report, text) {
            return fail(EXIT_VALIDATION, format!("cannot write report: {e}"));
        }
    }
    if result.converged {
        ExitCode::SUCCESS
    } else {
        eprintln!("identification did not converge");
        ExitCode::from(EXIT_NO_CONVERGENCE)
    }
}

fn cmd_gains(args: GainsArgs) -> ExitCode {
    let gains = match (args.eig2, args.omega) {
        (Some(eig2), None) => gains_from_eigenvalues(args.a, args.b, args.eig1, eig2),
        (None, Some(omega)) => gains_from_damped_pair(args.a, args.b, args.eig1, omega),
        (None, None) => return fail(EXIT_VALIDATION, "provide --eig2 or --omega"),
        (Some(_), Some(_)) => {
            return fail(EXIT_VALIDATION, "--eig2 and --omega are mutually exclusive")
        }
    };
    let gains = match gains {
        Ok(g) => g,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    let eig = closed_loop_eigenvalues(args.a, args.b, &gains);
    println!("k_angle = {:.9}", gains.k_angle);
    println!("k_rate = {:.9}", gains.k_rate);
    println!(
        "closed-loop eigenvalues: {:.6}{:+.6}i, {:.6}{:+.6}i",
        eig[0].0, eig[0].1, eig[1].0, eig[1].1
    );
    ExitCode::SUCCESS
}

fn cmd_batch(args: BatchArgs) -> ExitCode {
    let mut paths: Vec<PathBuf> = match fs::read_dir(&args.scenarios) {
        Ok(entries) => entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "scn"))
            .collect(),
        Err(e) => {
            return fail(
                EXIT_VALIDATION,
                format!("cannot read {}: {e}", args.scenarios.display()),
            )
        }
    };
    paths.sort();
    if paths.is_empty() {
        return fail(
            EXIT_VALIDATION,
            format!("no .scn files in {}", args.scenarios.display()),
        );
    }
    let out_root = default_out_dir(args.out);
    let mut any_fault = false;
    let mut completed = 0u64;
    let mut periodic = 0u64;
    let mut total = 0u64;
    println!(
        "{:<24} {:>4}  {:>9}  {:>5}  {:>7}  {:>8}  {:>8}  outcome",
        "scenario", "seed", "period_s", "laps", "alt_rms", "peak_N", "detach_s"
    );
    for path in &paths {
        let base = match load_scenario(path) {
            Ok(s) => s,
            Err(e) => return fail(EXIT_VALIDATION, e),
        };
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| base.name.clone());
        for seed in 0..args.seeds {
            total += 1;
            let mut scenario = base.clone();
            scenario.sim.seed = seed;
            let output = match run_scenario(&scenario) {
                Ok(o) => o,
                Err(e) => return fail(EXIT_VALIDATION, e),
            };
            let dir = out_root.join(format!("{stem}-seed{seed}"));
            if let Err(e) = write_run(&dir, &scenario, &output) {
                return fail(EXIT_VALIDATION, e);
            }
            let m = &output.metrics;
            let outcome = match output.outcome {
                RunOutcome::Completed => {
                    completed += 1;
                    if m.periodic_from.is_some() {
                        periodic += 1;
                    }
                    "completed"
                }
                RunOutcome::SensorFault { .. } => {
                    any_fault = true;
                    "sensor-fault"
                }
            };
            println!(
                "{:<24} {:>4}  {:>9.3}  {:>5}  {:>7.3}  {:>8.3}  {:>8}  {}",
                stem,
                seed,
                m.lap_period_mean,
                m.lap_count,
                m.altitude_rms,
                m.taut_peak_force,
                option_str(m.tether_detached),
                outcome
            );
        }
    }
    println!(
        "{total} runs: {completed} completed, {periodic} periodic, outputs in {}",
        out_root.display()
    );
    let mut summary = String::new();
    summary.push_str(&format!("runs = {total}\n"));
    summary.push_str(&format!("completed = {completed}\n"));
    summary.push_str(&format!("periodic = {periodic}\n"));
    if fs::create_dir_all(&out_root).is_ok() {
        let _ = fs::File::create(out_root.join("batch.kv"))
            .and_then(|mut f| f.write_all(summary.as_bytes()));
    }
    if any_fault {
        ExitCode::from(EXIT_SAFETY)
    } else {
        ExitCode::SUCCESS
    }
}
