//! Telemetry records and their CSV serialization.
//!
//! The writer emits a schema version line, a header row, and one row per
//! controller tick with every float printed to nine significant digits, so a
//! run serializes to byte-identical output whenever the simulation state
//! matches. The reader is column-name driven and tolerates extra columns.

use std::io::{self, BufRead, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::autopilot::{FlightPhase, Target};

pub const SCHEMA_VERSION: &str = "tethersim-telemetry-1";

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("missing schema line, expected '# schema {SCHEMA_VERSION}'")]
    MissingSchema,
    #[error("unsupported schema '{0}'")]
    UnsupportedSchema(String),
    #[error("column '{0}' not present")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
}

/// One controller-tick snapshot of the full closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetrySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub ground_speed: f64,
    pub course: f64,
    pub roll: f64,
    pub roll_rate: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
    pub airspeed: f64,
    pub phase: FlightPhase,
    pub target: Target,
    pub roll_ref: f64,
    pub pitch_ref: f64,
    pub airspeed_ref: f64,
    pub course_ref: f64,
    pub u_roll: f64,
    pub u_pitch: f64,
    pub u_thrust: f64,
    pub slide_position: f64,
    pub slide_speed: f64,
    pub spring_compression: f64,
    pub winch_speed: f64,
    pub winch_ref_speed: f64,
    pub unreeled_length: f64,
    pub slack: f64,
    pub tether_force: f64,
    pub impulse_force: f64,
    pub wind: Vector3<f64>,
    pub d_roll: f64,
    pub d_pitch: f64,
}

pub const COLUMNS: [&str; 34] = [
    "t",
    "p_x",
    "p_y",
    "p_z",
    "ground_speed",
    "course",
    "roll",
    "roll_rate",
    "pitch",
    "pitch_rate",
    "airspeed",
    "phase",
    "target",
    "roll_ref",
    "pitch_ref",
    "airspeed_ref",
    "course_ref",
    "u_roll",
    "u_pitch",
    "u_thrust",
    "slide_position",
    "slide_speed",
    "spring_compression",
    "winch_speed",
    "winch_ref_speed",
    "unreeled_length",
    "slack",
    "tether_force",
    "impulse_force",
    "wind_x",
    "wind_y",
    "wind_z",
    "d_roll",
    "d_pitch",
];

impl TelemetrySample {
    fn values(&self) -> [f64; 34] {
        [
            self.t,
            self.position.x,
            self.position.y,
            self.position.z,
            self.ground_speed,
            self.course,
            self.roll,
            self.roll_rate,
            self.pitch,
            self.pitch_rate,
            self.airspeed,
            self.phase.index() as f64,
            self.target.index() as f64,
            self.roll_ref,
            self.pitch_ref,
            self.airspeed_ref,
            self.course_ref,
            self.u_roll,
            self.u_pitch,
            self.u_thrust,
            self.slide_position,
            self.slide_speed,
            self.spring_compression,
            self.winch_speed,
            self.winch_ref_speed,
            self.unreeled_length,
            self.slack,
            self.tether_force,
            self.impulse_force,
            self.wind.x,
            self.wind.y,
            self.wind.z,
            self.d_roll,
            self.d_pitch,
        ]
    }
}

/// Write the schema line, header, and one row per sample. Returns the number
/// of rows written.
pub fn write_telemetry<W: Write>(
    samples: &[TelemetrySample],
    sink: &mut W,
) -> Result<usize, TelemetryError> {
    writeln!(sink, "# schema {SCHEMA_VERSION}")?;
    writeln!(sink, "{}", COLUMNS.join(","))?;
    let mut line = String::with_capacity(34 * 18);
    for sample in samples {
        line.clear();
        for (i, v) in sample.values().into_iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.8e}"));
        }
        writeln!(sink, "{line}")?;
    }
    Ok(samples.len())
}

/// Read the named columns from a telemetry CSV, in the order requested.
pub fn read_columns<R: BufRead>(
    source: R,
    names: &[&str],
) -> Result<Vec<Vec<f64>>, TelemetryError> {
    let mut lines = source.lines();
    let schema = lines.next().ok_or(TelemetryError::MissingSchema)??;
    let schema = schema
        .strip_prefix("# schema ")
        .ok_or(TelemetryError::MissingSchema)?
        .trim()
        .to_string();
    if schema != SCHEMA_VERSION {
        return Err(TelemetryError::UnsupportedSchema(schema));
    }
    let header = lines.next().ok_or_else(|| TelemetryError::MalformedRow {
        row: 2,
        message: "missing header row".into(),
    })??;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut indices = Vec::with_capacity(names.len());
    for name in names {
        let idx = columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TelemetryError::MissingColumn(name.to_string()))?;
        indices.push(idx);
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (rownum, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        for (slot, &idx) in indices.iter().enumerate() {
            let field = fields.get(idx).ok_or_else(|| TelemetryError::MalformedRow {
                row: rownum + 3,
                message: format!("row has {} fields, column {} required", fields.len(), idx),
            })?;
            let value = field
                .trim()
                .parse::<f64>()
                .map_err(|e| TelemetryError::MalformedRow {
                    row: rownum + 3,
                    message: format!("bad float '{field}': {e}"),
                })?;
            out[slot].push(value);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(t: f64) -> TelemetrySample {
        TelemetrySample {
            t,
            position: Vector3::new(1.0, -2.0, 3.0),
            ground_speed: 13.0,
            course: 0.5,
            roll: 0.1,
            roll_rate: -0.2,
            pitch: 0.05,
            pitch_rate: 0.0,
            airspeed: 12.9,
            phase: FlightPhase::FigureEight,
            target: Target::Two,
            roll_ref: 0.12,
            pitch_ref: 0.03,
            airspeed_ref: 13.0,
            course_ref: 0.6,
            u_roll: 0.02,
            u_pitch: 0.01,
            u_thrust: 1.5,
            slide_position: 4.5,
            slide_speed: 0.0,
            spring_compression: 0.0,
            winch_speed: 0.0,
            winch_ref_speed: 0.0,
            unreeled_length: 120.0,
            slack: 30.0,
            tether_force: 0.0,
            impulse_force: 0.0,
            wind: Vector3::zeros(),
            d_roll: 0.0,
            d_pitch: 0.0,
        }
    }

    #[test]
    fn writer_emits_schema_header_and_rows() {
        let mut buf = Vec::new();
        let n = write_telemetry(&[sample(0.0), sample(0.02)], &mut buf).unwrap();
        assert_eq!(n, 2);
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# schema tethersim-telemetry-1");
        assert_eq!(lines.next().unwrap().split(',').count(), 34);
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn floats_carry_nine_significant_digits() {
        let mut s = sample(0.0);
        s.ground_speed = std::f64::consts::PI;
        let mut buf = Vec::new();
        write_telemetry(&[s], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("3.14159265e0"), "unexpected formatting: {text}");
    }

    #[test]
    fn round_trip_by_column_name() {
        let mut buf = Vec::new();
        write_telemetry(&[sample(0.0), sample(0.02), sample(0.04)], &mut buf).unwrap();
        let cols = read_columns(&buf[..], &["t", "airspeed", "unreeled_length"]).unwrap();
        assert_eq!(cols[0].len(), 3);
        assert_relative_eq!(cols[0][1], 0.02, max_relative = 1e-8);
        assert_relative_eq!(cols[1][2], 12.9, max_relative = 1e-8);
        assert_relative_eq!(cols[2][0], 120.0, max_relative = 1e-8);
    }

    #[test]
    fn reader_rejects_wrong_schema_and_missing_column() {
        let text = "# schema something-else\nt\n0.0\n";
        assert!(matches!(
            read_columns(text.as_bytes(), &["t"]),
            Err(TelemetryError::UnsupportedSchema(_))
        ));
        let mut buf = Vec::new();
        write_telemetry(&[sample(0.0)], &mut buf).unwrap();
        assert!(matches!(
            read_columns(&buf[..], &["nonexistent"]),
            Err(TelemetryError::MissingColumn(_))
        ));
        assert!(matches!(
            read_columns("no schema".as_bytes(), &["t"]),
            Err(TelemetryError::MissingSchema)
        ));
    }

    #[test]
    fn identical_samples_serialize_identically() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_telemetry(&[sample(0.0), sample(1.0)], &mut a).unwrap();
        write_telemetry(&[sample(0.0), sample(1.0)], &mut b).unwrap();
        assert_eq!(a, b);
    }
}
