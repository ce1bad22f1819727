//! Raw wrist IMU recordings and the 6 × L signal matrix used by every
//! downstream stage.
//!
//! Channel order is fixed: `ax, ay, az, gx, gy, gz`. Accelerometer values are
//! stored in m/s², gyroscope values in rad/s.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling rate of every recording handled by the pipeline.
pub const SAMPLE_RATE_HZ: f64 = 50.0;

/// Number of signal channels (3 accelerometer + 3 gyroscope axes).
pub const CHANNELS: usize = 6;

/// Standard gravity, used to convert accelerometer data recorded in g.
pub const STANDARD_GRAVITY: f64 = 9.80665;

pub const CHANNEL_NAMES: [&str; CHANNELS] = ["ax", "ay", "az", "gx", "gy", "gz"];

const MAX_SPACING_JITTER: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

impl ImuSample {
    pub fn channels(&self) -> [f64; CHANNELS] {
        [
            self.accel[0],
            self.accel[1],
            self.accel[2],
            self.gyro[0],
            self.gyro[1],
            self.gyro[2],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.channels().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exercise {
    ShoulderAbduction,
    ExternalRotation,
    ForwardFlexion,
}

impl Exercise {
    pub const ALL: [Exercise; 3] = [
        Exercise::ShoulderAbduction,
        Exercise::ExternalRotation,
        Exercise::ForwardFlexion,
    ];

    /// Legal range-of-motion class anchors in degrees, ascending.
    pub fn rom_classes(self) -> &'static [u32] {
        match self {
            // whole-arm motion
            Exercise::ShoulderAbduction | Exercise::ForwardFlexion => &[30, 60, 90, 120, 150],
            // forearm-only motion
            Exercise::ExternalRotation => &[45, 90, 150],
        }
    }

    pub fn num_rom_classes(self) -> usize {
        self.rom_classes().len()
    }

    pub fn code(self) -> &'static str {
        match self {
            Exercise::ShoulderAbduction => "sa",
            Exercise::ExternalRotation => "er",
            Exercise::ForwardFlexion => "ff",
        }
    }
}

impl fmt::Display for Exercise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Exercise::ShoulderAbduction => "shoulder_abduction",
            Exercise::ExternalRotation => "external_rotation",
            Exercise::ForwardFlexion => "forward_flexion",
        };
        f.write_str(name)
    }
}

impl FromStr for Exercise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sa" | "shoulder_abduction" | "shoulderabduction" => Ok(Exercise::ShoulderAbduction),
            "er" | "external_rotation" | "externalrotation" => Ok(Exercise::ExternalRotation),
            "ff" | "forward_flexion" | "forwardflexion" => Ok(Exercise::ForwardFlexion),
            other => Err(Error::param(format!("unknown exercise '{other}'"))),
        }
    }
}

/// A 6 × L matrix, one row per channel in [`CHANNEL_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    len: usize,
    data: Vec<f64>,
}

impl SignalMatrix {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            data: vec![0.0; CHANNELS * len],
        }
    }

    /// Builds a matrix from channel-major data (`data[c * len + i]`).
    pub fn from_channel_major(len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != CHANNELS * len {
            return Err(Error::param(format!(
                "signal data has {} values, expected {}",
                data.len(),
                CHANNELS * len
            )));
        }
        let m = Self { len, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>; CHANNELS]) -> Result<Self> {
        let len = rows[0].len();
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::param("signal rows have unequal lengths"));
        }
        Self::from_channel_major(len, rows.concat())
    }

    pub fn from_samples(samples: &[ImuSample]) -> Self {
        let len = samples.len();
        let mut m = Self::zeros(len);
        for (i, s) in samples.iter().enumerate() {
            for (c, v) in s.channels().into_iter().enumerate() {
                m.data[c * len + i] = v;
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.len..(channel + 1) * self.len]
    }

    pub fn row_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.data[channel * self.len..(channel + 1) * self.len]
    }

    pub fn get(&self, channel: usize, i: usize) -> f64 {
        self.data[channel * self.len + i]
    }

    pub fn column(&self, i: usize) -> [f64; CHANNELS] {
        std::array::from_fn(|c| self.get(c, i))
    }

    pub fn as_channel_major(&self) -> &[f64] {
        &self.data
    }

    pub fn slice(&self, start: usize, end: usize) -> SignalMatrix {
        assert!(start <= end && end <= self.len, "slice out of range");
        let len = end - start;
        let mut data = Vec::with_capacity(CHANNELS * len);
        for c in 0..CHANNELS {
            data.extend_from_slice(&self.row(c)[start..end]);
        }
        SignalMatrix { len, data }
    }

    pub fn concat(parts: &[&SignalMatrix]) -> SignalMatrix {
        let len = parts.iter().map(|p| p.len).sum();
        let mut data = Vec::with_capacity(CHANNELS * len);
        for c in 0..CHANNELS {
            for p in parts {
                data.extend_from_slice(p.row(c));
            }
        }
        SignalMatrix { len, data }
    }

    pub fn map_rows(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<SignalMatrix> {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..CHANNELS {
            let row = f(c, self.row(c));
            if row.len() != self.len {
                return Err(Error::param("row mapping changed the signal length"));
            }
            data.extend(row);
        }
        Ok(SignalMatrix {
            len: self.len,
            data,
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(p) => Err(Error::Data(format!(
                "non-finite value in channel {} at sample {}",
                CHANNEL_NAMES[p / self.len.max(1)],
                p % self.len.max(1)
            ))),
        }
    }
}

/// One continuous recording of a subject performing one exercise.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuRecording {
    pub id: String,
    pub subject_id: String,
    pub exercise: Exercise,
    pub fs: f64,
    pub samples: Vec<ImuSample>,
}

impl ImuRecording {
    pub fn new(
        id: impl Into<String>,
        subject_id: impl Into<String>,
        exercise: Exercise,
        samples: Vec<ImuSample>,
    ) -> Result<Self> {
        let rec = Self {
            id: id.into(),
            subject_id: subject_id.into(),
            exercise,
            fs: SAMPLE_RATE_HZ,
            samples,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.fs - SAMPLE_RATE_HZ).abs() > 1e-9 {
            return Err(Error::param(format!(
                "sampling rate must be {SAMPLE_RATE_HZ} Hz, got {}",
                self.fs
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::Data("recording has no samples".into()));
        }
        let nominal = 1.0 / self.fs;
        for (i, s) in self.samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Data(format!("sample {i} has a non-finite value")));
            }
            if i > 0 {
                let dt = s.t - self.samples[i - 1].t;
                if dt < 0.0 {
                    return Err(Error::Data(format!("timestamp decreases at sample {i}")));
                }
                if (dt - nominal).abs() > MAX_SPACING_JITTER * nominal {
                    return Err(Error::Data(format!(
                        "sample spacing {dt:.4}s at sample {i} deviates more than 10% from 1/fs"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn signal(&self) -> SignalMatrix {
        SignalMatrix::from_samples(&self.samples)
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AccelUnit {
    #[default]
    #[serde(rename = "m/s2", alias = "m/s^2", alias = "mps2")]
    MetersPerSecondSquared,
    #[serde(rename = "g")]
    StandardGravity,
}

impl AccelUnit {
    fn to_mps2(self) -> f64 {
        match self {
            AccelUnit::MetersPerSecondSquared => 1.0,
            AccelUnit::StandardGravity => STANDARD_GRAVITY,
        }
    }
}

/// Metadata stored next to a recording CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub subject_id: String,
    pub exercise: Exercise,
    pub fs: f64,
    #[serde(default)]
    pub unit: AccelUnit,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads the sample rows of a recording CSV (`t,ax,ay,az,gx,gy,gz`).
/// Accelerometer values are multiplied by `unit`'s factor to give m/s².
pub fn read_samples_csv(path: &Path, unit: AccelUnit) -> Result<Vec<ImuSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let expected = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(
            1,
            format!("expected header '{}', got '{}'", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let scale = unit.to_mps2();
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != expected.len() {
            return Err(parse_err(line, format!("expected 7 fields, got {}", record.len())));
        }
        let mut v = [0.0; 7];
        for (k, field) in record.iter().enumerate() {
            v[k] = field
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column '{}': cannot parse '{field}'", expected[k])))?;
            if !v[k].is_finite() {
                return Err(parse_err(line, format!("column '{}' is not finite", expected[k])));
            }
        }
        samples.push(ImuSample {
            t: v[0],
            accel: [v[1] * scale, v[2] * scale, v[3] * scale],
            gyro: [v[4], v[5], v[6]],
        });
    }
    if samples.is_empty() {
        return Err(parse_err(2, "no sample rows".into()));
    }
    Ok(samples)
}

/// Reads a recording CSV plus its sidecar JSON (same stem, `.json`).
/// Without a sidecar the recording gets `fallback` metadata.
pub fn read_recording(csv_path: &Path, fallback: Option<(&str, Exercise)>) -> Result<ImuRecording> {
    let side = sidecar_path(csv_path);
    let meta = if side.exists() {
        read_sidecar(&side)?
    } else if let Some((subject, exercise)) = fallback {
        Sidecar {
            subject_id: subject.to_string(),
            exercise,
            fs: SAMPLE_RATE_HZ,
            unit: AccelUnit::default(),
        }
    } else {
        return Err(Error::Data(format!("missing sidecar {}", side.display())));
    };
    let samples = read_samples_csv(csv_path, meta.unit)?;
    let id = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let rec = ImuRecording {
        id,
        subject_id: meta.subject_id,
        exercise: meta.exercise,
        fs: meta.fs,
        samples,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn write_samples_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "t,ax,ay,az,gx,gy,gz").map_err(io)?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t, s.accel[0], s.accel[1], s.accel[2], s.gyro[0], s.gyro[1], s.gyro[2]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `<dir>/<id>.csv` and `<dir>/<id>.json`; returns the CSV path.
pub fn write_recording(dir: &Path, rec: &ImuRecording) -> Result<PathBuf> {
    let csv_path = dir.join(format!("{}.csv", rec.id));
    write_samples_csv(&csv_path, &rec.samples)?;
    let meta = Sidecar {
        subject_id: rec.subject_id.clone(),
        exercise: rec.exercise,
        fs: rec.fs,
        unit: AccelUnit::MetersPerSecondSquared,
    };
    let side = sidecar_path(&csv_path);
    std::fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, a: f64) -> ImuSample {
        ImuSample {
            t,
            accel: [a, 0.0, 0.0],
            gyro: [0.0; 3],
        }
    }

    #[test]
    fn recording_rejects_wrong_rate_and_jitter() {
        let samples: Vec<_> = (0..10).map(|i| sample(i as f64 / 50.0, 1.0)).collect();
        let mut rec = ImuRecording::new("r", "s", Exercise::ShoulderAbduction, samples.clone()).unwrap();
        rec.fs = 100.0;
        assert!(rec.validate().is_err());

        let mut jittered = samples;
        jittered[5].t += 0.006;
        assert!(ImuRecording::new("r", "s", Exercise::ShoulderAbduction, jittered).is_err());
    }

    #[test]
    fn recording_rejects_empty_and_nonfinite() {
        assert!(ImuRecording::new("r", "s", Exercise::ShoulderAbduction, vec![]).is_err());
        let bad = vec![sample(0.0, f64::NAN)];
        assert!(ImuRecording::new("r", "s", Exercise::ShoulderAbduction, bad).is_err());
    }

    #[test]
    fn signal_matrix_layout_and_slicing() {
        let samples: Vec<_> = (0..5).map(|i| sample(i as f64 / 50.0, i as f64)).collect();
        let m = SignalMatrix::from_samples(&samples);
        assert_eq!(m.row(0), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let a = m.slice(0, 2);
        let b = m.slice(2, 5);
        assert_eq!(SignalMatrix::concat(&[&a, &b]), m);
        assert_eq!(m.column(3)[0], 3.0);
    }

    #[test]
    fn exercise_parsing_and_classes() {
        assert_eq!("sa".parse::<Exercise>().unwrap(), Exercise::ShoulderAbduction);
        assert_eq!("external-rotation".parse::<Exercise>().unwrap(), Exercise::ExternalRotation);
        assert!("squat".parse::<Exercise>().is_err());
        assert_eq!(Exercise::ForwardFlexion.num_rom_classes(), 5);
        assert_eq!(Exercise::ExternalRotation.rom_classes(), &[45, 90, 150]);
    }

    #[test]
    fn csv_round_trip_and_g_units() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<_> = (0..20).map(|i| sample(i as f64 / 50.0, 0.1 * i as f64)).collect();
        let rec = ImuRecording::new("rec1", "subj", Exercise::ForwardFlexion, samples).unwrap();
        let path = write_recording(dir.path(), &rec).unwrap();
        let back = read_recording(&path, None).unwrap();
        assert_eq!(back, rec);

        let in_g = read_samples_csv(&path, AccelUnit::StandardGravity).unwrap();
        assert!((in_g[3].accel[0] - 0.3 * STANDARD_GRAVITY).abs() < 1e-12);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,ax,ay,az,gx,gy,gz\n0,1,2,3,4,5,6\n0.02,1,x,3,4,5,6\n").unwrap();
        match read_samples_csv(&path, AccelUnit::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "time,ax\n0,1\n").unwrap();
        assert!(matches!(read_samples_csv(&path, AccelUnit::default()), Err(Error::Parse { line: 1, .. })));
    }
}
