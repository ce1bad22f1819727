use serde::{Deserialize, Serialize};

use crate::imu::{Exercise, ImuSample, SignalMatrix};

/// A contiguous slice of a recording, normally one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub recording_id: String,
    pub subject_id: String,
    pub exercise: Exercise,
    /// First sample index within the source recording.
    pub start: usize,
    pub times: Vec<f64>,
    pub signal: SignalMatrix,
    pub reps: u32,
    /// Range-of-motion annotation in degrees, when known.
    pub rom_degrees: Option<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    pub fn end(&self) -> usize {
        self.start + self.len()
    }

    pub fn samples(&self) -> Vec<ImuSample> {
        (0..self.len())
            .map(|i| {
                let c = self.signal.column(i);
                ImuSample {
                    t: self.times[i],
                    accel: [c[0], c[1], c[2]],
                    gyro: [c[3], c[4], c[5]],
                }
            })
            .collect()
    }

    pub fn with_rom(mut self, degrees: f64) -> Self {
        self.rom_degrees = Some(degrees);
        self
    }
}

/// Serializable reference to a segment inside a recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub segment_id: String,
    pub recording_id: String,
    pub start: usize,
    pub end: usize,
}

impl From<&Segment> for SegmentRef {
    fn from(s: &Segment) -> Self {
        Self {
            segment_id: s.id.clone(),
            recording_id: s.recording_id.clone(),
            start: s.start,
            end: s.end(),
        }
    }
}
