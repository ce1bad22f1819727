use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{ImuRecording, SignalMatrix, CHANNELS};

/// Lower bound on a fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-axis standardisation `(x - mean) / std`, fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisScaler {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
    /// Identifies the split the statistics were computed on.
    pub source: String,
}

impl AxisScaler {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
            source: "identity".into(),
        }
    }

    pub fn fit(recordings: &[ImuRecording], source: impl Into<String>) -> Result<Self> {
        let signals: Vec<SignalMatrix> = recordings.iter().map(ImuRecording::signal).collect();
        let refs: Vec<&SignalMatrix> = signals.iter().collect();
        Self::fit_signals(&refs, source)
    }

    /// Population statistics over the concatenation of `signals`.
    pub fn fit_signals(signals: &[&SignalMatrix], source: impl Into<String>) -> Result<Self> {
        let total: usize = signals.iter().map(|s| s.len()).sum();
        if total < 2 {
            return Err(Error::param(format!(
                "scaler needs at least 2 samples per axis, got {total}"
            )));
        }
        let mut mean = [0.0; CHANNELS];
        let mut std = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            let sum: f64 = signals.iter().flat_map(|s| s.row(c)).sum();
            let mu = sum / total as f64;
            let var: f64 = signals
                .iter()
                .flat_map(|s| s.row(c))
                .map(|v| (v - mu) * (v - mu))
                .sum::<f64>()
                / total as f64;
            mean[c] = mu;
            std[c] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Self {
            mean,
            std,
            source: source.into(),
        })
    }

    pub fn apply(&self, signal: &SignalMatrix) -> SignalMatrix {
        signal
            .map_rows(|c, row| row.iter().map(|v| (v - self.mean[c]) / self.std[c]).collect())
            .expect("length preserved")
    }

    pub fn inverse(&self, signal: &SignalMatrix) -> SignalMatrix {
        signal
            .map_rows(|c, row| row.iter().map(|v| v * self.std[c] + self.mean[c]).collect())
            .expect("length preserved")
    }
}
