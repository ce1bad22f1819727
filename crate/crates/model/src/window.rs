use repsense_core::{AxisScaler, Segment, SignalMatrix, CHANNELS};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::tensor::Tensor;

/// `n` windows of `k` samples × 6 channels, stored window-major, then
/// position, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTensor {
    pub n: usize,
    pub k: usize,
    pub data: Vec<f64>,
    /// True for windows made entirely of front padding.
    pub pad_mask: Vec<bool>,
}

impl WindowTensor {
    pub fn window(&self, w: usize) -> &[f64] {
        &self.data[w * self.k * CHANNELS..(w + 1) * self.k * CHANNELS]
    }

    pub fn get(&self, w: usize, pos: usize, channel: usize) -> f64 {
        self.data[(w * self.k + pos) * CHANNELS + channel]
    }
}

/// Front-pads `signal` with zeros to `l_max` and cuts it into windows.
pub fn slide(signal: &SignalMatrix, cfg: &ModelConfig) -> Result<WindowTensor> {
    let len = signal.len();
    if len > cfg.l_max {
        return Err(ModelError::Length { len, l_max: cfg.l_max });
    }
    let pad = cfg.l_max - len;
    let n = cfg.windows();
    let mut data = Vec::with_capacity(n * cfg.k * CHANNELS);
    let mut pad_mask = Vec::with_capacity(n);
    for w in 0..n {
        let start = w * cfg.step;
        pad_mask.push(start + cfg.k <= pad);
        for p in start..start + cfg.k {
            for c in 0..CHANNELS {
                data.push(if p < pad { 0.0 } else { signal.get(c, p - pad) });
            }
        }
    }
    Ok(WindowTensor {
        n,
        k: cfg.k,
        data,
        pad_mask,
    })
}

pub fn slide_segment(segment: &Segment, scaler: &AxisScaler, cfg: &ModelConfig) -> Result<WindowTensor> {
    slide(&scaler.apply(&segment.signal), cfg)
}

/// Stacks windows of several segments into `(B·n·k) × 6`.
pub fn batch_windows(batch: &[&WindowTensor]) -> Tensor {
    let rows: usize = batch.iter().map(|w| w.n * w.k).sum();
    let mut data = Vec::with_capacity(rows * CHANNELS);
    for w in batch {
        data.extend_from_slice(&w.data);
    }
    Tensor::from_vec(rows, CHANNELS, data)
}
