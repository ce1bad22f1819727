//! Zero-phase Butterworth low-pass filtering.
//!
//! The filter is designed as a cascade of second-order sections through the
//! bilinear transform with frequency pre-warping, then run forward and
//! backward over an odd-extended copy of the input. Section states are
//! initialised to their steady-state response to the first sample, so a
//! constant signal passes through unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::SignalMatrix;

/// Shortest signal accepted by [`lowpass`].
pub const MIN_FILTER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowpassConfig {
    pub cutoff_hz: f64,
    /// Butterworth order; the filter is applied twice, doubling the
    /// effective attenuation.
    pub order: usize,
}

impl Default for LowpassConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 20.0,
            order: 2,
        }
    }
}

/// Direct-form-II-transposed biquad, normalised so that `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 3],
}

impl Section {
    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// States reproducing the steady-state response to a constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let y0 = self.dc_gain() * x0;
        let z2 = self.b[2] * x0 - self.a[2] * y0;
        let z1 = self.b[1] * x0 - self.a[1] * y0 + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let [mut z1, mut z2] = self.steady_state(first);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[1] * y + z2;
            z2 = self.b[2] * input - self.a[2] * y;
            *v = y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Section>,
}

impl Butterworth {
    pub fn design(order: usize, cutoff_hz: f64, fs: f64) -> Result<Self> {
        if order == 0 || order > 8 {
            return Err(Error::param(format!("filter order must be in 1..=8, got {order}")));
        }
        let nyquist = fs / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::param(format!(
                "cutoff {cutoff_hz} Hz must lie strictly between 0 and the Nyquist frequency {nyquist} Hz"
            )));
        }

        let k = 2.0 * fs;
        let warped = k * (std::f64::consts::PI * cutoff_hz / fs).tan();
        let w2 = warped * warped;
        let mut sections = Vec::with_capacity(order.div_ceil(2));

        // Conjugate pole pairs of the normalised analog prototype.
        for p in 0..order / 2 {
            let theta = std::f64::consts::PI * (2 * p + order + 1) as f64 / (2 * order) as f64;
            let damping = -2.0 * theta.cos() * warped;
            let a0 = k * k + damping * k + w2;
            sections.push(Section {
                b: [w2 / a0, 2.0 * w2 / a0, w2 / a0],
                a: [1.0, (2.0 * w2 - 2.0 * k * k) / a0, (k * k - damping * k + w2) / a0],
            });
        }
        if order % 2 == 1 {
            let a0 = k + warped;
            sections.push(Section {
                b: [warped / a0, warped / a0, 0.0],
                a: [1.0, (warped - k) / a0, 0.0],
            });
        }
        Ok(Self { sections })
    }

    /// Samples of odd extension added at each end before filtering.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Magnitude of the single-pass frequency response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / fs;
        self.sections
            .iter()
            .map(|s| {
                let eval = |c: &[f64; 3]| {
                    let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
                    let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
                    (re * re + im * im).sqrt()
                };
                eval(&s.b) / eval(&s.a)
            })
            .product()
    }

    fn run_cascade(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        let min_len = MIN_FILTER_LEN.max(pad + 1);
        if x.len() < min_len {
            return Err(Error::param(format!(
                "signal of {} samples is too short for filter warm-up (need at least {min_len})",
                x.len()
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.run_cascade(&mut ext);
        ext.reverse();
        self.run_cascade(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase 2nd-order Butterworth low-pass applied to every channel.
pub fn lowpass(signal: &SignalMatrix, cutoff_hz: f64, fs: f64) -> Result<SignalMatrix> {
    lowpass_with(
        signal,
        &LowpassConfig {
            cutoff_hz,
            ..LowpassConfig::default()
        },
        fs,
    )
}

pub fn lowpass_with(signal: &SignalMatrix, cfg: &LowpassConfig, fs: f64) -> Result<SignalMatrix> {
    let filter = Butterworth::design(cfg.order, cfg.cutoff_hz, fs)?;
    let mut err = None;
    let out = signal.map_rows(|_, row| match filter.filtfilt(row) {
        Ok(y) => y,
        Err(e) => {
            err.get_or_insert(e);
            row.to_vec()
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
