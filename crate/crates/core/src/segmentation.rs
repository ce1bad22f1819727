//! Repetition segmentation driven by a smoothed accelerometer energy.
//!
//! The pointwise energy is a weighted absolute accelerometer sum
//! `h(i) = |Ax(i)·Wx| + |Ay(i)·Wy| + |Az(i)·Wz|`. The series used for cutting is
//!
//! ```text
//! E(i) = (h(i) + Σ_{n=-T..T} √h(i+n)) / (fs + 1),   T = round(fs·λ·N / 2000)
//! ```
//!
//! with samples outside the recording contributing zero. The deceleration at
//! the end of one repetition and the acceleration at the start of the next
//! merge into a single energy maximum, which is proposed as the cut.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{ImuRecording, SignalMatrix, SAMPLE_RATE_HZ};
use crate::segment::Segment;

/// Fraction of the way from the median to the maximum of E a peak must reach.
pub const PEAK_THRESHOLD_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Accelerometer axis weights `[Wx, Wy, Wz]`.
    pub weights: [f64; 3],
    /// Smoothing factor λ scaling the half-window T.
    pub lambda: f64,
    pub expected_reps: Option<usize>,
    /// Minimum distance between two cuts, in samples.
    pub min_gap: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            weights: [1.0, 1.0, 1.0],
            lambda: 1.0,
            expected_reps: None,
            min_gap: SAMPLE_RATE_HZ as usize,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("energy weights must be finite and non-negative"));
        }
        if self.weights.iter().all(|w| *w == 0.0) {
            return Err(Error::param("energy weights must not all be zero"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::param(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.min_gap < 1 {
            return Err(Error::param("min_gap must be at least 1 sample"));
        }
        if self.expected_reps == Some(0) {
            return Err(Error::param("expected_reps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub values: Vec<f64>,
    /// Half-window T used in the square-root sum.
    pub half_window: usize,
}

impl EnergySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,E\n");
        for (i, e) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Auto,
    Manual,
}

/// Interior cut positions of a recording, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutSet {
    pub recording_id: String,
    pub cuts: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

impl CutSet {
    pub fn empty(recording_id: impl Into<String>) -> Self {
        Self {
            recording_id: recording_id.into(),
            cuts: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn auto(recording_id: impl Into<String>, cuts: Vec<usize>) -> Self {
        let provenance = vec![Provenance::Auto; cuts.len()];
        Self {
            recording_id: recording_id.into(),
            cuts,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Checks ordering, range and spacing against a recording of `n` samples.
    pub fn validate(&self, n: usize, min_gap: usize) -> Result<()> {
        if self.cuts.len() != self.provenance.len() {
            return Err(Error::Data("cuts and provenance differ in length".into()));
        }
        for (k, &c) in self.cuts.iter().enumerate() {
            if c >= n {
                return Err(Error::Data(format!("cut {c} outside recording of {n} samples")));
            }
            if k > 0 {
                let prev = self.cuts[k - 1];
                if c <= prev {
                    return Err(Error::Data("cuts must be strictly increasing".into()));
                }
                if c - prev < min_gap {
                    return Err(Error::Data(format!(
                        "cuts {prev} and {c} are closer than min_gap {min_gap}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Adds a hand-placed cut, keeping the set ordered.
    pub fn insert_manual(&mut self, cut: usize) {
        let pos = self.cuts.partition_point(|&c| c < cut);
        if self.cuts.get(pos) == Some(&cut) {
            self.provenance[pos] = Provenance::Manual;
        } else {
            self.cuts.insert(pos, cut);
            self.provenance.insert(pos, Provenance::Manual);
        }
    }

    pub fn remove(&mut self, cut: usize) -> bool {
        match self.cuts.binary_search(&cut) {
            Ok(pos) => {
                self.cuts.remove(pos);
                self.provenance.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn pointwise_energy(signal: &SignalMatrix, cfg: &SegmentationConfig, i: usize) -> f64 {
    (0..3).map(|axis| (signal.get(axis, i) * cfg.weights[axis]).abs()).sum()
}

/// Half-window `T = round(fs·λ·N / 2000)`.
pub fn half_window(n: usize, lambda: f64) -> usize {
    (SAMPLE_RATE_HZ * lambda * n as f64 / 2000.0).round() as usize
}

pub fn energy(signal: &SignalMatrix, cfg: &SegmentationConfig) -> Result<EnergySeries> {
    cfg.validate()?;
    let n = signal.len();
    let t = half_window(n, cfg.lambda);
    if t >= n {
        return Err(Error::param(format!(
            "half-window {t} is not shorter than the recording ({n} samples); reduce lambda"
        )));
    }
    let h: Vec<f64> = (0..n).map(|i| pointwise_energy(signal, cfg, i)).collect();
    // prefix[k] = Σ_{j<k} √h(j)
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in &h {
        prefix.push(prefix.last().unwrap() + v.sqrt());
    }
    let norm = SAMPLE_RATE_HZ + 1.0;
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(t);
            let hi = (i + t + 1).min(n);
            (h[i] + prefix[hi] - prefix[lo]) / norm
        })
        .collect();
    Ok(EnergySeries { values, half_window: t })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        0.5 * (sorted[m - 1] + sorted[m])
    } else {
        sorted[m]
    }
}

/// Interior local maxima; a plateau counts once, at its first index.
fn local_maxima(e: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < e.len() {
        if e[i] > e[i - 1] {
            let mut j = i;
            while j + 1 < e.len() && e[j + 1] == e[i] {
                j += 1;
            }
            if j + 1 < e.len() && e[j + 1] < e[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Proposes interior cut positions at the dominant maxima of `energy`.
pub fn propose_cuts(energy: &EnergySeries, cfg: &SegmentationConfig) -> Result<CutSet> {
    cfg.validate()?;
    let e = &energy.values;
    if e.is_empty() {
        return Err(Error::param("energy series is empty"));
    }
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(e);
    let threshold = med + PEAK_THRESHOLD_FRACTION * (max - med);

    let mut candidates: Vec<usize> = if max > med {
        local_maxima(e).into_iter().filter(|&i| e[i] > threshold).collect()
    } else {
        Vec::new()
    };
    candidates.sort_by(|&a, &b| e[b].total_cmp(&e[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| c.abs_diff(k) >= cfg.min_gap) {
            kept.push(c);
        }
    }

    if let Some(reps) = cfg.expected_reps {
        let needed = reps - 1;
        if kept.len() < needed {
            return Err(Error::Segmentation {
                found: kept.len(),
                needed,
                detail: format!(
                    "threshold {threshold:.4} (median {med:.4}, max {max:.4}), min_gap {}",
                    cfg.min_gap
                ),
            });
        }
        // kept is ordered by descending energy
        kept.truncate(needed);
    }
    kept.sort_unstable();
    Ok(CutSet::auto(String::new(), kept))
}

/// Splits a recording at `cuts`; k cuts give k + 1 one-repetition segments.
pub fn split(rec: &ImuRecording, cuts: &CutSet) -> Result<Vec<Segment>> {
    cuts.validate(rec.len(), 1)?;
    let signal = rec.signal();
    let times = rec.times();
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(0);
    bounds.extend(cuts.cuts.iter().copied().filter(|&c| c > 0));
    bounds.push(rec.len());
    Ok(bounds
        .windows(2)
        .enumerate()
        .map(|(k, w)| Segment {
            id: format!("{}#{k:03}", rec.id),
            recording_id: rec.id.clone(),
            subject_id: rec.subject_id.clone(),
            exercise: rec.exercise,
            start: w[0],
            times: times[w[0]..w[1]].to_vec(),
            signal: signal.slice(w[0], w[1]),
            reps: 1,
            rom_degrees: None,
        })
        .collect())
}

/// Energy + cut proposal for a recording, tagged with its id.
pub fn segment_recording(rec: &ImuRecording, cfg: &SegmentationConfig) -> Result<(EnergySeries, CutSet)> {
    let e = energy(&rec.signal(), cfg)?;
    let mut cuts = propose_cuts(&e, cfg)?;
    cuts.recording_id = rec.id.clone();
    Ok((e, cuts))
}
