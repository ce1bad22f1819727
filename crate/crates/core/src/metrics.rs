//! Exercise quality metrics: range-of-motion classes, the instability score
//! and the similarity ground truth derived from them.
//!
//! Instability is `tanh(|CV(lowpass(S, 20 Hz))|)` where the coefficient of
//! variation is taken per channel and averaged over the six channels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{lowpass_with, LowpassConfig};
use crate::imu::{Exercise, SignalMatrix, CHANNELS, SAMPLE_RATE_HZ};
use crate::segment::Segment;

/// Upper edges of the low / medium stability bins.
pub const STABILITY_BIN_EDGES: [f64; 2] = [0.33, 0.66];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RomClass {
    pub exercise: Exercise,
    pub degrees: u32,
    pub index: usize,
}

impl RomClass {
    /// Maps an annotated angle onto the exercise's class anchors. Angles of
    /// 150° or more collapse to 150; anything else must be an exact anchor.
    pub fn from_degrees(exercise: Exercise, degrees: f64) -> Result<Self> {
        if !degrees.is_finite() || degrees < 0.0 {
            return Err(Error::param(format!("invalid range of motion {degrees}")));
        }
        let classes = exercise.rom_classes();
        let top = *classes.last().unwrap();
        let snapped = if degrees >= top as f64 { top as f64 } else { degrees };
        classes
            .iter()
            .position(|&c| (c as f64 - snapped).abs() < 1e-9)
            .map(|index| RomClass {
                exercise,
                degrees: classes[index],
                index,
            })
            .ok_or_else(|| {
                Error::param(format!("{degrees} degrees is not a legal class for {exercise}: {classes:?}"))
            })
    }

    pub fn from_index(exercise: Exercise, index: usize) -> Result<Self> {
        exercise
            .rom_classes()
            .get(index)
            .map(|&degrees| RomClass {
                exercise,
                degrees,
                index,
            })
            .ok_or_else(|| Error::param(format!("class index {index} out of range for {exercise}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// mean / std, the inverted ratio
    MeanOverStd,
    /// std / mean
    #[default]
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Maximum range of motion R, degrees.
    pub max_rom: f64,
    /// Maximum repetition count M.
    pub max_reps: u32,
    pub lowpass: LowpassConfig,
    pub cv_mode: CvMode,
    /// Floor applied to the CV denominator, in channel units. Zero-mean
    /// channels (gyro, gravity-free accelerometer axes) otherwise drive the
    /// score into tanh saturation for any movement at all.
    pub eps_sigma: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            max_rom: 150.0,
            max_reps: 3,
            lowpass: LowpassConfig::default(),
            cv_mode: CvMode::Standard,
            eps_sigma: 20.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_rom > 0.0) {
            return Err(Error::param("max_rom must be positive"));
        }
        if self.max_reps < 1 {
            return Err(Error::param("max_reps must be at least 1"));
        }
        if !(self.lowpass.cutoff_hz > 0.0 && self.lowpass.cutoff_hz < SAMPLE_RATE_HZ / 2.0) {
            return Err(Error::param("cutoff must lie in (0, 25) Hz"));
        }
        if !(self.eps_sigma > 0.0) {
            return Err(Error::param("eps_sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityLabel {
    pub rom: RomClass,
    pub instability: f64,
    pub reps: u32,
}

impl QualityLabel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.instability) {
            return Err(Error::param(format!("instability {} outside [0, 1]", self.instability)));
        }
        if self.reps < 1 {
            return Err(Error::param("reps must be at least 1"));
        }
        Ok(())
    }
}

/// Per-segment label record written by the labelling step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub segment_id: String,
    pub rom_degrees: Option<f64>,
    pub instability: f64,
    pub reps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Rom,
    Stability,
    Repetition,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Rom, MetricKind::Stability, MetricKind::Repetition];
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::Rom => "rom",
            MetricKind::Stability => "stability",
            MetricKind::Repetition => "repetition",
        })
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rom" | "range_of_motion" => Ok(MetricKind::Rom),
            "stability" | "stb" => Ok(MetricKind::Stability),
            "repetition" | "reps" | "rep" => Ok(MetricKind::Repetition),
            other => Err(Error::param(format!("unknown metric '{other}'"))),
        }
    }
}

/// A within-subject (signal, anchor) pair with its ground-truth similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub signal_id: String,
    pub anchor_id: String,
    pub subject_id: String,
    pub metric: MetricKind,
    pub label: f64,
    /// Positions of the two segments in the list the pairs were built from.
    #[serde(skip)]
    pub signal_index: usize,
    #[serde(skip)]
    pub anchor_index: usize,
}

fn channel_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean over channels of the absolute per-channel coefficient of variation.
pub fn coefficient_of_variation(signal: &SignalMatrix, cfg: &MetricConfig) -> Result<f64> {
    if signal.len() < 2 {
        return Err(Error::param("coefficient of variation needs at least 2 samples"));
    }
    let total: f64 = (0..CHANNELS)
        .map(|c| {
            let (mean, std) = channel_stats(signal.row(c));
            let cv = match cfg.cv_mode {
                CvMode::Standard => std / mean.abs().max(cfg.eps_sigma),
                CvMode::MeanOverStd => mean / std.max(cfg.eps_sigma),
            };
            cv.abs()
        })
        .sum();
    Ok(total / CHANNELS as f64)
}

pub fn instability(signal: &SignalMatrix, cfg: &MetricConfig) -> Result<f64> {
    let filtered = lowpass_with(signal, &cfg.lowpass, SAMPLE_RATE_HZ)?;
    Ok(coefficient_of_variation(&filtered, cfg)?.tanh())
}

/// Bins an instability score into low (0), medium (1) or high (2).
pub fn stability_bin(instability: f64) -> usize {
    STABILITY_BIN_EDGES.iter().filter(|&&edge| instability >= edge).count()
}

pub fn sim_rom(a_degrees: f64, b_degrees: f64, cfg: &MetricConfig) -> Result<f64> {
    for m in [a_degrees, b_degrees] {
        if !(0.0..=cfg.max_rom).contains(&m) {
            return Err(Error::param(format!("range of motion {m} outside [0, {}]", cfg.max_rom)));
        }
    }
    Ok(1.0 - (a_degrees / cfg.max_rom - b_degrees / cfg.max_rom).abs())
}

/// Similarity from two precomputed instability scores.
pub fn sim_stability_scores(a: f64, b: f64) -> f64 {
    1.0 - (a - b).abs()
}

pub fn sim_stability(a: &SignalMatrix, b: &SignalMatrix, cfg: &MetricConfig) -> Result<f64> {
    Ok(sim_stability_scores(instability(a, cfg)?, instability(b, cfg)?))
}

pub fn sim_repetition(a_reps: u32, b_reps: u32, cfg: &MetricConfig) -> Result<f64> {
    for r in [a_reps, b_reps] {
        if !(1..=cfg.max_reps).contains(&r) {
            return Err(Error::param(format!("repetition count {r} outside [1, {}]", cfg.max_reps)));
        }
    }
    let m = cfg.max_reps as f64;
    Ok(1.0 - (a_reps as f64 / m - b_reps as f64 / m).abs())
}

/// Every ordered within-subject pair, self-pairs included, with the label
/// given by the metric's similarity function.
pub fn build_pairs(segments: &[Segment], metric: MetricKind, cfg: &MetricConfig) -> Result<Vec<SimilarityPair>> {
    cfg.validate()?;
    let scores: Vec<f64> = match metric {
        MetricKind::Stability => segments
            .iter()
            .map(|s| instability(&s.signal, cfg))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let rom = |s: &Segment| {
        s.rom_degrees
            .ok_or_else(|| Error::Data(format!("segment {} has no range-of-motion label", s.id)))
    };

    let mut order: Vec<&str> = Vec::new();
    let mut by_subject: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in segments.iter().enumerate() {
        by_subject
            .entry(s.subject_id.as_str())
            .or_insert_with(|| {
                order.push(s.subject_id.as_str());
                Vec::new()
            })
            .push(i);
    }

    let mut pairs = Vec::new();
    for subject in order {
        let members = &by_subject[subject];
        for &i in members {
            for &j in members {
                let (a, b) = (&segments[i], &segments[j]);
                let label = match metric {
                    MetricKind::Rom => sim_rom(rom(a)?.min(cfg.max_rom), rom(b)?.min(cfg.max_rom), cfg)?,
                    MetricKind::Stability => sim_stability_scores(scores[i], scores[j]),
                    MetricKind::Repetition => sim_repetition(a.reps, b.reps, cfg)?,
                };
                pairs.push(SimilarityPair {
                    signal_id: a.id.clone(),
                    anchor_id: b.id.clone(),
                    subject_id: subject.to_string(),
                    metric,
                    label,
                    signal_index: i,
                    anchor_index: j,
                });
            }
        }
    }
    Ok(pairs)
}

fn adjacent(a: &Segment, b: &Segment) -> bool {
    a.recording_id == b.recording_id && a.end() == b.start
}

/// Joins every run of `n` adjacent segments into one multi-repetition
/// segment. Runs that cannot supply `n` neighbours are skipped.
pub fn merge_repetitions(segments: &[Segment], n: usize) -> Vec<Segment> {
    if n <= 1 {
        return segments.to_vec();
    }
    let mut merged = Vec::new();
    for start in 0..segments.len() {
        if start + n > segments.len() {
            break;
        }
        let group = &segments[start..start + n];
        if !group.windows(2).all(|w| adjacent(&w[0], &w[1])) {
            continue;
        }
        let first = &group[0];
        let signals: Vec<&SignalMatrix> = group.iter().map(|s| &s.signal).collect();
        merged.push(Segment {
            id: format!("{}+{n}", first.id),
            recording_id: first.recording_id.clone(),
            subject_id: first.subject_id.clone(),
            exercise: first.exercise,
            start: first.start,
            times: group.iter().flat_map(|s| s.times.iter().copied()).collect(),
            signal: SignalMatrix::concat(&signals),
            reps: group.iter().map(|s| s.reps).sum(),
            rom_degrees: first.rom_degrees,
        });
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tight() -> MetricConfig {
        MetricConfig {
            eps_sigma: 1e-8,
            ..MetricConfig::default()
        }
    }

    fn signal_with_channel0(row: Vec<f64>) -> SignalMatrix {
        let n = row.len();
        let mut rows: [Vec<f64>; CHANNELS] = std::array::from_fn(|_| vec![0.0; n]);
        rows[0] = row;
        SignalMatrix::from_rows(&rows).unwrap()
    }

    fn constant_signal(n: usize) -> SignalMatrix {
        SignalMatrix::from_rows(&std::array::from_fn(|c| vec![1.0 + c as f64; n])).unwrap()
    }

    #[test]
    fn cv_examples() {
        let sig = signal_with_channel0(vec![1.0, 3.0]);
        // other channels are all-zero: 0 / floor = 0 in standard mode
        let standard = coefficient_of_variation(&sig, &tight()).unwrap() * CHANNELS as f64;
        assert!((standard - 0.5).abs() < 1e-12);
        let inverted_cfg = MetricConfig {
            cv_mode: CvMode::MeanOverStd,
            ..tight()
        };
        let inverted = coefficient_of_variation(&sig, &inverted_cfg).unwrap() * CHANNELS as f64;
        assert!((inverted - 2.0).abs() < 1e-12);

        assert_eq!(coefficient_of_variation(&constant_signal(10), &tight()).unwrap(), 0.0);
        assert!(coefficient_of_variation(&signal_with_channel0(vec![1.0]), &tight()).is_err());
    }

    #[test]
    fn constant_signal_is_stable() {
        assert!(instability(&constant_signal(100), &MetricConfig::default()).unwrap().abs() < 1e-9);
        assert!(instability(&constant_signal(100), &tight()).unwrap().abs() < 1e-6);
    }

    #[test]
    fn short_segment_propagates_filter_error() {
        assert!(instability(&constant_signal(8), &MetricConfig::default()).is_err());
    }

    #[test]
    fn out_of_band_tone_moves_instability_less_than_in_band_tone() {
        let n = 200;
        let base: Vec<f64> = (0..n).map(|i| 15.0 + 4.0 * (i as f64 * 0.05).sin()).collect();
        let with_tone = |f: f64| {
            let rows: [Vec<f64>; CHANNELS] = std::array::from_fn(|_| {
                base.iter()
                    .enumerate()
                    .map(|(i, v)| v + 0.1 * (2.0 * std::f64::consts::PI * f * i as f64 / 50.0).sin())
                    .collect()
            });
            SignalMatrix::from_rows(&rows).unwrap()
        };
        let cfg = MetricConfig::default();
        let clean = instability(&with_tone(0.0), &cfg).unwrap();
        let d24 = (instability(&with_tone(24.0), &cfg).unwrap() - clean).abs();
        let d10 = (instability(&with_tone(10.0), &cfg).unwrap() - clean).abs();
        assert!(d24 < d10, "24 Hz change {d24} vs 10 Hz change {d10}");
    }

    #[test]
    fn similarity_examples() {
        let cfg = MetricConfig::default();
        assert_eq!(sim_rom(90.0, 90.0, &cfg).unwrap(), 1.0);
        assert!((sim_rom(30.0, 150.0, &cfg).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(sim_rom(0.0, 150.0, &cfg).unwrap(), 0.0);
        assert!(sim_rom(151.0, 30.0, &cfg).is_err());

        assert!((sim_stability_scores(0.2, 0.7) - 0.5).abs() < 1e-12);
        assert_eq!(sim_stability_scores(0.7, 0.2), sim_stability_scores(0.2, 0.7));
        let s = constant_signal(64);
        assert_eq!(sim_stability(&s, &s, &cfg).unwrap(), 1.0);

        assert_eq!(sim_repetition(2, 2, &cfg).unwrap(), 1.0);
        assert!((sim_repetition(1, 3, &cfg).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((sim_repetition(2, 3, &cfg).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(sim_repetition(4, 1, &cfg).is_err());
        assert!(sim_repetition(0, 1, &cfg).is_err());
    }

    #[test]
    fn rom_class_mapping() {
        let c = RomClass::from_degrees(Exercise::ShoulderAbduction, 170.0).unwrap();
        assert_eq!((c.degrees, c.index), (150, 4));
        let c = RomClass::from_degrees(Exercise::ExternalRotation, 90.0).unwrap();
        assert_eq!(c.index, 1);
        assert!(RomClass::from_degrees(Exercise::ExternalRotation, 60.0).is_err());
        assert!(RomClass::from_index(Exercise::ExternalRotation, 3).is_err());
    }

    #[test]
    fn stability_bins() {
        assert_eq!(stability_bin(0.0), 0);
        assert_eq!(stability_bin(0.329), 0);
        assert_eq!(stability_bin(0.33), 1);
        assert_eq!(stability_bin(0.7), 2);
    }

    fn segment(id: &str, subject: &str, start: usize, len: usize, rom: f64) -> Segment {
        Segment {
            id: id.into(),
            recording_id: format!("rec-{subject}"),
            subject_id: subject.into(),
            exercise: Exercise::ShoulderAbduction,
            start,
            times: (start..start + len).map(|i| i as f64 / 50.0).collect(),
            signal: SignalMatrix::from_rows(&std::array::from_fn(|c| {
                (0..len).map(|i| (c * 7 + i + start) as f64 * 0.1 + 20.0).collect()
            }))
            .unwrap(),
            reps: 1,
            rom_degrees: Some(rom),
        }
    }

    fn subject_segments(subject: &str, k: usize) -> Vec<Segment> {
        (0..k)
            .map(|i| segment(&format!("{subject}-{i}"), subject, i * 40, 40, [30.0, 60.0, 90.0, 120.0, 150.0][i % 5]))
            .collect()
    }

    #[test]
    fn pair_counts_and_self_pairs() {
        let cfg = MetricConfig::default();
        let one = subject_segments("a", 4);
        assert_eq!(build_pairs(&one, MetricKind::Rom, &cfg).unwrap().len(), 16);

        let mut two = subject_segments("a", 3);
        two.extend(subject_segments("b", 3));
        for metric in MetricKind::ALL {
            let pairs = build_pairs(&two, metric, &cfg).unwrap();
            assert_eq!(pairs.len(), 18);
            for p in &pairs {
                assert_eq!(two[p.signal_index].subject_id, two[p.anchor_index].subject_id);
                assert!((0.0..=1.0).contains(&p.label));
                if p.signal_index == p.anchor_index {
                    assert_eq!(p.label, 1.0);
                }
            }
        }
    }

    #[test]
    fn rom_pairs_require_labels() {
        let mut segs = subject_segments("a", 2);
        segs[1].rom_degrees = None;
        assert!(build_pairs(&segs, MetricKind::Rom, &MetricConfig::default()).is_err());
    }

    #[test]
    fn merge_examples() {
        let segs = subject_segments("a", 10);
        let merged = merge_repetitions(&segs, 2);
        assert_eq!(merged.len(), 9);
        assert!(merged.iter().all(|m| m.reps == 2 && m.len() == 80));
        assert_eq!(merge_repetitions(&segs, 1), segs);
        assert!(merge_repetitions(&segs[..2], 3).is_empty());

        let three = merge_repetitions(&segs, 3);
        assert_eq!(three[0].signal, SignalMatrix::concat(&[&segs[0].signal, &segs[1].signal, &segs[2].signal]));
    }

    proptest! {
        #[test]
        fn similarity_functions_are_symmetric_bounded_lipschitz(
            a in 0.0f64..=150.0, b in 0.0f64..=150.0, d in -20.0f64..20.0,
        ) {
            let cfg = MetricConfig::default();
            let s = sim_rom(a, b, &cfg).unwrap();
            prop_assert_eq!(s, sim_rom(b, a, &cfg).unwrap());
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(sim_rom(a, a, &cfg).unwrap(), 1.0);
            let a2 = (a + d).clamp(0.0, 150.0);
            let s2 = sim_rom(a2, b, &cfg).unwrap();
            prop_assert!((s - s2).abs() <= (a - a2).abs() / 150.0 + 1e-12);

            let (x, y) = (a / 150.0, b / 150.0);
            let t = sim_stability_scores(x, y);
            prop_assert_eq!(t, sim_stability_scores(y, x));
            prop_assert!((0.0..=1.0).contains(&t));
        }
    }
}
