//! Labelled segments ready for pairing, splitting and windowing.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use repsense_core::imu::read_recording;
use repsense_core::metrics::{instability, sim_repetition, sim_rom, sim_stability_scores, stability_bin, STABILITY_BIN_EDGES};
use repsense_core::segmentation::{split, CutSet};
use repsense_core::synth::{Corpus, Manifest, MANIFEST_FILE};
use repsense_core::{AxisScaler, Exercise, MetricConfig, MetricKind, RomClass, Segment, SignalMatrix, CHANNELS};
use repsense_model::{slide_segment, ModelConfig, WindowTensor};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub exercise: Exercise,
    pub metric_cfg: MetricConfig,
    pub segments: Vec<Segment>,
    /// Instability of each segment, computed once on the raw signal.
    pub instability: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Labels `segments` (all one exercise, ids unique).
    pub fn new(segments: Vec<Segment>, metric_cfg: MetricConfig) -> Result<Self> {
        metric_cfg.validate()?;
        let exercise = segments
            .first()
            .map(|s| s.exercise)
            .ok_or_else(|| TrainError::data("dataset has no segments"))?;
        let mut index = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if s.exercise != exercise {
                return Err(TrainError::data(format!("segment {} is {}, dataset is {exercise}", s.id, s.exercise)));
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(TrainError::data(format!("duplicate segment id {}", s.id)));
            }
        }
        let instability = segments
            .iter()
            .map(|s| instability(&s.signal, &metric_cfg))
            .collect::<repsense_core::Result<Vec<_>>>()?;
        Ok(Self {
            exercise,
            metric_cfg,
            segments,
            instability,
            index,
        })
    }

    /// Splits every corpus recording at its true cuts.
    pub fn from_corpus(corpus: &Corpus, metric_cfg: MetricConfig) -> Result<Self> {
        let mut segments = Vec::new();
        for item in &corpus.items {
            let rom = item.spec.rom_degrees as f64;
            segments.extend(split(&item.recording, &item.cuts)?.into_iter().map(|s| s.with_rom(rom)));
        }
        Self::new(segments, metric_cfg)
    }

    /// Loads a corpus directory written by the generator (or laid out the
    /// same way): `manifest.json`, one CSV and one cut file per recording.
    pub fn from_dir(dir: &Path, metric_cfg: MetricConfig) -> Result<Self> {
        let manifest = Manifest::load(&dir.join(MANIFEST_FILE))?;
        let mut segments = Vec::new();
        for entry in &manifest.recordings {
            let rec = read_recording(&dir.join(&entry.csv), Some((&entry.subject_id, entry.exercise)))?;
            let cuts = CutSet::load(&dir.join(&entry.cuts))?;
            let rom = entry.rom_degrees as f64;
            segments.extend(split(&rec, &cuts)?.into_iter().map(|s| s.with_rom(rom)));
        }
        Self::new(segments, metric_cfg)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn indices_of(&self, ids: &[String]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| self.index_of(id).ok_or_else(|| TrainError::data(format!("unknown segment id {id}"))))
            .collect()
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.segments.iter().map(|s| s.subject_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Keeps the segments at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let segments = idx.iter().map(|&i| self.segments[i].clone()).collect();
        let mut out = Self::new(segments, self.metric_cfg)?;
        out.instability = idx.iter().map(|&i| self.instability[i]).collect();
        Ok(out)
    }

    /// Replaces every signal with a `len`-sample block average. Labels keep
    /// the values computed at full resolution.
    pub fn downsampled(&self, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(TrainError::param("downsampled length must be positive"));
        }
        let mut out = self.clone();
        for s in &mut out.segments {
            s.signal = block_average(&s.signal, len)?;
            s.times = block_times(&s.times, len);
        }
        Ok(out)
    }

    pub fn num_classes(&self, metric: MetricKind) -> usize {
        match metric {
            MetricKind::Rom => self.exercise.num_rom_classes(),
            MetricKind::Stability => STABILITY_BIN_EDGES.len() + 1,
            MetricKind::Repetition => self.metric_cfg.max_reps as usize,
        }
    }

    pub fn class_labels(&self, metric: MetricKind) -> Vec<String> {
        class_labels(self.exercise, metric, &self.metric_cfg)
    }

    fn rom(&self, i: usize) -> Result<f64> {
        let s = &self.segments[i];
        s.rom_degrees
            .ok_or_else(|| TrainError::data(format!("segment {} has no range-of-motion label", s.id)))
    }

    /// Target class of segment `i` for the classification head.
    pub fn class_of(&self, i: usize, metric: MetricKind) -> Result<usize> {
        Ok(match metric {
            MetricKind::Rom => RomClass::from_degrees(self.exercise, self.rom(i)?)?.index,
            MetricKind::Stability => stability_bin(self.instability[i]),
            MetricKind::Repetition => {
                let reps = self.segments[i].reps;
                if reps == 0 || reps > self.metric_cfg.max_reps {
                    return Err(TrainError::data(format!("segment {} has {reps} repetitions", self.segments[i].id)));
                }
                reps as usize - 1
            }
        })
    }

    /// Similarity ground truth between segments `i` (signal) and `j` (anchor).
    pub fn label(&self, i: usize, j: usize, metric: MetricKind) -> Result<f64> {
        let cfg = &self.metric_cfg;
        Ok(match metric {
            MetricKind::Rom => sim_rom(self.rom(i)?.min(cfg.max_rom), self.rom(j)?.min(cfg.max_rom), cfg)?,
            MetricKind::Stability => sim_stability_scores(self.instability[i], self.instability[j]),
            MetricKind::Repetition => sim_repetition(self.segments[i].reps, self.segments[j].reps, cfg)?,
        })
    }

    /// Every ordered within-subject pair among `idx`, self-pairs included.
    pub fn pairs(&self, idx: &[usize], metric: MetricKind) -> Result<Vec<Pair>> {
        let mut by_subject: Vec<(&str, Vec<usize>)> = Vec::new();
        for &i in idx {
            let subject = self.segments[i].subject_id.as_str();
            match by_subject.iter_mut().find(|(s, _)| *s == subject) {
                Some((_, members)) => members.push(i),
                None => by_subject.push((subject, vec![i])),
            }
        }
        let mut out = Vec::new();
        for (_, members) in &by_subject {
            for &i in members {
                for &j in members {
                    out.push(Pair {
                        signal: i,
                        anchor: j,
                        label: self.label(i, j, metric)?,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Fits the per-axis scaler on the segments at `idx`.
    pub fn fit_scaler(&self, idx: &[usize], source: &str) -> Result<AxisScaler> {
        let signals: Vec<&SignalMatrix> = idx.iter().map(|&i| &self.segments[i].signal).collect();
        Ok(AxisScaler::fit_signals(&signals, source)?)
    }

    /// Scaled, front-padded windows for every segment.
    pub fn windows(&self, scaler: &AxisScaler, cfg: &ModelConfig) -> Result<Vec<WindowTensor>> {
        self.segments
            .iter()
            .map(|s| slide_segment(s, scaler, cfg).map_err(TrainError::from))
            .collect()
    }
}

/// Display names of the classification head's classes.
pub fn class_labels(exercise: Exercise, metric: MetricKind, cfg: &MetricConfig) -> Vec<String> {
    match metric {
        MetricKind::Rom => exercise.rom_classes().iter().map(|d| format!("{d}°")).collect(),
        MetricKind::Stability => vec!["stable".into(), "moderate".into(), "unstable".into()],
        MetricKind::Repetition => (1..=cfg.max_reps).map(|r| format!("{r} rep")).collect(),
    }
}

/// One ordered (signal, anchor) pair with its similarity label. Indices
/// point into the owning [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub signal: usize,
    pub anchor: usize,
    pub label: f64,
}

fn bin(i: usize, n: usize, len: usize) -> (usize, usize) {
    (i * n / len, ((i + 1) * n / len).max(i * n / len + 1))
}

fn block_average(signal: &SignalMatrix, len: usize) -> Result<SignalMatrix> {
    let n = signal.len();
    if n < len {
        return Err(TrainError::data(format!("cannot downsample {n} samples to {len}")));
    }
    let rows: [Vec<f64>; CHANNELS] = std::array::from_fn(|c| {
        let row = signal.row(c);
        (0..len)
            .map(|i| {
                let (a, b) = bin(i, n, len);
                row[a..b].iter().sum::<f64>() / (b - a) as f64
            })
            .collect()
    });
    Ok(SignalMatrix::from_rows(&rows)?)
}

fn block_times(times: &[f64], len: usize) -> Vec<f64> {
    (0..len).map(|i| times[bin(i, times.len(), len).0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use repsense_core::synth::{generate_corpus, CorpusSpec};

    fn small() -> Dataset {
        let corpus = generate_corpus(&CorpusSpec {
            n_subjects: 2,
            per_cell: 1,
            tremor_levels: vec![0.0, 1.0],
            ..CorpusSpec::default()
        })
        .unwrap();
        Dataset::from_corpus(&corpus, MetricConfig::default()).unwrap()
    }

    #[test]
    fn corpus_segments_carry_labels() {
        let ds = small();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.subjects(), vec!["s00".to_string(), "s01".to_string()]);
        let classes: Vec<usize> = (0..ds.len()).map(|i| ds.class_of(i, MetricKind::Rom).unwrap()).collect();
        assert_eq!(&classes[..4], &[0, 0, 1, 1]);
        assert_eq!(ds.num_classes(MetricKind::Rom), 5);
        assert_eq!(ds.class_labels(MetricKind::Rom)[4], "150°");
    }

    #[test]
    fn pairs_stay_within_subjects() {
        let ds = small();
        let all: Vec<usize> = (0..ds.len()).collect();
        let pairs = ds.pairs(&all, MetricKind::Rom).unwrap();
        assert_eq!(pairs.len(), 2 * 10 * 10);
        for p in &pairs {
            assert_eq!(ds.segments[p.signal].subject_id, ds.segments[p.anchor].subject_id);
            assert!((0.0..=1.0).contains(&p.label));
            if p.signal == p.anchor {
                assert_eq!(p.label, 1.0);
            }
        }
        let stab = ds.pairs(&all, MetricKind::Stability).unwrap();
        let p = stab.iter().find(|p| p.signal == 0 && p.anchor == 1).unwrap();
        assert!((p.label - (1.0 - (ds.instability[0] - ds.instability[1]).abs())).abs() < 1e-15);
    }

    #[test]
    fn block_average_preserves_constant_rows_and_means() {
        let rows: [Vec<f64>; 6] = std::array::from_fn(|c| (0..10).map(|i| if c == 0 { 2.5 } else { i as f64 }).collect());
        let sig = SignalMatrix::from_rows(&rows).unwrap();
        let out = block_average(&sig, 4).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.row(0).iter().all(|&v| v == 2.5));
        let mean_in = sig.row(1).iter().sum::<f64>() / 10.0;
        let mean_out = out.row(1).iter().sum::<f64>() / 4.0;
        assert!((mean_in - mean_out).abs() < 0.5);
        assert!(block_average(&sig, 11).is_err());
    }

    #[test]
    fn missing_rom_is_a_data_error() {
        let mut ds = small();
        ds.segments[3].rom_degrees = None;
        assert!(matches!(ds.class_of(3, MetricKind::Rom), Err(TrainError::Data(_))));
        assert!(ds.label(3, 2, MetricKind::Rom).is_err());
        assert!(ds.label(3, 2, MetricKind::Stability).is_ok());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let ds = small();
        let mut segs = ds.segments.clone();
        segs[1].id = segs[0].id.clone();
        assert!(Dataset::new(segs, MetricConfig::default()).is_err());
    }
}
