//! Subject-aware train/validation/test partitions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repsense_core::synth::derive_seed;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Pair};
use crate::error::{Result, TrainError};

/// Standard split proportions (train, val); test takes the rest.
pub const STANDARD_FRACTIONS: (f64, f64) = (0.7, 0.1);

/// Share of each training subject's segments carved off for early
/// stopping in LOOCV folds.
pub const LOOCV_VAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Loocv,
    Standard,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Loocv => "loocv",
            SplitMode::Standard => "standard",
        })
    }
}

impl FromStr for SplitMode {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loocv" => Ok(SplitMode::Loocv),
            "standard" => Ok(SplitMode::Standard),
            other => Err(TrainError::param(format!("unknown split mode {other:?} (expected loocv or standard)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub name: String,
    /// The subject held out entirely, in LOOCV.
    pub held_out: Option<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Fold {
    pub fn assignments(&self) -> BTreeMap<&str, Role> {
        let mut out = BTreeMap::new();
        for (ids, role) in [(&self.train, Role::Train), (&self.val, Role::Val), (&self.test, Role::Test)] {
            for id in ids {
                out.insert(id.as_str(), role);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Segment ids grouped by subject, both in first-seen order.
fn group(items: &[(String, String)]) -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for (id, subject) in items {
        match out.iter_mut().find(|(s, _)| s == subject) {
            Some((_, ids)) => ids.push(id.clone()),
            None => out.push((subject.clone(), vec![id.clone()])),
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn shuffled(ids: &[String], seed: u64) -> Vec<String> {
    let mut out = ids.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Plans folds over `(segment_id, subject_id)` items.
pub fn split(items: &[(String, String)], mode: SplitMode, seed: u64) -> Result<SplitPlan> {
    let groups = group(items);
    let folds = match mode {
        SplitMode::Loocv => {
            if groups.len() < 2 {
                return Err(TrainError::param(format!(
                    "leave-one-subject-out needs at least 2 subjects, found {}",
                    groups.len()
                )));
            }
            (0..groups.len())
                .map(|f| {
                    let mut fold = Fold {
                        name: format!("loocv-{}", groups[f].0),
                        held_out: Some(groups[f].0.clone()),
                        train: Vec::new(),
                        val: Vec::new(),
                        test: groups[f].1.clone(),
                    };
                    for (s, (_, ids)) in groups.iter().enumerate().filter(|(s, _)| *s != f) {
                        let ids = shuffled(ids, derive_seed(seed, &[f as u64, s as u64]));
                        let n_val = (ids.len() as f64 * LOOCV_VAL_FRACTION).round() as usize;
                        fold.val.extend_from_slice(&ids[..n_val]);
                        fold.train.extend_from_slice(&ids[n_val..]);
                    }
                    fold
                })
                .collect()
        }
        SplitMode::Standard => {
            if groups.is_empty() {
                return Err(TrainError::param("nothing to split"));
            }
            let mut fold = Fold {
                name: "standard".into(),
                held_out: None,
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            };
            for (s, (_, ids)) in groups.iter().enumerate() {
                let ids = shuffled(ids, derive_seed(seed, &[s as u64]));
                let n = ids.len() as f64;
                let n_train = (n * STANDARD_FRACTIONS.0).round() as usize;
                let n_val = ((n * STANDARD_FRACTIONS.1).round() as usize).min(ids.len() - n_train);
                fold.train.extend_from_slice(&ids[..n_train]);
                fold.val.extend_from_slice(&ids[n_train..n_train + n_val]);
                fold.test.extend_from_slice(&ids[n_train + n_val..]);
            }
            vec![fold]
        }
    };
    Ok(SplitPlan { mode, seed, folds })
}

/// Splits every segment of `dataset`.
pub fn split_dataset(dataset: &Dataset, mode: SplitMode, seed: u64) -> Result<SplitPlan> {
    let items: Vec<(String, String)> = dataset
        .segments
        .iter()
        .map(|s| (s.id.clone(), s.subject_id.clone()))
        .collect();
    split(&items, mode, seed)
}

impl SplitPlan {
    /// Pairs that break the fold's isolation: a training pair touching the
    /// held-out subject or any segment not assigned to training.
    pub fn leaks(&self, fold: &Fold, dataset: &Dataset, train_pairs: &[Pair]) -> Vec<Pair> {
        let roles = fold.assignments();
        let is_clean = |i: usize| {
            let s = &dataset.segments[i];
            roles.get(s.id.as_str()) == Some(&Role::Train) && fold.held_out.as_deref() != Some(s.subject_id.as_str())
        };
        train_pairs
            .iter()
            .filter(|p| !(is_clean(p.signal) && is_clean(p.anchor)))
            .copied()
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
