//! Evaluation reports: per-fold and per-metric scores, pooled confusion
//! matrices, JSON and CSV output.

use std::fmt::Write as _;

use repsense_core::plot::confusion_svg;
use repsense_core::{Exercise, MetricKind};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::metrics::{accuracy_from_confusion, adjacent_error_fraction, confusion, mae, mse, r_squared};
use crate::split::SplitMode;
use crate::trainer::Predictions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

impl Scores {
    pub fn from_predictions(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        Ok(Self {
            mse: mse(y, y_hat)?,
            mae: mae(y, y_hat)?,
            r2: r_squared(y, y_hat)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: String,
    pub held_out: Option<String>,
    pub metric: MetricKind,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_pairs: usize,
    pub scores: Scores,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seconds: f64,
}

impl FoldReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fold: &str,
        held_out: Option<String>,
        metric: MetricKind,
        sizes: (usize, usize, usize),
        predictions: &Predictions,
        num_classes: usize,
        epochs: (usize, usize),
        seconds: f64,
    ) -> Result<Self> {
        let confusion = confusion(&predictions.classes, &predictions.predicted, num_classes)?;
        Ok(Self {
            fold: fold.to_string(),
            held_out,
            metric,
            n_train: sizes.0,
            n_val: sizes.1,
            n_test: sizes.2,
            n_pairs: predictions.y.len(),
            scores: Scores::from_predictions(&predictions.y, &predictions.y_hat)?,
            accuracy: accuracy_from_confusion(&confusion).unwrap_or(0.0),
            confusion,
            best_epoch: epochs.0,
            epochs_run: epochs.1,
            seconds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: MetricKind,
    /// Means over folds.
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
    pub r2_std: f64,
    /// From the confusion matrix pooled over folds.
    pub accuracy: f64,
    pub adjacent_error_fraction: Option<f64>,
    pub class_labels: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub exercise: Exercise,
    pub split: SplitMode,
    pub metrics: Vec<MetricSummary>,
    pub folds: Vec<FoldReport>,
    pub runtime_seconds: f64,
}

fn mean(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count();
    v.sum::<f64>() / n as f64
}

impl MetricSummary {
    pub fn from_folds(metric: MetricKind, folds: &[&FoldReport], class_labels: Vec<String>) -> Result<Self> {
        if folds.is_empty() {
            return Err(TrainError::data(format!("no folds for metric {metric}")));
        }
        let k = class_labels.len();
        let mut pooled = vec![vec![0; k]; k];
        for f in folds {
            if f.confusion.len() != k {
                return Err(TrainError::data(format!("fold {} has a {}-class confusion matrix, expected {k}", f.fold, f.confusion.len())));
            }
            for (row, frow) in pooled.iter_mut().zip(&f.confusion) {
                for (c, v) in row.iter_mut().zip(frow) {
                    *c += v;
                }
            }
        }
        let r2 = mean(folds.iter().map(|f| f.scores.r2));
        let r2_var = mean(folds.iter().map(|f| (f.scores.r2 - r2).powi(2)));
        Ok(Self {
            metric,
            mse: mean(folds.iter().map(|f| f.scores.mse)),
            mae: mean(folds.iter().map(|f| f.scores.mae)),
            r2,
            r2_std: r2_var.sqrt(),
            accuracy: accuracy_from_confusion(&pooled).unwrap_or(0.0),
            adjacent_error_fraction: adjacent_error_fraction(&pooled),
            class_labels,
            confusion: pooled,
        })
    }
}

impl EvalReport {
    pub fn new(exercise: Exercise, split: SplitMode, folds: Vec<FoldReport>, labels: impl Fn(MetricKind) -> Vec<String>, runtime_seconds: f64) -> Result<Self> {
        let mut metrics = Vec::new();
        for metric in MetricKind::ALL {
            let of: Vec<&FoldReport> = folds.iter().filter(|f| f.metric == metric).collect();
            if !of.is_empty() {
                metrics.push(MetricSummary::from_folds(metric, &of, labels(metric))?);
            }
        }
        Ok(Self {
            exercise,
            split,
            metrics,
            folds,
            runtime_seconds,
        })
    }

    pub fn metric(&self, metric: MetricKind) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    /// Appends another report's metrics and folds (same exercise and split).
    pub fn merge(&mut self, other: EvalReport) -> Result<()> {
        if other.exercise != self.exercise || other.split != self.split {
            return Err(TrainError::param("cannot merge reports of different exercises or splits"));
        }
        for m in other.metrics {
            if self.metric(m.metric).is_some() {
                return Err(TrainError::param(format!("report already holds metric {}", m.metric)));
            }
            self.metrics.push(m);
        }
        self.folds.extend(other.folds);
        self.runtime_seconds += other.runtime_seconds;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per fold and one `mean` row per metric, with MSE, MAE and
    /// R-square columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,fold,held_out,n_pairs,mse,mae,r_square,accuracy\n");
        for m in &self.metrics {
            for f in self.folds.iter().filter(|f| f.metric == m.metric) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    m.metric,
                    f.fold,
                    f.held_out.as_deref().unwrap_or(""),
                    f.n_pairs,
                    f.scores.mse,
                    f.scores.mae,
                    f.scores.r2,
                    f.accuracy
                );
            }
            let pairs: usize = self.folds.iter().filter(|f| f.metric == m.metric).map(|f| f.n_pairs).sum();
            let _ = writeln!(out, "{},mean,,{pairs},{:.6},{:.6},{:.6},{:.6}", m.metric, m.mse, m.mae, m.r2, m.accuracy);
        }
        out
    }

    pub fn confusion_csv(&self, metric: MetricKind) -> Option<String> {
        let m = self.metric(metric)?;
        let mut out = format!("true\\predicted,{}\n", m.class_labels.join(","));
        for (label, row) in m.class_labels.iter().zip(&m.confusion) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{label},{}", cells.join(","));
        }
        Some(out)
    }

    pub fn confusion_svg(&self, metric: MetricKind) -> Option<String> {
        let m = self.metric(metric)?;
        Some(confusion_svg(&m.confusion, &m.class_labels, &format!("{} {} confusion", self.exercise, metric)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fold(name: &str, y_hat_shift: f64, predicted: Vec<usize>) -> FoldReport {
        let y = vec![0.2, 0.6, 1.0, 0.4];
        let p = Predictions {
            y_hat: y.iter().map(|v| v + y_hat_shift).collect(),
            y,
            classes: vec![0, 1, 2, 2],
            predicted,
        };
        FoldReport::new(name, Some(name.into()), MetricKind::Rom, (8, 1, 2), &p, 3, (3, 5), 0.1).unwrap()
    }

    #[test]
    fn summary_pools_confusions_and_averages_scores() {
        let folds = vec![fold("a", 0.0, vec![0, 1, 2, 2]), fold("b", 0.1, vec![0, 2, 1, 2])];
        let report = EvalReport::new(Exercise::ShoulderAbduction, SplitMode::Loocv, folds, |_| vec!["x".into(), "y".into(), "z".into()], 1.0).unwrap();
        let m = report.metric(MetricKind::Rom).unwrap();
        assert_eq!(m.confusion, vec![vec![2, 0, 0], vec![0, 1, 1], vec![0, 1, 3]]);
        // row sums equal per-class test counts
        assert_eq!(m.confusion.iter().map(|r| r.iter().sum::<usize>()).collect::<Vec<_>>(), vec![2, 2, 4]);
        assert!((m.accuracy - 0.75).abs() < 1e-15);
        assert_eq!(m.adjacent_error_fraction, Some(1.0));
        assert!((m.mse - 0.005).abs() < 1e-12);
        assert!(m.r2 <= 1.0);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().starts_with("rom,mean,,8,"));
        assert!(report.confusion_csv(MetricKind::Rom).unwrap().starts_with("true\\predicted,x,y,z\nx,2,0,0\n"));
        assert!(report.confusion_svg(MetricKind::Stability).is_none());
        let back: EvalReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
