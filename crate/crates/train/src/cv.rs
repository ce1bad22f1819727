//! Fold-level training and evaluation, optionally in parallel.

use std::time::Instant;

use log::info;
use rayon::prelude::*;
use repsense_model::ModelConfig;

use crate::dataset::Dataset;
use crate::error::{Result, TrainError};
use crate::report::{EvalReport, FoldReport};
use crate::split::{Fold, SplitPlan};
use crate::trainer::{predict, train, TrainConfig, TrainOutcome};

/// Trains on a fold's train/val segments and scores its test segments.
pub fn run_fold(dataset: &Dataset, fold: &Fold, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<(FoldReport, TrainOutcome)> {
    let start = Instant::now();
    let train_idx = dataset.indices_of(&fold.train)?;
    let val_idx = dataset.indices_of(&fold.val)?;
    let test_idx = dataset.indices_of(&fold.test)?;
    if test_idx.is_empty() {
        return Err(TrainError::data(format!("fold {} has no test segments", fold.name)));
    }
    let outcome = train(dataset, &train_idx, &val_idx, model_cfg, cfg)?;
    let predictions = predict(&outcome.model, &outcome.scaler, dataset, &test_idx, cfg.metric)?;
    let report = FoldReport::new(
        &fold.name,
        fold.held_out.clone(),
        cfg.metric,
        (train_idx.len(), val_idx.len(), test_idx.len()),
        &predictions,
        dataset.num_classes(cfg.metric),
        (outcome.best_epoch, outcome.history.len()),
        start.elapsed().as_secs_f64(),
    )?;
    info!(
        "{} [{}]: r2 {:.3} mse {:.4} acc {:.3} ({:.1}s)",
        fold.name, cfg.metric, report.scores.r2, report.scores.mse, report.accuracy, report.seconds
    );
    Ok((report, outcome))
}

/// Runs every fold of `plan` on a pool of `jobs` threads. Folds are
/// independent, so the result does not depend on `jobs`.
pub fn cross_validate(dataset: &Dataset, plan: &SplitPlan, model_cfg: &ModelConfig, cfg: &TrainConfig, jobs: usize) -> Result<EvalReport> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| TrainError::param(format!("cannot build a {jobs}-thread pool: {e}")))?;
    let folds: Vec<FoldReport> = pool.install(|| {
        plan.folds
            .par_iter()
            .map(|fold| run_fold(dataset, fold, model_cfg, cfg).map(|(report, _)| report))
            .collect::<Result<_>>()
    })?;
    EvalReport::new(dataset.exercise, plan.mode, folds, |m| dataset.class_labels(m), start.elapsed().as_secs_f64())
}
