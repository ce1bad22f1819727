//! Subject-aware splits, multi-task training and evaluation for the
//! repsense Siamese model.

pub mod cv;
pub mod dataset;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod report;
pub mod split;
pub mod trainer;

pub use cv::{cross_validate, run_fold};
pub use dataset::{class_labels, Dataset, Pair};
pub use error::{Result, TrainError};
pub use report::{EvalReport, FoldReport, MetricSummary, Scores};
pub use split::{split, split_dataset, Fold, Role, SplitMode, SplitPlan};
pub use trainer::{predict, train, EpochLog, Predictions, TrainConfig, TrainOutcome};
