//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric failure.

use std::fmt;

use repsense_core::Error as CoreError;
use repsense_model::ModelError;
use repsense_train::TrainError;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;

/// Bad flags or configuration detected by the CLI itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Parameter(_) => USAGE,
        _ => DATA,
    }
}

fn model_code(e: &ModelError) -> u8 {
    match e {
        ModelError::Config(_) => USAGE,
        ModelError::NonFinite(_) => NUMERIC,
        _ => DATA,
    }
}

fn train_code(e: &TrainError) -> u8 {
    match e {
        TrainError::Parameter(_) => USAGE,
        TrainError::NonFinite { .. } => NUMERIC,
        TrainError::Core(c) => core_code(c),
        TrainError::Model(m) => model_code(m),
        _ => DATA,
    }
}

/// Classifies by the first error in the chain the library crates know.
pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return train_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return model_code(e);
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
    }
    DATA
}
