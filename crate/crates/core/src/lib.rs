//! Wrist IMU data model, repetition segmentation, exercise quality metrics
//! and a synthetic exercise generator.

pub mod error;
pub mod filter;
pub mod imu;
pub mod metrics;
pub mod plot;
pub mod scaler;
pub mod segment;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
pub use imu::{Exercise, ImuRecording, ImuSample, SignalMatrix, CHANNELS, SAMPLE_RATE_HZ};
pub use metrics::{MetricConfig, MetricKind, QualityLabel, RomClass, SimilarityPair};
pub use scaler::AxisScaler;
pub use segment::Segment;
pub use segmentation::{CutSet, EnergySeries, SegmentationConfig};
