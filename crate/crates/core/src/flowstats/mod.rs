//! Per-window traffic attributes: flow-meter statistics, frame-length bins
//! and PUSH counters.

mod export;
mod flow;
mod markers;
mod schema;

pub use export::{export_features, format_real, FeatureTable};
pub use flow::{compute_flow_features, BulkStats, FlowConfig, FlowFeatures};
pub use markers::{compute_rdp_markers, FrameBin, FRAME_BINS};
pub use schema::{
    derived_names, ica_name, svd_name, FeatureSchema, DCT_NAME, DEFAULT_COMPONENTS, FLOW_METER_NAMES, MARKER_NAMES,
    SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::ActivitySet;
use crate::windowing::Window;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("window at {0}us has no packets")]
    EmptyWindow(u64),
    #[error("row {row}: expected {expected} values, found {found}")]
    SchemaMismatch { row: usize, expected: usize, found: usize },
    #[error("feature CSV line {line}: {reason}")]
    Parse { line: u64, reason: String },
}

/// One window's attribute values aligned to a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub window_start: u64,
    pub labels: ActivitySet,
}

/// Full base attribute vector (flow meter then markers) for a window.
/// Unlabeled windows carry an empty label set.
pub fn extract_features(window: &Window, cfg: &FlowConfig) -> Result<FeatureVector, FlowError> {
    let mut values = compute_flow_features(window, cfg)?.values;
    values.extend(compute_rdp_markers(window)?);
    Ok(FeatureVector {
        values,
        window_start: window.start_us,
        labels: window.labels.unwrap_or_default(),
    })
}
