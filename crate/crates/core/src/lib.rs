//! Activity detection in encrypted Remote Desktop traffic.
//!
//! The pipeline runs capture → windowing → flow statistics → derived
//! projections → Shapley attribute selection → per-class learners → 2-of-3
//! voting ensembles. The [`sidechannel`] module reads keystroke and mouse
//! events straight off frame sizes, and [`synthgen`] writes labeled
//! synthetic traces for testing all of it.

pub mod activity;
pub mod capture;
pub mod ensemble;
pub mod flowstats;
pub mod learners;
pub mod matrix;
pub mod pipeline;
pub mod selection;
pub mod sidechannel;
pub mod synthgen;
pub mod transforms;
pub mod windowing;

pub use activity::{Activity, ActivitySet};
pub use capture::{Conversation, Direction, LocalEndpoint, PacketRecord, Transport};
pub use flowstats::{FeatureSchema, FeatureVector};
pub use matrix::FeatureMatrix;
pub use windowing::Window;
