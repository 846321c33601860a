//! Detection of stopped and parked vehicles in fixed-camera video.
//!
//! Two detectors find temporarily stationary objects: one built on a single
//! mixture-of-Gaussians background plus frame differencing, the other on the
//! difference between a fast and a slow background. Confirmed objects are then
//! watched by normalized cross-correlation against a reference patch until
//! they leave, and an event engine turns all of this into stopped, parked and
//! moved incidents.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.

pub mod background;
pub mod binary_ops;
pub mod config;
pub mod detector;
pub mod dual_bg;
pub mod error;
pub mod events;
pub mod frame_io;
pub mod geometry;
pub mod ncc_monitor;
pub mod pipeline;
pub mod scalar;
pub mod single_bg;
pub mod synthgen;
pub mod tracker;

pub use background::{GmmParams, LearningRate, MixtureModel};
pub use binary_ops::{BinaryMask, Blob, LabelMap, StructuringElement};
pub use config::{PipelineKind, Precision, RunConfig};
pub use detector::{DetectorOutput, StationaryDetector};
pub use dual_bg::{DualBackgroundDetector, DualParams};
pub use error::{Error, Result};
pub use events::{
    EventEngine, EventParams, EventType, IncidentEvent, IncidentState, Stage, Summary,
};
pub use frame_io::{FrameSource, GrayFrame, InputLayout, RoiSpec};
pub use geometry::{OverlapMetric, Rect};
pub use ncc_monitor::{
    MonitorOutcome, MonitorParams, NccMonitor, NccValue, OutcomeKind, Patch, ReferencePatch,
};
pub use pipeline::{bench, run, run_frames, BenchRow, Pipeline, RunOutput};
pub use scalar::Real;
pub use single_bg::{SingleBackgroundDetector, SingleParams};
pub use synthgen::{Scene, SceneScript};
pub use tracker::{BlobTracker, TrackedObject, TrackerParams};

/// Mixture model in single precision, the default for the pipelines.
pub type BackgroundModel = MixtureModel<f32>;
pub type BackgroundModel64 = MixtureModel<f64>;
pub type SingleDetector = SingleBackgroundDetector<f32>;
pub type DualDetector = DualBackgroundDetector<f32>;
