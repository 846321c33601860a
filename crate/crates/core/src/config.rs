//! Run configuration: one JSON document, overridable by dotted paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::background::{GmmParams, LearningRate};
use crate::binary_ops::StructuringElement;
use crate::dual_bg::DualParams;
use crate::error::{Error, Result};
use crate::events::EventParams;
use crate::frame_io::{InputLayout, RoiSpec};
use crate::geometry::OverlapMetric;
use crate::ncc_monitor::MonitorParams;
use crate::single_bg::SingleParams;
use crate::tracker::TrackerParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    #[default]
    Single,
    Dual,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Single => "single",
            PipelineKind::Dual => "dual",
        }
    }
}

/// Floating-point type the mixture models run in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub gmm: GmmParams,
    pub precision: Precision,
    /// Learning rate of the single-background pipeline.
    pub alpha_single: f64,
    pub alpha_fast: f64,
    pub alpha_slow: f64,
    pub stride_single: u64,
    pub stride_fast: u64,
    pub stride_slow: u64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            gmm: GmmParams::default(),
            precision: Precision::F32,
            alpha_single: 0.001,
            alpha_fast: 0.02,
            alpha_slow: 0.002,
            stride_single: 1,
            stride_fast: 1,
            stride_slow: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryConfig {
    /// Frame against background image.
    pub tau: u8,
    /// Frame against previous frame.
    pub tau_motion: u8,
    /// Fast against slow background image.
    pub tau_bgdiff: u8,
    pub guard_radius: usize,
    pub morph_radius: usize,
    /// Smallest blob kept, as a fraction of the ROI area.
    pub min_area_fraction: f64,
}

impl Default for BinaryConfig {
    fn default() -> Self {
        BinaryConfig {
            tau: 25,
            tau_motion: 15,
            tau_bgdiff: 25,
            guard_radius: 2,
            morph_radius: 1,
            min_area_fraction: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub overlap_threshold: f64,
    pub overlap_metric: OverlapMetric,
    pub miss_limit: u32,
    /// Matched frames before a single-pipeline blob is a candidate.
    pub stop_threshold_frames: u32,
    /// Matched frames before a dual-pipeline blob is a candidate.
    pub confirm_frames: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let t = TrackerParams::default();
        TrackerConfig {
            overlap_threshold: t.overlap_threshold,
            overlap_metric: t.overlap_metric,
            miss_limit: t.miss_limit,
            stop_threshold_frames: 50,
            confirm_frames: 10,
        }
    }
}

impl TrackerConfig {
    pub fn params(&self) -> TrackerParams {
        TrackerParams {
            overlap_threshold: self.overlap_threshold,
            overlap_metric: self.overlap_metric,
            miss_limit: self.miss_limit,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Incident log (JSON lines). Standard output when unset.
    pub events: Option<PathBuf>,
    pub summary_csv: Option<PathBuf>,
    /// Directory for per-frame cleaned masks, for inspection.
    pub debug_masks: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<InputLayout>,
    pub fps: f64,
    /// Full frame when unset.
    pub roi: Option<RoiSpec>,
    pub pipeline: PipelineKind,
    pub background: BackgroundConfig,
    pub binary: BinaryConfig,
    pub tracker: TrackerConfig,
    pub ncc: MonitorParams,
    pub events: EventParams,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            fps: 30.0,
            roi: None,
            pipeline: PipelineKind::Single,
            background: BackgroundConfig::default(),
            binary: BinaryConfig::default(),
            tracker: TrackerConfig::default(),
            ncc: MonitorParams::default(),
            events: EventParams::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, overrides)
    }

    /// Parses `text`, applies `key.path=value` overrides, and validates.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        Self::from_value(value, overrides)
    }

    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::config("fps", "must be positive"));
        }
        let b = &self.background;
        b.gmm.validate("background.gmm.")?;
        for (key, alpha) in [
            ("background.alpha_single", b.alpha_single),
            ("background.alpha_fast", b.alpha_fast),
            ("background.alpha_slow", b.alpha_slow),
        ] {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::config(key, format!("{alpha} is outside [0, 1]")));
            }
        }
        for (key, stride) in [
            ("background.stride_single", b.stride_single),
            ("background.stride_fast", b.stride_fast),
            ("background.stride_slow", b.stride_slow),
        ] {
            if stride == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if b.alpha_slow >= b.alpha_fast {
            return Err(Error::config(
                "background.alpha_slow",
                format!("must be smaller than alpha_fast ({})", b.alpha_fast),
            ));
        }
        let bin = &self.binary;
        if bin.morph_radius == 0 {
            return Err(Error::config("binary.morph_radius", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&bin.min_area_fraction) {
            return Err(Error::config(
                "binary.min_area_fraction",
                "must lie in [0, 1)",
            ));
        }
        self.tracker.params().validate("tracker.")?;
        if self.tracker.stop_threshold_frames == 0 {
            return Err(Error::config(
                "tracker.stop_threshold_frames",
                "must be at least 1",
            ));
        }
        if self.tracker.confirm_frames == 0 {
            return Err(Error::config(
                "tracker.confirm_frames",
                "must be at least 1",
            ));
        }
        self.ncc.validate("ncc.")?;
        self.events.validate("events.")?;
        if let Some(roi) = &self.roi {
            if roi.rects.is_empty() {
                return Err(Error::config("roi", "must list at least one rectangle"));
            }
        }
        Ok(())
    }

    /// Smallest blob area kept for an ROI of `roi_area` pixels.
    pub fn min_area(&self, roi_area: usize) -> usize {
        ((self.binary.min_area_fraction * roi_area as f64).round() as usize).max(1)
    }

    fn morph(&self) -> StructuringElement {
        StructuringElement::square(self.binary.morph_radius).expect("validated radius")
    }

    pub fn single_params(&self, roi_area: usize) -> SingleParams {
        let b = &self.background;
        SingleParams {
            gmm: b.gmm.clone(),
            rate: LearningRate::with_stride(b.alpha_single, b.stride_single)
                .expect("validated rate"),
            tau: self.binary.tau,
            tau_motion: self.binary.tau_motion,
            guard_radius: self.binary.guard_radius,
            morph: self.morph(),
            min_area: self.min_area(roi_area),
            tracker: self.tracker.params(),
            stop_threshold_frames: self.tracker.stop_threshold_frames,
        }
    }

    pub fn dual_params(&self, roi_area: usize) -> DualParams {
        let b = &self.background;
        DualParams {
            gmm: b.gmm.clone(),
            fast: LearningRate::with_stride(b.alpha_fast, b.stride_fast).expect("validated rate"),
            slow: LearningRate::with_stride(b.alpha_slow, b.stride_slow).expect("validated rate"),
            tau: self.binary.tau_bgdiff,
            morph: self.morph(),
            min_area: self.min_area(roi_area),
            tracker: self.tracker.params(),
            confirm_frames: self.tracker.confirm_frames,
        }
    }
}

/// Sets `a.b.c=value` inside `doc`, creating objects along the way. The value
/// is read as JSON when it parses, and as a plain string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must have the form key.path=value"))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(Error::config(path, "malformed key path"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let mut walked = Vec::new();
    for part in path.split('.') {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let Value::Object(map) = node else {
            return Err(Error::config(walked.join("."), "is not an object"));
        };
        walked.push(part);
        node = map.entry(part).or_insert(Value::Null);
    }
    *node = value;
    Ok(())
}
