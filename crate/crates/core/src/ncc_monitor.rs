//! Normalized cross-correlation and the monitor that watches parked objects.
//!
//! When an object is confirmed as parked its bounding-box patch is stored as a
//! reference. Every half second of video the patch at the same position is
//! compared with the reference; a correlation below the threshold means the
//! object has left. Checks are postponed while there is motion around the
//! object (a passing vehicle would otherwise look like a departure), and the
//! reference is periodically replaced by the current patch so slow lighting
//! changes do not accumulate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binary_ops::BinaryMask;
use crate::error::{Error, Result};
use crate::frame_io::GrayFrame;
use crate::geometry::Rect;
use crate::scalar::Real;

/// A rectangular block of luminance values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Patch {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidRegion(format!(
                "patch holds {} values, expected {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Patch {
            width,
            height,
            pixels,
        })
    }

    pub fn from_frame(frame: &GrayFrame, rect: &Rect) -> Result<Self> {
        Ok(Patch {
            width: rect.w,
            height: rect.h,
            pixels: frame.patch(rect)?,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.pixels.windows(2).all(|w| w[0] == w[1])
    }
}

/// Correlation coefficient, nominally in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NccValue<T> {
    pub gamma: T,
}

/// Zero-mean normalized cross-correlation of two equally sized patches.
///
/// The five raw sums are accumulated exactly in integers, and the centered
/// moments are formed from them before any rounding, so the only inexact
/// steps are the final square root and division in `T`.
pub fn ncc<T: Real>(reference: &Patch, current: &Patch) -> Result<NccValue<T>> {
    if (reference.width, reference.height) != (current.width, current.height) {
        return Err(Error::dims(
            (reference.width, reference.height),
            (current.width, current.height),
        ));
    }
    let n = reference.pixels.len() as i128;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (&a, &b) in reference.pixels.iter().zip(&current.pixels) {
        let (a, b) = (u64::from(a), u64::from(b));
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    let (sa, sb) = (sa as i128, sb as i128);
    // n times the centered sums
    let cross = n * sab as i128 - sa * sb;
    let var_a = n * saa as i128 - sa * sa;
    let var_b = n * sbb as i128 - sb * sb;
    if var_a == 0 || var_b == 0 {
        return Err(Error::ConstantPatch);
    }
    let to_t = |v: i128| T::of(v as f64);
    Ok(NccValue {
        gamma: to_t(cross) / (to_t(var_a) * to_t(var_b)).sqrt(),
    })
}

/// Two-pass correlation over real-valued samples (no quantization or clamping).
pub fn ncc_real<T: Real>(reference: &[T], current: &[T]) -> Result<NccValue<T>> {
    if reference.len() != current.len() {
        return Err(Error::dims((reference.len(), 1), (current.len(), 1)));
    }
    if reference.is_empty() {
        return Err(Error::ConstantPatch);
    }
    let n = T::of(reference.len() as f64);
    let mean = |s: &[T]| s.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    let (ma, mb) = (mean(reference), mean(current));
    let (mut cross, mut va, mut vb) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in reference.iter().zip(current) {
        let (da, db) = (a - ma, b - mb);
        cross += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == T::zero() || vb == T::zero() {
        return Err(Error::ConstantPatch);
    }
    Ok(NccValue {
        gamma: cross / (va.sqrt() * vb.sqrt()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorParams {
    /// The object is present while `gamma >= threshold`.
    pub threshold: f64,
    /// Margin around the box searched for motion.
    pub halo: usize,
    /// Postpone when motion pixels exceed this fraction of the box area.
    pub occlusion_fraction: f64,
    pub refresh_enabled: bool,
    pub refresh_interval_s: f64,
    /// A reference is only replaced by a patch at least this similar.
    pub refresh_min_ncc: f64,
}

impl Default for MonitorParams {
    fn default() -> Self {
        MonitorParams {
            threshold: 0.9,
            halo: 4,
            occlusion_fraction: 0.1,
            refresh_enabled: true,
            refresh_interval_s: 30.0,
            refresh_min_ncc: 0.95,
        }
    }
}

impl MonitorParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(
                format!("{prefix}threshold"),
                "must lie in [-1, 1]",
            ));
        }
        if !(-1.0..=1.0).contains(&self.refresh_min_ncc) {
            return Err(Error::config(
                format!("{prefix}refresh_min_ncc"),
                "must lie in [-1, 1]",
            ));
        }
        if !(self.occlusion_fraction >= 0.0 && self.occlusion_fraction.is_finite()) {
            return Err(Error::config(
                format!("{prefix}occlusion_fraction"),
                "must be a non-negative number",
            ));
        }
        if !(self.refresh_interval_s > 0.0 && self.refresh_interval_s.is_finite()) {
            return Err(Error::config(
                format!("{prefix}refresh_interval_s"),
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// Frames between scheduled checks: about two checks per second of video.
pub fn check_cadence(fps: f64) -> u64 {
    ((fps / 2.0).round() as u64).max(1)
}

/// True when the motion inside `bbox` grown by `halo` exceeds
/// `occlusion_fraction` of the box area.
pub fn occlusion_guard(
    motion: &BinaryMask,
    bbox: &Rect,
    halo: usize,
    occlusion_fraction: f64,
) -> bool {
    let region = bbox.expand_clipped(halo, motion.width(), motion.height());
    motion.count_in(&region) as f64 > occlusion_fraction * bbox.area() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePatch {
    pub object_id: u64,
    pub bbox: Rect,
    pub patch: Patch,
    pub registered_frame: u64,
    pub last_refresh_frame: u64,
    pub last_ncc: Option<f64>,
    /// The last check was postponed; retry on the next frame.
    pub postponed: bool,
    pub consecutive_postponements: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Present,
    Moved,
    Postponed,
    Skipped,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorOutcome {
    pub object_id: u64,
    pub kind: OutcomeKind,
    /// Correlation computed at this frame, if a comparison ran.
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct NccMonitor {
    params: MonitorParams,
    references: BTreeMap<u64, ReferencePatch>,
}

impl NccMonitor {
    pub fn new(params: MonitorParams) -> Self {
        NccMonitor {
            params,
            references: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &MonitorParams {
        &self.params
    }

    pub fn is_empty(&self) -> bool {
        self.references.is_empty()
    }

    pub fn reference(&self, object_id: u64) -> Option<&ReferencePatch> {
        self.references.get(&object_id)
    }

    pub fn references(&self) -> impl Iterator<Item = &ReferencePatch> {
        self.references.values()
    }

    /// Stores the patch under `bbox` as the reference for `object_id`.
    pub fn register(
        &mut self,
        frame: &GrayFrame,
        object_id: u64,
        bbox: Rect,
    ) -> Result<&ReferencePatch> {
        let patch = Patch::from_frame(frame, &bbox)?;
        if patch.is_constant() {
            return Err(Error::ConstantPatch);
        }
        let reference = ReferencePatch {
            object_id,
            bbox,
            patch,
            registered_frame: frame.frame_index,
            last_refresh_frame: frame.frame_index,
            last_ncc: None,
            postponed: false,
            consecutive_postponements: 0,
        };
        self.references.insert(object_id, reference);
        Ok(&self.references[&object_id])
    }

    pub fn remove(&mut self, object_id: u64) -> Option<ReferencePatch> {
        self.references.remove(&object_id)
    }

    /// Runs the checks due at this frame, one outcome per reference (by id).
    /// Without a motion mask the occlusion guard is not applied.
    pub fn step(
        &mut self,
        frame: &GrayFrame,
        motion: Option<&BinaryMask>,
        fps: f64,
    ) -> Result<Vec<MonitorOutcome>> {
        let cadence = check_cadence(fps);
        let refresh_frames = (self.params.refresh_interval_s * fps).round() as u64;
        let p = &self.params;
        let mut outcomes = Vec::with_capacity(self.references.len());
        for r in self.references.values_mut() {
            let due = frame.frame_index.is_multiple_of(cadence) || r.postponed;
            if !due {
                outcomes.push(MonitorOutcome {
                    object_id: r.object_id,
                    kind: OutcomeKind::Skipped,
                    gamma: None,
                });
                continue;
            }
            if motion.is_some_and(|m| occlusion_guard(m, &r.bbox, p.halo, p.occlusion_fraction)) {
                r.postponed = true;
                r.consecutive_postponements += 1;
                outcomes.push(MonitorOutcome {
                    object_id: r.object_id,
                    kind: OutcomeKind::Postponed,
                    gamma: None,
                });
                continue;
            }
            r.postponed = false;
            r.consecutive_postponements = 0;
            let current = Patch::from_frame(frame, &r.bbox)?;
            // the reference is never flat, so a flat current patch means the
            // textured object is gone
            let gamma = match ncc::<f64>(&r.patch, &current) {
                Ok(v) => v.gamma,
                Err(Error::ConstantPatch) => 0.0,
                Err(e) => return Err(e),
            };
            r.last_ncc = Some(gamma);
            let present = gamma >= p.threshold;
            if present
                && p.refresh_enabled
                && frame.frame_index - r.last_refresh_frame >= refresh_frames
                && gamma >= p.refresh_min_ncc
            {
                r.patch = current;
                r.last_refresh_frame = frame.frame_index;
            }
            outcomes.push(MonitorOutcome {
                object_id: r.object_id,
                kind: if present {
                    OutcomeKind::Present
                } else {
                    OutcomeKind::Moved
                },
                gamma: Some(gamma),
            });
        }
        Ok(outcomes)
    }
}
