//! Frame-to-frame blob association by bounding-box overlap.

use serde::{Deserialize, Serialize};

use crate::binary_ops::Blob;
use crate::error::{Error, Result};
use crate::geometry::{rect_overlap, OverlapMetric, Rect};

/// A blob followed across frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackedObject {
    pub id: u64,
    pub bbox: Rect,
    /// Number of frames in which a blob was matched to this object.
    pub consecutive_frames: u32,
    pub first_seen_frame: u64,
    pub last_matched_frame: u64,
    /// Frames since the last match.
    pub missed_frames: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// A blob continues an object when their overlap is strictly above this.
    pub overlap_threshold: f64,
    pub overlap_metric: OverlapMetric,
    /// Objects unmatched for more than this many frames are dropped.
    pub miss_limit: u32,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            overlap_threshold: 0.8,
            overlap_metric: OverlapMetric::MinArea,
            miss_limit: 5,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap_threshold) {
            return Err(Error::config(
                format!("{prefix}overlap_threshold"),
                "must lie in [0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BlobTracker {
    params: TrackerParams,
    objects: Vec<TrackedObject>,
    next_id: u64,
}

impl BlobTracker {
    pub fn new(params: TrackerParams) -> Self {
        BlobTracker {
            params,
            objects: Vec::new(),
            next_id: 1,
        }
    }

    pub fn objects(&self) -> &[TrackedObject] {
        &self.objects
    }

    /// Associates this frame's blobs with the live objects. Blobs are taken in
    /// order; each claims the not-yet-claimed object it overlaps most, provided
    /// the overlap exceeds the threshold, and otherwise starts a new object.
    pub fn update(&mut self, frame_index: u64, blobs: &[Blob]) {
        let existing = self.objects.len();
        let mut claimed = vec![false; existing];
        for blob in blobs {
            let mut best: Option<(usize, f64)> = None;
            for (i, obj) in self.objects[..existing].iter().enumerate() {
                if claimed[i] {
                    continue;
                }
                let overlap = rect_overlap(&blob.bbox, &obj.bbox, self.params.overlap_metric);
                if overlap > self.params.overlap_threshold && best.is_none_or(|(_, o)| overlap > o)
                {
                    best = Some((i, overlap));
                }
            }
            match best {
                Some((i, _)) => {
                    claimed[i] = true;
                    let obj = &mut self.objects[i];
                    obj.bbox = blob.bbox;
                    obj.consecutive_frames += 1;
                    obj.last_matched_frame = frame_index;
                    obj.missed_frames = 0;
                }
                None => {
                    self.objects.push(TrackedObject {
                        id: self.next_id,
                        bbox: blob.bbox,
                        consecutive_frames: 1,
                        first_seen_frame: frame_index,
                        last_matched_frame: frame_index,
                        missed_frames: 0,
                    });
                    self.next_id += 1;
                }
            }
        }
        for (obj, _) in self.objects[..existing]
            .iter_mut()
            .zip(&claimed)
            .filter(|(_, &c)| !c)
        {
            obj.missed_frames += 1;
        }
        let limit = self.params.miss_limit;
        self.objects.retain(|o| o.missed_frames <= limit);
    }

    /// Live objects matched in at least `min_frames` frames, by id.
    pub fn persistent(&self, min_frames: u32) -> Vec<TrackedObject> {
        // objects are appended with increasing ids, so the list is already sorted
        self.objects
            .iter()
            .filter(|o| o.consecutive_frames >= min_frames)
            .cloned()
            .collect()
    }
}
