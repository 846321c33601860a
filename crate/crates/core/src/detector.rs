//! Common surface of the two stationary-object detectors.

use crate::binary_ops::BinaryMask;
use crate::error::Result;
use crate::frame_io::GrayFrame;
use crate::tracker::TrackedObject;

/// What a detector reports for one frame.
#[derive(Clone, Debug, Default)]
pub struct DetectorOutput {
    /// Tracked objects persistent enough to count as stationary, by id.
    pub candidates: Vec<TrackedObject>,
    /// Motion mask against the previous frame, when the detector computed one.
    pub motion: Option<BinaryMask>,
}

pub trait StationaryDetector {
    /// Processes the next ROI frame. Frames must arrive in order.
    fn step(&mut self, frame: &GrayFrame) -> Result<DetectorOutput>;

    /// Cleaned binary mask the blobs of the last step were labeled from.
    fn last_mask(&self) -> Option<&BinaryMask>;
}
