//! Stationary objects from one background model.
//!
//! Per frame: update the model, threshold the frame against the background
//! image, drop pixels that moved since the previous frame, clean up with an
//! erosion and a dilation, label blobs, and follow them by box overlap. An
//! object matched in enough frames is reported as stationary.

use crate::background::{GmmParams, LearningRate, MixtureModel};
use crate::binary_ops::{
    dilate, erode, frame_difference, label_components, remove_moving_pixels, threshold_absdiff,
    BinaryMask, StructuringElement,
};
use crate::detector::{DetectorOutput, StationaryDetector};
use crate::error::Result;
use crate::frame_io::GrayFrame;
use crate::scalar::Real;
use crate::tracker::{BlobTracker, TrackerParams};

#[derive(Clone, Debug)]
pub struct SingleParams {
    pub gmm: GmmParams,
    pub rate: LearningRate,
    /// Background subtraction threshold.
    pub tau: u8,
    /// Frame difference threshold.
    pub tau_motion: u8,
    pub guard_radius: usize,
    pub morph: StructuringElement,
    pub min_area: usize,
    pub tracker: TrackerParams,
    /// Matched frames before an object is reported.
    pub stop_threshold_frames: u32,
}

impl Default for SingleParams {
    fn default() -> Self {
        SingleParams {
            gmm: GmmParams::default(),
            rate: LearningRate::new(0.001).expect("valid rate"),
            tau: 25,
            tau_motion: 15,
            guard_radius: 2,
            morph: StructuringElement::square(1).expect("valid radius"),
            min_area: 1,
            tracker: TrackerParams::default(),
            stop_threshold_frames: 50,
        }
    }
}

pub struct SingleBackgroundDetector<T: Real = f32> {
    params: SingleParams,
    model: MixtureModel<T>,
    prev: Option<GrayFrame>,
    tracker: BlobTracker,
    last_mask: Option<BinaryMask>,
}

impl<T: Real> SingleBackgroundDetector<T> {
    pub fn new(width: usize, height: usize, params: SingleParams) -> Result<Self> {
        params.tracker.validate("tracker.")?;
        Ok(SingleBackgroundDetector {
            model: MixtureModel::new(width, height, params.gmm.clone())?,
            tracker: BlobTracker::new(params.tracker.clone()),
            params,
            prev: None,
            last_mask: None,
        })
    }

    pub fn model(&self) -> &MixtureModel<T> {
        &self.model
    }

    pub fn tracker(&self) -> &BlobTracker {
        &self.tracker
    }
}

impl<T: Real> StationaryDetector for SingleBackgroundDetector<T> {
    fn step(&mut self, frame: &GrayFrame) -> Result<DetectorOutput> {
        let p = &self.params;
        self.model.absorb(frame, p.rate)?;
        let background = self.model.background_image()?;
        let foreground = threshold_absdiff(frame, &background, p.tau)?;
        let motion = match &self.prev {
            Some(prev) => frame_difference(frame, prev, p.tau_motion)?,
            None => BinaryMask::new(frame.width(), frame.height()),
        };
        let still = remove_moving_pixels(&foreground, &motion, p.guard_radius)?;
        let cleaned = dilate(&erode(&still, p.morph), p.morph);
        let blobs = label_components(&cleaned, p.min_area);
        self.tracker.update(frame.frame_index, &blobs);

        self.prev = Some(frame.clone());
        self.last_mask = Some(cleaned);
        Ok(DetectorOutput {
            candidates: self.tracker.persistent(p.stop_threshold_frames),
            motion: Some(motion),
        })
    }

    fn last_mask(&self) -> Option<&BinaryMask> {
        self.last_mask.as_ref()
    }
}
