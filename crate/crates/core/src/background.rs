//! Per-pixel adaptive Gaussian mixture background model.
//!
//! Each pixel keeps up to `K` components `(weight, mean, variance)`, sorted by
//! weight. An observation matches a component when it lies within
//! `match_sigmas` standard deviations of its mean; the closest match (in
//! normalized distance) is pulled toward the observation by the learning rate
//! and every weight decays by `1 - alpha`. An observation that matches nothing
//! takes over the weakest slot with `weight = alpha` and the initial variance.
//! Weights are renormalized after every update.
//!
//! The background set is the shortest weight-ordered prefix whose cumulative
//! weight exceeds `background_ratio`; a pixel is foreground when none of those
//! components matches it.

use serde::{Deserialize, Serialize};

use crate::binary_ops::BinaryMask;
use crate::error::{Error, Result};
use crate::frame_io::GrayFrame;
use crate::scalar::Real;

/// Model-wide mixture parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmParams {
    /// Maximum number of components per pixel.
    pub components: usize,
    pub match_sigmas: f64,
    /// Cumulative weight the background set must exceed.
    pub background_ratio: f64,
    pub initial_variance: f64,
    pub variance_floor: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams {
            components: 3,
            match_sigmas: 2.5,
            background_ratio: 0.7,
            initial_variance: 225.0,
            variance_floor: 4.0,
        }
    }
}

impl GmmParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(1..=u8::MAX as usize).contains(&self.components) {
            return Err(Error::config(
                format!("{prefix}components"),
                "must be between 1 and 255",
            ));
        }
        if !(self.match_sigmas.is_finite() && self.match_sigmas > 0.0) {
            return Err(Error::config(
                format!("{prefix}match_sigmas"),
                "must be positive",
            ));
        }
        if !(self.background_ratio > 0.0 && self.background_ratio < 1.0) {
            return Err(Error::config(
                format!("{prefix}background_ratio"),
                "must lie strictly between 0 and 1",
            ));
        }
        if !(self.variance_floor.is_finite() && self.variance_floor > 0.0) {
            return Err(Error::config(
                format!("{prefix}variance_floor"),
                "must be positive",
            ));
        }
        if !(self.initial_variance.is_finite() && self.initial_variance >= self.variance_floor) {
            return Err(Error::config(
                format!("{prefix}initial_variance"),
                "must be finite and at least variance_floor",
            ));
        }
        Ok(())
    }
}

/// How strongly, and how often, observations update the model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRate {
    alpha: f64,
    stride: u64,
}

impl LearningRate {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_stride(alpha, 1)
    }

    /// Rate applied only on frames whose index is a multiple of `stride`.
    pub fn with_stride(alpha: f64, stride: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config("alpha", format!("{alpha} is outside [0, 1]")));
        }
        if stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        Ok(LearningRate { alpha, stride })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }

    fn applies_to(&self, frame_index: u64) -> bool {
        self.alpha > 0.0 && frame_index.is_multiple_of(self.stride)
    }

    /// Effective per-frame rate, used to order two rates.
    pub fn per_frame(&self) -> f64 {
        self.alpha / self.stride as f64
    }
}

/// One mixture component, as exposed for inspection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component<T> {
    pub weight: T,
    pub mean: T,
    pub variance: T,
}

#[derive(Clone, Copy, Debug)]
struct Constants<T> {
    k: usize,
    match_sigmas_sq: T,
    background_ratio: T,
    initial_variance: T,
    variance_floor: T,
}

/// Per-pixel mixture of Gaussians over luminance.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureModel<T: Real> {
    width: usize,
    height: usize,
    params: GmmParams,
    // component i of pixel p lives at p * k + i; slots are kept sorted by weight
    weights: Vec<T>,
    means: Vec<T>,
    variances: Vec<T>,
    counts: Vec<u8>,
    last_index: Option<u64>,
    last_timestamp: f64,
}

impl<T: Real> MixtureModel<T> {
    pub fn new(width: usize, height: usize, params: GmmParams) -> Result<Self> {
        params.validate("background.")?;
        let slots = width * height * params.components;
        Ok(MixtureModel {
            width,
            height,
            weights: vec![T::zero(); slots],
            means: vec![T::zero(); slots],
            variances: vec![T::zero(); slots],
            counts: vec![0; width * height],
            params,
            last_index: None,
            last_timestamp: 0.0,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn params(&self) -> &GmmParams {
        &self.params
    }

    pub fn is_initialized(&self) -> bool {
        self.last_index.is_some()
    }

    /// Components of pixel `(x, y)`, heaviest first.
    pub fn components(&self, x: usize, y: usize) -> Vec<Component<T>> {
        let k = self.params.components;
        let p = y * self.width + x;
        (0..self.counts[p] as usize)
            .map(|i| Component {
                weight: self.weights[p * k + i],
                mean: self.means[p * k + i],
                variance: self.variances[p * k + i],
            })
            .collect()
    }

    fn constants(&self) -> Constants<T> {
        Constants {
            k: self.params.components,
            match_sigmas_sq: T::of(self.params.match_sigmas * self.params.match_sigmas),
            background_ratio: T::of(self.params.background_ratio),
            initial_variance: T::of(self.params.initial_variance),
            variance_floor: T::of(self.params.variance_floor),
        }
    }

    fn check_frame(&self, frame: &GrayFrame) -> Result<()> {
        if frame.dims() != self.dims() {
            return Err(Error::dims(self.dims(), frame.dims()));
        }
        Ok(())
    }

    /// Folds `frame` into the model and returns the foreground mask against the
    /// updated model. Frames skipped by the rate's stride, or any frame at
    /// `alpha = 0`, leave the model untouched; pixels that have never been
    /// observed are seeded from the frame regardless of the rate.
    pub fn update(&mut self, frame: &GrayFrame, rate: LearningRate) -> Result<BinaryMask> {
        self.check_frame(frame)?;
        let mut mask = BinaryMask::new(self.width, self.height);
        self.step(frame, rate, Some(mask.bits_mut()));
        Ok(mask)
    }

    /// Same as [`update`](Self::update) without producing a mask.
    pub fn absorb(&mut self, frame: &GrayFrame, rate: LearningRate) -> Result<()> {
        self.check_frame(frame)?;
        self.step(frame, rate, None);
        Ok(())
    }

    fn step(&mut self, frame: &GrayFrame, rate: LearningRate, mut mask: Option<&mut [bool]>) {
        let c = self.constants();
        let k = c.k;
        let learn = rate.applies_to(frame.frame_index);
        let alpha = T::of(rate.alpha());
        let seed = !self.is_initialized();
        for (p, &value) in frame.pixels().iter().enumerate() {
            let x = T::of_u8(value);
            let range = p * k..(p + 1) * k;
            let w = &mut self.weights[range.clone()];
            let m = &mut self.means[range.clone()];
            let v = &mut self.variances[range];
            let count = &mut self.counts[p];
            if *count == 0 || seed {
                seed_pixel(w, m, v, count, x, &c);
            } else if learn {
                update_pixel(w, m, v, count, x, alpha, &c);
            }
            if let Some(bits) = mask.as_deref_mut() {
                bits[p] = !matches_background(w, m, v, *count as usize, x, &c);
            }
        }
        self.last_index = Some(frame.frame_index);
        self.last_timestamp = frame.timestamp_s;
    }

    /// Foreground mask of `frame` against the current model, without updating it.
    pub fn foreground(&self, frame: &GrayFrame) -> Result<BinaryMask> {
        self.check_frame(frame)?;
        if !self.is_initialized() {
            return Err(Error::UninitializedModel);
        }
        let c = self.constants();
        let k = c.k;
        let mut mask = BinaryMask::new(self.width, self.height);
        for (p, (&value, bit)) in frame.pixels().iter().zip(mask.bits_mut()).enumerate() {
            let range = p * k..(p + 1) * k;
            *bit = !matches_background(
                &self.weights[range.clone()],
                &self.means[range.clone()],
                &self.variances[range],
                self.counts[p] as usize,
                T::of_u8(value),
                &c,
            );
        }
        Ok(mask)
    }

    /// Rounded mean of each pixel's heaviest component.
    pub fn background_image(&self) -> Result<GrayFrame> {
        let index = self.last_index.ok_or(Error::UninitializedModel)?;
        let k = self.params.components;
        let mut frame = GrayFrame::filled(self.width, self.height, 0, index, 0.0);
        frame.timestamp_s = self.last_timestamp;
        let max = T::of(255.0);
        for (p, out) in frame.pixels_mut().iter_mut().enumerate() {
            let mean = self.means[p * k].round().max(T::zero()).min(max);
            *out = mean.to_u8().unwrap_or(0);
        }
        Ok(frame)
    }
}

fn seed_pixel<T: Real>(
    w: &mut [T],
    m: &mut [T],
    v: &mut [T],
    count: &mut u8,
    x: T,
    c: &Constants<T>,
) {
    w.fill(T::zero());
    m.fill(T::zero());
    v.fill(T::zero());
    w[0] = T::one();
    m[0] = x;
    v[0] = c.initial_variance;
    *count = 1;
}

#[inline]
fn update_pixel<T: Real>(
    w: &mut [T],
    m: &mut [T],
    v: &mut [T],
    count: &mut u8,
    x: T,
    alpha: T,
    c: &Constants<T>,
) {
    let n = *count as usize;
    let mut best = None;
    let mut best_dist = T::infinity();
    for i in 0..n {
        let d = x - m[i];
        let d2 = d * d;
        if d2 <= c.match_sigmas_sq * v[i] {
            let normalized = d2 / v[i];
            if normalized < best_dist {
                best_dist = normalized;
                best = Some(i);
            }
        }
    }

    let keep = T::one() - alpha;
    for wi in &mut w[..n] {
        *wi *= keep;
    }
    let n = match best {
        Some(b) => {
            w[b] += alpha;
            m[b] += alpha * (x - m[b]);
            let d = x - m[b];
            v[b] = (keep * v[b] + alpha * d * d).max(c.variance_floor);
            n
        }
        None => {
            // slots are sorted, so the last occupied one is the weakest
            let (slot, n) = if n < c.k { (n, n + 1) } else { (n - 1, n) };
            w[slot] = alpha;
            m[slot] = x;
            v[slot] = c.initial_variance;
            *count = n as u8;
            n
        }
    };

    let total: T = w[..n].iter().fold(T::zero(), |acc, &wi| acc + wi);
    for wi in &mut w[..n] {
        *wi /= total;
    }

    // insertion sort, heaviest first; stable so ties keep their order
    for i in 1..n {
        let mut j = i;
        while j > 0 && w[j] > w[j - 1] {
            w.swap(j, j - 1);
            m.swap(j, j - 1);
            v.swap(j, j - 1);
            j -= 1;
        }
    }
}

#[inline]
fn matches_background<T: Real>(
    w: &[T],
    m: &[T],
    v: &[T],
    n: usize,
    x: T,
    c: &Constants<T>,
) -> bool {
    let mut cumulative = T::zero();
    for i in 0..n {
        let d = x - m[i];
        if d * d <= c.match_sigmas_sq * v[i] {
            return true;
        }
        cumulative += w[i];
        if cumulative > c.background_ratio {
            break;
        }
    }
    false
}
