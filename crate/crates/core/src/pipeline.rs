//! Frame-by-frame driver tying a detector, the NCC monitor and the event
//! engine together, plus the throughput benchmark.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::{debug, warn};

use crate::binary_ops::frame_difference;
use crate::config::{PipelineKind, Precision, RunConfig};
use crate::detector::StationaryDetector;
use crate::dual_bg::DualBackgroundDetector;
use crate::error::{Error, Result};
use crate::events::{write_events, EventEngine, EventType, IncidentEvent, Summary};
use crate::frame_io::{extract_roi, GrayFrame};
use crate::ncc_monitor::NccMonitor;
use crate::single_bg::SingleBackgroundDetector;

pub struct Pipeline {
    kind: PipelineKind,
    detector: Box<dyn StationaryDetector>,
    monitor: NccMonitor,
    engine: EventEngine,
    fps: f64,
    tau_motion: u8,
    prev: Option<GrayFrame>,
}

impl Pipeline {
    /// Builds the configured pipeline for ROI frames of `width` x `height`.
    pub fn new(config: &RunConfig, width: usize, height: usize) -> Result<Self> {
        Self::with_kind(config, config.pipeline, width, height)
    }

    pub fn with_kind(
        config: &RunConfig,
        kind: PipelineKind,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let area = width * height;
        let detector: Box<dyn StationaryDetector> = match (kind, config.background.precision) {
            (PipelineKind::Single, Precision::F32) => Box::new(
                SingleBackgroundDetector::<f32>::new(width, height, config.single_params(area))?,
            ),
            (PipelineKind::Single, Precision::F64) => Box::new(
                SingleBackgroundDetector::<f64>::new(width, height, config.single_params(area))?,
            ),
            (PipelineKind::Dual, Precision::F32) => Box::new(DualBackgroundDetector::<f32>::new(
                width,
                height,
                config.dual_params(area),
            )?),
            (PipelineKind::Dual, Precision::F64) => Box::new(DualBackgroundDetector::<f64>::new(
                width,
                height,
                config.dual_params(area),
            )?),
        };
        Ok(Pipeline {
            kind,
            detector,
            monitor: NccMonitor::new(config.ncc.clone()),
            engine: EventEngine::new(
                config.events.clone(),
                config.fps,
                config.tracker.overlap_threshold,
                config.tracker.overlap_metric,
            ),
            fps: config.fps,
            tau_motion: config.binary.tau_motion,
            prev: None,
        })
    }

    pub fn kind(&self) -> PipelineKind {
        self.kind
    }

    pub fn monitor(&self) -> &NccMonitor {
        &self.monitor
    }

    pub fn engine(&self) -> &EventEngine {
        &self.engine
    }

    pub fn detector(&self) -> &dyn StationaryDetector {
        self.detector.as_ref()
    }

    pub fn summary(&self) -> Summary {
        self.engine.report()
    }

    /// Processes one ROI frame and returns the incident events it produced.
    pub fn step(&mut self, frame: &GrayFrame) -> Result<Vec<IncidentEvent>> {
        let out = self.detector.step(frame)?;
        let outcomes = if self.monitor.is_empty() {
            Vec::new()
        } else {
            // the dual detector has no motion mask of its own
            let motion = match (out.motion, &self.prev) {
                (Some(m), _) => Some(m),
                (None, Some(prev)) => Some(frame_difference(frame, prev, self.tau_motion)?),
                (None, None) => None,
            };
            self.monitor.step(frame, motion.as_ref(), self.fps)?
        };
        let events = self
            .engine
            .advance(frame.frame_index, &out.candidates, &outcomes)?;
        for e in &events {
            match e.event_type {
                EventType::Parked => match self.monitor.register(frame, e.object_id, e.bbox) {
                    Ok(_) => {}
                    Err(Error::ConstantPatch) => {
                        warn!(
                            "object {} has a flat patch and cannot be monitored",
                            e.object_id
                        );
                    }
                    Err(err) => return Err(err),
                },
                EventType::Moved => {
                    self.monitor.remove(e.object_id);
                }
                _ => {}
            }
        }
        if self.kind == PipelineKind::Dual {
            self.prev = Some(frame.clone());
        }
        Ok(events)
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub events: Vec<IncidentEvent>,
    pub summary: Summary,
    pub frames: u64,
    /// Last correlation seen per monitored object, by id.
    pub final_gamma: Vec<(u64, Option<f64>)>,
}

/// Runs the configured pipeline over already decoded frames.
pub fn run_frames<I>(config: &RunConfig, frames: I) -> Result<RunOutput>
where
    I: IntoIterator<Item = Result<GrayFrame>>,
{
    let mut pipeline: Option<Pipeline> = None;
    let mut events = Vec::new();
    let mut count = 0;
    for frame in frames {
        let frame = frame?;
        let frame = match &config.roi {
            Some(roi) => {
                extract_roi(&frame, roi).map_err(|e| Error::config("roi", e.to_string()))?
            }
            None => frame,
        };
        let p = match &mut pipeline {
            Some(p) => p,
            None => pipeline.insert(Pipeline::new(config, frame.width(), frame.height())?),
        };
        let new = p.step(&frame)?;
        if let (Some(dir), Some(mask)) = (&config.output.debug_masks, p.detector().last_mask()) {
            mask.write_pgm(dir.join(crate::frame_io::frame_file_name(frame.frame_index)))?;
        }
        for e in &new {
            debug!(
                "frame {}: {:?} object {}",
                e.frame_index, e.event_type, e.object_id
            );
        }
        events.extend(new);
        count += 1;
    }
    let pipeline = pipeline.ok_or_else(|| Error::NoFrames("input".into()))?;
    let summary = pipeline.summary();
    let final_gamma = summary
        .rows
        .iter()
        .map(|r| (r.object_id, r.last_gamma))
        .collect();
    Ok(RunOutput {
        events,
        summary,
        frames: count,
        final_gamma,
    })
}

/// Reads the configured input, runs the pipeline, and writes the outputs.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::config("input", "no input configured"))?;
    let source = crate::frame_io::FrameSource::open(input, config.fps)?;
    if let Some(dir) = &config.output.debug_masks {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let output = run_frames(config, source)?;
    if let Some(path) = &config.output.events {
        write_event_file(path, &output.events)?;
    }
    if let Some(path) = &config.output.summary_csv {
        fs::write(path, output.summary.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(output)
}

pub fn write_event_file(path: &Path, events: &[IncidentEvent]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_events(&mut out, events)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Half-resolution copy: each output pixel is the rounded mean of a 2x2 block.
pub fn halve(frame: &GrayFrame) -> GrayFrame {
    let (w, h) = (frame.width() / 2, frame.height() / 2);
    let src = frame.pixels();
    let sw = frame.width();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = 2 * y * sw + 2 * x;
            let sum = u16::from(src[i])
                + u16::from(src[i + 1])
                + u16::from(src[i + sw])
                + u16::from(src[i + sw + 1]);
            pixels.push(((sum + 2) / 4) as u8);
        }
    }
    let mut out = GrayFrame::new(w, h, pixels, frame.frame_index, 1.0).expect("consistent size");
    out.timestamp_s = frame.timestamp_s;
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    /// `single`, `dual`, or `noop` for the frame-iteration baseline.
    pub pipeline: String,
    pub roi_w: usize,
    pub roi_h: usize,
    /// Median over the repetitions.
    pub fps: f64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("pipeline,roi_w,roi_h,fps\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.2}\n",
            r.pipeline, r.roi_w, r.roi_h, r.fps
        ));
    }
    out
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Measures frames per second of both pipelines on preloaded frames, at full
/// size and at half size in each dimension. Runs are sequential, and the
/// pipelines alternate within each repetition so drift in machine load hits
/// both alike.
pub fn bench(
    config: &RunConfig,
    frames: &[GrayFrame],
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    if frames.is_empty() {
        return Err(Error::NoFrames("bench input".into()));
    }
    if repetitions == 0 {
        return Err(Error::config("repetitions", "must be at least 1"));
    }
    let full: Vec<GrayFrame> = match &config.roi {
        Some(roi) => frames
            .iter()
            .map(|f| extract_roi(f, roi))
            .collect::<Result<_>>()
            .map_err(|e| Error::config("roi", e.to_string()))?,
        None => frames.to_vec(),
    };
    let half: Vec<GrayFrame> = full.iter().map(halve).collect();
    let mut rows = Vec::new();
    for set in [&full, &half] {
        let (w, h) = set[0].dims();
        let mut timings: [Vec<f64>; 3] = Default::default();
        for _ in 0..repetitions {
            timings[0].push(time_noop(set));
            for (slot, kind) in [(1, PipelineKind::Single), (2, PipelineKind::Dual)] {
                let mut p = Pipeline::with_kind(config, kind, w, h)?;
                let start = Instant::now();
                for f in set.iter() {
                    p.step(f)?;
                }
                timings[slot].push(set.len() as f64 / start.elapsed().as_secs_f64());
            }
        }
        for (name, t) in ["noop", "single", "dual"].iter().zip(timings) {
            rows.push(BenchRow {
                pipeline: name.to_string(),
                roi_w: w,
                roi_h: h,
                fps: median(t),
            });
        }
    }
    Ok(rows)
}

/// Baseline: touches every pixel once and does nothing else.
fn time_noop(frames: &[GrayFrame]) -> f64 {
    let start = Instant::now();
    let mut acc = 0u64;
    for f in frames {
        acc = acc.wrapping_add(f.pixels().iter().map(|&p| u64::from(p)).sum::<u64>());
    }
    std::hint::black_box(acc);
    frames.len() as f64 / start.elapsed().as_secs_f64()
}

/// Frames of `roi`-extracted input, all in memory.
pub fn preload(config: &RunConfig) -> Result<Vec<GrayFrame>> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::config("input", "no input configured"))?;
    crate::frame_io::FrameSource::open(input, config.fps)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::RoiSpec;
    use crate::geometry::Rect;

    #[test]
    fn halving_averages_blocks() {
        let f = GrayFrame::new(5, 3, (0..15).collect(), 4, 30.0).unwrap();
        let h = halve(&f);
        assert_eq!(h.dims(), (2, 1));
        // (0+1+5+6)/4 = 3, (2+3+7+8)/4 = 5
        assert_eq!(h.pixels(), &[3, 5]);
        assert_eq!(h.frame_index, 4);
    }

    #[test]
    fn median_of_even_and_odd_counts() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![7.0]), 7.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        let c = RunConfig::default();
        assert!(matches!(
            run_frames(&c, Vec::new()),
            Err(Error::NoFrames(_))
        ));
    }

    #[test]
    fn bad_roi_is_a_config_error() {
        let c = RunConfig {
            roi: Some(RoiSpec::new(vec![Rect::new(0, 0, 50, 10)])),
            ..RunConfig::default()
        };
        let frames = vec![Ok(GrayFrame::filled(20, 10, 0, 0, 30.0))];
        assert!(matches!(run_frames(&c, frames), Err(Error::Config { .. })));
    }

    #[test]
    fn bench_reports_every_pipeline_and_size() {
        let frames: Vec<GrayFrame> = (0..4)
            .map(|t| GrayFrame::filled(16, 8, 60, t, 30.0))
            .collect();
        let rows = bench(&RunConfig::default(), &frames, 1).unwrap();
        let shape: Vec<(&str, usize, usize)> = rows
            .iter()
            .map(|r| (r.pipeline.as_str(), r.roi_w, r.roi_h))
            .collect();
        assert_eq!(
            shape,
            vec![
                ("noop", 16, 8),
                ("single", 16, 8),
                ("dual", 16, 8),
                ("noop", 8, 4),
                ("single", 8, 4),
                ("dual", 8, 4)
            ]
        );
        assert!(rows.iter().all(|r| r.fps > 0.0));
        assert!(bench_csv(&rows).starts_with("pipeline,roi_w,roi_h,fps\nnoop,16,8,"));
    }
}
