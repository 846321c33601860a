//! Grayscale frame sequences on disk and region-of-interest extraction.
//!
//! Two input layouts are supported: a directory of numbered rasters
//! (`frame_000000.pgm`, `frame_000001.png`, ...) and a headerless 8-bit raw
//! stream whose frame size comes from configuration. Video containers are not
//! read here; convert them to one of these layouts first.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;

/// An 8-bit grayscale raster stamped with its position in the source.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    pub frame_index: u64,
    pub timestamp_s: f64,
}

impl GrayFrame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        frame_index: u64,
        fps: f64,
    ) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidRegion(format!(
                "pixel buffer holds {} values, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(GrayFrame {
            width,
            height,
            pixels,
            frame_index,
            timestamp_s: timestamp(frame_index, fps),
        })
    }

    pub fn filled(width: usize, height: usize, value: u8, frame_index: u64, fps: f64) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![value; width * height],
            frame_index,
            timestamp_s: timestamp(frame_index, fps),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Copies the pixels inside `rect` in row-major order.
    pub fn patch(&self, rect: &Rect) -> Result<Vec<u8>> {
        if rect.is_empty() || !rect.fits_within(self.width, self.height) {
            return Err(Error::InvalidRegion(format!(
                "rectangle {:?} is empty or outside the {}x{} frame",
                <[usize; 4]>::from(*rect),
                self.width,
                self.height
            )));
        }
        let mut out = Vec::with_capacity(rect.area());
        for y in rect.y..rect.bottom() {
            out.extend_from_slice(&self.row(y)[rect.x..rect.right()]);
        }
        Ok(out)
    }

    /// Re-stamps the frame with a new index and timestamp.
    pub fn restamped(mut self, frame_index: u64, fps: f64) -> Self {
        self.frame_index = frame_index;
        self.timestamp_s = timestamp(frame_index, fps);
        self
    }

    pub(crate) fn check_same_dims(&self, other: &GrayFrame) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.dims(), other.dims()));
        }
        Ok(())
    }
}

fn timestamp(frame_index: u64, fps: f64) -> f64 {
    if fps > 0.0 {
        frame_index as f64 / fps
    } else {
        0.0
    }
}

/// Rec. 601 luma, rounded to the nearest integer.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((weighted + 500) / 1000) as u8
}

/// Rectangles cut from each frame and placed side by side, left to right.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoiSpec {
    pub rects: Vec<Rect>,
}

impl RoiSpec {
    pub fn new(rects: Vec<Rect>) -> Self {
        RoiSpec { rects }
    }

    pub fn full_frame(width: usize, height: usize) -> Self {
        RoiSpec::new(vec![Rect::new(0, 0, width, height)])
    }

    /// Checks the spec against a source frame size and returns the output size.
    pub fn output_dims(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        let first = self
            .rects
            .first()
            .ok_or_else(|| Error::InvalidRegion("region list is empty".into()))?;
        let mut total_w = 0;
        for (i, r) in self.rects.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::InvalidRegion(format!("region {i} is empty")));
            }
            if !r.fits_within(width, height) {
                return Err(Error::InvalidRegion(format!(
                    "region {i} {:?} exceeds the {width}x{height} frame",
                    <[usize; 4]>::from(*r)
                )));
            }
            if r.h != first.h {
                return Err(Error::InvalidRegion(format!(
                    "region {i} has height {}, expected {}",
                    r.h, first.h
                )));
            }
            total_w += r.w;
        }
        Ok((total_w, first.h))
    }
}

/// Cuts the regions out of `frame` and concatenates them horizontally.
pub fn extract_roi(frame: &GrayFrame, spec: &RoiSpec) -> Result<GrayFrame> {
    let (out_w, out_h) = spec.output_dims(frame.width, frame.height)?;
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for r in &spec.rects {
            let row = frame.row(r.y + y);
            pixels.extend_from_slice(&row[r.x..r.right()]);
        }
    }
    Ok(GrayFrame {
        width: out_w,
        height: out_h,
        pixels,
        frame_index: frame.frame_index,
        timestamp_s: frame.timestamp_s,
    })
}

/// How frames are laid out on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputLayout {
    /// Numbered `frame_%06d.pgm` / `.png` files.
    Directory { path: PathBuf },
    /// Headerless planar 8-bit stream.
    Raw {
        path: PathBuf,
        width: usize,
        height: usize,
    },
}

impl InputLayout {
    pub fn path(&self) -> &Path {
        match self {
            InputLayout::Directory { path } | InputLayout::Raw { path, .. } => path,
        }
    }
}

enum Backing {
    Directory {
        files: Vec<PathBuf>,
    },
    Raw {
        path: PathBuf,
        reader: BufReader<File>,
    },
}

/// Ordered reader over a frame sequence.
pub struct FrameSource {
    backing: Backing,
    width: usize,
    height: usize,
    len: u64,
    next_index: u64,
    fps: f64,
}

impl FrameSource {
    pub fn open(layout: &InputLayout, fps: f64) -> Result<Self> {
        match layout {
            InputLayout::Directory { path } => Self::open_dir(path, fps),
            InputLayout::Raw {
                path,
                width,
                height,
            } => Self::open_raw(path, *width, *height, fps),
        }
    }

    pub fn open_dir(dir: impl AsRef<Path>, fps: f64) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut numbered = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if let Some(index) = frame_file_index(&path) {
                numbered.push((index, path));
            }
        }
        if numbered.is_empty() {
            return Err(Error::NoFrames(dir.to_path_buf()));
        }
        numbered.sort();
        for (expected, (found, _)) in numbered.iter().enumerate() {
            if *found != expected as u64 {
                return Err(Error::NonContiguous {
                    expected: expected as u64,
                    found: *found,
                });
            }
        }
        let mut dims = None;
        for (_, path) in &numbered {
            let (w, h) = image::image_dimensions(path).map_err(|e| Error::Decode {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let d = (w as usize, h as usize);
            match dims {
                None => dims = Some(d),
                Some(first) if first != d => return Err(Error::dims(first, d)),
                Some(_) => {}
            }
        }
        let (width, height) = dims.expect("at least one frame");
        Ok(FrameSource {
            len: numbered.len() as u64,
            backing: Backing::Directory {
                files: numbered.into_iter().map(|(_, p)| p).collect(),
            },
            width,
            height,
            next_index: 0,
            fps,
        })
    }

    pub fn open_raw(path: impl AsRef<Path>, width: usize, height: usize, fps: f64) -> Result<Self> {
        let path = path.as_ref();
        let frame_len = width * height;
        if frame_len == 0 {
            return Err(Error::config("input", "raw frame size must be non-zero"));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bytes = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if bytes == 0 {
            return Err(Error::NoFrames(path.to_path_buf()));
        }
        if bytes % frame_len as u64 != 0 {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: format!("length {bytes} is not a multiple of {width}x{height}"),
            });
        }
        Ok(FrameSource {
            backing: Backing::Raw {
                path: path.to_path_buf(),
                reader: BufReader::new(file),
            },
            width,
            height,
            len: bytes / frame_len as u64,
            next_index: 0,
            fps,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Returns the next frame, or `None` once the sequence is exhausted (and on every later call).
    pub fn next_frame(&mut self) -> Result<Option<GrayFrame>> {
        if self.next_index >= self.len {
            return Ok(None);
        }
        let index = self.next_index;
        let pixels = match &mut self.backing {
            Backing::Directory { files } => {
                let path = &files[index as usize];
                let pixels = decode_gray(path)?;
                if pixels.1 != (self.width, self.height) {
                    return Err(Error::dims((self.width, self.height), pixels.1));
                }
                pixels.0
            }
            Backing::Raw { path, reader } => {
                let mut buf = vec![0u8; self.width * self.height];
                reader
                    .read_exact(&mut buf)
                    .map_err(|e| Error::io(path.clone(), e))?;
                buf
            }
        };
        self.next_index += 1;
        GrayFrame::new(self.width, self.height, pixels, index, self.fps).map(Some)
    }
}

impl Iterator for FrameSource {
    type Item = Result<GrayFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

fn frame_file_index(path: &Path) -> Option<u64> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if ext != "pgm" && ext != "png" {
        return None;
    }
    let digits = path.file_stem()?.to_str()?.strip_prefix("frame_")?;
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn decode_gray(path: &Path) -> Result<(Vec<u8>, (usize, usize))> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let dims = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    Ok((pixels, dims))
}

/// File name used for frame `index` inside a frame directory.
pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.pgm")
}

/// Writes a binary PGM (P5, maxval 255).
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{width} {height}\n255\n")
        .and_then(|_| out.write_all(pixels))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_frame(dir: impl AsRef<Path>, frame: &GrayFrame) -> Result<PathBuf> {
    let path = dir.as_ref().join(frame_file_name(frame.frame_index));
    write_pgm(&path, frame.width, frame.height, &frame.pixels)?;
    Ok(path)
}
