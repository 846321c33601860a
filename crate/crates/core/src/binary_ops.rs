//! Binary masks: thresholded differences, square-element morphology,
//! moving-pixel removal and 8-connected component labeling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::frame_io::{write_pgm, GrayFrame};
use crate::geometry::Rect;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidRegion(format!(
                "mask holds {} bits, expected {width}x{height}",
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![true; width * height],
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Number of set bits inside `rect` (clipped to the mask).
    pub fn count_in(&self, rect: &Rect) -> usize {
        let x1 = rect.right().min(self.width);
        let y1 = rect.bottom().min(self.height);
        (rect.y.min(y1)..y1)
            .map(|y| {
                self.bits[y * self.width + rect.x.min(x1)..y * self.width + x1]
                    .iter()
                    .filter(|&&b| b)
                    .count()
            })
            .sum()
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// `self AND NOT other`.
    pub fn subtract(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_dims(other)?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && !b)
                .collect(),
        })
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.dims(), other.dims()));
        }
        Ok(())
    }

    /// 0/255 raster, for debug dumps.
    pub fn to_gray(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_pgm(path, self.width, self.height, &self.to_gray())
    }
}

/// Square structuring element of side `2 * radius + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
}

impl StructuringElement {
    pub fn square(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::config(
                "radius",
                "structuring element radius must be at least 1",
            ));
        }
        Ok(StructuringElement { radius })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }
}

/// Set where `|a - b| > tau`.
pub fn threshold_absdiff(a: &GrayFrame, b: &GrayFrame, tau: u8) -> Result<BinaryMask> {
    a.check_same_dims(b)?;
    let bits = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| p.abs_diff(q) > tau)
        .collect();
    Ok(BinaryMask {
        width: a.width(),
        height: a.height(),
        bits,
    })
}

/// Motion mask between consecutive frames; same kernel as [`threshold_absdiff`].
pub fn frame_difference(curr: &GrayFrame, prev: &GrayFrame, tau_motion: u8) -> Result<BinaryMask> {
    threshold_absdiff(curr, prev, tau_motion)
}

// Square morphology is separable: a horizontal pass followed by a vertical pass.
// Pixels outside the mask are unset, so erosion clears a `radius`-wide border.
fn square_filter(mask: &BinaryMask, radius: usize, erode: bool) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut horizontal = vec![false; w * h];
    let mut out = vec![false; w * h];
    let hit = |b: bool| if erode { !b } else { b };

    // a "hit" is an unset bit for erosion, a set bit for dilation
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        let dst = &mut horizontal[y * w..(y + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            let clipped = x < radius || x + radius >= w;
            let any_hit = row[lo..=hi].iter().any(|&b| hit(b));
            *d = if erode {
                !(any_hit || clipped)
            } else {
                any_hit
            };
        }
    }
    for x in 0..w {
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            let clipped = y < radius || y + radius >= h;
            let any_hit = (lo..=hi).any(|yy| hit(horizontal[yy * w + x]));
            out[y * w + x] = if erode {
                !(any_hit || clipped)
            } else {
                any_hit
            };
        }
    }
    BinaryMask {
        width: w,
        height: h,
        bits: out,
    }
}

/// Binary erosion; neighbours outside the mask count as unset.
pub fn erode(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    if mask.bits.is_empty() {
        return mask.clone();
    }
    square_filter(mask, se.radius, true)
}

/// Binary dilation; neighbours outside the mask are ignored.
pub fn dilate(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    if mask.bits.is_empty() {
        return mask.clone();
    }
    square_filter(mask, se.radius, false)
}

/// Erosion followed by dilation.
pub fn open(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

/// Clears every foreground bit that lies within `guard_radius` of a motion bit.
pub fn remove_moving_pixels(
    foreground: &BinaryMask,
    motion: &BinaryMask,
    guard_radius: usize,
) -> Result<BinaryMask> {
    foreground.check_dims(motion)?;
    if guard_radius == 0 {
        return foreground.subtract(motion);
    }
    let halo = dilate(
        motion,
        StructuringElement {
            radius: guard_radius,
        },
    );
    foreground.subtract(&halo)
}

/// A connected component with its tight bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blob {
    pub label: u32,
    pub bbox: Rect,
    pub area: usize,
}

/// Per-pixel labels (0 = background) together with the blob list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub blobs: Vec<Blob>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// 8-connected labeling. Components smaller than `min_area` are dropped (and
/// zeroed in the label map); the rest are ordered by `(bbox.y, bbox.x)` and
/// numbered densely from 1.
pub fn label_map(mask: &BinaryMask, min_area: usize) -> LabelMap {
    let (w, h) = mask.dims();
    let mut provisional = vec![0u32; w * h];
    // provisional id 0 is reserved for background
    let mut sets = DisjointSet { parent: vec![0] };

    for y in 0..h {
        for x in 0..w {
            if !mask.bits[y * w + x] {
                continue;
            }
            let mut label = 0u32;
            let mut neighbour = |nx: usize, ny: usize, label: &mut u32| {
                let n = provisional[ny * w + nx];
                if n != 0 {
                    *label = if *label == 0 {
                        n
                    } else {
                        sets.union(*label, n)
                    };
                }
            };
            if x > 0 {
                neighbour(x - 1, y, &mut label);
            }
            if y > 0 {
                if x > 0 {
                    neighbour(x - 1, y - 1, &mut label);
                }
                neighbour(x, y - 1, &mut label);
                if x + 1 < w {
                    neighbour(x + 1, y - 1, &mut label);
                }
            }
            if label == 0 {
                label = sets.make();
            }
            provisional[y * w + x] = label;
        }
    }

    struct Acc {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        area: usize,
    }
    let mut acc: Vec<Option<Acc>> = (0..sets.parent.len()).map(|_| None).collect();
    for y in 0..h {
        for x in 0..w {
            let p = provisional[y * w + x];
            if p == 0 {
                continue;
            }
            let root = sets.find(p);
            provisional[y * w + x] = root;
            let a = acc[root as usize].get_or_insert(Acc {
                x0: x,
                y0: y,
                x1: x,
                y1: y,
                area: 0,
            });
            a.x0 = a.x0.min(x);
            a.y0 = a.y0.min(y);
            a.x1 = a.x1.max(x);
            a.y1 = a.y1.max(y);
            a.area += 1;
        }
    }

    let mut kept: Vec<(u32, Rect, usize)> = acc
        .iter()
        .enumerate()
        .filter_map(|(root, a)| {
            let a = a.as_ref()?;
            (a.area >= min_area.max(1)).then(|| {
                (
                    root as u32,
                    Rect::new(a.x0, a.y0, a.x1 - a.x0 + 1, a.y1 - a.y0 + 1),
                    a.area,
                )
            })
        })
        .collect();
    kept.sort_by_key(|&(_, r, _)| (r.y, r.x));

    let mut relabel = vec![0u32; sets.parent.len()];
    let blobs = kept
        .iter()
        .enumerate()
        .map(|(i, &(root, bbox, area))| {
            let label = i as u32 + 1;
            relabel[root as usize] = label;
            Blob { label, bbox, area }
        })
        .collect();
    let labels = provisional.iter().map(|&p| relabel[p as usize]).collect();
    LabelMap {
        width: w,
        height: h,
        labels,
        blobs,
    }
}

/// Blob list of [`label_map`].
pub fn label_components(mask: &BinaryMask, min_area: usize) -> Vec<Blob> {
    label_map(mask, min_area).blobs
}
