//! Binary segmentation masks: polygon rasterization, square dilation, area
//! and the overlap score that gates object removal.
//!
//! All measures are exact pixel counts. Ratios are formed from integer counts
//! only at the end, so two routes that count the same pixels agree bit for
//! bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major binary mask. `bits[y * width + x]` is the pixel at column `x`,
/// row `y`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for SegmentationMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegmentationMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl SegmentationMask {
    pub fn empty(width: u32, height: u32) -> Self {
        SegmentationMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        SegmentationMask {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    /// Builds a mask from row-major bits.
    ///
    /// # Panics
    ///
    /// If `bits.len() != width * height`.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        SegmentationMask {
            width,
            height,
            bits,
        }
    }

    /// Sets every pixel in the listed `(x, y)` coordinates.
    pub fn from_pixels(width: u32, height: u32, pixels: &[(u32, u32)]) -> Self {
        let mut m = Self::empty(width, height);
        for &(x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_total(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.offset(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.offset(x, y);
        self.bits[i] = value;
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        y as usize * self.width as usize + x as usize
    }

    /// Number of set pixels.
    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            })
        }
    }

    /// Pixels set in both masks.
    pub fn intersection_count(&self, other: &Self) -> Result<u64> {
        self.same_shape(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count() as u64)
    }

    /// `true` when every pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn union_with(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        Ok(())
    }
}

/// A rational pixel ratio kept as its integer numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRatio {
    pub numerator: u64,
    pub denominator: u64,
}

impl PixelRatio {
    pub const ZERO: PixelRatio = PixelRatio {
        numerator: 0,
        denominator: 1,
    };

    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn is_zero(self) -> bool {
        self.numerator == 0
    }
}

/// Rasterizes COCO-style polygons with the even-odd rule, sampling each
/// pixel at its center `(x + 0.5, y + 0.5)`.
///
/// Each polygon is a list of `(x, y)` vertices; polygons are filled
/// independently and unioned. Pixels outside the image are clipped.
pub fn rasterize_polygons(
    polygons: &[Vec<(f64, f64)>],
    width: u32,
    height: u32,
) -> Result<SegmentationMask> {
    let mut mask = SegmentationMask::empty(width, height);
    let mut crossings = Vec::new();
    for poly in polygons {
        if poly.len() < 3 {
            return Err(Error::DegeneratePolygon {
                vertices: poly.len(),
            });
        }
        for y in 0..height {
            let yc = y as f64 + 0.5;
            crossings.clear();
            for (i, &(x0, y0)) in poly.iter().enumerate() {
                let (x1, y1) = poly[(i + 1) % poly.len()];
                // Half-open in y so a vertex on the scanline counts once.
                if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                    crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for span in crossings.chunks_exact(2) {
                // Pixel x is inside when span[0] <= x + 0.5 < span[1].
                let start = (span[0] - 0.5).ceil().max(0.0);
                let end = (span[1] - 0.5).ceil().min(width as f64);
                if start >= end {
                    continue;
                }
                for x in start as u32..end as u32 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Converts COCO's flat `[x0, y0, x1, y1, ...]` lists into vertex lists.
pub fn polygons_from_flat(flat: &[Vec<f64>]) -> Result<Vec<Vec<(f64, f64)>>> {
    flat.iter()
        .map(|coords| {
            if coords.len() % 2 != 0 || coords.len() < 6 {
                return Err(Error::DegeneratePolygon {
                    vertices: coords.len() / 2,
                });
            }
            Ok(coords.chunks_exact(2).map(|p| (p[0], p[1])).collect())
        })
        .collect()
}

/// Morphological dilation with a `(2 * radius + 1)`-square structuring
/// element, clipped to the image. Radius 0 returns a copy.
///
/// The square element is separable, so this runs a horizontal pass then a
/// vertical pass.
pub fn dilate(mask: &SegmentationMask, radius: u32) -> SegmentationMask {
    if radius == 0 || mask.width == 0 || mask.height == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width as usize, mask.height as usize);
    let r = radius as usize;
    let mut horizontal = vec![false; w * h];
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        let out = &mut horizontal[y * w..(y + 1) * w];
        // Distance to the most recent set pixel on the left, swept both ways.
        let mut last: Option<usize> = None;
        for x in 0..w {
            if row[x] {
                last = Some(x);
            }
            if matches!(last, Some(l) if x - l <= r) {
                out[x] = true;
            }
        }
        last = None;
        for x in (0..w).rev() {
            if row[x] {
                last = Some(x);
            }
            if matches!(last, Some(l) if l - x <= r) {
                out[x] = true;
            }
        }
    }
    let mut bits = vec![false; w * h];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if horizontal[y * w + x] {
                last = Some(y);
            }
            if matches!(last, Some(l) if y - l <= r) {
                bits[y * w + x] = true;
            }
        }
        last = None;
        for y in (0..h).rev() {
            if horizontal[y * w + x] {
                last = Some(y);
            }
            if matches!(last, Some(l) if l - y <= r) {
                bits[y * w + x] = true;
            }
        }
    }
    SegmentationMask {
        width: mask.width,
        height: mask.height,
        bits,
    }
}

/// Set pixels over image pixels, as an exact ratio.
pub fn area_ratio(mask: &SegmentationMask) -> PixelRatio {
    PixelRatio {
        numerator: mask.count(),
        denominator: mask.pixel_total().max(1),
    }
}

/// Fraction of the image covered by `mask`, in `[0, 1]`.
pub fn area_fraction(mask: &SegmentationMask) -> f64 {
    area_ratio(mask).value()
}

/// `|target ∩ qa| / |qa|` as an exact ratio. Both inputs are expected to be
/// dilated already.
pub fn overlap_ratio(target: &SegmentationMask, qa: &SegmentationMask) -> Result<PixelRatio> {
    let inter = target.intersection_count(qa)?;
    let denom = qa.count();
    if denom == 0 {
        return Err(Error::EmptyQaMask);
    }
    Ok(PixelRatio {
        numerator: inter,
        denominator: denom,
    })
}

/// Fraction of the QA-object mask covered by the target mask.
///
/// ```
/// use cvf_core::mask::{overlap_score, SegmentationMask};
/// let qa = SegmentationMask::from_pixels(4, 4, &[(0, 0), (1, 0)]);
/// let target = SegmentationMask::from_pixels(4, 4, &[(1, 0), (2, 0)]);
/// assert_eq!(overlap_score(&target, &qa).unwrap(), 0.5);
/// ```
pub fn overlap_score(target: &SegmentationMask, qa: &SegmentationMask) -> Result<f64> {
    overlap_ratio(target, qa).map(PixelRatio::value)
}

/// Bitwise union of `masks`; all must be `width x height`.
pub fn union_masks<'a, I>(masks: I, width: u32, height: u32) -> Result<SegmentationMask>
where
    I: IntoIterator<Item = &'a SegmentationMask>,
{
    let mut out = SegmentationMask::empty(width, height);
    for m in masks {
        out.union_with(m)?;
    }
    Ok(out)
}
