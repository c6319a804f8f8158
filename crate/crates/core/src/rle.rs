//! COCO run-length encoding.
//!
//! Runs are column-major and alternate between background and foreground,
//! starting with background; a mask that begins with a foreground pixel has
//! a leading zero-length run. The compressed string form stores each run
//! (after the third, as a delta to the run two positions earlier) in 5-bit
//! groups offset into printable ASCII starting at `'0'`.

use crate::error::{Error, Result};
use crate::mask::SegmentationMask;

/// Decodes uncompressed run counts into a `width x height` mask.
pub fn decode_rle(counts: &[u32], width: u32, height: u32) -> Result<SegmentationMask> {
    let expected = width as u64 * height as u64;
    let actual: u64 = counts.iter().map(|&c| c as u64).sum();
    if actual != expected {
        return Err(Error::RleSum { expected, actual });
    }
    let (w, h) = (width as usize, height as usize);
    let mut bits = vec![false; w * h];
    let mut pos = 0usize;
    for (i, &run) in counts.iter().enumerate() {
        let run = run as usize;
        if i % 2 == 1 {
            for p in pos..pos + run {
                // column-major position p -> (x = p / h, y = p % h)
                bits[(p % h) * w + p / h] = true;
            }
        }
        pos += run;
    }
    Ok(SegmentationMask::from_bits(width, height, bits))
}

/// Encodes a mask into canonical run counts: the first run may be zero, no
/// later run is.
pub fn encode_rle(mask: &SegmentationMask) -> Vec<u32> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let b = bits[y * w + x];
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
    }
    if run > 0 || counts.is_empty() {
        counts.push(run);
    }
    counts
}

/// Compresses run counts into COCO's string form.
pub fn counts_to_string(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut group = (x & 0x1f) as u8;
            x >>= 5;
            let more = if group & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                group |= 0x20;
            }
            out.push((group + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

/// Inverse of [`counts_to_string`].
pub fn counts_from_string(s: &str) -> Result<Vec<u32>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<u32> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0u32;
        loop {
            let Some(&b) = bytes.get(p) else {
                return Err(Error::RleString(format!("truncated value at byte {p}")));
            };
            if !(48..48 + 64).contains(&b) {
                return Err(Error::RleString(format!("invalid character at byte {p}")));
            }
            if k >= 12 {
                return Err(Error::RleString(format!("value too long at byte {p}")));
            }
            let c = (b - 48) as i64;
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        let m = counts.len();
        if m > 2 {
            x += counts[m - 2] as i64;
        }
        let value = u32::try_from(x)
            .map_err(|_| Error::RleString(format!("run {m} decodes to {x}")))?;
        counts.push(value);
    }
    Ok(counts)
}

/// Mask to compressed string in one step.
pub fn mask_to_string(mask: &SegmentationMask) -> String {
    counts_to_string(&encode_rle(mask))
}

/// Compressed string to mask in one step.
pub fn mask_from_string(s: &str, width: u32, height: u32) -> Result<SegmentationMask> {
    decode_rle(&counts_from_string(s)?, width, height)
}
