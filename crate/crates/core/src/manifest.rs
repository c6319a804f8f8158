//! Line-delimited edit manifests.
//!
//! One JSON object per line, sorted by `edit_id`. The removal mask travels
//! as a compressed run-length string with its `[height, width]` size, the
//! same encoding COCO uses for segmentations.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::PixelRatio;
use crate::rle::{mask_from_string, mask_to_string};
use crate::select::{EditMode, EditRecord};
use crate::vocab::MatchedPhrase;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestLine {
    schema_version: u32,
    edit_id: String,
    question_id: u64,
    image_id: u64,
    mode: EditMode,
    target_category_id: u64,
    target_category: String,
    removed_instance_ids: Vec<u64>,
    /// `[height, width]`
    mask_size: [u32; 2],
    mask_counts: String,
    expected_answer: String,
    original_answer: String,
    question: String,
    question_type: String,
    overlap: f64,
    overlap_pixels: [u64; 2],
    area: f64,
    area_pixels: [u64; 2],
    provenance: Vec<MatchedPhrase>,
}

impl From<&EditRecord> for ManifestLine {
    fn from(r: &EditRecord) -> Self {
        ManifestLine {
            schema_version: MANIFEST_SCHEMA_VERSION,
            edit_id: r.edit_id.clone(),
            question_id: r.question_id,
            image_id: r.image_id,
            mode: r.mode,
            target_category_id: r.target_category_id,
            target_category: r.target_category.clone(),
            removed_instance_ids: r.removed_instance_ids.clone(),
            mask_size: [r.removal_mask.height(), r.removal_mask.width()],
            mask_counts: mask_to_string(&r.removal_mask),
            expected_answer: r.expected_answer.clone(),
            original_answer: r.original_answer.clone(),
            question: r.question.clone(),
            question_type: r.question_type.clone(),
            overlap: r.overlap.value(),
            overlap_pixels: [r.overlap.numerator, r.overlap.denominator],
            area: r.area.value(),
            area_pixels: [r.area.numerator, r.area.denominator],
            provenance: r.provenance.clone(),
        }
    }
}

impl TryFrom<ManifestLine> for EditRecord {
    type Error = Error;

    fn try_from(l: ManifestLine) -> Result<Self> {
        if l.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest schema version {}",
                l.schema_version
            )));
        }
        let removal_mask = mask_from_string(&l.mask_counts, l.mask_size[1], l.mask_size[0])?;
        let ratio = |p: [u64; 2]| -> Result<PixelRatio> {
            if p[1] == 0 {
                return Err(Error::Config("zero denominator in pixel ratio".into()));
            }
            Ok(PixelRatio {
                numerator: p[0],
                denominator: p[1],
            })
        };
        Ok(EditRecord {
            edit_id: l.edit_id,
            question_id: l.question_id,
            image_id: l.image_id,
            mode: l.mode,
            target_category_id: l.target_category_id,
            target_category: l.target_category,
            removed_instance_ids: l.removed_instance_ids,
            removal_mask,
            expected_answer: l.expected_answer,
            original_answer: l.original_answer,
            question: l.question,
            question_type: l.question_type,
            overlap: ratio(l.overlap_pixels)?,
            area: ratio(l.area_pixels)?,
            provenance: l.provenance,
        })
    }
}

/// Serializes one record as a single manifest line (no trailing newline).
pub fn to_line(record: &EditRecord) -> String {
    serde_json::to_string(&ManifestLine::from(record)).expect("manifest line serializes")
}

/// Writes `records` sorted by `edit_id`, one per line. Returns the number of
/// lines written.
pub fn emit_manifest(records: &[EditRecord], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let mut sorted: Vec<&EditRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.edit_id.cmp(&b.edit_id));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &sorted {
        writeln!(w, "{}", to_line(r)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(sorted.len())
}

/// Reads a manifest written by [`emit_manifest`]. Blank lines are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<EditRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
        out.push(EditRecord::try_from(parsed).map_err(|e| record_err(e.to_string()))?);
    }
    Ok(out)
}
