//! Invariant (IV) and covariant (CV) edit selection.
//!
//! IV edits remove every instance of a category the question/answer does not
//! mention, so the expected answer is unchanged. CV edits remove one instance
//! of the counted category from a counting question, so the expected answer
//! drops by one.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::{CategoryId, CocoCorpus, ImageObjectIndex, ImageObjects, ImageRecord, InstanceId};
use crate::error::{Error, Result};
use crate::mask::{area_ratio, dilate, overlap_ratio, union_masks, PixelRatio, SegmentationMask};
use crate::vocab::{extract_qa_objects, extract_question_objects, MatchedPhrase, QaObjectSet, VocabularyTable};
use crate::vqa::{IqaTriplet, QuestionId};

/// How the QA-object side of the overlap score is formed when the question
/// mentions several categories present in the image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QaMaskMode {
    /// One mask over all instances of all mentioned categories.
    #[default]
    Union,
    /// Score each mentioned category separately and keep the maximum.
    PerCategoryMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// The largest target instance must cover less than this image fraction.
    pub area_threshold: f64,
    /// IV overlap must be strictly below this.
    pub iv_overlap_threshold: f64,
    /// CV overlap must be at most this.
    pub cv_overlap_threshold: f64,
    pub dilate_radius: u32,
    /// IV overlap must be exactly zero.
    pub strict_iv: bool,
    /// Dilate the QA-object (IV) or other-instance (CV) mask as well as the
    /// target mask.
    pub dilate_qa_mask: bool,
    pub qa_mask: QaMaskMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            area_threshold: 0.10,
            iv_overlap_threshold: 0.10,
            cv_overlap_threshold: 0.0,
            dilate_radius: 3,
            strict_iv: false,
            dilate_qa_mask: true,
            qa_mask: QaMaskMode::Union,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("area_threshold", self.area_threshold),
            ("iv_overlap_threshold", self.iv_overlap_threshold),
            ("cv_overlap_threshold", self.cv_overlap_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn iv_overlap_ok(&self, overlap: PixelRatio) -> bool {
        if self.strict_iv {
            overlap.is_zero()
        } else {
            overlap.value() < self.iv_overlap_threshold
        }
    }

    fn dilate_qa(&self, m: &SegmentationMask) -> SegmentationMask {
        if self.dilate_qa_mask {
            dilate(m, self.dilate_radius)
        } else {
            m.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditMode {
    Iv,
    Cv,
}

impl EditMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EditMode::Iv => "iv",
            EditMode::Cv => "cv",
        }
    }
}

impl std::fmt::Display for EditMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EditMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iv" => Ok(EditMode::Iv),
            "cv" => Ok(EditMode::Cv),
            other => Err(Error::Config(format!("unknown edit mode {other:?}"))),
        }
    }
}

/// One planned removal.
#[derive(Debug, Clone, PartialEq)]
pub struct EditRecord {
    pub edit_id: String,
    pub question_id: QuestionId,
    pub image_id: u64,
    pub mode: EditMode,
    pub target_category_id: CategoryId,
    pub target_category: String,
    pub removed_instance_ids: Vec<InstanceId>,
    /// Union of the removed instances, undilated.
    pub removal_mask: SegmentationMask,
    pub expected_answer: String,
    pub original_answer: String,
    pub question: String,
    pub question_type: String,
    pub overlap: PixelRatio,
    /// Area of the largest removed instance over the image area.
    pub area: PixelRatio,
    pub provenance: Vec<MatchedPhrase>,
}

/// Deterministic id: zero-padded question id, mode, category and instance
/// selector, so lexical order follows question order.
pub fn edit_id(question_id: QuestionId, mode: EditMode, category: CategoryId, instance: Option<InstanceId>) -> String {
    match instance {
        None => format!("q{question_id:012}-{mode}-c{category:03}-all"),
        Some(i) => format!("q{question_id:012}-{mode}-c{category:03}-i{i}"),
    }
}

/// Why a candidate or a whole triplet produced no record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Rejection {
    AreaTooLarge { category_id: CategoryId, instance_id: Option<InstanceId> },
    OverlapTooHigh { category_id: CategoryId, instance_id: Option<InstanceId> },
    /// The question names no category, or more than one.
    UnresolvedCategory { candidates: Vec<CategoryId> },
    CountMismatch { category_id: CategoryId, expected: u32, found: usize },
    ImageNotInCorpus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub records: Vec<EditRecord>,
    pub rejections: Vec<Rejection>,
}

/// Undilated masks of `ids`, or an error naming the image if any is missing.
fn masks_for<'a>(
    ids: &[InstanceId],
    masks: &'a BTreeMap<InstanceId, SegmentationMask>,
    image_id: u64,
) -> Result<Vec<&'a SegmentationMask>> {
    ids.iter()
        .map(|id| masks.get(id).ok_or(Error::MissingMasks { image_id }))
        .collect()
}

fn largest_area(masks: &[&SegmentationMask], image: &ImageRecord) -> PixelRatio {
    PixelRatio {
        numerator: masks.iter().map(|m| m.count()).max().unwrap_or(0),
        denominator: image.width as u64 * image.height as u64,
    }
}

/// IV candidates for one uniform triplet: one record per category in
/// `O_I - O_QA` whose largest instance is small enough and whose dilated
/// union overlaps the QA objects little enough.
pub fn select_iv(
    triplet: &IqaTriplet,
    image: &ImageRecord,
    objects: &ImageObjects,
    qa: &QaObjectSet,
    masks: &BTreeMap<InstanceId, SegmentationMask>,
    categories: &crate::coco::CategoryTable,
    config: &SelectionConfig,
) -> Result<Selection> {
    if !triplet.uniform {
        return Err(Error::Config(format!(
            "question {} has no uniform answer",
            triplet.question_id
        )));
    }
    let (w, h) = (image.width, image.height);
    let mentioned: BTreeSet<CategoryId> = objects.categories.intersection(&qa.categories).copied().collect();

    // Dilated QA-object masks, per category and unioned.
    let mut qa_per_category = Vec::new();
    for cat in &mentioned {
        let ms = masks_for(&objects.instances[cat], masks, image.id)?;
        qa_per_category.push(config.dilate_qa(&union_masks(ms, w, h)?));
    }
    let qa_union = union_masks(qa_per_category.iter(), w, h)?;

    let mut out = Selection::default();
    for &cat in objects.categories.difference(&qa.categories) {
        let ids = &objects.instances[&cat];
        let inst_masks = masks_for(ids, masks, image.id)?;
        let area = largest_area(&inst_masks, image);
        if area.value() >= config.area_threshold {
            out.rejections.push(Rejection::AreaTooLarge { category_id: cat, instance_id: None });
            continue;
        }
        let removal_mask = union_masks(inst_masks.iter().copied(), w, h)?;
        let target = dilate(&removal_mask, config.dilate_radius);
        let overlap = if mentioned.is_empty() {
            PixelRatio::ZERO
        } else {
            match config.qa_mask {
                QaMaskMode::Union => overlap_ratio(&target, &qa_union)?,
                QaMaskMode::PerCategoryMax => {
                    let mut best = PixelRatio::ZERO;
                    for m in &qa_per_category {
                        let r = overlap_ratio(&target, m)?;
                        if r.value() > best.value() {
                            best = r;
                        }
                    }
                    best
                }
            }
        };
        if !config.iv_overlap_ok(overlap) {
            out.rejections.push(Rejection::OverlapTooHigh { category_id: cat, instance_id: None });
            continue;
        }
        out.records.push(EditRecord {
            edit_id: edit_id(triplet.question_id, EditMode::Iv, cat, None),
            question_id: triplet.question_id,
            image_id: image.id,
            mode: EditMode::Iv,
            target_category_id: cat,
            target_category: categories.name(cat).unwrap_or_default().to_owned(),
            removed_instance_ids: ids.clone(),
            removal_mask,
            expected_answer: triplet.majority_answer.clone(),
            original_answer: triplet.majority_answer.clone(),
            question: triplet.question_text.clone(),
            question_type: triplet.question_type.clone(),
            overlap,
            area,
            provenance: qa.matched_phrases.clone(),
        });
    }
    Ok(out)
}

/// CV candidates for one uniform counting triplet.
///
/// `question_objects` is the vocabulary mapping of the question alone; it
/// must name exactly one category, whose instance count in the image must
/// equal the numeric answer. Each instance small enough and clear of the
/// other instances yields one record.
#[allow(clippy::too_many_arguments)]
pub fn select_cv(
    triplet: &IqaTriplet,
    image: &ImageRecord,
    objects: &ImageObjects,
    question_objects: &QaObjectSet,
    masks: &BTreeMap<InstanceId, SegmentationMask>,
    categories: &crate::coco::CategoryTable,
    config: &SelectionConfig,
) -> Result<Selection> {
    let n = match triplet.numeric_answer {
        Some(n) if triplet.uniform && triplet.counting => n,
        _ => {
            return Err(Error::Config(format!(
                "question {} is not a uniform counting question",
                triplet.question_id
            )))
        }
    };
    let mut out = Selection::default();
    if question_objects.categories.len() != 1 {
        out.rejections.push(Rejection::UnresolvedCategory {
            candidates: question_objects.categories.iter().copied().collect(),
        });
        return Ok(out);
    }
    let cat = *question_objects.categories.first().expect("one category");
    let ids: &[InstanceId] = objects.instances.get(&cat).map_or(&[], Vec::as_slice);
    if ids.len() != n as usize {
        out.rejections.push(Rejection::CountMismatch {
            category_id: cat,
            expected: n,
            found: ids.len(),
        });
        return Ok(out);
    }
    if n == 0 {
        // nothing to remove
        return Ok(out);
    }
    let (w, h) = (image.width, image.height);
    let inst_masks = masks_for(ids, masks, image.id)?;
    let expected = (n - 1).to_string();

    for (i, (&id, mask)) in ids.iter().zip(&inst_masks).enumerate() {
        let area = area_ratio(mask);
        if area.value() >= config.area_threshold {
            out.rejections.push(Rejection::AreaTooLarge { category_id: cat, instance_id: Some(id) });
            continue;
        }
        let others = union_masks(
            inst_masks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| *m),
            w,
            h,
        )?;
        let overlap = if others.is_empty() {
            PixelRatio::ZERO
        } else {
            overlap_ratio(&dilate(mask, config.dilate_radius), &config.dilate_qa(&others))?
        };
        if overlap.value() > config.cv_overlap_threshold {
            out.rejections.push(Rejection::OverlapTooHigh { category_id: cat, instance_id: Some(id) });
            continue;
        }
        out.records.push(EditRecord {
            edit_id: edit_id(triplet.question_id, EditMode::Cv, cat, Some(id)),
            question_id: triplet.question_id,
            image_id: image.id,
            mode: EditMode::Cv,
            target_category_id: cat,
            target_category: categories.name(cat).unwrap_or_default().to_owned(),
            removed_instance_ids: vec![id],
            removal_mask: (*mask).clone(),
            expected_answer: expected.clone(),
            original_answer: triplet.majority_answer.clone(),
            question: triplet.question_text.clone(),
            question_type: triplet.question_type.clone(),
            overlap,
            area,
            provenance: question_objects.matched_phrases.clone(),
        });
    }
    Ok(out)
}

/// Partition of the eligible triplets: `real` eligible triplets, `real_ne`
/// of them yielded no edit, `edit` records in total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub real: usize,
    pub real_ne: usize,
    pub edit: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSelection {
    pub mode: Option<EditMode>,
    /// Sorted by `edit_id`.
    pub records: Vec<EditRecord>,
    pub summary: PartitionSummary,
    /// Per question, the reasons candidates were dropped.
    pub rejections: BTreeMap<QuestionId, Vec<Rejection>>,
}

/// Runs selection over a whole corpus.
///
/// IV considers uniform triplets; CV considers uniform counting triplets.
/// Images are processed in parallel and instance masks are rasterized once
/// per image.
pub fn select_corpus(
    mode: EditMode,
    triplets: &[IqaTriplet],
    corpus: &CocoCorpus,
    index: &ImageObjectIndex,
    vocab: &VocabularyTable,
    config: &SelectionConfig,
) -> Result<CorpusSelection> {
    config.validate()?;
    let eligible: Vec<&IqaTriplet> = triplets
        .iter()
        .filter(|t| t.uniform && (mode == EditMode::Iv || t.counting))
        .collect();
    let mut by_image: BTreeMap<u64, Vec<&IqaTriplet>> = BTreeMap::new();
    for t in &eligible {
        by_image.entry(t.image_id).or_default().push(t);
    }

    type PerQuestion = (QuestionId, Selection);
    let per_image: Vec<Result<Vec<PerQuestion>>> = by_image
        .par_iter()
        .map(|(&image_id, ts)| {
            let (Some(image), Some(objects)) = (corpus.image(image_id), index.get(image_id)) else {
                return Ok(ts
                    .iter()
                    .map(|t| {
                        (
                            t.question_id,
                            Selection {
                                records: Vec::new(),
                                rejections: vec![Rejection::ImageNotInCorpus],
                            },
                        )
                    })
                    .collect());
            };
            let masks = corpus.instance_masks(image_id)?;
            ts.iter()
                .map(|t| {
                    let sel = match mode {
                        EditMode::Iv => {
                            let qa = extract_qa_objects(t.question_id, &t.question_text, &t.majority_answer, vocab);
                            select_iv(t, image, objects, &qa, &masks, &corpus.categories, config)?
                        }
                        EditMode::Cv => {
                            let q = extract_question_objects(t.question_id, &t.question_text, vocab);
                            select_cv(t, image, objects, &q, &masks, &corpus.categories, config)?
                        }
                    };
                    Ok((t.question_id, sel))
                })
                .collect()
        })
        .collect();

    let mut out = CorpusSelection {
        mode: Some(mode),
        ..Default::default()
    };
    out.summary.real = eligible.len();
    for group in per_image {
        for (qid, sel) in group? {
            if sel.records.is_empty() {
                out.summary.real_ne += 1;
            }
            if !sel.rejections.is_empty() {
                out.rejections.entry(qid).or_default().extend(sel.rejections);
            }
            out.records.extend(sel.records);
        }
    }
    out.records.sort_by(|a, b| a.edit_id.cmp(&b.edit_id));
    out.summary.edit = out.records.len();
    Ok(out)
}
