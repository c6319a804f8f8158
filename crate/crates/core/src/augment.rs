//! Fine-tuning subset plans and before/after comparisons.
//!
//! Nothing here trains a model. A plan lists the real question ids and edit
//! ids that a fine-tuning run should see; a [`RelativeSummary`] compares the
//! consistency reports of a baseline and an augmented model on the same
//! pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consistency::{ConsistencyReport, FlipCounts, Rate};
use crate::error::{Error, Result};
use crate::select::{EditMode, EditRecord};
use crate::text::tokenize;
use crate::vqa::{detect_counting, IqaTriplet, QuestionId};

/// Question-type subset chosen by leading words, or by the counting test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTypeFilter {
    pub name: String,
    #[serde(default)]
    pub prefixes: Vec<String>,
    #[serde(default)]
    pub counting: bool,
}

impl QuestionTypeFilter {
    pub fn prefix(phrase: &str) -> Self {
        QuestionTypeFilter {
            name: phrase.to_owned(),
            prefixes: vec![phrase.to_owned()],
            counting: false,
        }
    }

    pub fn counting() -> Self {
        QuestionTypeFilter {
            name: "counting".into(),
            prefixes: Vec::new(),
            counting: true,
        }
    }

    /// Prefixes match whole tokens of the normalized question, so
    /// "is there a" does not match "is there any".
    ///
    /// ```
    /// use cvf_core::augment::QuestionTypeFilter;
    /// use cvf_core::vqa::IqaTriplet;
    /// let t = IqaTriplet::new(1, 1, "What color is the mouse?", "what color is the", &["grey".to_string()]);
    /// assert!(QuestionTypeFilter::prefix("what color is the").matches(&t));
    /// assert!(!QuestionTypeFilter::prefix("what color").matches(&IqaTriplet::new(
    ///     2, 1, "What colors are visible?", "what", &["red".to_string()])));
    /// ```
    pub fn matches(&self, triplet: &IqaTriplet) -> bool {
        if self.counting {
            return detect_counting(&triplet.question_text, &triplet.majority_answer);
        }
        let tokens = tokenize(&triplet.question_text);
        self.prefixes.iter().any(|p| {
            let want = tokenize(p);
            !want.is_empty() && tokens.starts_with(&want)
        })
    }
}

/// The four prefix splits used for targeted fine-tuning plus counting.
pub fn default_filters() -> Vec<QuestionTypeFilter> {
    let mut v: Vec<QuestionTypeFilter> = ["what color is the", "is there a", "is this a", "how many"]
        .into_iter()
        .map(QuestionTypeFilter::prefix)
        .collect();
    v.push(QuestionTypeFilter::counting());
    v
}

/// Triplets matched by any filter, in input order. No filters, no triplets.
pub fn filter_question_type(triplets: &[IqaTriplet], filters: &[QuestionTypeFilter]) -> Vec<IqaTriplet> {
    triplets
        .iter()
        .filter(|t| filters.iter().any(|f| f.matches(t)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Composition {
    #[serde(rename = "real")]
    Real,
    #[serde(rename = "real+iv")]
    RealIv,
    #[serde(rename = "real+cv")]
    RealCv,
    #[serde(rename = "real+cv+iv")]
    RealCvIv,
}

impl Composition {
    pub const ALL: [Composition; 4] = [
        Composition::Real,
        Composition::RealIv,
        Composition::RealCv,
        Composition::RealCvIv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Composition::Real => "real",
            Composition::RealIv => "real+iv",
            Composition::RealCv => "real+cv",
            Composition::RealCvIv => "real+cv+iv",
        }
    }

    pub fn includes(self, mode: EditMode) -> bool {
        matches!(
            (self, mode),
            (Composition::RealIv | Composition::RealCvIv, EditMode::Iv)
                | (Composition::RealCv | Composition::RealCvIv, EditMode::Cv)
        )
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "+");
        Composition::ALL
            .into_iter()
            .find(|c| c.as_str() == norm || (norm == "real+iv+cv" && *c == Composition::RealCvIv))
            .ok_or_else(|| Error::Config(format!("unknown composition {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationManifest {
    pub name: String,
    pub composition: Composition,
    pub strict: bool,
    /// Sorted, unique.
    pub question_ids: Vec<QuestionId>,
    /// Sorted, unique.
    pub edit_ids: Vec<String>,
    /// Edits of an included mode left out because their overlap was nonzero.
    pub dropped_by_strict: usize,
}

/// Edits whose question lies in `subset`.
pub fn edits_for_subset(subset: &[IqaTriplet], edits: &[EditRecord]) -> Vec<EditRecord> {
    let ids: BTreeSet<QuestionId> = subset.iter().map(|t| t.question_id).collect();
    edits
        .iter()
        .filter(|e| ids.contains(&e.question_id))
        .cloned()
        .collect()
}

/// Assembles a plan from a real subset and the edits of the modes that
/// `composition` includes. Every supplied edit must belong to a question in
/// the subset. With `strict`, edits whose overlap is nonzero are left out.
pub fn build_manifest(
    name: &str,
    subset: &[IqaTriplet],
    edits: &[EditRecord],
    composition: Composition,
    strict: bool,
) -> Result<AugmentationManifest> {
    let question_ids: BTreeSet<QuestionId> = subset.iter().map(|t| t.question_id).collect();
    let mut dangling: Vec<String> = edits
        .iter()
        .filter(|e| !question_ids.contains(&e.question_id))
        .map(|e| e.edit_id.clone())
        .collect();
    if !dangling.is_empty() {
        dangling.sort();
        dangling.dedup();
        return Err(Error::DanglingEdit { edit_ids: dangling });
    }
    let mut edit_ids = BTreeSet::new();
    let mut dropped = 0;
    for e in edits.iter().filter(|e| composition.includes(e.mode)) {
        if strict && !e.overlap.is_zero() {
            dropped += 1;
        } else {
            edit_ids.insert(e.edit_id.clone());
        }
    }
    Ok(AugmentationManifest {
        name: name.to_owned(),
        composition,
        strict,
        question_ids: question_ids.into_iter().collect(),
        edit_ids: edit_ids.into_iter().collect(),
        dropped_by_strict: dropped,
    })
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PlanLine<'a> {
    Header {
        name: &'a str,
        composition: Composition,
        strict: bool,
        real: usize,
        edits: usize,
        dropped_by_strict: usize,
    },
    Real {
        question_id: QuestionId,
    },
    Edit {
        edit_id: &'a str,
    },
}

impl AugmentationManifest {
    /// A header line, then one line per real question, then one per edit.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |line: &PlanLine| -> Result<()> {
            let s = serde_json::to_string(line).expect("plan line serializes");
            writeln!(w, "{s}").map_err(|e| Error::io(path, e))
        };
        put(&PlanLine::Header {
            name: &self.name,
            composition: self.composition,
            strict: self.strict,
            real: self.question_ids.len(),
            edits: self.edit_ids.len(),
            dropped_by_strict: self.dropped_by_strict,
        })?;
        for &question_id in &self.question_ids {
            put(&PlanLine::Real { question_id })?;
        }
        for edit_id in &self.edit_ids {
            put(&PlanLine::Edit { edit_id })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} [{}{}]: {} real, {} edits, {} dropped by strict overlap",
            self.name,
            self.composition,
            if self.strict { ", strict" } else { "" },
            self.question_ids.len(),
            self.edit_ids.len(),
            self.dropped_by_strict
        )
    }
}

/// `(base - aug) / base`, or `None` when the baseline never flipped.
///
/// ```
/// let r = cvf_core::augment::relative_reduction(83.84, 50.74).unwrap();
/// assert!((r - 0.3948).abs() < 1e-4);
/// assert_eq!(cvf_core::augment::relative_reduction(0.0, 3.0), None);
/// ```
pub fn relative_reduction(base_flip_pct: f64, aug_flip_pct: f64) -> Option<f64> {
    (base_flip_pct > 0.0).then(|| (base_flip_pct - aug_flip_pct) / base_flip_pct)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeRow {
    pub flips_base: f64,
    pub flips_aug: f64,
    /// `None` when the baseline had no flips.
    pub flip_reduction_relative: Option<f64>,
    pub accuracy_base: f64,
    pub accuracy_aug: f64,
    /// Percentage points, augmented minus baseline.
    pub accuracy_delta: f64,
}

impl RelativeRow {
    fn new(base_flips: &FlipCounts, aug_flips: &FlipCounts, base_acc: &Rate, aug_acc: &Rate) -> Self {
        let flips_base = base_flips.percentages().flipped;
        let flips_aug = aug_flips.percentages().flipped;
        RelativeRow {
            flips_base,
            flips_aug,
            flip_reduction_relative: relative_reduction(flips_base, flips_aug),
            accuracy_base: base_acc.percent(),
            accuracy_aug: aug_acc.percent(),
            accuracy_delta: aug_acc.percent() - base_acc.percent(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeSummary {
    pub base_model: String,
    pub aug_model: String,
    pub mode: EditMode,
    pub pair_set_digest: String,
    pub overall: RelativeRow,
    pub per_question_type: BTreeMap<String, RelativeRow>,
}

/// Compares two reports scored over the same pairs.
pub fn relative_summary(base: &ConsistencyReport, aug: &ConsistencyReport) -> Result<RelativeSummary> {
    if base.mode != aug.mode || base.pair_set_digest != aug.pair_set_digest {
        return Err(Error::PairUniverseMismatch);
    }
    let types: BTreeSet<&String> = base
        .per_question_type
        .keys()
        .chain(aug.per_question_type.keys())
        .collect();
    let mut per_question_type = BTreeMap::new();
    for t in types {
        let b = base.per_question_type.get(t).cloned().unwrap_or_default();
        let a = aug.per_question_type.get(t).cloned().unwrap_or_default();
        per_question_type.insert(t.clone(), RelativeRow::new(&b.flips, &a.flips, &b.accuracy, &a.accuracy));
    }
    Ok(RelativeSummary {
        base_model: base.model_name.clone(),
        aug_model: aug.model_name.clone(),
        mode: base.mode,
        pair_set_digest: base.pair_set_digest.clone(),
        overall: RelativeRow::new(&base.flips, &aug.flips, &base.accuracy_orig, &aug.accuracy_orig),
        per_question_type,
    })
}

impl RelativeSummary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} -> {} ({} pairs)\n{:<24}{:>10}{:>10}{:>12}{:>10}{:>10}{:>10}\n",
            self.base_model,
            self.aug_model,
            self.mode,
            "",
            "flip base",
            "flip aug",
            "reduction",
            "acc base",
            "acc aug",
            "delta"
        );
        let mut row = |name: &str, r: &RelativeRow| {
            let reduction = match r.flip_reduction_relative {
                Some(x) => format!("{:.2}%", 100.0 * x),
                None => "undefined".into(),
            };
            let _ = writeln!(
                out,
                "{:<24}{:>10.2}{:>10.2}{:>12}{:>10.2}{:>10.2}{:>+10.2}",
                name, r.flips_base, r.flips_aug, reduction, r.accuracy_base, r.accuracy_aug, r.accuracy_delta
            );
        };
        row("overall", &self.overall);
        for (t, r) in &self.per_question_type {
            row(t, r);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{PixelRatio, SegmentationMask};

    fn triplet(qid: QuestionId, q: &str, a: &str) -> IqaTriplet {
        IqaTriplet::new(qid, 1, q, "", &vec![a.to_string(); 10])
    }

    fn edit(qid: QuestionId, mode: EditMode, cat: u64, overlap: u64) -> EditRecord {
        EditRecord {
            edit_id: crate::select::edit_id(qid, mode, cat, None),
            question_id: qid,
            image_id: 1,
            mode,
            target_category_id: cat,
            target_category: "x".into(),
            removed_instance_ids: vec![1],
            removal_mask: SegmentationMask::empty(2, 2),
            expected_answer: "a".into(),
            original_answer: "a".into(),
            question: String::new(),
            question_type: String::new(),
            overlap: PixelRatio { numerator: overlap, denominator: 10 },
            area: PixelRatio { numerator: 1, denominator: 100 },
            provenance: vec![],
        }
    }

    #[test]
    fn prefix_filters() {
        let ts = vec![
            triplet(1, "What color is the mouse?", "grey"),
            triplet(2, "Is there a bowl on the table?", "yes"),
            triplet(3, "Is there any milk?", "no"),
            triplet(4, "What is the number of cats?", "2"),
        ];
        let got: Vec<_> = filter_question_type(&ts, &default_filters()).iter().map(|t| t.question_id).collect();
        assert_eq!(got, vec![1, 2, 4]);
        assert!(filter_question_type(&ts, &[]).is_empty());
    }

    #[test]
    fn compositions_and_strictness() {
        let ts = vec![triplet(1, "q", "a"), triplet(2, "q", "a")];
        let es = vec![edit(1, EditMode::Iv, 3, 0), edit(1, EditMode::Iv, 4, 2), edit(2, EditMode::Cv, 5, 0)];
        let real = build_manifest("r", &ts, &es, Composition::Real, false).unwrap();
        assert!(real.edit_ids.is_empty());
        assert_eq!(real.question_ids, vec![1, 2]);
        let all = build_manifest("a", &ts, &es, Composition::RealCvIv, false).unwrap();
        assert_eq!(all.edit_ids.len(), 3);
        let strict = build_manifest("s", &ts, &es, Composition::RealCvIv, true).unwrap();
        assert_eq!(strict.edit_ids.len(), 2);
        assert_eq!(strict.dropped_by_strict, 1);
        let err = build_manifest("d", &ts[..1], &es, Composition::RealIv, false).unwrap_err();
        assert!(matches!(err, Error::DanglingEdit { ref edit_ids } if edit_ids.len() == 1));
        assert_eq!(edits_for_subset(&ts[..1], &es).len(), 2);
    }

    #[test]
    fn composition_names_round_trip() {
        for c in Composition::ALL {
            assert_eq!(c.as_str().parse::<Composition>().unwrap(), c);
        }
        assert_eq!("real+iv+cv".parse::<Composition>().unwrap(), Composition::RealCvIv);
        assert!("synthetic".parse::<Composition>().is_err());
    }
}
