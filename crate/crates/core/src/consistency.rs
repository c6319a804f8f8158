//! Accuracy and prediction-flip reports over original and edited records.
//!
//! For an IV edit the expected answer is unchanged, so a pair is consistent
//! when the two predictions agree. For a CV edit the edited prediction must
//! be one less than the original prediction. Inconsistent pairs are split by
//! the correctness of each side:
//!
//! | original correct | edited correct | outcome      |
//! |------------------|----------------|--------------|
//! | yes              | no             | `pos_to_neg` |
//! | no               | yes            | `neg_to_pos` |
//! | no               | no             | `neg_to_neg` |

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::select::{EditMode, EditRecord};
use crate::text::{normalize_answer, parse_count};
use crate::vqa::{IqaTriplet, QuestionId};

/// Size of the answer vocabulary of the models studied.
pub const DEFAULT_ANSWER_VOCAB_SIZE: u32 = 3000;

/// Number of 1%-wide area bins reported, covering (0%, 10%].
pub const AREA_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipOutcome {
    Consistent,
    PosToNeg,
    NegToPos,
    NegToNeg,
}

impl FlipOutcome {
    pub fn is_flip(self) -> bool {
        self != FlipOutcome::Consistent
    }
}

fn split_flip(orig_correct: bool, edit_correct: bool) -> FlipOutcome {
    match (orig_correct, edit_correct) {
        (true, _) => FlipOutcome::PosToNeg,
        (false, true) => FlipOutcome::NegToPos,
        (false, false) => FlipOutcome::NegToNeg,
    }
}

/// Classifies an invariant-edit pair against the (unchanged) ground truth.
///
/// ```
/// use cvf_core::consistency::{classify_iv, FlipOutcome};
/// assert_eq!(classify_iv("no", "no", "no"), FlipOutcome::Consistent);
/// assert_eq!(classify_iv("2", "1", "2"), FlipOutcome::PosToNeg);
/// assert_eq!(classify_iv("pink", "red", "red"), FlipOutcome::NegToPos);
/// ```
pub fn classify_iv(orig_pred: &str, edit_pred: &str, ground_truth: &str) -> FlipOutcome {
    let (o, e, gt) = (normalize_answer(orig_pred), normalize_answer(edit_pred), normalize_answer(ground_truth));
    if o == e {
        FlipOutcome::Consistent
    } else {
        split_flip(o == gt, e == gt)
    }
}

/// Classifies a covariant-edit pair where the original image holds
/// `ground_truth_n` instances. Predictions that do not parse as counts are
/// wrong and never consistent.
///
/// ```
/// use cvf_core::consistency::{classify_cv, FlipOutcome};
/// assert_eq!(classify_cv("2", "1", 2), FlipOutcome::Consistent);
/// assert_eq!(classify_cv("1", "1", 1), FlipOutcome::PosToNeg);
/// assert_eq!(classify_cv("1", "2", 3), FlipOutcome::NegToPos);
/// ```
pub fn classify_cv(orig_pred: &str, edit_pred: &str, ground_truth_n: u32) -> FlipOutcome {
    let (o, e) = (parse_count(orig_pred), parse_count(edit_pred));
    if let (Some(o), Some(e)) = (o, e) {
        if e + 1 == o {
            return FlipOutcome::Consistent;
        }
    }
    let edit_truth = ground_truth_n.checked_sub(1);
    split_flip(o == Some(ground_truth_n), e.is_some() && e == edit_truth)
}

/// Chance rate, in percent, of an edit turning a wrong answer into the right
/// one if predictions were perturbed uniformly over the answer vocabulary.
///
/// ```
/// let p = cvf_core::consistency::random_flip_baseline(3000, 0.398);
/// assert!((p - 0.013266).abs() < 1e-6);
/// ```
pub fn random_flip_baseline(answer_vocab_size: u32, orig_error_rate: f64) -> f64 {
    100.0 * orig_error_rate / answer_vocab_size.max(1) as f64
}

/// Model predictions keyed by record id: question ids for originals,
/// edit ids for edited records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub model_name: String,
    pub entries: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RecordId {
    Int(u64),
    Str(String),
}

#[derive(Deserialize)]
struct PredictionLine {
    id: RecordId,
    answer: String,
}

impl PredictionSet {
    pub fn new(model_name: impl Into<String>) -> Self {
        PredictionSet {
            model_name: model_name.into(),
            entries: BTreeMap::new(),
        }
    }

    /// Inserts a normalized answer; returns `false` if the id was present.
    pub fn insert(&mut self, id: impl Into<String>, answer: &str) -> bool {
        self.entries.insert(id.into(), normalize_answer(answer)).is_none()
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads `{"id": ..., "answer": ...}` lines. Ids may be integers or
    /// strings; duplicates are an error.
    pub fn load(path: impl AsRef<Path>, model_name: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut set = PredictionSet::new(model_name);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let p: PredictionLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let id = match p.id {
                RecordId::Int(n) => n.to_string(),
                RecordId::Str(s) => s,
            };
            if !set.insert(id.clone(), &p.answer) {
                return Err(err(format!("duplicate prediction id {id:?}")));
            }
        }
        Ok(set)
    }
}

/// Counts of pair outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipCounts {
    pub n_pairs: u64,
    pub consistent: u64,
    pub pos_to_neg: u64,
    pub neg_to_pos: u64,
    pub neg_to_neg: u64,
}

impl FlipCounts {
    pub fn add(&mut self, outcome: FlipOutcome) {
        self.n_pairs += 1;
        match outcome {
            FlipOutcome::Consistent => self.consistent += 1,
            FlipOutcome::PosToNeg => self.pos_to_neg += 1,
            FlipOutcome::NegToPos => self.neg_to_pos += 1,
            FlipOutcome::NegToNeg => self.neg_to_neg += 1,
        }
    }

    pub fn flipped(&self) -> u64 {
        self.pos_to_neg + self.neg_to_pos + self.neg_to_neg
    }

    pub fn percentages(&self) -> FlipPercentages {
        FlipPercentages {
            flipped: percent(self.flipped(), self.n_pairs),
            pos_to_neg: percent(self.pos_to_neg, self.n_pairs),
            neg_to_pos: percent(self.neg_to_pos, self.n_pairs),
            neg_to_neg: percent(self.neg_to_neg, self.n_pairs),
        }
    }
}

/// Unrounded percentages of `n_pairs`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlipPercentages {
    pub flipped: f64,
    pub pos_to_neg: f64,
    pub neg_to_pos: f64,
    pub neg_to_neg: f64,
}

/// `count / total` with both sides kept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub count: u64,
    pub total: u64,
}

impl Rate {
    pub fn percent(&self) -> f64 {
        percent(self.count, self.total)
    }
}

fn percent(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionTypeStats {
    pub accuracy: Rate,
    pub flips: FlipCounts,
}

/// Flip counts for edits whose removed area lies in `(lower_pct, upper_pct]`
/// percent of the image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaBin {
    pub lower_pct: u32,
    pub upper_pct: u32,
    pub flips: FlipCounts,
}

/// One scored (original, edit) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub edit_id: String,
    pub question_id: QuestionId,
    pub question_type: String,
    pub outcome: FlipOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub model_name: String,
    pub mode: EditMode,
    /// Exact-match accuracy on the original uniform triplets.
    pub accuracy_orig: Rate,
    /// Original triplets skipped for lack of a prediction.
    pub originals_missing: u64,
    pub flips: FlipCounts,
    pub percentages: FlipPercentages,
    /// Manifest pairs skipped because a prediction was missing on either side.
    pub pairs_missing: u64,
    /// CV predictions (either side) that did not parse as a count.
    pub non_numeric_predictions: u64,
    pub per_question_type: BTreeMap<String, QuestionTypeStats>,
    pub per_area_bin: Vec<AreaBin>,
    /// Pairs whose area fell outside the binned range.
    pub unbinned_pairs: u64,
    pub answer_vocab_size: u32,
    /// Chance neg→pos rate in percent.
    pub random_baseline: f64,
    /// SHA-256 over the sorted edit ids that were scored.
    pub pair_set_digest: String,
    #[serde(skip)]
    pub pairs: Vec<PairOutcome>,
}

/// Options that do not change which pairs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    pub answer_vocab_size: u32,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            answer_vocab_size: DEFAULT_ANSWER_VOCAB_SIZE,
        }
    }
}

/// Index into [`ConsistencyReport::per_area_bin`] for an exact pixel ratio,
/// or `None` outside (0%, 10%].
pub fn area_bin(numerator: u64, denominator: u64) -> Option<usize> {
    if numerator == 0 || denominator == 0 {
        return None;
    }
    // ceil(100 * n / d) - 1, in integers
    let k = (100 * numerator).div_ceil(denominator) - 1;
    (k < AREA_BINS as u64).then_some(k as usize)
}

/// Scores every manifest record of `mode` against the two prediction sets.
///
/// Accuracy is computed over the uniform triplets (uniform counting triplets
/// in CV mode). Pairs missing a prediction are excluded from every
/// percentage and counted in `pairs_missing`.
pub fn compute_report(
    orig_preds: &PredictionSet,
    edit_preds: &PredictionSet,
    manifest: &[EditRecord],
    triplets: &[IqaTriplet],
    mode: EditMode,
    options: ReportOptions,
) -> Result<ConsistencyReport> {
    let mut per_type: BTreeMap<String, QuestionTypeStats> = BTreeMap::new();
    let mut accuracy = Rate::default();
    let mut originals_missing = 0;
    let mut non_numeric = 0;
    for t in triplets
        .iter()
        .filter(|t| t.uniform && (mode == EditMode::Iv || t.counting))
    {
        let Some(pred) = orig_preds.get(&t.question_id.to_string()) else {
            originals_missing += 1;
            continue;
        };
        let correct = normalize_answer(pred) == t.majority_answer;
        let stats = per_type.entry(t.question_type.clone()).or_default();
        for rate in [&mut accuracy, &mut stats.accuracy] {
            rate.total += 1;
            rate.count += correct as u64;
        }
    }

    let question_type: HashMap<QuestionId, &str> = triplets
        .iter()
        .map(|t| (t.question_id, t.question_type.as_str()))
        .collect();

    let mut flips = FlipCounts::default();
    let mut bins: Vec<AreaBin> = (0..AREA_BINS as u32)
        .map(|k| AreaBin {
            lower_pct: k,
            upper_pct: k + 1,
            flips: FlipCounts::default(),
        })
        .collect();
    let mut unbinned = 0;
    let mut pairs_missing = 0;
    let mut pairs = Vec::new();
    for r in manifest.iter().filter(|r| r.mode == mode) {
        let (Some(o), Some(e)) = (orig_preds.get(&r.question_id.to_string()), edit_preds.get(&r.edit_id)) else {
            pairs_missing += 1;
            continue;
        };
        let outcome = match mode {
            EditMode::Iv => classify_iv(o, e, &r.original_answer),
            EditMode::Cv => {
                let n = parse_count(&r.original_answer).ok_or_else(|| {
                    Error::Config(format!("edit {} has non-numeric original answer", r.edit_id))
                })?;
                non_numeric += parse_count(o).is_none() as u64 + parse_count(e).is_none() as u64;
                classify_cv(o, e, n)
            }
        };
        flips.add(outcome);
        let qtype = question_type
            .get(&r.question_id)
            .copied()
            .unwrap_or(r.question_type.as_str())
            .to_owned();
        per_type.entry(qtype.clone()).or_default().flips.add(outcome);
        match area_bin(r.area.numerator, r.area.denominator) {
            Some(k) => bins[k].flips.add(outcome),
            None => unbinned += 1,
        }
        pairs.push(PairOutcome {
            edit_id: r.edit_id.clone(),
            question_id: r.question_id,
            question_type: qtype,
            outcome,
        });
    }
    if flips.n_pairs == 0 {
        return Err(Error::EmptyPairSet);
    }
    pairs.sort_by(|a, b| a.edit_id.cmp(&b.edit_id));

    let mut hasher = Sha256::new();
    for p in &pairs {
        hasher.update(p.edit_id.as_bytes());
        hasher.update(b"\n");
    }
    let error_rate = 1.0 - accuracy.percent() / 100.0;
    Ok(ConsistencyReport {
        model_name: orig_preds.model_name.clone(),
        mode,
        accuracy_orig: accuracy,
        originals_missing,
        flips,
        percentages: flips.percentages(),
        pairs_missing,
        non_numeric_predictions: non_numeric,
        per_question_type: per_type,
        per_area_bin: bins,
        unbinned_pairs: unbinned,
        answer_vocab_size: options.answer_vocab_size,
        random_baseline: random_flip_baseline(options.answer_vocab_size, error_rate),
        pair_set_digest: hex::encode(hasher.finalize()),
        pairs,
    })
}

/// Renders reports side by side, one column per model, two decimals.
pub fn render_table(reports: &[ConsistencyReport]) -> String {
    let mut out = String::new();
    let label_width = 22;
    let _ = write!(out, "{:label_width$}", "");
    for r in reports {
        let _ = write!(out, "{:>12}", format!("{} (%)", r.model_name));
    }
    out.push('\n');
    type Column = fn(&ConsistencyReport) -> f64;
    let rows: [(&str, Column); 5] = [
        ("Accuracy orig", |r| r.accuracy_orig.percent()),
        ("Predictions flipped", |r| r.percentages.flipped),
        ("pos->neg", |r| r.percentages.pos_to_neg),
        ("neg->pos", |r| r.percentages.neg_to_pos),
        ("neg->neg", |r| r.percentages.neg_to_neg),
    ];
    for (label, value) in rows {
        let _ = write!(out, "{label:label_width$}");
        for r in reports {
            let _ = write!(out, "{:>12.2}", value(r));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:label_width$}", "Random neg->pos");
    for r in reports {
        let _ = write!(out, "{:>12.4}", r.random_baseline);
    }
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "coverage [{}]: {} pairs scored, {} pairs missing a prediction, {} originals missing, {} non-numeric predictions",
            r.model_name, r.flips.n_pairs, r.pairs_missing, r.originals_missing, r.non_numeric_predictions
        );
    }
    out
}
