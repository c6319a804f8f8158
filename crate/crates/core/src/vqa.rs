//! VQA question/annotation ingestion, uniform-answer and counting flags, and
//! the image-level validation split.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coco::ImageId;
use crate::error::{parse_error, Error, Result};
use crate::text::{normalize_answer, parse_count, tokenize};

pub type QuestionId = u64;

/// Answers per question in VQA v2.
pub const DEFAULT_ANSWERS_PER_QUESTION: usize = 10;

/// One image-question-answer record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IqaTriplet {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    pub question_text: String,
    /// Normalized answers.
    pub answers: Vec<String>,
    pub question_type: String,
    pub majority_answer: String,
    pub uniform: bool,
    pub counting: bool,
    pub numeric_answer: Option<u32>,
}

impl IqaTriplet {
    /// Derives the majority answer and flags from raw answers.
    pub fn new(
        question_id: QuestionId,
        image_id: ImageId,
        question_text: impl Into<String>,
        question_type: impl Into<String>,
        raw_answers: &[String],
    ) -> Self {
        let question_text = question_text.into();
        let answers: Vec<String> = raw_answers.iter().map(|a| normalize_answer(a)).collect();
        let majority_answer = majority(&answers);
        let uniform = !answers.is_empty() && answers.iter().all(|a| *a == answers[0]);
        let numeric_answer = parse_count(&majority_answer);
        let counting = detect_counting(&question_text, &majority_answer);
        IqaTriplet {
            question_id,
            image_id,
            question_text,
            answers,
            question_type: question_type.into(),
            majority_answer,
            uniform,
            counting,
            numeric_answer,
        }
    }
}

/// Most frequent answer; ties go to the lexicographically smallest.
fn majority(answers: &[String]) -> String {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers {
        *freq.entry(a).or_default() += 1;
    }
    // BTreeMap iterates in ascending order, so the first maximum wins ties.
    let mut best: Option<(&str, usize)> = None;
    for (a, n) in freq {
        if best.map_or(true, |(_, m)| n > m) {
            best = Some((a, n));
        }
    }
    best.map(|(a, _)| a.to_owned()).unwrap_or_default()
}

/// `true` when the question carries a counting cue (the token `many` or the
/// phrase `number of`) and the answer parses as a count.
///
/// ```
/// use cvf_core::vqa::detect_counting;
/// assert!(detect_counting("How many dogs are there?", "1"));
/// assert!(detect_counting("What is the number of wheels?", "4"));
/// assert!(!detect_counting("Is there a cat?", "no"));
/// assert!(!detect_counting("How many dogs are there?", "lots"));
/// ```
pub fn detect_counting(question_text: &str, majority_answer: &str) -> bool {
    has_counting_cue(&tokenize(question_text)) && parse_count(majority_answer).is_some()
}

pub(crate) fn has_counting_cue(tokens: &[String]) -> bool {
    tokens.iter().any(|t| t == "many")
        || tokens
            .windows(2)
            .any(|w| w[0] == "number" && w[1] == "of")
}

/// Keeps the triplets whose answers all agree, in input order.
pub fn filter_uniform(triplets: &[IqaTriplet]) -> Vec<IqaTriplet> {
    triplets.iter().filter(|t| t.uniform).cloned().collect()
}

#[derive(Deserialize)]
struct QuestionsFile {
    questions: Vec<QuestionEntry>,
}

#[derive(Deserialize)]
struct QuestionEntry {
    question_id: QuestionId,
    image_id: ImageId,
    question: String,
}

#[derive(Deserialize)]
struct AnnotationsFile {
    annotations: Vec<AnnotationEntry>,
}

#[derive(Deserialize)]
struct AnnotationEntry {
    question_id: QuestionId,
    #[serde(default)]
    question_type: String,
    answers: Vec<AnswerEntry>,
}

/// VQA v2 stores answers as objects; bare strings are accepted too.
#[derive(Deserialize)]
#[serde(untagged)]
enum AnswerEntry {
    Plain(String),
    Object { answer: String },
}

impl AnswerEntry {
    fn into_string(self) -> String {
        match self {
            AnswerEntry::Plain(s) | AnswerEntry::Object { answer: s } => s,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| parse_error(path, &text, e))
}

/// Joins a questions file with its annotations file.
///
/// Every question needs an annotation record with exactly
/// `answers_per_question` answers.
pub fn load_questions_and_answers(
    questions_path: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
    answers_per_question: usize,
) -> Result<Vec<IqaTriplet>> {
    let questions: QuestionsFile = read_json(questions_path.as_ref())?;
    let annotations: AnnotationsFile = read_json(annotations_path.as_ref())?;
    let mut by_qid: HashMap<QuestionId, AnnotationEntry> = annotations
        .annotations
        .into_iter()
        .map(|a| (a.question_id, a))
        .collect();

    let missing: Vec<QuestionId> = questions
        .questions
        .iter()
        .filter(|q| !by_qid.contains_key(&q.question_id))
        .map(|q| q.question_id)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAnnotations {
            question_ids: missing,
        });
    }

    let mut out = Vec::with_capacity(questions.questions.len());
    for q in questions.questions {
        let ann = by_qid.remove(&q.question_id).ok_or(Error::MissingAnnotations {
            question_ids: vec![q.question_id],
        })?;
        if ann.answers.len() != answers_per_question {
            return Err(Error::AnswerCount {
                question_id: q.question_id,
                expected: answers_per_question,
                actual: ann.answers.len(),
            });
        }
        let answers: Vec<String> = ann.answers.into_iter().map(AnswerEntry::into_string).collect();
        out.push(IqaTriplet::new(
            q.question_id,
            q.image_id,
            q.question,
            normalize_answer(&ann.question_type),
            &answers,
        ));
    }
    out.sort_by_key(|t| t.question_id);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

/// Named subset of question ids, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub name: SplitName,
    pub question_ids: Vec<QuestionId>,
}

/// Splits triplets into `(test, val)` by image.
///
/// Images are ranked by a seeded 64-bit mix of their id and the first
/// `round(ratio * images)` go to the test side, so every triplet of an image
/// lands on the same side and an image's rank depends only on its id and the
/// seed.
pub fn split_val(
    triplets: &[IqaTriplet],
    ratio: f64,
    seed: u64,
) -> Result<(CorpusSplit, CorpusSplit)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} must be in (0, 1)")));
    }
    let mut images: Vec<ImageId> = triplets.iter().map(|t| t.image_id).collect();
    images.sort_unstable();
    images.dedup();
    images.sort_by_key(|&id| (split_rank(id, seed), id));
    let n_test = (ratio * images.len() as f64).round() as usize;
    let test_images: std::collections::HashSet<ImageId> =
        images[..n_test].iter().copied().collect();

    let (mut test, mut val) = (Vec::new(), Vec::new());
    for t in triplets {
        if test_images.contains(&t.image_id) {
            test.push(t.question_id);
        } else {
            val.push(t.question_id);
        }
    }
    test.sort_unstable();
    val.sort_unstable();
    Ok((
        CorpusSplit {
            name: SplitName::Test,
            question_ids: test,
        },
        CorpusSplit {
            name: SplitName::Val,
            question_ids: val,
        },
    ))
}

// splitmix64 finalizer over (image id, seed)
fn split_rank(image_id: ImageId, seed: u64) -> u64 {
    let mut z = image_id
        .wrapping_add(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
