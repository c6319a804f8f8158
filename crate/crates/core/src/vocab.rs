//! Mapping of question/answer wording onto object categories.
//!
//! A vocabulary file lists one category per line as
//! `canonical name: synonym, synonym, ...`. Every category of the category
//! table is also matched by its own canonical name. Matching is greedy
//! left-to-right, trying the longest phrase first at each position, so the
//! tokens of a matched multi-word phrase cannot start another match.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coco::{CategoryId, CategoryTable};
use crate::error::{Error, Result};
use crate::text::tokenize;
use crate::vqa::QuestionId;

/// The vocabulary shipped with the crate: the canonical category names plus
/// the published example synonym rows.
pub const DEFAULT_VOCABULARY: &str = include_str!("../data/default_vocab.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabRule {
    pub phrase: Vec<String>,
    pub category_id: CategoryId,
}

/// Phrase-to-category rules, longest phrase first.
#[derive(Debug, Clone)]
pub struct VocabularyTable {
    rules: Vec<VocabRule>,
    lookup: HashMap<Vec<String>, CategoryId>,
    max_len: usize,
    source: PathBuf,
}

impl VocabularyTable {
    /// Canonical names of `categories` only.
    pub fn canonical(categories: &CategoryTable) -> Self {
        let mut table = VocabularyTable {
            rules: Vec::new(),
            lookup: HashMap::new(),
            max_len: 0,
            source: PathBuf::new(),
        };
        for c in categories.entries() {
            table
                .insert(tokenize(&c.name), c.id)
                .expect("category names are unique");
        }
        table.sort();
        table
    }

    /// Parses vocabulary text. `source` labels errors and is kept for audit.
    pub fn parse(text: &str, source: impl Into<PathBuf>, categories: &CategoryTable) -> Result<Self> {
        Self::parse_inner(text, source.into(), categories, false)
    }

    fn parse_inner(text: &str, source: PathBuf, categories: &CategoryTable, skip_unknown: bool) -> Result<Self> {
        let mut table = Self::canonical(categories);
        table.source = source.clone();
        let err = |line: usize, message: String| Error::Vocabulary {
            path: source.clone(),
            line,
            message,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((name, synonyms)) = line.split_once(':') else {
                return Err(err(line_no, format!("expected `name: synonyms`, got {line:?}")));
            };
            let category_id = match categories.id_of(name) {
                Some(id) => id,
                None if skip_unknown => continue,
                None => return Err(err(line_no, format!("unknown category {:?}", name.trim()))),
            };
            for syn in synonyms.split(',') {
                let phrase = tokenize(syn);
                if phrase.is_empty() {
                    if syn.trim().is_empty() {
                        continue;
                    }
                    return Err(err(line_no, format!("synonym {syn:?} has no word characters")));
                }
                table
                    .insert(phrase, category_id)
                    .map_err(|p| err(line_no, format!("duplicate phrase {p:?}")))?;
            }
        }
        table.sort();
        Ok(table)
    }

    /// The shipped default vocabulary over `categories`. Lines for
    /// categories the table lacks are skipped.
    pub fn default_for(categories: &CategoryTable) -> Result<Self> {
        Self::parse_inner(DEFAULT_VOCABULARY, "<default vocabulary>".into(), categories, true)
    }

    /// Adds one rule. Fails on an empty or already present phrase.
    pub fn add_rule(&mut self, phrase: &str, category_id: CategoryId) -> Result<()> {
        let tokens = tokenize(phrase);
        if tokens.is_empty() {
            return Err(Error::Config(format!("empty vocabulary phrase {phrase:?}")));
        }
        self.insert(tokens, category_id)
            .map_err(|p| Error::Config(format!("duplicate phrase {p:?}")))?;
        self.sort();
        Ok(())
    }

    fn insert(&mut self, phrase: Vec<String>, category_id: CategoryId) -> std::result::Result<(), String> {
        if self.lookup.contains_key(&phrase) {
            return Err(phrase.join(" "));
        }
        self.max_len = self.max_len.max(phrase.len());
        self.lookup.insert(phrase.clone(), category_id);
        self.rules.push(VocabRule {
            phrase,
            category_id,
        });
        Ok(())
    }

    fn sort(&mut self) {
        self.rules
            .sort_by(|a, b| b.phrase.len().cmp(&a.phrase.len()).then_with(|| a.phrase.cmp(&b.phrase)));
    }

    pub fn rules(&self) -> &[VocabRule] {
        &self.rules
    }

    pub fn rules_for(&self, category_id: CategoryId) -> impl Iterator<Item = &VocabRule> {
        self.rules.iter().filter(move |r| r.category_id == category_id)
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    /// Category of the phrase that matches `tokens[at..at + len]`, allowing a
    /// naive plural (`s` / `es`) on the final token.
    fn match_at(&self, tokens: &[String], at: usize, len: usize) -> Option<(CategoryId, Vec<String>)> {
        let window = &tokens[at..at + len];
        if let Some(&c) = self.lookup.get(window) {
            return Some((c, window.to_vec()));
        }
        let last = &window[len - 1];
        for suffix in ["s", "es"] {
            if let Some(stem) = last.strip_suffix(suffix) {
                if stem.is_empty() {
                    continue;
                }
                let mut key = window[..len - 1].to_vec();
                key.push(stem.to_owned());
                if let Some(&c) = self.lookup.get(&key) {
                    return Some((c, key));
                }
            }
        }
        None
    }

    /// Greedy longest-first scan of one token stream.
    pub fn scan(&self, tokens: &[String]) -> Vec<MatchedPhrase> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.match_at(tokens, i, len).map(|m| (len, m)));
            match hit {
                Some((len, (category_id, rule))) => {
                    out.push(MatchedPhrase {
                        text: tokens[i..i + len].join(" "),
                        rule: rule.join(" "),
                        category_id,
                        start: i,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Loads a vocabulary file; see the module docs for the format.
pub fn load_vocabulary(path: impl AsRef<Path>, categories: &CategoryTable) -> Result<VocabularyTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VocabularyTable::parse(&text, path, categories)
}

/// One vocabulary hit: the surface tokens, the rule they matched and the
/// token position where the match starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPhrase {
    pub text: String,
    pub rule: String,
    pub category_id: CategoryId,
    #[serde(skip)]
    pub start: usize,
}

/// `O_QA` for one question with the phrases that justify it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaObjectSet {
    pub question_id: QuestionId,
    pub categories: BTreeSet<CategoryId>,
    pub matched_phrases: Vec<MatchedPhrase>,
}

impl QaObjectSet {
    fn from_matches(question_id: QuestionId, matched_phrases: Vec<MatchedPhrase>) -> Self {
        QaObjectSet {
            question_id,
            categories: matched_phrases.iter().map(|m| m.category_id).collect(),
            matched_phrases,
        }
    }
}

/// Maps the question and the answer independently and unions the results.
///
/// ```
/// use cvf_core::coco::CategoryTable;
/// use cvf_core::vocab::{extract_qa_objects, VocabularyTable};
///
/// let cats = CategoryTable::coco80();
/// let vocab = VocabularyTable::default_for(&cats).unwrap();
/// let qa = extract_qa_objects(1, "Is he riding a bike?", "yes", &vocab);
/// let names: Vec<_> = qa.categories.iter().map(|&c| cats.name(c).unwrap()).collect();
/// assert_eq!(names, ["person", "bicycle"]);
/// ```
pub fn extract_qa_objects(
    question_id: QuestionId,
    question_text: &str,
    answer_text: &str,
    table: &VocabularyTable,
) -> QaObjectSet {
    let mut matches = table.scan(&tokenize(question_text));
    matches.extend(table.scan(&tokenize(answer_text)));
    QaObjectSet::from_matches(question_id, matches)
}

/// Categories mentioned in the question alone (`O_Q`).
pub fn extract_question_objects(
    question_id: QuestionId,
    question_text: &str,
    table: &VocabularyTable,
) -> QaObjectSet {
    QaObjectSet::from_matches(question_id, table.scan(&tokenize(question_text)))
}
