//! Summaries of human validation labels.
//!
//! Every percentage is taken over the item universe: the union of edit ids
//! labelled by any user. A user who skipped an item counts toward neither
//! yes, no nor ambiguous for that item, so per-user rows need not sum to 100
//! and `missing` holds the remainder. The intersection row counts items on
//! which every user gave the same label; the union row counts items on which
//! at least one user gave it. Hence for every label,
//! `intersection <= any single user <= union`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Yes,
    No,
    Ambiguous,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Yes, Label::No, Label::Ambiguous];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "yes",
            Label::No => "no",
            Label::Ambiguous => "ambiguous",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(Label::Yes),
            "no" => Ok(Label::No),
            "ambiguous" => Ok(Label::Ambiguous),
            other => Err(Error::Config(format!("unknown label {other:?}"))),
        }
    }
}

/// Counts over the item universe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub yes: u64,
    pub no: u64,
    pub ambiguous: u64,
    pub missing: u64,
}

impl LabelCounts {
    pub fn get(&self, label: Label) -> u64 {
        match label {
            Label::Yes => self.yes,
            Label::No => self.no,
            Label::Ambiguous => self.ambiguous,
        }
    }

    fn bump(&mut self, label: Label) {
        match label {
            Label::Yes => self.yes += 1,
            Label::No => self.no += 1,
            Label::Ambiguous => self.ambiguous += 1,
        }
    }

    /// Percentage of `universe` carrying `label`.
    pub fn percent(&self, label: Label, universe: u64) -> f64 {
        if universe == 0 {
            0.0
        } else {
            100.0 * self.get(label) as f64 / universe as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub universe: u64,
    pub per_user: BTreeMap<String, LabelCounts>,
    pub intersection: LabelCounts,
    pub union: LabelCounts,
}

/// Computes the per-user, intersection and union rows from
/// `user -> edit_id -> label`.
///
/// ```
/// use std::collections::BTreeMap;
/// use cvf_core::agreement::{agreement_stats, Label};
///
/// let mut labels = BTreeMap::new();
/// labels.insert("u1".to_string(), BTreeMap::from([("a".to_string(), Label::Yes), ("b".to_string(), Label::Yes)]));
/// labels.insert("u2".to_string(), BTreeMap::from([("a".to_string(), Label::Yes), ("b".to_string(), Label::No)]));
/// let r = agreement_stats(&labels);
/// assert_eq!((r.universe, r.intersection.yes, r.union.yes, r.union.no), (2, 1, 2, 1));
/// ```
pub fn agreement_stats(labels: &BTreeMap<String, BTreeMap<String, Label>>) -> AgreementReport {
    let universe: BTreeSet<&String> = labels.values().flat_map(|m| m.keys()).collect();
    let mut per_user = BTreeMap::new();
    for (user, items) in labels {
        let mut c = LabelCounts::default();
        for item in &universe {
            match items.get(*item) {
                Some(l) => c.bump(*l),
                None => c.missing += 1,
            }
        }
        per_user.insert(user.clone(), c);
    }

    let mut intersection = LabelCounts::default();
    let mut union = LabelCounts::default();
    for item in &universe {
        let given: Vec<Option<Label>> = labels.values().map(|m| m.get(*item).copied()).collect();
        for label in Label::ALL {
            if given.iter().all(|g| *g == Some(label)) {
                intersection.bump(label);
            }
            if given.contains(&Some(label)) {
                union.bump(label);
            }
        }
        if given.iter().any(Option::is_none) {
            intersection.missing += 1;
        }
        if given.iter().all(Option::is_none) {
            union.missing += 1;
        }
    }

    AgreementReport {
        universe: universe.len() as u64,
        per_user,
        intersection,
        union,
    }
}

impl AgreementReport {
    /// Plain-text table: one row per user, then the intersection and union.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<14}{:>10}{:>10}{:>12}{:>10}\n",
            "", "Yes (%)", "No (%)", "Ambig. (%)", "Missing"
        );
        let mut row = |name: &str, c: &LabelCounts| {
            let _ = writeln!(
                out,
                "{:<14}{:>10.2}{:>10.2}{:>12.2}{:>10}",
                name,
                c.percent(Label::Yes, self.universe),
                c.percent(Label::No, self.universe),
                c.percent(Label::Ambiguous, self.universe),
                c.missing
            );
        };
        for (user, c) in &self.per_user {
            row(user, c);
        }
        row("all agree", &self.intersection);
        row("any user", &self.union);
        let _ = writeln!(out, "items: {}", self.universe);
        out
    }
}
