use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use cvf_core::agreement::Label;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{user} already labelled {edit_id}")]
    Duplicate { user: String, edit_id: String },
}

/// One persisted label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub user: String,
    pub edit_id: String,
    pub label: Label,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
}

/// Append-only label file plus its in-memory index.
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    labels: BTreeMap<String, BTreeMap<String, Label>>,
}

impl LabelStore {
    /// Opens or creates the store and replays every line already in it.
    /// A torn final line (no trailing newline) is ignored.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut labels: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(io)?;
            let complete = match text.rfind('\n') {
                Some(i) => &text[..=i],
                None => "",
            };
            for (i, line) in BufReader::new(complete.as_bytes()).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: LabelRecord = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                labels.entry(r.user).or_default().entry(r.edit_id).or_insert(r.label);
            }
            if complete.len() != text.len() {
                // drop the torn tail so the next append starts on a fresh line
                let f = OpenOptions::new().write(true).open(&path).map_err(io)?;
                f.set_len(complete.len() as u64).map_err(io)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(LabelStore { path, file, labels })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn labels(&self) -> &BTreeMap<String, BTreeMap<String, Label>> {
        &self.labels
    }

    pub fn user_labels(&self, user: &str) -> Option<&BTreeMap<String, Label>> {
        self.labels.get(user)
    }

    pub fn len(&self) -> usize {
        self.labels.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persists the label and syncs the file before returning.
    pub fn append(&mut self, user: &str, edit_id: &str, label: Label) -> Result<LabelRecord, StoreError> {
        if self.labels.get(user).is_some_and(|m| m.contains_key(edit_id)) {
            return Err(StoreError::Duplicate {
                user: user.into(),
                edit_id: edit_id.into(),
            });
        }
        let record = LabelRecord {
            user: user.into(),
            edit_id: edit_id.into(),
            label,
            at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        let line = serde_json::to_string(&record).expect("label record serializes");
        let io = |source| StoreError::Io { path: self.path.clone(), source };
        writeln!(self.file, "{line}").map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.labels
            .entry(record.user.clone())
            .or_default()
            .insert(record.edit_id.clone(), label);
        Ok(record)
    }
}
