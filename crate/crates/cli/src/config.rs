//! The optional TOML config named by `--config` / `CVF_CONFIG`, and the
//! provenance record written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cvf_core::select::SelectionConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub annotations: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub answers: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub answers_per_question: Option<usize>,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratio: 0.9, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub answer_vocab_size: u32,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            answer_vocab_size: cvf_core::consistency::DEFAULT_ANSWER_VOCAB_SIZE,
        }
    }
}

impl FileConfig {
    /// Reads the file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.annotations,
            &mut cfg.questions,
            &mut cfg.answers,
            &mut cfg.images,
            &mut cfg.vocab,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// What produced an output directory: tool version, resolved settings and
/// the digests of every input read. No timestamps, so reruns over the same
/// inputs write the same bytes.
#[derive(Debug, Serialize)]
pub struct Provenance {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    settings: serde_json::Value,
    inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &'static str, settings: &impl Serialize) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            settings: serde_json::to_value(settings).expect("settings serialize"),
            inputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Result<Self, CliError> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: digest_file(path)?,
        });
        Ok(self)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join("provenance.json"), self)
    }
}

/// Pretty JSON with a trailing newline; creates parent directories.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

/// One JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, values: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut s = String::new();
    for v in values {
        s.push_str(&serde_json::to_string(&v).expect("value serializes"));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}
