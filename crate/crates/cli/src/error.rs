use std::fmt;
use std::path::Path;

/// A failure reported as one `error[category]: message` line.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            category: "usage",
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError {
            category: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    /// Usage and validation problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self.category {
            "usage" | "config" => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep it on one line whatever the source said
        let msg = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.category, msg)
    }
}

impl From<cvf_core::Error> for CliError {
    fn from(e: cvf_core::Error) -> Self {
        CliError {
            category: e.category(),
            message: e.to_string(),
        }
    }
}

impl From<cvf_review::StoreError> for CliError {
    fn from(e: cvf_review::StoreError) -> Self {
        let category = match e {
            cvf_review::StoreError::Io { .. } => "io",
            cvf_review::StoreError::Corrupt { .. } => "parse",
            cvf_review::StoreError::Duplicate { .. } => "integrity",
        };
        CliError {
            category,
            message: e.to_string(),
        }
    }
}
