//! Line-delimited JSON case manifests.
//!
//! One record per (case, class):
//!
//! ```text
//! {"case_id": "c001", "ct_path": "ct/c001.nii.gz", "class": "liver",
//!  "label_paths": ["model_a/c001_liver.nii.gz", "model_b/c001_liver.nii.gz"]}
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::class::OrganClass;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("case {case_id} / {class}: {reason}")]
    Invalid {
        case_id: String,
        class: OrganClass,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Two candidates per entry, pairwise comparison.
    Compare,
    /// One candidate per entry, single-label quality check.
    Assess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub ct_path: PathBuf,
    pub class: OrganClass,
    pub label_paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CaseManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut entry: ManifestEntry =
                serde_json::from_str(line).map_err(|e| ManifestError::Parse {
                    line: n + 1,
                    reason: e.to_string(),
                })?;
            entry.ct_path = base.join(&entry.ct_path);
            for p in &mut entry.label_paths {
                *p = base.join(&*p);
            }
            entries.push(entry);
        }
        Ok(CaseManifest { entries })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
            .collect()
    }

    pub fn filter_class(mut self, class: Option<OrganClass>) -> Self {
        if let Some(c) = class {
            self.entries.retain(|e| e.class == c);
        }
        self
    }

    /// Check candidate counts for the run mode and (case, class) uniqueness.
    pub fn validate(&self, mode: RunMode) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            let invalid = |reason: String| ManifestError::Invalid {
                case_id: e.case_id.clone(),
                class: e.class,
                reason,
            };
            if e.case_id.is_empty() {
                return Err(invalid("empty case id".into()));
            }
            if !seen.insert((e.case_id.as_str(), e.class)) {
                return Err(invalid("duplicate (case, class) record".into()));
            }
            let n = e.label_paths.len();
            match mode {
                RunMode::Compare if n != 2 => {
                    return Err(invalid(format!(
                        "comparison needs exactly 2 labels, got {n}"
                    )))
                }
                RunMode::Assess if n == 0 => return Err(invalid("no candidate label".into())),
                _ => {}
            }
        }
        Ok(())
    }
}
