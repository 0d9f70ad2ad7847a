//! Append-only JSON-lines log of every model exchange.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::class::OrganClass;
use crate::prompt::{Role, ScriptStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub role: Role,
    pub text: String,
    pub images: Vec<String>,
}

/// One line of the transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub record_id: String,
    pub case_id: Option<String>,
    pub class: Option<OrganClass>,
    pub step: Option<ScriptStep>,
    pub endpoint: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub turns: Vec<TranscriptTurn>,
    pub raw_response: Option<String>,
    pub error: Option<String>,
}

pub struct TranscriptLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if path.exists() {
            crate::verdict::drop_torn_tail(path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TranscriptLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &TranscriptRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    /// Read every complete record; a torn final line is ignored.
    pub fn read(path: &Path) -> std::io::Result<Vec<TranscriptRecord>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => out.push(r),
                Err(e) => tracing::warn!("skipping unreadable transcript line: {e}"),
            }
        }
        Ok(out)
    }
}
