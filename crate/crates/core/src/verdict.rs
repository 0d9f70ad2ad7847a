//! Verdict types and the append-only verdict store.
//!
//! The store is a JSON-lines file, one [`VerdictRecord`] per line. A newer
//! verdict for the same (case, class) supersedes the older one; overrides
//! from human review are kept in their own namespace. A torn final line
//! left by a killed process is dropped on open.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::class::{Candidate, OrganClass};

#[derive(Debug, thiserror::Error)]
pub enum VerdictError {
    #[error("verdict store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("verdict store {path} line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Outcome of a two-candidate comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOutcome {
    PreferFirst,
    PreferSecond,
    SkippedSimilar,
    /// The organ should not be visible and exactly one candidate is empty.
    OrganAbsentEmptySelected(Candidate),
    FlaggedAbsentNoEmpty,
    FlaggedInconsistent,
    FlaggedRejected,
    FlaggedUnparseable,
}

impl CaseOutcome {
    pub fn is_flagged(self) -> bool {
        matches!(
            self,
            CaseOutcome::FlaggedAbsentNoEmpty
                | CaseOutcome::FlaggedInconsistent
                | CaseOutcome::FlaggedRejected
                | CaseOutcome::FlaggedUnparseable
        )
    }

    /// The candidate this outcome declares correct, if any.
    pub fn selected(self) -> Option<Candidate> {
        match self {
            CaseOutcome::PreferFirst => Some(Candidate::First),
            CaseOutcome::PreferSecond => Some(Candidate::Second),
            CaseOutcome::OrganAbsentEmptySelected(c) => Some(c),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CaseOutcome::PreferFirst => "prefer_first",
            CaseOutcome::PreferSecond => "prefer_second",
            CaseOutcome::SkippedSimilar => "skipped_similar",
            CaseOutcome::OrganAbsentEmptySelected(_) => "organ_absent_empty_selected",
            CaseOutcome::FlaggedAbsentNoEmpty => "flagged_absent_no_empty",
            CaseOutcome::FlaggedInconsistent => "flagged_inconsistent",
            CaseOutcome::FlaggedRejected => "flagged_rejected",
            CaseOutcome::FlaggedUnparseable => "flagged_unparseable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_id: String,
    pub class: OrganClass,
    pub outcome: CaseOutcome,
    pub dsc: Option<f64>,
    /// Transcript record ids of every exchange behind this verdict.
    pub exchange_refs: Vec<String>,
    pub timestamp_ms: u64,
}

/// Outcome of a single-label assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityOutcome {
    Correct,
    Incorrect,
    FlaggedUnparseable,
}

impl QualityOutcome {
    pub fn name(self) -> &'static str {
        match self {
            QualityOutcome::Correct => "correct",
            QualityOutcome::Incorrect => "incorrect",
            QualityOutcome::FlaggedUnparseable => "flagged_unparseable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub case_id: String,
    pub class: OrganClass,
    pub outcome: QualityOutcome,
    pub exchange_refs: Vec<String>,
    pub timestamp_ms: u64,
}

/// A reviewer's decision on a flagged case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    FirstBest,
    SecondBest,
    BothBad,
    OrganAbsent,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [
        Resolution::FirstBest,
        Resolution::SecondBest,
        Resolution::BothBad,
        Resolution::OrganAbsent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::FirstBest => "first_best",
            Resolution::SecondBest => "second_best",
            Resolution::BothBad => "both_bad",
            Resolution::OrganAbsent => "organ_absent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideVerdict {
    pub case_id: String,
    pub class: OrganClass,
    pub review_item: u64,
    pub resolution: Resolution,
    pub note: String,
    pub reviewer: Option<String>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Pair(CaseVerdict),
    Single(QualityVerdict),
    Override(OverrideVerdict),
}

impl Verdict {
    pub fn key(&self) -> (&str, OrganClass) {
        match self {
            Verdict::Pair(v) => (&v.case_id, v.class),
            Verdict::Single(v) => (&v.case_id, v.class),
            Verdict::Override(v) => (&v.case_id, v.class),
        }
    }

    pub fn is_override(&self) -> bool {
        matches!(self, Verdict::Override(_))
    }

    pub fn outcome_name(&self) -> &'static str {
        match self {
            Verdict::Pair(v) => v.outcome.name(),
            Verdict::Single(v) => v.outcome.name(),
            Verdict::Override(v) => v.resolution.as_str(),
        }
    }
}

impl From<CaseVerdict> for Verdict {
    fn from(v: CaseVerdict) -> Self {
        Verdict::Pair(v)
    }
}

impl From<QualityVerdict> for Verdict {
    fn from(v: QualityVerdict) -> Self {
        Verdict::Single(v)
    }
}

impl From<OverrideVerdict> for Verdict {
    fn from(v: OverrideVerdict) -> Self {
        Verdict::Override(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub record_id: u64,
    #[serde(flatten)]
    pub verdict: Verdict,
}

type Key = (String, OrganClass, bool);

fn key_of(v: &Verdict) -> Key {
    let (case, class) = v.key();
    (case.to_string(), class, v.is_override())
}

struct Inner {
    file: File,
    next_id: u64,
    latest: BTreeMap<Key, VerdictRecord>,
}

pub struct VerdictStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl VerdictStore {
    /// Open or create a store, replaying existing records.
    pub fn open(path: &Path) -> Result<Self, VerdictError> {
        if path.exists() {
            drop_torn_tail(path)?;
        }
        let records = if path.exists() {
            read_records(path)?
        } else {
            Vec::new()
        };
        let mut latest = BTreeMap::new();
        let mut next_id = 1;
        for r in records {
            next_id = next_id.max(r.record_id + 1);
            latest.insert(key_of(&r.verdict), r);
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(VerdictStore {
            path: path.to_path_buf(),
            inner: Mutex::new(Inner {
                file,
                next_id,
                latest,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append a verdict and return its record id. A record for the same
    /// (case, class) is superseded.
    pub fn record(&self, verdict: impl Into<Verdict>) -> Result<u64, VerdictError> {
        let verdict = verdict.into();
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let record = VerdictRecord {
            record_id: inner.next_id,
            verdict,
        };
        let mut line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
        line.push('\n');
        inner.file.write_all(line.as_bytes())?;
        inner.file.flush()?;
        inner.next_id += 1;
        let key = key_of(&record.verdict);
        if let Some(old) = inner.latest.get(&key) {
            tracing::info!(
                case = %key.0,
                class = %key.1,
                old = old.record_id,
                new = record.record_id,
                "verdict superseded"
            );
        }
        let id = record.record_id;
        inner.latest.insert(key, record);
        Ok(id)
    }

    /// Current verdicts (not overrides), ordered by (case, class).
    pub fn verdicts(&self) -> Vec<VerdictRecord> {
        self.select(false)
    }

    pub fn overrides(&self) -> Vec<VerdictRecord> {
        self.select(true)
    }

    fn select(&self, overrides: bool) -> Vec<VerdictRecord> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner
            .latest
            .values()
            .filter(|r| r.verdict.is_override() == overrides)
            .cloned()
            .collect()
    }

    pub fn get(&self, case_id: &str, class: OrganClass) -> Option<VerdictRecord> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner
            .latest
            .get(&(case_id.to_string(), class, false))
            .cloned()
    }

    pub fn override_for(&self, case_id: &str, class: OrganClass) -> Option<OverrideVerdict> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        match inner.latest.get(&(case_id.to_string(), class, true)) {
            Some(VerdictRecord {
                verdict: Verdict::Override(o),
                ..
            }) => Some(o.clone()),
            _ => None,
        }
    }

    pub fn has_verdict(&self, case_id: &str, class: OrganClass) -> bool {
        self.get(case_id, class).is_some()
    }

    /// Write the current records (verdicts, then overrides) to `path`.
    pub fn write_snapshot(&self, path: &Path) -> Result<(), VerdictError> {
        let mut out = String::new();
        for r in self.verdicts().into_iter().chain(self.overrides()) {
            out.push_str(&serde_json::to_string(&r).map_err(std::io::Error::other)?);
            out.push('\n');
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, out)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Every record in a store or snapshot file, in file order.
pub fn read_records(path: &Path) -> Result<Vec<VerdictRecord>, VerdictError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| VerdictError::Parse {
            path: path.display().to_string(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Cut a JSON-lines file back to its last newline, discarding a record
/// left half-written by an interrupted process.
pub(crate) fn drop_torn_tail(path: &Path) -> std::io::Result<()> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    tracing::warn!(path = %path.display(), "dropping incomplete final line");
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    Ok(())
}
