//! Per-class accuracy of decided verdicts against ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::class::{Candidate, OrganClass};
use crate::verdict::{QualityOutcome, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ground truth {path}: {reason}")]
    Truth { path: String, reason: String },
}

/// What a reviewer decided is right for a (case, class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    /// The first candidate is the correct label.
    First,
    Second,
    /// Single-label mode: the label is acceptable.
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub case_id: String,
    pub class: OrganClass,
    pub truth: Truth,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    records: HashMap<(String, OrganClass), Truth>,
}

impl GroundTruth {
    /// Build from records; a repeated (case, class) is an error.
    pub fn new(records: impl IntoIterator<Item = GroundTruthRecord>) -> Result<Self, String> {
        let mut map = HashMap::new();
        for r in records {
            if map.insert((r.case_id.clone(), r.class), r.truth).is_some() {
                return Err(format!(
                    "duplicate ground truth for {}/{}",
                    r.case_id, r.class
                ));
            }
        }
        Ok(GroundTruth { records: map })
    }

    /// CSV with header `case_id,class,truth`.
    pub fn load_csv(path: &Path) -> Result<Self, ReportError> {
        let err = |reason: String| ReportError::Truth {
            path: path.display().to_string(),
            reason,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let records = reader
            .deserialize()
            .collect::<Result<Vec<GroundTruthRecord>, _>>()
            .map_err(|e| err(e.to_string()))?;
        Self::new(records).map_err(err)
    }

    pub fn write_csv(path: &Path, records: &[GroundTruthRecord]) -> Result<(), ReportError> {
        let mut w =
            csv::Writer::from_path(path).map_err(|e| std::io::Error::other(e.to_string()))?;
        for r in records {
            w.serialize(r)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn get(&self, case_id: &str, class: OrganClass) -> Option<Truth> {
        self.records.get(&(case_id.to_string(), class)).copied()
    }

    fn classes(&self) -> impl Iterator<Item = OrganClass> + '_ {
        self.records.keys().map(|(_, c)| *c)
    }
}

/// Correct / evaluated counts for one class, or for the average row when
/// `class` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AccuracyCell {
    pub class: Option<OrganClass>,
    pub correct: u64,
    pub evaluated: u64,
}

impl AccuracyCell {
    pub fn label(&self) -> &'static str {
        self.class.map_or("average", OrganClass::as_str)
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| 100.0 * self.correct as f64 / self.evaluated as f64)
    }

    /// Accuracy in tenths of a percent, rounded half away from zero, using
    /// integer arithmetic only.
    pub fn tenths(&self) -> Option<u64> {
        let (c, e) = (self.correct, self.evaluated);
        (e > 0).then(|| (2000 * c + e) / (2 * e))
    }

    /// One decimal place (`96.5`, `100.0`) or `-` when nothing was evaluated.
    pub fn render(&self) -> String {
        match self.tenths() {
            Some(t) => format!("{}.{}", t / 10, t % 10),
            None => "-".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyTable {
    /// One row per class, alphabetical.
    pub rows: Vec<AccuracyCell>,
    /// Pooled counts over all rows; absent for an empty table.
    pub average: Option<AccuracyCell>,
    /// Decided verdicts without a matching ground-truth record.
    pub uncovered: Vec<(String, OrganClass)>,
}

enum Judged {
    Excluded,
    Uncovered,
    Evaluated(bool),
}

fn judge(verdict: &Verdict, truth: Option<Truth>) -> Judged {
    let decided = match verdict {
        Verdict::Pair(v) => match v.outcome.selected() {
            Some(Candidate::First) => Truth::First,
            Some(Candidate::Second) => Truth::Second,
            None => return Judged::Excluded,
        },
        Verdict::Single(v) => match v.outcome {
            QualityOutcome::Correct => Truth::Correct,
            QualityOutcome::Incorrect => Truth::Incorrect,
            QualityOutcome::FlaggedUnparseable => return Judged::Excluded,
        },
        Verdict::Override(_) => return Judged::Excluded,
    };
    let pair_mode = matches!(verdict, Verdict::Pair(_));
    match truth {
        Some(t @ (Truth::First | Truth::Second)) if pair_mode => Judged::Evaluated(t == decided),
        Some(t @ (Truth::Correct | Truth::Incorrect)) if !pair_mode => {
            Judged::Evaluated(t == decided)
        }
        _ => Judged::Uncovered,
    }
}

/// Skipped and flagged verdicts count towards no denominator. Every class
/// seen in either input gets a row.
pub fn compute_accuracy_table<'a>(
    verdicts: impl IntoIterator<Item = &'a Verdict>,
    truth: &GroundTruth,
) -> AccuracyTable {
    let mut counts: BTreeMap<OrganClass, (u64, u64)> = BTreeMap::new();
    let mut uncovered = BTreeSet::new();
    for v in verdicts {
        let (case, class) = v.key();
        if v.is_override() {
            continue;
        }
        let cell = counts.entry(class).or_default();
        match judge(v, truth.get(case, class)) {
            Judged::Excluded => {}
            Judged::Uncovered => {
                uncovered.insert((case.to_string(), class));
            }
            Judged::Evaluated(ok) => {
                cell.1 += 1;
                if ok {
                    cell.0 += 1;
                }
            }
        }
    }
    for class in truth.classes() {
        counts.entry(class).or_default();
    }
    let rows: Vec<AccuracyCell> = counts
        .into_iter()
        .map(|(class, (correct, evaluated))| AccuracyCell {
            class: Some(class),
            correct,
            evaluated,
        })
        .collect();
    let average = (!rows.is_empty()).then(|| AccuracyCell {
        class: None,
        correct: rows.iter().map(|r| r.correct).sum(),
        evaluated: rows.iter().map(|r| r.evaluated).sum(),
    });
    AccuracyTable {
        rows,
        average,
        uncovered: uncovered.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl AccuracyTable {
    fn all_rows(&self) -> impl Iterator<Item = &AccuracyCell> {
        self.rows.iter().chain(self.average.iter())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,correct,evaluated,accuracy\n");
        for r in self.all_rows() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.label(),
                r.correct,
                r.evaluated,
                r.render()
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| class | accuracy | correct/evaluated |\n|---|---:|---:|\n");
        for r in self.all_rows() {
            let _ = writeln!(
                out,
                "| {} | {} | {}/{} |",
                r.label(),
                r.render(),
                r.correct,
                r.evaluated
            );
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }
}

pub fn export_report(
    table: &AccuracyTable,
    format: ReportFormat,
    path: &Path,
) -> Result<(), ReportError> {
    fs::write(path, table.render(format))?;
    Ok(())
}
