//! Two-pass dataset runs with resumable, incremental verdict persistence.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::class::OrganClass;
use crate::dsc::{
    compute_class_stats, pair_dice, read_threshold_table, write_threshold_table, DiceSpace,
    DscStats,
};
use crate::review::ReviewStore;
use crate::verdict::{Verdict, VerdictStore};
use crate::volume::{
    load_label_aligned, load_volume, CaseManifest, ManifestEntry, RunMode, VoxelVolume,
};

use super::{Critic, CriticError};

pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const SNAPSHOT_FILE: &str = "verdicts.snapshot.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const REVIEW_DIR: &str = "review";
pub const SUMMARY_FILE: &str = "summary.json";

/// The output directory of a run and the stores inside it.
pub struct Workspace {
    pub out_dir: PathBuf,
    pub verdicts: Arc<VerdictStore>,
    pub review: Arc<ReviewStore>,
}

impl Workspace {
    pub fn open(out_dir: &Path) -> Result<Self, CriticError> {
        fs::create_dir_all(out_dir)?;
        let verdicts = Arc::new(VerdictStore::open(&out_dir.join(VERDICTS_FILE))?);
        let review = Arc::new(ReviewStore::open(
            &out_dir.join(REVIEW_DIR),
            verdicts.clone(),
        )?);
        Ok(Workspace {
            out_dir: out_dir.to_path_buf(),
            verdicts,
            review,
        })
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.out_dir.join(TRANSCRIPT_FILE)
    }

    pub fn thresholds_path(&self) -> PathBuf {
        self.out_dir.join(THRESHOLDS_FILE)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: RunMode,
    pub workers: usize,
    /// Skip (case, class) pairs that already have a verdict.
    pub resume: bool,
    /// Use this table instead of computing thresholds in pass 1.
    pub threshold_table: Option<PathBuf>,
    pub class_filter: Option<OrganClass>,
    /// Stop handing out new cases once set; cases in progress finish.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl RunOptions {
    pub fn new(mode: RunMode) -> Self {
        RunOptions {
            mode,
            workers: 4,
            resume: false,
            threshold_table: None,
            class_filter: None,
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub class: OrganClass,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: RunMode,
    /// Outcome counts per class over every current verdict for the manifest.
    pub counts: BTreeMap<OrganClass, BTreeMap<String, usize>>,
    pub executed: usize,
    pub resumed: usize,
    pub failures: Vec<CaseFailure>,
    pub warnings: Vec<String>,
    pub thresholds: Vec<DscStats>,
    pub cancelled: bool,
}

impl RunSummary {
    pub fn count(&self, class: OrganClass, outcome: &str) -> usize {
        self.counts
            .get(&class)
            .and_then(|m| m.get(outcome))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self, outcome: &str) -> usize {
        self.counts.values().filter_map(|m| m.get(outcome)).sum()
    }
}

fn load_ct(entry: &ManifestEntry) -> Result<VoxelVolume, CriticError> {
    Ok(load_volume(&entry.ct_path)?.with_id(entry.case_id.clone()))
}

/// Run `f` over `items` on up to `workers` threads, stopping early when
/// `cancel` is set.
fn parallel_each<T: Sync>(
    items: &[T],
    workers: usize,
    cancel: Option<&AtomicBool>,
    f: impl Fn(&T) + Sync,
) -> bool {
    let next = AtomicUsize::new(0);
    let stopped = AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                    stopped.store(true, Ordering::SeqCst);
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                f(item);
            });
        }
    });
    stopped.load(Ordering::SeqCst)
}

/// Result of the threshold pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPass {
    pub stats: Vec<DscStats>,
    pub warnings: Vec<String>,
    pub failures: Vec<CaseFailure>,
}

/// Pass 1: Dice of every pair and the per-class thresholds.
pub fn compute_thresholds(
    manifest: &CaseManifest,
    space: DiceSpace,
    workers: usize,
) -> ThresholdPass {
    let failures = Mutex::new(Vec::new());
    let (stats, warnings) = pass_one(manifest, space, workers, &failures);
    ThresholdPass {
        stats,
        warnings,
        failures: failures.into_inner().unwrap(),
    }
}

fn pass_one(
    manifest: &CaseManifest,
    space: DiceSpace,
    workers: usize,
    failures: &Mutex<Vec<CaseFailure>>,
) -> (Vec<DscStats>, Vec<String>) {
    let samples = Mutex::new(Vec::new());
    parallel_each(&manifest.entries, workers, None, |entry| {
        let result = (|| -> Result<f64, CriticError> {
            let ct = load_ct(entry)?;
            let y1 = load_label_aligned(&entry.label_paths[0], &ct, entry.class)?;
            let y2 = load_label_aligned(&entry.label_paths[1], &ct, entry.class)?;
            Ok(pair_dice(&y1, &y2, space)?)
        })();
        match result {
            Ok(d) => samples.lock().unwrap().push((entry.class, d)),
            Err(e) => failures.lock().unwrap().push(CaseFailure {
                case_id: entry.case_id.clone(),
                class: entry.class,
                message: format!("pass 1: {e}"),
            }),
        }
    });
    let mut classes: Vec<OrganClass> = manifest.entries.iter().map(|e| e.class).collect();
    classes.sort();
    classes.dedup();
    let report = compute_class_stats(&samples.into_inner().unwrap(), &classes);
    let warnings = report
        .warnings
        .iter()
        .map(|w| format!("{}: {}", w.class, w.message))
        .collect();
    (report.stats, warnings)
}

/// Compute thresholds (or load them), then critique every entry.
pub fn run_dataset(
    manifest: &CaseManifest,
    critic: &Critic,
    workspace: &Workspace,
    options: &RunOptions,
) -> Result<RunSummary, CriticError> {
    let manifest = manifest.clone().filter_class(options.class_filter);
    manifest.validate(options.mode)?;
    let mut warnings = Vec::new();
    let failures = Mutex::new(Vec::new());
    if manifest.entries.is_empty() {
        tracing::warn!("manifest has no entries");
        warnings.push("manifest has no entries".to_string());
    }

    let thresholds = match options.mode {
        RunMode::Assess => Vec::new(),
        RunMode::Compare => {
            let existing = options.threshold_table.clone().or_else(|| {
                (options.resume && workspace.thresholds_path().exists())
                    .then(|| workspace.thresholds_path())
            });
            let stats = match existing {
                Some(path) => read_threshold_table(&path)?,
                None => {
                    let (stats, w) =
                        pass_one(&manifest, critic.dice_space(), options.workers, &failures);
                    warnings.extend(w);
                    stats
                }
            };
            write_threshold_table(&workspace.thresholds_path(), &stats)?;
            stats
        }
    };

    let pending: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| !(options.resume && workspace.verdicts.has_verdict(&e.case_id, e.class)))
        .collect();
    let resumed = manifest.entries.len() - pending.len();
    let executed = AtomicUsize::new(0);

    let cancelled = parallel_each(
        &pending,
        options.workers,
        options.cancel.as_deref(),
        |entry| {
            let result = (|| -> Result<Verdict, CriticError> {
                let ct = load_ct(entry)?;
                let profile = critic.profile(entry.class);
                match options.mode {
                    RunMode::Compare => {
                        let stats = thresholds
                            .iter()
                            .find(|s| s.class == entry.class)
                            .ok_or_else(|| {
                                CriticError::Precondition(format!(
                                    "no threshold for {}",
                                    entry.class
                                ))
                            })?;
                        let y1 = load_label_aligned(&entry.label_paths[0], &ct, entry.class)?;
                        let y2 = load_label_aligned(&entry.label_paths[1], &ct, entry.class)?;
                        Ok(critic.compare_case(&ct, &y1, &y2, profile, stats)?.into())
                    }
                    RunMode::Assess => {
                        let y = load_label_aligned(&entry.label_paths[0], &ct, entry.class)?;
                        let examples = critic.examples_for(profile);
                        Ok(critic
                            .assess_single_label(&ct, &y, profile, examples)?
                            .into())
                    }
                }
            })();
            match result.and_then(|v| Ok(workspace.verdicts.record(v)?)) {
                Ok(_) => {
                    executed.fetch_add(1, Ordering::SeqCst);
                }
                Err(e) => {
                    tracing::warn!(case = %entry.case_id, class = %entry.class, "case incomplete: {e}");
                    failures.lock().unwrap().push(CaseFailure {
                        case_id: entry.case_id.clone(),
                        class: entry.class,
                        message: e.to_string(),
                    });
                }
            }
        },
    );

    let keys: HashSet<(&str, OrganClass)> = manifest
        .entries
        .iter()
        .map(|e| (e.case_id.as_str(), e.class))
        .collect();
    let mut counts: BTreeMap<OrganClass, BTreeMap<String, usize>> = BTreeMap::new();
    for r in workspace.verdicts.verdicts() {
        if keys.contains(&r.verdict.key()) {
            let (_, class) = r.verdict.key();
            *counts
                .entry(class)
                .or_default()
                .entry(r.verdict.outcome_name().to_string())
                .or_default() += 1;
        }
    }
    let mut failures = failures.into_inner().unwrap();
    failures.sort_by(|a, b| (&a.case_id, a.class).cmp(&(&b.case_id, b.class)));
    let summary = RunSummary {
        mode: options.mode,
        counts,
        executed: executed.into_inner(),
        resumed,
        failures,
        warnings,
        thresholds,
        cancelled,
    };
    workspace
        .verdicts
        .write_snapshot(&workspace.out_dir.join(SNAPSHOT_FILE))?;
    fs::write(
        workspace.out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?,
    )?;
    Ok(summary)
}
