use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::class::OrganClass;
use crate::verdict::{
    drop_torn_tail, now_ms, OverrideVerdict, Resolution, VerdictError, VerdictStore,
};

use super::ReviewError;

/// Why the pipeline declined to decide a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    AbsentNoEmpty,
    Inconsistent,
    Rejected,
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSlot {
    Ct,
    OverlayA,
    OverlayB,
    Overlay,
    Skeleton,
}

impl ImageSlot {
    pub const ALL: [ImageSlot; 5] = [
        ImageSlot::Ct,
        ImageSlot::OverlayA,
        ImageSlot::OverlayB,
        ImageSlot::Overlay,
        ImageSlot::Skeleton,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImageSlot::Ct => "ct",
            ImageSlot::OverlayA => "overlay_a",
            ImageSlot::OverlayB => "overlay_b",
            ImageSlot::Overlay => "overlay",
            ImageSlot::Skeleton => "skeleton",
        }
    }

    pub fn parse(s: &str) -> Option<ImageSlot> {
        ImageSlot::ALL.into_iter().find(|slot| slot.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Resolved,
}

impl ReviewStatus {
    pub fn parse(s: &str) -> Option<ReviewStatus> {
        match s.to_ascii_lowercase().as_str() {
            "pending" => Some(ReviewStatus::Pending),
            "resolved" => Some(ReviewStatus::Resolved),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: u64,
    pub case_id: String,
    pub class: OrganClass,
    pub flag_reason: FlagReason,
    pub images: Vec<ImageSlot>,
    pub status: ReviewStatus,
    pub resolution: Option<Resolution>,
    pub note: String,
    pub reviewer: Option<String>,
    pub flagged_at_ms: u64,
    pub resolved_at_ms: Option<u64>,
}

/// A case waiting to be flagged, with its pre-rendered PNGs.
#[derive(Debug, Clone)]
pub struct ReviewDraft {
    pub case_id: String,
    pub class: OrganClass,
    pub flag_reason: FlagReason,
    pub images: Vec<(ImageSlot, Vec<u8>)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Flagged {
        item: ReviewItem,
    },
    Resolved {
        id: u64,
        resolution: Resolution,
        note: String,
        reviewer: Option<String>,
        at_ms: u64,
    },
}

/// Filter and cursor for [`ReviewStore::list`].
#[derive(Debug, Clone, Default)]
pub struct ListQuery {
    pub status: Option<ReviewStatus>,
    pub class: Option<OrganClass>,
    /// Id of the last item of the previous page.
    pub cursor: Option<u64>,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReviewPage {
    pub items: Vec<ReviewItem>,
    pub next_cursor: Option<u64>,
}

struct Inner {
    log: File,
    items: BTreeMap<u64, ReviewItem>,
    next_id: u64,
}

/// Flagged cases on disk: `events.jsonl` plus `images/<id>/<slot>.png`.
///
/// Resolutions also append an override record to the verdict store. All
/// mutations go through one lock, so concurrent submissions for an item
/// are serialized.
pub struct ReviewStore {
    root: PathBuf,
    verdicts: Arc<VerdictStore>,
    inner: Mutex<Inner>,
}

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

impl ReviewStore {
    pub fn open(root: &Path, verdicts: Arc<VerdictStore>) -> Result<Self, ReviewError> {
        fs::create_dir_all(root.join("images"))?;
        let log_path = root.join("events.jsonl");
        let mut items = BTreeMap::new();
        if log_path.exists() {
            drop_torn_tail(&log_path)?;
            for line in BufReader::new(File::open(&log_path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Event>(&line) {
                    Ok(event) => apply(&mut items, event),
                    Err(e) => tracing::warn!("skipping unreadable review event: {e}"),
                }
            }
        }
        let next_id = items.keys().next_back().map_or(1, |k| k + 1);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)?;
        let store = ReviewStore {
            root: root.to_path_buf(),
            verdicts,
            inner: Mutex::new(Inner {
                log,
                items,
                next_id,
            }),
        };
        store.reconcile()?;
        Ok(store)
    }

    /// Bring items in line with overrides already in the verdict store, in
    /// case a previous process stopped between the two writes.
    fn reconcile(&self) -> Result<(), ReviewError> {
        let mut inner = self.lock();
        let pending: Vec<ReviewItem> = inner
            .items
            .values()
            .filter(|i| i.status == ReviewStatus::Pending)
            .cloned()
            .collect();
        for item in pending {
            if let Some(o) = self.verdicts.override_for(&item.case_id, item.class) {
                if o.review_item == item.id {
                    write_event(
                        &mut inner,
                        Event::Resolved {
                            id: item.id,
                            resolution: o.resolution,
                            note: o.note,
                            reviewer: o.reviewer,
                            at_ms: o.timestamp_ms,
                        },
                    )?;
                }
            }
        }
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn verdicts(&self) -> &Arc<VerdictStore> {
        &self.verdicts
    }

    /// Add a flagged case, or refresh the images and reason of a pending
    /// item for the same (case, class). Resolved items are left alone.
    pub fn enqueue(&self, draft: ReviewDraft) -> Result<ReviewItem, ReviewError> {
        let mut inner = self.lock();
        let existing = inner
            .items
            .values()
            .find(|i| i.case_id == draft.case_id && i.class == draft.class)
            .cloned();
        if let Some(item) = &existing {
            if item.status == ReviewStatus::Resolved {
                return Ok(item.clone());
            }
        }
        let id = existing.as_ref().map_or(inner.next_id, |i| i.id);
        let dir = self.root.join("images").join(id.to_string());
        fs::create_dir_all(&dir)?;
        for (slot, png) in &draft.images {
            fs::write(dir.join(format!("{}.png", slot.as_str())), png)?;
        }
        let item = ReviewItem {
            id,
            case_id: draft.case_id,
            class: draft.class,
            flag_reason: draft.flag_reason,
            images: draft.images.iter().map(|(s, _)| *s).collect(),
            status: ReviewStatus::Pending,
            resolution: None,
            note: String::new(),
            reviewer: None,
            flagged_at_ms: existing.map_or_else(now_ms, |i| i.flagged_at_ms),
            resolved_at_ms: None,
        };
        write_event(&mut inner, Event::Flagged { item: item.clone() })?;
        inner.next_id = inner.next_id.max(id + 1);
        Ok(item)
    }

    pub fn get(&self, id: u64) -> Option<ReviewItem> {
        self.lock().items.get(&id).cloned()
    }

    pub fn find(&self, case_id: &str, class: OrganClass) -> Option<ReviewItem> {
        self.lock()
            .items
            .values()
            .find(|i| i.case_id == case_id && i.class == class)
            .cloned()
    }

    pub fn all(&self) -> Vec<ReviewItem> {
        self.lock().items.values().cloned().collect()
    }

    /// Items ordered by flag time, then case id, then id.
    pub fn list(&self, query: &ListQuery) -> Result<ReviewPage, ReviewError> {
        let limit = match query.limit {
            0 => DEFAULT_PAGE_SIZE,
            n => n.min(MAX_PAGE_SIZE),
        };
        let mut items: Vec<ReviewItem> = self
            .lock()
            .items
            .values()
            .filter(|i| query.status.is_none_or(|s| i.status == s))
            .filter(|i| query.class.is_none_or(|c| i.class == c))
            .cloned()
            .collect();
        let order = |i: &ReviewItem| (i.flagged_at_ms, i.case_id.clone(), i.id);
        items.sort_by_key(order);
        let start = match query.cursor {
            None => 0,
            Some(id) => {
                let anchor = self
                    .get(id)
                    .ok_or_else(|| ReviewError::BadRequest(format!("unknown cursor {id}")))?;
                let key = order(&anchor);
                items.partition_point(|i| order(i) <= key)
            }
        };
        let page: Vec<ReviewItem> = items.iter().skip(start).take(limit).cloned().collect();
        let next_cursor = if start + page.len() < items.len() {
            page.last().map(|i| i.id)
        } else {
            None
        };
        Ok(ReviewPage {
            items: page,
            next_cursor,
        })
    }

    pub fn image(&self, id: u64, slot: ImageSlot) -> Result<Vec<u8>, ReviewError> {
        let item = self
            .get(id)
            .ok_or(ReviewError::NotFound(format!("review item {id}")))?;
        if !item.images.contains(&slot) {
            return Err(ReviewError::NotFound(format!(
                "image {} of item {id}",
                slot.as_str()
            )));
        }
        Ok(fs::read(
            self.root
                .join("images")
                .join(id.to_string())
                .join(format!("{}.png", slot.as_str())),
        )?)
    }

    /// Resolve a pending item and append exactly one override verdict.
    /// Repeating the same resolution is a no-op; a different one conflicts.
    pub fn submit_review(
        &self,
        id: u64,
        resolution: Resolution,
        note: &str,
        reviewer: Option<&str>,
    ) -> Result<ReviewItem, ReviewError> {
        let mut inner = self.lock();
        let item = inner
            .items
            .get(&id)
            .cloned()
            .ok_or(ReviewError::NotFound(format!("review item {id}")))?;
        if item.status == ReviewStatus::Resolved {
            return if item.resolution == Some(resolution) {
                Ok(item)
            } else {
                Err(ReviewError::Conflict(Box::new(item)))
            };
        }
        let at_ms = now_ms();
        self.verdicts
            .record(OverrideVerdict {
                case_id: item.case_id.clone(),
                class: item.class,
                review_item: id,
                resolution,
                note: note.to_string(),
                reviewer: reviewer.map(str::to_string),
                timestamp_ms: at_ms,
            })
            .map_err(|e| match e {
                VerdictError::Io(io) => ReviewError::Io(io),
                other => ReviewError::Io(std::io::Error::other(other.to_string())),
            })?;
        write_event(
            &mut inner,
            Event::Resolved {
                id,
                resolution,
                note: note.to_string(),
                reviewer: reviewer.map(str::to_string),
                at_ms,
            },
        )?;
        Ok(inner.items[&id].clone())
    }
}

fn apply(items: &mut BTreeMap<u64, ReviewItem>, event: Event) {
    match event {
        Event::Flagged { item } => {
            items.insert(item.id, item);
        }
        Event::Resolved {
            id,
            resolution,
            note,
            reviewer,
            at_ms,
        } => {
            if let Some(item) = items.get_mut(&id) {
                item.status = ReviewStatus::Resolved;
                item.resolution = Some(resolution);
                item.note = note;
                item.reviewer = reviewer;
                item.resolved_at_ms = Some(at_ms);
            }
        }
    }
}

fn write_event(inner: &mut Inner, event: Event) -> Result<(), ReviewError> {
    let mut line = serde_json::to_string(&event).map_err(std::io::Error::other)?;
    line.push('\n');
    inner.log.write_all(line.as_bytes())?;
    inner.log.flush()?;
    apply(&mut inner.items, event);
    Ok(())
}
