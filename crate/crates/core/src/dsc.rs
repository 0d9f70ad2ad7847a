//! Dice similarity between candidate masks and the per-class gate that
//! decides whether a pair differs enough to be worth a comparison.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::class::OrganClass;
use crate::projection::{project_label_mask, LabelProjectionMask};
use crate::volume::LabelVolume;

#[derive(Debug, thiserror::Error)]
pub enum DscError {
    #[error("mask size mismatch: {0} vs {1} elements")]
    Geometry(usize, usize),
    #[error("threshold table {path}: {reason}")]
    Table { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Dice coefficient `2|a ∩ b| / (|a| + |b|)` over two binary masks given
/// as 0/1 (any nonzero = on). Two empty masks are identical: 1.0.
pub fn dice(a: &[u8], b: &[u8]) -> Result<f64, DscError> {
    if a.len() != b.len() {
        return Err(DscError::Geometry(a.len(), b.len()));
    }
    let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x != 0, y != 0);
        na += u64::from(x);
        nb += u64::from(y);
        inter += u64::from(x && y);
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

pub fn dice_projected(a: &LabelProjectionMask, b: &LabelProjectionMask) -> Result<f64, DscError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(DscError::Geometry(a.pixels.len(), b.pixels.len()));
    }
    dice(&a.pixels, &b.pixels)
}

/// Where the Dice of a candidate pair is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiceSpace {
    /// On the frontal label projections (default).
    #[default]
    Projected,
    /// On the full 3D masks.
    Volumetric,
}

pub fn pair_dice(y1: &LabelVolume, y2: &LabelVolume, space: DiceSpace) -> Result<f64, DscError> {
    match space {
        DiceSpace::Projected => dice_projected(&project_label_mask(y1), &project_label_mask(y2)),
        DiceSpace::Volumetric => dice(y1.mask(), y2.mask()),
    }
}

/// Per-class Dice distribution summary; pairs at or above `threshold` are
/// considered too similar to compare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DscStats {
    pub class: OrganClass,
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
}

impl DscStats {
    pub fn new(class: OrganClass, mean: f64, std: f64) -> Self {
        DscStats {
            class,
            mean,
            std,
            threshold: mean - std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsWarning {
    pub class: OrganClass,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassStatsReport {
    pub stats: Vec<DscStats>,
    pub warnings: Vec<StatsWarning>,
}

impl ClassStatsReport {
    pub fn get(&self, class: OrganClass) -> Option<&DscStats> {
        self.stats.iter().find(|s| s.class == class)
    }
}

/// Mean, population standard deviation and `mean - std` per class.
///
/// `expected` lists classes the caller needs; any of them without samples
/// is reported in `warnings` instead of `stats`. Non-finite samples are
/// ignored with a warning.
pub fn compute_class_stats(
    samples: &[(OrganClass, f64)],
    expected: &[OrganClass],
) -> ClassStatsReport {
    let mut by_class: BTreeMap<OrganClass, Vec<f64>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for &(class, d) in samples {
        if d.is_finite() {
            by_class.entry(class).or_default().push(d);
        } else {
            warnings.push(StatsWarning {
                class,
                message: format!("ignored non-finite dice {d}"),
            });
        }
    }
    for &class in expected {
        if !by_class.contains_key(&class) {
            warnings.push(StatsWarning {
                class,
                message: "no dice samples; class has no threshold".into(),
            });
        }
    }
    let stats = by_class
        .into_iter()
        .map(|(class, mut values)| {
            // Sorted summation makes the result independent of sample order.
            values.sort_by(f64::total_cmp);
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let mut sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            sq.sort_by(f64::total_cmp);
            let var = sq.iter().sum::<f64>() / n;
            DscStats::new(class, mean, var.sqrt())
        })
        .collect();
    ClassStatsReport { stats, warnings }
}

/// Compare only when the pair is strictly less similar than the threshold.
pub fn should_compare(dsc: f64, stats: &DscStats) -> bool {
    dsc < stats.threshold
}

/// Write thresholds as CSV: `class,mean,std,threshold`.
pub fn write_threshold_table(path: &Path, stats: &[DscStats]) -> Result<(), DscError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    for s in stats {
        w.serialize(s).map_err(|e| table_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a threshold table; the stored threshold is used as written.
pub fn read_threshold_table(path: &Path) -> Result<Vec<DscStats>, DscError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| table_err(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<DscStats>, _>>()
        .map_err(|e| table_err(path, e))
}

fn table_err(path: &Path, e: impl std::fmt::Display) -> DscError {
    DscError::Table {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}
