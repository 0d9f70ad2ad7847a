//! Synthetic CT phantoms, candidate labels and scripted critic answers.
//!
//! Used by the examples and tests to exercise the whole pipeline without
//! patient data or a model endpoint. A phantom is an elliptic soft-tissue
//! body with a bone rod for a spine and one ellipsoid organ. Each case gets
//! two candidate labels: the true ellipsoid and a corrupted copy, in random
//! order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde_json::json;

use crate::class::{Candidate, OrganClass};
use crate::prompt::ScriptStep;
use crate::report::{GroundTruth, GroundTruthRecord, Truth};
use crate::volume::{
    write_label, write_volume, Affine, LabelVolume, ManifestEntry, VolumeError, VoxelVolume,
};

pub const DEFAULT_DIMS: [usize; 3] = [48, 40, 64];
pub const AIR_HU: f32 = -1000.0;
pub const TISSUE_HU: f32 = 40.0;
pub const ORGAN_HU: f32 = 90.0;
pub const BONE_HU: f32 = 900.0;

fn index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    /// Centre in voxel coordinates.
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let p = [x as f64, y as f64, z as f64];
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    pub fn label(&self, class: OrganClass, source: &str, dims: [usize; 3]) -> LabelVolume {
        let mut label = LabelVolume::empty(class, source, dims);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if self.contains(x, y, z) {
                        label.set(x, y, z, true);
                    }
                }
            }
        }
        label
    }
}

/// Soft-tissue body, air outside, a bone rod posteriorly along z and the
/// given organs at organ density. Tissue carries deterministic noise.
pub fn phantom_ct(id: &str, dims: [usize; 3], organs: &[Ellipsoid], seed: u64) -> VoxelVolume {
    let mut rng = Pcg64::seed_from_u64(seed);
    let [nx, ny, nz] = dims;
    let (cx, cy) = (nx as f64 / 2.0, ny as f64 / 2.0);
    let (rx, ry) = (0.45 * nx as f64, 0.42 * ny as f64);
    let spine = (cx, 0.22 * ny as f64, (nx.min(ny) as f64 * 0.07).max(1.5));
    let mut voxels = vec![AIR_HU; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (fx, fy) = (x as f64, y as f64);
                if ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2) > 1.0 {
                    continue;
                }
                let noise: f32 = rng.random_range(-15.0..15.0);
                let mut hu = TISSUE_HU + noise;
                if organs.iter().any(|o| o.contains(x, y, z)) {
                    hu = ORGAN_HU + noise;
                }
                if (fx - spine.0).powi(2) + (fy - spine.1).powi(2) <= spine.2 * spine.2 {
                    hu = BONE_HU;
                }
                voxels[index(dims, x, y, z)] = hu;
            }
        }
    }
    let spacing = [1.5, 1.5, 2.0];
    VoxelVolume::new(id, dims, spacing, Affine::scaling(spacing), voxels)
        .expect("phantom geometry is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// Shift by whole voxels; voxels moved outside the volume are lost.
    Translate([i64; 3]),
    /// Keep the part of the label within the lowest `keep` fraction of its
    /// extent along `axis`.
    Truncate {
        axis: usize,
        keep: f64,
    },
    Erase,
}

pub fn corrupt(label: &LabelVolume, corruption: Corruption, source: &str) -> LabelVolume {
    let dims = label.dims();
    let mut out = LabelVolume::empty(label.class(), source, dims);
    match corruption {
        Corruption::Erase => {}
        Corruption::Translate(shift) => {
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        if !label.get(x, y, z) {
                            continue;
                        }
                        let p = [
                            x as i64 + shift[0],
                            y as i64 + shift[1],
                            z as i64 + shift[2],
                        ];
                        if (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < dims[a]) {
                            out.set(p[0] as usize, p[1] as usize, p[2] as usize, true);
                        }
                    }
                }
            }
        }
        Corruption::Truncate { axis, keep } => {
            let mut lo = usize::MAX;
            let mut hi = 0;
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        if label.get(x, y, z) {
                            let c = [x, y, z][axis];
                            lo = lo.min(c);
                            hi = hi.max(c);
                        }
                    }
                }
            }
            if lo <= hi {
                let cut = lo as f64 + keep * (hi - lo + 1) as f64;
                for z in 0..dims[2] {
                    for y in 0..dims[1] {
                        for x in 0..dims[0] {
                            if label.get(x, y, z) && ([x, y, z][axis] as f64) < cut {
                                out.set(x, y, z, true);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// How the scripted critic answers for a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockBehaviour {
    /// Always names the correct label, whichever position it is shown in.
    Faithful,
    /// Always answers "first", so the two orders disagree.
    PositionBias,
    /// Declines to choose.
    Reject,
    /// Summaries that match no known answer.
    Babble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// The wrong candidate is the truth shifted by one slice.
    NearIdentical,
    Corrupted(CorruptionKind),
    /// The organ is missing from the scan; one candidate is empty.
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    Translate,
    Truncate,
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub case_id: String,
    pub class: OrganClass,
    pub ct: VoxelVolume,
    pub candidates: [LabelVolume; 2],
    /// The candidate that matches the phantom.
    pub correct: Candidate,
    pub organ_present: bool,
    pub kind: PairKind,
    pub behaviour: MockBehaviour,
}

pub const BATCH_CLASSES: [OrganClass; 4] = [
    OrganClass::Aorta,
    OrganClass::Kidneys,
    OrganClass::Liver,
    OrganClass::Spleen,
];

fn organ_shape(class: OrganClass, dims: [usize; 3], rng: &mut Pcg64) -> Ellipsoid {
    let [nx, ny, nz] = dims.map(|d| d as f64);
    let mut j = |v: f64, spread: f64| v + rng.random_range(-spread..spread);
    // Patient right is low x, anterior is high y, superior is high z.
    let (center, radii) = match class {
        OrganClass::Liver => (
            [0.33 * nx, 0.55 * ny, 0.65 * nz],
            [0.18 * nx, 0.22 * ny, 0.14 * nz],
        ),
        OrganClass::Spleen => (
            [0.70 * nx, 0.40 * ny, 0.68 * nz],
            [0.09 * nx, 0.12 * ny, 0.09 * nz],
        ),
        OrganClass::Kidneys => (
            [0.66 * nx, 0.33 * ny, 0.50 * nz],
            [0.07 * nx, 0.09 * ny, 0.10 * nz],
        ),
        OrganClass::Aorta => (
            [0.52 * nx, 0.40 * ny, 0.50 * nz],
            [0.05 * nx, 0.06 * ny, 0.38 * nz],
        ),
        _ => (
            [0.5 * nx, 0.5 * ny, 0.5 * nz],
            [0.1 * nx, 0.1 * ny, 0.1 * nz],
        ),
    };
    Ellipsoid {
        center: [j(center[0], 1.5), j(center[1], 1.5), j(center[2], 2.0)],
        radii: [
            j(radii[0], 0.5).max(1.5),
            j(radii[1], 0.5).max(1.5),
            j(radii[2], 1.0).max(1.5),
        ],
    }
}

/// `n` cases over [`BATCH_CLASSES`]. The mix is fixed by index: eight in
/// ten are near-identical pairs, one in twenty-five has the organ absent,
/// the rest carry a translated or truncated candidate. Agreeing pairs have
/// to dominate for a mean-minus-std gate to let the disagreeing ones
/// through. Within every fifty cases, 18, 19, 68 and 69 get a
/// position-biased critic, 38 and 88 a rejecting one, 49 and 99 a babbling
/// one.
pub fn generate_batch(n: usize, seed: u64, dims: [usize; 3]) -> Vec<SyntheticCase> {
    let mut rng = Pcg64::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = BATCH_CLASSES[i % BATCH_CLASSES.len()];
            let case_id = format!("case{i:03}");
            let kind = if i % 25 == 5 {
                PairKind::Absent
            } else if i % 10 < 8 {
                PairKind::NearIdentical
            } else if rng.random_bool(0.5) {
                PairKind::Corrupted(CorruptionKind::Translate)
            } else {
                PairKind::Corrupted(CorruptionKind::Truncate)
            };
            let behaviour = match ((i / 10) % 5, i % 10) {
                (1, 8 | 9) => MockBehaviour::PositionBias,
                (3, 8) => MockBehaviour::Reject,
                (4, 9) => MockBehaviour::Babble,
                _ => MockBehaviour::Faithful,
            };
            let shape = organ_shape(class, dims, &mut rng);
            let truth_label = shape.label(class, "truth", dims);
            let organ_present = kind != PairKind::Absent;
            let organs: &[Ellipsoid] = if organ_present {
                std::slice::from_ref(&shape)
            } else {
                &[]
            };
            let ct = phantom_ct(&case_id, dims, organs, rng.random());
            let (good, bad) = match kind {
                PairKind::NearIdentical => (
                    truth_label.clone(),
                    corrupt(&truth_label, Corruption::Translate([0, 0, 1]), ""),
                ),
                PairKind::Corrupted(CorruptionKind::Translate) => {
                    let shift = [
                        rng.random_range(3..5) * if rng.random_bool(0.5) { 1 } else { -1 },
                        0,
                        rng.random_range(-4..4),
                    ];
                    (
                        truth_label.clone(),
                        corrupt(&truth_label, Corruption::Translate(shift), ""),
                    )
                }
                PairKind::Corrupted(CorruptionKind::Truncate) => {
                    let keep = rng.random_range(0.1..0.25);
                    (
                        truth_label.clone(),
                        corrupt(&truth_label, Corruption::Truncate { axis: 2, keep }, ""),
                    )
                }
                PairKind::Absent => (LabelVolume::empty(class, "", dims), truth_label.clone()),
            };
            let correct = if rng.random_bool(0.5) {
                Candidate::First
            } else {
                Candidate::Second
            };
            let (first, second) = match correct {
                Candidate::First => (good, bad),
                Candidate::Second => (bad, good),
            };
            SyntheticCase {
                candidates: [
                    first.with_source(format!("{case_id}_a")),
                    second.with_source(format!("{case_id}_b")),
                ],
                case_id,
                class,
                ct,
                correct,
                organ_present,
                kind,
                behaviour,
            }
        })
        .collect()
}

fn positional(correct: Candidate, inverted: bool) -> &'static str {
    match (correct, inverted) {
        (Candidate::First, false) | (Candidate::Second, true) => "first",
        _ => "second",
    }
}

/// Scripted answers for every step the pipeline may ask about this case.
pub fn mock_answers(case: &SyntheticCase) -> Vec<(ScriptStep, String)> {
    let organ = case.class.as_str();
    let presence = if case.organ_present {
        format!("Yes, the {organ} should be visible in this scan.")
    } else {
        format!("No, the {organ} does not appear to be present.")
    };
    let choice = |inverted: bool| -> (String, String) {
        match case.behaviour {
            MockBehaviour::Faithful => {
                let pos = positional(case.correct, inverted);
                (
                    format!("The {pos} image matches the {organ} better."),
                    pos.to_string(),
                )
            }
            MockBehaviour::PositionBias => (
                "The first image looks more plausible.".into(),
                "first".into(),
            ),
            MockBehaviour::Reject => (
                "Both overlays look similar to me.".into(),
                "Both are similar.".into(),
            ),
            MockBehaviour::Babble => (
                "Hard to tell from this view.".into(),
                "It depends on the slice.".into(),
            ),
        }
    };
    let (ab, sab) = choice(false);
    let (ba, sba) = choice(true);
    let single_ok = case.correct == Candidate::First;
    let (single, ssingle) = match case.behaviour {
        MockBehaviour::Babble => ("Hard to tell.".to_string(), "maybe".to_string()),
        _ if single_ok => ("The overlay follows the organ.".into(), "correct".into()),
        _ => (
            "The overlay misses part of the organ.".into(),
            "incorrect".into(),
        ),
    };
    vec![
        (ScriptStep::Presence, presence),
        (ScriptStep::CompareAb, ab),
        (ScriptStep::SummaryAb, sab),
        (ScriptStep::CompareBa, ba),
        (ScriptStep::SummaryBa, sba),
        (ScriptStep::Single, single),
        (ScriptStep::SummarySingle, ssingle),
    ]
}

pub fn ground_truth(cases: &[SyntheticCase]) -> Vec<GroundTruthRecord> {
    cases
        .iter()
        .map(|c| GroundTruthRecord {
            case_id: c.case_id.clone(),
            class: c.class,
            truth: match c.correct {
                Candidate::First => Truth::First,
                Candidate::Second => Truth::Second,
            },
        })
        .collect()
}

/// Files written by [`write_batch`].
#[derive(Debug, Clone)]
pub struct BatchFiles {
    pub manifest: PathBuf,
    pub truth: PathBuf,
    pub mock_transcript: PathBuf,
}

/// Write volumes, a manifest, ground truth and a mock transcript under
/// `dir`.
pub fn write_batch(dir: &Path, cases: &[SyntheticCase]) -> Result<BatchFiles, VolumeError> {
    let io = |e: std::io::Error| VolumeError::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    fs::create_dir_all(dir.join("ct")).map_err(io)?;
    fs::create_dir_all(dir.join("labels")).map_err(io)?;
    let mut manifest = String::new();
    let mut transcript = String::new();
    for case in cases {
        let ct_rel = PathBuf::from(format!("ct/{}.nii.gz", case.case_id));
        write_volume(&dir.join(&ct_rel), &case.ct)?;
        let mut label_paths = Vec::new();
        for (label, suffix) in case.candidates.iter().zip(["a", "b"]) {
            let rel = PathBuf::from(format!(
                "labels/{}_{}_{suffix}.nii.gz",
                case.case_id, case.class
            ));
            write_label(&dir.join(&rel), label, &case.ct)?;
            label_paths.push(rel);
        }
        let entry = ManifestEntry {
            case_id: case.case_id.clone(),
            ct_path: ct_rel,
            class: case.class,
            label_paths,
        };
        manifest.push_str(&serde_json::to_string(&entry).expect("manifest entry serializes"));
        manifest.push('\n');
        for (step, answer) in mock_answers(case) {
            let line = json!({"case_id": case.case_id, "class": case.class, "step": step, "raw_response": answer});
            let _ = writeln!(transcript, "{line}");
        }
    }
    let files = BatchFiles {
        manifest: dir.join("manifest.jsonl"),
        truth: dir.join("truth.csv"),
        mock_transcript: dir.join("mock_transcript.jsonl"),
    };
    fs::write(&files.manifest, manifest).map_err(io)?;
    fs::write(&files.mock_transcript, transcript).map_err(io)?;
    GroundTruth::write_csv(&files.truth, &ground_truth(cases))
        .map_err(|e| io(std::io::Error::other(e.to_string())))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_is_deterministic() {
        let a = generate_batch(6, 7, [16, 12, 20]);
        let b = generate_batch(6, 7, [16, 12, 20]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ct.voxels(), y.ct.voxels());
            assert_eq!(x.candidates[0].mask(), y.candidates[0].mask());
            assert_eq!(x.correct, y.correct);
        }
    }

    #[test]
    fn corruptions() {
        let dims = [10, 10, 10];
        let e = Ellipsoid {
            center: [5.0, 5.0, 5.0],
            radii: [3.0, 3.0, 3.0],
        };
        let l = e.label(OrganClass::Liver, "t", dims);
        let moved = corrupt(&l, Corruption::Translate([1, 0, 0]), "m");
        assert!(moved.get(6, 5, 5) && moved.get(8, 5, 5) && !moved.get(2, 5, 5));
        let cut = corrupt(&l, Corruption::Truncate { axis: 2, keep: 0.5 }, "c");
        assert!(cut.foreground_count() < l.foreground_count());
        assert!(!cut.get(5, 5, 8) && cut.get(5, 5, 2));
        assert!(corrupt(&l, Corruption::Erase, "e").is_empty());
    }
}
