//! CT and label volume ingestion.
//!
//! Volumes are held in canonical RAS+ voxel order: axis 0 runs patient
//! left to right, axis 1 posterior to anterior, axis 2 inferior to
//! superior. The frontal projection therefore always sums over axis 1.

pub mod manifest;
pub mod nifti;

use std::path::{Path, PathBuf};

use crate::class::OrganClass;

pub use manifest::{CaseManifest, ManifestEntry, ManifestError, RunMode};

#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a readable NIfTI-1 file: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: expected a single 3D image, found dimensions {dims:?}")]
    Dimensionality { path: PathBuf, dims: Vec<usize> },
    #[error("orientation error: {0}")]
    Orientation(String),
    #[error("label dims {label:?} do not match volume dims {volume:?}")]
    Alignment {
        label: [usize; 3],
        volume: [usize; 3],
    },
    #[error("{path}: invalid label data: {reason}")]
    Data { path: PathBuf, reason: String },
    #[error("invalid volume: {0}")]
    Invalid(String),
}

/// Voxel-index to patient-coordinate (RAS+, mm) transform, stored as the
/// top three rows of a homogeneous 4x4 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine(pub [[f64; 4]; 3]);

impl Affine {
    pub fn scaling(spacing: [f64; 3]) -> Self {
        let mut rows = [[0.0; 4]; 3];
        for (i, s) in spacing.iter().enumerate() {
            rows[i][i] = *s;
        }
        Affine(rows)
    }

    pub fn apply(&self, index: [f64; 3]) -> [f64; 3] {
        self.0
            .map(|row| row[0] * index[0] + row[1] * index[1] + row[2] * index[2] + row[3])
    }

    fn linear_det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// How to rearrange stored axes into canonical order.
///
/// Canonical axis `r` is stored axis `source[r]`, reversed when `flip[r]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisMapping {
    pub source: [usize; 3],
    pub flip: [bool; 3],
}

impl AxisMapping {
    pub const IDENTITY: AxisMapping = AxisMapping {
        source: [0, 1, 2],
        flip: [false; 3],
    };

    /// Closest canonical mapping for an affine, assigning each stored axis
    /// to the patient axis it is most aligned with.
    pub fn for_affine(affine: &Affine) -> Result<Self, VolumeError> {
        let m = &affine.0;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VolumeError::Orientation(
                "affine has non-finite entries".into(),
            ));
        }
        let scale = m
            .iter()
            .flat_map(|r| r[..3].iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let det = affine.linear_det();
        if scale == 0.0 || det.abs() <= 1e-12 * scale.powi(3) {
            return Err(VolumeError::Orientation(format!(
                "singular affine (det = {det:e})"
            )));
        }
        let mut cells: Vec<(usize, usize)> =
            (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        cells.sort_by(|a, b| m[b.0][b.1].abs().total_cmp(&m[a.0][a.1].abs()));
        let mut source = [usize::MAX; 3];
        let mut flip = [false; 3];
        let mut used_col = [false; 3];
        for (r, c) in cells {
            if source[r] != usize::MAX || used_col[c] {
                continue;
            }
            source[r] = c;
            flip[r] = m[r][c] < 0.0;
            used_col[c] = true;
        }
        Ok(AxisMapping { source, flip })
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    fn target_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        self.source.map(|c| dims[c])
    }

    fn rearrange<T: Copy>(&self, data: &[T], dims: [usize; 3]) -> Vec<T> {
        let out_dims = self.target_dims(dims);
        let strides = [1, dims[0], dims[0] * dims[1]];
        let mut out = Vec::with_capacity(data.len());
        for k in 0..out_dims[2] {
            for j in 0..out_dims[1] {
                for i in 0..out_dims[0] {
                    let mut offset = 0;
                    for (r, pos) in [i, j, k].into_iter().enumerate() {
                        let c = self.source[r];
                        let p = if self.flip[r] { dims[c] - 1 - pos } else { pos };
                        offset += p * strides[c];
                    }
                    out.push(data[offset]);
                }
            }
        }
        out
    }

    fn remap_affine(&self, affine: &Affine, dims: [usize; 3]) -> Affine {
        let m = &affine.0;
        let mut out = [[0.0; 4]; 3];
        for (row, orig) in out.iter_mut().zip(m) {
            row[3] = orig[3];
        }
        for r in 0..3 {
            let c = self.source[r];
            let sign = if self.flip[r] { -1.0 } else { 1.0 };
            for (row, orig) in out.iter_mut().zip(m) {
                row[r] = sign * orig[c];
                if self.flip[r] {
                    row[3] += orig[c] * (dims[c] - 1) as f64;
                }
            }
        }
        Affine(out)
    }
}

/// A CT scan: Hounsfield intensities on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    id: String,
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Affine,
    voxels: Vec<f32>,
}

impl VoxelVolume {
    pub fn new(
        id: impl Into<String>,
        dims: [usize; 3],
        spacing: [f64; 3],
        affine: Affine,
        voxels: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::Invalid(format!(
                "zero-sized dimension in {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Invalid(format!(
                "non-positive spacing {spacing:?}"
            )));
        }
        if voxels.len() != dims.iter().product::<usize>() {
            return Err(VolumeError::Invalid(format!(
                "{} voxels for dims {dims:?}",
                voxels.len()
            )));
        }
        Ok(VoxelVolume {
            id: id.into(),
            dims,
            spacing,
            affine,
            voxels,
        })
    }

    /// Canonically oriented volume with unit spacing and identity affine.
    pub fn from_canonical(
        id: impl Into<String>,
        dims: [usize; 3],
        voxels: Vec<f32>,
    ) -> Result<Self, VolumeError> {
        Self::new(id, dims, [1.0; 3], Affine::scaling([1.0; 3]), voxels)
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn affine(&self) -> &Affine {
        &self.affine
    }
    /// Voxels in x-fastest order.
    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    pub fn is_canonical(&self) -> bool {
        AxisMapping::for_affine(&self.affine).is_ok_and(|m| m.is_identity())
    }
}

/// Rearrange a volume so its axes follow the canonical RAS+ order.
pub fn reorient_canonical(volume: VoxelVolume) -> Result<VoxelVolume, VolumeError> {
    let mapping = AxisMapping::for_affine(&volume.affine)?;
    if mapping.is_identity() {
        return Ok(volume);
    }
    let dims = volume.dims;
    Ok(VoxelVolume {
        voxels: mapping.rearrange(&volume.voxels, dims),
        affine: mapping.remap_affine(&volume.affine, dims),
        spacing: mapping.source.map(|c| volume.spacing[c]),
        dims: mapping.target_dims(dims),
        id: volume.id,
    })
}

fn file_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.trim_end_matches(".gz")
        .trim_end_matches(".nii")
        .to_string()
}

/// Load a CT volume and bring it to canonical orientation.
pub fn load_volume(path: &Path) -> Result<VoxelVolume, VolumeError> {
    let image = nifti::read_image(path)?;
    let affine = image.header.affine();
    let volume = VoxelVolume::new(
        file_stem(path),
        image.dims,
        image.header.spacing(),
        affine,
        image.values.iter().map(|&v| v as f32).collect(),
    )?;
    reorient_canonical(volume)
}

/// Write a volume as float32 NIfTI-1 (gzip when the path ends in `.gz`).
pub fn write_volume(path: &Path, volume: &VoxelVolume) -> Result<(), VolumeError> {
    nifti::write_image(
        path,
        volume.dims,
        volume.spacing,
        &volume.affine,
        nifti::VoxelData::F32(&volume.voxels),
    )
}

/// Binary mask for one organ class, aligned voxel-for-voxel with a CT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    class: OrganClass,
    source_id: String,
    dims: [usize; 3],
    mask: Vec<u8>,
}

impl LabelVolume {
    /// Any nonzero entry of `mask` counts as foreground.
    pub fn new(
        class: OrganClass,
        source_id: impl Into<String>,
        dims: [usize; 3],
        mask: Vec<u8>,
    ) -> Result<Self, VolumeError> {
        if mask.len() != dims.iter().product::<usize>() {
            return Err(VolumeError::Invalid(format!(
                "{} mask entries for dims {dims:?}",
                mask.len()
            )));
        }
        Ok(LabelVolume {
            class,
            source_id: source_id.into(),
            dims,
            mask: mask.into_iter().map(|v| u8::from(v != 0)).collect(),
        })
    }

    pub fn empty(class: OrganClass, source_id: impl Into<String>, dims: [usize; 3]) -> Self {
        LabelVolume {
            class,
            source_id: source_id.into(),
            dims,
            mask: vec![0; dims.iter().product()],
        }
    }

    pub fn class(&self) -> OrganClass {
        self.class
    }
    pub fn source_id(&self) -> &str {
        &self.source_id
    }
    pub fn with_source(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    /// Values are exactly 0 or 1, x-fastest order.
    pub fn mask(&self) -> &[u8] {
        &self.mask
    }
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.mask[x + self.dims[0] * (y + self.dims[1] * z)] != 0
    }
    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = x + self.dims[0] * (y + self.dims[1] * z);
        self.mask[i] = u8::from(on);
    }
    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v != 0).count()
    }
    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&v| v != 0)
    }
}

/// True when the label has no foreground voxels.
pub fn is_empty_label(label: &LabelVolume) -> bool {
    label.is_empty()
}

/// Load a candidate label, binarize it and check it lines up with `volume`.
pub fn load_label_aligned(
    path: &Path,
    volume: &VoxelVolume,
    class: OrganClass,
) -> Result<LabelVolume, VolumeError> {
    let image = nifti::read_image(path)?;
    if let Some(v) = image.values.iter().find(|v| **v < 0.0 || v.is_nan()) {
        return Err(VolumeError::Data {
            path: path.to_path_buf(),
            reason: format!("stored value {v} is negative or NaN"),
        });
    }
    let mapping = AxisMapping::for_affine(&image.header.affine())?;
    let raw: Vec<u8> = image.values.iter().map(|&v| u8::from(v != 0.0)).collect();
    let (dims, mask) = if mapping.is_identity() {
        (image.dims, raw)
    } else {
        (
            mapping.target_dims(image.dims),
            mapping.rearrange(&raw, image.dims),
        )
    };
    if dims != volume.dims() {
        return Err(VolumeError::Alignment {
            label: dims,
            volume: volume.dims(),
        });
    }
    LabelVolume::new(class, file_stem(path), dims, mask)
}

/// Write a label as uint8 NIfTI-1 in the geometry of `reference`.
pub fn write_label(
    path: &Path,
    label: &LabelVolume,
    reference: &VoxelVolume,
) -> Result<(), VolumeError> {
    if label.dims != reference.dims {
        return Err(VolumeError::Alignment {
            label: label.dims,
            volume: reference.dims,
        });
    }
    nifti::write_image(
        path,
        label.dims,
        reference.spacing,
        &reference.affine,
        nifti::VoxelData::U8(&label.mask),
    )
}
