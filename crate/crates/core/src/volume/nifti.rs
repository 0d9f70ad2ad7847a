//! Minimal NIfTI-1 single-file (`.nii` / `.nii.gz`) reader and writer.
//!
//! Only what CT volumes and label masks need: 3D scalar images, the common
//! integer and float datatypes, scaling slope/intercept, and qform/sform
//! orientation. Extensions are skipped.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Affine, VolumeError};

pub const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
pub const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_INT8: i16 = 256;
pub const DT_UINT16: i16 = 512;
pub const DT_UINT32: i16 = 768;
pub const DT_INT64: i16 = 1024;
pub const DT_UINT64: i16 = 1280;

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub big_endian: bool,
}

impl NiftiHeader {
    /// Spatial extent, rejecting anything that is not a single 3D volume.
    pub fn dims3(&self) -> Result<[usize; 3], Vec<usize>> {
        let ndim = self.dim[0].clamp(0, 7) as usize;
        let all: Vec<usize> = (1..=ndim).map(|i| self.dim[i].max(0) as usize).collect();
        if ndim < 3 || all.iter().skip(3).any(|&d| d != 1) || all.contains(&0) {
            return Err(all);
        }
        Ok([all[0], all[1], all[2]])
    }

    pub fn spacing(&self) -> [f64; 3] {
        [1, 2, 3].map(|i| {
            let p = f64::from(self.pixdim[i]).abs();
            if p > 0.0 && p.is_finite() {
                p
            } else {
                1.0
            }
        })
    }

    /// Voxel-to-patient (RAS+) affine: sform when set, else qform, else
    /// plain pixdim scaling.
    pub fn affine(&self) -> Affine {
        if self.sform_code > 0 {
            let mut rows = [[0.0; 4]; 3];
            for (r, row) in self.srow.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    rows[r][c] = f64::from(*v);
                }
            }
            return Affine(rows);
        }
        let spacing = self.spacing();
        if self.qform_code > 0 {
            let [b, c, d] = self.quatern.map(f64::from);
            let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
            let rot = [
                [
                    a * a + b * b - c * c - d * d,
                    2.0 * (b * c - a * d),
                    2.0 * (b * d + a * c),
                ],
                [
                    2.0 * (b * c + a * d),
                    a * a + c * c - b * b - d * d,
                    2.0 * (c * d - a * b),
                ],
                [
                    2.0 * (b * d - a * c),
                    2.0 * (c * d + a * b),
                    a * a + d * d - c * c - b * b,
                ],
            ];
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let scale = [spacing[0], spacing[1], spacing[2] * qfac];
            let mut rows = [[0.0; 4]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    rows[r][c] = rot[r][c] * scale[c];
                }
                rows[r][3] = f64::from(self.qoffset[r]);
            }
            return Affine(rows);
        }
        Affine::scaling(spacing)
    }

    /// Linear intensity scaling; a zero or non-finite slope means "none".
    pub fn scaling(&self) -> (f64, f64) {
        let slope = f64::from(self.scl_slope);
        if slope == 0.0 || !slope.is_finite() {
            (1.0, 0.0)
        } else {
            let inter = f64::from(self.scl_inter);
            (slope, if inter.is_finite() { inter } else { 0.0 })
        }
    }
}

/// Decoded image: header plus stored values with scaling already applied.
#[derive(Debug, Clone)]
pub struct NiftiImage {
    pub header: NiftiHeader,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

fn format_err(path: &Path, reason: impl Into<String>) -> VolumeError {
    VolumeError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, VolumeError> {
    let io_err = |source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_err(path, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Cursor<'_> {
    fn arr<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[at..at + N]);
        a
    }
    fn i16(&self, at: usize) -> i16 {
        let a = self.arr::<2>(at);
        if self.big_endian {
            i16::from_be_bytes(a)
        } else {
            i16::from_le_bytes(a)
        }
    }
    fn f32(&self, at: usize) -> f32 {
        let a = self.arr::<4>(at);
        if self.big_endian {
            f32::from_be_bytes(a)
        } else {
            f32::from_le_bytes(a)
        }
    }
}

pub fn parse_header(path: &Path, bytes: &[u8]) -> Result<NiftiHeader, VolumeError> {
    if bytes.len() < HEADER_SIZE {
        return Err(format_err(path, "file shorter than a NIfTI-1 header"));
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let big_endian = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => return Err(format_err(path, "sizeof_hdr is not 348")),
    };
    if &bytes[344..348] != MAGIC_SINGLE {
        return Err(format_err(
            path,
            "missing single-file NIfTI-1 magic \"n+1\"",
        ));
    }
    let c = Cursor { bytes, big_endian };
    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = c.i16(40 + 2 * i);
    }
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = c.f32(76 + 4 * i);
    }
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = c.f32(280 + 16 * r + 4 * k);
        }
    }
    Ok(NiftiHeader {
        dim,
        datatype: c.i16(70),
        bitpix: c.i16(72),
        pixdim,
        vox_offset: c.f32(108),
        scl_slope: c.f32(112),
        scl_inter: c.f32(116),
        qform_code: c.i16(252),
        sform_code: c.i16(254),
        quatern: [c.f32(256), c.f32(260), c.f32(264)],
        qoffset: [c.f32(268), c.f32(272), c.f32(276)],
        srow,
        big_endian,
    })
}

fn element_size(datatype: i16) -> Option<usize> {
    Some(match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 | DT_INT64 | DT_UINT64 => 8,
        _ => return None,
    })
}

fn decode_values(header: &NiftiHeader, data: &[u8], count: usize) -> Vec<f64> {
    let size = element_size(header.datatype).expect("checked by caller");
    let be = header.big_endian;
    macro_rules! decode {
        ($t:ty) => {
            data.chunks_exact(size)
                .take(count)
                .map(|ch| {
                    let a = ch.try_into().unwrap();
                    (if be {
                        <$t>::from_be_bytes(a)
                    } else {
                        <$t>::from_le_bytes(a)
                    }) as f64
                })
                .collect()
        };
    }
    match header.datatype {
        DT_UINT8 => data[..count].iter().map(|&v| f64::from(v)).collect(),
        DT_INT8 => data[..count].iter().map(|&v| f64::from(v as i8)).collect(),
        DT_INT16 => decode!(i16),
        DT_UINT16 => decode!(u16),
        DT_INT32 => decode!(i32),
        DT_UINT32 => decode!(u32),
        DT_FLOAT32 => decode!(f32),
        DT_FLOAT64 => decode!(f64),
        DT_INT64 => decode!(i64),
        DT_UINT64 => decode!(u64),
        _ => unreachable!(),
    }
}

/// Read a single-file NIfTI-1 image, gzip-compressed or not.
pub fn read_image(path: &Path) -> Result<NiftiImage, VolumeError> {
    let bytes = read_bytes(path)?;
    let header = parse_header(path, &bytes)?;
    let dims = header.dims3().map_err(|dims| VolumeError::Dimensionality {
        path: path.to_path_buf(),
        dims,
    })?;
    let size = element_size(header.datatype).ok_or_else(|| {
        format_err(
            path,
            format!("unsupported datatype code {}", header.datatype),
        )
    })?;
    let offset = if header.vox_offset.is_finite() && header.vox_offset >= HEADER_SIZE as f32 {
        header.vox_offset as usize
    } else {
        DATA_OFFSET
    };
    let count = dims[0] * dims[1] * dims[2];
    let needed = offset + count * size;
    if bytes.len() < needed {
        return Err(format_err(
            path,
            format!(
                "truncated voxel data: need {needed} bytes, have {}",
                bytes.len()
            ),
        ));
    }
    let mut values = decode_values(&header, &bytes[offset..], count);
    let (slope, inter) = header.scaling();
    if slope != 1.0 || inter != 0.0 {
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    Ok(NiftiImage {
        header,
        dims,
        values,
    })
}

/// Voxel payload for [`write_image`].
pub enum VoxelData<'a> {
    U8(&'a [u8]),
    F32(&'a [f32]),
}

/// Write a little-endian NIfTI-1 file with an sform affine; gzip when the
/// path ends in `.gz`.
pub fn write_image(
    path: &Path,
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: &Affine,
    data: VoxelData<'_>,
) -> Result<(), VolumeError> {
    let mut hdr = vec![0u8; DATA_OFFSET];
    let put_i16 =
        |buf: &mut [u8], at: usize, v: i16| buf[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 =
        |buf: &mut [u8], at: usize, v: f32| buf[at..at + 4].copy_from_slice(&v.to_le_bytes());
    hdr[0..4].copy_from_slice(&348i32.to_le_bytes());
    hdr[38] = b'r';
    put_i16(&mut hdr, 40, 3);
    for (i, d) in dims.iter().enumerate() {
        let d = i16::try_from(*d).map_err(|_| format_err(path, "dimension exceeds i16"))?;
        put_i16(&mut hdr, 42 + 2 * i, d);
    }
    for i in 4..8 {
        put_i16(&mut hdr, 40 + 2 * i, 1);
    }
    let (datatype, bitpix, payload): (i16, i16, Vec<u8>) = match data {
        VoxelData::U8(v) => (DT_UINT8, 8, v.to_vec()),
        VoxelData::F32(v) => (
            DT_FLOAT32,
            32,
            v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
    };
    put_i16(&mut hdr, 70, datatype);
    put_i16(&mut hdr, 72, bitpix);
    put_f32(&mut hdr, 76, 1.0);
    for (i, s) in spacing.iter().enumerate() {
        put_f32(&mut hdr, 80 + 4 * i, *s as f32);
    }
    put_f32(&mut hdr, 108, DATA_OFFSET as f32);
    put_f32(&mut hdr, 112, 1.0);
    hdr[123] = 2; // mm
    put_i16(&mut hdr, 254, 1);
    for (r, row) in affine.0.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            put_f32(&mut hdr, 280 + 16 * r + 4 * k, *v as f32);
        }
    }
    hdr[344..348].copy_from_slice(MAGIC_SINGLE);

    let io_err = |source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    if gz {
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(&hdr).map_err(io_err)?;
        enc.write_all(&payload).map_err(io_err)?;
        enc.finish().map_err(io_err)?;
    } else {
        let mut file = file;
        file.write_all(&hdr).map_err(io_err)?;
        file.write_all(&payload).map_err(io_err)?;
    }
    Ok(())
}
