//! Reference implementations and fixtures shared by the integration tests.
//! Everything here is written from the definitions, not from the library.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use labelqc::critic::Critic;
use labelqc::gateway::{ChatBackend, EndpointConfig, Gateway, ScriptedBackend};
use labelqc::synthetic::{phantom_ct, Ellipsoid};
use labelqc::volume::{LabelVolume, VoxelVolume};
use labelqc::OrganClass;

// ---------------------------------------------------------------------------
// NIfTI-1 byte writer

pub struct NiftiFixture {
    pub dims: Vec<i16>,
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 3],
    pub slope: f32,
    pub inter: f32,
    pub sform: Option<[[f32; 4]; 3]>,
    pub data: Vec<u8>,
}

impl NiftiFixture {
    pub fn f32_volume(dims: [i16; 3], values: &[f32]) -> Self {
        NiftiFixture {
            dims: dims.to_vec(),
            datatype: 16,
            bitpix: 32,
            pixdim: [1.0; 3],
            slope: 0.0,
            inter: 0.0,
            sform: None,
            data: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn i16_volume(dims: [i16; 3], values: &[i16]) -> Self {
        NiftiFixture {
            dims: dims.to_vec(),
            datatype: 4,
            bitpix: 16,
            pixdim: [1.0; 3],
            slope: 0.0,
            inter: 0.0,
            sform: None,
            data: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn u8_volume(dims: [i16; 3], values: &[u8]) -> Self {
        NiftiFixture {
            dims: dims.to_vec(),
            datatype: 2,
            bitpix: 8,
            pixdim: [1.0; 3],
            slope: 0.0,
            inter: 0.0,
            sform: None,
            data: values.to_vec(),
        }
    }

    pub fn bytes(&self) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        let put = |h: &mut Vec<u8>, at: usize, b: &[u8]| h[at..at + b.len()].copy_from_slice(b);
        put(&mut h, 0, &348i32.to_le_bytes());
        put(&mut h, 40, &(self.dims.len() as i16).to_le_bytes());
        for (i, d) in self.dims.iter().enumerate() {
            put(&mut h, 42 + 2 * i, &d.to_le_bytes());
        }
        for i in self.dims.len()..7 {
            put(&mut h, 42 + 2 * i, &1i16.to_le_bytes());
        }
        put(&mut h, 70, &self.datatype.to_le_bytes());
        put(&mut h, 72, &self.bitpix.to_le_bytes());
        put(&mut h, 76, &1f32.to_le_bytes());
        for (i, p) in self.pixdim.iter().enumerate() {
            put(&mut h, 80 + 4 * i, &p.to_le_bytes());
        }
        put(&mut h, 108, &352f32.to_le_bytes());
        put(&mut h, 112, &self.slope.to_le_bytes());
        put(&mut h, 116, &self.inter.to_le_bytes());
        if let Some(rows) = self.sform {
            put(&mut h, 254, &1i16.to_le_bytes());
            for (r, row) in rows.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    put(&mut h, 280 + 16 * r + 4 * c, &v.to_le_bytes());
                }
            }
        }
        put(&mut h, 344, b"n+1\0");
        h.extend_from_slice(&self.data);
        h
    }

    pub fn write(&self, path: &Path) {
        let bytes = self.bytes();
        if path.extension().is_some_and(|e| e == "gz") {
            let file = std::fs::File::create(path).unwrap();
            let mut gz = flate2::write::GzEncoder::new(file, flate2::Compression::fast());
            gz.write_all(&bytes).unwrap();
            gz.finish().unwrap();
        } else {
            std::fs::write(path, bytes).unwrap();
        }
    }
}

// ---------------------------------------------------------------------------
// Projection

/// Brute-force CT projection at output resolution, as real values before
/// quantization. `voxels` is x-fastest with dims `[nx, ny, nz]`.
pub fn oracle_projection(
    voxels: &[f32],
    dims: [usize; 3],
    low: f64,
    high: f64,
) -> (usize, usize, Vec<f64>) {
    let [nx, ny, nz] = dims;
    // Image row r shows slice z = nz-1-r; column c shows x = nx-1-c.
    let mut sums = vec![vec![0.0f64; nx]; nz];
    for (r, row) in sums.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let (x, z) = (nx - 1 - c, nz - 1 - r);
            let mut s = 0.0;
            for y in 0..ny {
                let hu = f64::from(voxels[x + nx * y + nx * ny * z]);
                s += hu.max(low).min(high);
            }
            *cell = s;
        }
    }
    let flat: Vec<f64> = sums.iter().flatten().copied().collect();
    let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm: Vec<Vec<f64>> = sums
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
                .collect()
        })
        .collect();

    let longest = nx.max(nz);
    let side = |n: usize| {
        if n == longest {
            512
        } else {
            ((n * 512) as f64 / longest as f64).round().max(1.0) as usize
        }
    };
    let (w, h) = (side(nx), side(nz));
    if (w, h) == (nx, nz) {
        return (w, h, norm.into_iter().flatten().collect());
    }
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = n_in as f64 / n_out as f64;
        let p = ((o as f64 + 0.5) * s - 0.5).max(0.0).min((n_in - 1) as f64);
        let i0 = p.floor() as usize;
        (i0, (i0 + 1).min(n_in - 1), p - i0 as f64)
    };
    let mut out = Vec::with_capacity(w * h);
    for oy in 0..h {
        let (y0, y1, fy) = coord(oy, nz, h);
        for ox in 0..w {
            let (x0, x1, fx) = coord(ox, nx, w);
            let top = (1.0 - fx) * norm[y0][x0] + fx * norm[y0][x1];
            let bottom = (1.0 - fx) * norm[y1][x0] + fx * norm[y1][x1];
            out.push((1.0 - fy) * top + fy * bottom);
        }
    }
    (w, h, out)
}

// ---------------------------------------------------------------------------
// CLAHE

/// Reference CLAHE for images whose sides are multiples of `grid`.
/// Histograms are clipped at `floor(clip * area / 256)` (at least 1), the
/// excess is spread evenly with the remainder going to evenly spaced bins,
/// and each tile maps gray level 0 to 0 and its full CDF to 255. Pixels
/// blend the transfer functions of the nearest tile centres.
pub fn reference_clahe(
    pixels: &[u8],
    width: usize,
    height: usize,
    grid: usize,
    clip: f64,
) -> Vec<u8> {
    assert!(width.is_multiple_of(grid) && height.is_multiple_of(grid));
    let (tw, th) = (width / grid, height / grid);
    let area = (tw * th) as u64;
    let mut maps = vec![vec![[0f64; 256]; grid]; grid];
    for (ty, map_row) in maps.iter_mut().enumerate() {
        for (tx, map) in map_row.iter_mut().enumerate() {
            let mut hist = vec![0u64; 256];
            for y in ty * th..(ty + 1) * th {
                for x in tx * tw..(tx + 1) * tw {
                    hist[pixels[y * width + x] as usize] += 1;
                }
            }
            let limit = ((clip * area as f64 / 256.0) as u64).max(1);
            let excess: u64 = hist.iter().map(|&c| c.saturating_sub(limit)).sum();
            for c in hist.iter_mut() {
                *c = (*c).min(limit) + excess / 256;
            }
            let rest = (excess % 256) as usize;
            if let Some(step) = 256usize.checked_div(rest) {
                for k in 0..rest {
                    if k * step < 256 {
                        hist[k * step] += 1;
                    }
                }
            }
            let zero = hist[0] as f64;
            let total: u64 = hist.iter().sum();
            let span = total as f64 - zero;
            let mut acc = 0u64;
            for (g, c) in hist.iter().enumerate() {
                acc += c;
                map[g] = if span > 0.0 {
                    ((acc as f64 - zero) * 255.0 / span).round()
                } else {
                    0.0
                };
            }
        }
    }
    let mut out = vec![0u8; width * height];
    for y in 0..height {
        let fy = (y as f64 + 0.5) / th as f64 - 0.5;
        let (ty0, ty1, wy) = neighbours(fy, grid);
        for x in 0..width {
            let fx = (x as f64 + 0.5) / tw as f64 - 0.5;
            let (tx0, tx1, wx) = neighbours(fx, grid);
            let g = pixels[y * width + x] as usize;
            let v = (1.0 - wy) * ((1.0 - wx) * maps[ty0][tx0][g] + wx * maps[ty0][tx1][g])
                + wy * ((1.0 - wx) * maps[ty1][tx0][g] + wx * maps[ty1][tx1][g]);
            out[y * width + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn neighbours(f: f64, grid: usize) -> (usize, usize, f64) {
    if f <= 0.0 {
        return (0, 0, 0.0);
    }
    if f >= (grid - 1) as f64 {
        return (grid - 1, grid - 1, 0.0);
    }
    let t = f.floor() as usize;
    (t, t + 1, f - t as f64)
}

// ---------------------------------------------------------------------------
// Dice and statistics

pub fn oracle_dice(a: &[u8], b: &[u8]) -> f64 {
    let on = |m: &[u8]| -> BTreeSet<usize> {
        m.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0)
            .map(|(i, _)| i)
            .collect()
    };
    let (sa, sb) = (on(a), on(b));
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    2.0 * sa.intersection(&sb).count() as f64 / (sa.len() + sb.len()) as f64
}

/// Frontal footprint of a mask at output resolution: union along y,
/// superior row first, patient right on the left, nearest-neighbour
/// upsampling in integer arithmetic.
pub fn oracle_mask_projection(mask: &[u8], dims: [usize; 3]) -> Vec<u8> {
    let [nx, ny, nz] = dims;
    let longest = nx.max(nz);
    let side = |n: usize| {
        if n == longest {
            512
        } else {
            ((2 * n * 512 + longest) / (2 * longest)).max(1)
        }
    };
    let (w, h) = (side(nx), side(nz));
    let pick =
        |o: usize, n_in: usize, n_out: usize| ((2 * o + 1) * n_in / (2 * n_out)).min(n_in - 1);
    let mut out = Vec::with_capacity(w * h);
    for oy in 0..h {
        let z = nz - 1 - pick(oy, nz, h);
        for ox in 0..w {
            let x = nx - 1 - pick(ox, nx, w);
            out.push(u8::from(
                (0..ny).any(|y| mask[x + nx * y + nx * ny * z] != 0),
            ));
        }
    }
    out
}

/// Mean minus population standard deviation.
pub fn oracle_threshold(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    mean - var.sqrt()
}

// ---------------------------------------------------------------------------
// Critic fixtures

pub const PHANTOM_DIMS: [usize; 3] = [24, 16, 32];

pub fn organ() -> Ellipsoid {
    Ellipsoid {
        center: [12.0, 8.0, 16.0],
        radii: [6.0, 4.0, 9.0],
    }
}

/// A phantom CT with a good label and a shifted one.
pub fn phantom_pair(case_id: &str, class: OrganClass) -> (VoxelVolume, LabelVolume, LabelVolume) {
    let shape = organ();
    let ct = phantom_ct(case_id, PHANTOM_DIMS, std::slice::from_ref(&shape), 7);
    let good = shape.label(class, "good", PHANTOM_DIMS);
    let shifted = Ellipsoid {
        center: [
            shape.center[0] + 5.0,
            shape.center[1],
            shape.center[2] - 6.0,
        ],
        ..shape
    };
    let bad = shifted.label(class, "bad", PHANTOM_DIMS);
    (ct, good, bad)
}

pub fn critic_with(backend: Arc<dyn ChatBackend>) -> Critic {
    Critic::new(Gateway::new(backend, EndpointConfig::default()))
}

pub fn scripted(answers: &[&str]) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::replies(
        answers.iter().map(|s| s.to_string()),
    ))
}
