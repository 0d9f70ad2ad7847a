//! Contrast-limited adaptive histogram equalization on 8-bit gray images.
//!
//! The image is split into a `grid_x` by `grid_y` array of tiles (tile edges
//! at `floor(t * len / grid)`). Each tile gets a 256-bin histogram, clipped
//! at `clip * mean bin height` with the excess spread evenly over all bins.
//! The transfer function is the clipped CDF rescaled so gray level 0 stays
//! at 0 and the full tile maps to 255. Output pixels blend the four nearest
//! tile transfer functions bilinearly by distance to tile centres.

use super::ProjectionError;

const BINS: usize = 256;

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn tile_edges(len: usize, grid: usize) -> Vec<usize> {
    (0..=grid).map(|t| t * len / grid).collect()
}

fn transfer_function(hist: &mut [u32; BINS], clip: f64) -> [u8; BINS] {
    let total: u32 = hist.iter().sum();
    let limit = ((clip * f64::from(total) / BINS as f64).floor() as u32).max(1);
    let mut excess = 0u32;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let per_bin = excess / BINS as u32;
    let mut residual = excess - per_bin * BINS as u32;
    for h in hist.iter_mut() {
        *h += per_bin;
    }
    if residual > 0 {
        let step = (BINS / residual as usize).max(1);
        let mut i = 0;
        while i < BINS && residual > 0 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }
    let base = hist[0];
    let span = total - base;
    let mut lut = [0u8; BINS];
    if span == 0 {
        return lut;
    }
    let mut cdf = 0u32;
    for (v, h) in hist.iter().enumerate() {
        cdf += h;
        let scaled = f64::from(cdf - base) * 255.0 / f64::from(span);
        lut[v] = scaled.round().clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Neighbouring tiles and blend weight for one coordinate.
fn blend_axis(pos: usize, centres: &[f64]) -> (usize, usize, f64) {
    let p = pos as f64;
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0, 0.0);
    }
    if p >= centres[last] {
        return (last, last, 0.0);
    }
    let t = centres.partition_point(|&c| c <= p) - 1;
    (t, t + 1, (p - centres[t]) / (centres[t + 1] - centres[t]))
}

/// CLAHE with an independent tile count per axis.
pub fn clahe_grid(
    image: &Gray8,
    grid_x: usize,
    grid_y: usize,
    clip: f64,
) -> Result<Gray8, ProjectionError> {
    if grid_x == 0 || grid_y == 0 {
        return Err(ProjectionError::Parameter(
            "CLAHE grid must be positive".into(),
        ));
    }
    if image.width < grid_x || image.height < grid_y {
        return Err(ProjectionError::Parameter(format!(
            "CLAHE grid {grid_x}x{grid_y} larger than image {}x{}",
            image.width, image.height
        )));
    }
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(ProjectionError::Parameter(format!(
            "CLAHE clip limit {clip} must be positive"
        )));
    }
    let xs = tile_edges(image.width, grid_x);
    let ys = tile_edges(image.height, grid_y);
    let centre = |edges: &[usize]| -> Vec<f64> {
        edges
            .windows(2)
            .map(|w| (w[0] + w[1] - 1) as f64 / 2.0)
            .collect()
    };
    let cx = centre(&xs);
    let cy = centre(&ys);

    let mut luts = Vec::with_capacity(grid_x * grid_y);
    for ty in 0..grid_y {
        for tx in 0..grid_x {
            let mut hist = [0u32; BINS];
            for y in ys[ty]..ys[ty + 1] {
                let row = &image.pixels[y * image.width..(y + 1) * image.width];
                for &v in &row[xs[tx]..xs[tx + 1]] {
                    hist[v as usize] += 1;
                }
            }
            luts.push(transfer_function(&mut hist, clip));
        }
    }

    let col_blend: Vec<_> = (0..image.width).map(|x| blend_axis(x, &cx)).collect();
    let mut out = Vec::with_capacity(image.pixels.len());
    for y in 0..image.height {
        let (ty0, ty1, wy) = blend_axis(y, &cy);
        for (x, &(tx0, tx1, wx)) in col_blend.iter().enumerate() {
            let v = image.pixels[y * image.width + x] as usize;
            let at = |ty: usize, tx: usize| f64::from(luts[ty * grid_x + tx][v]);
            let top = (1.0 - wx) * at(ty0, tx0) + wx * at(ty0, tx1);
            let bottom = (1.0 - wx) * at(ty1, tx0) + wx * at(ty1, tx1);
            let blended = (1.0 - wy) * top + wy * bottom;
            out.push(blended.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(Gray8 {
        width: image.width,
        height: image.height,
        pixels: out,
    })
}

/// CLAHE with `grid` tiles per side and the given clip limit.
pub fn clahe(image: &Gray8, grid: usize, clip: f64) -> Result<Gray8, ProjectionError> {
    clahe_grid(image, grid, grid, clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let img = Gray8 {
            width: 16,
            height: 16,
            pixels: vec![90; 256],
        };
        let out = clahe(&img, 8, 5.0).unwrap();
        assert!(out.pixels.iter().all(|&v| v == out.pixels[0]));
        let zero = Gray8 {
            width: 16,
            height: 16,
            pixels: vec![0; 256],
        };
        assert!(clahe(&zero, 8, 5.0).unwrap().pixels.iter().all(|&v| v == 0));
    }

    #[test]
    fn too_small_image_is_a_parameter_error() {
        let img = Gray8 {
            width: 7,
            height: 16,
            pixels: vec![0; 7 * 16],
        };
        assert!(matches!(
            clahe(&img, 8, 5.0),
            Err(ProjectionError::Parameter(_))
        ));
    }

    #[test]
    fn zero_stays_zero_next_to_bright_pixels() {
        let mut pixels = vec![0u8; 32 * 32];
        for y in 0..32 {
            pixels[y * 32 + 10] = 200;
        }
        let out = clahe(
            &Gray8 {
                width: 32,
                height: 32,
                pixels: pixels.clone(),
            },
            8,
            5.0,
        )
        .unwrap();
        for (a, b) in pixels.iter().zip(&out.pixels) {
            assert_eq!(*a == 0, *b == 0);
        }
    }
}
