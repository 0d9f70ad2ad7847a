//! Frontal (antero-posterior) projections of CT volumes and label masks.
//!
//! Rendering steps for a CT:
//! 1. clamp HU to a window,
//! 2. sum along the antero-posterior axis (canonical axis 1),
//! 3. min-max normalize to `[0, 1]` (a constant image becomes all zeros),
//! 4. resize to 512 px on the longest side and replicate into RGB.
//!
//! Images are displayed like an AP radiograph: superior at the top row,
//! patient right on the left of the image.

pub mod clahe;
pub mod resize;

use std::io::Cursor;

pub use clahe::{clahe, clahe_grid, Gray8};

use crate::volume::{LabelVolume, VoxelVolume};

pub const TARGET_LONGEST_SIDE: usize = 512;
pub const CLAHE_GRID: usize = 8;
pub const CLAHE_CLIP: f64 = 5.0;
pub const SKELETON_GAMMA: f64 = 0.6;

#[derive(Debug, thiserror::Error)]
pub enum ProjectionError {
    #[error("image geometry mismatch: expected {expected:?}, found {found:?}")]
    Geometry {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("png: {0}")]
    Png(String),
}

/// Closed HU interval used for clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuWindow {
    pub low: f64,
    pub high: f64,
}

impl HuWindow {
    /// Soft-tissue window giving radiograph-like projections.
    pub const CT: HuWindow = HuWindow {
        low: -500.0,
        high: 1500.0,
    };
    /// Bone window for skeleton reference images.
    pub const SKELETON: HuWindow = HuWindow {
        low: 400.0,
        high: 2000.0,
    };

    pub fn clamp(&self, hu: f64) -> f64 {
        hu.clamp(self.low, self.high)
    }
}

/// Real-valued image in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayProjection {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayProjection {
    /// Min-max normalization; constant input maps to zeros.
    pub fn normalized(width: usize, height: usize, mut values: Vec<f64>) -> Self {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi > lo {
            let span = hi - lo;
            for v in &mut values {
                *v = (*v - lo) / span;
            }
        } else {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        GrayProjection {
            width,
            height,
            pixels: values,
        }
    }

    pub fn resized(&self, width: usize, height: usize) -> Self {
        GrayProjection {
            width,
            height,
            pixels: resize::bilinear(&self.pixels, self.width, self.height, width, height),
        }
    }

    /// `round(255 * x)` per pixel.
    pub fn quantize(&self) -> Gray8 {
        Gray8 {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&x| quantize(x)).collect(),
        }
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage::from_gray(&self.quantize())
    }
}

fn quantize(x: f64) -> u8 {
    (255.0 * x).round().clamp(0.0, 255.0) as u8
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ProjectionError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(ProjectionError::Parameter(format!(
                "{} bytes for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn from_gray(gray: &Gray8) -> Self {
        RgbImage {
            width: gray.width,
            height: gray.height,
            data: gray.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Encode as 8-bit RGB PNG without alpha.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("writing to a Vec cannot fail");
            writer
                .write_image_data(&self.data)
                .expect("buffer size matches header");
        }
        out
    }

    /// Decode an 8-bit PNG (gray, gray+alpha, RGB or RGBA) into RGB.
    pub fn from_png(bytes: &[u8]) -> Result<Self, ProjectionError> {
        let err = |e: &dyn std::fmt::Display| ProjectionError::Png(e.to_string());
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| err(&e))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| ProjectionError::Png("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| err(&e))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let buf = &buf[..info.buffer_size()];
        let data: Vec<u8> = match info.color_type {
            png::ColorType::Rgb => buf.to_vec(),
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&v| [v, v, v]).collect(),
            png::ColorType::GrayscaleAlpha => buf
                .chunks_exact(2)
                .flat_map(|p| [p[0], p[0], p[0]])
                .collect(),
            other => {
                return Err(ProjectionError::Png(format!(
                    "unsupported color type {other:?}"
                )))
            }
        };
        RgbImage::new(w, h, data)
    }
}

/// Binary 2D mask in projection image coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelProjectionMask {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl LabelProjectionMask {
    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }
    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Sum `f(x, y, z)` over the AP axis into image layout (width = dim x,
/// height = dim z, row 0 = most superior slice, column 0 = patient right).
fn ap_sum(dims: [usize; 3], mut f: impl FnMut(usize) -> f64) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut out = vec![0.0; nx * nz];
    for row in 0..nz {
        let z = nz - 1 - row;
        for col in 0..nx {
            let x = nx - 1 - col;
            let mut acc = 0.0;
            for y in 0..ny {
                acc += f(x + nx * (y + ny * z));
            }
            out[row * nx + col] = acc;
        }
    }
    out
}

/// Clamp, sum along the AP axis and normalize, at native resolution.
pub fn frontal_projection(volume: &VoxelVolume, window: HuWindow) -> GrayProjection {
    let [nx, _, nz] = volume.dims();
    let voxels = volume.voxels();
    let sums = ap_sum(volume.dims(), |i| window.clamp(f64::from(voxels[i])));
    GrayProjection::normalized(nx, nz, sums)
}

/// Output size of every projection rendered from a volume of these dims.
pub fn output_dims(volume_dims: [usize; 3]) -> (usize, usize) {
    resize::target_dims(volume_dims[0], volume_dims[2], TARGET_LONGEST_SIDE)
}

/// Projection resized to the output geometry, before 8-bit quantization.
pub fn project_ct_gray(volume: &VoxelVolume, window: HuWindow) -> GrayProjection {
    let native = frontal_projection(volume, window);
    let (w, h) = output_dims(volume.dims());
    native.resized(w, h)
}

/// Frontal CT projection as an RGB image.
pub fn project_ct(volume: &VoxelVolume, window: HuWindow) -> RgbImage {
    project_ct_gray(volume, window).to_rgb()
}

/// Label footprint in the projection: on wherever any voxel along the AP
/// ray is foreground, resized nearest-neighbour to the CT output geometry.
pub fn project_label_mask(label: &LabelVolume) -> LabelProjectionMask {
    let [nx, _, nz] = label.dims();
    let mask = label.mask();
    let sums = ap_sum(label.dims(), |i| f64::from(mask[i]));
    let native: Vec<u8> = sums.iter().map(|&s| u8::from(s > 0.0)).collect();
    let (w, h) = output_dims(label.dims());
    LabelProjectionMask {
        width: w,
        height: h,
        pixels: resize::nearest(&native, nx, nz, w, h),
    }
}

/// Red overlay: zero green and blue wherever the mask is on.
pub fn overlay_label(
    ct_image: &RgbImage,
    mask: &LabelProjectionMask,
) -> Result<RgbImage, ProjectionError> {
    if ct_image.dims() != (mask.width, mask.height) {
        return Err(ProjectionError::Geometry {
            expected: ct_image.dims(),
            found: (mask.width, mask.height),
        });
    }
    let mut data = ct_image.data.clone();
    for (px, &m) in data.chunks_exact_mut(3).zip(&mask.pixels) {
        if m != 0 {
            px[1] = 0;
            px[2] = 0;
        }
    }
    Ok(RgbImage {
        width: ct_image.width,
        height: ct_image.height,
        data,
    })
}

/// `x -> x^gamma` on every pixel.
pub fn gamma_adjust(image: &GrayProjection, gamma: f64) -> GrayProjection {
    GrayProjection {
        width: image.width,
        height: image.height,
        pixels: image.pixels.iter().map(|&x| x.powf(gamma)).collect(),
    }
}

/// Bone-window projection with CLAHE and gamma, used as an anatomical
/// reference. Same output geometry as [`project_ct`].
pub fn skeleton_projection(volume: &VoxelVolume) -> RgbImage {
    let native = frontal_projection(volume, HuWindow::SKELETON);
    let gray8 = native.quantize();
    // Projections thinner than the grid get one tile per pixel on that axis.
    let gx = CLAHE_GRID.min(gray8.width);
    let gy = CLAHE_GRID.min(gray8.height);
    let equalized = clahe_grid(&gray8, gx, gy, CLAHE_CLIP).expect("grid clamped to image size");
    let renormalized = GrayProjection::normalized(
        equalized.width,
        equalized.height,
        equalized.pixels.iter().map(|&v| f64::from(v)).collect(),
    );
    let adjusted = gamma_adjust(&renormalized, SKELETON_GAMMA);
    let (w, h) = output_dims(volume.dims());
    adjusted.resized(w, h).to_rgb()
}
