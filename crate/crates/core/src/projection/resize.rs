//! Aspect-preserving resize to a fixed longest side.

/// Output size with the longest side scaled to `longest`; the other side is
/// `round(len * longest / max_len)`, at least 1.
pub fn target_dims(width: usize, height: usize, longest: usize) -> (usize, usize) {
    let max_len = width.max(height).max(1);
    let scale = |len: usize| -> usize {
        if len == max_len {
            longest
        } else {
            ((len * longest) as f64 / max_len as f64).round().max(1.0) as usize
        }
    };
    (scale(width), scale(height))
}

/// Pixel-center aligned source coordinate for output index `dst`.
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    let scale = src_len as f64 / dst_len as f64;
    ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64)
}

/// Bilinear resample of a row-major grid.
pub fn bilinear(src: &[f64], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    if (width, height) == (out_w, out_h) {
        return src.to_vec();
    }
    let cols: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|x| {
            let sx = source_coord(x, width, out_w);
            let x0 = sx.floor() as usize;
            (x0, (x0 + 1).min(width - 1), sx - x0 as f64)
        })
        .collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let sy = source_coord(y, height, out_h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(height - 1);
        let fy = sy - y0 as f64;
        let r0 = &src[y0 * width..(y0 + 1) * width];
        let r1 = &src[y1 * width..(y1 + 1) * width];
        for &(x0, x1, fx) in &cols {
            let top = (1.0 - fx) * r0[x0] + fx * r0[x1];
            let bottom = (1.0 - fx) * r1[x0] + fx * r1[x1];
            out.push((1.0 - fy) * top + fy * bottom);
        }
    }
    out
}

/// Nearest-neighbour resample; keeps binary masks binary.
pub fn nearest<T: Copy>(
    src: &[T],
    width: usize,
    height: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<T> {
    if (width, height) == (out_w, out_h) {
        return src.to_vec();
    }
    let pick = |dst: usize, src_len: usize, dst_len: usize| -> usize {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize;
        s.min(src_len - 1)
    };
    let cols: Vec<usize> = (0..out_w).map(|x| pick(x, width, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let row = pick(y, height, out_h) * width;
        out.extend(cols.iter().map(|&c| src[row + c]));
    }
    out
}
