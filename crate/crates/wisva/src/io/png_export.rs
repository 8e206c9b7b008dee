//! Heatmap PNG export with a fixed perceptual colormap and a side legend
//! strip encoding the value scale.

use std::io::BufWriter;
use std::path::Path;

use super::IoFormatError;
use crate::grid::Grid2;

/// Legend strip: one separator column plus the gradient.
const LEGEND_W: usize = 12;

/// Viridis anchor colors; linearly interpolated. Luminance rises
/// monotonically along the ramp.
const ANCHORS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Maps t in [0, 1] onto the colormap.
pub(crate) fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (ANCHORS.len() - 1) as f64;
    let lo = (t.floor() as usize).min(ANCHORS.len() - 2);
    let frac = t - lo as f64;
    let a = ANCHORS[lo];
    let b = ANCHORS[lo + 1];
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (a[c] as f64 + (b[c] as f64 - a[c] as f64) * frac).round() as u8;
    }
    out
}

/// Renders `values` clamped to `[lo, hi]` as an 8-bit RGB PNG of shape
/// H x (W + legend). The legend column runs hi (top) to lo (bottom).
pub fn export_heatmap_png(
    values: &Grid2<f32>,
    range: (f64, f64),
    path: &Path,
) -> Result<(), IoFormatError> {
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(IoFormatError::DegenerateRange { lo, hi });
    }
    let (h, w) = values.shape();
    let out_w = w + LEGEND_W;
    let mut pixels = vec![0u8; h * out_w * 3];
    let span = hi - lo;
    for i in 0..h {
        for j in 0..w {
            let t = (values.get(i, j) as f64 - lo) / span;
            let rgb = colormap(t);
            let at = (i * out_w + j) * 3;
            pixels[at..at + 3].copy_from_slice(&rgb);
        }
        // Separator column, then the vertical scale gradient.
        let t = if h > 1 { 1.0 - i as f64 / (h - 1) as f64 } else { 1.0 };
        let rgb = colormap(t);
        for j in w..out_w {
            let at = (i * out_w + j) * 3;
            if j == w {
                pixels[at..at + 3].copy_from_slice(&[0, 0, 0]);
            } else {
                pixels[at..at + 3].copy_from_slice(&rgb);
            }
        }
    }

    let file = std::fs::File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), out_w as u32, h as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| IoFormatError::Malformed(format!("png header: {e}")))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| IoFormatError::Malformed(format!("png data: {e}")))?;
    Ok(())
}
