//! Diverging red/blue attribution overlays written as binary PPM.
//!
//! Attributions are scaled by their largest magnitude to `v ∈ [-1, 1]`.
//! With `pos = max(v, 0)` and `neg = max(-v, 0)` the overlay colour is
//!
//! ```text
//! R = 127.5 (1 + pos - neg)
//! G = 127.5 (1 - pos - neg)
//! B = 127.5 (1 + neg - pos)
//! ```
//!
//! so zero maps to mid gray, +1 to pure red and -1 to pure blue. The
//! overlay is blended at 0.6 over the grayscale pixel. Convert with e.g.
//! `convert heat.ppm heat.png`.

use std::fs;
use std::io;
use std::path::Path;

use crate::explainer::{ExplanationVector, PatchGrid};

pub const UPSCALE: usize = 8;
pub const ALPHA: f64 = 0.6;

/// An RGB raster, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Heatmap {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let o = (row * self.width + col) * 3;
        [self.rgb[o], self.rgb[o + 1], self.rgb[o + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}

fn channel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Renders `x` (pixels in `[0, 1]`) with patch attributions `e` on top,
/// each source pixel becoming an `upscale x upscale` block.
pub fn render_rgb(x: &[f64], e: &ExplanationVector, grid: &PatchGrid, upscale: usize) -> Heatmap {
    let (rows, cols) = grid.image_shape();
    assert_eq!(x.len(), rows * cols, "image does not match the patch grid");
    assert_eq!(e.len(), grid.num_patches(), "attributions do not match the patch grid");
    let scale = e.attributions.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let width = cols * upscale;
    let height = rows * upscale;
    let mut rgb = vec![0u8; width * height * 3];
    for r in 0..rows {
        for c in 0..cols {
            let v = if scale > 0.0 {
                e.attributions[grid.patch_of_pixel(r * cols + c)] / scale
            } else {
                0.0
            };
            let pos = v.max(0.0);
            let neg = (-v).max(0.0);
            let overlay = [
                127.5 * (1.0 + pos - neg),
                127.5 * (1.0 - pos - neg),
                127.5 * (1.0 + neg - pos),
            ];
            let gray = x[r * cols + c] * 255.0;
            let px = overlay.map(|o| channel(ALPHA * o + (1.0 - ALPHA) * gray));
            for dr in 0..upscale {
                for dc in 0..upscale {
                    let o = ((r * upscale + dr) * width + c * upscale + dc) * 3;
                    rgb[o..o + 3].copy_from_slice(&px);
                }
            }
        }
    }
    Heatmap { width, height, rgb }
}

pub fn write_ppm(heatmap: &Heatmap, path: &Path) -> io::Result<()> {
    fs::write(path, heatmap.to_ppm())
}

pub fn render_heatmap(x: &[f64], e: &ExplanationVector, grid: &PatchGrid, path: &Path) -> io::Result<()> {
    write_ppm(&render_rgb(x, e, grid, UPSCALE), path)
}
