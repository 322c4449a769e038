//! Heatmap rasters and accuracy-curve tables.

pub mod curves;
pub mod heatmap;

pub use curves::{curve_rows, curves_csv, export_curves, parse_curves, CurveRow};
pub use heatmap::{render_heatmap, render_rgb, write_ppm, Heatmap, UPSCALE};
