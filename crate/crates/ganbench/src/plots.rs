//! PNG sample grids and point scatter plots.

use std::path::Path;

use ganbench_core::scenegen::Image;
use image::{Rgb, RgbImage};

use crate::error::{CliError, CliResult};

pub const GRID_COLS: usize = 8;
pub const GRID_ROWS: usize = 8;
const TILE_SCALE: u32 = 2;
const GUTTER: u32 = 2;
const PANEL: u32 = 400;
const MARGIN: u32 = 10;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const REAL: Rgb<u8> = Rgb([40, 90, 200]);
const FAKE: Rgb<u8> = Rgb([220, 60, 40]);

fn to_byte(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5) * 255.0).round() as u8
}

/// Up to 64 images on an 8×8 grid, pixel values mapped from [-1, 1].
pub fn sample_grid(images: &[Image]) -> RgbImage {
    let (h, w) = images.first().map_or((28, 28), |i| (i.height as u32, i.width as u32));
    let tile_w = w * TILE_SCALE + GUTTER;
    let tile_h = h * TILE_SCALE + GUTTER;
    let mut out = RgbImage::from_pixel(
        GRID_COLS as u32 * tile_w + GUTTER,
        GRID_ROWS as u32 * tile_h + GUTTER,
        Rgb([128, 128, 128]),
    );
    for (k, img) in images.iter().take(GRID_COLS * GRID_ROWS).enumerate() {
        let x0 = GUTTER + (k % GRID_COLS) as u32 * tile_w;
        let y0 = GUTTER + (k / GRID_COLS) as u32 * tile_h;
        for r in 0..img.height {
            for c in 0..img.width {
                let px = if img.channels == 1 {
                    let g = to_byte(img.get(r, c, 0));
                    Rgb([g, g, g])
                } else {
                    Rgb([0, 1, 2].map(|ch| to_byte(img.get(r, c, ch.min(img.channels - 1)))))
                };
                for dy in 0..TILE_SCALE {
                    for dx in 0..TILE_SCALE {
                        out.put_pixel(x0 + c as u32 * TILE_SCALE + dx, y0 + r as u32 * TILE_SCALE + dy, px);
                    }
                }
            }
        }
    }
    out
}

/// At most `max` rows of a row-major point set, evenly strided so that
/// datasets stored group by group stay representative.
pub fn thin(points: &[f64], dim: usize, max: usize) -> Vec<f64> {
    let n = points.len() / dim;
    if n <= max {
        return points.to_vec();
    }
    (0..max).flat_map(|i| &points[i * n / max * dim..][..dim]).copied().collect()
}

/// Axis pairs drawn for `dim`-dimensional points.
pub fn projections(dim: usize) -> Vec<(usize, usize)> {
    if dim == 3 {
        vec![(0, 1), (0, 2), (1, 2)]
    } else {
        vec![(0, 1)]
    }
}

/// Real (blue) and generated (red) points, row-major with `dim` columns.
/// 3-D data is drawn as three side-by-side projections (xy, xz, yz).
pub fn scatter(real: &[f64], fake: &[f64], dim: usize) -> RgbImage {
    let pairs = projections(dim);
    let mut out = RgbImage::from_pixel(PANEL * pairs.len() as u32, PANEL, BACKGROUND);
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let x_off = p as u32 * PANEL;
        let finite = |v: &f64| v.is_finite();
        let range = |axis: usize| {
            let vals = real
                .iter()
                .chain(fake)
                .skip(axis)
                .step_by(dim)
                .copied()
                .filter(finite);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else {
                (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
            }
        };
        let ((xl, xh), (yl, yh)) = (range(a), range(b));
        let span = (PANEL - 2 * MARGIN - 1) as f64;
        for x in 0..PANEL {
            out.put_pixel(x_off + x.min(PANEL - 1), 0, Rgb([0, 0, 0]));
        }
        for y in 0..PANEL {
            out.put_pixel(x_off, y, Rgb([0, 0, 0]));
        }
        for (pts, color) in [(real, REAL), (fake, FAKE)] {
            for row in pts.chunks_exact(dim) {
                let (x, y) = (row[a], row[b]);
                if !x.is_finite() || !y.is_finite() {
                    continue;
                }
                let px = MARGIN + ((x - xl) / (xh - xl) * span).round() as u32;
                let py = MARGIN + ((yh - y) / (yh - yl) * span).round() as u32;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (qx, qy) = (px + dx, py + dy);
                    if qx < PANEL && qy < PANEL {
                        out.put_pixel(x_off + qx, qy, color);
                    }
                }
            }
        }
    }
    out
}

pub fn save_png(img: &RgbImage, path: &Path) -> CliResult<()> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io(path)(io),
        other => CliError::format(path, other),
    })
}
