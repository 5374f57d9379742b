//! Annotated polygon scenes on a 28×28 canvas.
//!
//! Pixel `(row, col)` covers the unit square `[col, col+1) × [row, row+1)`.
//! A square with top-left anchor `(x, y)` and edge `e` fills columns
//! `x..x+e` and rows `y..y+e` (half-open). Circle and triangle anchors are
//! lattice points in the same continuous frame; a pixel belongs to those
//! shapes when its center `(col + ½, row + ½)` lies inside.
//!
//! Rendered values live in `[−1, 1]`: background is −1 in every channel and
//! a shape with color `c ∈ [0,1]³` writes `2c − 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Domain, StreamRng};

pub const IMAGE_DIM: usize = 28;
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Circle,
    Triangle,
}

/// One shape placed in a scene. `anchor` is `[x, y]`: top-left corner for
/// squares, center for circles, centroid for triangles. `size` is the edge
/// (square), radius (circle) or circumradius (triangle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeInstance {
    pub kind: ShapeKind,
    pub anchor: [i32; 2],
    pub size: u32,
    pub color: [f64; 3],
}

impl ShapeInstance {
    pub fn square(x: i32, y: i32, edge: u32) -> Self {
        ShapeInstance {
            kind: ShapeKind::Square,
            anchor: [x, y],
            size: edge,
            color: [1.0; 3],
        }
    }

    /// Continuous extent `(x_min, y_min, x_max, y_max)` of the shape.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (x, y, s) = (self.anchor[0] as f64, self.anchor[1] as f64, self.size as f64);
        match self.kind {
            ShapeKind::Square => (x, y, x + s, y + s),
            ShapeKind::Circle => (x - s, y - s, x + s, y + s),
            ShapeKind::Triangle => {
                let v = triangle_vertices(self.anchor, self.size);
                let xs = v.iter().map(|p| p[0]);
                let ys = v.iter().map(|p| p[1]);
                (
                    xs.clone().fold(f64::INFINITY, f64::min),
                    ys.clone().fold(f64::INFINITY, f64::min),
                    xs.fold(f64::NEG_INFINITY, f64::max),
                    ys.fold(f64::NEG_INFINITY, f64::max),
                )
            }
        }
    }

    /// Whether pixel `(row, col)` is covered by the shape.
    pub fn covers(&self, row: usize, col: usize) -> bool {
        match self.kind {
            ShapeKind::Square => {
                let (x, y, e) = (self.anchor[0] as i64, self.anchor[1] as i64, self.size as i64);
                let (r, c) = (row as i64, col as i64);
                c >= x && c < x + e && r >= y && r < y + e
            }
            ShapeKind::Circle => {
                let dx = col as f64 + 0.5 - self.anchor[0] as f64;
                let dy = row as f64 + 0.5 - self.anchor[1] as f64;
                let r = self.size as f64;
                dx * dx + dy * dy <= r * r
            }
            ShapeKind::Triangle => {
                let v = triangle_vertices(self.anchor, self.size);
                point_in_triangle([col as f64 + 0.5, row as f64 + 0.5], &v)
            }
        }
    }
}

/// Upright equilateral triangle (apex up) with the given centroid and circumradius.
pub fn triangle_vertices(centroid: [i32; 2], circumradius: u32) -> [[f64; 2]; 3] {
    let (cx, cy, r) = (centroid[0] as f64, centroid[1] as f64, circumradius as f64);
    let half = r * libm::sqrt(3.0) / 2.0;
    [[cx, cy - r], [cx + half, cy + r / 2.0], [cx - half, cy + r / 2.0]]
}

fn point_in_triangle(p: [f64; 2], v: &[[f64; 2]; 3]) -> bool {
    // half-plane tests, edges inclusive
    let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let d0 = edge(v[0], v[1]);
    let d1 = edge(v[1], v[2]);
    let d2 = edge(v[2], v[0]);
    let neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
    let pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
    !(neg && pos)
}

/// Axis-aligned square as `(top-left x, top-left y, edge)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: i32,
    pub y: i32,
    pub edge: u32,
}

/// True iff the two squares share at least one pixel. A square occupies
/// columns `x..=x+edge−1`, so squares that merely touch do not overlap.
pub fn rects_overlap(a: Rect, b: Rect) -> bool {
    let (ae, be) = (a.edge as i64, b.edge as i64);
    let (ax, ay, bx, by) = (a.x as i64, a.y as i64, b.x as i64, b.y as i64);
    ax <= bx + be - 1 && bx <= ax + ae - 1 && ay <= by + be - 1 && by <= ay + ae - 1
}

/// True iff the squares overlap or touch, diagonally included; touching
/// squares render as a single connected blob.
pub fn rects_touch(a: Rect, b: Rect) -> bool {
    let (ae, be) = (a.edge as i64, b.edge as i64);
    let (ax, ay, bx, by) = (a.x as i64, a.y as i64, b.x as i64, b.y as i64);
    ax <= bx + be && bx <= ax + ae && ay <= by + be && by <= ay + ae
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub shapes: Vec<ShapeInstance>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// How square anchors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AnchorMode {
    /// Uniform over every valid top-left position.
    Uniform,
    /// Normal centred on the middle of the valid range, resampled until it
    /// lands inside, then rounded to the nearest pixel.
    TruncatedGaussian { sigma: f64 },
}

impl Default for AnchorMode {
    fn default() -> Self {
        AnchorMode::Uniform
    }
}

/// A sampled square scene plus the number of rejected full configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledScene {
    pub annotation: SceneAnnotation,
    pub rejections: u64,
}

fn draw_anchor(rng: &mut StreamRng, max: usize, mode: AnchorMode) -> i32 {
    match mode {
        AnchorMode::Uniform => rng::below(rng, max as u64 + 1) as i32,
        AnchorMode::TruncatedGaussian { sigma } => {
            let mu = max as f64 / 2.0;
            loop {
                let v = mu + sigma * rng::normal(rng);
                let r = libm::round(v);
                if r >= 0.0 && r <= max as f64 {
                    return r as i32;
                }
            }
        }
    }
}

/// Rejection-samples `count` non-overlapping `edge×edge` squares. Each attempt
/// draws all anchors afresh; any clashing pair discards the whole attempt.
/// Unless `allow_touching`, squares that touch also clash.
pub fn sample_square_scene(
    count: usize,
    edge: u32,
    dim: (usize, usize),
    rng: &mut StreamRng,
    mode: AnchorMode,
    allow_touching: bool,
    max_attempts: u64,
) -> Result<SampledScene> {
    let (h, w) = dim;
    if count == 0 {
        return Err(invalid!("scene needs at least one square"));
    }
    if edge == 0 {
        return Err(invalid!("square edge must be positive"));
    }
    if let AnchorMode::TruncatedGaussian { sigma } = mode {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid!("anchor sigma must be positive"));
        }
    }
    let e = edge as usize;
    if e > h || e > w || count * e * e >= h * w {
        return Err(Error::InfeasibleScene(format!(
            "{count} squares of edge {edge} cannot fit without overlap in {h}x{w}"
        )));
    }
    let mut rects = vec![Rect { x: 0, y: 0, edge }; count];
    for attempt in 0..max_attempts {
        for r in rects.iter_mut() {
            r.x = draw_anchor(rng, w - e, mode);
            r.y = draw_anchor(rng, h - e, mode);
        }
        let clashes = |a, b| if allow_touching { rects_overlap(a, b) } else { rects_touch(a, b) };
        let clash = (0..count).any(|i| (i + 1..count).any(|j| clashes(rects[i], rects[j])));
        if !clash {
            let shapes = rects.iter().map(|r| ShapeInstance::square(r.x, r.y, edge)).collect();
            return Ok(SampledScene {
                annotation: SceneAnnotation {
                    shapes,
                    height: h,
                    width: w,
                    channels: 1,
                },
                rejections: attempt,
            });
        }
    }
    Err(Error::InfeasibleScene(format!(
        "no non-overlapping configuration of {count} squares (edge {edge}) in {max_attempts} attempts"
    )))
}

/// Geometry of the circles-and-triangles dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ct2Config {
    pub circles: usize,
    pub triangles: usize,
    pub circle_radius: u32,
    pub triangle_circumradius: u32,
    pub palette: Vec<[f64; 3]>,
}

impl Default for Ct2Config {
    fn default() -> Self {
        Ct2Config {
            circles: 2,
            triangles: 2,
            circle_radius: 4,
            triangle_circumradius: 5,
            palette: vec![
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 0.0],
                [1.0, 0.0, 1.0],
                [0.0, 1.0, 1.0],
            ],
        }
    }
}

fn place_uniform(rng: &mut StreamRng, mut shape: ShapeInstance, h: usize, w: usize) -> Result<ShapeInstance> {
    // anchor offsets to the continuous extent, then the valid integer range
    shape.anchor = [0, 0];
    let (x0, y0, x1, y1) = shape.extent();
    let lo_x = libm::ceil(-x0) as i64;
    let hi_x = libm::floor(w as f64 - x1) as i64;
    let lo_y = libm::ceil(-y0) as i64;
    let hi_y = libm::floor(h as f64 - y1) as i64;
    if hi_x < lo_x || hi_y < lo_y {
        return Err(Error::InfeasibleScene(format!("{:?} of size {} does not fit", shape.kind, shape.size)));
    }
    let x = lo_x + rng::below(rng, (hi_x - lo_x + 1) as u64) as i64;
    let y = lo_y + rng::below(rng, (hi_y - lo_y + 1) as u64) as i64;
    shape.anchor = [x as i32, y as i32];
    Ok(shape)
}

/// Independent uniform placement of circles then triangles; overlaps allowed.
pub fn sample_ct2_scene(cfg: &Ct2Config, dim: (usize, usize), rng: &mut StreamRng) -> Result<SceneAnnotation> {
    if cfg.palette.is_empty() {
        return Err(invalid!("palette must not be empty"));
    }
    if cfg.circle_radius == 0 || cfg.triangle_circumradius == 0 {
        return Err(invalid!("shape sizes must be positive"));
    }
    let (h, w) = dim;
    let mut shapes = Vec::with_capacity(cfg.circles + cfg.triangles);
    let kinds = core::iter::repeat((ShapeKind::Circle, cfg.circle_radius))
        .take(cfg.circles)
        .chain(core::iter::repeat((ShapeKind::Triangle, cfg.triangle_circumradius)).take(cfg.triangles));
    for (kind, size) in kinds {
        let color = cfg.palette[rng::below(rng, cfg.palette.len() as u64) as usize];
        let proto = ShapeInstance {
            kind,
            anchor: [0, 0],
            size,
            color,
        };
        shapes.push(place_uniform(rng, proto, h, w)?);
    }
    Ok(SceneAnnotation {
        shapes,
        height: h,
        width: w,
        channels: 3,
    })
}

/// A rendered image in row-major `H×W×C` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn background(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![-1.0; height * width * channels],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    /// Per-pixel maximum over channels.
    pub fn max_channel(&self) -> Vec<f32> {
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().cloned().fold(f32::NEG_INFINITY, f32::max))
            .collect()
    }

    /// Copy translated by `(dx, dy)`; uncovered pixels become background.
    pub fn translated(&self, dx: i64, dy: i64) -> Image {
        let mut out = Image::background(self.height, self.width, self.channels);
        for r in 0..self.height as i64 {
            for c in 0..self.width as i64 {
                let (sr, sc) = (r - dy, c - dx);
                if sr >= 0 && sc >= 0 && sr < self.height as i64 && sc < self.width as i64 {
                    for ch in 0..self.channels {
                        out.data[((r as usize) * self.width + c as usize) * self.channels + ch] =
                            self.get(sr as usize, sc as usize, ch);
                    }
                }
            }
        }
        out
    }
}

/// Draws every shape in order (later shapes paint over earlier ones).
pub fn render_scene(ann: &SceneAnnotation) -> Result<Image> {
    let (h, w, c) = (ann.height, ann.width, ann.channels);
    if c != 1 && c != 3 {
        return Err(Error::InvalidAnnotation(format!("unsupported channel count {c}")));
    }
    let mut img = Image::background(h, w, c);
    for (i, s) in ann.shapes.iter().enumerate() {
        if s.size == 0 {
            return Err(Error::InvalidAnnotation(format!("shape {i} has zero size")));
        }
        let (x0, y0, x1, y1) = s.extent();
        if x0 < 0.0 || y0 < 0.0 || x1 > w as f64 || y1 > h as f64 {
            return Err(Error::InvalidAnnotation(format!(
                "shape {i} ({:?} at {:?}, size {}) leaves the {h}x{w} canvas",
                s.kind, s.anchor, s.size
            )));
        }
        let value: [f32; 3] = core::array::from_fn(|k| (2.0 * s.color[k] - 1.0) as f32);
        let r0 = libm::floor(y0).max(0.0) as usize;
        let c0 = libm::floor(x0).max(0.0) as usize;
        let r1 = (libm::ceil(y1) as usize).min(h);
        let c1 = (libm::ceil(x1) as usize).min(w);
        for row in r0..r1 {
            for col in c0..c1 {
                if s.covers(row, col) {
                    let px = &mut img.data[(row * w + col) * c..(row * w + col + 1) * c];
                    if c == 1 {
                        px[0] = value.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                    } else {
                        px.copy_from_slice(&value);
                    }
                }
            }
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageDatasetName {
    #[serde(rename = "squares_1_4")]
    Squares1x4,
    #[serde(rename = "squares_3_4")]
    Squares3x4,
    #[serde(rename = "squares_1_16")]
    Squares1x16,
    Ct2,
}

impl ImageDatasetName {
    pub const ALL: [ImageDatasetName; 4] = [
        ImageDatasetName::Squares1x4,
        ImageDatasetName::Squares3x4,
        ImageDatasetName::Squares1x16,
        ImageDatasetName::Ct2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImageDatasetName::Squares1x4 => "squares_1_4",
            ImageDatasetName::Squares3x4 => "squares_3_4",
            ImageDatasetName::Squares1x16 => "squares_1_16",
            ImageDatasetName::Ct2 => "ct2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }

    /// `(count, edge)` for the square datasets.
    pub fn square_layout(self) -> Option<(usize, u32)> {
        match self {
            ImageDatasetName::Squares1x4 => Some((1, 4)),
            ImageDatasetName::Squares3x4 => Some((3, 4)),
            ImageDatasetName::Squares1x16 => Some((1, 16)),
            ImageDatasetName::Ct2 => None,
        }
    }

    pub fn channels(self) -> usize {
        if self == ImageDatasetName::Ct2 {
            3
        } else {
            1
        }
    }

    /// Fixed number of objects per image.
    pub fn object_count(self, ct2: &Ct2Config) -> usize {
        match self.square_layout() {
            Some((count, _)) => count,
            None => ct2.circles + ct2.triangles,
        }
    }
}

/// Knobs for [`gen_image_dataset`]. The dataset name fixes counts and sizes
/// unless `squares` overrides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub anchor_mode: AnchorMode,
    pub max_attempts: u64,
    pub ct2: Ct2Config,
    /// Optional `(count, edge)` override for the square datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub squares: Option<(usize, u32)>,
    /// Accept square layouts whose squares touch without sharing a pixel.
    #[serde(default)]
    pub allow_touching: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            anchor_mode: AnchorMode::Uniform,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            ct2: Ct2Config::default(),
            squares: None,
            allow_touching: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub name: ImageDatasetName,
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// `n×H×W×C`, row-major.
    pub images: Vec<f32>,
    pub annotations: Vec<SceneAnnotation>,
    /// Rejected configurations per image (always 0 for CT2).
    pub rejections: Vec<u64>,
    pub seed: u64,
}

impl ImageDataset {
    pub fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn image(&self, i: usize) -> Image {
        let len = self.image_len();
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.images[i * len..(i + 1) * len].to_vec(),
        }
    }

    pub fn total_rejections(&self) -> u64 {
        self.rejections.iter().sum()
    }
}

/// Scene for image `index` of a dataset; uses its own stream so every image
/// can be regenerated independently.
pub fn sample_scene(name: ImageDatasetName, seed: u64, index: u64, cfg: &SceneConfig) -> Result<SampledScene> {
    let mut rng = rng::stream(seed, Domain::Scene, index);
    let dim = (IMAGE_DIM, IMAGE_DIM);
    match name.square_layout() {
        Some(default) => {
            let (count, edge) = cfg.squares.unwrap_or(default);
            sample_square_scene(count, edge, dim, &mut rng, cfg.anchor_mode, cfg.allow_touching, cfg.max_attempts)
        }
        None => Ok(SampledScene {
            annotation: sample_ct2_scene(&cfg.ct2, dim, &mut rng)?,
            rejections: 0,
        }),
    }
}

pub fn gen_image_dataset(name: ImageDatasetName, n: usize, seed: u64, cfg: &SceneConfig) -> Result<ImageDataset> {
    let c = name.channels();
    let mut images = Vec::with_capacity(n * IMAGE_DIM * IMAGE_DIM * c);
    let mut annotations = Vec::with_capacity(n);
    let mut rejections = Vec::with_capacity(n);
    for i in 0..n {
        let scene = sample_scene(name, seed, i as u64, cfg)?;
        let img = render_scene(&scene.annotation)?;
        images.extend_from_slice(&img.data);
        annotations.push(scene.annotation);
        rejections.push(scene.rejections);
    }
    Ok(ImageDataset {
        name,
        n,
        height: IMAGE_DIM,
        width: IMAGE_DIM,
        channels: c,
        images,
        annotations,
        rejections,
        seed,
    })
}

impl core::fmt::Display for ImageDatasetName {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Human-readable summary used by manifests.
pub fn describe(name: ImageDatasetName, cfg: &SceneConfig) -> String {
    match name.square_layout() {
        Some(default) => {
            let (count, edge) = cfg.squares.unwrap_or(default);
            format!("{count} square(s) of edge {edge}")
        }
        None => format!(
            "{} circle(s) r={} + {} triangle(s) R={}",
            cfg.ct2.circles, cfg.ct2.circle_radius, cfg.ct2.triangles, cfg.ct2.triangle_circumradius
        ),
    }
}
