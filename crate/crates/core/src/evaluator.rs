//! Geometric metrics standing in for visual inspection of samples.
//!
//! Images: threshold, label connected components, classify each component
//! by bounding-box fill ratio and symmetry, count. Points: mode coverage,
//! ring membership and distance to the noiseless manifold, all measured in
//! data coordinates.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pointgen::{
    s_curve_point, swiss_roll_point, PointKind, PointParams, S_CURVE_T_RANGE, S_CURVE_U_RANGE, SWISS_ROLL_H_RANGE,
    SWISS_ROLL_T_RANGE,
};
use crate::rng::{self, Domain};
use crate::scenegen::{Image, ImageDataset};

/// Binary foreground mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), height * width, "mask size");
        Mask { height, width, bits }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Foreground where the brightest channel is `≥ tau`.
pub fn binarize(image: &Image, tau: f32) -> Mask {
    Mask::new(image.height, image.width, image.max_channel().into_iter().map(|v| v >= tau).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.row1 - self.row0 + 1
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0 + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    pub bbox: BBox,
    /// `(row, col)` in raster order.
    pub pixels: Vec<(usize, usize)>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Two-pass union-find labelling. Components are ordered by their first
/// pixel in raster order.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Vec<Component> {
    let (h, w) = (mask.height, mask.width);
    const NONE: usize = usize::MAX;
    let mut label = alloc::vec![NONE; h * w];
    let mut parent: Vec<usize> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let mut neighbours = [NONE; 4];
            if c > 0 {
                neighbours[0] = label[r * w + c - 1];
            }
            if r > 0 {
                neighbours[1] = label[(r - 1) * w + c];
                if connectivity == Connectivity::Eight {
                    if c > 0 {
                        neighbours[2] = label[(r - 1) * w + c - 1];
                    }
                    if c + 1 < w {
                        neighbours[3] = label[(r - 1) * w + c + 1];
                    }
                }
            }
            let mut mine = NONE;
            for &n in neighbours.iter().filter(|&&n| n != NONE) {
                let rn = find(&mut parent, n);
                if mine == NONE {
                    mine = rn;
                } else if rn != mine {
                    let (lo, hi) = if rn < mine { (rn, mine) } else { (mine, rn) };
                    parent[hi] = lo;
                    mine = lo;
                }
            }
            if mine == NONE {
                mine = parent.len();
                parent.push(mine);
            }
            label[r * w + c] = mine;
        }
    }
    let mut index_of_root = alloc::vec![NONE; parent.len()];
    let mut comps: Vec<Component> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let l = label[r * w + c];
            if l == NONE {
                continue;
            }
            let root = find(&mut parent, l);
            if index_of_root[root] == NONE {
                index_of_root[root] = comps.len();
                comps.push(Component {
                    area: 0,
                    bbox: BBox {
                        row0: r,
                        col0: c,
                        row1: r,
                        col1: c,
                    },
                    pixels: Vec::new(),
                });
            }
            let comp = &mut comps[index_of_root[root]];
            comp.area += 1;
            comp.pixels.push((r, c));
            let b = &mut comp.bbox;
            b.row0 = b.row0.min(r);
            b.row1 = b.row1.max(r);
            b.col0 = b.col0.min(c);
            b.col1 = b.col1.max(c);
        }
    }
    comps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeLabel {
    Square,
    Circle,
    Triangle,
    BlobOther,
}

impl ShapeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeLabel::Square => "square",
            ShapeLabel::Circle => "circle",
            ShapeLabel::Triangle => "triangle",
            ShapeLabel::BlobOther => "blob_other",
        }
    }
}

/// Classifier thresholds; the defaults are calibrated on clean renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    /// Allowed deviation of the bounding-box aspect ratio from 1.
    pub aspect_tol: f64,
    pub square_min_fill: f64,
    pub circle_fill: (f64, f64),
    pub triangle_fill: (f64, f64),
    /// Minimum IoU between a circle candidate and its quarter-turn rotation.
    pub circle_min_symmetry: f64,
    /// Minimum IoU between a triangle candidate and its left-right mirror
    /// (triangles are rendered upright).
    pub triangle_min_symmetry: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            aspect_tol: 0.1,
            square_min_fill: 0.95,
            circle_fill: (0.70, 0.85),
            // A rasterised triangle fills more of its tight box than 1/2.
            triangle_fill: (0.40, 0.69),
            circle_min_symmetry: 0.8,
            triangle_min_symmetry: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub area: usize,
    pub bbox: BBox,
    pub fill_ratio: f64,
    /// Bounding-box width over height.
    pub aspect_ratio: f64,
    pub label: ShapeLabel,
    pub axis_aligned: bool,
}

/// IoU of the pixel set with its quarter-turn rotation inside a square
/// frame centred on the bounding box.
fn quarter_turn_iou(comp: &Component) -> f64 {
    let b = comp.bbox;
    let s = b.height().max(b.width());
    let (r_off, c_off) = ((s - b.height()) / 2, (s - b.width()) / 2);
    let mut grid = alloc::vec![false; s * s];
    for &(r, c) in &comp.pixels {
        grid[(r - b.row0 + r_off) * s + (c - b.col0 + c_off)] = true;
    }
    let mut inter = 0usize;
    for r in 0..s {
        for c in 0..s {
            // (r, c) -> (c, s-1-r)
            if grid[r * s + c] && grid[c * s + (s - 1 - r)] {
                inter += 1;
            }
        }
    }
    let union = 2 * comp.area - inter;
    inter as f64 / union as f64
}

fn mirror_iou(comp: &Component) -> f64 {
    let b = comp.bbox;
    let w = b.width();
    let mut grid = alloc::vec![false; b.height() * w];
    for &(r, c) in &comp.pixels {
        grid[(r - b.row0) * w + (c - b.col0)] = true;
    }
    let inter = comp
        .pixels
        .iter()
        .filter(|&&(r, c)| grid[(r - b.row0) * w + (w - 1 - (c - b.col0))])
        .count();
    inter as f64 / (2 * comp.area - inter) as f64
}

pub fn classify_component(comp: &Component, cfg: &ClassifyConfig) -> ComponentReport {
    let b = comp.bbox;
    let fill = comp.area as f64 / b.area() as f64;
    let aspect = b.width() as f64 / b.height() as f64;
    let square_box = (aspect - 1.0).abs() <= cfg.aspect_tol;
    let axis_aligned = square_box && fill >= cfg.square_min_fill;
    let within = |(lo, hi): (f64, f64)| fill >= lo && fill <= hi;
    let label = if axis_aligned {
        ShapeLabel::Square
    } else if within(cfg.circle_fill) && square_box && quarter_turn_iou(comp) >= cfg.circle_min_symmetry {
        ShapeLabel::Circle
    } else if within(cfg.triangle_fill) && mirror_iou(comp) >= cfg.triangle_min_symmetry {
        ShapeLabel::Triangle
    } else {
        ShapeLabel::BlobOther
    };
    ComponentReport {
        area: comp.area,
        bbox: b,
        fill_ratio: fill,
        aspect_ratio: aspect,
        label,
        axis_aligned,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountConfig {
    pub tau: f32,
    pub min_area: usize,
    pub connectivity: Connectivity,
    pub classify: ClassifyConfig,
}

impl Default for CountConfig {
    fn default() -> Self {
        CountConfig {
            tau: 0.0,
            min_area: 4,
            connectivity: Connectivity::Eight,
            classify: ClassifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    pub count: usize,
    pub components: Vec<ComponentReport>,
}

pub fn count_objects(image: &Image, cfg: &CountConfig) -> CountResult {
    let components: Vec<ComponentReport> = connected_components(&binarize(image, cfg.tau), cfg.connectivity)
        .iter()
        .filter(|c| c.area >= cfg.min_area)
        .map(|c| classify_component(c, &cfg.classify))
        .collect();
    CountResult {
        count: components.len(),
        components,
    }
}

/// Anything that can produce a batch of images for evaluation.
pub trait ImageSource {
    fn sample_images(&mut self, n: usize, seed: u64) -> Vec<Image>;
}

/// Replays training images drawn uniformly with replacement: a generator
/// that has memorised its data perfectly.
pub struct ReplaySampler<'a> {
    pub dataset: &'a ImageDataset,
}

impl ImageSource for ReplaySampler<'_> {
    fn sample_images(&mut self, n: usize, seed: u64) -> Vec<Image> {
        let mut rng = rng::stream(seed, Domain::Eval, 0);
        (0..n)
            .map(|_| self.dataset.image(rng::below(&mut rng, self.dataset.n as u64) as usize))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub n: usize,
    /// Detected count -> number of images.
    pub histogram: BTreeMap<usize, usize>,
    pub expected_count: Option<usize>,
    /// Share of images with exactly `expected_count` objects.
    pub exact_count_rate: Option<f64>,
    pub labels: BTreeMap<ShapeLabel, usize>,
    /// Share of detected components that are filled, square-boxed blobs.
    pub axis_aligned_rate: Option<f64>,
    pub mean_component_area: Option<f64>,
    /// Mean of the larger bounding-box side.
    pub mean_bbox_edge: Option<f64>,
}

pub fn count_histogram_images(images: &[Image], cfg: &CountConfig, expected_count: Option<usize>) -> CountHistogram {
    let mut h = CountHistogram {
        n: images.len(),
        expected_count,
        ..Default::default()
    };
    let (mut comps, mut aligned, mut area, mut edge) = (0usize, 0usize, 0usize, 0usize);
    let mut exact = 0usize;
    for img in images {
        let res = count_objects(img, cfg);
        *h.histogram.entry(res.count).or_insert(0) += 1;
        if Some(res.count) == expected_count {
            exact += 1;
        }
        for c in &res.components {
            comps += 1;
            aligned += usize::from(c.axis_aligned);
            area += c.area;
            edge += c.bbox.height().max(c.bbox.width());
            *h.labels.entry(c.label).or_insert(0) += 1;
        }
    }
    if !images.is_empty() && expected_count.is_some() {
        h.exact_count_rate = Some(exact as f64 / images.len() as f64);
    }
    if comps > 0 {
        h.axis_aligned_rate = Some(aligned as f64 / comps as f64);
        h.mean_component_area = Some(area as f64 / comps as f64);
        h.mean_bbox_edge = Some(edge as f64 / comps as f64);
    }
    h
}

pub fn count_histogram(
    source: &mut dyn ImageSource,
    n: usize,
    seed: u64,
    cfg: &CountConfig,
    expected_count: Option<usize>,
) -> CountHistogram {
    count_histogram_images(&source.sample_images(n, seed), cfg, expected_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    /// Share of samples within `radius` of each center.
    pub fractions: Vec<f64>,
    pub covered: Vec<bool>,
    pub modes_covered: usize,
    /// Share of samples farther than `radius` from every center.
    pub spurious_fraction: f64,
    pub radius: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `samples` are row-major 2-D points.
pub fn mode_coverage(samples: &[f64], centers: &[[f64; 2]], radius: f64, coverage_min: f64) -> Result<ModeCoverage> {
    if samples.is_empty() || samples.len() % 2 != 0 {
        return Err(invalid!("mode coverage needs a non-empty set of 2-D samples"));
    }
    if centers.is_empty() || !(radius > 0.0) {
        return Err(invalid!("mode coverage needs centers and a positive radius"));
    }
    let n = samples.len() / 2;
    let mut hits = alloc::vec![0usize; centers.len()];
    let mut spurious = 0usize;
    let r2 = radius * radius;
    for p in samples.chunks_exact(2) {
        let mut near = false;
        for (k, c) in centers.iter().enumerate() {
            if dist2(p, c) <= r2 {
                hits[k] += 1;
                near = true;
            }
        }
        spurious += usize::from(!near);
    }
    let fractions: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
    let covered: Vec<bool> = fractions.iter().map(|&f| f >= coverage_min).collect();
    Ok(ModeCoverage {
        modes_covered: covered.iter().filter(|&&c| c).count(),
        fractions,
        covered,
        spurious_fraction: spurious as f64 / n as f64,
        radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingMembership {
    pub inner: f64,
    pub outer: f64,
    pub neither: f64,
    /// Part of `neither` strictly between the two rings.
    pub between: f64,
}

/// A sample belongs to a ring when `| ‖p‖ − r | ≤ tol`; if both rings
/// qualify the closer one wins.
pub fn ring_membership(samples: &[f64], radii: (f64, f64), tol: f64) -> Result<RingMembership> {
    if samples.is_empty() || samples.len() % 2 != 0 {
        return Err(invalid!("ring membership needs a non-empty set of 2-D samples"));
    }
    let n = samples.len() / 2;
    let (mut inner, mut outer, mut between) = (0usize, 0usize, 0usize);
    for p in samples.chunks_exact(2) {
        let r = libm::sqrt(p[0] * p[0] + p[1] * p[1]);
        if r > radii.0 + tol && r < radii.1 - tol {
            between += 1;
        }
        let (di, doo) = ((r - radii.0).abs(), (r - radii.1).abs());
        if di <= tol && di <= doo {
            inner += 1;
        } else if doo <= tol {
            outer += 1;
        }
    }
    Ok(RingMembership {
        inner: inner as f64 / n as f64,
        outer: outer as f64 / n as f64,
        neither: (n - inner - outer) as f64 / n as f64,
        between: between as f64 / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldStats {
    pub n: usize,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
    /// Largest nearest-neighbour spacing inside the reference set.
    pub discretization_bound: f64,
    pub m_ref: usize,
}

/// Noiseless reference points, evenly spaced in arc length along the
/// curve direction and in the height direction.
#[derive(Debug, Clone)]
pub struct ManifoldReference {
    pub dim: usize,
    pub points: Vec<f64>,
}

/// `n` parameter values splitting the curve `f` over `[lo, hi]` into equal
/// arc-length pieces (endpoints included).
fn equal_arc_params(f: &dyn Fn(f64) -> [f64; 3], lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    const FINE: usize = 20_000;
    let mut cum = Vec::with_capacity(FINE + 1);
    cum.push(0.0);
    let mut prev = f(lo);
    for i in 1..=FINE {
        let p = f(lo + (hi - lo) * i as f64 / FINE as f64);
        let d = libm::sqrt(dist2(&p, &prev));
        cum.push(cum[i - 1] + d);
        prev = p;
    }
    let total = cum[FINE];
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let target = if n == 1 { 0.0 } else { total * k as f64 / (n - 1) as f64 };
        while j + 1 < FINE && cum[j + 1] < target {
            j += 1;
        }
        let seg = cum[j + 1] - cum[j];
        let frac = if seg > 0.0 { ((target - cum[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        out.push(lo + (hi - lo) * (j as f64 + frac) / FINE as f64);
    }
    (out, total)
}

impl ManifoldReference {
    pub fn build(params: &PointParams, m_ref: usize) -> Result<Self> {
        if m_ref < 4 {
            return Err(invalid!("reference set needs at least 4 points"));
        }
        match params {
            PointParams::SCurve | PointParams::SwissRoll => {
                let (f, t, h): (fn(f64, f64) -> [f64; 3], _, _) = if params.kind() == PointKind::SCurve {
                    (s_curve_point, S_CURVE_T_RANGE, S_CURVE_U_RANGE)
                } else {
                    (swiss_roll_point, SWISS_ROLL_T_RANGE, SWISS_ROLL_H_RANGE)
                };
                let curve = move |t: f64| f(t, h.0);
                let (_, length) = equal_arc_params(&curve, t.0, t.1, 2);
                let height = h.1 - h.0;
                // Near-equal spacing in both directions.
                let spacing = libm::sqrt(length * height / m_ref as f64);
                let n_t = ((length / spacing) as usize + 1).max(2);
                let n_h = (m_ref / n_t).max(2);
                let (ts, _) = equal_arc_params(&curve, t.0, t.1, n_t);
                let mut points = Vec::with_capacity(n_t * n_h * 3);
                for &tv in &ts {
                    for j in 0..n_h {
                        let hv = h.0 + height * j as f64 / (n_h - 1) as f64;
                        points.extend(f(tv, hv));
                    }
                }
                Ok(ManifoldReference { dim: 3, points })
            }
            PointParams::Circles { factor } => {
                let radii = [1.0, *factor];
                let total: f64 = radii.iter().sum();
                let mut points = Vec::with_capacity(m_ref * 2);
                for r in radii {
                    let k = ((m_ref as f64 * r / total) as usize).max(3);
                    for i in 0..k {
                        let th = 2.0 * core::f64::consts::PI * i as f64 / k as f64;
                        points.push(r * libm::cos(th));
                        points.push(r * libm::sin(th));
                    }
                }
                Ok(ManifoldReference { dim: 2, points })
            }
            PointParams::Blobs(_) => Err(invalid!("blobs have no manifold; use mode coverage")),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Uniform-grid nearest-neighbour index.
struct GridIndex<'a> {
    dim: usize,
    points: &'a [f64],
    lo: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> GridIndex<'a> {
    fn new(dim: usize, points: &'a [f64], per_cell: f64) -> Self {
        let n = points.len() / dim;
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..dim {
            lo[a] = points.iter().skip(a).step_by(dim).cloned().fold(f64::INFINITY, f64::min);
            hi[a] = points.iter().skip(a).step_by(dim).cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        let volume: f64 = (0..dim).map(|a| (hi[a] - lo[a]).max(1e-9)).product();
        let cell = libm::pow(volume * per_cell / n as f64, 1.0 / dim as f64).max(1e-9);
        let mut dims = [1usize; 3];
        for a in 0..dim {
            dims[a] = (((hi[a] - lo[a]) / cell) as usize + 1).min(1 << 10);
        }
        let mut idx = GridIndex {
            dim,
            points,
            lo,
            cell,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let cells = dims.iter().product::<usize>();
        let mut counts = alloc::vec![0usize; cells + 1];
        let keys: Vec<usize> = (0..n).map(|i| idx.key(&idx.coords(&points[i * dim..(i + 1) * dim]))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = alloc::vec![0usize; n];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        idx.starts = counts;
        idx.order = order;
        idx
    }

    fn coords(&self, p: &[f64]) -> [isize; 3] {
        let mut c = [0isize; 3];
        for a in 0..self.dim {
            let v = libm::floor((p[a] - self.lo[a]) / self.cell) as isize;
            c[a] = v.clamp(0, self.dims[a] as isize - 1);
        }
        c
    }

    fn key(&self, c: &[isize; 3]) -> usize {
        (c[0] as usize * self.dims[1] + c[1] as usize) * self.dims[2] + c[2] as usize
    }

    /// Squared distance to the nearest indexed point, skipping `exclude`.
    fn nearest2(&self, p: &[f64], exclude: Option<usize>) -> f64 {
        let home = self.coords(p);
        // Distance from p to the home cell's box, for the shell bound.
        let mut best = f64::INFINITY;
        let max_shell = self.dims.iter().max().copied().unwrap_or(1) as isize;
        let mut outside = 0.0f64;
        for a in 0..self.dim {
            let lo = self.lo[a] + home[a] as f64 * self.cell;
            let hi = lo + self.cell;
            outside = outside.max((lo - p[a]).max(p[a] - hi).max(0.0));
        }
        for s in 0..=max_shell {
            let mut lo = [0isize; 3];
            let mut hi = [0isize; 3];
            for a in 0..3 {
                if a < self.dim {
                    lo[a] = (home[a] - s).max(0);
                    hi[a] = (home[a] + s).min(self.dims[a] as isize - 1);
                }
            }
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        let ring = (x - home[0]).abs().max((y - home[1]).abs()).max((z - home[2]).abs());
                        if ring != s {
                            continue;
                        }
                        let k = self.key(&[x, y, z]);
                        for &i in &self.order[self.starts[k]..self.starts[k + 1]] {
                            if Some(i) == exclude {
                                continue;
                            }
                            let d = dist2(p, &self.points[i * self.dim..(i + 1) * self.dim]);
                            if d < best {
                                best = d;
                            }
                        }
                    }
                }
            }
            // Unvisited cells are at least `s·cell − outside` away.
            let reach = s as f64 * self.cell - outside;
            if reach > 0.0 && best <= reach * reach {
                break;
            }
        }
        best
    }
}

/// Nearest-reference distances of `samples` (row-major, data coordinates).
pub fn manifold_distance(samples: &[f64], params: &PointParams, m_ref: usize) -> Result<ManifoldStats> {
    let reference = ManifoldReference::build(params, m_ref)?;
    manifold_distance_to(samples, &reference)
}

pub fn manifold_distance_to(samples: &[f64], reference: &ManifoldReference) -> Result<ManifoldStats> {
    let d = reference.dim;
    if samples.is_empty() || samples.len() % d != 0 {
        return Err(invalid!("manifold distance needs a non-empty set of {d}-D samples"));
    }
    let index = GridIndex::new(d, &reference.points, 2.0);
    let mut dists: Vec<f64> = samples.chunks_exact(d).map(|p| libm::sqrt(index.nearest2(p, None))).collect();
    let bound = (0..reference.len())
        .map(|i| index.nearest2(&reference.points[i * d..(i + 1) * d], Some(i)))
        .fold(0.0, f64::max);
    let n = dists.len();
    dists.sort_by(|a, b| a.total_cmp(b));
    let mean = dists.iter().sum::<f64>() / n as f64;
    let p95 = dists[(libm::ceil(0.95 * n as f64) as usize).max(1) - 1];
    Ok(ManifoldStats {
        n,
        mean,
        p95,
        max: dists[n - 1],
        discretization_bound: libm::sqrt(bound),
        m_ref: reference.len(),
    })
}

/// Aggregated evaluation of one sample batch. Sections that do not apply
/// to the data kind are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Free-form provenance (source, seeds, config hash, ...).
    pub provenance: BTreeMap<String, String>,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<CountHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_coverage: Option<ModeCoverage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rings: Option<RingMembership>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldStats>,
    pub notes: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::pointgen::{generate, NoiseLevel};
    use crate::scenegen::{gen_image_dataset, render_scene, ImageDatasetName, SceneAnnotation, SceneConfig, ShapeInstance, ShapeKind};

    fn scene(shapes: Vec<ShapeInstance>) -> Image {
        render_scene(&SceneAnnotation {
            shapes,
            height: 28,
            width: 28,
            channels: 1,
        })
        .unwrap()
    }

    fn shape(kind: ShapeKind, anchor: [i32; 2], size: u32) -> ShapeInstance {
        ShapeInstance {
            kind,
            anchor,
            size,
            color: [1.0; 3],
        }
    }

    fn mask_from(rows: &[&str]) -> Mask {
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Mask::new(rows.len(), rows[0].len(), bits)
    }

    #[test]
    fn binarize_clean_render_matches_annotation() {
        let img = scene(vec![ShapeInstance::square(3, 5, 4), ShapeInstance::square(20, 10, 4)]);
        let m = binarize(&img, 0.0);
        for r in 0..28 {
            for c in 0..28 {
                let inside = |x: usize, y: usize| c >= x && c < x + 4 && r >= y && r < y + 4;
                assert_eq!(m.get(r, c), inside(3, 5) || inside(20, 10), "pixel {r},{c}");
            }
        }
        assert_eq!(binarize(&Image::background(28, 28, 3), 0.0).count(), 0);
        let mut flat = Image::background(5, 5, 1);
        flat.data.iter_mut().for_each(|v| *v = 0.25);
        assert_eq!(binarize(&flat, 0.25).count(), 25);
    }

    #[test]
    fn connectivity_rules() {
        let diag = mask_from(&["#.", ".#"]);
        assert_eq!(connected_components(&diag, Connectivity::Eight).len(), 1);
        assert_eq!(connected_components(&diag, Connectivity::Four).len(), 2);
        assert!(connected_components(&mask_from(&["...", "..."]), Connectivity::Eight).is_empty());
    }

    #[test]
    fn merges_u_shape_and_orders_by_scan() {
        let m = mask_from(&["#.#..#", "#.#...", "###.##"]);
        let comps = connected_components(&m, Connectivity::Four);
        assert_eq!(comps.len(), 3);
        assert_eq!(comps[0].area, 7);
        assert_eq!(comps[0].bbox, BBox { row0: 0, col0: 0, row1: 2, col1: 2 });
        assert_eq!(comps[1].pixels, [(0, 5)]);
        assert_eq!(comps[2].pixels, [(2, 4), (2, 5)]);
    }

    #[test]
    fn three_squares_give_three_components_of_16() {
        let img = scene(vec![
            ShapeInstance::square(0, 0, 4),
            ShapeInstance::square(10, 10, 4),
            ShapeInstance::square(24, 24, 4),
        ]);
        let comps = connected_components(&binarize(&img, 0.0), Connectivity::Eight);
        assert_eq!(comps.iter().map(|c| c.area).collect::<Vec<_>>(), [16, 16, 16]);
    }

    #[test]
    fn classifies_clean_shapes() {
        let cfg = CountConfig::default();
        let sq = count_objects(&scene(vec![ShapeInstance::square(7, 7, 4)]), &cfg);
        assert_eq!(sq.count, 1);
        assert_eq!(sq.components[0].label, ShapeLabel::Square);
        assert!(sq.components[0].axis_aligned);

        // Pixel-centre disk oracle: (c+½−cx)² + (r+½−cy)² ≤ 16.
        let disk_px = (0..28)
            .flat_map(|r| (0..28).map(move |c| (r, c)))
            .filter(|&(r, c)| {
                let (dx, dy) = (c as f64 + 0.5 - 14.0, r as f64 + 0.5 - 14.0);
                dx * dx + dy * dy <= 16.0
            })
            .count();
        let disk = count_objects(&scene(vec![shape(ShapeKind::Circle, [14, 14], 4)]), &cfg);
        let c = &disk.components[0];
        assert_eq!(c.area, disk_px);
        assert!((c.fill_ratio - disk_px as f64 / 64.0).abs() < 1e-12);
        assert_eq!(c.label, ShapeLabel::Circle);
        assert!(!c.axis_aligned);

        let tri = count_objects(&scene(vec![shape(ShapeKind::Triangle, [14, 14], 5)]), &cfg);
        assert_eq!(tri.components[0].label, ShapeLabel::Triangle);

        // Two squares fused into an L (32 of 48 box pixels), and corner to corner.
        let l = count_objects(&scene(vec![ShapeInstance::square(4, 4, 4), ShapeInstance::square(8, 6, 4)]), &cfg);
        assert_eq!(l.count, 1);
        assert_eq!(l.components[0].fill_ratio, 32.0 / 48.0);
        assert_eq!(l.components[0].label, ShapeLabel::BlobOther);
        let d = count_objects(&scene(vec![ShapeInstance::square(4, 4, 4), ShapeInstance::square(8, 8, 4)]), &cfg);
        assert_eq!(d.count, 1);
        assert_eq!(d.components[0].label, ShapeLabel::BlobOther);
    }

    #[test]
    fn ct2_training_images_classify() {
        let cfg = SceneConfig::default();
        let ds = gen_image_dataset(ImageDatasetName::Ct2, 50, 2, &cfg).unwrap();
        let mut checked = 0;
        for (i, ann) in ds.annotations.iter().enumerate() {
            // Only scenes whose shapes are isolated have one component per shape.
            let solo: Vec<Image> = ann
                .shapes
                .iter()
                .map(|s| {
                    render_scene(&SceneAnnotation {
                        shapes: alloc::vec![s.clone()],
                        ..ann.clone()
                    })
                    .unwrap()
                })
                .collect();
            for (s, img) in ann.shapes.iter().zip(&solo) {
                let res = count_objects(img, &CountConfig::default());
                let want = match s.kind {
                    ShapeKind::Circle => ShapeLabel::Circle,
                    ShapeKind::Triangle => ShapeLabel::Triangle,
                    ShapeKind::Square => ShapeLabel::Square,
                };
                assert_eq!(res.count, 1, "image {i}");
                assert_eq!(res.components[0].label, want, "image {i}, {s:?}");
                checked += 1;
            }
        }
        assert_eq!(checked, 200);
    }

    #[test]
    fn counts_are_translation_equivariant() {
        let img = scene(vec![ShapeInstance::square(5, 5, 4), ShapeInstance::square(12, 3, 4)]);
        let base = count_objects(&img, &CountConfig::default());
        for (dx, dy) in [(3, 0), (0, 7), (-4, 2), (8, -2)] {
            let moved = count_objects(&img.translated(dx, dy), &CountConfig::default());
            assert_eq!(moved.count, base.count);
            let labels = |r: &CountResult| r.components.iter().map(|c| c.label).collect::<Vec<_>>();
            assert_eq!(labels(&moved), labels(&base));
        }
    }

    #[test]
    fn min_area_filters_speckle() {
        let mut img = scene(vec![ShapeInstance::square(5, 5, 4)]);
        img.data[20 * 28 + 20] = 1.0;
        assert_eq!(count_objects(&img, &CountConfig::default()).count, 1);
        let cfg = CountConfig {
            min_area: 1,
            ..Default::default()
        };
        assert_eq!(count_objects(&img, &cfg).count, 2);
        assert_eq!(count_objects(&Image::background(28, 28, 1), &cfg).count, 0);
    }

    #[test]
    fn replay_histograms() {
        let ds = gen_image_dataset(ImageDatasetName::Squares3x4, 40, 1, &SceneConfig::default()).unwrap();
        let mut src = ReplaySampler { dataset: &ds };
        let h = count_histogram(&mut src, 100, 4, &CountConfig::default(), Some(3));
        assert_eq!(h.histogram.get(&3), Some(&100));
        assert_eq!(h.exact_count_rate, Some(1.0));
        assert_eq!(h.axis_aligned_rate, Some(1.0));
        assert_eq!(h.mean_component_area, Some(16.0));
        assert_eq!(h.labels.get(&ShapeLabel::Square), Some(&300));
        let empty = count_histogram(&mut src, 0, 4, &CountConfig::default(), Some(3));
        assert!(empty.histogram.is_empty());
        assert_eq!(empty.exact_count_rate, None);
    }

    #[test]
    fn histogram_is_order_invariant() {
        let ds = gen_image_dataset(ImageDatasetName::Squares1x16, 30, 5, &SceneConfig::default()).unwrap();
        let mut imgs: Vec<Image> = (0..30).map(|i| ds.image(i)).collect();
        imgs[3] = Image::background(28, 28, 1);
        let a = count_histogram_images(&imgs, &CountConfig::default(), Some(1));
        imgs.reverse();
        let b = count_histogram_images(&imgs, &CountConfig::default(), Some(1));
        assert_eq!(a, b);
        assert_eq!(a.histogram.values().sum::<usize>(), 30);
        assert!((a.exact_count_rate.unwrap() - 29.0 / 30.0).abs() < 1e-15);
    }

    const CENTERS: [[f64; 2]; 3] = [[-6.0, 0.0], [6.0, 0.0], [0.0, 8.0]];

    #[test]
    fn mode_coverage_examples() {
        let on: Vec<f64> = (0..30).flat_map(|i| CENTERS[i % 3]).collect();
        let m = mode_coverage(&on, &CENTERS, 3.0, 0.01).unwrap();
        assert_eq!(m.covered, [true, true, true]);
        assert_eq!(m.spurious_fraction, 0.0);

        let mid: Vec<f64> = (0..10).flat_map(|_| [0.0, 0.0]).collect();
        let m = mode_coverage(&mid, &CENTERS[..2], 3.0, 0.01).unwrap();
        assert_eq!(m.covered, [false, false]);
        assert_eq!(m.spurious_fraction, 1.0);

        let mut mixed: Vec<f64> = (0..90).flat_map(|i| CENTERS[i % 3]).collect();
        mixed.extend((0..10).flat_map(|_| [0.0, 0.0]));
        let m = mode_coverage(&mixed, &CENTERS[..2], 3.0, 0.01).unwrap();
        assert_eq!(m.spurious_fraction, 40.0 / 100.0);
        let m = mode_coverage(&mixed, &[CENTERS[0], CENTERS[1], [0.0, 20.0]], 3.0, 0.01).unwrap();
        assert_eq!(m.spurious_fraction, 0.4);
        let m = mode_coverage(&mixed, &CENTERS, 3.0, 0.01).unwrap();
        assert_eq!(m.spurious_fraction, 0.10);
        assert!(mode_coverage(&[], &CENTERS, 3.0, 0.01).is_err());
    }

    #[test]
    fn ring_examples() {
        let ds = generate(&PointParams::Circles { factor: 0.5 }, 2000, 0.0, 1).unwrap();
        let r = ring_membership(&ds.points, (0.5, 1.0), 1e-9).unwrap();
        assert_eq!(r.neither, 0.0);
        assert_eq!((r.inner, r.outer), (0.5, 0.5));
        let mid: Vec<f64> = (0..100)
            .flat_map(|i| {
                let th = i as f64 * 0.1;
                [0.75 * libm::cos(th), 0.75 * libm::sin(th)]
            })
            .collect();
        let m = ring_membership(&mid, (0.5, 1.0), 0.2).unwrap();
        assert_eq!((m.neither, m.between), (1.0, 1.0));
        let far = [2.0, 0.0, 0.1, 0.0];
        let m = ring_membership(&far, (0.5, 1.0), 0.2).unwrap();
        assert_eq!((m.neither, m.between), (1.0, 0.0));
        // ‖noise‖ > 0.15 for a 0.05-std isotropic normal has probability
        // e^(−4.5) ≈ 0.011; the radial component alone is far tighter.
        let noisy = generate(&PointParams::Circles { factor: 0.5 }, 5000, NoiseLevel::Moderate.std(), 2).unwrap();
        assert!(ring_membership(&noisy.points, (0.5, 1.0), 0.15).unwrap().neither <= 0.01);
    }

    #[test]
    fn manifold_examples() {
        for kind in [PointKind::SCurve, PointKind::SwissRoll] {
            let params = PointParams::default_for(kind);
            let ds = generate(&params, 2000, 0.0, 8).unwrap();
            let reference = ManifoldReference::build(&params, 20_000).unwrap();
            let s = manifold_distance_to(&ds.points, &reference).unwrap();
            assert!(s.mean <= s.discretization_bound, "{kind:?}: {s:?}");
            assert!(s.max <= s.discretization_bound, "{kind:?}: {s:?}");
            let mut rev: Vec<f64> = ds.points.chunks(3).rev().flatten().cloned().collect();
            assert_eq!(manifold_distance_to(&rev, &reference).unwrap(), s);
            rev.clear();
            assert!(manifold_distance_to(&rev, &reference).is_err());
        }
        // (0, 1, 0.3) lies 0.3 from both unit arcs meeting at the origin.
        let s = manifold_distance(&[0.0, 1.0, 0.3], &PointParams::SCurve, 100_000).unwrap();
        assert!((s.mean - 0.3).abs() <= s.discretization_bound, "{s:?}");
        let s = manifold_distance(&[3.0, 0.0], &PointParams::Circles { factor: 0.5 }, 10_000).unwrap();
        assert!((s.mean - 2.0).abs() <= s.discretization_bound);
        assert!(manifold_distance(&[0.0, 0.0], &PointParams::default_for(PointKind::Blobs), 100).is_err());
    }

    #[test]
    fn grid_index_matches_brute_force() {
        let reference = ManifoldReference::build(&PointParams::SwissRoll, 3000).unwrap();
        let index = GridIndex::new(3, &reference.points, 2.0);
        let mut rng = rng::stream(0, Domain::Eval, 1);
        for _ in 0..200 {
            let p: Vec<f64> = (0..3).map(|_| rng::uniform_range(&mut rng, -20.0, 30.0)).collect();
            let brute = reference.points.chunks(3).map(|q| dist2(&p, q)).fold(f64::INFINITY, f64::min);
            assert_eq!(index.nearest2(&p, None), brute);
        }
    }
}
