//! Generators for the four low-dimensional point distributions.
//!
//! The closed forms below are the normative definitions of each
//! distribution; they mirror the usual toy-dataset parameterisations:
//!
//! | kind         | d | sample                                                    |
//! |--------------|---|-----------------------------------------------------------|
//! | `blobs`      | 2 | `c_k + std_k·N(0, I)`, `k` uniform over clusters            |
//! | `circles`    | 2 | `r·(cos θ, sin θ)`, `r ∈ {1, factor}`, `θ ~ U[0, 2π)`       |
//! | `s_curve`    | 3 | `(sin t, u, sign(t)(cos t − 1))`, `t ~ U[−3π/2, 3π/2]`, `u ~ U[0, 2]` |
//! | `swiss_roll` | 3 | `(t cos t, h, t sin t)`, `t = 1.5π(1 + 2v)`, `v ~ U[0,1]`, `h ~ U[0, 21]` |
//!
//! Additive isotropic noise `noise·N(0, I_d)` is drawn after the manifold
//! parameters of each sample, and always drawn, so the same seed yields the
//! same underlying manifold points at every noise level.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{self, Domain};

/// Interval the normalised data is mapped into (inside the Tanh range).
pub const NORMALIZED_BOUND: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Blobs,
    Circles,
    SCurve,
    SwissRoll,
}

impl PointKind {
    pub fn dim(self) -> usize {
        match self {
            PointKind::Blobs | PointKind::Circles => 2,
            PointKind::SCurve | PointKind::SwissRoll => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PointKind::Blobs => "blobs",
            PointKind::Circles => "circles",
            PointKind::SCurve => "s_curve",
            PointKind::SwissRoll => "swiss_roll",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "blobs" => Some(PointKind::Blobs),
            "circles" => Some(PointKind::Circles),
            "s_curve" => Some(PointKind::SCurve),
            "swiss_roll" => Some(PointKind::SwissRoll),
            _ => None,
        }
    }
}

/// The three named noise variants of every point dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    Minimal,
    Moderate,
    Extra,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 3] = [NoiseLevel::Minimal, NoiseLevel::Moderate, NoiseLevel::Extra];

    pub fn std(self) -> f64 {
        match self {
            NoiseLevel::Minimal => 0.0,
            NoiseLevel::Moderate => 0.05,
            NoiseLevel::Extra => 0.15,
        }
    }
}

/// Gaussian mixture definition: one center and one standard deviation per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub centers: Vec<[f64; 2]>,
    pub std: Vec<f64>,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            centers: vec![[-6.0, 0.0], [6.0, 0.0], [0.0, 8.0]],
            std: vec![1.0; 3],
        }
    }
}

impl BlobSpec {
    /// Same standard deviation for every cluster.
    pub fn uniform_std(centers: Vec<[f64; 2]>, std: f64) -> Self {
        let k = centers.len();
        BlobSpec { centers, std: vec![std; k] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(invalid!("blob spec needs at least one center"));
        }
        if self.std.len() != self.centers.len() {
            return Err(invalid!(
                "blob spec has {} centers but {} std values",
                self.centers.len(),
                self.std.len()
            ));
        }
        // std = 0 is accepted as the degenerate point-mass case
        if self.std.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(invalid!("blob std must be finite and nonnegative"));
        }
        if self.centers.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid!("blob centers must be finite"));
        }
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                if self.centers[i] == self.centers[j] {
                    return Err(invalid!("blob centers {i} and {j} coincide"));
                }
            }
        }
        Ok(())
    }
}

/// Distribution parameters beyond the noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointParams {
    Blobs(BlobSpec),
    Circles { factor: f64 },
    SCurve,
    SwissRoll,
}

impl PointParams {
    pub fn kind(&self) -> PointKind {
        match self {
            PointParams::Blobs(_) => PointKind::Blobs,
            PointParams::Circles { .. } => PointKind::Circles,
            PointParams::SCurve => PointKind::SCurve,
            PointParams::SwissRoll => PointKind::SwissRoll,
        }
    }

    /// Default parameters for `kind`.
    pub fn default_for(kind: PointKind) -> Self {
        match kind {
            PointKind::Blobs => PointParams::Blobs(BlobSpec::default()),
            PointKind::Circles => PointParams::Circles { factor: 0.5 },
            PointKind::SCurve => PointParams::SCurve,
            PointKind::SwissRoll => PointParams::SwissRoll,
        }
    }
}

/// Per-sample generation metadata. Which arrays are present depends on the kind:
/// `labels` for blobs (cluster) and circles (0 = outer, 1 = inner ring);
/// `t` for circles (angle), s-curve and swiss roll; `height` for s-curve (`u`)
/// and swiss roll (`h`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<Vec<f64>>,
}

/// Per-axis affine map `y = (x − lo)·scale − bound` into `[−bound, bound]`.
/// Degenerate axes (zero range) map to 0 and invert to `lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bound: f64,
    pub degenerate: Vec<bool>,
}

impl AffineTransform {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn scale(&self, axis: usize) -> f64 {
        2.0 * self.bound / (self.hi[axis] - self.lo[axis])
    }

    pub fn apply(&self, x: f64, axis: usize) -> f64 {
        if self.degenerate[axis] {
            0.0
        } else {
            (x - self.lo[axis]) * self.scale(axis) - self.bound
        }
    }

    pub fn invert(&self, y: f64, axis: usize) -> f64 {
        if self.degenerate[axis] {
            self.lo[axis]
        } else {
            (y + self.bound) / self.scale(axis) + self.lo[axis]
        }
    }

    /// Applies the map to a row-major `n×d` matrix.
    pub fn apply_all(&self, points: &[f64]) -> Vec<f64> {
        let d = self.dim();
        points.iter().enumerate().map(|(i, &x)| self.apply(x, i % d)).collect()
    }

    /// Inverts the map on a row-major `n×d` matrix.
    pub fn invert_all(&self, points: &[f64]) -> Vec<f64> {
        let d = self.dim();
        points.iter().enumerate().map(|(i, &y)| self.invert(y, i % d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDataset {
    pub kind: PointKind,
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub seed: u64,
    pub params: PointParams,
    /// Row-major `n×d`.
    pub points: Vec<f64>,
    pub metadata: PointMetadata,
    /// Set when `points` hold normalised coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<AffineTransform>,
}

impl PointDataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    /// Re-evaluates sample `i` through the closed form with zero noise,
    /// using only the retained metadata.
    pub fn noiseless_point(&self, i: usize) -> Option<Vec<f64>> {
        let md = &self.metadata;
        match &self.params {
            PointParams::Blobs(spec) => {
                let k = *md.labels.as_ref()?.get(i)? as usize;
                Some(spec.centers.get(k)?.to_vec())
            }
            PointParams::Circles { factor } => {
                let ring = *md.labels.as_ref()?.get(i)?;
                let theta = *md.t.as_ref()?.get(i)?;
                let r = if ring == 0 { 1.0 } else { *factor };
                Some(vec![r * libm::cos(theta), r * libm::sin(theta)])
            }
            PointParams::SCurve => {
                let t = *md.t.as_ref()?.get(i)?;
                let u = *md.height.as_ref()?.get(i)?;
                Some(s_curve_point(t, u).to_vec())
            }
            PointParams::SwissRoll => {
                let t = *md.t.as_ref()?.get(i)?;
                let h = *md.height.as_ref()?.get(i)?;
                Some(swiss_roll_point(t, h).to_vec())
            }
        }
    }

    fn validate_shape(&self) {
        debug_assert_eq!(self.points.len(), self.n * self.d);
    }
}

/// Closed-form s-curve point.
pub fn s_curve_point(t: f64, u: f64) -> [f64; 3] {
    let sign = if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    };
    [libm::sin(t), u, sign * (libm::cos(t) - 1.0)]
}

/// Closed-form swiss-roll point.
pub fn swiss_roll_point(t: f64, h: f64) -> [f64; 3] {
    [t * libm::cos(t), h, t * libm::sin(t)]
}

pub const S_CURVE_T_RANGE: (f64, f64) = (-1.5 * PI, 1.5 * PI);
pub const S_CURVE_U_RANGE: (f64, f64) = (0.0, 2.0);
pub const SWISS_ROLL_T_RANGE: (f64, f64) = (1.5 * PI, 4.5 * PI);
pub const SWISS_ROLL_H_RANGE: (f64, f64) = (0.0, 21.0);

fn check_common(n: usize, noise: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid!("n must be at least 1"));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(invalid!("noise must be finite and nonnegative, got {noise}"));
    }
    Ok(())
}

/// Dispatches to the generator for `params`.
pub fn generate(params: &PointParams, n: usize, noise: f64, seed: u64) -> Result<PointDataset> {
    match params {
        PointParams::Blobs(spec) => {
            // blobs carry their noise in the per-cluster std
            let _ = noise;
            gen_blobs(n, spec, seed)
        }
        PointParams::Circles { factor } => gen_circles(n, *factor, noise, seed),
        PointParams::SCurve => gen_s_curve(n, noise, seed),
        PointParams::SwissRoll => gen_swiss_roll(n, noise, seed),
    }
}

/// Gaussian mixture: cluster index uniform over the centers, then
/// `center + std·N(0, I₂)`.
pub fn gen_blobs(n: usize, spec: &BlobSpec, seed: u64) -> Result<PointDataset> {
    check_common(n, 0.0)?;
    spec.validate()?;
    let mut rng = rng::stream(seed, Domain::Points, 0);
    let k = spec.centers.len() as u64;
    let mut points = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng::below(&mut rng, k) as usize;
        let s = spec.std[c];
        let dx = rng::normal(&mut rng);
        let dy = rng::normal(&mut rng);
        points.push(spec.centers[c][0] + s * dx);
        points.push(spec.centers[c][1] + s * dy);
        labels.push(c as u32);
    }
    let ds = PointDataset {
        kind: PointKind::Blobs,
        n,
        d: 2,
        noise: spec.std.iter().cloned().fold(0.0, f64::max),
        seed,
        params: PointParams::Blobs(spec.clone()),
        points,
        metadata: PointMetadata {
            labels: Some(labels),
            ..Default::default()
        },
        normalization: None,
    };
    ds.validate_shape();
    Ok(ds)
}

/// Two concentric rings. The first `n / 2` samples sit on the unit circle
/// (label 0), the remaining `n − n / 2` on the circle of radius `factor`
/// (label 1).
pub fn gen_circles(n: usize, factor: f64, noise: f64, seed: u64) -> Result<PointDataset> {
    check_common(n, noise)?;
    if !(factor > 0.0 && factor < 1.0) {
        return Err(invalid!("circles factor must lie in (0, 1), got {factor}"));
    }
    let mut rng = rng::stream(seed, Domain::Points, 0);
    let n_outer = n / 2;
    let mut points = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    for i in 0..n {
        let ring = u32::from(i >= n_outer);
        let r = if ring == 0 { 1.0 } else { factor };
        let theta = rng::uniform_range(&mut rng, 0.0, 2.0 * PI);
        let dx = rng::normal(&mut rng);
        let dy = rng::normal(&mut rng);
        points.push(r * libm::cos(theta) + noise * dx);
        points.push(r * libm::sin(theta) + noise * dy);
        labels.push(ring);
        angles.push(theta);
    }
    Ok(PointDataset {
        kind: PointKind::Circles,
        n,
        d: 2,
        noise,
        seed,
        params: PointParams::Circles { factor },
        points,
        metadata: PointMetadata {
            labels: Some(labels),
            t: Some(angles),
            height: None,
        },
        normalization: None,
    })
}

fn gen_surface(
    n: usize,
    noise: f64,
    seed: u64,
    kind: PointKind,
    sample: impl Fn(&mut rng::StreamRng) -> (f64, f64),
    eval: impl Fn(f64, f64) -> [f64; 3],
) -> Result<PointDataset> {
    check_common(n, noise)?;
    let mut rng = rng::stream(seed, Domain::Points, 0);
    let mut points = Vec::with_capacity(n * 3);
    let mut ts = Vec::with_capacity(n);
    let mut hs = Vec::with_capacity(n);
    for _ in 0..n {
        let (t, h) = sample(&mut rng);
        let p = eval(t, h);
        for x in p {
            points.push(x + noise * rng::normal(&mut rng));
        }
        ts.push(t);
        hs.push(h);
    }
    Ok(PointDataset {
        kind,
        n,
        d: 3,
        noise,
        seed,
        params: PointParams::default_for(kind),
        points,
        metadata: PointMetadata {
            labels: None,
            t: Some(ts),
            height: Some(hs),
        },
        normalization: None,
    })
}

pub fn gen_s_curve(n: usize, noise: f64, seed: u64) -> Result<PointDataset> {
    gen_surface(
        n,
        noise,
        seed,
        PointKind::SCurve,
        |rng| {
            let t = 3.0 * PI * (rng::uniform(rng) - 0.5);
            let u = 2.0 * rng::uniform(rng);
            (t, u)
        },
        s_curve_point,
    )
}

pub fn gen_swiss_roll(n: usize, noise: f64, seed: u64) -> Result<PointDataset> {
    gen_surface(
        n,
        noise,
        seed,
        PointKind::SwissRoll,
        |rng| {
            let t = 1.5 * PI * (1.0 + 2.0 * rng::uniform(rng));
            let h = 21.0 * rng::uniform(rng);
            (t, h)
        },
        swiss_roll_point,
    )
}

/// Maps every axis affinely into `[−0.95, 0.95]` and records the transform.
/// The returned dataset carries the transform in `normalization`.
pub fn normalize_points(ds: &PointDataset) -> Result<(PointDataset, AffineTransform)> {
    if ds.n == 0 || ds.points.is_empty() {
        return Err(invalid!("cannot normalise an empty dataset"));
    }
    let d = ds.d;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in ds.points.chunks_exact(d) {
        for (a, &x) in row.iter().enumerate() {
            lo[a] = lo[a].min(x);
            hi[a] = hi[a].max(x);
        }
    }
    let degenerate = lo.iter().zip(&hi).map(|(l, h)| !(h > l)).collect();
    let transform = AffineTransform {
        lo,
        hi,
        bound: NORMALIZED_BOUND,
        degenerate,
    };
    let mut out = ds.clone();
    out.points = transform.apply_all(&ds.points);
    out.normalization = Some(transform.clone());
    Ok((out, transform))
}

impl core::fmt::Display for PointKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for PointKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        PointKind::parse(s).ok_or_else(|| crate::Error::InvalidArgument(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm2(p: &[f64]) -> f64 {
        libm::sqrt(p.iter().map(|x| x * x).sum())
    }

    #[test]
    fn zero_std_blob_is_point_mass() {
        let spec = BlobSpec::uniform_std(vec![[0.0, 0.0]], 0.0);
        let ds = gen_blobs(3, &spec, 1).unwrap();
        assert_eq!(ds.points, vec![0.0; 6]);
    }

    #[test]
    fn blob_argument_errors() {
        assert!(gen_blobs(0, &BlobSpec::default(), 1).is_err());
        let neg = BlobSpec::uniform_std(vec![[0.0, 0.0]], -1.0);
        assert!(gen_blobs(5, &neg, 1).is_err());
        let dup = BlobSpec::uniform_std(vec![[1.0, 0.0], [1.0, 0.0]], 1.0);
        assert!(gen_blobs(5, &dup, 1).is_err());
        let empty = BlobSpec::uniform_std(vec![], 1.0);
        assert!(gen_blobs(5, &empty, 1).is_err());
    }

    #[test]
    fn blob_cluster_counts_within_binomial_bound() {
        let ds = gen_blobs(5000, &BlobSpec::default(), 7).unwrap();
        assert_eq!((ds.n, ds.d, ds.points.len()), (5000, 2, 10_000));
        let sigma = libm::sqrt(5000.0 * (1.0 / 3.0) * (2.0 / 3.0));
        let labels = ds.metadata.labels.as_ref().unwrap();
        for k in 0..3 {
            let c = labels.iter().filter(|&&l| l == k).count() as f64;
            assert!((c - 5000.0 / 3.0).abs() <= 3.0 * sigma, "cluster {k}: {c}");
        }
    }

    #[test]
    fn circles_noiseless_radii() {
        let ds = gen_circles(4, 0.5, 0.0, 11).unwrap();
        let radii: Vec<f64> = (0..4).map(|i| norm2(ds.row(i))).collect();
        assert!((radii[0] - 1.0).abs() < 1e-12 && (radii[1] - 1.0).abs() < 1e-12);
        assert!((radii[2] - 0.5).abs() < 1e-12 && (radii[3] - 0.5).abs() < 1e-12);
        assert!(gen_circles(4, 1.0, 0.0, 1).is_err());
        assert!(gen_circles(4, 0.0, 0.0, 1).is_err());
        assert!(gen_circles(4, 0.5, -0.1, 1).is_err());
    }

    #[test]
    fn circles_noisy_ring_fraction_matches_monte_carlo() {
        let (noise, factor) = (0.05, 0.5);
        let ds = gen_circles(5000, factor, noise, 3).unwrap();
        let labels = ds.metadata.labels.as_ref().unwrap();
        let within = (0..ds.n)
            .filter(|&i| {
                let r = if labels[i] == 0 { 1.0 } else { factor };
                (norm2(ds.row(i)) - r).abs() <= 3.0 * noise
            })
            .count() as f64
            / ds.n as f64;

        // Monte Carlo oracle: perturb exact ring points with isotropic noise
        // from an unrelated stream and measure the same radial criterion.
        let mut rng = rng::stream(999, Domain::Eval, 0);
        let trials = 400_000;
        let mut hit = 0usize;
        for i in 0..trials {
            let r = if i % 2 == 0 { 1.0 } else { factor };
            let x = r + noise * rng::normal(&mut rng);
            let y = noise * rng::normal(&mut rng);
            if (libm::sqrt(x * x + y * y) - r).abs() <= 3.0 * noise {
                hit += 1;
            }
        }
        let p = hit as f64 / trials as f64;
        assert!(p >= 0.99, "oracle probability {p}");
        let sigma = libm::sqrt(p * (1.0 - p) / ds.n as f64);
        assert!(within >= 0.99, "{within}");
        assert!((within - p).abs() <= 4.0 * sigma + 1e-3, "{within} vs {p}");
    }

    #[test]
    fn s_curve_closed_form_examples() {
        assert_eq!(s_curve_point(0.0, 0.0), [0.0, 0.0, 0.0]);
        let p = s_curve_point(PI / 2.0, 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 1.0 && (p[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn swiss_roll_closed_form_example() {
        let p = swiss_roll_point(1.5 * PI, 0.0);
        assert!(p[0].abs() < 1e-12 && p[1] == 0.0 && (p[2] + 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn noiseless_points_reproduce_from_metadata() {
        let sets = [
            gen_blobs(500, &BlobSpec::uniform_std(BlobSpec::default().centers, 0.0), 2).unwrap(),
            gen_circles(500, 0.5, 0.0, 2).unwrap(),
            gen_s_curve(500, 0.0, 2).unwrap(),
            gen_swiss_roll(500, 0.0, 2).unwrap(),
        ];
        for ds in &sets {
            for i in 0..ds.n {
                let q = ds.noiseless_point(i).unwrap();
                for (a, b) in ds.row(i).iter().zip(&q) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{:?} {i}", ds.kind);
                }
            }
        }
    }

    #[test]
    fn swiss_roll_radius_equals_parameter() {
        let ds = gen_swiss_roll(2000, 0.0, 5).unwrap();
        let t = ds.metadata.t.as_ref().unwrap();
        for i in 0..ds.n {
            let p = ds.row(i);
            let r2 = p[0] * p[0] + p[2] * p[2];
            assert!((r2 - t[i] * t[i]).abs() / (t[i] * t[i]) < 1e-9);
        }
    }

    #[test]
    fn swiss_roll_noise_distance_bound() {
        // Oracle: dense parameter grid of the noiseless roll, brute-force nearest distance.
        let ds = gen_swiss_roll(5000, 0.5, 8).unwrap();
        let (nt, nh) = (600, 60);
        let mut reference = Vec::with_capacity(nt * nh);
        for i in 0..nt {
            let t = SWISS_ROLL_T_RANGE.0
                + (SWISS_ROLL_T_RANGE.1 - SWISS_ROLL_T_RANGE.0) * i as f64 / (nt - 1) as f64;
            for j in 0..nh {
                let h = SWISS_ROLL_H_RANGE.1 * j as f64 / (nh - 1) as f64;
                reference.push(swiss_roll_point(t, h));
            }
        }
        let mean = (0..ds.n)
            .step_by(5)
            .map(|i| {
                let p = ds.row(i);
                reference
                    .iter()
                    .map(|q| {
                        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .sum::<f64>()
            / 1000.0;
        assert!(mean <= 3.0 * 0.5 * libm::sqrt(3.0), "mean distance {mean}");
    }

    #[test]
    fn same_seed_same_bits() {
        for kind in [PointKind::Blobs, PointKind::Circles, PointKind::SCurve, PointKind::SwissRoll] {
            let p = PointParams::default_for(kind);
            let a = generate(&p, 300, 0.05, 42).unwrap();
            let b = generate(&p, 300, 0.05, 42).unwrap();
            let c = generate(&p, 300, 0.05, 43).unwrap();
            assert!(a.points.iter().zip(&b.points).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_ne!(a.points, c.points);
            assert!(a.points.iter().all(|x| x.is_finite()));
            assert_eq!(a.d, kind.dim());
        }
    }

    #[test]
    fn noise_levels_share_manifold_points() {
        let a = gen_s_curve(50, NoiseLevel::Minimal.std(), 4).unwrap();
        let b = gen_s_curve(50, NoiseLevel::Extra.std(), 4).unwrap();
        assert_eq!(a.metadata, b.metadata);
        assert_ne!(a.points, b.points);
    }

    #[test]
    fn normalize_examples() {
        let mut ds = gen_circles(2, 0.5, 0.0, 1).unwrap();
        ds.points = vec![-1.0, -1.0, 1.0, 1.0];
        let (out, tr) = normalize_points(&ds).unwrap();
        assert_eq!(out.points, vec![-0.95, -0.95, 0.95, 0.95]);
        assert!(tr.degenerate.iter().all(|d| !d));

        ds.points = vec![3.0, -2.0, 3.0, -2.0];
        let (out, tr) = normalize_points(&ds).unwrap();
        assert_eq!(out.points, vec![0.0; 4]);
        assert_eq!(tr.degenerate, vec![true, true]);
        assert_eq!(tr.invert_all(&out.points), ds.points);

        ds.points.clear();
        ds.n = 0;
        assert!(normalize_points(&ds).is_err());
    }

    #[test]
    fn normalize_round_trip() {
        let ds = gen_swiss_roll(1000, 0.15, 9).unwrap();
        let (out, tr) = normalize_points(&ds).unwrap();
        assert!(out.points.iter().all(|x| x.abs() <= NORMALIZED_BOUND + 1e-12));
        let back = tr.invert_all(&out.points);
        for (a, b) in back.iter().zip(&ds.points) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
