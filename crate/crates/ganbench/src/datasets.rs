//! On-disk dataset formats: a little-endian `f32` row-major blob next to a
//! JSON sidecar describing it.

use std::fs;
use std::path::{Path, PathBuf};

use ganbench_core::pointgen::{AffineTransform, PointDataset, PointKind, PointMetadata, PointParams};
use ganbench_core::scenegen::{ImageDataset, ImageDatasetName, SceneAnnotation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const POINTS_FORMAT: &str = "ganbench-points";
pub const IMAGES_FORMAT: &str = "ganbench-images";
pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn f32_le_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub fn read_f32_le(path: &Path) -> CliResult<Vec<f32>> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    if bytes.len() % 4 != 0 {
        return Err(CliError::format(path, "length is not a multiple of 4"));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

fn blob_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("f32")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSidecar {
    pub format: String,
    pub version: u32,
    pub kind: PointKind,
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub seed: u64,
    pub params: PointParams,
    pub normalization: Option<AffineTransform>,
    pub metadata: PointMetadata,
    pub data_file: String,
    pub data_sha256: String,
}

/// Writes `<stem>.f32` and `<stem>.json`; returns the blob's SHA-256.
pub fn write_points(sidecar: &Path, ds: &PointDataset) -> CliResult<String> {
    let blob = blob_path(sidecar);
    let bytes = f32_le_bytes(ds.points.iter().map(|&v| v as f32));
    let hash = sha256_hex(&bytes);
    fs::write(&blob, &bytes).map_err(CliError::io(&blob))?;
    write_json(
        sidecar,
        &PointSidecar {
            format: POINTS_FORMAT.into(),
            version: FORMAT_VERSION,
            kind: ds.kind,
            n: ds.n,
            d: ds.d,
            noise: ds.noise,
            seed: ds.seed,
            params: ds.params.clone(),
            normalization: ds.normalization.clone(),
            metadata: ds.metadata.clone(),
            data_file: blob.file_name().unwrap().to_string_lossy().into(),
            data_sha256: hash.clone(),
        },
    )?;
    Ok(hash)
}

pub fn read_points(sidecar: &Path) -> CliResult<PointDataset> {
    let meta: PointSidecar = read_json(sidecar)?;
    if meta.format != POINTS_FORMAT || meta.version != FORMAT_VERSION {
        return Err(CliError::format(sidecar, format!("not a {POINTS_FORMAT} v{FORMAT_VERSION} sidecar")));
    }
    let blob = sidecar.with_file_name(&meta.data_file);
    let values = read_f32_le(&blob)?;
    if values.len() != meta.n * meta.d {
        return Err(CliError::format(&blob, format!("expected {}×{} values, found {}", meta.n, meta.d, values.len())));
    }
    Ok(PointDataset {
        kind: meta.kind,
        n: meta.n,
        d: meta.d,
        noise: meta.noise,
        seed: meta.seed,
        params: meta.params,
        points: values.into_iter().map(f64::from).collect(),
        metadata: meta.metadata,
        normalization: meta.normalization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub format: String,
    pub version: u32,
    pub name: ImageDatasetName,
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
    pub data_file: String,
    pub data_sha256: String,
    pub rejections: Vec<u64>,
    pub scenes: Vec<SceneAnnotation>,
}

/// Writes `<stem>.f32` (`n×H×W×C`) and `<stem>.json`; returns the blob hash.
pub fn write_images(sidecar: &Path, ds: &ImageDataset) -> CliResult<String> {
    let blob = blob_path(sidecar);
    let bytes = f32_le_bytes(ds.images.iter().copied());
    let hash = sha256_hex(&bytes);
    fs::write(&blob, &bytes).map_err(CliError::io(&blob))?;
    write_json(
        sidecar,
        &ImageSidecar {
            format: IMAGES_FORMAT.into(),
            version: FORMAT_VERSION,
            name: ds.name,
            n: ds.n,
            height: ds.height,
            width: ds.width,
            channels: ds.channels,
            seed: ds.seed,
            data_file: blob.file_name().unwrap().to_string_lossy().into(),
            data_sha256: hash.clone(),
            rejections: ds.rejections.clone(),
            scenes: ds.annotations.clone(),
        },
    )?;
    Ok(hash)
}

pub fn read_images(sidecar: &Path) -> CliResult<ImageDataset> {
    let meta: ImageSidecar = read_json(sidecar)?;
    if meta.format != IMAGES_FORMAT || meta.version != FORMAT_VERSION {
        return Err(CliError::format(sidecar, format!("not a {IMAGES_FORMAT} v{FORMAT_VERSION} sidecar")));
    }
    let blob = sidecar.with_file_name(&meta.data_file);
    let images = read_f32_le(&blob)?;
    if images.len() != meta.n * meta.height * meta.width * meta.channels {
        return Err(CliError::format(&blob, "image blob size does not match the sidecar"));
    }
    Ok(ImageDataset {
        name: meta.name,
        n: meta.n,
        height: meta.height,
        width: meta.width,
        channels: meta.channels,
        images,
        annotations: meta.scenes,
        rejections: meta.rejections,
        seed: meta.seed,
    })
}

/// Either kind of dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Points(PointDataset),
    Images(ImageDataset),
}

impl Dataset {
    /// SHA-256 of the data blob `write_points`/`write_images` would produce.
    pub fn sha256(&self) -> String {
        match self {
            Dataset::Points(ds) => sha256_hex(&f32_le_bytes(ds.points.iter().map(|&v| v as f32))),
            Dataset::Images(ds) => sha256_hex(&f32_le_bytes(ds.images.iter().copied())),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Points(ds) => ds.n,
            Dataset::Images(ds) => ds.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the dataset next to `sidecar`; returns the blob hash.
    pub fn write(&self, sidecar: &Path) -> CliResult<String> {
        match self {
            Dataset::Points(ds) => write_points(sidecar, ds),
            Dataset::Images(ds) => write_images(sidecar, ds),
        }
    }
}

/// Reads a dataset from its sidecar, dispatching on the `format` field.
pub fn read_dataset(sidecar: &Path) -> CliResult<Dataset> {
    #[derive(Deserialize)]
    struct Probe {
        format: String,
    }
    let probe: Probe = read_json(sidecar)?;
    match probe.format.as_str() {
        POINTS_FORMAT => read_points(sidecar).map(Dataset::Points),
        IMAGES_FORMAT => read_images(sidecar).map(Dataset::Images),
        other => Err(CliError::format(sidecar, format!("unknown dataset format {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ganbench_core::pointgen::generate;
    use ganbench_core::scenegen::{gen_image_dataset, SceneConfig};

    #[test]
    fn points_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&PointParams::default_for(PointKind::SwissRoll), 50, 0.05, 3).unwrap();
        let path = dir.path().join("data.json");
        let hash = write_points(&path, &ds).unwrap();
        assert_eq!(hash, sha256_hex(&fs::read(dir.path().join("data.f32")).unwrap()));
        let back = read_points(&path).unwrap();
        assert_eq!(back.metadata, ds.metadata);
        for (a, b) in back.points.iter().zip(&ds.points) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(matches!(read_dataset(&path).unwrap(), Dataset::Points(_)));
    }

    #[test]
    fn images_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_image_dataset(ImageDatasetName::Ct2, 5, 1, &SceneConfig::default()).unwrap();
        let path = dir.path().join("imgs.json");
        write_images(&path, &ds).unwrap();
        assert_eq!(read_images(&path).unwrap(), ds);
    }

    #[test]
    fn missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_points(&dir.path().join("none.json")), Err(CliError::Missing(_))));
        let ds = generate(&PointParams::default_for(PointKind::Blobs), 5, 0.0, 3).unwrap();
        let path = dir.path().join("d.json");
        write_points(&path, &ds).unwrap();
        fs::write(dir.path().join("d.f32"), [0u8; 7]).unwrap();
        assert!(matches!(read_points(&path), Err(CliError::Format { .. })));
    }
}
