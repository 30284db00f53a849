//! Dataset persistence: a JSON manifest describing homogeneous samples plus a
//! little-endian f64 blob.
//!
//! `save` writes `<stem>.json` and `<stem>.bin`; `load` accepts either path.
//! Per-sample metadata (e.g. generating parameters) rides along in the
//! manifest's `extra` field.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{FaeError, Result};
use crate::sample::FunctionSample;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub grid_shape: Vec<usize>,
    pub domain: Vec<(f64, f64)>,
    pub channels: usize,
    pub count: usize,
    pub dtype: String,
    pub blob: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<FunctionSample>,
    pub extra: serde_json::Value,
}

impl Dataset {
    pub fn new(samples: Vec<FunctionSample>) -> Self {
        Dataset { samples, extra: serde_json::Value::Null }
    }

    pub fn with_extra(samples: Vec<FunctionSample>, extra: serde_json::Value) -> Self {
        Dataset { samples, extra }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn dataset_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.with_extension("");
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let (manifest_path, blob_path) = dataset_paths(path);
    if ds.samples.is_empty() {
        return Err(FaeError::Dataset("refusing to write an empty dataset".into()));
    }
    let first = &ds.samples[0];
    for s in &ds.samples {
        if s.grid_shape != first.grid_shape || s.channels != first.channels || s.domain != first.domain {
            return Err(FaeError::Dataset("dataset samples must share grid, domain and channels".into()));
        }
    }
    let mut blob: Vec<u8> = Vec::with_capacity(ds.samples.len() * first.values.numel() * 8);
    for s in &ds.samples {
        for v in s.values.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        grid_shape: first.grid_shape.clone(),
        domain: first.domain.clone(),
        channels: first.channels,
        count: ds.samples.len(),
        dtype: "f64le".into(),
        blob: blob_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data.bin".into()),
        extra: ds.extra.clone(),
    };
    std::fs::File::create(&blob_path)?.write_all(&blob)?;
    let json = serde_json::to_vec_pretty(&manifest)?;
    std::fs::File::create(&manifest_path)?.write_all(&json)?;
    Ok(())
}

/// Field-by-field manifest parse so corrupt manifests name the failing field.
fn parse_manifest(buf: &[u8]) -> Result<DatasetManifest> {
    let value: serde_json::Value = serde_json::from_slice(buf)
        .map_err(|e| FaeError::Dataset(format!("corrupt dataset manifest (not JSON): {e}")))?;
    let field = |name: &str| -> Result<serde_json::Value> {
        value
            .get(name)
            .cloned()
            .ok_or_else(|| FaeError::Dataset(format!("corrupt dataset manifest: missing field `{name}`")))
    };
    fn typed<T: serde::de::DeserializeOwned>(name: &str, v: serde_json::Value) -> Result<T> {
        serde_json::from_value(v)
            .map_err(|e| FaeError::Dataset(format!("corrupt dataset manifest: field `{name}`: {e}")))
    }
    Ok(DatasetManifest {
        format_version: typed("format_version", field("format_version")?)?,
        grid_shape: typed("grid_shape", field("grid_shape")?)?,
        domain: typed("domain", field("domain")?)?,
        channels: typed("channels", field("channels")?)?,
        count: typed("count", field("count")?)?,
        dtype: typed("dtype", field("dtype")?)?,
        blob: typed("blob", field("blob")?)?,
        extra: value.get("extra").cloned().unwrap_or(serde_json::Value::Null),
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (manifest_path, _) = dataset_paths(path);
    let mut buf = Vec::new();
    std::fs::File::open(&manifest_path)
        .map_err(|e| FaeError::Dataset(format!("cannot open {}: {e}", manifest_path.display())))?
        .read_to_end(&mut buf)?;
    let manifest = parse_manifest(&buf)?;
    if manifest.dtype != "f64le" {
        return Err(FaeError::Dataset(format!("unsupported dtype field `{}`", manifest.dtype)));
    }
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(FaeError::Dataset(format!(
            "unsupported format_version field {}",
            manifest.format_version
        )));
    }
    let blob_path = manifest_path.with_file_name(&manifest.blob);
    let mut blob = Vec::new();
    std::fs::File::open(&blob_path)
        .map_err(|e| FaeError::Dataset(format!("cannot open blob {}: {e}", blob_path.display())))?
        .read_to_end(&mut blob)?;
    let per_sample: usize = manifest.grid_shape.iter().product::<usize>() * manifest.channels;
    let expect = manifest.count * per_sample * 8;
    if blob.len() != expect {
        return Err(FaeError::Dataset(format!(
            "blob length {} does not match count field ({} samples x {per_sample} values)",
            blob.len(),
            manifest.count
        )));
    }
    let mut samples = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let start = i * per_sample * 8;
        let mut data = Vec::with_capacity(per_sample);
        for chunk in blob[start..start + per_sample * 8].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        samples.push(FunctionSample::new(
            manifest.grid_shape.clone(),
            manifest.domain.clone(),
            manifest.channels,
            Tensor::new(vec![per_sample], data).map_err(FaeError::Autodiff)?,
        )?);
    }
    Ok(Dataset { samples, extra: manifest.extra })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bytes_identical() {
        let dir = std::env::temp_dir().join(format!("fae_ds_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let samples: Vec<FunctionSample> = (0..3)
            .map(|k| {
                FunctionSample::new(
                    vec![4],
                    vec![(0.0, 1.0)],
                    1,
                    Tensor::new(vec![4], vec![k as f64, 1.5, -2.25, 0.125]).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let ds = Dataset::with_extra(samples, serde_json::json!({"seed": 7}));
        let p1 = dir.join("a.json");
        save_dataset(&ds, &p1).unwrap();
        let loaded = load_dataset(&p1).unwrap();
        let p2 = dir.join("b.json");
        save_dataset(&loaded, &p2).unwrap();
        // write -> read -> write produces identical blob bytes
        assert_eq!(std::fs::read(dir.join("a.bin")).unwrap(), std::fs::read(dir.join("b.bin")).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn manifest_field_errors_are_named() {
        let dir = std::env::temp_dir().join(format!("fae_ds_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.json");
        std::fs::write(&p, br#"{"format_version":1,"grid_shape":[4],"domain":[[0.0,1.0]],"channels":1,"count":"nope","dtype":"f64le","blob":"bad.bin"}"#).unwrap();
        let err = load_dataset(&p).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("count"), "error should name the field: {msg}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
