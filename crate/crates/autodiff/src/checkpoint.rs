//! Checkpoint persistence: a JSON manifest listing `{name, shape, byte_offset}`
//! next to a single little-endian binary blob of f64 values.
//!
//! Optimizer moments are stored as extra tensors (`<name>.adam_m/.adam_v`) so
//! training can resume exactly. The loader validates that the blob length
//! matches the manifest.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ParamEntry, ParamStore};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub blob: String,
    pub total_bytes: u64,
    pub step: u64,
    pub tensors: Vec<TensorRecord>,
    /// Architecture / run configuration, stored verbatim so sampling never
    /// needs the original config file.
    pub config: serde_json::Value,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Derive the `(manifest.json, blob.bin)` pair from either path.
pub fn checkpoint_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.with_extension("");
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn save_checkpoint(
    store: &ParamStore,
    config: serde_json::Value,
    metadata: serde_json::Value,
    path: &Path,
) -> Result<()> {
    let (manifest_path, blob_path) = checkpoint_paths(path);
    let mut records = Vec::new();
    let mut blob: Vec<u8> = Vec::new();

    let mut push = |name: String, t: &Tensor, trainable: bool, blob: &mut Vec<u8>| {
        let byte_offset = blob.len() as u64;
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        records.push(TensorRecord { name, shape: t.shape().to_vec(), byte_offset, trainable });
    };

    for (name, e) in store.entries() {
        push(name.clone(), &e.value, e.trainable, &mut blob);
        if e.trainable {
            push(format!("{name}.adam_m"), &e.m, false, &mut blob);
            push(format!("{name}.adam_v"), &e.v, false, &mut blob);
        }
    }

    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        blob: blob_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint.bin".into()),
        total_bytes: blob.len() as u64,
        step: store.step(),
        tensors: records,
        config,
        metadata,
    };

    std::fs::File::create(&blob_path)?.write_all(&blob)?;
    let json = serde_json::to_vec_pretty(&manifest)?;
    std::fs::File::create(&manifest_path)?.write_all(&json)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<CheckpointManifest> {
    let (manifest_path, _) = checkpoint_paths(path);
    let mut buf = Vec::new();
    std::fs::File::open(&manifest_path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", manifest_path.display())))?
        .read_to_end(&mut buf)?;
    let manifest: CheckpointManifest = serde_json::from_slice(&buf)?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format_version {}",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, CheckpointManifest)> {
    let manifest = load_manifest(path)?;
    let (manifest_path, _) = checkpoint_paths(path);
    let blob_path = manifest_path.with_file_name(&manifest.blob);
    let mut blob = Vec::new();
    std::fs::File::open(&blob_path)
        .map_err(|e| Error::Checkpoint(format!("cannot open blob {}: {e}", blob_path.display())))?
        .read_to_end(&mut blob)?;
    if blob.len() as u64 != manifest.total_bytes {
        return Err(Error::Checkpoint(format!(
            "blob length {} does not match manifest total_bytes {}",
            blob.len(),
            manifest.total_bytes
        )));
    }

    let mut tensors: BTreeMap<String, (Tensor, bool)> = BTreeMap::new();
    for rec in &manifest.tensors {
        let numel: usize = rec.shape.iter().product();
        let start = rec.byte_offset as usize;
        let end = start + numel * 8;
        if end > blob.len() {
            return Err(Error::Checkpoint(format!("tensor `{}` overruns blob ({} > {})", rec.name, end, blob.len())));
        }
        let mut data = Vec::with_capacity(numel);
        for chunk in blob[start..end].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        tensors.insert(rec.name.clone(), (Tensor::new(rec.shape.clone(), data)?, rec.trainable));
    }

    let mut store = ParamStore::new();
    for rec in &manifest.tensors {
        if rec.name.ends_with(".adam_m") || rec.name.ends_with(".adam_v") {
            continue;
        }
        let (value, trainable) = tensors.get(&rec.name).unwrap().clone();
        if trainable {
            store.insert(&rec.name, value);
        } else {
            store.insert_buffer(&rec.name, value);
        }
        if let Some(e) = store.entry_mut(&rec.name) {
            let m = tensors.get(&format!("{}.adam_m", rec.name)).map(|(t, _)| t.clone());
            let v = tensors.get(&format!("{}.adam_v", rec.name)).map(|(t, _)| t.clone());
            if let (Some(m), Some(v)) = (m, v) {
                if m.shape() != e.value.shape() || v.shape() != e.value.shape() {
                    return Err(Error::Checkpoint(format!("moment shape mismatch for `{}`", rec.name)));
                }
                *e = ParamEntry { value: e.value.clone(), m, v, trainable: e.trainable };
            }
        }
    }
    store.set_step(manifest.step);
    Ok((store, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip_preserves_values_and_moments() {
        let dir = std::env::temp_dir().join(format!("ckpt_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");

        let mut store = ParamStore::new();
        store.insert("layer.w", Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        store.insert_buffer("layer.freqs", Tensor::new(vec![2], vec![0.5, -0.5]).unwrap());
        let mut grads = BTreeMap::new();
        grads.insert("layer.w".to_string(), Tensor::ones(&[2, 3]));
        store.adamw_step(&grads, crate::store::AdamW::new(1e-2)).unwrap();

        save_checkpoint(&store, serde_json::json!({"kind": "test"}), serde_json::Value::Null, &path).unwrap();
        let (loaded, manifest) = load_checkpoint(&path).unwrap();

        assert_eq!(manifest.step, 1);
        assert_eq!(loaded.get("layer.w").unwrap().data(), store.get("layer.w").unwrap().data());
        assert_eq!(loaded.get("layer.freqs").unwrap().data(), &[0.5, -0.5]);
        let e_orig = store.entries().find(|(k, _)| *k == "layer.w").unwrap().1.clone();
        let e_load = loaded.entries().find(|(k, _)| *k == "layer.w").unwrap().1.clone();
        assert_eq!(e_orig.m.data(), e_load.m.data());
        assert_eq!(e_orig.v.data(), e_load.v.data());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupt_blob_length_is_detected() {
        let dir = std::env::temp_dir().join(format!("ckpt_corrupt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        let mut store = ParamStore::new();
        store.insert("w", Tensor::ones(&[4]));
        save_checkpoint(&store, serde_json::Value::Null, serde_json::Value::Null, &path).unwrap();
        // Truncate the blob.
        let blob_path = dir.join("model.bin");
        let data = std::fs::read(&blob_path).unwrap();
        std::fs::write(&blob_path, &data[..data.len() - 8]).unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
