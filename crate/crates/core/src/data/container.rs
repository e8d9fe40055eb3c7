//! Versioned binary dataset files and report bundles.
//!
//! Dataset layout (integers little-endian):
//!
//! ```text
//! "PLABDATA" | version u32 | header_len u64 | header JSON
//! | n·dim f64 inputs (row-major) | n u32 labels | SHA-256 of all prior bytes
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetContainer, LabeledDataset, Provenance};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PLABDATA";
pub const CONTAINER_VERSION: u32 = 1;
pub const BUNDLE_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    len: usize,
    dim: usize,
    num_classes: usize,
    provenance: Provenance,
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        what: "dataset container",
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub fn write_container(c: &DatasetContainer) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        name: c.name.clone(),
        len: c.data.len(),
        dim: c.data.dim(),
        num_classes: c.data.num_classes(),
        provenance: c.provenance.clone(),
    })?;
    let mut out = Vec::with_capacity(52 + header.len() + c.data.len() * (8 * c.data.dim() + 4));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in c.data.inputs().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &y in c.data.labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn read_container(bytes: &[u8]) -> Result<DatasetContainer> {
    if bytes.len() < 20 + 32 {
        return Err(format_err(bytes.len(), "file too short"));
    }
    if &bytes[..8] != MAGIC {
        return Err(format_err(0, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CONTAINER_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CONTAINER_VERSION,
        });
    }
    let body_end = bytes.len() - 32;
    if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
        return Err(Error::Checksum("dataset container".into()));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= body_end)
        .ok_or_else(|| format_err(12, "header length exceeds file"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
    let n_inputs = header
        .len
        .checked_mul(header.dim)
        .ok_or_else(|| format_err(20, "shape overflows"))?;
    let expected = n_inputs * 8 + header.len * 4;
    if body_end - header_end != expected {
        return Err(format_err(
            header_end,
            format!("payload is {} bytes, header implies {expected}", body_end - header_end),
        ));
    }
    let inputs: Vec<f64> = bytes[header_end..header_end + 8 * n_inputs]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let labels: Vec<usize> = bytes[header_end + 8 * n_inputs..body_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let inputs = Array2::from_shape_vec((header.len, header.dim), inputs).expect("size checked");
    Ok(DatasetContainer {
        name: header.name,
        data: LabeledDataset::new(inputs, labels, header.num_classes)?,
        provenance: header.provenance,
    })
}

pub fn save_container(c: &DatasetContainer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_container(c)?).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: impl AsRef<Path>) -> Result<DatasetContainer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_container(&bytes)
}

/// `manifest.json` of a report bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Relative file name → hex SHA-256.
    pub files: BTreeMap<String, String>,
    pub wall_time_secs: f64,
}

/// Writes the files of a report bundle into one directory and records
/// their hashes in a manifest on [`BundleWriter::finish`].
pub struct BundleWriter {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    files: BTreeMap<String, String>,
    started: Instant,
}

impl BundleWriter {
    pub fn create(
        dir: impl Into<PathBuf>,
        command: &str,
        config: serde_json::Value,
    ) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            command: command.into(),
            config,
            files: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Replaces the configuration recorded in the manifest.
    pub fn set_config(&mut self, config: serde_json::Value) {
        self.config = config;
    }

    pub fn add_file(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        if name == MANIFEST || name.contains(['/', '\\']) {
            return Err(Error::config(format!("invalid bundle file name {name:?}")));
        }
        let path = self.dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&path, e))?;
        self.files
            .insert(name.into(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }

    pub fn finish(self) -> Result<BundleManifest> {
        let manifest = BundleManifest {
            version: BUNDLE_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config: self.config,
            files: self.files,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(MANIFEST);
        let json = serde_json::to_vec_pretty(&manifest)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// Reads a bundle manifest and verifies every listed file's hash.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<BundleManifest> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: BundleManifest = serde_json::from_slice(&bytes)?;
    if manifest.version != BUNDLE_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            supported: BUNDLE_VERSION,
        });
    }
    for (name, digest) in &manifest.files {
        let p = dir.join(name);
        let content = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if hex::encode(Sha256::digest(&content)) != *digest {
            return Err(Error::Checksum(name.clone()));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> DatasetContainer {
        DatasetContainer {
            name: "tiny".into(),
            data: LabeledDataset::new(
                array![[0.1, -0.0, 1e-300], [f64::MAX, 0.3, -7.25]],
                vec![2, 0],
                3,
            )
            .unwrap(),
            provenance: Provenance::Derived {
                parent: "none".into(),
                operation: "test".into(),
                params: serde_json::json!({"a": 1}),
            },
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let c = sample();
        let back = read_container(&write_container(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.data.input(0)[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn empty_dataset_round_trips() {
        let c = DatasetContainer {
            name: "empty".into(),
            data: LabeledDataset::new(Array2::zeros((0, 4)), vec![], 10).unwrap(),
            provenance: Provenance::Files {
                sha256: BTreeMap::new(),
            },
        };
        let back = read_container(&write_container(&c).unwrap()).unwrap();
        assert_eq!(back.data.len(), 0);
        assert_eq!(back.data.dim(), 4);
        assert_eq!(back, c);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = write_container(&sample()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(read_container(&bytes), Err(Error::Checksum(_))));
    }

    #[test]
    fn unknown_version_refused() {
        let mut bytes = write_container(&sample()).unwrap();
        bytes[8] = 9;
        assert!(matches!(
            read_container(&bytes),
            Err(Error::Version { found: 9, .. })
        ));
        assert!(matches!(read_container(b"NOTPLAB!"), Err(Error::Format { .. })));
    }

    #[test]
    fn bundle_round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BundleWriter::create(dir.path(), "test", serde_json::json!({"seed": 1})).unwrap();
        w.add_file("a.csv", b"x,y\n1,2\n").unwrap();
        assert!(w.add_file("manifest.json", b"{}").is_err());
        let m = w.finish().unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), m);
        std::fs::write(dir.path().join("a.csv"), b"x,y\n1,3\n").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Checksum(_))));
    }
}
