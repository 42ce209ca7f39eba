//! Dataset download: fetches and gunzips the four IDX files per dataset.
//!
//! Idempotent: files that already exist and parse are left alone; corrupt
//! or partial files are re-downloaded. Once the files are present the
//! engine runs fully offline.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::idx::{parse_idx_images, parse_idx_labels};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
}

impl DatasetKind {
    pub fn dir_name(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion_mnist",
        }
    }

    pub fn default_mirror(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "https://ossci-datasets.s3.amazonaws.com/mnist",
            DatasetKind::FashionMnist => {
                "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com"
            }
        }
    }
}

pub const FILE_NAMES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Local paths of the four IDX files for a dataset under `data_dir`.
pub fn dataset_files(data_dir: &Path, kind: DatasetKind) -> [PathBuf; 4] {
    let base = data_dir.join(kind.dir_name());
    FILE_NAMES.map(|n| base.join(n))
}

fn file_is_valid(path: &Path) -> bool {
    let Ok(bytes) = std::fs::read(path) else { return false };
    if path.to_string_lossy().contains("images") {
        parse_idx_images(&bytes, path).is_ok()
    } else {
        parse_idx_labels(&bytes, path).is_ok()
    }
}

fn download_gz(url: &str) -> Result<Vec<u8>> {
    let resp = ureq::get(url)
        .call()
        .map_err(|e| Error::Fetch(format!("GET {url}: {e}")))?;
    let mut gz = Vec::new();
    resp.into_reader()
        .read_to_end(&mut gz)
        .map_err(|e| Error::Fetch(format!("reading {url}: {e}")))?;
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(&gz[..])
        .read_to_end(&mut out)
        .map_err(|e| Error::Fetch(format!("gunzip {url}: {e}")))?;
    Ok(out)
}

/// Ensures all four IDX files of `kind` exist and parse under `data_dir`,
/// downloading `<mirror>/<name>.gz` for any missing or invalid file.
pub fn fetch_datasets(data_dir: &Path, kind: DatasetKind, mirror_url: Option<&str>) -> Result<()> {
    let base = data_dir.join(kind.dir_name());
    std::fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
    let mirror = mirror_url.unwrap_or_else(|| kind.default_mirror());
    for name in FILE_NAMES {
        let path = base.join(name);
        if file_is_valid(&path) {
            continue;
        }
        let url = format!("{}/{}.gz", mirror.trim_end_matches('/'), name);
        let bytes = download_gz(&url)?;
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        if !file_is_valid(&path) {
            return Err(Error::Fetch(format!(
                "{} downloaded from {url} but does not parse as IDX",
                path.display()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn existing_valid_files_short_circuit() {
        // a dataset dir with valid files must be a no-op even with a dead mirror
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("mnist");
        std::fs::create_dir_all(&base).unwrap();
        for name in FILE_NAMES {
            let bytes: Vec<u8> = if name.contains("images") {
                let mut v = vec![];
                v.extend(0x0803u32.to_be_bytes());
                v.extend(1u32.to_be_bytes());
                v.extend(2u32.to_be_bytes());
                v.extend(2u32.to_be_bytes());
                v.extend([0u8; 4]);
                v
            } else {
                let mut v = vec![];
                v.extend(0x0801u32.to_be_bytes());
                v.extend(1u32.to_be_bytes());
                v.push(3);
                v
            };
            std::fs::write(base.join(name), bytes).unwrap();
        }
        fetch_datasets(dir.path(), DatasetKind::Mnist, Some("http://127.0.0.1:9")).unwrap();
    }

    #[test]
    fn corrupt_file_triggers_refetch_attempt() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("mnist");
        std::fs::create_dir_all(&base).unwrap();
        std::fs::write(base.join(FILE_NAMES[0]), b"garbage").unwrap();
        // dead mirror: the refetch must fail loudly instead of accepting garbage
        let err = fetch_datasets(dir.path(), DatasetKind::Mnist, Some("http://127.0.0.1:9"))
            .unwrap_err();
        assert!(matches!(err, Error::Fetch(_)));
    }

    #[test]
    fn missing_directory_is_created() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b");
        let _ = fetch_datasets(&nested, DatasetKind::Mnist, Some("http://127.0.0.1:9"));
        assert!(nested.join("mnist").is_dir());
    }
}
