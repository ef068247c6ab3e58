//! `manifest.json`: every file of a bundle or output directory, with its role
//! and SHA-256 checksum.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::raster::write_bytes;

pub const MANIFEST: &str = "manifest.json";
const VERSION: u32 = 1;

/// What a file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Camera,
    Scene,
    Config,
    /// Blurred input image.
    Blur,
    /// Sharp ground-truth image.
    Sharp,
    /// Restored image.
    Latent,
    /// Forward flow of the current frame, keyed by view.
    Flow,
    /// Left-view disparity, keyed by frame (`m` or `m1`).
    Disparity,
    State,
    Trace,
    Metrics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub path: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestFile {
    version: u32,
    files: Vec<Entry>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects files while writing them into `root`.
#[derive(Debug)]
pub struct ManifestWriter {
    root: PathBuf,
    files: Vec<Entry>,
}

impl ManifestWriter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    /// Writes `bytes` to `path` (relative to the root) and records it.
    pub fn add(&mut self, path: &str, role: Role, key: Option<&str>, bytes: &[u8]) -> Result<()> {
        if self.files.iter().any(|e| e.path == path) {
            return Err(Error::Data(format!("{path} written twice")));
        }
        write_bytes(&self.root.join(path), bytes)?;
        self.files.push(Entry { path: path.to_string(), role, key: key.map(str::to_string), sha256: digest(bytes) });
        Ok(())
    }

    /// Writes the manifest itself, entries sorted by path.
    pub fn finish(mut self) -> Result<()> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let m = ManifestFile { version: VERSION, files: self.files };
        let mut text = serde_json::to_string_pretty(&m).map_err(|e| Error::Data(e.to_string()))?;
        text.push('\n');
        write_bytes(&self.root.join(MANIFEST), text.as_bytes())
    }
}

/// A loaded manifest. Every listed file was read and its checksum verified.
#[derive(Debug, Clone)]
pub struct Manifest {
    root: PathBuf,
    files: Vec<(Entry, Vec<u8>)>,
}

impl Manifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let m: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if m.version != VERSION {
            return Err(Error::Data(format!("unsupported manifest version {}", m.version)));
        }
        let mut files = Vec::with_capacity(m.files.len());
        for e in m.files {
            if Path::new(&e.path).is_absolute() || e.path.split(['/', '\\']).any(|c| c == "..") {
                return Err(Error::Data(format!("manifest path {} escapes the bundle", e.path)));
            }
            let full = root.join(&e.path);
            let bytes = fs::read(&full).map_err(|err| Error::Data(format!("{}: {err}", full.display())))?;
            let sum = digest(&bytes);
            if !sum.eq_ignore_ascii_case(&e.sha256) {
                return Err(Error::Data(format!("checksum mismatch for {}: manifest {}, file {sum}", e.path, e.sha256)));
            }
            files.push((e, bytes));
        }
        Ok(Self { root: root.to_path_buf(), files })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.files.iter().map(|(e, _)| e)
    }

    /// Path and bytes of the file with `role` and `key`.
    pub fn find(&self, role: Role, key: Option<&str>) -> Option<(&Path, &[u8])> {
        self.files
            .iter()
            .find(|(e, _)| e.role == role && e.key.as_deref() == key)
            .map(|(e, b)| (Path::new(e.path.as_str()), b.as_slice()))
    }

    pub fn require(&self, role: Role, key: Option<&str>) -> Result<(&Path, &[u8])> {
        self.find(role, key).ok_or_else(|| {
            let what = match key {
                Some(k) => format!("{role:?} ({k})"),
                None => format!("{role:?}"),
            };
            Error::Data(format!("{} lists no {what} file", self.root.join(MANIFEST).display()))
        })
    }
}
