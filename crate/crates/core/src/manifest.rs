//! Dataset manifests: one JSON object per line, each naming an image file
//! (relative to the manifest's directory), its object annotations, and
//! whether the image carries an injected patch.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One annotated object: class id and `[x, y, w, h]` box in integer pixels,
/// origin top-left.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub class: u32,
    pub bbox: [u32; 4],
}

/// One dataset row. `poisoned` defaults to false so hand-written manifests
/// of unlabeled data parse without the flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    #[serde(default)]
    pub objects: Vec<ObjectAnnotation>,
    #[serde(default)]
    pub poisoned: bool,
}

/// A parsed manifest plus the directory its image paths are relative to.
#[derive(Debug, Clone)]
pub struct Manifest {
    root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_parts(root: PathBuf, entries: Vec<ManifestEntry>) -> Self {
        Self { root, entries }
    }

    /// Parses a `.jsonl` manifest. Blank lines are skipped; a malformed line
    /// is reported with its 1-based line number.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut entries = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry =
                serde_json::from_str(&line).map_err(|e| Error::ManifestLine {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    source: e,
                })?;
            entries.push(entry);
        }
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Self { root, entries })
    }

    /// Writes one compact JSON object per line, in entry order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut w = BufWriter::new(file);
        for entry in &self.entries {
            let line = serde_json::to_string(entry).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
            w.write_all(line.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .map_err(|e| Error::Io {
                    path: path.to_path_buf(),
                    source: e,
                })?;
        }
        w.flush().map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Directory image paths resolve against.
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute (well, root-joined) path of one entry's image file.
    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
