//! Dataset manifests: CSV with header `path,label,group`.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::ClassLabel;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub path: String,
    pub label: ClassLabel,
    /// Free-form provenance tag (generator, camera, ...).
    pub group: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

const HEADER: [&str; 3] = ["path", "label", "group"];

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Manifest("manifest has no entries".into()));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Manifest(format!("duplicate path {:?}", e.path)));
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    /// Parses CSV from any reader. `base_dir` anchors relative paths.
    pub fn parse<R: Read>(reader: R, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Manifest(format!("unreadable header: {e}")))?
            .clone();
        if headers.iter().ne(HEADER.iter().copied()) {
            return Err(Error::Manifest(format!(
                "missing header: expected `path,label,group`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Manifest(format!("row {}: {e}", i + 2)))?;
            let label = record[1].parse::<ClassLabel>()?;
            let path = record[0].to_string();
            if path.is_empty() {
                return Err(Error::Manifest(format!("row {}: empty path", i + 2)));
            }
            entries.push(ManifestEntry {
                path,
                label,
                group: record[2].to_string(),
            });
        }
        Self::new(entries, base_dir)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolved paths of all entries, in order.
    pub fn resolved_paths(&self) -> Vec<PathBuf> {
        self.entries.iter().map(|e| self.resolve(e)).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let err = |e: csv::Error| Error::Manifest(e.to_string());
        w.write_record(HEADER).map_err(err)?;
        for e in &self.entries {
            w.write_record([e.path.as_str(), e.label.as_str(), e.group.as_str()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::parse(std::io::BufReader::new(file), base)
}
