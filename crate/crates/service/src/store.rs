//! File-backed persistence under the data directory.
//!
//! ```text
//! datasets/{id}/tracking.csv, links.csv, events.csv, config.json, descriptor.json
//! datasets/{id}/projections/{key}.json
//! sessions/{id}.json
//! ```

use std::fs;
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};

use dgsnap_core::session::SessionLog;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetFiles;
use crate::views::DatasetDescriptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub schema_version: u32,
    pub session_id: String,
    pub dataset_id: String,
    pub log: SessionLog,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| io::Error::new(ErrorKind::InvalidInput, "no parent directory"))?;
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{}.tmp", uuid::Uuid::new_v4()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

fn read_optional(path: &Path) -> io::Result<Option<Vec<u8>>> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

fn invalid(e: serde_json::Error) -> io::Error {
    io::Error::new(ErrorKind::InvalidData, e)
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Store> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(id)
    }

    pub fn save_dataset(
        &self,
        files: &DatasetFiles,
        descriptor: &DatasetDescriptor,
    ) -> io::Result<()> {
        let dir = self.dataset_dir(&descriptor.id);
        write_atomic(&dir.join("tracking.csv"), &files.tracking)?;
        if let Some(l) = &files.links {
            write_atomic(&dir.join("links.csv"), l)?;
        }
        if let Some(e) = &files.events {
            write_atomic(&dir.join("events.csv"), e)?;
        }
        write_atomic(
            &dir.join("config.json"),
            &serde_json::to_vec_pretty(&files.config).map_err(invalid)?,
        )?;
        // Written last: its presence marks a complete dataset.
        write_atomic(
            &dir.join("descriptor.json"),
            &serde_json::to_vec_pretty(descriptor).map_err(invalid)?,
        )
    }

    pub fn load_dataset_files(&self, id: &str) -> io::Result<Option<DatasetFiles>> {
        let dir = self.dataset_dir(id);
        if !dir.join("descriptor.json").exists() {
            return Ok(None);
        }
        let config =
            serde_json::from_slice(&fs::read(dir.join("config.json"))?).map_err(invalid)?;
        Ok(Some(DatasetFiles {
            tracking: fs::read(dir.join("tracking.csv"))?,
            links: read_optional(&dir.join("links.csv"))?,
            events: read_optional(&dir.join("events.csv"))?,
            config,
        }))
    }

    pub fn cached_projection(&self, id: &str, key: &str) -> io::Result<Option<Vec<u8>>> {
        read_optional(
            &self
                .dataset_dir(id)
                .join("projections")
                .join(format!("{key}.json")),
        )
    }

    pub fn cache_projection(&self, id: &str, key: &str, body: &[u8]) -> io::Result<()> {
        write_atomic(
            &self
                .dataset_dir(id)
                .join("projections")
                .join(format!("{key}.json")),
            body,
        )
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn save_session(&self, s: &SessionFile) -> io::Result<()> {
        write_atomic(
            &self.session_path(&s.session_id),
            &serde_json::to_vec_pretty(s).map_err(invalid)?,
        )
    }

    pub fn load_session(&self, id: &str) -> io::Result<Option<SessionFile>> {
        read_optional(&self.session_path(id))?
            .map(|b| serde_json::from_slice(&b).map_err(invalid))
            .transpose()
    }
}
