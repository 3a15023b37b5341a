//! Datasets: raw inputs, their parsed frames and lazily computed vectors.

use std::sync::OnceLock;

use dgsnap_core::features::{frame_vectors, CombinedVector};
use dgsnap_core::ingest::{load_dataset, parse_events, DatasetConfig, EventRecord};
use dgsnap_core::{Execution, Frames, NodeUniverse, Result};
use sha2::{Digest, Sha256};

use crate::views::{DatasetDescriptor, FileDigests};

/// Raw uploaded inputs. Together they determine the dataset id.
#[derive(Debug, Clone, Default)]
pub struct DatasetFiles {
    pub tracking: Vec<u8>,
    pub links: Option<Vec<u8>>,
    pub events: Option<Vec<u8>>,
    pub config: DatasetConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl DatasetFiles {
    pub fn digests(&self) -> FileDigests {
        FileDigests {
            tracking: sha256_hex(&self.tracking),
            links: self.links.as_deref().map(sha256_hex),
            events: self.events.as_deref().map(sha256_hex),
        }
    }

    /// First 16 hex digits of a digest over the file digests and the config.
    pub fn id(&self) -> String {
        let key = serde_json::json!({ "files": self.digests(), "config": self.config });
        sha256_hex(key.to_string().as_bytes())[..16].to_string()
    }
}

pub fn is_dataset_id(s: &str) -> bool {
    s.len() == 16
        && s.bytes()
            .all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

#[derive(Debug)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub universe: NodeUniverse,
    pub frames: Frames,
    pub events: Vec<EventRecord>,
    vectors: OnceLock<Vec<CombinedVector>>,
}

impl Dataset {
    pub fn build(files: &DatasetFiles) -> Result<Dataset> {
        let data = load_dataset(
            files.tracking.as_slice(),
            files.links.as_deref(),
            &files.config,
        )?;
        let events = match &files.events {
            Some(e) => parse_events(e.as_slice())?,
            None => Vec::new(),
        };
        let descriptor =
            DatasetDescriptor::new(files.id(), &data, files.digests(), files.config.clone());
        Ok(Dataset {
            descriptor,
            universe: data.universe,
            frames: data.frames.into(),
            events,
            vectors: OnceLock::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.descriptor.id
    }

    /// Combined vector of every frame, computed on first use.
    pub fn vectors(&self) -> Result<&[CombinedVector]> {
        if let Some(v) = self.vectors.get() {
            return Ok(v);
        }
        let v = frame_vectors(&self.frames, &self.universe, Execution::default())?;
        Ok(self.vectors.get_or_init(|| v))
    }
}
