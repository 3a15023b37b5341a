//! Interactive, replayable tree building: generate, delete and re-generate
//! the top layer.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::engine::generate_layer;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::model::{ChangeThresholds, Frames, NodeUniverse, SnapshotTree};

/// A layer operation as recorded in the session history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerOp {
    Generate {
        from_layer: usize,
        thresholds: ChangeThresholds,
    },
    DeleteTop,
    Regenerate {
        thresholds: ChangeThresholds,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    #[serde(flatten)]
    pub op: LayerOp,
    /// Digest of the layer the operation produced, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_digest: Option<String>,
    pub tree_digest: String,
}

/// Everything needed to rebuild a session from its dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub schema_version: u32,
    /// Selected frame range, end exclusive.
    pub selection: [usize; 2],
    pub feature_config: FeatureConfig,
    pub base_digest: String,
    pub entries: Vec<HistoryEntry>,
}

/// Single-writer session over one snapshot tree.
#[derive(Debug, Clone)]
pub struct GenerationSession {
    universe: NodeUniverse,
    tree: SnapshotTree,
    base_digest: String,
    history: Vec<HistoryEntry>,
}

impl GenerationSession {
    pub fn new(
        frames: Frames,
        universe: NodeUniverse,
        selection: Range<usize>,
        cfg: &FeatureConfig,
    ) -> Result<Self> {
        let tree = SnapshotTree::build_layer_zero(frames, selection, cfg)?;
        let base_digest = tree.digest();
        Ok(GenerationSession {
            universe,
            tree,
            base_digest,
            history: Vec::new(),
        })
    }

    pub fn tree(&self) -> &SnapshotTree {
        &self.tree
    }

    pub fn universe(&self) -> &NodeUniverse {
        &self.universe
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Merge `from_layer`, which must be the top layer, into a new top layer.
    pub fn generate(&mut self, from_layer: usize, th: ChangeThresholds) -> Result<usize> {
        let k = self.push_generated(from_layer, th)?;
        self.log(LayerOp::Generate {
            from_layer,
            thresholds: th,
        });
        Ok(k)
    }

    pub fn delete_top(&mut self) -> Result<()> {
        self.tree.pop_layer()?;
        self.log(LayerOp::DeleteTop);
        Ok(())
    }

    /// Replace the top layer with one generated under `th`.
    pub fn regenerate_top(&mut self, th: ChangeThresholds) -> Result<usize> {
        if self.tree.layers().len() < 2 {
            return Err(Error::CannotDeleteBase);
        }
        th.validate()?;
        let mut next = self.tree.clone();
        next.pop_layer()?;
        let saved = std::mem::replace(&mut self.tree, next);
        match self.push_generated(self.tree.top_index(), th) {
            Ok(k) => {
                self.log(LayerOp::Regenerate { thresholds: th });
                Ok(k)
            }
            Err(e) => {
                self.tree = saved;
                Err(e)
            }
        }
    }

    fn push_generated(&mut self, from_layer: usize, th: ChangeThresholds) -> Result<usize> {
        let top = self.tree.top_index();
        if from_layer != top {
            return Err(Error::LayerNotTop {
                requested: from_layer,
                top,
            });
        }
        let cfg = *self.tree.feature_config();
        let out = generate_layer(self.tree.top(), &th, &self.universe, &cfg, top + 1)?;
        self.tree.push_layer(out.snapshots, &out.parents, th);
        Ok(top + 1)
    }

    fn log(&mut self, op: LayerOp) {
        let layer_digest = match op {
            LayerOp::DeleteTop => None,
            _ => self.tree.layer_digest(self.tree.top_index()),
        };
        self.history.push(HistoryEntry {
            op,
            layer_digest,
            tree_digest: self.tree.digest(),
        });
    }

    pub fn log_record(&self) -> SessionLog {
        let sel = self.tree.selection();
        SessionLog {
            schema_version: crate::SCHEMA_VERSION,
            selection: [sel.start, sel.end],
            feature_config: *self.tree.feature_config(),
            base_digest: self.base_digest.clone(),
            entries: self.history.clone(),
        }
    }

    /// Rebuild a session by replaying its log, checking every recorded digest.
    pub fn replay(frames: Frames, universe: NodeUniverse, log: &SessionLog) -> Result<Self> {
        let mut s = GenerationSession::new(
            frames,
            universe,
            log.selection[0]..log.selection[1],
            &log.feature_config,
        )?;
        if s.base_digest != log.base_digest {
            return Err(Error::ReplayDivergence { step: 0 });
        }
        for (i, entry) in log.entries.iter().enumerate() {
            match &entry.op {
                LayerOp::Generate {
                    from_layer,
                    thresholds,
                } => s.generate(*from_layer, *thresholds).map(drop)?,
                LayerOp::DeleteTop => s.delete_top()?,
                LayerOp::Regenerate { thresholds } => s.regenerate_top(*thresholds).map(drop)?,
            }
            if s.history.last() != Some(entry) {
                return Err(Error::ReplayDivergence { step: i + 1 });
            }
        }
        Ok(s)
    }
}
