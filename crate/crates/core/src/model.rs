//! Core domain types: frames, snapshots and the snapshot tree.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{self, FeatureConfig, SnapshotIndicators};

/// Ordinal of a node within its [`NodeUniverse`].
pub type NodeOrdinal = u32;

/// Shared, immutable frame sequence of a dataset.
pub type Frames = Arc<[TimestampedGraph]>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: String,
    pub class: String,
}

/// Fixed, ordered set of every node that may appear in a dataset.
///
/// Vector layouts depend on this ordering, so it never changes once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<NodeEntry>", into = "Vec<NodeEntry>")]
pub struct NodeUniverse {
    entries: Vec<NodeEntry>,
    index: HashMap<String, NodeOrdinal>,
}

impl NodeUniverse {
    pub fn new(entries: Vec<NodeEntry>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.id.clone(), i as NodeOrdinal).is_some() {
                return Err(Error::DuplicateNode(e.id.clone()));
            }
        }
        Ok(NodeUniverse { entries, index })
    }

    /// Convenience constructor from `(id, class)` pairs.
    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(id, class)| NodeEntry {
                    id: id.into(),
                    class: class.into(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ordinal(&self, id: &str) -> Option<NodeOrdinal> {
        self.index.get(id).copied()
    }

    pub fn entry(&self, ordinal: NodeOrdinal) -> Option<&NodeEntry> {
        self.entries.get(ordinal as usize)
    }

    pub fn entries(&self) -> &[NodeEntry] {
        &self.entries
    }
}

impl TryFrom<Vec<NodeEntry>> for NodeUniverse {
    type Error = Error;
    fn try_from(entries: Vec<NodeEntry>) -> Result<Self> {
        NodeUniverse::new(entries)
    }
}

impl From<NodeUniverse> for Vec<NodeEntry> {
    fn from(u: NodeUniverse) -> Self {
        u.entries
    }
}

/// Undirected link, stored canonically with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "[NodeOrdinal; 2]", into = "[NodeOrdinal; 2]")]
pub struct Link {
    a: NodeOrdinal,
    b: NodeOrdinal,
}

impl Link {
    /// Returns `None` for self-links.
    pub fn new(x: NodeOrdinal, y: NodeOrdinal) -> Option<Link> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(Link { a: x, b: y }),
            std::cmp::Ordering::Greater => Some(Link { a: y, b: x }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn a(self) -> NodeOrdinal {
        self.a
    }

    pub fn b(self) -> NodeOrdinal {
        self.b
    }
}

impl TryFrom<[NodeOrdinal; 2]> for Link {
    type Error = String;
    fn try_from([x, y]: [NodeOrdinal; 2]) -> std::result::Result<Self, String> {
        Link::new(x, y).ok_or_else(|| format!("self-link on node {x}"))
    }
}

impl From<Link> for [NodeOrdinal; 2] {
    fn from(l: Link) -> Self {
        [l.a, l.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }
}

/// Per-frame state of one present node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub ordinal: NodeOrdinal,
    pub position: Position,
    /// Court units per second.
    pub speed: f64,
}

/// One frame of the dynamic graph.
///
/// Nodes are kept sorted by ordinal and links sorted canonically. Every link
/// endpoint is a present node and every present node carries a position and a
/// speed, so attribute lookups never fail for present nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampedGraph {
    timestamp: f64,
    nodes: Vec<NodeState>,
    links: Vec<Link>,
}

impl TimestampedGraph {
    pub fn new(timestamp: f64, mut nodes: Vec<NodeState>, mut links: Vec<Link>) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::InvalidFrame("non-finite timestamp".into()));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidFrame(format!(
                "frame at t={timestamp} has no nodes"
            )));
        }
        nodes.sort_by_key(|n| n.ordinal);
        for w in nodes.windows(2) {
            if w[0].ordinal == w[1].ordinal {
                return Err(Error::InvalidFrame(format!(
                    "node {} listed twice at t={timestamp}",
                    w[0].ordinal
                )));
            }
        }
        for n in &nodes {
            if !(n.position.x.is_finite() && n.position.y.is_finite()) {
                return Err(Error::InvalidFrame(format!(
                    "node {} has a non-finite position",
                    n.ordinal
                )));
            }
            if !n.speed.is_finite() || n.speed < 0.0 {
                return Err(Error::InvalidFrame(format!(
                    "node {} has invalid speed {}",
                    n.ordinal, n.speed
                )));
            }
        }
        links.sort();
        links.dedup();
        let present = |o: NodeOrdinal| nodes.binary_search_by_key(&o, |n| n.ordinal).is_ok();
        if let Some(l) = links.iter().find(|l| !present(l.a) || !present(l.b)) {
            return Err(Error::InvalidFrame(format!(
                "link ({}, {}) has an endpoint absent at t={timestamp}",
                l.a, l.b
            )));
        }
        Ok(TimestampedGraph {
            timestamp,
            nodes,
            links,
        })
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, ordinal: NodeOrdinal) -> Option<&NodeState> {
        self.nodes
            .binary_search_by_key(&ordinal, |n| n.ordinal)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn contains(&self, ordinal: NodeOrdinal) -> bool {
        self.node(ordinal).is_some()
    }

    /// Same frame with its link set replaced.
    pub fn with_links(&self, links: Vec<Link>) -> Result<Self> {
        TimestampedGraph::new(self.timestamp, self.nodes.clone(), links)
    }
}

/// Deterministic snapshot identifier: layer index plus ordinal within the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SnapshotId {
    pub layer: u32,
    pub ordinal: u32,
}

impl SnapshotId {
    pub fn new(layer: usize, ordinal: usize) -> Self {
        SnapshotId {
            layer: layer as u32,
            ordinal: ordinal as u32,
        }
    }
}

impl fmt::Display for SnapshotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}-{}", self.layer, self.ordinal)
    }
}

impl FromStr for SnapshotId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("invalid snapshot id `{s}`");
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let (layer, ordinal) = rest.split_once('-').ok_or_else(bad)?;
        Ok(SnapshotId {
            layer: layer.parse().map_err(|_| bad())?,
            ordinal: ordinal.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for SnapshotId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SnapshotId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One or more consecutive frames treated as a single static graph.
///
/// Topology is the union over frames; `link_counts` keeps how many frames each
/// link occurs in.
#[derive(Debug, Clone)]
pub struct Snapshot {
    id: SnapshotId,
    frames: Frames,
    range: Range<usize>,
    node_union: BTreeSet<NodeOrdinal>,
    link_counts: BTreeMap<Link, u32>,
    time_span: (f64, f64),
    indicators: SnapshotIndicators,
}

impl Snapshot {
    /// Build a snapshot over `frames[range]`.
    pub fn build(
        id: SnapshotId,
        frames: Frames,
        range: Range<usize>,
        cfg: &FeatureConfig,
    ) -> Result<Snapshot> {
        if range.start >= range.end || range.end > frames.len() {
            return Err(Error::SelectionOutOfRange {
                start: range.start,
                end: range.end,
                len: frames.len(),
            });
        }
        let slice = &frames[range.clone()];
        let mut node_union = BTreeSet::new();
        let mut link_counts = BTreeMap::new();
        for f in slice {
            node_union.extend(f.nodes.iter().map(|n| n.ordinal));
            for &l in &f.links {
                *link_counts.entry(l).or_insert(0) += 1;
            }
        }
        let time_span = (slice[0].timestamp, slice[slice.len() - 1].timestamp);
        let indicators = features::compute_indicators(slice, &node_union, &link_counts, cfg)?;
        Ok(Snapshot {
            id,
            frames,
            range,
            node_union,
            link_counts,
            time_span,
            indicators,
        })
    }

    pub fn id(&self) -> SnapshotId {
        self.id
    }

    /// The frames this snapshot covers, in order.
    pub fn frames(&self) -> &[TimestampedGraph] {
        &self.frames[self.range.clone()]
    }

    /// Position of the covered frames within the dataset.
    pub fn frame_range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn frame_count(&self) -> usize {
        self.range.len()
    }

    pub fn node_union(&self) -> &BTreeSet<NodeOrdinal> {
        &self.node_union
    }

    pub fn link_union(&self) -> impl Iterator<Item = Link> + '_ {
        self.link_counts.keys().copied()
    }

    pub fn link_counts(&self) -> &BTreeMap<Link, u32> {
        &self.link_counts
    }

    pub fn time_span(&self) -> (f64, f64) {
        self.time_span
    }

    pub fn indicators(&self) -> &SnapshotIndicators {
        &self.indicators
    }

    pub(crate) fn shares_frames(&self, other: &Snapshot) -> bool {
        Arc::ptr_eq(&self.frames, &other.frames)
    }

    pub fn record(&self) -> SnapshotRecord {
        SnapshotRecord {
            id: self.id,
            frame_start: self.range.start,
            frame_end: self.range.end,
            frame_count: self.range.len(),
            time_span: [self.time_span.0, self.time_span.1],
            node_union: self.node_union.iter().copied().collect(),
            link_counts: self
                .link_counts
                .iter()
                .map(|(l, &count)| LinkCount {
                    a: l.a,
                    b: l.b,
                    count,
                })
                .collect(),
            indicators: self.indicators.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCount {
    pub a: NodeOrdinal,
    pub b: NodeOrdinal,
    pub count: u32,
}

/// Serializable view of a [`Snapshot`]. `frame_end` is exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub id: SnapshotId,
    pub frame_start: usize,
    pub frame_end: usize,
    pub frame_count: usize,
    pub time_span: [f64; 2],
    pub node_union: Vec<NodeOrdinal>,
    pub link_counts: Vec<LinkCount>,
    pub indicators: SnapshotIndicators,
}

/// Merge a contiguous run of snapshots into one.
///
/// The result covers the concatenated frames; its topology is the union of the
/// parts with summed link counts, and its indicators are recomputed from the
/// frames.
pub fn merge_snapshots(run: &[Snapshot], id: SnapshotId, cfg: &FeatureConfig) -> Result<Snapshot> {
    let first = run.first().ok_or(Error::EmptyRun)?;
    for w in run.windows(2) {
        if !w[0].shares_frames(&w[1]) || w[0].range.end != w[1].range.start {
            return Err(Error::NonContiguousRun);
        }
    }
    let last = &run[run.len() - 1];
    let range = first.range.start..last.range.end;
    let mut node_union = BTreeSet::new();
    let mut link_counts = BTreeMap::new();
    for s in run {
        node_union.extend(s.node_union.iter().copied());
        for (&l, &c) in &s.link_counts {
            *link_counts.entry(l).or_insert(0) += c;
        }
    }
    let indicators =
        features::compute_indicators(&first.frames[range.clone()], &node_union, &link_counts, cfg)?;
    Ok(Snapshot {
        id,
        frames: first.frames.clone(),
        range,
        node_union,
        link_counts,
        time_span: (first.time_span.0, last.time_span.1),
        indicators,
    })
}

/// User-defined merge gates for one generated layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeThresholds {
    pub node_change_max: f64,
    pub link_change_max: f64,
    /// Seconds.
    pub time_gap_max: f64,
    /// Cap on the number of frames a merged snapshot may hold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count_max: Option<u32>,
}

impl ChangeThresholds {
    pub fn new(node: f64, link: f64, gap: f64, frame_count_max: Option<u32>) -> Result<Self> {
        let th = ChangeThresholds {
            node_change_max: node,
            link_change_max: link,
            time_gap_max: gap,
            frame_count_max,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("node_change_max", self.node_change_max),
            ("link_change_max", self.link_change_max),
            ("time_gap_max", self.time_gap_max),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidThresholds(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.frame_count_max == Some(0) {
            return Err(Error::InvalidThresholds(
                "frame_count_max must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Stack of snapshot layers with increasing time granularity.
///
/// Layer 0 wraps the selected frames one by one. Each later layer partitions
/// the layer below into contiguous runs; `lineage` maps every snapshot of a
/// layer `k > 0` to its parents in layer `k - 1`.
#[derive(Debug, Clone)]
pub struct SnapshotTree {
    frames: Frames,
    cfg: FeatureConfig,
    layers: Vec<Vec<Snapshot>>,
    lineage: BTreeMap<SnapshotId, Vec<SnapshotId>>,
    layer_params: BTreeMap<usize, ChangeThresholds>,
}

impl SnapshotTree {
    /// Single-layer tree wrapping each frame of `frames[selection]`.
    pub fn build_layer_zero(
        frames: Frames,
        selection: Range<usize>,
        cfg: &FeatureConfig,
    ) -> Result<SnapshotTree> {
        if frames.is_empty() || selection.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if selection.end > frames.len() {
            return Err(Error::SelectionOutOfRange {
                start: selection.start,
                end: selection.end,
                len: frames.len(),
            });
        }
        for i in selection.start + 1..selection.end {
            if frames[i].timestamp < frames[i - 1].timestamp {
                return Err(Error::UnorderedTimestamps { index: i });
            }
        }
        let start = selection.start;
        let layer = crate::exec::Execution::default()
            .try_map(&selection.clone().collect::<Vec<_>>(), |&i| {
                Snapshot::build(SnapshotId::new(0, i - start), frames.clone(), i..i + 1, cfg)
            })?;
        Ok(SnapshotTree {
            frames,
            cfg: *cfg,
            layers: vec![layer],
            lineage: BTreeMap::new(),
            layer_params: BTreeMap::new(),
        })
    }

    pub fn frames(&self) -> &Frames {
        &self.frames
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[Vec<Snapshot>] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> Option<&[Snapshot]> {
        self.layers.get(k).map(Vec::as_slice)
    }

    pub fn top_index(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn top(&self) -> &[Snapshot] {
        &self.layers[self.layers.len() - 1]
    }

    pub fn lineage(&self) -> &BTreeMap<SnapshotId, Vec<SnapshotId>> {
        &self.lineage
    }

    pub fn layer_params(&self) -> &BTreeMap<usize, ChangeThresholds> {
        &self.layer_params
    }

    pub fn snapshot(&self, id: SnapshotId) -> Option<&Snapshot> {
        self.layers.get(id.layer as usize)?.get(id.ordinal as usize)
    }

    /// Frames covered by layer 0.
    pub fn selection(&self) -> Range<usize> {
        let base = &self.layers[0];
        base[0].range.start..base[base.len() - 1].range.end
    }

    /// Append a layer built from the current top. `parents[i]` is the run of
    /// top-layer ordinals merged into `snapshots[i]`.
    pub(crate) fn push_layer(
        &mut self,
        snapshots: Vec<Snapshot>,
        parents: &[Range<usize>],
        th: ChangeThresholds,
    ) {
        let k = self.layers.len();
        let below = k - 1;
        for (s, run) in snapshots.iter().zip(parents) {
            self.lineage.insert(
                s.id,
                run.clone().map(|o| SnapshotId::new(below, o)).collect(),
            );
        }
        self.layers.push(snapshots);
        self.layer_params.insert(k, th);
    }

    pub(crate) fn pop_layer(&mut self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::CannotDeleteBase);
        }
        let k = self.layers.len() - 1;
        for s in self.layers.pop().unwrap_or_default() {
            self.lineage.remove(&s.id);
        }
        self.layer_params.remove(&k);
        Ok(())
    }

    /// Checks timestamp conservation, contiguity and single-child lineage.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let base = &self.layers[0];
        if base.iter().any(|s| s.frame_count() != 1) {
            return Err("layer 0 snapshot wraps more than one frame".into());
        }
        for w in base.windows(2) {
            if w[0].range.end != w[1].range.start {
                return Err("layer 0 is not the contiguous frame sequence".into());
            }
        }
        let total = base.len();
        for (k, layer) in self.layers.iter().enumerate() {
            let count: usize = layer.iter().map(Snapshot::frame_count).sum();
            if count != total {
                return Err(format!("layer {k} covers {count} frames, expected {total}"));
            }
            for (i, s) in layer.iter().enumerate() {
                if s.id != SnapshotId::new(k, i) {
                    return Err(format!("snapshot {} sits at layer {k} position {i}", s.id));
                }
            }
            if k == 0 {
                continue;
            }
            let mut next_parent = 0u32;
            for s in layer {
                let parents = self
                    .lineage
                    .get(&s.id)
                    .ok_or_else(|| format!("{} has no lineage", s.id))?;
                if parents.is_empty() {
                    return Err(format!("{} has no parents", s.id));
                }
                for p in parents {
                    if p.layer as usize != k - 1 || p.ordinal != next_parent {
                        return Err(format!("{} parents are not a contiguous run", s.id));
                    }
                    next_parent += 1;
                }
                let below = &self.layers[k - 1];
                let first = &below[parents[0].ordinal as usize];
                let last = &below[parents[parents.len() - 1].ordinal as usize];
                if s.range != (first.range.start..last.range.end) {
                    return Err(format!("{} frames disagree with its parents", s.id));
                }
            }
            if next_parent as usize != self.layers[k - 1].len() {
                return Err(format!("layer {} snapshots without a child", k - 1));
            }
        }
        let lineage_len: usize = self.layers[1..].iter().map(Vec::len).sum();
        if lineage_len != self.lineage.len() {
            return Err("lineage has entries for removed snapshots".into());
        }
        Ok(())
    }

    pub fn layer_digest(&self, k: usize) -> Option<String> {
        let layer = self.layers.get(k)?;
        let records: Vec<SnapshotRecord> = layer.iter().map(Snapshot::record).collect();
        Some(sha256_json(&records))
    }

    /// Digest over every layer, its lineage and its parameters.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for k in 0..self.layers.len() {
            h.update(self.layer_digest(k).unwrap_or_default().as_bytes());
            if let Some(th) = self.layer_params.get(&k) {
                h.update(serde_json::to_vec(th).unwrap_or_default());
            }
        }
        h.update(serde_json::to_vec(&self.lineage).unwrap_or_default());
        hex::encode(h.finalize())
    }

    pub fn record(&self) -> TreeRecord {
        TreeRecord {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(k, layer)| LayerRecord {
                    index: k,
                    thresholds: self.layer_params.get(&k).copied(),
                    digest: self.layer_digest(k).unwrap_or_default(),
                    snapshots: layer.iter().map(Snapshot::record).collect(),
                })
                .collect(),
            lineage: self.lineage.clone(),
            digest: self.digest(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ChangeThresholds>,
    pub digest: String,
    pub snapshots: Vec<SnapshotRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub layers: Vec<LayerRecord>,
    pub lineage: BTreeMap<SnapshotId, Vec<SnapshotId>>,
    pub digest: String,
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(
        serde_json::to_vec(value).unwrap_or_default(),
    ))
}
