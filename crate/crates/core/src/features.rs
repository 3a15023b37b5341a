//! Graph vectorization plus the attribute and stability indicators.

use std::collections::{BTreeMap, BTreeSet};

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Link, NodeOrdinal, NodeUniverse, Position, Snapshot, TimestampedGraph};

/// Default divisor guard, in court units.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Constant added to stability denominators.
    pub eps: f64,
    /// Move the speed sum of graph stability into the denominator.
    pub stability_speed_inverse: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            eps: DEFAULT_EPS,
            stability_speed_inverse: false,
        }
    }
}

/// Hot-encoded node presence vector concatenated with the upper-triangle link
/// presence vector, ordered `(0,1), (0,2), ..., (N-2,N-1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CombinedVector {
    pub node_vec: BitVec<u64, Lsb0>,
    pub link_vec: BitVec<u64, Lsb0>,
}

impl CombinedVector {
    pub fn zeros(universe_len: usize) -> Self {
        CombinedVector {
            node_vec: bitvec![u64, Lsb0; 0; universe_len],
            link_vec: bitvec![u64, Lsb0; 0; link_slots(universe_len)],
        }
    }

    /// Total length, `N + N(N-1)/2`.
    pub fn len(&self) -> usize {
        self.node_vec.len() + self.link_vec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_count(&self) -> usize {
        self.node_vec.count_ones()
    }

    pub fn link_count(&self) -> usize {
        self.link_vec.count_ones()
    }

    /// L1 distance between the node blocks.
    pub fn node_l1(&self, other: &CombinedVector) -> usize {
        (self.node_vec.clone() ^ &other.node_vec).count_ones()
    }

    /// L1 distance between the link blocks.
    pub fn link_l1(&self, other: &CombinedVector) -> usize {
        (self.link_vec.clone() ^ &other.link_vec).count_ones()
    }

    /// Elementwise OR, in place.
    pub fn union_with(&mut self, other: &CombinedVector) {
        self.node_vec |= &other.node_vec;
        self.link_vec |= &other.link_vec;
    }

    pub fn to_dense(&self) -> Vec<f64> {
        self.node_vec
            .iter()
            .chain(self.link_vec.iter())
            .map(|b| if *b { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Number of unordered pairs over `n` nodes.
pub fn link_slots(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of `(a, b)`, `a < b`, in the upper-triangle flattening.
pub fn link_index(a: NodeOrdinal, b: NodeOrdinal, n: usize) -> usize {
    let (a, b) = (a as usize, b as usize);
    debug_assert!(a < b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

pub(crate) fn encode(
    nodes: impl IntoIterator<Item = NodeOrdinal>,
    links: impl IntoIterator<Item = Link>,
    universe_len: usize,
) -> Result<CombinedVector> {
    let mut v = CombinedVector::zeros(universe_len);
    let out_of_range = |o: NodeOrdinal| Error::OrdinalOutOfRange {
        ordinal: o,
        universe: universe_len,
    };
    for o in nodes {
        if o as usize >= universe_len {
            return Err(out_of_range(o));
        }
        v.node_vec.set(o as usize, true);
    }
    for l in links {
        if l.b() as usize >= universe_len {
            return Err(out_of_range(l.b()));
        }
        v.link_vec.set(link_index(l.a(), l.b(), universe_len), true);
    }
    Ok(v)
}

/// Presence encoding of a snapshot's union topology.
pub fn vectorize(snapshot: &Snapshot, universe: &NodeUniverse) -> Result<CombinedVector> {
    encode(
        snapshot.node_union().iter().copied(),
        snapshot.link_union(),
        universe.len(),
    )
}

/// Presence encoding of a single frame.
pub fn vectorize_frame(
    frame: &TimestampedGraph,
    universe: &NodeUniverse,
) -> Result<CombinedVector> {
    encode(
        frame.nodes().iter().map(|n| n.ordinal),
        frame.links().iter().copied(),
        universe.len(),
    )
}

/// Vectors for every frame of a dataset.
pub fn frame_vectors(
    frames: &[TimestampedGraph],
    universe: &NodeUniverse,
    exec: Execution,
) -> Result<Vec<CombinedVector>> {
    exec.try_map(frames, |f| vectorize_frame(f, universe))
}

pub fn link_distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Link stability: reciprocal of both endpoint speeds plus the link distance.
pub fn link_stability(speed_a: f64, speed_b: f64, distance: f64, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidEpsilon);
    }
    for (name, v) in [
        ("speed_a", speed_a),
        ("speed_b", speed_b),
        ("distance", distance),
    ] {
        if v.is_nan() || v < 0.0 {
            return Err(Error::NegativeInput(name));
        }
    }
    Ok(stability_unchecked(speed_a, speed_b, distance, eps))
}

fn stability_unchecked(speed_a: f64, speed_b: f64, distance: f64, eps: f64) -> f64 {
    1.0 / (speed_a + speed_b + distance + eps)
}

/// Graph stability from per-node speeds and per-link distances.
///
/// `m^2 * sum(speed) / (n * sum(distance) + eps)`, or with
/// `stability_speed_inverse` set, `m^2 / (n * sum(distance) * sum(speed) + eps)`.
pub fn graph_stability_from(
    node_speeds: &[f64],
    link_distances: &[f64],
    cfg: &FeatureConfig,
) -> Result<f64> {
    if node_speeds.is_empty() {
        return Err(Error::EmptySnapshot);
    }
    if !(cfg.eps.is_finite() && cfg.eps > 0.0) {
        return Err(Error::InvalidEpsilon);
    }
    let n = node_speeds.len() as f64;
    let m = link_distances.len() as f64;
    let speed_sum: f64 = node_speeds.iter().sum();
    let dist_sum: f64 = link_distances.iter().sum();
    Ok(if cfg.stability_speed_inverse {
        m * m / (n * dist_sum * speed_sum + cfg.eps)
    } else {
        m * m * speed_sum / (n * dist_sum + cfg.eps)
    })
}

/// Graph stability of a (possibly multi-frame) snapshot.
///
/// Over several frames each node contributes its mean speed across the frames
/// it is present in, and each link its mean distance across the frames it
/// occurs in; `n` and `m` count distinct nodes and links.
pub fn graph_stability(snapshot: &Snapshot, cfg: &FeatureConfig) -> Result<f64> {
    let (speeds, distances) = per_entity_means(snapshot.frames());
    graph_stability_from(&speeds, &distances, cfg)
}

fn per_entity_means(frames: &[TimestampedGraph]) -> (Vec<f64>, Vec<f64>) {
    let mut speeds: BTreeMap<NodeOrdinal, (f64, u32)> = BTreeMap::new();
    let mut dists: BTreeMap<Link, (f64, u32)> = BTreeMap::new();
    for f in frames {
        for n in f.nodes() {
            let e = speeds.entry(n.ordinal).or_default();
            e.0 += n.speed;
            e.1 += 1;
        }
        for &l in f.links() {
            let e = dists.entry(l).or_default();
            e.0 += frame_link_distance(f, l);
            e.1 += 1;
        }
    }
    let mean = |(s, c): (f64, u32)| s / c as f64;
    (
        speeds.into_values().map(mean).collect(),
        dists.into_values().map(mean).collect(),
    )
}

fn frame_link_distance(f: &TimestampedGraph, l: Link) -> f64 {
    // Frame construction guarantees both endpoints are present.
    match (f.node(l.a()), f.node(l.b())) {
        (Some(a), Some(b)) => link_distance(a.position, b.position),
        _ => 0.0,
    }
}

/// Number of links incident to `node` in the `frame_index`-th frame of the snapshot.
pub fn player_degree(snapshot: &Snapshot, node: NodeOrdinal, frame_index: usize) -> Result<usize> {
    let frames = snapshot.frames();
    let frame = frames.get(frame_index).ok_or(Error::FrameIndexOutOfRange {
        index: frame_index,
        len: frames.len(),
    })?;
    if !frame.contains(node) {
        return Err(Error::NodeAbsent {
            node,
            frame: frame_index,
        });
    }
    Ok(frame_degree(frame, node))
}

pub(crate) fn frame_degree(frame: &TimestampedGraph, node: NodeOrdinal) -> usize {
    frame
        .links()
        .iter()
        .filter(|l| l.a() == node || l.b() == node)
        .count()
}

/// Per-frame indicator series of a snapshot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameSeries {
    pub avg_node_speed: Vec<f64>,
    pub avg_node_degree: Vec<f64>,
    pub avg_link_distance: Vec<f64>,
    pub avg_link_stability: Vec<f64>,
    pub graph_stability: Vec<f64>,
}

/// Aggregates shown as overlays on the generation tree.
///
/// Scalar averages are means of the per-frame series; `graph_stability` is the
/// multi-frame value from [`graph_stability`]. Averages over empty sets are 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotIndicators {
    pub avg_node_speed: f64,
    pub avg_node_degree: f64,
    pub avg_link_distance: f64,
    pub avg_link_stability: f64,
    pub graph_stability: f64,
    pub per_frame: FrameSeries,
}

pub fn snapshot_indicators(snapshot: &Snapshot, cfg: &FeatureConfig) -> Result<SnapshotIndicators> {
    compute_indicators(
        snapshot.frames(),
        snapshot.node_union(),
        snapshot.link_counts(),
        cfg,
    )
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

/// Indicators of a single frame: (speed, degree, distance, link stability, graph stability).
pub fn frame_indicators(f: &TimestampedGraph, cfg: &FeatureConfig) -> Result<[f64; 5]> {
    let nodes = f.nodes();
    let links = f.links();
    let speeds: Vec<f64> = nodes.iter().map(|n| n.speed).collect();
    let distances: Vec<f64> = links.iter().map(|&l| frame_link_distance(f, l)).collect();
    let stabilities = links.iter().zip(&distances).map(|(&l, &d)| {
        let s = |o| f.node(o).map_or(0.0, |n| n.speed);
        stability_unchecked(s(l.a()), s(l.b()), d, cfg.eps)
    });
    let degree = if nodes.is_empty() {
        0.0
    } else {
        2.0 * links.len() as f64 / nodes.len() as f64
    };
    Ok([
        mean(speeds.iter().copied()),
        degree,
        mean(distances.iter().copied()),
        mean(stabilities),
        graph_stability_from(&speeds, &distances, cfg)?,
    ])
}

pub(crate) fn compute_indicators(
    frames: &[TimestampedGraph],
    node_union: &BTreeSet<NodeOrdinal>,
    link_counts: &BTreeMap<Link, u32>,
    cfg: &FeatureConfig,
) -> Result<SnapshotIndicators> {
    if node_union.is_empty() {
        return Err(Error::EmptySnapshot);
    }
    let mut series = FrameSeries::default();
    for f in frames {
        let [s, d, ld, ls, gs] = frame_indicators(f, cfg)?;
        series.avg_node_speed.push(s);
        series.avg_node_degree.push(d);
        series.avg_link_distance.push(ld);
        series.avg_link_stability.push(ls);
        series.graph_stability.push(gs);
    }
    let (speeds, distances) = per_entity_means(frames);
    debug_assert_eq!(speeds.len(), node_union.len());
    debug_assert_eq!(distances.len(), link_counts.len());
    Ok(SnapshotIndicators {
        avg_node_speed: mean(series.avg_node_speed.iter().copied()),
        avg_node_degree: mean(series.avg_node_degree.iter().copied()),
        avg_link_distance: mean(series.avg_link_distance.iter().copied()),
        avg_link_stability: mean(series.avg_link_stability.iter().copied()),
        graph_stability: graph_stability_from(&speeds, &distances, cfg)?,
        per_frame: series,
    })
}
