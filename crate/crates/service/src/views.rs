//! View-ready aggregates computed from datasets and snapshots.

use std::collections::BTreeMap;

use dgsnap_core::features::link_distance;
use dgsnap_core::ingest::{DatasetConfig, EventRecord, TrackingData};
use dgsnap_core::model::{NodeEntry, NodeUniverse, Snapshot, SnapshotRecord, TimestampedGraph};
use dgsnap_core::Link;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigests {
    pub tracking: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub id: String,
    pub name: String,
    pub frame_count: usize,
    pub node_universe: NodeUniverse,
    /// First and last frame timestamps.
    pub time_range: [f64; 2],
    /// Median gap between consecutive frames; 0 for a single frame.
    pub granularity: f64,
    pub file_digests: FileDigests,
    pub config: DatasetConfig,
}

impl DatasetDescriptor {
    pub fn new(
        id: String,
        data: &TrackingData,
        digests: FileDigests,
        config: DatasetConfig,
    ) -> Self {
        let frames = &data.frames;
        let first = frames.first().map_or(0.0, TimestampedGraph::timestamp);
        let last = frames.last().map_or(0.0, TimestampedGraph::timestamp);
        DatasetDescriptor {
            name: config.name.clone().unwrap_or_else(|| id.clone()),
            id,
            frame_count: frames.len(),
            node_universe: data.universe.clone(),
            time_range: [first, last],
            granularity: granularity(frames),
            file_digests: digests,
            config,
        }
    }
}

pub fn granularity(frames: &[TimestampedGraph]) -> f64 {
    let mut gaps: Vec<f64> = frames
        .windows(2)
        .map(|w| w[1].timestamp() - w[0].timestamp())
        .collect();
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    if gaps.len() % 2 == 1 {
        gaps[mid]
    } else {
        (gaps[mid - 1] + gaps[mid]) / 2.0
    }
}

/// Link occurrence counts per node pair over the frames `from..=to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixAggregate {
    pub from: usize,
    pub to: usize,
    pub nodes: Vec<NodeEntry>,
    /// Symmetric `n x n` counts indexed by node ordinal; zero diagonal.
    pub counts: Vec<Vec<u32>>,
}

/// `None` when the range is empty or runs past the last frame.
pub fn matrix(
    frames: &[TimestampedGraph],
    universe: &NodeUniverse,
    from: usize,
    to: usize,
) -> Option<MatrixAggregate> {
    if from > to || to >= frames.len() {
        return None;
    }
    let n = universe.len();
    let mut counts = vec![vec![0u32; n]; n];
    for f in &frames[from..=to] {
        for l in f.links() {
            let (a, b) = (l.a() as usize, l.b() as usize);
            counts[a][b] += 1;
            counts[b][a] += 1;
        }
    }
    Some(MatrixAggregate {
        from,
        to,
        nodes: universe.entries().to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePoint {
    pub timestamp: f64,
    /// `score_a - score_b`.
    pub diff: i64,
}

/// One point per event, in event order.
pub fn score_timeline(events: &[EventRecord]) -> Vec<ScorePoint> {
    events
        .iter()
        .map(|e| ScorePoint {
            timestamp: e.timestamp,
            diff: i64::from(e.score_a) - i64::from(e.score_b),
        })
        .collect()
}

/// Indices of frames containing `player`.
pub fn frames_with_player(frames: &[TimestampedGraph], player: u32) -> Vec<usize> {
    frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.contains(player))
        .map(|(i, _)| i)
        .collect()
}

/// Indices of frames containing the link between `a` and `b`.
pub fn frames_with_link(frames: &[TimestampedGraph], link: Link) -> Vec<usize> {
    frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.links().binary_search(&link).is_ok())
        .map(|(i, _)| i)
        .collect()
}

/// Straight move between two consecutive samples of one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub from: [f64; 2],
    pub to: [f64; 2],
    /// Speed recorded at the later sample.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerTrack {
    pub id: String,
    pub class: String,
    /// Per-frame series; `null` where the player is absent.
    pub positions: Vec<Option<[f64; 2]>>,
    pub speed: Vec<Option<f64>>,
    pub degree: Vec<Option<usize>>,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSeries {
    pub a: String,
    pub b: String,
    pub count: u32,
    /// Per-frame endpoint distance; `null` where the link is absent.
    pub distance: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDetail {
    pub snapshot: SnapshotRecord,
    pub timestamps: Vec<f64>,
    pub players: Vec<PlayerTrack>,
    pub links: Vec<LinkSeries>,
}

pub fn snapshot_detail(s: &Snapshot, universe: &NodeUniverse) -> SnapshotDetail {
    let frames = s.frames();
    let name = |o: u32| {
        universe.entry(o).map_or_else(
            || (o.to_string(), String::new()),
            |e| (e.id.clone(), e.class.clone()),
        )
    };
    let mut degree: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); frames.len()];
    for (k, f) in frames.iter().enumerate() {
        for l in f.links() {
            *degree[k].entry(l.a()).or_default() += 1;
            *degree[k].entry(l.b()).or_default() += 1;
        }
    }
    let players = s
        .node_union()
        .iter()
        .map(|&o| {
            let states: Vec<_> = frames.iter().map(|f| f.node(o)).collect();
            let segments = frames
                .windows(2)
                .zip(states.windows(2))
                .filter_map(|(f, w)| match (w[0], w[1]) {
                    (Some(p), Some(q)) => Some(Segment {
                        t0: f[0].timestamp(),
                        t1: f[1].timestamp(),
                        from: [p.position.x, p.position.y],
                        to: [q.position.x, q.position.y],
                        speed: q.speed,
                    }),
                    _ => None,
                })
                .collect();
            let (id, class) = name(o);
            PlayerTrack {
                id,
                class,
                positions: states
                    .iter()
                    .map(|n| n.map(|n| [n.position.x, n.position.y]))
                    .collect(),
                speed: states.iter().map(|n| n.map(|n| n.speed)).collect(),
                degree: states
                    .iter()
                    .zip(&degree)
                    .map(|(n, d)| n.map(|_| d.get(&o).copied().unwrap_or(0)))
                    .collect(),
                segments,
            }
        })
        .collect();
    let links = s
        .link_counts()
        .iter()
        .map(|(&l, &count)| LinkSeries {
            a: name(l.a()).0,
            b: name(l.b()).0,
            count,
            distance: frames
                .iter()
                .map(
                    |f| match (f.links().binary_search(&l), f.node(l.a()), f.node(l.b())) {
                        (Ok(_), Some(p), Some(q)) => Some(link_distance(p.position, q.position)),
                        _ => None,
                    },
                )
                .collect(),
        })
        .collect();
    SnapshotDetail {
        snapshot: s.record(),
        timestamps: frames.iter().map(TimestampedGraph::timestamp).collect(),
        players,
        links,
    }
}
