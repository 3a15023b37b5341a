//! Random fixtures and independent reference implementations.
//!
//! The reference code works on plain maps/sets and dense `f64` vectors and
//! shares nothing with the engine beyond the input data.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dgsnap_core::model::{Frames, Link, NodeState, NodeUniverse, Position, TimestampedGraph};
use dgsnap_core::ChangeThresholds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;

/// Plain frame: ordinal -> (x, y, speed), links as ordered pairs.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub t: f64,
    pub nodes: BTreeMap<u32, (f64, f64, f64)>,
    pub links: BTreeSet<(u32, u32)>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn universe(n: usize) -> NodeUniverse {
    NodeUniverse::from_pairs(
        (0..n).map(|i| (format!("P{i:02}"), if i % 2 == 0 { "A" } else { "B" })),
    )
    .unwrap()
}

/// Random frame over `universe_len` nodes with at most `max_links` links.
pub fn random_frame(r: &mut impl Rng, t: f64, universe_len: u32, max_links: usize) -> RawFrame {
    let mut nodes = BTreeMap::new();
    while nodes.is_empty() {
        for o in 0..universe_len {
            if r.random_bool(0.6) {
                nodes.insert(
                    o,
                    (
                        r.random_range(0.0..94.0),
                        r.random_range(0.0..50.0),
                        r.random_range(0.0..10.0),
                    ),
                );
            }
        }
    }
    let present: Vec<u32> = nodes.keys().copied().collect();
    let mut links = BTreeSet::new();
    if present.len() > 1 {
        let want = r.random_range(0..=max_links);
        for _ in 0..want {
            let a = present[r.random_range(0..present.len())];
            let b = present[r.random_range(0..present.len())];
            if a != b {
                links.insert((a.min(b), a.max(b)));
            }
        }
    }
    RawFrame { t, nodes, links }
}

/// Random sequence with small node universe so merges actually happen.
/// Frames repeat the previous topology with probability `stick`.
pub fn random_sequence(
    r: &mut impl Rng,
    len: usize,
    universe_len: u32,
    stick: f64,
) -> Vec<RawFrame> {
    let mut out: Vec<RawFrame> = Vec::with_capacity(len);
    let mut t = 0.0;
    for i in 0..len {
        if i > 0 {
            t += if r.random_bool(0.1) {
                r.random_range(0.3..2.0)
            } else {
                0.3
            };
        }
        let f = match out.last() {
            Some(prev) if r.random_bool(stick) => RawFrame { t, ..prev.clone() },
            _ => random_frame(r, t, universe_len, 6),
        };
        out.push(f);
    }
    out
}

pub fn to_graph(f: &RawFrame) -> TimestampedGraph {
    TimestampedGraph::new(
        f.t,
        f.nodes
            .iter()
            .map(|(&o, &(x, y, s))| NodeState {
                ordinal: o,
                position: Position::new(x, y),
                speed: s,
            })
            .collect(),
        f.links
            .iter()
            .map(|&(a, b)| Link::new(a, b).unwrap())
            .collect(),
    )
    .unwrap()
}

pub fn to_frames(fs: &[RawFrame]) -> Frames {
    fs.iter().map(to_graph).collect::<Vec<_>>().into()
}

pub fn random_thresholds(r: &mut impl Rng) -> ChangeThresholds {
    ChangeThresholds {
        node_change_max: r.random_range(0.0..1.2),
        link_change_max: r.random_range(0.0..2.5),
        time_gap_max: if r.random_bool(0.2) {
            0.0
        } else {
            r.random_range(0.2..2.5)
        },
        frame_count_max: if r.random_bool(0.3) {
            Some(r.random_range(1..8))
        } else {
            None
        },
    }
}

// ---- reference formulas ----------------------------------------------------

pub fn ref_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

pub fn ref_link_stability(f: &RawFrame, (a, b): (u32, u32)) -> f64 {
    let na = f.nodes[&a];
    let nb = f.nodes[&b];
    1.0 / (na.2 + nb.2 + ref_distance((na.0, na.1), (nb.0, nb.1)) + EPS)
}

/// Multi-frame graph stability with per-node / per-link means.
pub fn ref_graph_stability(frames: &[RawFrame]) -> f64 {
    let mut speed: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut dist: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
    for f in frames {
        for (&o, &(_, _, s)) in &f.nodes {
            speed.entry(o).or_default().push(s);
        }
        for &(a, b) in &f.links {
            let (pa, pb) = (f.nodes[&a], f.nodes[&b]);
            dist.entry((a, b))
                .or_default()
                .push(ref_distance((pa.0, pa.1), (pb.0, pb.1)));
        }
    }
    let avg = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let n = speed.len() as f64;
    let m = dist.len() as f64;
    let s: f64 = speed.values().map(avg).sum();
    let d: f64 = dist.values().map(avg).sum();
    m * m * s / (n * d + EPS)
}

/// Dense hot encoding of the union topology of `frames` over `n` nodes.
pub fn ref_vectors(frames: &[RawFrame], n: u32) -> (Vec<f64>, Vec<f64>) {
    let nodes: BTreeSet<u32> = frames
        .iter()
        .flat_map(|f| f.nodes.keys().copied())
        .collect();
    let links: BTreeSet<(u32, u32)> = frames
        .iter()
        .flat_map(|f| f.links.iter().copied())
        .collect();
    let node_vec = (0..n)
        .map(|o| if nodes.contains(&o) { 1.0 } else { 0.0 })
        .collect();
    let mut link_vec = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            link_vec.push(if links.contains(&(a, b)) { 1.0 } else { 0.0 });
        }
    }
    (node_vec, link_vec)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// (node_change, link_change, time_gap) from `s1` to `s2`.
pub fn ref_change(s1: &[RawFrame], s2: &[RawFrame], n: u32) -> (f64, f64, f64) {
    let (n1, l1v) = ref_vectors(s1, n);
    let (n2, l2v) = ref_vectors(s2, n);
    let nc = n1.iter().sum::<f64>().max(1.0);
    let lc = l1v.iter().sum::<f64>().max(1.0);
    (
        l1(&n2, &n1) / nc,
        l1(&l2v, &l1v) / lc,
        (s2[0].t - s1[s1.len() - 1].t).abs(),
    )
}

/// Greedy segmentation of `items` (each a contiguous run of frames),
/// recomputing vectors from scratch for every comparison.
pub fn ref_segment(items: &[Vec<RawFrame>], th: &ChangeThresholds, n: u32) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for j in 1..items.len() {
        let acc: Vec<RawFrame> = items[start..j].iter().flatten().cloned().collect();
        let (nc, lc, gap) = ref_change(&acc, &items[j], n);
        let count = acc.len() + items[j].len();
        let ok = nc <= th.node_change_max
            && lc <= th.link_change_max
            && gap <= th.time_gap_max
            && th.frame_count_max.is_none_or(|c| count <= c as usize);
        if !ok {
            runs.push((start, j));
            start = j;
        }
    }
    runs.push((start, items.len()));
    runs
}
