//! Change degrees between snapshots and the greedy threshold-gated merge pass.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{vectorize, CombinedVector, FeatureConfig};
use crate::model::{merge_snapshots, ChangeThresholds, NodeUniverse, Snapshot, SnapshotId};

/// How much the graph changes from one snapshot to the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeDegrees {
    /// Node-block L1 distance over the earlier snapshot's node count.
    pub node_change: f64,
    /// Link-block L1 distance over the earlier snapshot's link count.
    pub link_change: f64,
    /// Seconds between the end of the earlier and the start of the later snapshot.
    pub time_gap: f64,
}

/// Change degrees from `s1` to the following snapshot `s2`.
///
/// Denominators are clamped to 1 so an empty `s1` still yields a finite degree.
pub fn change_degrees(
    s1: &Snapshot,
    s2: &Snapshot,
    universe: &NodeUniverse,
) -> Result<ChangeDegrees> {
    let v1 = vectorize(s1, universe).map_err(|_| Error::UniverseMismatch)?;
    let v2 = vectorize(s2, universe).map_err(|_| Error::UniverseMismatch)?;
    Ok(degrees_between(
        &v1,
        &v2,
        s1.time_span().1,
        s2.time_span().0,
    ))
}

pub(crate) fn degrees_between(
    v1: &CombinedVector,
    v2: &CombinedVector,
    end1: f64,
    start2: f64,
) -> ChangeDegrees {
    ChangeDegrees {
        node_change: v1.node_l1(v2) as f64 / v1.node_count().max(1) as f64,
        link_change: v1.link_l1(v2) as f64 / v1.link_count().max(1) as f64,
        time_gap: (start2 - end1).abs(),
    }
}

/// Inclusive comparison against every gate. `merged_count` is the number of
/// frames the merged snapshot would hold.
pub fn merge_condition(d: &ChangeDegrees, th: &ChangeThresholds, merged_count: usize) -> bool {
    d.node_change <= th.node_change_max
        && d.link_change <= th.link_change_max
        && d.time_gap <= th.time_gap_max
        && th
            .frame_count_max
            .is_none_or(|cap| merged_count <= cap as usize)
}

/// Result of one merge pass over a layer.
#[derive(Debug, Clone)]
pub struct GeneratedLayer {
    pub snapshots: Vec<Snapshot>,
    /// `parents[i]` is the run of input ordinals merged into `snapshots[i]`.
    pub parents: Vec<Range<usize>>,
}

/// One greedy left-to-right merge pass.
///
/// The accumulated snapshot is compared against the next one; if every gate
/// passes the next snapshot is folded in, otherwise the accumulated snapshot
/// is emitted and accumulation restarts from the next one.
pub fn generate_layer(
    layer: &[Snapshot],
    th: &ChangeThresholds,
    universe: &NodeUniverse,
    cfg: &FeatureConfig,
    layer_index: usize,
) -> Result<GeneratedLayer> {
    generate_layer_with(layer, th, universe, cfg, layer_index, Execution::default())
}

pub fn generate_layer_with(
    layer: &[Snapshot],
    th: &ChangeThresholds,
    universe: &NodeUniverse,
    cfg: &FeatureConfig,
    layer_index: usize,
    exec: Execution,
) -> Result<GeneratedLayer> {
    th.validate()?;
    let runs = merge_boundaries(layer, th, universe, exec)?;
    let snapshots = exec
        .map_range(runs.len(), |i| {
            merge_snapshots(
                &layer[runs[i].clone()],
                SnapshotId::new(layer_index, i),
                cfg,
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedLayer {
        snapshots,
        parents: runs,
    })
}

/// Runs of `layer` that the greedy pass merges together.
pub fn merge_boundaries(
    layer: &[Snapshot],
    th: &ChangeThresholds,
    universe: &NodeUniverse,
    exec: Execution,
) -> Result<Vec<Range<usize>>> {
    if layer.is_empty() {
        return Err(Error::EmptyLayer);
    }
    let vectors = exec
        .try_map(layer, |s| vectorize(s, universe))
        .map_err(|_| Error::UniverseMismatch)?;

    let mut runs = Vec::new();
    let mut acc = vectors[0].clone();
    let mut start = 0;
    let mut frames = layer[0].frame_count();
    let mut end_time = layer[0].time_span().1;
    for j in 1..layer.len() {
        let d = degrees_between(&acc, &vectors[j], end_time, layer[j].time_span().0);
        let merged = frames + layer[j].frame_count();
        if merge_condition(&d, th, merged) {
            acc.union_with(&vectors[j]);
            frames = merged;
            end_time = layer[j].time_span().1;
        } else {
            runs.push(start..j);
            acc = vectors[j].clone();
            start = j;
            frames = layer[j].frame_count();
            end_time = layer[j].time_span().1;
        }
    }
    runs.push(start..layer.len());
    Ok(runs)
}
