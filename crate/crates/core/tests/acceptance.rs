//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use dgsnap_core::engine::{change_degrees, generate_layer};
use dgsnap_core::features::{frame_vectors, graph_stability, snapshot_indicators, vectorize};
use dgsnap_core::ingest::{load_dataset, DatasetConfig};
use dgsnap_core::model::{merge_snapshots, SnapshotId, SnapshotTree};
use dgsnap_core::projection::{embed, ProjectionConfig};
use dgsnap_core::session::{GenerationSession, SessionLog};
use dgsnap_core::{ChangeThresholds, Error, Execution, FeatureConfig};
use rand::Rng;
use rand_distr::{Distribution, Normal};

const ORACLE_TOL: f64 = 1e-9;
const ORACLE_BUDGET: Duration = Duration::from_secs(5);
const GREEDY_BUDGET: Duration = Duration::from_secs(30);
const INGEST_BUDGET: Duration = Duration::from_secs(10);
const GENERATE_BUDGET: Duration = Duration::from_secs(2);
const TSNE_BUDGET: Duration = Duration::from_secs(60);
const PURITY_MIN: f64 = 0.9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("vector shape (21 nodes -> 231)", vector_shape),
        ("stability and change-degree oracle", formula_oracle),
        ("greedy merge oracle", greedy_oracle),
        ("session conservation", conservation),
        ("scale check", scale_check),
        ("t-SNE sanity", tsne_sanity),
        ("degenerate inputs", degenerate_inputs),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ORACLE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn tree_of(fs: &[RawFrame]) -> SnapshotTree {
    SnapshotTree::build_layer_zero(to_frames(fs), 0..fs.len(), &FeatureConfig::default()).unwrap()
}

fn vector_shape() -> Outcome {
    let mut r = rng(21);
    let u = universe(21);
    let mut f = random_frame(&mut r, 0.0, 21, 30);
    for o in 0..21 {
        f.nodes.entry(o).or_insert((1.0, 1.0, 0.0));
    }
    let tree = tree_of(&[f.clone()]);
    let v = vectorize(&tree.top()[0], &u).map_err(|e| e.to_string())?;
    ensure(v.len() == 231, || format!("length {}", v.len()))?;
    let (nodes, links) = ref_vectors(&[f], 21);
    ensure(nodes.len() + links.len() == 231, || {
        "reference length".into()
    })?;
    let mut dense = nodes;
    dense.extend(links);
    ensure(v.to_dense() == dense, || {
        "hot encoding differs from reference".into()
    })?;
    Ok("len 231 = 21 nodes + 210 links".into())
}

fn formula_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = FeatureConfig::default();
    let u = universe(10);
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut track = |a: f64, b: f64, what: &str, i: usize| -> Result<(), String> {
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
        ensure(close(a, b), || {
            format!("case {i}: {what} engine {a} vs reference {b}")
        })
    };
    for i in 0..1000 {
        let la = r.random_range(1..=4);
        let lb = r.random_range(1..=4);
        let mut fs: Vec<RawFrame> = Vec::new();
        let mut t = 0.0;
        for _ in 0..la + lb {
            t += r.random_range(0.1..1.0);
            fs.push(random_frame(&mut r, t, 10, 20));
        }
        let tree = tree_of(&fs);
        let s1 = merge_snapshots(&tree.top()[..la], SnapshotId::new(1, 0), &cfg).unwrap();
        let s2 = merge_snapshots(&tree.top()[la..], SnapshotId::new(1, 1), &cfg).unwrap();
        let (r1, r2) = (&fs[..la], &fs[la..]);

        for (s, raw) in [(&s1, r1), (&s2, r2)] {
            let ind = snapshot_indicators(s, &cfg).map_err(|e| e.to_string())?;
            for (k, f) in raw.iter().enumerate() {
                let stab: Vec<f64> = f.links.iter().map(|&l| ref_link_stability(f, l)).collect();
                let mean = if stab.is_empty() {
                    0.0
                } else {
                    stab.iter().sum::<f64>() / stab.len() as f64
                };
                track(
                    ind.per_frame.avg_link_stability[k],
                    mean,
                    "frame link stability",
                    i,
                )?;
                track(
                    ind.per_frame.graph_stability[k],
                    ref_graph_stability(std::slice::from_ref(f)),
                    "frame graph stability",
                    i,
                )?;
            }
            track(
                graph_stability(s, &cfg).unwrap(),
                ref_graph_stability(raw),
                "graph stability",
                i,
            )?;
        }
        let d = change_degrees(&s1, &s2, &u).map_err(|e| e.to_string())?;
        let (nc, lc, gap) = ref_change(r1, r2, 10);
        track(d.node_change, nc, "node change", i)?;
        track(d.link_change, lc, "link change", i)?;
        track(d.time_gap, gap, "time gap", i)?;
    }
    let took = start.elapsed();
    ensure(took < ORACLE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "1000 snapshot pairs, max rel err {worst:.1e}, {took:.2?}"
    ))
}

fn greedy_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = FeatureConfig::default();
    let u = universe(6);
    let mut r = rng(2);
    let mut snapshots = 0;
    for i in 0..1000 {
        let len = r.random_range(1..=50);
        let fs = random_sequence(&mut r, len, 6, 0.5);
        let th = random_thresholds(&mut r);
        let tree = tree_of(&fs);
        let out = generate_layer(tree.top(), &th, &u, &cfg, 1).map_err(|e| e.to_string())?;
        let got: Vec<(usize, usize)> = out.parents.iter().map(|p| (p.start, p.end)).collect();
        let items: Vec<Vec<RawFrame>> = fs.iter().map(|f| vec![f.clone()]).collect();
        let want = ref_segment(&items, &th, 6);
        ensure(got == want, || {
            format!("sequence {i}: engine {got:?} vs reference {want:?} under {th:?}")
        })?;
        snapshots += got.len();
    }
    let took = start.elapsed();
    ensure(took < GREEDY_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("1000 sequences, {snapshots} snapshots, {took:.2?}"))
}

/// Independent structural checks on a tree, without `check_invariants`.
fn audit(tree: &SnapshotTree) -> Result<(), String> {
    let base_ts: Vec<f64> = tree.layers()[0]
        .iter()
        .flat_map(|s| s.frames().iter().map(|f| f.timestamp()))
        .collect();
    for (k, layer) in tree.layers().iter().enumerate() {
        let ts: Vec<f64> = layer
            .iter()
            .flat_map(|s| s.frames().iter().map(|f| f.timestamp()))
            .collect();
        ensure(ts == base_ts, || {
            format!("layer {k} does not conserve timestamps")
        })?;
        let mut next = tree.selection().start;
        for s in layer {
            ensure(s.frame_range().start == next && s.frame_count() > 0, || {
                format!("layer {k} not contiguous at {}", s.id())
            })?;
            next = s.frame_range().end;
            let first = s.frames()[0].timestamp();
            let last = s.frames()[s.frame_count() - 1].timestamp();
            ensure(s.time_span() == (first, last), || {
                format!("{} time span", s.id())
            })?;
        }
        ensure(next == tree.selection().end, || {
            format!("layer {k} stops early")
        })?;
        if k == 0 {
            continue;
        }
        let mut child_of: BTreeMap<SnapshotId, usize> = BTreeMap::new();
        for s in layer {
            let parents = &tree.lineage()[&s.id()];
            for p in parents {
                *child_of.entry(*p).or_default() += 1;
            }
            let covered: usize = parents
                .iter()
                .map(|p| tree.snapshot(*p).unwrap().frame_count())
                .sum();
            ensure(covered == s.frame_count(), || {
                format!("{} lineage does not cover its frames", s.id())
            })?;
        }
        let below = &tree.layers()[k - 1];
        ensure(
            below.iter().all(|s| child_of.get(&s.id()) == Some(&1))
                && child_of.len() == below.len(),
            || format!("layer {} lineage is not single-child", k - 1),
        )?;
    }
    tree.check_invariants()
}

fn conservation() -> Outcome {
    let u = universe(6);
    let mut r = rng(3);
    let (mut ops, mut refused) = (0usize, 0usize);
    for i in 0..10_000 {
        let len = r.random_range(1..=30);
        let fs = random_sequence(&mut r, len, 6, 0.5);
        let frames = to_frames(&fs);
        let lo = r.random_range(0..len);
        let hi = r.random_range(lo + 1..=len);
        let mut s =
            GenerationSession::new(frames.clone(), u.clone(), lo..hi, &FeatureConfig::default())
                .map_err(|e| format!("sequence {i}: {e}"))?;
        for _ in 0..r.random_range(1..=8) {
            let th = random_thresholds(&mut r);
            let top = s.tree().top_index();
            let result = match r.random_range(0..10) {
                0..=4 => s.generate(top, th).map(drop),
                5..=6 => s.delete_top(),
                7..=8 => s.regenerate_top(th).map(drop),
                _ => s.generate(top + 1, th).map(drop),
            };
            ops += 1;
            match result {
                Ok(()) => {}
                Err(Error::CannotDeleteBase) if top == 0 => refused += 1,
                Err(Error::LayerNotTop { .. }) => refused += 1,
                Err(e) => return Err(format!("sequence {i}: unexpected error {e}")),
            }
            audit(s.tree()).map_err(|e| format!("sequence {i}: {e}"))?;
        }
        let json = serde_json::to_string(&s.log_record()).unwrap();
        let log: SessionLog = serde_json::from_str(&json).unwrap();
        let again = GenerationSession::replay(frames, u.clone(), &log)
            .map_err(|e| format!("sequence {i}: replay {e}"))?;
        ensure(again.tree().digest() == s.tree().digest(), || {
            format!("sequence {i}: replay digest differs")
        })?;
        ensure(again.history() == s.history(), || {
            format!("sequence {i}: replay history differs")
        })?;
    }
    Ok(format!(
        "10000 sequences, {ops} ops ({refused} refused as documented), all replays identical"
    ))
}

/// Random-walk tracking CSV: `frames` frames at `dt` seconds, five players per team.
fn synthetic_game(frames: usize, dt: f64, seed: u64) -> String {
    let mut r = rng(seed);
    let mut pos: Vec<(f64, f64)> = (0..10)
        .map(|_| (r.random_range(10.0..84.0), r.random_range(5.0..45.0)))
        .collect();
    let mut out = String::with_capacity(frames * 10 * 32);
    out.push_str("timestamp,player_id,team,x,y\n");
    for i in 0..frames {
        let t = i as f64 * dt;
        for (p, (x, y)) in pos.iter_mut().enumerate() {
            *x = (*x + r.random_range(-1.5..1.5)).clamp(0.0, 94.0);
            *y = (*y + r.random_range(-1.5..1.5)).clamp(0.0, 50.0);
            let team = if p < 5 { "HOME" } else { "AWAY" };
            let _ = writeln!(out, "{t:.1},p{p},{team},{x:.3},{y:.3}");
        }
    }
    out
}

fn scale_check() -> Outcome {
    let csv = synthetic_game(8000, 0.3, 4);
    let cfg = DatasetConfig::default();
    let start = Instant::now();
    let data = load_dataset(csv.as_bytes(), None::<&[u8]>, &cfg).map_err(|e| e.to_string())?;
    let frames = to_arc(data.frames);
    let tree = SnapshotTree::build_layer_zero(frames.clone(), 0..frames.len(), &cfg.features)
        .map_err(|e| e.to_string())?;
    let vectors =
        frame_vectors(&frames, &data.universe, Execution::default()).map_err(|e| e.to_string())?;
    let ingest = start.elapsed();
    ensure(tree.top().len() == 8000 && vectors.len() == 8000, || {
        "frame count".into()
    })?;
    ensure(ingest < INGEST_BUDGET, || {
        format!("ingest + features took {ingest:?}")
    })?;

    let th = ChangeThresholds::new(0.2, 0.3, 1.0, Some(64)).unwrap();
    let start = Instant::now();
    let layer = generate_layer(tree.top(), &th, &data.universe, &cfg.features, 1)
        .map_err(|e| e.to_string())?;
    let gen = start.elapsed();
    ensure(gen < GENERATE_BUDGET, || {
        format!("generate_layer took {gen:?}")
    })?;
    let ratio = 8000.0 / layer.snapshots.len() as f64;
    Ok(format!(
        "ingest + features {ingest:.2?}, generate_layer {gen:.2?}, 8000 -> {} snapshots (ratio {ratio:.2})",
        layer.snapshots.len()
    ))
}

fn to_arc(frames: Vec<dgsnap_core::model::TimestampedGraph>) -> dgsnap_core::model::Frames {
    frames.into()
}

/// Gaussian blobs: `per` points around each of `centers`, unit spread.
fn blobs(centers: &[Vec<f64>], per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            data.push(center.iter().map(|m| m + noise.sample(&mut r)).collect());
            labels.push(c);
        }
    }
    (data, labels)
}

fn knn_purity(coords: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let n = coords.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                (
                    (coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2),
                    j,
                )
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        total += d[..k]
            .iter()
            .filter(|&&(_, j)| labels[j] == labels[i])
            .count() as f64
            / k as f64;
    }
    total / n as f64
}

fn tsne_sanity() -> Outcome {
    let dims = 10;
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|c| (0..dims).map(|d| if d == c { 8.0 } else { 0.0 }).collect())
        .collect();
    let (data, labels) = blobs(&centers, 50, 5);
    let cfg = ProjectionConfig {
        seed: 7,
        ..Default::default()
    };
    let a = embed(&data, &cfg, Execution::default()).map_err(|e| e.to_string())?;
    let b = embed(&data, &cfg, Execution::default()).map_err(|e| e.to_string())?;
    let purity = knn_purity(&a.coords, &labels, 10);
    ensure(purity >= PURITY_MIN, || format!("purity {purity:.3}"))?;
    ensure(a.kl_final <= a.kl_initial, || {
        format!("KL rose {} -> {}", a.kl_initial, a.kl_final)
    })?;
    let bits = |e: &dgsnap_core::projection::Embedding| -> Vec<u64> {
        e.coords
            .iter()
            .flat_map(|c| [c[0].to_bits(), c[1].to_bits()])
            .collect()
    };
    ensure(bits(&a) == bits(&b), || "same-seed runs differ".into())?;

    let centers: Vec<Vec<f64>> = (0..4)
        .map(|c| {
            (0..20)
                .map(|d| if d % 4 == c { 6.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let (big, _) = blobs(&centers, 500, 6);
    let start = Instant::now();
    embed(&big, &ProjectionConfig::default(), Execution::default()).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure(took < TSNE_BUDGET, || format!("2000 points took {took:?}"))?;
    Ok(format!(
        "purity {purity:.3}, KL {:.3} -> {:.3}, bit-identical, 2000 pts x 500 it in {took:.2?}",
        a.kl_initial, a.kl_final
    ))
}

fn expect_err<T>(r: Result<T, Error>, code: &str, what: &str) -> Result<(), String> {
    match r {
        Err(e) if e.code() == code => Ok(()),
        Err(e) => Err(format!("{what}: expected {code}, got {}", e.code())),
        Ok(_) => Err(format!("{what}: expected {code}, got Ok")),
    }
}

fn degenerate_inputs() -> Outcome {
    let cfg = FeatureConfig::default();
    let u = universe(6);
    let mut r = rng(7);

    // Frames without links.
    let mut bare = random_sequence(&mut r, 12, 6, 0.0);
    for f in &mut bare {
        f.links.clear();
    }
    let tree = tree_of(&bare);
    for s in tree.top() {
        let ind = s.indicators();
        ensure(
            ind.avg_link_distance == 0.0
                && ind.graph_stability == 0.0
                && ind.avg_node_degree == 0.0,
            || "empty-link indicators".into(),
        )?;
    }
    let loose = ChangeThresholds::new(10.0, 10.0, 10.0, None).unwrap();
    let out = generate_layer(tree.top(), &loose, &u, &cfg, 1).map_err(|e| e.to_string())?;
    ensure(out.snapshots.len() == 1, || {
        "empty-link frames did not merge".into()
    })?;
    let d = change_degrees(&tree.top()[0], &tree.top()[1], &u).unwrap();
    ensure(d.link_change == 0.0, || "link change without links".into())?;

    // Single-frame selection.
    let fs = random_sequence(&mut r, 10, 6, 0.3);
    let mut s =
        GenerationSession::new(to_frames(&fs), u.clone(), 4..5, &cfg).map_err(|e| e.to_string())?;
    s.generate(0, loose).map_err(|e| e.to_string())?;
    ensure(
        s.tree().top().len() == 1 && s.tree().top()[0].frame_range() == (4..5),
        || "single frame layer".into(),
    )?;
    expect_err(
        embed(
            &[vec![0.0; 3]],
            &ProjectionConfig::default(),
            Execution::default(),
        ),
        "TooFewPoints",
        "single point projection",
    )?;

    // Zero thresholds: strictly increasing timestamps never merge.
    let zero = ChangeThresholds::new(0.0, 0.0, 0.0, None).unwrap();
    let tree = tree_of(&fs);
    let out = generate_layer(tree.top(), &zero, &u, &cfg, 1).map_err(|e| e.to_string())?;
    ensure(out.snapshots.len() == fs.len(), || {
        "zero thresholds merged frames".into()
    })?;
    let cap = ChangeThresholds::new(10.0, 10.0, 10.0, Some(1)).unwrap();
    let out = generate_layer(tree.top(), &cap, &u, &cfg, 1).map_err(|e| e.to_string())?;
    ensure(out.snapshots.len() == fs.len(), || {
        "frame cap of 1 merged frames".into()
    })?;

    // Boundary equality merges, anything tighter splits.
    let frame = |t: f64, nodes: &[u32], links: &[(u32, u32)]| RawFrame {
        t,
        nodes: nodes
            .iter()
            .map(|&o| (o, (o as f64 * 5.0, 10.0, 1.0)))
            .collect(),
        links: links.iter().copied().collect(),
    };
    let pair = [
        frame(0.0, &[0, 1, 2, 3], &[(0, 1), (1, 2)]),
        frame(0.5, &[0, 1, 2, 4, 5], &[(0, 1), (2, 4)]),
    ];
    let tree = tree_of(&pair);
    let d = change_degrees(&tree.top()[0], &tree.top()[1], &u).unwrap();
    ensure(
        (d.node_change, d.link_change, d.time_gap) == (0.75, 1.0, 0.5),
        || format!("fixture degrees {d:?}"),
    )?;
    let exact = ChangeThresholds::new(0.75, 1.0, 0.5, Some(2)).unwrap();
    ensure(
        generate_layer(tree.top(), &exact, &u, &cfg, 1)
            .unwrap()
            .snapshots
            .len()
            == 1,
        || "equality did not merge".into(),
    )?;
    for tighter in [
        ChangeThresholds::new(0.7499, 1.0, 0.5, Some(2)),
        ChangeThresholds::new(0.75, 0.9999, 0.5, Some(2)),
        ChangeThresholds::new(0.75, 1.0, 0.4999, Some(2)),
        ChangeThresholds::new(0.75, 1.0, 0.5, Some(1)),
    ] {
        let th = tighter.unwrap();
        ensure(
            generate_layer(tree.top(), &th, &u, &cfg, 1)
                .unwrap()
                .snapshots
                .len()
                == 2,
            || format!("{th:?} merged"),
        )?;
    }

    // Documented errors.
    expect_err(
        SnapshotTree::build_layer_zero(to_frames(&fs), 5..20, &cfg),
        "SelectionOutOfRange",
        "selection past end",
    )?;
    expect_err(
        SnapshotTree::build_layer_zero(to_frames(&fs), 3..3, &cfg),
        "EmptyDataset",
        "empty selection",
    )?;
    expect_err(
        ChangeThresholds::new(-0.1, 0.0, 0.0, None),
        "InvalidThresholds",
        "negative threshold",
    )?;
    expect_err(
        ChangeThresholds::new(f64::NAN, 0.0, 0.0, None),
        "InvalidThresholds",
        "NaN threshold",
    )?;
    expect_err(
        ChangeThresholds::new(0.1, 0.0, 0.0, Some(0)),
        "InvalidThresholds",
        "zero frame cap",
    )?;
    let mut s = GenerationSession::new(to_frames(&fs), u.clone(), 0..10, &cfg).unwrap();
    expect_err(s.delete_top(), "CannotDeleteBase", "delete base")?;
    expect_err(
        s.regenerate_top(loose),
        "CannotDeleteBase",
        "regenerate base",
    )?;
    expect_err(
        s.generate(1, loose),
        "LayerNotTop",
        "generate from missing layer",
    )?;
    expect_err(
        generate_layer(&[], &loose, &u, &cfg, 1),
        "EmptyLayer",
        "empty layer",
    )?;
    expect_err(
        change_degrees(&tree.top()[0], &tree.top()[1], &universe(3)),
        "UniverseMismatch",
        "small universe",
    )?;
    expect_err(
        dgsnap_core::ingest::parse_tracking(
            "timestamp,player_id,team,x,y\n".as_bytes(),
            &DatasetConfig::default(),
        ),
        "EmptyDataset",
        "empty csv",
    )?;
    Ok("empty links, single frame, zero thresholds, boundary equality, documented errors".into())
}
