mod common;

use common::*;
use dgsnap_core::engine::{change_degrees, generate_layer, merge_boundaries};
use dgsnap_core::features::{link_stability, snapshot_indicators, vectorize};
use dgsnap_core::ingest::{induce_links, parse_tracking, DatasetConfig, LinkInducerConfig};
use dgsnap_core::model::{merge_snapshots, Snapshot, SnapshotId, SnapshotTree};
use dgsnap_core::{ChangeThresholds, Execution, FeatureConfig};
use proptest::prelude::*;
use rand::Rng;

fn base(frames: &[RawFrame]) -> SnapshotTree {
    SnapshotTree::build_layer_zero(
        to_frames(frames),
        0..frames.len(),
        &FeatureConfig::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn merge_is_associative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fs = random_sequence(&mut r, 3, 6, 0.3);
        let tree = base(&fs);
        let cfg = FeatureConfig::default();
        let [a, b, c] = [&tree.top()[0], &tree.top()[1], &tree.top()[2]];
        let id = SnapshotId::new(1, 0);
        let flat = merge_snapshots(&[a.clone(), b.clone(), c.clone()], id, &cfg).unwrap();
        let ab = merge_snapshots(&[a.clone(), b.clone()], id, &cfg).unwrap();
        let nested = merge_snapshots(&[ab, c.clone()], id, &cfg).unwrap();
        prop_assert_eq!(flat.node_union(), nested.node_union());
        prop_assert_eq!(flat.link_counts(), nested.link_counts());
        prop_assert_eq!(flat.time_span(), nested.time_span());
        let total: u32 = flat.link_counts().values().sum();
        prop_assert_eq!(total as usize, fs.iter().map(|f| f.links.len()).sum::<usize>());
    }

    #[test]
    fn merged_vector_is_or_of_parts(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fs = random_sequence(&mut r, 4, 8, 0.2);
        let tree = base(&fs);
        let u = universe(8);
        let merged = merge_snapshots(tree.top(), SnapshotId::new(1, 0), &FeatureConfig::default()).unwrap();
        let mut or = vectorize(&tree.top()[0], &u).unwrap();
        for s in &tree.top()[1..] {
            or.union_with(&vectorize(s, &u).unwrap());
        }
        prop_assert_eq!(vectorize(&merged, &u).unwrap(), or);
    }

    #[test]
    fn link_stability_strictly_decreasing(a in 0.0f64..50.0, b in 0.0f64..50.0, d in 0.0f64..110.0, bump in 1e-3f64..10.0) {
        let base = link_stability(a, b, d, EPS).unwrap();
        prop_assert!(link_stability(a + bump, b, d, EPS).unwrap() < base);
        prop_assert!(link_stability(a, b + bump, d, EPS).unwrap() < base);
        prop_assert!(link_stability(a, b, d + bump, EPS).unwrap() < base);
    }

    #[test]
    fn proximity_links_symmetric_and_loop_free(seed in any::<u64>(), radius in 1.0f64..40.0, cross in any::<bool>()) {
        let mut r = rng(seed);
        let fs: Vec<_> = (0..3).map(|i| random_frame(&mut r, i as f64, 10, 0)).collect();
        let u = universe(10);
        let cfg = LinkInducerConfig { proximity_radius: radius, cross_team_only: cross, ..Default::default() };
        let out = induce_links(&fs.iter().map(to_graph).collect::<Vec<_>>(), &u, &cfg).unwrap();
        for (raw, f) in fs.iter().zip(&out) {
            for (&a, &pa) in &raw.nodes {
                for (&b, &pb) in &raw.nodes {
                    if a >= b { continue; }
                    let linked = f.links().iter().any(|l| (l.a(), l.b()) == (a, b));
                    let close = ref_distance((pa.0, pa.1), (pb.0, pb.1)) <= radius;
                    let teams_ok = !cross || (a % 2) != (b % 2);
                    prop_assert_eq!(linked, close && teams_ok);
                }
            }
            prop_assert!(f.links().iter().all(|l| l.a() < l.b()));
        }
    }

    #[test]
    fn derived_speed_matches_constant_velocity(vx in -8.0f64..8.0, vy in -4.0f64..4.0, dt in 0.05f64..1.0) {
        let mut csv = String::from("timestamp,player_id,team,x,y\n");
        for i in 0..20 {
            let t = i as f64 * dt;
            csv += &format!("{t},A,X,{},{}\n", 47.0 + vx * t * 0.1, 25.0 + vy * t * 0.1);
        }
        let d = parse_tracking(csv.as_bytes(), &DatasetConfig::default()).unwrap();
        let v = 0.1 * (vx * vx + vy * vy).sqrt();
        prop_assert_eq!(d.frames[0].nodes()[0].speed, 0.0);
        for f in &d.frames[1..] {
            prop_assert!((f.nodes()[0].speed - v).abs() < 1e-9, "{} vs {}", f.nodes()[0].speed, v);
        }
    }

    #[test]
    fn change_degrees_reflexive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fs = random_sequence(&mut r, 2, 8, 0.0);
        let tree = base(&fs);
        let u = universe(8);
        for s in tree.top() {
            let d = change_degrees(s, s, &u).unwrap();
            prop_assert_eq!(d.node_change, 0.0);
            prop_assert_eq!(d.link_change, 0.0);
        }
    }

    #[test]
    fn looser_gates_never_produce_more_snapshots(seed in any::<u64>()) {
        let mut r = rng(seed);
        let len = r.random_range(1..=100);
        let fs = random_sequence(&mut r, len, 6, 0.5);
        let tree = base(&fs);
        let tight = random_thresholds(&mut r);
        let loose = ChangeThresholds {
            node_change_max: tight.node_change_max + r.random_range(0.0..0.5),
            link_change_max: tight.link_change_max + r.random_range(0.0..0.5),
            time_gap_max: tight.time_gap_max + r.random_range(0.0..0.5),
            frame_count_max: match tight.frame_count_max {
                Some(c) if r.random_bool(0.7) => Some(c + r.random_range(0..4)),
                _ => None,
            },
        };
        let u = universe(6);
        let nt = merge_boundaries(tree.top(), &tight, &u, Execution::Sequential).unwrap().len();
        let nl = merge_boundaries(tree.top(), &loose, &u, Execution::Sequential).unwrap().len();
        prop_assert!(nl <= nt, "loose {} > tight {}", nl, nt);
    }

    #[test]
    fn second_layer_matches_reference(seed in any::<u64>()) {
        let mut r = rng(seed);
        let len = r.random_range(2..=40);
        let fs = random_sequence(&mut r, len, 6, 0.5);
        let tree = base(&fs);
        let u = universe(6);
        let cfg = FeatureConfig::default();
        let th1 = random_thresholds(&mut r);
        let l1 = generate_layer(tree.top(), &th1, &u, &cfg, 1).unwrap();
        let items: Vec<Vec<RawFrame>> = l1.snapshots.iter().map(|s| fs[s.frame_range()].to_vec()).collect();
        let th2 = random_thresholds(&mut r);
        let l2 = generate_layer(&l1.snapshots, &th2, &u, &cfg, 2).unwrap();
        let got: Vec<_> = l2.parents.iter().map(|p| (p.start, p.end)).collect();
        prop_assert_eq!(got, ref_segment(&items, &th2, 6));
    }

    #[test]
    fn indicators_invariant_under_relabeling(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fs = random_sequence(&mut r, 4, 8, 0.2);
        let mut perm: Vec<u32> = (0..8).collect();
        for i in (1..8).rev() {
            let j = r.random_range(0..=i);
            perm.swap(i, j);
        }
        let relabeled: Vec<RawFrame> = fs.iter().map(|f| RawFrame {
            t: f.t,
            nodes: f.nodes.iter().map(|(&o, &v)| (perm[o as usize], v)).collect(),
            links: f.links.iter().map(|&(a, b)| {
                let (x, y) = (perm[a as usize], perm[b as usize]);
                (x.min(y), x.max(y))
            }).collect(),
        }).collect();
        let cfg = FeatureConfig::default();
        let a = snapshot_indicators(&merged(&fs), &cfg).unwrap();
        let b = snapshot_indicators(&merged(&relabeled), &cfg).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
        prop_assert!(close(a.avg_node_speed, b.avg_node_speed));
        prop_assert!(close(a.avg_node_degree, b.avg_node_degree));
        prop_assert!(close(a.avg_link_distance, b.avg_link_distance));
        prop_assert!(close(a.avg_link_stability, b.avg_link_stability));
        prop_assert!(close(a.graph_stability, b.graph_stability));
    }
}

fn merged(fs: &[RawFrame]) -> Snapshot {
    let tree = base(fs);
    merge_snapshots(tree.top(), SnapshotId::new(1, 0), &FeatureConfig::default()).unwrap()
}
