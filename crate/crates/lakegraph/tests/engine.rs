mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use lakegraph::cache::CacheConfig;
use lakegraph::engine::plan::{compile, music_plan, QueryPlan};
use lakegraph::engine::{algo, Direction, EdgeScanSpec, EngineConfig, Side};
use lakegraph::error::Error;
use lakegraph::gen::{self, SimpleGraph, SimpleLayout};
use lakegraph::reference::raw_graph;
use lakegraph::store::{MemoryStore, ObjectStore};
use lakegraph_core::value::parse_date;
use lakegraph_core::{AccumulatorStore, ActiveVertexSet, VertexId};
use proptest::prelude::*;

fn graph_of(edges: &[(u32, u32)], n: u32) -> Arc<MemoryStore> {
    let store = Arc::new(MemoryStore::new());
    let g = SimpleGraph {
        vertex_count: n,
        edges: edges.to_vec(),
    };
    gen::write_simple_graph(store.as_ref(), &g, &SimpleLayout::default()).unwrap();
    store
}

#[test]
fn pagerank_on_a_cycle_is_uniform() {
    let g = common::open(graph_of(&[(0, 1), (1, 2), (2, 0)], 3));
    let pr = algo::pagerank(&g, "V", "E", 0.85, 100, 1e-12).unwrap();
    assert!(pr.converged);
    for s in pr.scores.values() {
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn two_disjoint_edges_make_two_components() {
    let g = common::open(graph_of(&[(0, 1), (2, 3)], 4));
    let labels = algo::wcc(&g, "V", "E").unwrap();
    let distinct: std::collections::BTreeSet<_> = labels.values().collect();
    assert_eq!(distinct.len(), 2);
}

#[test]
fn pagerank_reports_non_convergence() {
    let g = common::open(graph_of(&[(0, 1), (1, 2), (2, 0), (0, 2)], 3));
    let pr = algo::pagerank(&g, "V", "E", 0.85, 2, 1e-15).unwrap();
    assert!(!pr.converged);
    assert_eq!(pr.iterations, 2);
}

#[test]
fn algorithms_match_reference_on_random_graphs() {
    for seed in 0..6u64 {
        let n = 200;
        let layout = SimpleLayout {
            vertex_files: 1 + seed as usize % 3,
            edge_files: 1 + seed as usize % 4,
            row_group_size: 64,
            seed,
        };
        let (store, _) = common::simple_store(seed, n, 600 + seed as usize * 50, layout);
        let g = common::open(store);
        let raw = raw_graph(&g.catalog, "V", "E").unwrap();

        let pr = algo::pagerank(&g, "V", "E", 0.85, 100, 1e-10).unwrap();
        let (want, _) = raw.pagerank(0.85, 100, 1e-10);
        let linf = pr.scores.iter().map(|(v, s)| (s - want[v]).abs()).fold(0.0, f64::max);
        assert!(linf < 1e-6, "seed {seed}: L-inf {linf}");

        assert_eq!(algo::wcc(&g, "V", "E").unwrap(), raw.wcc(), "wcc seed {seed}");
        assert_eq!(algo::cdlp(&g, "V", "E", 10).unwrap(), raw.cdlp(10), "cdlp seed {seed}");
        let src = raw.vertices[seed as usize * 7 % raw.vertices.len()];
        assert_eq!(algo::bfs(&g, "V", "E", src).unwrap(), raw.bfs(src), "bfs seed {seed}");
        assert_eq!(algo::lcc(&g, "V", "E").unwrap(), raw.lcc(), "lcc seed {seed}");
    }
}

#[test]
fn bfs_source_resolves_by_raw_key() {
    let g = common::open(graph_of(&[(0, 1), (1, 2)], 4));
    let key = lakegraph::topology::RawKey::Int(gen::simple_key(1));
    let v = g.find_vertex("V", &key).unwrap().unwrap();
    let levels = algo::bfs(&g, "V", "E", v).unwrap();
    let mut got: Vec<i64> = levels.values().copied().collect();
    got.sort();
    assert_eq!(got, vec![-1, -1, 0, 1]);
}

#[test]
fn music_plan_matches_join_oracle() {
    for seed in 0..5u64 {
        let spec = common::micro_spec(seed);
        let store: Arc<dyn ObjectStore> = Arc::new(MemoryStore::new());
        gen::generate(store.as_ref(), &spec).unwrap();
        let g = common::open(store.clone());
        let plan = music_plan("Music", "2010-01-01", "female");
        let run = g.run_plan(&plan).unwrap();
        let want = common::music_oracle(store, "Music", parse_date("2010-01-01").unwrap(), "female");
        assert!(!want.is_empty(), "seed {seed}: oracle found nothing");
        assert_eq!(common::counts(&run), want, "seed {seed}");
    }
}

#[test]
fn results_do_not_depend_on_parallelism_pruning_or_prefetch() {
    let spec = common::micro_spec(11);
    let store: Arc<dyn ObjectStore> = Arc::new(MemoryStore::new());
    gen::generate(store.as_ref(), &spec).unwrap();
    let plan = music_plan("Music", "2010-06-01", "male");
    let mut tables = Vec::new();
    for (par, prune, prefetch) in [(1, false, false), (8, true, true), (3, true, false), (2, false, true)] {
        let g = common::open_with(
            store.clone(),
            CacheConfig::default(),
            EngineConfig {
                parallelism: par,
                prune,
                prefetch,
            },
        );
        tables.push(g.run_plan(&plan).unwrap().table);
    }
    assert!(tables.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn tight_memory_budget_keeps_results() {
    let spec = common::micro_spec(4);
    let store: Arc<dyn ObjectStore> = Arc::new(MemoryStore::new());
    gen::generate(store.as_ref(), &spec).unwrap();
    let plan = music_plan("Music", "2010-01-01", "female");
    let roomy = common::open(store.clone()).run_plan(&plan).unwrap().table;
    let tight = common::open_with(
        store,
        CacheConfig {
            memory_budget: 2500,
            ..Default::default()
        },
        EngineConfig {
            parallelism: 2,
            ..Default::default()
        },
    );
    assert_eq!(tight.run_plan(&plan).unwrap().table, roomy);
    let s = tight.cache.stats();
    assert!(s.vertex_evictions + s.edge_evictions > 0, "{s:?}");
}

#[test]
fn zero_hop_plan_is_a_filter() {
    let store = graph_of(&[(0, 1)], 50);
    let g = common::open(store);
    let plan = QueryPlan::from_json(
        r#"{"source": {"type": "V", "where": [{"col": "w", "op": "<", "value": 30}]},
            "output": {"columns": ["id", "w"]}}"#,
    )
    .unwrap();
    let run = g.run_plan(&plan).unwrap();
    let want: Vec<i64> = (0..50)
        .filter(|&i| gen::simple_vertex_attrs(1, i).0 < 30)
        .map(gen::simple_key)
        .collect();
    let got: Vec<i64> = run.table.rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(got, want);
    assert_eq!(run.table.header, vec!["vid", "id", "w"]);
}

#[test]
fn vertex_map_calls_udf_once_per_active_vertex() {
    let store = graph_of(&[], 333);
    for par in 1..=8 {
        let g = common::open_with(
            store.clone(),
            CacheConfig::default(),
            EngineConfig {
                parallelism: par,
                ..Default::default()
            },
        );
        let all = g.all_vertices("V").unwrap();
        let calls = AtomicU64::new(0);
        let out = g
            .vertex_map(&all, &["color".to_string()], &AccumulatorStore::new(), |_, _| {
                calls.fetch_add(1, Ordering::Relaxed);
                true
            })
            .unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), all.len());
        assert_eq!(out.frontier, all);
    }
}

#[test]
fn in_direction_keeps_stored_roles() {
    let g = common::open(graph_of(&[(0, 1)], 2));
    let key_of = |i| {
        g.find_vertex("V", &lakegraph::topology::RawKey::Int(gen::simple_key(i)))
            .unwrap()
            .unwrap()
    };
    let (a, b) = (key_of(0), key_of(1));
    let mut input = ActiveVertexSet::new();
    input.insert(b);
    let seen = parking_lot::Mutex::new(Vec::new());
    let out = g
        .edge_scan(
            &input,
            &EdgeScanSpec::bare("E", Direction::In, Side::Source),
            &AccumulatorStore::new(),
            |e, _| {
                seen.lock().push((e.src.id, e.tgt.id));
                true
            },
        )
        .unwrap();
    assert_eq!(seen.into_inner(), vec![(a, b)]);
    assert_eq!(out.frontier.iter().collect::<Vec<_>>(), vec![a]);
}

#[test]
fn empty_frontier_scans_nothing() {
    let g = common::open(graph_of(&[(0, 1), (1, 2)], 3));
    let out = g
        .edge_scan(
            &ActiveVertexSet::new(),
            &EdgeScanSpec::bare("E", Direction::Out, Side::Target),
            &AccumulatorStore::new(),
            |_, _| true,
        )
        .unwrap();
    assert!(out.frontier.is_empty());
    assert_eq!(out.stats.udf_calls, 0);
}

#[test]
fn plan_errors_carry_locations() {
    let g = common::open(graph_of(&[(0, 1)], 2));
    let plan = QueryPlan::from_json(
        r#"{"source": {"type": "V", "where": [{"col": "nope", "op": "==", "value": 1}]},
            "hops": [{"edge": "E", "dir": "sideways", "frontier": "target"},
                     {"edge": "E", "dir": "out", "whereEdge": [{"col": "weight", "op": "~", "value": 1}],
                      "accum": [{"target": "neighbor", "name": "s", "kind": "SUM", "expr": "neighbor.color"}],
                      "frontier": "target"}],
            "output": {"columns": ["w"], "accums": ["missing"]}}"#,
    )
    .unwrap();
    let Err(Error::Plan(errors)) = compile(&g.catalog, &plan) else {
        panic!("plan should be rejected")
    };
    let joined = errors.join("\n");
    for loc in [
        "source.where[0]",
        "hops[0].dir",
        "hops[1].whereEdge[0]",
        "hops[1].accum[0]",
        "output.accums[0]",
    ] {
        assert!(joined.contains(loc), "missing {loc} in\n{joined}");
    }
}

fn brute_force(g: &SimpleGraph, active: &[bool], dir: Direction, side: Side) -> Vec<u32> {
    let mut out: Vec<u32> = g
        .edges
        .iter()
        .filter(|&&(s, t)| active[if dir == Direction::Out { s } else { t } as usize])
        .map(|&(s, t)| if side == Side::Source { s } else { t })
        .collect();
    out.sort();
    out.dedup();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn edge_scan_frontier_is_sound(
        seed in 0u64..1000,
        n in 1u32..60,
        m in 0usize..200,
        out_dir in any::<bool>(),
        to_source in any::<bool>(),
        mask in any::<u64>(),
    ) {
        let layout = SimpleLayout { vertex_files: 2, edge_files: 2, row_group_size: 8, seed };
        let (store, sg) = common::simple_store(seed, n, m, layout);
        let g = common::open(store);
        let raw = raw_graph(&g.catalog, "V", "E").unwrap();
        // Vertex i in the simple graph has key simple_key(i); map to ids.
        let ids: BTreeMap<i64, VertexId> = {
            let all = g.all_vertices("V").unwrap();
            let cols = vec!["id".to_string()];
            let keyed = parking_lot::Mutex::new(BTreeMap::new());
            g.vertex_map(&all, &cols, &AccumulatorStore::new(), |r, _| {
                keyed.lock().insert(r.at(0).unwrap().as_i64().unwrap(), r.id);
                false
            }).unwrap();
            keyed.into_inner()
        };
        prop_assert_eq!(raw.vertices.len(), n as usize);
        let active: Vec<bool> = (0..n).map(|i| mask >> (i % 64) & 1 == 1).collect();
        let mut input = ActiveVertexSet::new();
        for i in 0..n {
            if active[i as usize] {
                input.insert(ids[&gen::simple_key(i)]);
            }
        }
        let dir = if out_dir { Direction::Out } else { Direction::In };
        let side = if to_source { Side::Source } else { Side::Target };
        let mut spec = EdgeScanSpec::bare("E", dir, side);
        spec.edge_columns = vec!["weight".into()];
        let out = g.edge_scan(&input, &spec, &AccumulatorStore::new(), |e, _| {
            e.edge.get("weight").unwrap().as_i64().unwrap() % 3 != 0
        }).unwrap();
        let by_weight: Vec<(u32, u32)> = sg.edges.iter().enumerate()
            .filter(|(e, _)| gen::simple_edge_weight(seed, *e) % 3 != 0)
            .map(|(_, &x)| x)
            .collect();
        let filtered = SimpleGraph { vertex_count: n, edges: by_weight };
        let want: Vec<VertexId> = brute_force(&filtered, &active, dir, side)
            .into_iter()
            .map(|i| ids[&gen::simple_key(i)])
            .collect();
        prop_assert_eq!(out.frontier.iter().collect::<Vec<_>>(), want);
    }
}
