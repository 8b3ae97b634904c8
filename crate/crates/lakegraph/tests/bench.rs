mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use lakegraph::bench::{self, BenchReport, CacheState, CsrBaseline};
use lakegraph::engine::plan::music_plan;
use lakegraph::engine::{Direction, EdgeScanSpec, Side};
use lakegraph::gen::{self, GenSpec};
use lakegraph::store::{MemoryStore, ObjectStore};
use lakegraph_core::{AccumulatorStore, ActiveVertexSet, VertexId};
use proptest::prelude::*;

fn generated(seed: u64, dangling: f64) -> (Arc<dyn ObjectStore>, lakegraph::engine::Graph) {
    let store: Arc<dyn ObjectStore> = Arc::new(MemoryStore::new());
    let spec = GenSpec {
        dangling_rate: dangling,
        ..common::micro_spec(seed)
    };
    gen::generate(store.as_ref(), &spec).unwrap();
    let g = common::open(store.clone());
    (store, g)
}

#[test]
fn csr_holds_exactly_the_edge_multiset() {
    for (seed, edge_type) in [(1, "Knows"), (2, "HasCreator"), (3, "HasTag")] {
        let (_, g) = generated(seed, 0.2);
        let csr = CsrBaseline::build(&g, edge_type).unwrap();
        let mut want: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        for l in g.topology.lists_of_type(edge_type) {
            for &(s, t) in &l.entries {
                want.entry(s).or_default().push(t);
            }
        }
        assert_eq!(csr.edge_count(), want.values().map(Vec::len).sum::<usize>());
        for (s, mut ts) in want {
            let mut got = csr.neighbors(s).to_vec();
            got.sort();
            ts.sort();
            assert_eq!(got, ts, "{edge_type} neighbors of {s:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn csr_one_hop_equals_edge_scan(seed in 0..6u64, pick in prop::collection::vec(any::<prop::sample::Index>(), 0..40), par in 1..4usize) {
        let (_, g) = generated(seed, 0.1);
        let persons: Vec<VertexId> = g.all_vertices("Person").unwrap().iter().collect();
        let mut input = ActiveVertexSet::new();
        for i in pick {
            input.insert(*i.get(&persons));
        }
        let csr = CsrBaseline::build(&g, "Knows").unwrap();
        let spec = EdgeScanSpec::bare("Knows", Direction::Out, Side::Target);
        let scan = g.edge_scan(&input, &spec, &AccumulatorStore::new(), |_, _| true).unwrap();
        prop_assert_eq!(csr.one_hop(&input, par), scan.frontier);
    }
}

#[test]
fn sampled_frontiers_have_the_requested_size() {
    let (_, g) = generated(4, 0.0);
    let n = g.all_vertices("Comment").unwrap().len();
    for s in [1.0, 0.5, 0.01, 0.0] {
        let f = bench::sample_frontier(&g, "Comment", s, 9).unwrap();
        assert_eq!(f.len(), ((s * n as f64).round() as u64).max(1));
    }
}

#[test]
fn cache_states_give_the_same_rows_with_decreasing_store_io() {
    let (store, g) = generated(5, 0.0);
    let plan = music_plan("Music", "2010-01-01", "male");
    let runs: Vec<_> = CacheState::ALL
        .iter()
        .map(|&s| bench::query_in_state(&g, store.as_ref(), &plan, s).unwrap())
        .collect();
    assert!(runs.iter().all(|r| r.rows == runs[0].rows));
    let io = |s: CacheState| runs.iter().find(|r| r.state == s).unwrap().io.bytes_read;
    assert!(io(CacheState::StoreCold) > 0);
    assert_eq!(io(CacheState::DiskCold), 0);
    assert_eq!(io(CacheState::Hot), 0);
}

#[test]
fn report_csv_has_a_fixed_header() {
    let mut r = BenchReport::default();
    r.push("wall_time", "a,b", 1.5, "ms");
    assert_eq!(r.to_csv(), "metric,scenario,value,unit\nwall_time,\"a,b\",1.5,ms\n");
    assert_eq!(r.get("wall_time", "a,b"), Some(1.5));
}
