#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use lakegraph::cache::CacheConfig;
use lakegraph::catalog::Catalog;
use lakegraph::engine::plan::PlanRun;
use lakegraph::engine::{EngineConfig, Graph};
use lakegraph::gen::{self, GenSpec, SimpleGraph, SimpleLayout};
use lakegraph::lgc;
use lakegraph::store::{MemoryStore, ObjectStore};
use lakegraph::topology::StartupConfig;
use lakegraph_core::Value;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn open_with(store: Arc<dyn ObjectStore>, cache: CacheConfig, cfg: EngineConfig) -> Graph {
    Graph::open(
        store,
        Arc::new(MemoryStore::new()),
        &StartupConfig::default(),
        cache,
        cfg,
    )
    .unwrap()
    .0
}

pub fn open(store: Arc<dyn ObjectStore>) -> Graph {
    open_with(store, CacheConfig::default(), EngineConfig::default())
}

pub fn simple_store(seed: u64, n: u32, m: usize, layout: SimpleLayout) -> (Arc<MemoryStore>, SimpleGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gen::random_graph(&mut rng, n, m);
    let store = Arc::new(MemoryStore::new());
    gen::write_simple_graph(store.as_ref(), &g, &layout).unwrap();
    (store, g)
}

pub fn micro_spec(seed: u64) -> GenSpec {
    GenSpec {
        person_count: 40 + seed % 50,
        comment_count: 300 + (seed * 37) % 400,
        tag_count: 12,
        attribute_width: 1,
        payload_len: 4,
        files_per_table: 1 + (seed % 3) as usize,
        row_group_size: 32 + (seed % 5) as usize * 16,
        sort_edges_by_src: seed.is_multiple_of(2),
        knows_max_degree: 8,
        dangling_rate: 0.0,
        seed,
    }
}

fn table(store: &dyn ObjectStore, catalog: &Catalog, name: &str, cols: &[&str]) -> Vec<Vec<Value>> {
    let mut rows = Vec::new();
    for f in catalog.registry.files_of(name) {
        let path = &catalog.registry.entry(f).unwrap().path;
        let footer = lgc::read_footer(store, path).unwrap();
        let columns: Vec<Vec<Value>> = cols
            .iter()
            .map(|c| lgc::read_column(store, path, &footer, c).unwrap())
            .collect();
        for i in 0..footer.row_count() as usize {
            rows.push(columns.iter().map(|c| c[i].clone()).collect());
        }
    }
    rows
}

/// Join-and-count over the raw tables: for every (comment, person, date)
/// creator row whose comment carries a tag named `tag`, whose date is after
/// `after` and whose person has `gender`, count one for the person.
pub fn music_oracle(store: Arc<dyn ObjectStore>, tag: &str, after: i32, gender: &str) -> BTreeMap<i64, i64> {
    let catalog = Catalog::load(store.clone()).unwrap();
    let store = store.as_ref();
    let tags: HashSet<String> = table(store, &catalog, "tag", &["id", "name"])
        .into_iter()
        .filter(|r| r[1] == Value::Str(tag.into()))
        .map(|r| r[0].as_str().unwrap().to_string())
        .collect();
    let tagged: HashSet<i64> = table(store, &catalog, "has_tag", &["comment", "tag"])
        .into_iter()
        .filter(|r| tags.contains(r[1].as_str().unwrap()))
        .map(|r| r[0].as_i64().unwrap())
        .collect();
    let genders: HashMap<i64, String> = table(store, &catalog, "person", &["id", "gender"])
        .into_iter()
        .map(|r| (r[0].as_i64().unwrap(), r[1].as_str().unwrap().to_string()))
        .collect();
    let mut out = BTreeMap::new();
    for r in table(store, &catalog, "has_creator", &["comment", "person", "date"]) {
        let (c, p) = (r[0].as_i64().unwrap(), r[1].as_i64().unwrap());
        let Value::Date32(d) = r[2] else { panic!("date column") };
        if tagged.contains(&c) && d > after && genders.get(&p).map(String::as_str) == Some(gender) {
            *out.entry(p).or_insert(0) += 1;
        }
    }
    out
}

/// `id -> @sum` from a result table with columns `vid,id,@sum`.
pub fn counts(run: &PlanRun) -> BTreeMap<i64, i64> {
    run.table
        .rows
        .iter()
        .map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect()
}

/// A family of plans over the generated social graph, varied by `case`.
/// Covers both directions, scan-side and neighbor attributes, edge
/// predicates and every accumulator kind.
pub fn plan_suite(case: u64) -> lakegraph::engine::plan::QueryPlan {
    let gender = if case.is_multiple_of(2) { "female" } else { "male" };
    let year = 2010 + case % 3;
    let text = match case % 4 {
        0 => return lakegraph::engine::plan::music_plan(&gen::tag_name(case % 5), &format!("{year}-03-01"), gender),
        1 => format!(
            r#"{{
  "source": {{"type": "Person", "where": [{{"col": "gender", "op": "==", "value": "{gender}"}}]}},
  "hops": [
    {{"edge": "Knows", "dir": "out", "frontier": "target",
      "accum": [
        {{"target": "neighbor", "name": "w", "kind": "SUM", "expr": "0.1"}},
        {{"target": "neighbor", "name": "best", "kind": "MAX", "expr": "scanside.firstName"}},
        {{"target": "neighbor", "name": "young", "kind": "MIN", "expr": "scanside.birthday"}}
      ]}},
    {{"edge": "Knows", "dir": "in", "frontier": "source",
      "whereNeighbor": [{{"col": "birthday", "op": ">", "value": "1975-01-01"}}],
      "accum": [
        {{"target": "scanside", "name": "n", "kind": "COUNT", "expr": "1"}},
        {{"target": "scanside", "name": "g", "kind": "MAPCOUNT", "expr": "neighbor.gender"}},
        {{"target": "neighbor", "name": "w", "kind": "SUM", "expr": "0.3"}}
      ]}}
  ],
  "output": {{"columns": ["id", "firstName"], "accums": ["w", "best", "young", "n", "g"]}}
}}"#
        ),
        2 => format!(
            r#"{{
  "source": {{"type": "Comment", "where": [{{"col": "length", "op": "<", "value": {len}}}]}},
  "hops": [
    {{"edge": "HasCreator", "dir": "out", "frontier": "target",
      "whereEdge": [{{"col": "date", "op": ">=", "value": "Date('{year}-06-01')"}}],
      "whereNeighbor": [{{"col": "gender", "op": "==", "value": "{gender}"}}],
      "accum": [
        {{"target": "neighbor", "name": "len", "kind": "SUM", "expr": "scanside.length"}},
        {{"target": "neighbor", "name": "first", "kind": "MIN", "expr": "date"}},
        {{"target": "scanside", "name": "seen", "kind": "OR", "expr": "true"}}
      ]}}
  ],
  "output": {{"columns": ["id", "gender"], "accums": ["len", "first"]}}
}}"#,
            len = 400 + (case * 97) % 1500
        ),
        _ => format!(
            r#"{{
  "source": {{"type": "Person", "where": [{{"col": "birthday", "op": "<", "value": "{by}-01-01"}}]}},
  "hops": [
    {{"edge": "HasCreator", "dir": "in", "frontier": "source",
      "whereNeighbor": [{{"col": "length", "op": ">", "value": {len}}}],
      "accum": [
        {{"target": "scanside", "name": "posts", "kind": "COUNT", "expr": "1"}},
        {{"target": "scanside", "name": "avg", "kind": "SUM", "expr": "0.7"}},
        {{"target": "neighbor", "name": "who", "kind": "MAX", "expr": "scanside.firstName"}}
      ]}},
    {{"edge": "HasTag", "dir": "out", "frontier": "target",
      "accum": [{{"target": "neighbor", "name": "hits", "kind": "MAPCOUNT", "expr": "edge.comment"}}]}}
  ],
  "output": {{"columns": ["name"], "accums": ["hits"], "limit": 50}}
}}"#,
            by = 1970 + case % 20,
            len = (case * 131) % 1800
        ),
    };
    lakegraph::engine::plan::QueryPlan::from_json(&text).unwrap()
}

/// Workers with private caches over `base`'s catalog and topology.
pub fn local_cluster(base: &Graph, partition: lakegraph::cluster::Partition) -> lakegraph::cluster::LocalCluster {
    let graphs = (0..partition.workers)
        .map(|_| lakegraph::cluster::with_own_cache(base, Arc::new(MemoryStore::new()), CacheConfig::default()))
        .collect();
    lakegraph::cluster::LocalCluster::start(graphs, partition)
}
