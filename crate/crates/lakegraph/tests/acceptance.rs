//! Acceptance criteria. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line. Pass criterion numbers as
//! arguments to run a subset.

mod common;

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use lakegraph::bench::{self, CsrBaseline};
use lakegraph::cache::{CacheConfig, CacheKey, ColumnCache, EdgeReader, Flavor, VertexMode};
use lakegraph::catalog::Catalog;
use lakegraph::cluster::random_partition;
use lakegraph::engine::plan::{music_plan, QueryPlan};
use lakegraph::engine::EngineConfig;
use lakegraph::gen::{self, GenSpec, SimpleLayout};
use lakegraph::lgc;
use lakegraph::store::{LatencyStore, MemoryStore, ObjectStore};
use lakegraph::topology::StartupConfig;
use lakegraph_core::value::parse_date;
use lakegraph_core::Value;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (u32, &'static str, fn() -> Outcome);

const LATENCY: Duration = Duration::from_millis(20);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "topology-only loading I/O", c1_startup_io),
        (2, "materialized topology restart", c2_restart),
        (3, "distribution transparency", c3_distributed),
        (4, "two-hop plan vs relational oracle", c4_oracle),
        (5, "algorithms vs reference", c5_algorithms),
        (6, "cache fidelity under stress", c6_cache_fuzz),
        (7, "decoded-prefix vertex cache", c7_vertex_mode),
        (8, "edge list vs CSR crossover", c8_csr),
        (9, "sweep-clock conformance", c9_clock),
        (10, "prefetch and pruning soundness", c10_pruning),
        (11, "pipelined startup", c11_pipeline),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {}: {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn generate(spec: &GenSpec) -> (Arc<MemoryStore>, gen::GenReport) {
    let store = Arc::new(MemoryStore::new());
    let report = gen::generate(store.as_ref(), spec).unwrap();
    (store, report)
}

fn no_materialize() -> StartupConfig {
    StartupConfig {
        materialize: false,
        reuse_materialized: false,
        ..StartupConfig::default()
    }
}

fn c1_startup_io() -> Outcome {
    let spec = GenSpec {
        person_count: 5000,
        comment_count: 40000,
        tag_count: 50,
        attribute_width: 2,
        files_per_table: 4,
        row_group_size: 2048,
        ..GenSpec::default()
    };
    let spec = gen::tune_key_ratio(&spec, 0.10).unwrap();
    let (store, report) = generate(&spec);
    let run = bench::startup_once(store, &no_materialize()).unwrap();
    let base = report.key_bytes() + report.footer_bytes() + report.catalog_bytes;
    let bound = base as f64 * 1.10;
    let ratio = report.key_ratio();
    let pass =
        (0.08..=0.12).contains(&ratio) && run.io.bytes_read as f64 <= bound && run.wall < Duration::from_secs(60);
    (
        pass,
        format!(
            "key ratio {ratio:.3}, read {} B, keys+footers+catalog {base} B, bound {bound:.0} B",
            run.io.bytes_read
        ),
    )
}

fn c2_restart() -> Outcome {
    let spec = GenSpec {
        person_count: 20000,
        comment_count: 350000,
        tag_count: 100,
        attribute_width: 1,
        payload_len: 8,
        files_per_table: 4,
        row_group_size: 16384,
        ..GenSpec::default()
    };
    let (mem, _) = generate(&spec);
    let store: Arc<dyn ObjectStore> = Arc::new(LatencyStore::new(mem, LATENCY, None));
    let (first, second) = bench::bench_startup(store, &StartupConfig::default()).unwrap();
    let pass = first.edges >= 1_000_000
        && second.edges == first.edges
        && second.edge_key_reads == 0
        && second.loaded > 0
        && second.wall.as_secs_f64() < 0.5 * first.wall.as_secs_f64();
    (
        pass,
        format!(
            "{} edges, first {:.0} ms, second {:.0} ms, second-run edge key reads {}",
            first.edges,
            first.wall.as_secs_f64() * 1e3,
            second.wall.as_secs_f64() * 1e3,
            second.edge_key_reads
        ),
    )
}

fn c3_distributed() -> Outcome {
    let mut mismatches = Vec::new();
    let mut rows = 0;
    for case in 0..50u64 {
        let (store, _) = generate(&common::micro_spec(300 + case));
        let g = common::open(store);
        let workers = [1, 2, 4][(case % 3) as usize];
        let partition = random_partition(&g.catalog, workers, case);
        let plan = common::plan_suite(case);
        let single = g.run_plan(&plan).unwrap();
        let cl = common::local_cluster(&g, partition);
        let dist = cl.run_plan(&g, &plan).unwrap();
        rows += single.table.rows.len();
        let same = dist.table == single.table
            && dist.frontier == single.frontier
            && dist.accums == single.accums
            && format!("{:?}", dist.accums) == format!("{:?}", single.accums);
        if !same {
            mismatches.push(case);
        }
    }
    (
        mismatches.is_empty(),
        format!("50 cases, {rows} result rows, mismatching cases {mismatches:?}"),
    )
}

fn c4_oracle() -> Outcome {
    let mut bad = Vec::new();
    let mut counted = 0;
    for seed in 0..24u64 {
        let spec = common::micro_spec(500 + seed);
        let (store, _) = generate(&spec);
        let tag = gen::tag_name(seed % 5);
        let date = format!("{}-03-01", 2010 + seed % 3);
        let gender = if seed % 2 == 0 { "female" } else { "male" };
        let g = common::open(store.clone());
        let got = common::counts(&g.run_plan(&music_plan(&tag, &date, gender)).unwrap());
        let want = common::music_oracle(store, &tag, parse_date(&date).unwrap(), gender);
        counted += want.values().sum::<i64>();
        if got != want {
            bad.push(seed);
        }
    }
    (
        bad.is_empty() && counted > 0,
        format!("24 datasets, {counted} matched pairs in total, mismatching seeds {bad:?}"),
    )
}

fn c5_algorithms() -> Outcome {
    let t0 = Instant::now();
    let mut bad = Vec::new();
    for seed in 0..30u64 {
        let n = 40 + (seed as u32 * 97) % 461;
        let m = n as usize * (1 + seed as usize % 5);
        let layout = SimpleLayout {
            vertex_files: 1 + seed as usize % 3,
            edge_files: 1 + seed as usize % 4,
            row_group_size: 32 + seed as usize % 4 * 32,
            seed,
        };
        let (store, _) = common::simple_store(1000 + seed, n, m, layout);
        let g = common::open(store);
        for name in bench::ALGORITHMS {
            let run = bench::run_algorithm(&g, name, "V", "E").unwrap();
            if !run.matches_reference {
                bad.push(format!("{name}@{seed}"));
            }
        }
    }
    let wall = t0.elapsed();
    (
        bad.is_empty() && wall < Duration::from_secs(120),
        format!(
            "30 graphs x 5 algorithms, mismatches {bad:?}, {:.1}s",
            wall.as_secs_f64()
        ),
    )
}

/// Every chunk of `columns` in the files of `table`.
fn chunk_keys(cache: &ColumnCache, catalog: &Catalog, table: &str, columns: &[&str]) -> Vec<CacheKey> {
    let mut keys = Vec::new();
    for f in catalog.registry.files_of(table) {
        let groups = cache.group_offsets(f).unwrap().len() - 1;
        for g in 0..groups as u32 {
            for c in columns {
                keys.push(CacheKey::new(f, g, c));
            }
        }
    }
    keys
}

type Oracle = HashMap<(u32, String), Vec<Value>>;

fn full_decode(
    store: &dyn ObjectStore,
    catalog: &Catalog,
    table: &str,
    columns: &[&str],
    out: &mut Oracle,
) -> Vec<u32> {
    let files = catalog.registry.files_of(table);
    for &f in &files {
        let path = &catalog.registry.entry(f).unwrap().path;
        let footer = lgc::read_footer(store, path).unwrap();
        for c in columns {
            out.insert((f, c.to_string()), lgc::read_column(store, path, &footer, c).unwrap());
        }
    }
    files
}

fn c6_cache_fuzz() -> Outcome {
    let spec = GenSpec {
        person_count: 3000,
        comment_count: 8000,
        tag_count: 20,
        attribute_width: 1,
        payload_len: 6,
        files_per_table: 2,
        row_group_size: 256,
        ..GenSpec::default()
    };
    let (store, _) = generate(&spec);
    let catalog = Arc::new(Catalog::load(store.clone()).unwrap());
    let vcols = ["id", "firstName", "gender", "birthday", "pad0"];
    let ccols = ["id", "creationDate", "length"];
    let ecols = ["comment", "person", "date"];
    let mut oracle = Oracle::new();
    let vfiles: Vec<(u32, &[&str])> = full_decode(store.as_ref(), &catalog, "person", &vcols, &mut oracle)
        .into_iter()
        .map(|f| (f, &vcols[..]))
        .chain(
            full_decode(store.as_ref(), &catalog, "comment", &ccols, &mut oracle)
                .into_iter()
                .map(|f| (f, &ccols[..])),
        )
        .collect();
    let efiles = full_decode(store.as_ref(), &catalog, "has_creator", &ecols, &mut oracle);

    let probe = ColumnCache::new(catalog.clone(), Arc::new(MemoryStore::new()), CacheConfig::default());
    let mut total = 0;
    let mut largest = 0;
    let charges = chunk_keys(&probe, &catalog, "person", &vcols)
        .into_iter()
        .chain(chunk_keys(&probe, &catalog, "comment", &ccols))
        .map(|k| probe.charge_of(&k, Flavor::Vertex).unwrap())
        .chain(
            chunk_keys(&probe, &catalog, "has_creator", &ecols)
                .into_iter()
                .map(|k| probe.charge_of(&k, Flavor::Edge).unwrap()),
        );
    for c in charges {
        total += c;
        largest = largest.max(c);
    }
    let budget = total / 4;
    let disk_budget = total / 4;
    assert!(budget >= largest);
    let cache = ColumnCache::new(
        catalog.clone(),
        Arc::new(MemoryStore::new()),
        CacheConfig {
            memory_budget: budget,
            disk_budget,
            window_size: 64,
            prefetch_threads: 2,
            ..CacheConfig::default()
        },
    );

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut wrong = 0;
    let mut over = 0;
    let mut last_row: HashMap<(u32, &str), u32> = HashMap::new();
    for _ in 0..10_000 {
        let op = rng.gen_range(0..100);
        if op < 65 {
            let (f, cols) = vfiles[rng.gen_range(0..vfiles.len())];
            let c = cols[rng.gen_range(0..cols.len())];
            let want = &oracle[&(f, c.to_string())];
            // Mostly near the last access, sometimes anywhere.
            let prev = *last_row.get(&(f, c)).unwrap_or(&0);
            let row = if rng.gen_bool(0.6) {
                (prev + rng.gen_range(0..300)).min(want.len() as u32 - 1)
            } else {
                rng.gen_range(0..want.len() as u32)
            };
            last_row.insert((f, c), row);
            let (key, r) = cache.locate(f, row, c).unwrap();
            if cache.get_vertex_value(&key, r).unwrap() != want[row as usize] {
                wrong += 1;
            }
        } else if op < 93 {
            let f = efiles[rng.gen_range(0..efiles.len())];
            let c = ecols[rng.gen_range(0..ecols.len())];
            let want = &oracle[&(f, c.to_string())];
            let mut reader = EdgeReader::new(&cache, f, c).unwrap();
            let mut row = rng.gen_range(0..want.len() as u64);
            for _ in 0..rng.gen_range(1..80) {
                if row >= want.len() as u64 {
                    break;
                }
                if reader.get(row).unwrap() != want[row as usize] {
                    wrong += 1;
                }
                row += rng.gen_range(1..40);
            }
        } else if op < 97 {
            let (f, cols) = vfiles[rng.gen_range(0..vfiles.len())];
            let keys = cols
                .iter()
                .map(|c| (cache.locate(f, rng.gen_range(0..100), c).unwrap().0, Flavor::Vertex));
            cache.prefetch(keys.collect::<Vec<_>>());
            cache.wait_prefetch();
        } else {
            cache.clear_memory().unwrap();
        }
        let s = cache.stats();
        if s.resident_bytes > budget || s.disk_bytes > disk_budget {
            over += 1;
        }
    }
    let s = cache.stats();
    let pass = wrong == 0 && over == 0 && s.redecodes_below_flushed == 0 && s.image_flushes > 0 && s.disk_evictions > 0;
    (
        pass,
        format!(
            "10000 ops at 25% budget: {wrong} wrong values, {over} budget overruns, {} re-decodes below a flushed prefix ({} evictions, {} flushes, {} image loads)",
            s.redecodes_below_flushed,
            s.vertex_evictions + s.edge_evictions,
            s.image_flushes,
            s.disk_image_loads
        ),
    )
}

fn vertex_access_time(
    catalog: &Arc<Catalog>,
    file: u32,
    rows: &[u32],
    mode: VertexMode,
    rounds: usize,
) -> (Duration, Vec<Value>) {
    let cache = ColumnCache::new(
        catalog.clone(),
        Arc::new(MemoryStore::new()),
        CacheConfig {
            vertex_mode: mode,
            prefetch_threads: 0,
            ..CacheConfig::default()
        },
    );
    let mut seen = Vec::new();
    let t0 = Instant::now();
    for round in 0..rounds {
        for &row in rows {
            let (key, r) = cache.locate(file, row, "firstName").unwrap();
            let v = cache.get_vertex_value(&key, r).unwrap();
            if round == 0 {
                seen.push(v);
            }
        }
    }
    (t0.elapsed(), seen)
}

fn c7_vertex_mode() -> Outcome {
    let spec = GenSpec {
        person_count: 100_000,
        comment_count: 1000,
        tag_count: 10,
        attribute_width: 0,
        payload_len: 0,
        files_per_table: 1,
        row_group_size: 16384,
        ..GenSpec::default()
    };
    let (store, _) = generate(&spec);
    let catalog = Arc::new(Catalog::load(store).unwrap());
    let file = catalog.registry.files_of("person")[0];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rows: Vec<u32> = (0..spec.person_count as u32).collect();
    rows.shuffle(&mut rng);
    rows.truncate(spec.person_count as usize / 100);
    let (prefix, a) = vertex_access_time(&catalog, file, &rows, VertexMode::DecodedPrefix, 5);
    let (naive, b) = vertex_access_time(&catalog, file, &rows, VertexMode::NaiveRescan, 5);
    let speedup = naive.as_secs_f64() / prefix.as_secs_f64();
    (
        a == b && speedup >= 10.0,
        format!(
            "{} lookups x 5 rounds: decoded prefix {:.1} ms, naive re-scan {:.1} ms, speedup {speedup:.1}x",
            rows.len(),
            prefix.as_secs_f64() * 1e3,
            naive.as_secs_f64() * 1e3
        ),
    )
}

fn c8_csr() -> Outcome {
    let spec = GenSpec {
        person_count: 100_000,
        comment_count: 5_000_000,
        tag_count: 50,
        attribute_width: 0,
        payload_len: 0,
        files_per_table: 8,
        row_group_size: 65536,
        sort_edges_by_src: false,
        knows_max_degree: 8,
        ..GenSpec::default()
    };
    let (store, _) = generate(&spec);
    let g = common::open(store);
    let csr = CsrBaseline::build(&g, "HasCreator").unwrap();
    let points = bench::csr_compare(&g, &csr, "HasCreator", &[1.0, 0.0001], 3, 8).unwrap();
    let (full, sparse) = (&points[0], &points[1]);
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    (
        csr.edge_count() >= 5_000_000 && full.edge_list < full.csr && sparse.csr < sparse.edge_list,
        format!(
            "{} edges; 100%: edge list {:.2} ms, CSR {:.2} ms; 0.01%: edge list {:.2} ms, CSR {:.3} ms",
            csr.edge_count(),
            ms(full.edge_list),
            ms(full.csr),
            ms(sparse.edge_list),
            ms(sparse.csr)
        ),
    )
}

/// Step-by-step clock model. The deque is the ring rotated so that the
/// hand is at the front.
struct ClockModel {
    ring: VecDeque<(usize, u8)>,
    used: u64,
}

impl ClockModel {
    fn access(&mut self, key: usize, prio: u8, charge: &[u64], budget: u64) {
        if let Some(e) = self.ring.iter_mut().find(|e| e.0 == key) {
            e.1 = prio;
            return;
        }
        while self.used + charge[key] > budget {
            let mut e = self.ring.pop_front().unwrap();
            e.1 -= 1;
            if e.1 == 0 {
                self.used -= charge[e.0];
            } else {
                self.ring.push_back(e);
            }
        }
        self.ring.push_back((key, prio));
        self.used += charge[key];
    }
}

fn c9_clock() -> Outcome {
    let spec = GenSpec {
        person_count: 1000,
        comment_count: 2000,
        tag_count: 10,
        attribute_width: 1,
        payload_len: 6,
        files_per_table: 2,
        row_group_size: 64,
        ..GenSpec::default()
    };
    let (store, _) = generate(&spec);
    let catalog = Arc::new(Catalog::load(store).unwrap());
    let probe = ColumnCache::new(catalog.clone(), Arc::new(MemoryStore::new()), CacheConfig::default());
    let pool: Vec<(CacheKey, Flavor)> = chunk_keys(&probe, &catalog, "person", &["id", "firstName", "gender", "pad0"])
        .into_iter()
        .map(|k| (k, Flavor::Vertex))
        .chain(
            chunk_keys(&probe, &catalog, "has_creator", &["comment", "person", "date"])
                .into_iter()
                .map(|k| (k, Flavor::Edge)),
        )
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut diverged = Vec::new();
    let mut evictions = 0;
    for seq in 0..1000 {
        let k = rng.gen_range(4..16);
        let keys: Vec<&(CacheKey, Flavor)> = pool.choose_multiple(&mut rng, k).collect();
        let charge: Vec<u64> = keys.iter().map(|(k, f)| probe.charge_of(k, *f).unwrap()).collect();
        let sum: u64 = charge.iter().sum();
        let budget = (sum as f64 * rng.gen_range(0.25..0.8)) as u64;
        let budget = budget.max(*charge.iter().max().unwrap());
        let cache = ColumnCache::new(
            catalog.clone(),
            Arc::new(MemoryStore::new()),
            CacheConfig {
                memory_budget: budget,
                prefetch_threads: 0,
                ..CacheConfig::default()
            },
        );
        let mut model = ClockModel {
            ring: VecDeque::new(),
            used: 0,
        };
        for _ in 0..rng.gen_range(10..60) {
            let i = rng.gen_range(0..keys.len());
            let (key, flavor) = keys[i];
            match flavor {
                Flavor::Vertex => drop(cache.vertex_unit(key).unwrap()),
                Flavor::Edge => drop(cache.edge_unit(key).unwrap()),
            }
            model.access(i, if *flavor == Flavor::Vertex { 3 } else { 1 }, &charge, budget);
            let want: Vec<&CacheKey> = model.ring.iter().map(|e| &keys[e.0].0).collect();
            let got = cache.resident_keys();
            if got.iter().collect::<Vec<_>>() != want {
                diverged.push(seq);
                break;
            }
        }
        let s = cache.stats();
        evictions += s.vertex_evictions + s.edge_evictions;
    }
    (
        diverged.is_empty() && evictions > 0,
        format!("1000 sequences, {evictions} evictions, diverging sequences {diverged:?}"),
    )
}

fn comment_window_plan(last_id: u64) -> QueryPlan {
    QueryPlan::from_json(&format!(
        r#"{{
  "source": {{"type": "Comment", "where": [{{"col": "id", "op": "<=", "value": {last_id}}}]}},
  "hops": [{{"edge": "HasCreator", "dir": "out", "frontier": "target",
    "accum": [{{"target": "neighbor", "name": "n", "kind": "COUNT", "expr": "1"}}]}}],
  "output": {{"columns": ["id"], "accums": ["n"]}}
}}"#
    ))
    .unwrap()
}

fn c10_pruning() -> Outcome {
    let off = EngineConfig {
        prune: false,
        prefetch: false,
        ..EngineConfig::default()
    };
    let mut differing = Vec::new();
    for seed in 0..6u64 {
        let (store, _) = generate(&common::micro_spec(700 + seed));
        let on = common::open(store.clone());
        let plain = common::open_with(store, CacheConfig::default(), off.clone());
        for case in 0..8u64 {
            let plan = common::plan_suite(seed * 8 + case);
            let (a, b) = (on.run_plan(&plan).unwrap(), plain.run_plan(&plan).unwrap());
            if a.table != b.table || a.frontier != b.frontier || a.accums != b.accums {
                differing.push((seed, case));
            }
        }
    }

    let spec = GenSpec {
        person_count: 5000,
        comment_count: 200_000,
        tag_count: 20,
        attribute_width: 0,
        payload_len: 0,
        files_per_table: 2,
        row_group_size: 1024,
        sort_edges_by_src: true,
        ..GenSpec::default()
    };
    let (store, _) = generate(&spec);
    let plan = comment_window_plan(spec.comment_count / 100);
    let on = common::open(store.clone());
    let plain = common::open_with(store, CacheConfig::default(), off);
    let (a, b) = (on.run_plan(&plan).unwrap(), plain.run_plan(&plan).unwrap());
    let hop = &a.stats[1];
    let pruned = 1.0 - hop.portions_scanned as f64 / hop.portions_total.max(1) as f64;
    let same = a.table == b.table && a.accums == b.accums;
    (
        differing.is_empty() && same && pruned >= 0.5,
        format!(
            "48 plan runs, differing {differing:?}; 1% sorted frontier pruned {}/{} portions ({:.1}%)",
            hop.portions_total - hop.portions_scanned,
            hop.portions_total,
            pruned * 100.0
        ),
    )
}

fn c11_pipeline() -> Outcome {
    let spec = GenSpec {
        person_count: 20000,
        comment_count: 100_000,
        tag_count: 50,
        attribute_width: 1,
        payload_len: 8,
        files_per_table: 4,
        row_group_size: 4096,
        ..GenSpec::default()
    };
    let (mem, _) = generate(&spec);
    let store: Arc<dyn ObjectStore> = Arc::new(LatencyStore::new(mem, LATENCY, None));
    let run = |depth: usize| {
        let cfg = StartupConfig {
            pipeline_depth: depth,
            ..no_materialize()
        };
        bench::drop_materialized(store.as_ref()).unwrap();
        bench::startup_once(store.clone(), &cfg).unwrap()
    };
    let deep = run(8);
    let shallow = run(1);
    let speedup = shallow.wall.as_secs_f64() / deep.wall.as_secs_f64();
    (
        deep.edges == shallow.edges && speedup >= 2.0,
        format!(
            "depth 8 {:.0} ms, depth 1 {:.0} ms, speedup {speedup:.2}x",
            deep.wall.as_secs_f64() * 1e3,
            shallow.wall.as_secs_f64() * 1e3
        ),
    )
}
