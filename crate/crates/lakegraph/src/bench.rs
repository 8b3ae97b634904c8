//! Benchmark drivers behind the command line: startup, query under the
//! three cache states, algorithm runs and the edge-list/CSR comparison.
//! Every report is a list of `metric,scenario,value,unit` rows.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lakegraph_core::{AccumulatorStore, ActiveVertexSet, FileBitmap, VertexId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::engine::plan::QueryPlan;
use crate::engine::{algo, run_tasks, Direction, EdgeScanSpec, FrontierBuilder, Graph, Side};
use crate::error::{Error, Result};
use crate::reference;
use crate::store::{ObjectStore, ReadRecord, StatsSnapshot};
use crate::topology::{self, PhaseTiming, StartupConfig, TOPOLOGY_PREFIX};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub metric: String,
    pub scenario: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn push(&mut self, metric: &str, scenario: &str, value: f64, unit: &str) {
        self.rows.push(BenchRow {
            metric: metric.into(),
            scenario: scenario.into(),
            value,
            unit: unit.into(),
        });
    }

    pub fn extend(&mut self, other: BenchReport) {
        self.rows.extend(other.rows);
    }

    pub fn get(&self, metric: &str, scenario: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.scenario == scenario)
            .map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "scenario", "value", "unit"]).unwrap();
        for r in &self.rows {
            w.write_record([&r.metric, &r.scenario, &r.value.to_string(), &r.unit])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Byte ranges of the src/tgt key chunks of every edge file, by path.
pub fn edge_key_ranges(catalog: &Catalog) -> Result<HashMap<String, Vec<Range<u64>>>> {
    let mut out: HashMap<String, Vec<Range<u64>>> = HashMap::new();
    for et in &catalog.schema.edges {
        for f in catalog.registry.files_of(&et.table) {
            let path = catalog.registry.entry(f)?.path.clone();
            let footer = catalog.footer(f)?;
            for key in [&et.src_key, &et.tgt_key] {
                let Some(c) = footer.column_index(key) else { continue };
                for g in &footer.row_groups {
                    let m = &g.columns[c];
                    out.entry(path.clone())
                        .or_default()
                        .push(m.byte_offset..m.byte_offset + m.byte_length);
                }
            }
        }
    }
    Ok(out)
}

/// Reads that touch an edge key chunk.
pub fn count_edge_key_reads(ranges: &HashMap<String, Vec<Range<u64>>>, reads: &[ReadRecord]) -> u64 {
    reads
        .iter()
        .filter(|r| {
            ranges
                .get(&r.path)
                .is_some_and(|rs| rs.iter().any(|k| r.offset < k.end && k.start < r.offset + r.len))
        })
        .count() as u64
}

#[derive(Clone, Debug)]
pub struct StartupRun {
    pub wall: Duration,
    pub timing: PhaseTiming,
    pub io: StatsSnapshot,
    pub edge_key_reads: u64,
    pub rebuilt: usize,
    pub loaded: usize,
    pub edges: usize,
}

/// Deletes materialized topology so the next startup builds from scratch.
pub fn drop_materialized(store: &dyn ObjectStore) -> Result<usize> {
    let paths = store.list(TOPOLOGY_PREFIX)?;
    for p in &paths {
        store.delete(p)?;
    }
    Ok(paths.len())
}

/// One connection: catalog, then topology. Reads are recorded so edge key
/// reads can be counted.
pub fn startup_once(store: Arc<dyn ObjectStore>, cfg: &StartupConfig) -> Result<StartupRun> {
    let stats = store.stats();
    let before = stats.snapshot();
    stats.start_recording();
    let t0 = Instant::now();
    let result = Catalog::open(store.clone()).and_then(|(catalog, _)| {
        let (topo, report) = topology::startup(&catalog, cfg)?;
        Ok((catalog, topo, report))
    });
    let wall = t0.elapsed();
    let reads = stats.take_recording();
    let (catalog, topo, report) = result?;
    let io = stats.snapshot().since(&before);
    let ranges = edge_key_ranges(&catalog)?;
    Ok(StartupRun {
        wall,
        timing: report.timing,
        io,
        edge_key_reads: count_edge_key_reads(&ranges, &reads),
        rebuilt: report.rebuilt.len(),
        loaded: report.loaded.len(),
        edges: topo.edge_count(),
    })
}

/// First startup from scratch followed by a second one that may reuse the
/// materialized topology.
pub fn bench_startup(store: Arc<dyn ObjectStore>, cfg: &StartupConfig) -> Result<(StartupRun, StartupRun)> {
    drop_materialized(store.as_ref())?;
    let first = startup_once(store.clone(), cfg)?;
    let second = startup_once(store, cfg)?;
    Ok((first, second))
}

pub fn startup_report(first: &StartupRun, second: &StartupRun) -> BenchReport {
    let mut r = BenchReport::default();
    for (name, run) in [("first", first), ("second", second)] {
        r.push("wall_time", name, ms(run.wall), "ms");
        r.push("bytes_read", name, run.io.bytes_read as f64, "bytes");
        r.push("requests", name, run.io.get_count as f64, "count");
        r.push("edge_key_reads", name, run.edge_key_reads as f64, "count");
        r.push("phase_connect", name, ms(run.timing.connect), "ms");
        r.push("phase_idm_build", name, ms(run.timing.idm_build), "ms");
        r.push("phase_edge_lists", name, ms(run.timing.edge_list_build), "ms");
        r.push("phase_persist", name, ms(run.timing.persist), "ms");
        r.push("lists_rebuilt", name, run.rebuilt as f64, "count");
        r.push("lists_loaded", name, run.loaded as f64, "count");
        r.push("edges", name, run.edges as f64, "count");
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheState {
    /// Both tiers empty.
    StoreCold,
    /// Disk tier warm, memory empty.
    DiskCold,
    Hot,
}

impl CacheState {
    pub const ALL: [CacheState; 3] = [CacheState::StoreCold, CacheState::DiskCold, CacheState::Hot];

    pub fn name(self) -> &'static str {
        match self {
            CacheState::StoreCold => "storecold",
            CacheState::DiskCold => "diskcold",
            CacheState::Hot => "hot",
        }
    }

    pub fn parse(s: &str) -> Option<CacheState> {
        CacheState::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug)]
pub struct QueryRun {
    pub state: CacheState,
    pub wall: Duration,
    pub io: StatsSnapshot,
    pub rows: usize,
}

/// Runs `plan` once in the given cache state, warming or clearing the
/// tiers first as needed. `store` is the graph's backing store, used for
/// I/O accounting.
pub fn query_in_state(g: &Graph, store: &dyn ObjectStore, plan: &QueryPlan, state: CacheState) -> Result<QueryRun> {
    match state {
        CacheState::StoreCold => g.cache.clear_all()?,
        CacheState::DiskCold => {
            g.run_plan(plan)?;
            g.cache.clear_memory()?;
        }
        CacheState::Hot => {
            g.run_plan(plan)?;
        }
    }
    let before = store.stats().snapshot();
    let t0 = Instant::now();
    let run = g.run_plan(plan)?;
    Ok(QueryRun {
        state,
        wall: t0.elapsed(),
        io: store.stats().snapshot().since(&before),
        rows: run.table.rows.len(),
    })
}

pub fn query_report(runs: &[QueryRun]) -> BenchReport {
    let mut r = BenchReport::default();
    for q in runs {
        r.push("wall_time", q.state.name(), ms(q.wall), "ms");
        r.push("bytes_read", q.state.name(), q.io.bytes_read as f64, "bytes");
        r.push("rows", q.state.name(), q.rows as f64, "count");
    }
    r
}

#[derive(Clone, Debug)]
pub struct AlgoRun {
    pub name: &'static str,
    pub wall: Duration,
    pub matches_reference: bool,
}

pub const ALGORITHMS: [&str; 5] = ["pr", "wcc", "cdlp", "bfs", "lcc"];

pub const PR_DAMPING: f64 = 0.85;
pub const PR_MAX_ITERS: usize = 100;
pub const PR_TOL: f64 = 1e-10;
pub const PR_MATCH: f64 = 1e-6;
pub const CDLP_ITERS: usize = 10;

fn linf(a: &BTreeMap<VertexId, f64>, b: &BTreeMap<VertexId, f64>) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .map(|(k, x)| b.get(k).map_or(f64::INFINITY, |y| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Runs one algorithm on the homogeneous graph `(vertex_type, edge_type)`
/// and checks it against the single-threaded reference. BFS starts at the
/// smallest vertex id.
pub fn run_algorithm(g: &Graph, name: &str, vertex_type: &str, edge_type: &str) -> Result<AlgoRun> {
    let raw = reference::raw_graph(&g.catalog, vertex_type, edge_type)?;
    let t0 = Instant::now();
    let (name, ok): (&'static str, Box<dyn FnOnce() -> bool>) = match name {
        "pr" => {
            let got = algo::pagerank(g, vertex_type, edge_type, PR_DAMPING, PR_MAX_ITERS, PR_TOL)?;
            (
                "pr",
                Box::new(move || linf(&got.scores, &raw.pagerank(PR_DAMPING, PR_MAX_ITERS, PR_TOL).0) <= PR_MATCH),
            )
        }
        "wcc" => {
            let got = algo::wcc(g, vertex_type, edge_type)?;
            ("wcc", Box::new(move || got == raw.wcc()))
        }
        "cdlp" => {
            let got = algo::cdlp(g, vertex_type, edge_type, CDLP_ITERS)?;
            ("cdlp", Box::new(move || got == raw.cdlp(CDLP_ITERS)))
        }
        "bfs" => {
            let source = g
                .all_vertices(vertex_type)?
                .iter()
                .next()
                .ok_or_else(|| Error::Query(format!("no {vertex_type} vertices")))?;
            let got = algo::bfs(g, vertex_type, edge_type, source)?;
            ("bfs", Box::new(move || got == raw.bfs(source)))
        }
        "lcc" => {
            let got = algo::lcc(g, vertex_type, edge_type)?;
            ("lcc", Box::new(move || got == raw.lcc()))
        }
        other => return Err(Error::Query(format!("unknown algorithm {other}"))),
    };
    let wall = t0.elapsed();
    Ok(AlgoRun {
        name,
        wall,
        matches_reference: ok(),
    })
}

pub fn algo_report(runs: &[AlgoRun]) -> BenchReport {
    let mut r = BenchReport::default();
    for a in runs {
        r.push("wall_time", a.name, ms(a.wall), "ms");
        r.push("matches_reference", a.name, a.matches_reference as u8 as f64, "bool");
    }
    r
}

/// Out-neighbors of every source vertex of one edge type, in compressed
/// sparse row form. Vertices are indexed densely, file by file.
pub struct CsrBaseline {
    base: HashMap<u32, usize>,
    offsets: Vec<usize>,
    neighbors: Vec<VertexId>,
}

impl CsrBaseline {
    pub fn build(g: &Graph, edge_type: &str) -> Result<CsrBaseline> {
        let et = g
            .catalog
            .schema
            .edge(edge_type)
            .ok_or_else(|| Error::Query(format!("unknown edge type {edge_type}")))?;
        let mut base = HashMap::new();
        let mut n = 0usize;
        base.insert(VertexId::DANGLING_FILE, 0);
        n += g.topology.dangling.len();
        for (f, rows) in g.vertex_files(&et.src_type)? {
            base.insert(f, n);
            n += rows as usize;
        }
        let index = |v: VertexId| -> Result<usize> {
            base.get(&v.file_id())
                .map(|b| b + v.row() as usize)
                .ok_or_else(|| Error::Query(format!("vertex {v:?} outside the source type")))
        };
        let mut degree = vec![0usize; n + 1];
        for list in g.topology.lists_of_type(edge_type) {
            for &(s, _) in &list.entries {
                degree[index(s)? + 1] += 1;
            }
        }
        for i in 1..=n {
            degree[i] += degree[i - 1];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut neighbors = vec![VertexId(0); offsets[n]];
        for list in g.topology.lists_of_type(edge_type) {
            for &(s, t) in &list.entries {
                let i = index(s)?;
                neighbors[fill[i]] = t;
                fill[i] += 1;
            }
        }
        Ok(CsrBaseline {
            base,
            offsets,
            neighbors,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        match self.base.get(&v.file_id()) {
            Some(b) if b + (v.row() as usize) < self.vertex_count() => {
                let i = b + v.row() as usize;
                &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
            }
            _ => &[],
        }
    }

    /// Targets of every edge leaving `input`, one task per input file.
    pub fn one_hop(&self, input: &ActiveVertexSet, parallelism: usize) -> ActiveVertexSet {
        let files: Vec<(u32, &FileBitmap)> = input.files().collect();
        let parts = run_tasks(files.len(), parallelism, |i| {
            let (f, bits) = files[i];
            let mut front = FrontierBuilder::default();
            for row in bits.iter() {
                for &t in self.neighbors(VertexId::new(f, row)) {
                    front.insert(t);
                }
            }
            Ok(front.finish())
        })
        .expect("infallible");
        let mut out = ActiveVertexSet::new();
        for p in parts {
            out.union_with(&p);
        }
        out
    }
}

/// `round(selectivity * n)` distinct vertices of a type, at least one.
pub fn sample_frontier(g: &Graph, vertex_type: &str, selectivity: f64, seed: u64) -> Result<ActiveVertexSet> {
    let all: Vec<VertexId> = g.all_vertices(vertex_type)?.iter().collect();
    let k = ((selectivity * all.len() as f64).round() as usize).clamp(1, all.len().max(1));
    let mut out = ActiveVertexSet::new();
    if all.is_empty() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in rand::seq::index::sample(&mut rng, all.len(), k) {
        out.insert(all[i]);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CsrPoint {
    pub selectivity: f64,
    pub input: u64,
    pub output: u64,
    /// Best of the repeats.
    pub edge_list: Duration,
    pub csr: Duration,
}

/// Attribute-free one-hop over `edge_type` from a random input set, once
/// through the edge-list scan and once through the CSR, per selectivity.
/// Fails if the two disagree on the output frontier.
pub fn csr_compare(
    g: &Graph,
    csr: &CsrBaseline,
    edge_type: &str,
    selectivities: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<CsrPoint>> {
    let et = g
        .catalog
        .schema
        .edge(edge_type)
        .ok_or_else(|| Error::Query(format!("unknown edge type {edge_type}")))?;
    let spec = EdgeScanSpec::bare(edge_type, Direction::Out, Side::Target);
    let accums = AccumulatorStore::new();
    let mut out = Vec::new();
    for (i, &s) in selectivities.iter().enumerate() {
        let input = sample_frontier(g, &et.src_type, s, seed.wrapping_add(i as u64))?;
        let mut best_el = Duration::MAX;
        let mut best_csr = Duration::MAX;
        let mut output = 0;
        for _ in 0..repeats.max(1) {
            let t0 = Instant::now();
            let a = g.edge_scan(&input, &spec, &accums, |_, _| true)?.frontier;
            best_el = best_el.min(t0.elapsed());
            let t0 = Instant::now();
            let b = csr.one_hop(&input, g.cfg.parallelism);
            best_csr = best_csr.min(t0.elapsed());
            if a != b {
                return Err(Error::Query(format!("edge list and CSR disagree at selectivity {s}")));
            }
            output = a.len();
        }
        out.push(CsrPoint {
            selectivity: s,
            input: input.len(),
            output,
            edge_list: best_el,
            csr: best_csr,
        });
    }
    Ok(out)
}

pub fn csr_report(points: &[CsrPoint]) -> BenchReport {
    let mut r = BenchReport::default();
    for p in points {
        let sc = format!("selectivity={}", p.selectivity);
        r.push("edge_list_time", &sc, ms(p.edge_list), "ms");
        r.push("csr_time", &sc, ms(p.csr), "ms");
        r.push("input_vertices", &sc, p.input as f64, "count");
        r.push("output_vertices", &sc, p.output as f64, "count");
    }
    r
}
