//! Superstep primitives over active vertex sets.
//!
//! `vertex_map` and `edge_scan` never mutate accumulators: they read the
//! values combined at the previous barrier and return buffered updates,
//! which the driver folds in with [`AccumulatorStore::apply`] before the
//! next superstep.

pub mod algo;
pub mod plan;

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lakegraph_core::accum::Update;
use lakegraph_core::{AccumulatorStore, ActiveVertexSet, EdgeList, FileBitmap, Scalar, Value, VertexId};

use crate::cache::{CacheConfig, CacheKey, ColumnCache, EdgeReader, Flavor, VertexReader};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::store::ObjectStore;
use crate::topology::{self, RawKey, StartupConfig, StartupReport, Topology};

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub parallelism: usize,
    /// Skip edge-list portions whose source range misses the frontier.
    pub prune: bool,
    pub prefetch: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            parallelism: std::thread::available_parallelism().map_or(4, |n| n.get().min(8)),
            prune: true,
            prefetch: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Out,
    In,
}

/// Endpoint role as stored in the edge table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

/// Attribute values of one vertex or edge.
#[derive(Clone, Copy)]
pub struct RowView<'a> {
    pub id: VertexId,
    names: &'a [String],
    values: &'a [Option<Value>],
}

impl<'a> RowView<'a> {
    pub fn new(id: VertexId, names: &'a [String], values: &'a [Option<Value>]) -> Self {
        RowView { id, names, values }
    }

    pub fn get(&self, column: &str) -> Option<&'a Value> {
        let i = self.names.iter().position(|n| n == column)?;
        self.values[i].as_ref()
    }

    pub fn at(&self, i: usize) -> Option<&'a Value> {
        self.values.get(i)?.as_ref()
    }
}

/// Endpoint and edge rows of one edge-list entry. `edge.id` packs the
/// edge file id and the entry's row.
pub struct EdgeView<'a> {
    pub src: RowView<'a>,
    pub edge: RowView<'a>,
    pub tgt: RowView<'a>,
}

/// Update sink handed to udfs. Reads see the last barrier's values.
pub struct Emit<'a> {
    pub accums: &'a AccumulatorStore,
    updates: Vec<Update>,
    origin: u64,
    seq: u32,
}

impl<'a> Emit<'a> {
    fn new(accums: &'a AccumulatorStore) -> Self {
        Emit {
            accums,
            updates: Vec::new(),
            origin: 0,
            seq: 0,
        }
    }

    fn at(&mut self, origin: u64) {
        self.origin = origin;
        self.seq = 0;
    }

    pub fn push(&mut self, accum: u16, vertex: VertexId, value: Scalar) {
        self.updates.push(Update {
            accum,
            vertex,
            origin: (self.origin, self.seq),
            value,
        });
        self.seq += 1;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub lists_total: u64,
    pub lists_scanned: u64,
    pub portions_total: u64,
    pub portions_scanned: u64,
    pub edges_examined: u64,
    pub edges_matched: u64,
    pub udf_calls: u64,
    pub prefetched: u64,
}

impl ScanStats {
    pub fn add(&mut self, o: &ScanStats) {
        self.lists_total += o.lists_total;
        self.lists_scanned += o.lists_scanned;
        self.portions_total += o.portions_total;
        self.portions_scanned += o.portions_scanned;
        self.edges_examined += o.edges_examined;
        self.edges_matched += o.edges_matched;
        self.udf_calls += o.udf_calls;
        self.prefetched += o.prefetched;
    }
}

/// Result of one primitive: the next frontier and the buffered updates.
#[derive(Debug, Default)]
pub struct StepOutput {
    pub frontier: ActiveVertexSet,
    pub updates: Vec<Update>,
    pub stats: ScanStats,
}

#[derive(Clone, Debug)]
pub struct EdgeScanSpec {
    pub edge_type: String,
    pub dir: Direction,
    pub src_columns: Vec<String>,
    pub edge_columns: Vec<String>,
    pub tgt_columns: Vec<String>,
    pub frontier: Side,
}

impl EdgeScanSpec {
    /// Attribute-free scan.
    pub fn bare(edge_type: &str, dir: Direction, frontier: Side) -> Self {
        EdgeScanSpec {
            edge_type: edge_type.into(),
            dir,
            src_columns: vec![],
            edge_columns: vec![],
            tgt_columns: vec![],
            frontier,
        }
    }

    pub fn scan_side(&self) -> Side {
        match self.dir {
            Direction::Out => Side::Source,
            Direction::In => Side::Target,
        }
    }
}

/// Attribute rows for vertices hosted on other workers, keyed by side.
/// Values follow the side's column list. Absent vertices read as missing.
#[derive(Debug, Default)]
pub struct RemoteRows {
    pub local_files: BTreeSet<u32>,
    pub src: HashMap<VertexId, Vec<Value>>,
    pub tgt: HashMap<VertexId, Vec<Value>>,
}

impl RemoteRows {
    pub fn is_local(&self, v: VertexId) -> bool {
        v.is_dangling() || self.local_files.contains(&v.file_id())
    }
}

/// Restricts an edge scan to a worker's share.
#[derive(Clone, Copy, Default)]
pub struct ScanScope<'a> {
    pub edge_files: Option<&'a BTreeSet<u32>>,
    pub remote: Option<&'a RemoteRows>,
}

/// An edge list with the entry ranges that survive pruning.
pub struct ScanTask {
    pub list: Arc<EdgeList>,
    pub ranges: Vec<Range<usize>>,
    pub groups: Vec<u32>,
}

pub struct Graph {
    pub catalog: Arc<Catalog>,
    pub topology: Arc<Topology>,
    pub cache: Arc<ColumnCache>,
    pub cfg: EngineConfig,
}

impl Graph {
    pub fn new(catalog: Arc<Catalog>, topology: Arc<Topology>, cache: Arc<ColumnCache>, cfg: EngineConfig) -> Self {
        Graph {
            catalog,
            topology,
            cache,
            cfg,
        }
    }

    /// Connects to a store: opens the catalog, loads the topology and sets
    /// up a cache whose disk tier lives in `disk`.
    pub fn open(
        store: Arc<dyn ObjectStore>,
        disk: Arc<dyn ObjectStore>,
        startup: &StartupConfig,
        cache: CacheConfig,
        cfg: EngineConfig,
    ) -> Result<(Graph, StartupReport)> {
        let (catalog, _) = Catalog::open(store)?;
        let (topo, report) = topology::startup(&catalog, startup)?;
        let catalog = Arc::new(catalog);
        let cache = Arc::new(ColumnCache::new(catalog.clone(), disk, cache));
        Ok((Graph::new(catalog, Arc::new(topo), cache, cfg), report))
    }

    /// `(file id, row count)` of every data file of a vertex type.
    pub fn vertex_files(&self, vertex_type: &str) -> Result<Vec<(u32, u32)>> {
        let vt = self
            .catalog
            .schema
            .vertex(vertex_type)
            .ok_or_else(|| Error::Query(format!("unknown vertex type {vertex_type}")))?;
        let mut out = Vec::new();
        for f in self.catalog.registry.files_of(&vt.table) {
            out.push((f, self.catalog.registry.entry(f)?.row_count as u32));
        }
        Ok(out)
    }

    /// Every vertex of a type, including dangling ones.
    pub fn all_vertices(&self, vertex_type: &str) -> Result<ActiveVertexSet> {
        let mut set = ActiveVertexSet::new();
        for (f, rows) in self.vertex_files(vertex_type)? {
            set.insert_file(f, rows);
        }
        for row in 0..self.topology.dangling.len() as u32 {
            if self
                .topology
                .dangling
                .key_of(row)
                .is_some_and(|(t, _)| t == vertex_type)
            {
                set.insert(VertexId::new(VertexId::DANGLING_FILE, row));
            }
        }
        Ok(set)
    }

    pub fn vertex_type_of(&self, v: VertexId) -> Option<String> {
        if v.is_dangling() {
            return self.topology.dangling.key_of(v.row()).map(|(t, _)| t.clone());
        }
        let e = self.catalog.registry.get(v.file_id())?;
        self.catalog.schema.vertex_for_table(&e.table).map(|t| t.name.clone())
    }

    /// Resolves a raw key through the key column.
    pub fn find_vertex(&self, vertex_type: &str, key: &RawKey) -> Result<Option<VertexId>> {
        let vt = self
            .catalog
            .schema
            .vertex(vertex_type)
            .ok_or_else(|| Error::Query(format!("unknown vertex type {vertex_type}")))?;
        let all = self.all_vertices(vertex_type)?;
        let cols = vec![vt.key.clone()];
        let out = self.vertex_map(&all, &cols, &AccumulatorStore::new(), |row, _| {
            row.at(0).and_then(|v| RawKey::from_value(v.clone()).ok()).as_ref() == Some(key)
        })?;
        if let Some(v) = out.frontier.iter().next() {
            return Ok(Some(v));
        }
        let t = self
            .catalog
            .schema
            .vertices
            .iter()
            .position(|t| t.name == vertex_type)
            .unwrap() as u16;
        Ok(self.topology.dangling.lookup(t, key))
    }

    /// Evaluates `udf` once per active vertex, one task per vertex file.
    /// Returns the vertices it kept.
    pub fn vertex_map<F>(
        &self,
        input: &ActiveVertexSet,
        columns: &[String],
        accums: &AccumulatorStore,
        udf: F,
    ) -> Result<StepOutput>
    where
        F: Fn(&RowView, &mut Emit) -> bool + Sync,
    {
        let mut stats = ScanStats::default();
        if self.cfg.prefetch && !columns.is_empty() {
            let cols = columns.to_vec();
            stats.prefetched = self.cache.prefetch_for_frontier(input, &|_| cols.clone())? as u64;
        }
        let files: Vec<(u32, &FileBitmap)> = input.files().collect();
        let outs = run_tasks(files.len(), self.cfg.parallelism, |i| {
            let (file, bits) = files[i];
            let mut readers = Vec::new();
            if file != VertexId::DANGLING_FILE {
                for c in columns {
                    readers.push(VertexReader::new(&self.cache, file, c)?);
                }
            }
            let mut buf: Vec<Option<Value>> = vec![None; columns.len()];
            let mut emit = Emit::new(accums);
            let mut kept = FileBitmap::default();
            let mut calls = 0u64;
            for row in bits.iter() {
                let v = VertexId::new(file, row);
                for (slot, r) in buf.iter_mut().zip(readers.iter_mut()) {
                    *slot = Some(r.get(row)?);
                }
                emit.at(v.packed());
                calls += 1;
                if udf(&RowView::new(v, columns, &buf), &mut emit) {
                    kept.insert(row);
                }
            }
            Ok((file, kept, emit.updates, calls))
        })?;
        let mut out = StepOutput {
            stats,
            ..Default::default()
        };
        for (file, kept, updates, calls) in outs {
            out.frontier.insert_bitmap(file, kept);
            out.updates.extend(updates);
            out.stats.udf_calls += calls;
        }
        Ok(out)
    }

    /// Edge lists of the spec's type with the entry ranges to scan.
    pub fn scan_tasks(
        &self,
        input: &ActiveVertexSet,
        spec: &EdgeScanSpec,
        scope: ScanScope,
    ) -> (Vec<ScanTask>, ScanStats) {
        let mut stats = ScanStats::default();
        let mut tasks = Vec::new();
        let ranges = input.packed_ranges();
        for list in self.topology.lists_of_type(&spec.edge_type) {
            if scope.edge_files.is_some_and(|s| !s.contains(&list.edge_file_id)) {
                continue;
            }
            stats.lists_total += 1;
            stats.portions_total += list.portions.len() as u64;
            if input.is_empty() {
                continue;
            }
            let keep: Vec<usize> = if self.cfg.prune && spec.dir == Direction::Out {
                list.surviving_portions(&ranges)
            } else {
                (0..list.portions.len()).collect()
            };
            if keep.is_empty() {
                continue;
            }
            stats.lists_scanned += 1;
            stats.portions_scanned += keep.len() as u64;
            let mut task = ScanTask {
                list: list.clone(),
                ranges: Vec::new(),
                groups: Vec::new(),
            };
            for p in keep {
                let portion = &list.portions[p];
                task.ranges.push(list.portion_rows(portion));
                task.groups.extend(portion.group_start..portion.group_end);
            }
            tasks.push(task);
        }
        (tasks, stats)
    }

    pub fn edge_scan<F>(
        &self,
        input: &ActiveVertexSet,
        spec: &EdgeScanSpec,
        accums: &AccumulatorStore,
        udf: F,
    ) -> Result<StepOutput>
    where
        F: Fn(&EdgeView, &mut Emit) -> bool + Sync,
    {
        self.edge_scan_scoped(input, spec, accums, ScanScope::default(), udf)
    }

    /// Scans surviving portions of each edge list in parallel, one task per
    /// list. Entries whose scan-side endpoint is active are materialized
    /// and passed to `udf`; kept entries contribute their `spec.frontier`
    /// endpoint to the output.
    pub fn edge_scan_scoped<F>(
        &self,
        input: &ActiveVertexSet,
        spec: &EdgeScanSpec,
        accums: &AccumulatorStore,
        scope: ScanScope,
        udf: F,
    ) -> Result<StepOutput>
    where
        F: Fn(&EdgeView, &mut Emit) -> bool + Sync,
    {
        if self.catalog.schema.edge(&spec.edge_type).is_none() {
            return Err(Error::Query(format!("unknown edge type {}", spec.edge_type)));
        }
        let (tasks, mut stats) = self.scan_tasks(input, spec, scope);
        if self.cfg.prefetch {
            stats.prefetched += self.prefetch_scan(input, spec, &tasks)? as u64;
        }
        let outs = run_tasks(tasks.len(), self.cfg.parallelism, |i| {
            self.scan_one(&tasks[i], input, spec, accums, scope.remote, &udf)
        })?;
        let mut out = StepOutput {
            stats,
            ..Default::default()
        };
        for (front, updates, s) in outs {
            out.frontier.union_with(&front);
            out.updates.extend(updates);
            out.stats.add(&s);
        }
        Ok(out)
    }

    fn prefetch_scan(&self, input: &ActiveVertexSet, spec: &EdgeScanSpec, tasks: &[ScanTask]) -> Result<usize> {
        let mut keys = Vec::new();
        for t in tasks {
            for &g in &t.groups {
                for c in &spec.edge_columns {
                    keys.push((CacheKey::new(t.list.edge_file_id, g, c), Flavor::Edge));
                }
            }
        }
        let mut n = self.cache.prefetch(keys);
        let scan_cols = match spec.scan_side() {
            Side::Source => &spec.src_columns,
            Side::Target => &spec.tgt_columns,
        };
        if !scan_cols.is_empty() {
            let cols = scan_cols.clone();
            n += self.cache.prefetch_for_frontier(input, &|_| cols.clone())?;
        }
        Ok(n)
    }

    fn scan_one<F>(
        &self,
        task: &ScanTask,
        input: &ActiveVertexSet,
        spec: &EdgeScanSpec,
        accums: &AccumulatorStore,
        remote: Option<&RemoteRows>,
        udf: &F,
    ) -> Result<(ActiveVertexSet, Vec<Update>, ScanStats)>
    where
        F: Fn(&EdgeView, &mut Emit) -> bool + Sync,
    {
        let list = &task.list;
        let file = list.edge_file_id;
        let mut edge_readers = Vec::new();
        for c in &spec.edge_columns {
            edge_readers.push(EdgeReader::new(&self.cache, file, c)?);
        }
        let mut src_side = SideReader::new(&self.cache, &spec.src_columns, remote.map(|r| (r, &r.src)));
        let mut tgt_side = SideReader::new(&self.cache, &spec.tgt_columns, remote.map(|r| (r, &r.tgt)));
        let mut ebuf: Vec<Option<Value>> = vec![None; spec.edge_columns.len()];
        let mut emit = Emit::new(accums);
        let mut front = FrontierBuilder::default();
        let active = ActiveLookup::new(input);
        let mut stats = ScanStats::default();
        let scan_out = spec.dir == Direction::Out;
        for range in &task.ranges {
            stats.edges_examined += range.len() as u64;
            for i in range.clone() {
                let (s, t) = list.entries[i];
                if !active.contains(if scan_out { s } else { t }) {
                    continue;
                }
                stats.edges_matched += 1;
                for (slot, r) in ebuf.iter_mut().zip(edge_readers.iter_mut()) {
                    *slot = Some(r.get(i as u64)?);
                }
                src_side.fill(s)?;
                tgt_side.fill(t)?;
                let eid = VertexId::new(file, i as u32);
                let view = EdgeView {
                    src: RowView::new(s, &spec.src_columns, &src_side.buf),
                    edge: RowView::new(eid, &spec.edge_columns, &ebuf),
                    tgt: RowView::new(t, &spec.tgt_columns, &tgt_side.buf),
                };
                emit.at(eid.packed());
                stats.udf_calls += 1;
                if udf(&view, &mut emit) {
                    front.insert(match spec.frontier {
                        Side::Source => s,
                        Side::Target => t,
                    });
                }
            }
        }
        Ok((front.finish(), emit.updates, stats))
    }
}

/// Fetches one side's columns for arbitrary vertices through the cache,
/// or from remote rows when the vertex is hosted elsewhere.
struct SideReader<'c> {
    cache: &'c ColumnCache,
    columns: &'c [String],
    readers: HashMap<u32, Vec<VertexReader<'c>>>,
    remote: Option<(&'c RemoteRows, &'c HashMap<VertexId, Vec<Value>>)>,
    buf: Vec<Option<Value>>,
}

impl<'c> SideReader<'c> {
    fn new(
        cache: &'c ColumnCache,
        columns: &'c [String],
        remote: Option<(&'c RemoteRows, &'c HashMap<VertexId, Vec<Value>>)>,
    ) -> Self {
        SideReader {
            cache,
            columns,
            readers: HashMap::new(),
            remote,
            buf: vec![None; columns.len()],
        }
    }

    fn fill(&mut self, v: VertexId) -> Result<()> {
        if self.columns.is_empty() {
            return Ok(());
        }
        if v.is_dangling() {
            self.buf.iter_mut().for_each(|b| *b = None);
            return Ok(());
        }
        if let Some((r, rows)) = self.remote {
            if !r.is_local(v) {
                match rows.get(&v) {
                    Some(vals) => {
                        for (b, x) in self.buf.iter_mut().zip(vals) {
                            *b = Some(x.clone());
                        }
                    }
                    None => self.buf.iter_mut().for_each(|b| *b = None),
                }
                return Ok(());
            }
        }
        let readers = match self.readers.entry(v.file_id()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let mut rs = Vec::with_capacity(self.columns.len());
                for c in self.columns {
                    rs.push(VertexReader::new(self.cache, v.file_id(), c)?);
                }
                e.insert(rs)
            }
        };
        for (b, r) in self.buf.iter_mut().zip(readers.iter_mut()) {
            *b = Some(r.get(v.row())?);
        }
        Ok(())
    }
}

/// Frontier membership with bitmaps indexed directly by file id; sparse
/// id spaces fall back to a map lookup.
struct ActiveLookup<'a> {
    set: &'a ActiveVertexSet,
    direct: Vec<Option<&'a FileBitmap>>,
}

impl<'a> ActiveLookup<'a> {
    const MAX_DIRECT: u32 = 1 << 16;

    fn new(set: &'a ActiveVertexSet) -> Self {
        let mut direct = Vec::new();
        if set.files().all(|(f, _)| f < Self::MAX_DIRECT) {
            for (f, b) in set.files() {
                if direct.len() <= f as usize {
                    direct.resize(f as usize + 1, None);
                }
                direct[f as usize] = Some(b);
            }
        }
        ActiveLookup { set, direct }
    }

    #[inline]
    fn contains(&self, v: VertexId) -> bool {
        let f = v.file_id();
        if f < Self::MAX_DIRECT {
            return self
                .direct
                .get(f as usize)
                .copied()
                .flatten()
                .is_some_and(|b| b.contains(v.row()));
        }
        self.set.contains(v)
    }
}

/// Builds a frontier with the last file's bitmap at hand.
#[derive(Default)]
pub(crate) struct FrontierBuilder {
    files: Vec<(u32, FileBitmap)>,
    last: usize,
}

impl FrontierBuilder {
    #[inline]
    pub(crate) fn insert(&mut self, v: VertexId) {
        let f = v.file_id();
        if self.files.get(self.last).map(|e| e.0) != Some(f) {
            self.last = match self.files.iter().position(|e| e.0 == f) {
                Some(i) => i,
                None => {
                    self.files.push((f, FileBitmap::default()));
                    self.files.len() - 1
                }
            };
        }
        self.files[self.last].1.insert(v.row());
    }

    pub(crate) fn finish(self) -> ActiveVertexSet {
        let mut set = ActiveVertexSet::new();
        for (f, b) in self.files {
            set.insert_bitmap(f, b);
        }
        set
    }
}

/// Runs `n` tasks on up to `parallelism` threads; results are in task
/// order. The first error wins.
pub fn run_tasks<T, F>(n: usize, parallelism: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if n == 0 {
        return Ok(Vec::new());
    }
    let threads = parallelism.max(1).min(n);
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    let results: Vec<Vec<(usize, Result<T>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        let r = f(i);
                        let failed = r.is_err();
                        done.push((i, r));
                        if failed {
                            next.store(n, Ordering::Relaxed);
                            break;
                        }
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("task panicked")).collect()
    });
    for (i, r) in results.into_iter().flatten() {
        slots[i] = Some(r);
    }
    let mut out = Vec::with_capacity(n);
    let mut first_err = None;
    for s in slots {
        match s {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => {
                first_err.get_or_insert(e);
            }
            None => {}
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
