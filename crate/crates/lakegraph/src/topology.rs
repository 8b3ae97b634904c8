//! Topology-only startup: vertex key mapping, edge lists with transformed
//! ids, dangling keys, and materialized topology files.
//!
//! Only primary-key and foreign-key column chunks are read. Downloads run
//! on an I/O worker group with at most `pipeline_depth` requests in flight
//! while compute workers decode and translate completed chunks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::bounded;
use lakegraph_core::hash::Fnv1a;
use lakegraph_core::{EdgeList, Portion, Value, VertexId};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, FileKind};
use crate::error::{Error, Result};
use crate::lgc::{self, EncodedChunk, Footer};
use crate::store::ObjectStore;

pub const LGT_MAGIC: &[u8; 4] = b"LGT1";
pub const TOPOLOGY_PREFIX: &str = "topology/";
pub const IDM_BATCH: usize = 4096;

/// Dangling keys of the last materialized build.
pub const DANGLING_PATH: &str = "topology/dangling.json";

pub fn topology_path(edge_file_id: u32, version: u64) -> String {
    format!("{TOPOLOGY_PREFIX}{edge_file_id}-{version}.lgt")
}

/// A primary or foreign key value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RawKey {
    Int(i64),
    Str(String),
}

impl RawKey {
    pub fn from_value(v: Value) -> Result<RawKey> {
        match v {
            Value::Int64(i) => Ok(RawKey::Int(i)),
            Value::Str(s) => Ok(RawKey::Str(s)),
            other => Err(Error::Catalog(format!(
                "key value of kind {} is not INT64 or STRING",
                other.kind()
            ))),
        }
    }
}

impl std::fmt::Display for RawKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RawKey::Int(i) => write!(f, "{i}"),
            RawKey::Str(s) => f.write_str(s),
        }
    }
}

type IdmKey = (u16, RawKey);

fn shard_of(key: &IdmKey, shards: usize) -> usize {
    let mut h = Fnv1a::default();
    key.hash(&mut h);
    (h.finish() % shards as u64) as usize
}

/// Raw key to transformed id, per vertex type. Lives only while edge lists
/// are being built.
pub struct VertexIdm {
    shards: Vec<HashMap<IdmKey, VertexId>>,
}

impl VertexIdm {
    pub fn get(&self, vertex_type: u16, key: &RawKey) -> Option<VertexId> {
        let k = (vertex_type, key.clone());
        self.shards[shard_of(&k, self.shards.len())].get(&k).copied()
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }
}

/// Concurrent builder: compute workers group entries per shard and insert
/// them a batch at a time.
pub struct IdmBuilder {
    shards: Vec<Mutex<HashMap<IdmKey, VertexId>>>,
    type_names: Vec<String>,
}

impl IdmBuilder {
    pub fn new(shards: usize, type_names: Vec<String>) -> Self {
        IdmBuilder {
            shards: (0..shards.max(1)).map(|_| Mutex::new(HashMap::new())).collect(),
            type_names,
        }
    }

    /// Inserts `rows[i]` as row `first_row + i` of `file`.
    pub fn insert_chunk(&self, vertex_type: u16, file: u32, first_row: u32, keys: Vec<Value>) -> Result<()> {
        let s = self.shards.len();
        let mut buffers: Vec<Vec<(IdmKey, VertexId)>> = vec![Vec::new(); s];
        for (i, v) in keys.into_iter().enumerate() {
            let key = (vertex_type, RawKey::from_value(v)?);
            let sh = shard_of(&key, s);
            buffers[sh].push((key, VertexId::new(file, first_row + i as u32)));
            if buffers[sh].len() >= IDM_BATCH {
                self.flush(sh, &mut buffers[sh])?;
            }
        }
        for (sh, buf) in buffers.iter_mut().enumerate() {
            if !buf.is_empty() {
                self.flush(sh, buf)?;
            }
        }
        Ok(())
    }

    fn flush(&self, shard: usize, buf: &mut Vec<(IdmKey, VertexId)>) -> Result<()> {
        let mut map = self.shards[shard].lock();
        for (key, id) in buf.drain(..) {
            match map.entry(key) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(id);
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    let first = *e.get();
                    let (a, b) = if first < id { (first, id) } else { (id, first) };
                    return Err(Error::DuplicateKey {
                        vertex_type: self.type_names[e.key().0 as usize].clone(),
                        key: e.key().1.to_string(),
                        first_file: a.file_id(),
                        first_row: a.row(),
                        second_file: b.file_id(),
                        second_row: b.row(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> VertexIdm {
        VertexIdm {
            shards: self.shards.into_iter().map(Mutex::into_inner).collect(),
        }
    }
}

/// Ids under reserved file 0 for keys no vertex table contains. Each
/// distinct `(vertex type, key)` gets one id; ids are handed out in the
/// order keys are presented.
#[derive(Debug, Default)]
pub struct DanglingCounter {
    next: u32,
    map: HashMap<IdmKey, VertexId>,
    keys: Vec<(String, RawKey)>,
}

impl DanglingCounter {
    pub fn resolve(&mut self, vertex_type: u16, type_name: &str, key: RawKey) -> VertexId {
        if let Some(&id) = self.map.get(&(vertex_type, key.clone())) {
            return id;
        }
        let id = VertexId::new(VertexId::DANGLING_FILE, self.next);
        self.next += 1;
        self.keys.push((type_name.to_string(), key.clone()));
        self.map.insert((vertex_type, key), id);
        id
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `(vertex type, raw key)` of dangling row `row`.
    pub fn key_of(&self, row: u32) -> Option<&(String, RawKey)> {
        self.keys.get(row as usize)
    }

    pub fn lookup(&self, vertex_type: u16, key: &RawKey) -> Option<VertexId> {
        self.map.get(&(vertex_type, key.clone())).copied()
    }
}

/// Dangling keys persisted with the lists whose entries refer to them.
#[derive(Serialize, Deserialize)]
struct DanglingImage {
    /// `(edge file, topology version)` of every list with dangling entries.
    lists: Vec<(u32, u64)>,
    keys: Vec<(String, RawKey)>,
}

fn has_dangling(list: &EdgeList) -> bool {
    list.entries.iter().any(|(s, t)| s.is_dangling() || t.is_dangling())
}

/// Restores the dangling keys for `lists` if the persisted image was
/// written by the build that produced them.
fn load_dangling(
    catalog: &Catalog,
    lists: &BTreeMap<u32, Arc<EdgeList>>,
    versions: &BTreeMap<u32, u64>,
) -> Result<Option<DanglingCounter>> {
    let needed: BTreeSet<(u32, u64)> = lists
        .iter()
        .filter(|(_, l)| has_dangling(l))
        .map(|(&f, _)| (f, versions[&f]))
        .collect();
    if needed.is_empty() {
        return Ok(Some(DanglingCounter::default()));
    }
    let bytes = match catalog.store.get_all(DANGLING_PATH) {
        Ok(b) => b,
        Err(Error::NotFound(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let Ok(image) = serde_json::from_slice::<DanglingImage>(&bytes) else {
        return Ok(None);
    };
    let built: BTreeSet<(u32, u64)> = image.lists.into_iter().collect();
    if !needed.is_subset(&built) {
        return Ok(None);
    }
    let mut d = DanglingCounter::default();
    for (name, key) in image.keys {
        let Some(t) = catalog.schema.vertices.iter().position(|v| v.name == name) else {
            return Ok(None);
        };
        d.resolve(t as u16, &name, key);
    }
    Ok(Some(d))
}

// ---------------------------------------------------------------------------
// LGT codec

pub fn encode_lgt(list: &EdgeList, version: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + list.entries.len() * 16 + list.portions.len() * 24);
    out.extend_from_slice(LGT_MAGIC);
    out.extend_from_slice(&list.edge_file_id.to_le_bytes());
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(list.entries.len() as u64).to_le_bytes());
    for (s, t) in &list.entries {
        out.extend_from_slice(&s.packed().to_le_bytes());
        out.extend_from_slice(&t.packed().to_le_bytes());
    }
    out.extend_from_slice(&(list.portions.len() as u32).to_le_bytes());
    for p in &list.portions {
        out.extend_from_slice(&p.group_start.to_le_bytes());
        out.extend_from_slice(&p.group_end.to_le_bytes());
        out.extend_from_slice(&p.min_src.to_le_bytes());
        out.extend_from_slice(&p.max_src.to_le_bytes());
    }
    out.extend_from_slice(LGT_MAGIC);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedLgt {
    pub edge_file_id: u32,
    pub version: u64,
    pub entries: Vec<(VertexId, VertexId)>,
    pub portions: Vec<Portion>,
}

pub fn decode_lgt(bytes: &[u8]) -> Result<DecodedLgt> {
    let bad = |d: &str| Error::malformed("topology file", d);
    if bytes.len() < 4 + 4 + 8 + 8 + 4 + 4 || &bytes[..4] != LGT_MAGIC || &bytes[bytes.len() - 4..] != LGT_MAGIC {
        return Err(bad("missing magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let edge_file_id = u32_at(4);
    let version = u64_at(8);
    let n = u64_at(16) as usize;
    let mut pos = 24;
    let entries_end = n
        .checked_mul(16)
        .and_then(|b| b.checked_add(pos))
        .filter(|&e| e + 8 <= bytes.len())
        .ok_or_else(|| bad("entry count exceeds file"))?;
    let mut entries = Vec::with_capacity(n);
    while pos < entries_end {
        entries.push((VertexId(u64_at(pos)), VertexId(u64_at(pos + 8))));
        pos += 16;
    }
    let pc = u32_at(pos) as usize;
    pos += 4;
    if pos + pc * 24 + 4 != bytes.len() {
        return Err(bad("portion count does not match file size"));
    }
    let mut portions = Vec::with_capacity(pc);
    for _ in 0..pc {
        portions.push(Portion {
            group_start: u32_at(pos),
            group_end: u32_at(pos + 4),
            min_src: u64_at(pos + 8),
            max_src: u64_at(pos + 16),
        });
        pos += 24;
    }
    Ok(DecodedLgt {
        edge_file_id,
        version,
        entries,
        portions,
    })
}

// ---------------------------------------------------------------------------
// Pipelined fetch/compute

/// Runs `fetch` on `depth` I/O threads and `compute` on `parallelism`
/// compute threads. Results come back in job order. The first error stops
/// both groups from picking up new work.
pub fn pipeline<J, D, R, F, C>(jobs: Vec<J>, depth: usize, parallelism: usize, fetch: F, compute: C) -> Result<Vec<R>>
where
    J: Send + Sync,
    D: Send,
    R: Send,
    F: Fn(&J) -> Result<D> + Sync,
    C: Fn(&J, D) -> Result<R> + Sync,
{
    let n = jobs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let depth = depth.max(1);
    let parallelism = parallelism.max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let first_err: Mutex<Option<Error>> = Mutex::new(None);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    let (tx, rx) = bounded::<(usize, D)>(depth);
    let fail = |e: Error| {
        failed.store(true, Ordering::SeqCst);
        let mut slot = first_err.lock();
        if slot.is_none() {
            *slot = Some(e);
        }
    };
    std::thread::scope(|s| {
        for _ in 0..depth {
            let tx = tx.clone();
            let (next, failed, jobs, fetch, fail) = (&next, &failed, &jobs, &fetch, &fail);
            s.spawn(move || loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                match fetch(&jobs[i]) {
                    Ok(d) => {
                        if tx.send((i, d)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        fail(e);
                        break;
                    }
                }
            });
        }
        drop(tx);
        for _ in 0..parallelism {
            let rx = rx.clone();
            let (failed, jobs, compute, fail, results) = (&failed, &jobs, &compute, &fail, &results);
            s.spawn(move || {
                for (i, d) in rx.iter() {
                    if failed.load(Ordering::SeqCst) {
                        continue;
                    }
                    match compute(&jobs[i], d) {
                        Ok(r) => results.lock()[i] = Some(r),
                        Err(e) => fail(e),
                    }
                }
            });
        }
    });
    if let Some(e) = first_err.into_inner() {
        return Err(e);
    }
    Ok(results
        .into_inner()
        .into_iter()
        .map(|r| r.expect("job completed"))
        .collect())
}

// ---------------------------------------------------------------------------
// Startup

#[derive(Clone, Copy, Debug)]
pub struct StartupConfig {
    pub parallelism: usize,
    pub pipeline_depth: usize,
    /// Write built edge lists back as topology files.
    pub materialize: bool,
    /// Load topology files when present and current.
    pub reuse_materialized: bool,
}

impl Default for StartupConfig {
    fn default() -> Self {
        StartupConfig {
            parallelism: 4,
            pipeline_depth: 8,
            materialize: true,
            reuse_materialized: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PhaseTiming {
    /// Catalog, manifests and footers.
    pub connect: Duration,
    pub idm_build: Duration,
    /// Building and loading edge lists.
    pub edge_list_build: Duration,
    pub persist: Duration,
    pub total: Duration,
}

/// Edge lists of every edge file, immutable once built.
#[derive(Debug, Default)]
pub struct Topology {
    pub lists: BTreeMap<u32, Arc<EdgeList>>,
    pub dangling: DanglingCounter,
}

impl Topology {
    /// Edge lists of one edge type, ascending by file id.
    pub fn lists_of_type<'a>(&'a self, edge_type: &'a str) -> impl Iterator<Item = &'a Arc<EdgeList>> + 'a {
        self.lists.values().filter(move |l| l.edge_type == edge_type)
    }

    pub fn edge_count(&self) -> usize {
        self.lists.values().map(|l| l.len()).sum()
    }
}

#[derive(Debug)]
pub struct StartupReport {
    pub timing: PhaseTiming,
    pub rebuilt: Vec<u32>,
    pub loaded: Vec<u32>,
    /// Entries in the vertex key mapping before it was dropped.
    pub idm_entries: usize,
}

fn key_chunk_jobs(footer: &Footer, file: u32, path: &str, column: &str, tag: u8) -> Result<Vec<ChunkJob>> {
    let col = footer
        .column_index(column)
        .ok_or_else(|| Error::Catalog(format!("key column {column} missing")).in_file(file, path))?;
    let mut first_row = 0u64;
    Ok(footer
        .row_groups
        .iter()
        .enumerate()
        .map(|(g, rg)| {
            let job = ChunkJob {
                file,
                path: path.to_string(),
                group: g,
                col,
                first_row: first_row as u32,
                side: tag,
            };
            first_row += rg.row_count;
            job
        })
        .collect())
}

/// Source ids, target ids and unresolved `(row, side, key)` of one edge file.
type FileEnds = (Vec<Option<VertexId>>, Vec<Option<VertexId>>, Vec<(u32, u8, RawKey)>);

struct ChunkJob {
    file: u32,
    path: String,
    group: usize,
    col: usize,
    first_row: u32,
    /// 0 = vertex key, 1 = source key, 2 = target key.
    side: u8,
}

enum Translated {
    Resolved(Vec<VertexId>),
    /// Some keys were missing from the mapping; `None` marks them.
    Partial(Vec<Option<VertexId>>, Vec<(usize, RawKey)>),
}

/// Topology-only startup against a catalog. Edge lists whose topology file
/// is present and current are loaded; the rest are rebuilt from key
/// columns.
pub fn startup(catalog: &Catalog, cfg: &StartupConfig) -> Result<(Topology, StartupReport)> {
    let t0 = Instant::now();
    let store: &dyn ObjectStore = catalog.store.as_ref();
    let reg = &catalog.registry;
    let schema = &catalog.schema;

    let edge_files: Vec<u32> = reg
        .entries()
        .filter(|(_, e)| e.kind == FileKind::Edge)
        .map(|(id, _)| id)
        .collect();

    let mut versions = BTreeMap::new();
    for &f in &edge_files {
        versions.insert(f, reg.topology_version(schema, f)?);
    }
    let existing: BTreeSet<String> = if cfg.reuse_materialized {
        store.list(TOPOLOGY_PREFIX)?.into_iter().collect()
    } else {
        BTreeSet::new()
    };
    let mut to_load: Vec<u32> = edge_files
        .iter()
        .copied()
        .filter(|f| existing.contains(&topology_path(*f, versions[f])))
        .collect();

    // Edge footers are needed either way for row-group offsets.
    fetch_footers(catalog, &edge_files, cfg)?;
    let connect = t0.elapsed();

    let t_edges = Instant::now();
    let decoded = pipeline(
        to_load.clone(),
        cfg.pipeline_depth,
        cfg.parallelism,
        |&f| store.get_all(&topology_path(f, versions[&f])),
        |&f, bytes| {
            Ok(decode_lgt(&bytes)
                .ok()
                .filter(|d| d.edge_file_id == f && d.version == versions[&f]))
        },
    )?;
    let mut lists = BTreeMap::new();
    for (&f, d) in to_load.iter().zip(decoded) {
        let footer = catalog.footer(f)?;
        let Some(d) = d else { continue };
        if d.entries.len() as u64 != footer.row_count() {
            continue;
        }
        let et = catalog.edge_type_of_file(f).unwrap();
        let mut list = EdgeList::new(f, et.name.clone(), Vec::new(), &[]);
        list.entries = d.entries;
        list.portions = d.portions;
        list.group_offsets = lakegraph_core::edgelist::offsets_from_rows(&footer.group_rows());
        lists.insert(f, Arc::new(list));
    }
    let loaded_time = t_edges.elapsed();

    let mut rebuild: BTreeSet<u32> = edge_files.iter().copied().filter(|f| !lists.contains_key(f)).collect();
    let mut restored = None;
    if rebuild.is_empty() {
        restored = load_dangling(catalog, &lists, &versions)?;
    }
    if restored.is_none() {
        // Dangling ids are only consistent within one build.
        let with_dangling: Vec<u32> = lists.iter().filter(|(_, l)| has_dangling(l)).map(|(&f, _)| f).collect();
        for f in with_dangling {
            lists.remove(&f);
            rebuild.insert(f);
        }
    }
    to_load.retain(|f| lists.contains_key(f));

    let mut timing = PhaseTiming {
        connect,
        ..Default::default()
    };
    let mut dangling = restored.unwrap_or_default();
    let mut idm_entries = 0;
    let rebuilt: Vec<u32> = rebuild.iter().copied().collect();
    if !rebuilt.is_empty() {
        let t_idm = Instant::now();
        let needed_types: BTreeSet<&str> = rebuilt
            .iter()
            .flat_map(|&f| {
                let et = catalog.edge_type_of_file(f).unwrap();
                [et.src_type.as_str(), et.tgt_type.as_str()]
            })
            .collect();
        let idm = build_idm(catalog, &needed_types, cfg)?;
        idm_entries = idm.len();
        timing.idm_build = t_idm.elapsed();

        let t_build = Instant::now();
        let built = build_edge_lists(catalog, &rebuilt, &idm, &mut dangling, cfg)?;
        drop(idm);
        for l in built {
            lists.insert(l.edge_file_id, Arc::new(l));
        }
        timing.edge_list_build = t_build.elapsed() + loaded_time;

        if cfg.materialize {
            let t_persist = Instant::now();
            pipeline(
                rebuilt.clone(),
                cfg.pipeline_depth,
                1,
                |&f| store.put(&topology_path(f, versions[&f]), &encode_lgt(&lists[&f], versions[&f])),
                |_, ()| Ok(()),
            )?;
            let image = DanglingImage {
                lists: lists
                    .iter()
                    .filter(|(_, l)| has_dangling(l))
                    .map(|(&f, _)| (f, versions[&f]))
                    .collect(),
                keys: dangling.keys.clone(),
            };
            store.put(DANGLING_PATH, &serde_json::to_vec(&image)?)?;
            let mut current: BTreeSet<String> = versions.iter().map(|(&f, &v)| topology_path(f, v)).collect();
            current.insert(DANGLING_PATH.to_string());
            for stale in existing.iter().filter(|p| !current.contains(*p)) {
                store.delete(stale)?;
            }
            timing.persist = t_persist.elapsed();
        }
    } else {
        timing.edge_list_build = loaded_time;
    }
    timing.total = t0.elapsed();
    Ok((
        Topology { lists, dangling },
        StartupReport {
            timing,
            rebuilt,
            loaded: to_load,
            idm_entries,
        },
    ))
}

fn fetch_footers(catalog: &Catalog, files: &[u32], cfg: &StartupConfig) -> Result<()> {
    let missing: Vec<u32> = files
        .iter()
        .copied()
        .filter(|&f| catalog.footers.cached(f).is_none())
        .collect();
    pipeline(missing, cfg.pipeline_depth, 1, |&f| catalog.footer(f), |_, _| Ok(()))?;
    Ok(())
}

fn fetch_chunk(store: &dyn ObjectStore, catalog: &Catalog, j: &ChunkJob) -> Result<EncodedChunk> {
    let footer = catalog.footer(j.file)?;
    lgc::read_column_chunk_at(store, &j.path, &footer, j.group, j.col).map_err(|e| e.in_file(j.file, &j.path))
}

fn type_index(catalog: &Catalog, name: &str) -> u16 {
    catalog.schema.vertices.iter().position(|v| v.name == name).unwrap() as u16
}

/// Builds the key mapping for the given vertex types from their key columns.
pub fn build_idm(catalog: &Catalog, types: &BTreeSet<&str>, cfg: &StartupConfig) -> Result<VertexIdm> {
    let store = catalog.store.as_ref();
    let mut files = Vec::new();
    for t in types {
        let vt = catalog.schema.vertex(t).unwrap();
        for f in catalog.registry.files_of(&vt.table) {
            files.push((f, type_index(catalog, t), vt.key.clone()));
        }
    }
    let ids: Vec<u32> = files.iter().map(|f| f.0).collect();
    fetch_footers(catalog, &ids, cfg)?;
    let mut jobs = Vec::new();
    let mut job_type = Vec::new();
    for (f, ti, key) in &files {
        let path = &catalog.registry.entry(*f)?.path;
        let js = key_chunk_jobs(&*catalog.footer(*f)?, *f, path, key, 0)?;
        job_type.extend(std::iter::repeat_n(*ti, js.len()));
        jobs.extend(js);
    }
    let jobs: Vec<(ChunkJob, u16)> = jobs.into_iter().zip(job_type).collect();
    let names = catalog.schema.vertices.iter().map(|v| v.name.clone()).collect();
    let builder = IdmBuilder::new(4 * cfg.parallelism.max(1), names);
    pipeline(
        jobs,
        cfg.pipeline_depth,
        cfg.parallelism,
        |(j, _)| fetch_chunk(store, catalog, j),
        |(j, ti), chunk| {
            let keys = chunk.decode_all().map_err(|e| e.in_file(j.file, &j.path))?;
            builder
                .insert_chunk(*ti, j.file, j.first_row, keys)
                .map_err(|e| match e {
                    e @ Error::DuplicateKey { .. } => e,
                    e => e.in_file(j.file, &j.path),
                })
        },
    )?;
    Ok(builder.finish())
}

/// Builds edge lists for `files` against a complete mapping.
pub fn build_edge_lists(
    catalog: &Catalog,
    files: &[u32],
    idm: &VertexIdm,
    dangling: &mut DanglingCounter,
    cfg: &StartupConfig,
) -> Result<Vec<EdgeList>> {
    let store = catalog.store.as_ref();
    fetch_footers(catalog, files, cfg)?;
    let mut jobs = Vec::new();
    for &f in files {
        let e = catalog.registry.entry(f)?;
        let et = catalog.edge_type_of_file(f).unwrap();
        let footer = catalog.footer(f)?;
        let src = key_chunk_jobs(&footer, f, &e.path, &et.src_key, 1)?;
        let tgt = key_chunk_jobs(&footer, f, &e.path, &et.tgt_key, 2)?;
        jobs.extend(src.into_iter().zip(tgt).flat_map(|(a, b)| [a, b]));
    }
    let translated = pipeline(
        jobs,
        cfg.pipeline_depth,
        cfg.parallelism,
        |j| fetch_chunk(store, catalog, j),
        |j, chunk| {
            let et = catalog.edge_type_of_file(j.file).unwrap();
            let ti = type_index(catalog, if j.side == 1 { &et.src_type } else { &et.tgt_type });
            let keys = chunk.decode_all().map_err(|e| e.in_file(j.file, &j.path))?;
            let mut out = Vec::with_capacity(keys.len());
            let mut missing = Vec::new();
            for (i, v) in keys.into_iter().enumerate() {
                let k = RawKey::from_value(v).map_err(|e| e.in_file(j.file, &j.path))?;
                match idm.get(ti, &k) {
                    Some(id) => out.push(Some(id)),
                    None => {
                        out.push(None);
                        missing.push((i, k));
                    }
                }
            }
            Ok(if missing.is_empty() {
                Translated::Resolved(out.into_iter().map(Option::unwrap).collect())
            } else {
                Translated::Partial(out, missing)
            })
        },
    )?;

    // Stitch chunks back into per-file arrays. Dangling keys are assigned
    // in (file, row, side) order so rebuilds are reproducible.
    let mut per_file: BTreeMap<u32, FileEnds> = BTreeMap::new();
    let mut it = translated.into_iter();
    for &f in files {
        let footer = catalog.footer(f)?;
        let n = footer.row_count() as usize;
        let mut src = Vec::with_capacity(n);
        let mut tgt = Vec::with_capacity(n);
        let mut missing = Vec::new();
        let mut first_row = 0u32;
        for rg in &footer.row_groups {
            for (side, dst) in [(1u8, &mut src), (2u8, &mut tgt)] {
                match it.next().expect("one result per chunk") {
                    Translated::Resolved(ids) => dst.extend(ids.into_iter().map(Some)),
                    Translated::Partial(ids, miss) => {
                        dst.extend(ids);
                        missing.extend(miss.into_iter().map(|(i, k)| (first_row + i as u32, side, k)));
                    }
                }
            }
            first_row += rg.row_count as u32;
        }
        if src.len() != n || tgt.len() != n {
            return Err(
                Error::Catalog("key columns disagree on row count".into()).in_file(f, &catalog.registry.entry(f)?.path)
            );
        }
        missing.sort_by_key(|a| (a.0, a.1));
        per_file.insert(f, (src, tgt, missing));
    }
    let mut out = Vec::with_capacity(files.len());
    for (f, (mut src, mut tgt, missing)) in per_file {
        let et = catalog.edge_type_of_file(f).unwrap();
        for (row, side, key) in missing {
            let ty = if side == 1 { &et.src_type } else { &et.tgt_type };
            let id = dangling.resolve(type_index(catalog, ty), ty, key);
            if side == 1 {
                src[row as usize] = Some(id);
            } else {
                tgt[row as usize] = Some(id);
            }
        }
        let entries = src
            .into_iter()
            .zip(tgt)
            .map(|(s, t)| (s.unwrap(), t.unwrap()))
            .collect();
        let footer = catalog.footer(f)?;
        out.push(EdgeList::new(f, et.name.clone(), entries, &footer.group_rows()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_preserves_order_and_bounds_in_flight() {
        let in_flight = std::sync::atomic::AtomicUsize::new(0);
        let peak = std::sync::atomic::AtomicUsize::new(0);
        let out = pipeline(
            (0..50).collect::<Vec<u32>>(),
            3,
            2,
            |&j| {
                let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(1));
                in_flight.fetch_sub(1, Ordering::SeqCst);
                Ok(j * 2)
            },
            |_, d| Ok(d + 1),
        )
        .unwrap();
        assert_eq!(out, (0..50).map(|j| j * 2 + 1).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn pipeline_reports_first_error() {
        let r = pipeline(
            (0..20).collect::<Vec<u32>>(),
            2,
            2,
            |&j| {
                if j == 7 {
                    Err(Error::NotFound("x".into()))
                } else {
                    Ok(j)
                }
            },
            |_, d| Ok(d),
        );
        assert!(matches!(r, Err(Error::NotFound(_))));
    }

    #[test]
    fn lgt_round_trip() {
        let entries = vec![
            (VertexId::new(1, 0), VertexId::new(1, 2)),
            (VertexId::new(1, 1), VertexId::new(0, 0)),
            (VertexId::new(2, 9), VertexId::new(1, 0)),
        ];
        let list = EdgeList::new(5, "Knows", entries.clone(), &[2, 1]);
        let bytes = encode_lgt(&list, 42);
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 3 * 16 + 4 + 2 * 24 + 4);
        let d = decode_lgt(&bytes).unwrap();
        assert_eq!(d.edge_file_id, 5);
        assert_eq!(d.version, 42);
        assert_eq!(d.entries, entries);
        assert_eq!(d.portions, list.portions);
        assert!(decode_lgt(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn duplicate_keys_report_both_rows() {
        let b = IdmBuilder::new(4, vec!["Person".into()]);
        b.insert_chunk(0, 1, 0, vec![Value::Int64(1), Value::Int64(2)]).unwrap();
        let err = b.insert_chunk(0, 2, 5, vec![Value::Int64(2)]).unwrap_err();
        match err {
            Error::DuplicateKey {
                first_file,
                first_row,
                second_file,
                second_row,
                ..
            } => {
                assert_eq!((first_file, first_row, second_file, second_row), (1, 1, 2, 5));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn dangling_dedup() {
        let mut d = DanglingCounter::default();
        let a = d.resolve(0, "Person", RawKey::Str("X".into()));
        let b = d.resolve(0, "Person", RawKey::Str("X".into()));
        let c = d.resolve(1, "Tag", RawKey::Str("X".into()));
        assert_eq!(a, b);
        assert!(a.is_dangling());
        assert_ne!(a, c);
        assert_eq!(c.row(), 1);
    }
}
