//! Two-tier column-chunk cache.
//!
//! Memory holds cache units keyed by `(file, row group, column)`:
//!
//! * vertex units keep a full-capacity value array of which a contiguous
//!   prefix is decoded; a request past the prefix decodes up to it;
//! * edge units keep only the encoded chunk; readers decode fixed windows.
//!
//! Residency is governed by a sweep clock (vertex priority 3, edge 1).
//! Evicted vertex units write their decoded prefix to the disk tier so a
//! later reload skips decoding; evicted edge units are dropped, their raw
//! chunk staying on disk. The disk tier runs its own clock with a uniform
//! priority of 1 and deletes its victims. Nothing is written back to the
//! object store.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{unbounded, Sender};
use lakegraph_core::clock::Handle;
use lakegraph_core::hash::{fnv1a64, Fnv1a};
use lakegraph_core::{ActiveVertexSet, ChunkDecoder, ColumnKind, Encoding, SweepClock, Value};
use parking_lot::{Condvar, Mutex, RwLock};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::lgc::{self, Footer};
use crate::store::ObjectStore;

pub const VERTEX_PRIORITY: u8 = 3;
pub const EDGE_PRIORITY: u8 = 1;
pub const DISK_PRIORITY: u8 = 1;
pub const DEFAULT_WINDOW: usize = 1024;
const IMAGE_MAGIC: &[u8; 4] = b"LGVC";
const ARENA_BLOCK: usize = 64 * 1024;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub file_id: u32,
    pub group: u32,
    pub column: Arc<str>,
}

impl CacheKey {
    pub fn new(file_id: u32, group: u32, column: &str) -> Self {
        CacheKey {
            file_id,
            group,
            column: Arc::from(column),
        }
    }

    /// Disk-tier path of the raw chunk.
    pub fn raw_path(&self) -> String {
        format!("cache/{}/{}/{}", self.file_id, self.group, self.column)
    }

    /// Disk-tier path of a flushed vertex image.
    pub fn image_path(&self) -> String {
        format!("cache/{}/{}/{}.img", self.file_id, self.group, self.column)
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.file_id, self.group, self.column)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    Vertex,
    Edge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexMode {
    /// Decoded-prefix value arrays.
    DecodedPrefix,
    /// Ablation: every lookup decodes the chunk from its start.
    NaiveRescan,
}

#[derive(Clone, Debug)]
pub struct CacheConfig {
    pub memory_budget: u64,
    pub disk_budget: u64,
    pub window_size: usize,
    pub vertex_mode: VertexMode,
    /// Ablation: edge chunks use decoded-prefix units too.
    pub edge_decoded_array: bool,
    pub prefetch_threads: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            memory_budget: 256 << 20,
            disk_budget: 1 << 30,
            window_size: DEFAULT_WINDOW,
            vertex_mode: VertexMode::DecodedPrefix,
            edge_decoded_array: false,
            prefetch_threads: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub memory_hits: u64,
    pub disk_image_loads: u64,
    pub disk_raw_loads: u64,
    pub store_fetches: u64,
    pub vertex_evictions: u64,
    pub edge_evictions: u64,
    pub image_flushes: u64,
    pub disk_evictions: u64,
    /// Prefix extensions of vertex units and window fills of edge readers.
    pub decode_calls: u64,
    pub values_decoded: u64,
    /// Decodes that started below a flushed prefix still on disk.
    pub redecodes_below_flushed: u64,
    pub corrupt_images: u64,
    pub prefetch_issued: u64,
    pub resident_bytes: u64,
    pub disk_bytes: u64,
}

#[derive(Default)]
struct Counters {
    memory_hits: AtomicU64,
    disk_image_loads: AtomicU64,
    disk_raw_loads: AtomicU64,
    store_fetches: AtomicU64,
    vertex_evictions: AtomicU64,
    edge_evictions: AtomicU64,
    image_flushes: AtomicU64,
    disk_evictions: AtomicU64,
    decode_calls: AtomicU64,
    values_decoded: AtomicU64,
    redecodes_below_flushed: AtomicU64,
    corrupt_images: AtomicU64,
    prefetch_issued: AtomicU64,
}

fn bump(c: &AtomicU64, n: u64) {
    c.fetch_add(n, Ordering::Relaxed);
}

/// Decode counters of one chunk across all of its unit incarnations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LineageStats {
    pub decode_calls: u64,
    pub values_decoded: u64,
}

// ---------------------------------------------------------------------------
// Value arrays

type StrSlot = (u32, u32, u32);

#[derive(Debug)]
enum Slots {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Date(Vec<i32>),
    Bool(Vec<bool>),
    Str {
        slots: Vec<StrSlot>,
        arenas: Vec<Vec<u8>>,
        /// Arena slot of every dictionary entry, filled on first use.
        dict: Option<Vec<StrSlot>>,
    },
}

fn slot_width(kind: ColumnKind) -> u64 {
    match kind {
        ColumnKind::Int64 | ColumnKind::Float64 => 8,
        ColumnKind::Date32 => 4,
        ColumnKind::Bool => 1,
        ColumnKind::String => 12,
    }
}

impl Slots {
    fn with_capacity(kind: ColumnKind, n: usize) -> Slots {
        match kind {
            ColumnKind::Int64 => Slots::Int(Vec::with_capacity(n)),
            ColumnKind::Float64 => Slots::Float(Vec::with_capacity(n)),
            ColumnKind::Date32 => Slots::Date(Vec::with_capacity(n)),
            ColumnKind::Bool => Slots::Bool(Vec::with_capacity(n)),
            ColumnKind::String => Slots::Str {
                slots: Vec::with_capacity(n),
                arenas: Vec::new(),
                dict: None,
            },
        }
    }

    fn get(&self, i: usize) -> Value {
        match self {
            Slots::Int(v) => Value::Int64(v[i]),
            Slots::Float(v) => Value::Float64(v[i]),
            Slots::Date(v) => Value::Date32(v[i]),
            Slots::Bool(v) => Value::Bool(v[i]),
            Slots::Str { slots, arenas, .. } => {
                let (b, o, l) = slots[i];
                let bytes = &arenas[b as usize][o as usize..(o + l) as usize];
                Value::Str(String::from_utf8(bytes.to_vec()).expect("arena holds utf-8"))
            }
        }
    }

    fn arena_push(arenas: &mut Vec<Vec<u8>>, s: &str) -> StrSlot {
        let fits = arenas
            .last()
            .is_some_and(|a| a.len() + s.len() <= ARENA_BLOCK.max(a.capacity()));
        if !fits {
            arenas.push(Vec::with_capacity(ARENA_BLOCK.max(s.len())));
        }
        let b = arenas.len() - 1;
        let a = &mut arenas[b];
        let off = a.len();
        a.extend_from_slice(s.as_bytes());
        (b as u32, off as u32, s.len() as u32)
    }

    /// Decodes `n` more values from `dec` onto the array.
    fn extend(&mut self, dec: &mut ChunkDecoder, raw: &[u8], n: u64) -> Result<()> {
        match self {
            Slots::Str { slots, arenas, dict } if dec.encoding() == Encoding::Dict => {
                if dict.is_none() {
                    let d: Vec<StrSlot> = dec
                        .dictionary()
                        .iter()
                        .map(|v| Slots::arena_push(arenas, v.as_str().unwrap_or_default()))
                        .collect();
                    *dict = Some(d);
                }
                let d = dict.as_ref().unwrap();
                for _ in 0..n {
                    slots.push(d[dec.next_dict_index(raw)? as usize]);
                }
            }
            Slots::Str { slots, arenas, .. } => {
                for _ in 0..n {
                    let v = dec.next_value(raw)?;
                    slots.push(Slots::arena_push(arenas, v.as_str().unwrap_or_default()));
                }
            }
            Slots::Int(out) => {
                for _ in 0..n {
                    out.push(dec.next_value(raw)?.as_i64().unwrap());
                }
            }
            Slots::Float(out) => {
                for _ in 0..n {
                    out.push(dec.next_value(raw)?.as_f64().unwrap());
                }
            }
            Slots::Date(out) => {
                for _ in 0..n {
                    match dec.next_value(raw)? {
                        Value::Date32(d) => out.push(d),
                        v => return Err(Error::Cache(format!("expected DATE32, decoded {}", v.kind()))),
                    }
                }
            }
            Slots::Bool(out) => {
                for _ in 0..n {
                    match dec.next_value(raw)? {
                        Value::Bool(b) => out.push(b),
                        v => return Err(Error::Cache(format!("expected BOOL, decoded {}", v.kind()))),
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Units

/// Where an encoded chunk lives and how to decode it.
#[derive(Clone, Debug)]
struct ChunkInfo {
    path: String,
    footer: Arc<Footer>,
    col: usize,
    kind: ColumnKind,
    encoding: Encoding,
    row_count: u64,
    byte_length: u64,
}

struct VertexState {
    raw: Option<Arc<Vec<u8>>>,
    decoder: Option<ChunkDecoder>,
    values: Option<Slots>,
    prefix: u64,
}

pub struct VertexUnit {
    key: CacheKey,
    info: ChunkInfo,
    state: RwLock<VertexState>,
    pins: AtomicU32,
}

pub struct EdgeUnit {
    key: CacheKey,
    info: ChunkInfo,
    raw: Arc<Vec<u8>>,
    pins: AtomicU32,
}

#[derive(Clone)]
enum Unit {
    Vertex(Arc<VertexUnit>),
    Edge(Arc<EdgeUnit>),
}

impl Unit {
    fn pins(&self) -> u32 {
        match self {
            Unit::Vertex(u) => u.pins.load(Ordering::SeqCst),
            Unit::Edge(u) => u.pins.load(Ordering::SeqCst),
        }
    }
}

struct Resident {
    handle: Handle,
    unit: Unit,
    charge: u64,
}

struct MemoryTier {
    clock: SweepClock<CacheKey>,
    map: HashMap<CacheKey, Resident>,
    used: u64,
}

struct DiskTier {
    store: Arc<dyn ObjectStore>,
    budget: u64,
    clock: SweepClock<String>,
    map: HashMap<String, (Handle, u64)>,
    used: u64,
    /// Flushed prefix length of images currently on disk.
    flushed: HashMap<CacheKey, u64>,
}

impl DiskTier {
    fn contains(&self, path: &str) -> bool {
        self.map.contains_key(path)
    }

    fn touch(&mut self, path: &str) {
        if let Some(&(h, _)) = self.map.get(path) {
            self.clock.touch(h, DISK_PRIORITY);
        }
    }

    fn remove(&mut self, path: &str) -> Result<()> {
        if let Some((h, n)) = self.map.remove(path) {
            self.clock.remove(h);
            self.used -= n;
            self.store.delete(path)?;
            if path.ends_with(".img") {
                self.flushed.retain(|k, _| k.image_path() != path);
            }
        }
        Ok(())
    }

    /// Stores `bytes`, evicting older entries as needed. Objects larger
    /// than the whole budget are not stored.
    fn put(&mut self, path: &str, bytes: &[u8], counters: &Counters) -> Result<bool> {
        let n = bytes.len() as u64;
        self.remove(path)?;
        if n > self.budget {
            return Ok(false);
        }
        while self.used + n > self.budget {
            let Some((_, victim)) = self.clock.evict(|_, _| false) else {
                return Ok(false);
            };
            let (_, size) = self.map.remove(&victim).unwrap();
            self.used -= size;
            self.store.delete(&victim)?;
            if victim.ends_with(".img") {
                self.flushed.retain(|k, _| k.image_path() != victim);
            }
            bump(&counters.disk_evictions, 1);
        }
        self.store.put(path, bytes)?;
        let h = self.clock.insert(path.to_string(), DISK_PRIORITY);
        self.map.insert(path.to_string(), (h, n));
        self.used += n;
        Ok(true)
    }

    fn clear(&mut self) -> Result<()> {
        let paths: Vec<String> = self.map.keys().cloned().collect();
        for p in paths {
            self.remove(&p)?;
        }
        self.flushed.clear();
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Vertex images

fn encode_image(key: &CacheKey, kind: ColumnKind, prefix: u64, slots: &Slots) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&key.file_id.to_le_bytes());
    body.extend_from_slice(&key.group.to_le_bytes());
    body.extend_from_slice(&(key.column.len() as u16).to_le_bytes());
    body.extend_from_slice(key.column.as_bytes());
    body.push(kind.tag());
    body.extend_from_slice(&(prefix as u32).to_le_bytes());
    let p = prefix as usize;
    match slots {
        Slots::Int(v) => v[..p].iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes())),
        Slots::Float(v) => v[..p].iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes())),
        Slots::Date(v) => v[..p].iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes())),
        Slots::Bool(v) => v[..p].iter().for_each(|x| body.push(*x as u8)),
        Slots::Str { slots, arenas, .. } => {
            for (b, o, l) in &slots[..p] {
                body.extend_from_slice(&b.to_le_bytes());
                body.extend_from_slice(&o.to_le_bytes());
                body.extend_from_slice(&l.to_le_bytes());
            }
            body.extend_from_slice(&(arenas.len() as u32).to_le_bytes());
            for a in arenas {
                body.extend_from_slice(&(a.len() as u32).to_le_bytes());
                body.extend_from_slice(a);
            }
        }
    }
    let mut out = Vec::with_capacity(body.len() + 12);
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&body);
    out.extend_from_slice(&fnv1a64(&body).to_le_bytes());
    out
}

/// Restores `(prefix, slots)` from an image, or `None` if it is damaged or
/// belongs to another chunk.
fn decode_image(bytes: &[u8], key: &CacheKey, kind: ColumnKind, row_count: u64) -> Option<(u64, Slots)> {
    if bytes.len() < 4 + 8 || &bytes[..4] != IMAGE_MAGIC {
        return None;
    }
    let body = &bytes[4..bytes.len() - 8];
    let sum = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().ok()?);
    let mut h = Fnv1a::default();
    h.update(body);
    if h.finish() != sum {
        return None;
    }
    let mut pos = 0usize;
    let mut take = |n: usize| -> Option<&[u8]> {
        let s = body.get(pos..pos + n)?;
        pos += n;
        Some(s)
    };
    let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let file = u32_of(take(4)?);
    let group = u32_of(take(4)?);
    let clen = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
    let col = std::str::from_utf8(take(clen)?).ok()?;
    if file != key.file_id || group != key.group || col != &*key.column || take(1)?[0] != kind.tag() {
        return None;
    }
    let prefix = u32_of(take(4)?) as u64;
    if prefix > row_count {
        return None;
    }
    let p = prefix as usize;
    let cap = row_count as usize;
    let slots = match kind {
        ColumnKind::Int64 => {
            let mut v = Vec::with_capacity(cap);
            for _ in 0..p {
                v.push(i64::from_le_bytes(take(8)?.try_into().unwrap()));
            }
            Slots::Int(v)
        }
        ColumnKind::Float64 => {
            let mut v = Vec::with_capacity(cap);
            for _ in 0..p {
                v.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            }
            Slots::Float(v)
        }
        ColumnKind::Date32 => {
            let mut v = Vec::with_capacity(cap);
            for _ in 0..p {
                v.push(i32::from_le_bytes(take(4)?.try_into().unwrap()));
            }
            Slots::Date(v)
        }
        ColumnKind::Bool => {
            let mut v = Vec::with_capacity(cap);
            for _ in 0..p {
                v.push(take(1)?[0] != 0);
            }
            Slots::Bool(v)
        }
        ColumnKind::String => {
            let mut slots = Vec::with_capacity(cap);
            for _ in 0..p {
                let s = take(12)?;
                slots.push((u32_of(&s[..4]), u32_of(&s[4..8]), u32_of(&s[8..])));
            }
            let n = u32_of(take(4)?) as usize;
            let mut arenas = Vec::with_capacity(n);
            for _ in 0..n {
                let len = u32_of(take(4)?) as usize;
                let mut a = Vec::with_capacity(ARENA_BLOCK.max(len));
                a.extend_from_slice(take(len)?);
                arenas.push(a);
            }
            for &(b, o, l) in &slots {
                let a = arenas.get(b as usize)?;
                std::str::from_utf8(a.get(o as usize..(o + l) as usize)?).ok()?;
            }
            // The dictionary mapping is rebuilt on the next extension; the
            // arenas already hold earlier entries, so they are appended again.
            Slots::Str {
                slots,
                arenas,
                dict: None,
            }
        }
    };
    if pos != body.len() {
        return None;
    }
    Some((prefix, slots))
}

// ---------------------------------------------------------------------------
// Cache

struct Inner {
    catalog: Arc<Catalog>,
    cfg: CacheConfig,
    memory: Mutex<MemoryTier>,
    disk: Mutex<DiskTier>,
    loading: Mutex<HashSet<CacheKey>>,
    loaded: Condvar,
    counters: Counters,
    lineage: Mutex<HashMap<CacheKey, LineageStats>>,
    offsets: RwLock<HashMap<u32, Arc<Vec<u64>>>>,
    prefetch_pending: Mutex<usize>,
    prefetch_idle: Condvar,
}

pub struct ColumnCache {
    inner: Arc<Inner>,
    prefetch_tx: Option<Sender<(CacheKey, Flavor)>>,
    workers: Vec<JoinHandle<()>>,
}

/// Pinned vertex unit. The unit cannot be evicted while this is alive.
pub struct VertexHandle {
    unit: Arc<VertexUnit>,
    inner: Arc<Inner>,
}

impl Drop for VertexHandle {
    fn drop(&mut self) {
        self.unit.pins.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Pinned edge unit.
pub struct EdgeHandle {
    unit: Arc<EdgeUnit>,
}

impl Drop for EdgeHandle {
    fn drop(&mut self) {
        self.unit.pins.fetch_sub(1, Ordering::SeqCst);
    }
}

impl ColumnCache {
    /// `disk` backs the disk tier (a local directory in production).
    pub fn new(catalog: Arc<Catalog>, disk: Arc<dyn ObjectStore>, cfg: CacheConfig) -> ColumnCache {
        let inner = Arc::new(Inner {
            catalog,
            memory: Mutex::new(MemoryTier {
                clock: SweepClock::new(),
                map: HashMap::new(),
                used: 0,
            }),
            disk: Mutex::new(DiskTier {
                store: disk,
                budget: cfg.disk_budget,
                clock: SweepClock::new(),
                map: HashMap::new(),
                used: 0,
                flushed: HashMap::new(),
            }),
            cfg,
            loading: Mutex::new(HashSet::new()),
            loaded: Condvar::new(),
            counters: Counters::default(),
            lineage: Mutex::new(HashMap::new()),
            offsets: RwLock::new(HashMap::new()),
            prefetch_pending: Mutex::new(0),
            prefetch_idle: Condvar::new(),
        });
        let mut cache = ColumnCache {
            inner,
            prefetch_tx: None,
            workers: Vec::new(),
        };
        if cache.inner.cfg.prefetch_threads > 0 {
            let (tx, rx) = unbounded::<(CacheKey, Flavor)>();
            for _ in 0..cache.inner.cfg.prefetch_threads {
                let rx = rx.clone();
                let inner = cache.inner.clone();
                cache.workers.push(std::thread::spawn(move || {
                    for (key, flavor) in rx.iter() {
                        // Best effort: failures surface on the demand path.
                        let _ = inner.acquire(&key, flavor, true);
                        let mut p = inner.prefetch_pending.lock();
                        *p -= 1;
                        if *p == 0 {
                            inner.prefetch_idle.notify_all();
                        }
                    }
                }));
            }
            cache.prefetch_tx = Some(tx);
        }
        cache
    }

    pub fn config(&self) -> &CacheConfig {
        &self.inner.cfg
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.inner.catalog
    }

    /// Pins the vertex unit for `key`, loading it if needed.
    pub fn vertex_unit(&self, key: &CacheKey) -> Result<VertexHandle> {
        match self.inner.acquire(key, Flavor::Vertex, false)? {
            Unit::Vertex(unit) => Ok(VertexHandle {
                unit,
                inner: self.inner.clone(),
            }),
            Unit::Edge(_) => unreachable!("vertex key resolved to an edge unit"),
        }
    }

    pub fn edge_unit(&self, key: &CacheKey) -> Result<EdgeHandle> {
        match self.inner.acquire(key, Flavor::Edge, false)? {
            Unit::Edge(unit) => Ok(EdgeHandle { unit }),
            Unit::Vertex(_) => unreachable!("edge key resolved to a vertex unit"),
        }
    }

    /// Value at `row` of the chunk `key` through a vertex unit.
    pub fn get_vertex_value(&self, key: &CacheKey, row: u32) -> Result<Value> {
        self.vertex_unit(key)?.get(row)
    }

    /// Row offsets of each row group of a file, plus the total.
    pub fn group_offsets(&self, file_id: u32) -> Result<Arc<Vec<u64>>> {
        self.inner.group_offsets(file_id)
    }

    /// Maps a file row to its cache key and row within the chunk.
    pub fn locate(&self, file_id: u32, row: u32, column: &str) -> Result<(CacheKey, u32)> {
        let off = self.group_offsets(file_id)?;
        let (g, r) = lakegraph_core::edgelist::locate(&off, row as u64);
        Ok((CacheKey::new(file_id, g, column), r))
    }

    /// Queues background loads; returns how many were issued. Never blocks
    /// on I/O. Keys already resident or in flight are skipped.
    pub fn prefetch(&self, keys: impl IntoIterator<Item = (CacheKey, Flavor)>) -> usize {
        let Some(tx) = &self.prefetch_tx else { return 0 };
        let mut n = 0;
        for (key, flavor) in keys {
            if self.inner.memory.lock().map.contains_key(&key) || self.inner.loading.lock().contains(&key) {
                continue;
            }
            *self.inner.prefetch_pending.lock() += 1;
            if tx.send((key, flavor)).is_ok() {
                n += 1;
            } else {
                *self.inner.prefetch_pending.lock() -= 1;
            }
        }
        bump(&self.inner.counters.prefetch_issued, n as u64);
        n
    }

    /// Prefetches the chunks of `columns` that overlap the frontier's
    /// per-file active row range. `columns` maps a vertex file to the
    /// columns needed from it.
    pub fn prefetch_for_frontier(
        &self,
        frontier: &ActiveVertexSet,
        columns: &dyn Fn(u32) -> Vec<String>,
    ) -> Result<usize> {
        let mut keys = Vec::new();
        for (file, bits) in frontier.files() {
            let Some((lo, hi)) = bits.bounds() else { continue };
            if file == 0 {
                continue;
            }
            let cols = columns(file);
            if cols.is_empty() {
                continue;
            }
            let off = self.group_offsets(file)?;
            let (g_lo, _) = lakegraph_core::edgelist::locate(&off, lo as u64);
            let (g_hi, _) = lakegraph_core::edgelist::locate(&off, hi as u64);
            for g in g_lo..=g_hi {
                for c in &cols {
                    keys.push((CacheKey::new(file, g, c), Flavor::Vertex));
                }
            }
        }
        Ok(self.prefetch(keys))
    }

    /// Blocks until queued prefetches finish.
    pub fn wait_prefetch(&self) {
        let mut p = self.inner.prefetch_pending.lock();
        while *p > 0 {
            self.inner.prefetch_idle.wait(&mut p);
        }
    }

    pub fn stats(&self) -> CacheStats {
        let c = &self.inner.counters;
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CacheStats {
            memory_hits: l(&c.memory_hits),
            disk_image_loads: l(&c.disk_image_loads),
            disk_raw_loads: l(&c.disk_raw_loads),
            store_fetches: l(&c.store_fetches),
            vertex_evictions: l(&c.vertex_evictions),
            edge_evictions: l(&c.edge_evictions),
            image_flushes: l(&c.image_flushes),
            disk_evictions: l(&c.disk_evictions),
            decode_calls: l(&c.decode_calls),
            values_decoded: l(&c.values_decoded),
            redecodes_below_flushed: l(&c.redecodes_below_flushed),
            corrupt_images: l(&c.corrupt_images),
            prefetch_issued: l(&c.prefetch_issued),
            resident_bytes: self.inner.memory.lock().used,
            disk_bytes: self.inner.disk.lock().used,
        }
    }

    pub fn lineage(&self, key: &CacheKey) -> LineageStats {
        self.inner.lineage.lock().get(key).copied().unwrap_or_default()
    }

    /// Resident keys in ring order starting at the hand.
    pub fn resident_keys(&self) -> Vec<CacheKey> {
        self.inner.memory.lock().clock.keys_from_hand().cloned().collect()
    }

    pub fn is_resident(&self, key: &CacheKey) -> bool {
        self.inner.memory.lock().map.contains_key(key)
    }

    /// Bytes a unit of this chunk is charged against the memory budget.
    pub fn charge_of(&self, key: &CacheKey, flavor: Flavor) -> Result<u64> {
        let info = self.inner.chunk_info(key)?;
        Ok(self.inner.charge(&info, flavor))
    }

    /// Decoded prefix of a resident vertex unit.
    pub fn decoded_prefix(&self, key: &CacheKey) -> Option<u64> {
        match &self.inner.memory.lock().map.get(key)?.unit {
            Unit::Vertex(u) => Some(u.state.read().prefix),
            Unit::Edge(_) => None,
        }
    }

    pub fn disk_has_image(&self, key: &CacheKey) -> bool {
        self.inner.disk.lock().contains(&key.image_path())
    }

    /// Evicts every unpinned memory unit through the normal eviction path,
    /// so vertex prefixes land on disk.
    pub fn clear_memory(&self) -> Result<()> {
        let mut mem = self.inner.memory.lock();
        while let Some((_, key)) = mem.clock.evict(|_, _| false) {
            let r = mem.map.remove(&key).unwrap();
            mem.used -= r.charge;
            self.inner.on_evicted(&key, &r.unit)?;
        }
        Ok(())
    }

    /// Empties both tiers.
    pub fn clear_all(&self) -> Result<()> {
        {
            let mut mem = self.inner.memory.lock();
            let keys: Vec<CacheKey> = mem.map.keys().cloned().collect();
            for k in keys {
                let r = mem.map.remove(&k).unwrap();
                mem.clock.remove(r.handle);
                mem.used -= r.charge;
            }
        }
        self.inner.disk.lock().clear()
    }

    /// Damages the flushed image of `key` (fault injection).
    pub fn corrupt_image(&self, key: &CacheKey) -> Result<bool> {
        let disk = self.inner.disk.lock();
        let p = key.image_path();
        if !disk.contains(&p) {
            return Ok(false);
        }
        let mut bytes = disk.store.get_all(&p)?;
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xA5;
        disk.store.put(&p, &bytes)?;
        Ok(true)
    }
}

impl Drop for ColumnCache {
    fn drop(&mut self) {
        self.prefetch_tx.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Inner {
    fn group_offsets(&self, file_id: u32) -> Result<Arc<Vec<u64>>> {
        if let Some(o) = self.offsets.read().get(&file_id) {
            return Ok(o.clone());
        }
        let footer = self.catalog.footer(file_id)?;
        let o = Arc::new(lakegraph_core::edgelist::offsets_from_rows(&footer.group_rows()));
        self.offsets.write().insert(file_id, o.clone());
        Ok(o)
    }

    fn chunk_info(&self, key: &CacheKey) -> Result<ChunkInfo> {
        let entry = self.catalog.registry.entry(key.file_id)?;
        let footer = self.catalog.footer(key.file_id)?;
        let col = footer.column_index(&key.column).ok_or_else(|| {
            Error::InvalidTable(format!("unknown column {}", key.column)).in_file(key.file_id, &entry.path)
        })?;
        let group = footer.row_groups.get(key.group as usize).ok_or_else(|| {
            Error::InvalidTable(format!("row group {} out of range", key.group)).in_file(key.file_id, &entry.path)
        })?;
        let meta = &group.columns[col];
        Ok(ChunkInfo {
            path: entry.path.clone(),
            kind: footer.schema[col].kind,
            encoding: meta.encoding,
            row_count: group.row_count,
            byte_length: meta.byte_length,
            footer,
            col,
        })
    }

    fn charge(&self, info: &ChunkInfo, flavor: Flavor) -> u64 {
        let vertex_like = flavor == Flavor::Vertex || self.cfg.edge_decoded_array;
        if !vertex_like {
            return info.byte_length;
        }
        let arena = if info.kind == ColumnKind::String {
            info.byte_length
        } else {
            0
        };
        info.byte_length + info.row_count * slot_width(info.kind) + arena
    }

    fn note_decode(&self, key: &CacheKey, values: u64) {
        bump(&self.counters.decode_calls, 1);
        bump(&self.counters.values_decoded, values);
        let mut l = self.lineage.lock();
        let s = l.entry(key.clone()).or_default();
        s.decode_calls += 1;
        s.values_decoded += values;
    }

    /// Raw chunk bytes from the disk tier or the object store.
    fn raw_bytes(&self, key: &CacheKey, info: &ChunkInfo) -> Result<Arc<Vec<u8>>> {
        let path = key.raw_path();
        {
            let mut disk = self.disk.lock();
            if disk.contains(&path) {
                if let Ok(b) = disk.store.get_all(&path) {
                    if b.len() as u64 == info.byte_length {
                        disk.touch(&path);
                        bump(&self.counters.disk_raw_loads, 1);
                        return Ok(Arc::new(b));
                    }
                }
                disk.remove(&path)?;
            }
        }
        let chunk = lgc::read_column_chunk_at(
            self.catalog.store.as_ref(),
            &info.path,
            &info.footer,
            key.group as usize,
            info.col,
        )
        .map_err(|e| e.in_file(key.file_id, &info.path))?;
        bump(&self.counters.store_fetches, 1);
        self.disk.lock().put(&path, &chunk.bytes, &self.counters)?;
        Ok(Arc::new(chunk.bytes))
    }

    fn load_vertex(&self, key: &CacheKey, info: ChunkInfo) -> Result<VertexUnit> {
        let image = {
            let mut disk = self.disk.lock();
            let p = key.image_path();
            if disk.contains(&p) {
                disk.touch(&p);
                let bytes = disk.store.get_all(&p).ok();
                let decoded = bytes
                    .as_deref()
                    .and_then(|b| decode_image(b, key, info.kind, info.row_count));
                if decoded.is_none() {
                    bump(&self.counters.corrupt_images, 1);
                    disk.remove(&p)?;
                }
                decoded
            } else {
                None
            }
        };
        let (prefix, values, raw) = match image {
            Some((prefix, slots)) => {
                bump(&self.counters.disk_image_loads, 1);
                (prefix, Some(slots), None)
            }
            None => (0, None, Some(self.raw_bytes(key, &info)?)),
        };
        Ok(VertexUnit {
            key: key.clone(),
            info,
            state: RwLock::new(VertexState {
                raw,
                decoder: None,
                values,
                prefix,
            }),
            pins: AtomicU32::new(0),
        })
    }

    /// Returns a pinned unit, loading and admitting it on a miss.
    fn acquire(&self, key: &CacheKey, flavor: Flavor, prefetch: bool) -> Result<Unit> {
        let flavor = if flavor == Flavor::Edge && self.cfg.edge_decoded_array {
            Flavor::Vertex
        } else {
            flavor
        };
        let prio = |f: Flavor| {
            if f == Flavor::Vertex {
                VERTEX_PRIORITY
            } else {
                EDGE_PRIORITY
            }
        };
        loop {
            {
                let mut mem = self.memory.lock();
                if let Some(r) = mem.map.get(key) {
                    let (h, unit) = (r.handle, r.unit.clone());
                    if !prefetch {
                        mem.clock.touch(h, prio(flavor));
                        bump(&self.counters.memory_hits, 1);
                    }
                    pin(&unit);
                    return Ok(unit);
                }
            }
            let mut loading = self.loading.lock();
            if loading.contains(key) {
                self.loaded.wait(&mut loading);
                continue;
            }
            loading.insert(key.clone());
            break;
        }
        let result = self.load_and_admit(key, flavor, prio(flavor));
        self.loading.lock().remove(key);
        self.loaded.notify_all();
        result
    }

    fn load_and_admit(&self, key: &CacheKey, flavor: Flavor, prio: u8) -> Result<Unit> {
        let info = self.chunk_info(key)?;
        let charge = self.charge(&info, flavor);
        if charge > self.cfg.memory_budget {
            return Err(Error::AdmissionFailed);
        }
        let unit = match flavor {
            Flavor::Vertex => Unit::Vertex(Arc::new(self.load_vertex(key, info)?)),
            Flavor::Edge => {
                let raw = self.raw_bytes(key, &info)?;
                Unit::Edge(Arc::new(EdgeUnit {
                    key: key.clone(),
                    info,
                    raw,
                    pins: AtomicU32::new(0),
                }))
            }
        };
        let mut evicted = Vec::new();
        {
            let mut mem = self.memory.lock();
            while mem.used + charge > self.cfg.memory_budget {
                let MemoryTier { clock, map, .. } = &mut *mem;
                let victim = clock.evict(|_, k| map.get(k).is_some_and(|r| r.unit.pins() > 0));
                match victim {
                    Some((_, k)) => {
                        let r = mem.map.remove(&k).unwrap();
                        mem.used -= r.charge;
                        evicted.push((k, r.unit));
                    }
                    None => {
                        drop(mem);
                        for (k, u) in &evicted {
                            self.on_evicted(k, u)?;
                        }
                        return Err(Error::AdmissionFailed);
                    }
                }
            }
            let handle = mem.clock.insert(key.clone(), prio);
            mem.used += charge;
            pin(&unit);
            mem.map.insert(
                key.clone(),
                Resident {
                    handle,
                    unit: unit.clone(),
                    charge,
                },
            );
        }
        for (k, u) in &evicted {
            self.on_evicted(k, u)?;
        }
        Ok(unit)
    }

    fn on_evicted(&self, key: &CacheKey, unit: &Unit) -> Result<()> {
        match unit {
            Unit::Edge(_) => bump(&self.counters.edge_evictions, 1),
            Unit::Vertex(u) => {
                bump(&self.counters.vertex_evictions, 1);
                let st = u.state.read();
                if let Some(values) = &st.values {
                    if st.prefix > 0 {
                        let img = encode_image(key, u.info.kind, st.prefix, values);
                        let mut disk = self.disk.lock();
                        if disk.put(&key.image_path(), &img, &self.counters)? {
                            disk.flushed.insert(key.clone(), st.prefix);
                            bump(&self.counters.image_flushes, 1);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn pin(u: &Unit) {
    match u {
        Unit::Vertex(v) => v.pins.fetch_add(1, Ordering::SeqCst),
        Unit::Edge(e) => e.pins.fetch_add(1, Ordering::SeqCst),
    };
}

impl VertexHandle {
    pub fn key(&self) -> &CacheKey {
        &self.unit.key
    }

    pub fn row_count(&self) -> u64 {
        self.unit.info.row_count
    }

    pub fn kind(&self) -> ColumnKind {
        self.unit.info.kind
    }

    pub fn prefix(&self) -> u64 {
        self.unit.state.read().prefix
    }

    pub fn get(&self, row: u32) -> Result<Value> {
        let row = row as u64;
        let info = &self.unit.info;
        if row >= info.row_count {
            return Err(Error::Cache(format!(
                "row {row} out of range for {} ({} rows)",
                self.unit.key, info.row_count
            )));
        }
        if self.inner.cfg.vertex_mode == VertexMode::NaiveRescan {
            return self.rescan(row);
        }
        {
            let st = self.unit.state.read();
            if row < st.prefix {
                return Ok(st.values.as_ref().unwrap().get(row as usize));
            }
        }
        let mut st = self.unit.state.write();
        if row >= st.prefix {
            self.extend(&mut st, row + 1)?;
        }
        Ok(st.values.as_ref().unwrap().get(row as usize))
    }

    fn extend(&self, st: &mut VertexState, upto: u64) -> Result<()> {
        let key = &self.unit.key;
        let info = &self.unit.info;
        if st.raw.is_none() {
            st.raw = Some(self.inner.raw_bytes(key, info)?);
        }
        let raw = st.raw.clone().unwrap();
        if st.decoder.is_none() {
            let mut dec = ChunkDecoder::new(&raw, info.kind, info.encoding, info.row_count)?;
            dec.skip(&raw, st.prefix)?;
            st.decoder = Some(dec);
        }
        if st.values.is_none() {
            st.values = Some(Slots::with_capacity(info.kind, info.row_count as usize));
        }
        if let Some(&flushed) = self.inner.disk.lock().flushed.get(key) {
            if st.prefix < flushed {
                bump(&self.inner.counters.redecodes_below_flushed, 1);
            }
        }
        let n = upto - st.prefix;
        let VertexState { decoder, values, .. } = st;
        values.as_mut().unwrap().extend(decoder.as_mut().unwrap(), &raw, n)?;
        st.prefix = upto;
        self.inner.note_decode(key, n);
        if st.prefix == info.row_count {
            st.raw = None;
            st.decoder = None;
        }
        Ok(())
    }

    fn rescan(&self, row: u64) -> Result<Value> {
        let info = &self.unit.info;
        let raw = {
            let mut st = self.unit.state.write();
            if st.raw.is_none() {
                st.raw = Some(self.inner.raw_bytes(&self.unit.key, info)?);
            }
            st.raw.clone().unwrap()
        };
        let mut dec = ChunkDecoder::new(&raw, info.kind, info.encoding, info.row_count)?;
        let mut v = dec.next_value(&raw)?;
        for _ in 0..row {
            v = dec.next_value(&raw)?;
        }
        self.inner.note_decode(&self.unit.key, row + 1);
        Ok(v)
    }
}

impl EdgeHandle {
    pub fn key(&self) -> &CacheKey {
        &self.unit.key
    }

    pub fn row_count(&self) -> u64 {
        self.unit.info.row_count
    }
}

/// Reader-local sliding window over edge chunks of one column of one edge
/// file. Rows must be requested in non-decreasing order.
pub struct EdgeReader<'c> {
    cache: &'c ColumnCache,
    file_id: u32,
    column: Arc<str>,
    offsets: Arc<Vec<u64>>,
    current: Option<EdgeCursor>,
    /// Ablation path: decoded-prefix units instead of windows.
    vertex_like: Option<(u32, VertexHandle)>,
    last_row: Option<u64>,
    pub batch_decodes: u64,
}

struct EdgeCursor {
    group: u32,
    handle: EdgeHandle,
    decoder: ChunkDecoder,
    start: u64,
    window: Vec<Value>,
}

impl<'c> EdgeReader<'c> {
    pub fn new(cache: &'c ColumnCache, file_id: u32, column: &str) -> Result<Self> {
        Ok(EdgeReader {
            offsets: cache.group_offsets(file_id)?,
            cache,
            file_id,
            column: Arc::from(column),
            current: None,
            vertex_like: None,
            last_row: None,
            batch_decodes: 0,
        })
    }

    /// Value at file row `row`.
    pub fn get(&mut self, row: u64) -> Result<Value> {
        if let Some(last) = self.last_row {
            if row < last {
                return Err(Error::BackwardSeek(format!(
                    "edge reader on file {} column {} asked for row {row} after {last}",
                    self.file_id, self.column
                )));
            }
        }
        self.last_row = Some(row);
        let (g, r) = lakegraph_core::edgelist::locate(&self.offsets, row);
        if self.cache.inner.cfg.edge_decoded_array {
            if self.vertex_like.as_ref().map(|v| v.0) != Some(g) {
                self.vertex_like = None;
                let key = CacheKey {
                    file_id: self.file_id,
                    group: g,
                    column: self.column.clone(),
                };
                self.vertex_like = Some((g, self.cache.vertex_unit(&key)?));
            }
            return self.vertex_like.as_ref().unwrap().1.get(r);
        }
        if self.current.as_ref().map(|c| c.group) != Some(g) {
            self.current = None;
            let key = CacheKey {
                file_id: self.file_id,
                group: g,
                column: self.column.clone(),
            };
            let handle = self.cache.edge_unit(&key)?;
            let info = &handle.unit.info;
            let decoder = ChunkDecoder::new(&handle.unit.raw, info.kind, info.encoding, info.row_count)?;
            self.current = Some(EdgeCursor {
                group: g,
                handle,
                decoder,
                start: 0,
                window: Vec::new(),
            });
        }
        let w = self.cache.inner.cfg.window_size.max(1) as u64;
        let cur = self.current.as_mut().unwrap();
        let r = r as u64;
        if r < cur.start + cur.window.len() as u64 && r >= cur.start {
            return Ok(cur.window[(r - cur.start) as usize].clone());
        }
        let batch = r / w * w;
        let raw = &cur.handle.unit.raw;
        cur.decoder.skip(raw, batch - cur.decoder.position())?;
        let n = w.min(cur.handle.unit.info.row_count - batch);
        cur.window.clear();
        cur.decoder.decode_into(raw, n, &mut cur.window)?;
        cur.start = batch;
        self.batch_decodes += 1;
        self.cache.inner.note_decode(&cur.handle.unit.key, n);
        Ok(cur.window[(r - batch) as usize].clone())
    }
}

/// Random-access reader over one column of one vertex file. Keeps the last
/// used unit pinned.
pub struct VertexReader<'c> {
    cache: &'c ColumnCache,
    file_id: u32,
    column: Arc<str>,
    offsets: Arc<Vec<u64>>,
    current: Option<(u32, VertexHandle)>,
}

impl<'c> VertexReader<'c> {
    pub fn new(cache: &'c ColumnCache, file_id: u32, column: &str) -> Result<Self> {
        Ok(VertexReader {
            offsets: cache.group_offsets(file_id)?,
            cache,
            file_id,
            column: Arc::from(column),
            current: None,
        })
    }

    pub fn get(&mut self, row: u32) -> Result<Value> {
        let (g, r) = lakegraph_core::edgelist::locate(&self.offsets, row as u64);
        if self.current.as_ref().map(|c| c.0) != Some(g) {
            self.current = None;
            let key = CacheKey {
                file_id: self.file_id,
                group: g,
                column: self.column.clone(),
            };
            self.current = Some((g, self.cache.vertex_unit(&key)?));
        }
        self.current.as_ref().unwrap().1.get(r)
    }
}

/// Row groups of a file overlapping the inclusive row range.
pub fn groups_overlapping(offsets: &[u64], lo: u32, hi: u32) -> std::ops::RangeInclusive<u32> {
    let (a, _) = lakegraph_core::edgelist::locate(offsets, lo as u64);
    let (b, _) = lakegraph_core::edgelist::locate(offsets, hi as u64);
    a..=b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{DataFile, GraphSchema, TableManifest, VertexType, SCHEMA_PATH};
    use crate::lgc::ColumnSchema;
    use crate::store::MemoryStore;

    const ROWS: u64 = 5000;

    fn fixture(group_rows: usize) -> (Arc<MemoryStore>, Arc<Catalog>, u32) {
        let store = Arc::new(MemoryStore::new());
        let schema = GraphSchema {
            vertices: vec![VertexType {
                name: "T".into(),
                table: "t".into(),
                key: "id".into(),
            }],
            edges: vec![],
        };
        schema.save(store.as_ref(), SCHEMA_PATH).unwrap();
        let cols = vec![
            ColumnSchema::new("id", ColumnKind::Int64),
            ColumnSchema::new("name", ColumnKind::String),
            ColumnSchema::new("tag", ColumnKind::String),
            ColumnSchema::new("score", ColumnKind::Float64),
            ColumnSchema::new("flag", ColumnKind::Bool),
            ColumnSchema::new("day", ColumnKind::Date32),
        ];
        let rows = (0..ROWS).map(|i| {
            vec![
                Value::Int64(i as i64 * 7),
                Value::Str(format!("name-{i}")),
                Value::Str(["a", "bb", "ccc"][(i % 3) as usize].into()),
                Value::Float64(i as f64 / 4.0),
                Value::Bool(i / 10 % 2 == 0),
                Value::Date32(15000 + (i / 100) as i32),
            ]
        });
        let enc = [
            Encoding::Plain,
            Encoding::Plain,
            Encoding::Dict,
            Encoding::Plain,
            Encoding::Rle,
            Encoding::Rle,
        ];
        lgc::write_table(store.as_ref(), "tables/t/part-00000.lgc", &cols, rows, group_rows, &enc).unwrap();
        TableManifest {
            table: "t".into(),
            version: 1,
            files: vec![DataFile {
                path: "tables/t/part-00000.lgc".into(),
                row_count: ROWS,
            }],
        }
        .save(store.as_ref())
        .unwrap();
        let catalog = Catalog::load(store.clone()).unwrap();
        let id = catalog.registry.files_of("t")[0];
        (store, Arc::new(catalog), id)
    }

    fn cache(catalog: &Arc<Catalog>, cfg: CacheConfig) -> ColumnCache {
        ColumnCache::new(catalog.clone(), Arc::new(MemoryStore::new()), cfg)
    }

    fn expected(col: &str, i: u64) -> Value {
        match col {
            "id" => Value::Int64(i as i64 * 7),
            "name" => Value::Str(format!("name-{i}")),
            "tag" => Value::Str(["a", "bb", "ccc"][(i % 3) as usize].into()),
            "score" => Value::Float64(i as f64 / 4.0),
            "flag" => Value::Bool((i / 10).is_multiple_of(2)),
            _ => Value::Date32(15000 + (i / 100) as i32),
        }
    }

    #[test]
    fn prefix_grows_only_to_the_requested_row() {
        let (_, catalog, f) = fixture(ROWS as usize);
        let c = cache(&catalog, CacheConfig::default());
        let key = CacheKey::new(f, 0, "name");
        let u = c.vertex_unit(&key).unwrap();
        assert_eq!(u.get(299).unwrap(), expected("name", 299));
        assert_eq!(u.prefix(), 300);
        assert_eq!(c.lineage(&key).values_decoded, 300);
        assert_eq!(u.get(100).unwrap(), expected("name", 100));
        assert_eq!(c.lineage(&key).values_decoded, 300);
        assert_eq!(u.get(300).unwrap(), expected("name", 300));
        assert_eq!(c.lineage(&key).values_decoded, 301);
        assert_eq!(c.lineage(&key).decode_calls, 2);
    }

    #[test]
    fn every_kind_and_encoding_roundtrips() {
        let (_, catalog, f) = fixture(777);
        let c = cache(&catalog, CacheConfig::default());
        for col in ["id", "name", "tag", "score", "flag", "day"] {
            let mut r = VertexReader::new(&c, f, col).unwrap();
            for i in (0..ROWS).rev().step_by(13) {
                assert_eq!(r.get(i as u32).unwrap(), expected(col, i), "{col} row {i}");
            }
        }
    }

    #[test]
    fn edge_windows_decode_each_batch_once() {
        let (_, catalog, f) = fixture(ROWS as usize);
        let c = cache(&catalog, CacheConfig::default());
        let mut r = EdgeReader::new(&c, f, "id").unwrap();
        for i in 0..ROWS {
            assert_eq!(r.get(i).unwrap(), expected("id", i));
        }
        assert_eq!(r.batch_decodes, ROWS.div_ceil(DEFAULT_WINDOW as u64));
        assert!(matches!(r.get(10), Err(Error::BackwardSeek(_))));
    }

    #[test]
    fn edge_windows_are_aligned() {
        let (_, catalog, f) = fixture(ROWS as usize);
        let c = cache(&catalog, CacheConfig::default());
        let mut r = EdgeReader::new(&c, f, "tag").unwrap();
        for i in [5u64, 1500, 1600, 2047, 2048, 4999] {
            assert_eq!(r.get(i).unwrap(), expected("tag", i));
        }
        assert_eq!(r.batch_decodes, 4);
    }

    #[test]
    fn flushed_prefix_reloads_without_decoding() {
        let (_, catalog, f) = fixture(ROWS as usize);
        let c = cache(&catalog, CacheConfig::default());
        for col in ["name", "tag", "score"] {
            let key = CacheKey::new(f, 0, col);
            c.get_vertex_value(&key, 299).unwrap();
            c.clear_memory().unwrap();
            assert!(c.disk_has_image(&key));
            let before = c.lineage(&key);
            let u = c.vertex_unit(&key).unwrap();
            assert_eq!(u.prefix(), 300);
            assert_eq!(u.get(150).unwrap(), expected(col, 150));
            assert_eq!(c.lineage(&key), before);
            assert_eq!(u.get(400).unwrap(), expected(col, 400));
            assert_eq!(c.lineage(&key).values_decoded, before.values_decoded + 101);
        }
        assert_eq!(c.stats().redecodes_below_flushed, 0);
        assert_eq!(c.stats().disk_image_loads, 3);
    }

    #[test]
    fn corrupt_image_falls_back_to_decoding() {
        let (_, catalog, f) = fixture(ROWS as usize);
        let c = cache(&catalog, CacheConfig::default());
        let key = CacheKey::new(f, 0, "name");
        c.get_vertex_value(&key, 999).unwrap();
        c.clear_memory().unwrap();
        assert!(c.corrupt_image(&key).unwrap());
        assert_eq!(c.get_vertex_value(&key, 500).unwrap(), expected("name", 500));
        let s = c.stats();
        assert_eq!(s.corrupt_images, 1);
        assert_eq!(s.disk_image_loads, 0);
        assert_eq!(s.store_fetches, 1);
    }

    #[test]
    fn memory_stays_within_budget() {
        let (_, catalog, f) = fixture(250);
        let one = {
            let c = cache(&catalog, CacheConfig::default());
            c.charge_of(&CacheKey::new(f, 0, "name"), Flavor::Vertex).unwrap()
        };
        let c = cache(
            &catalog,
            CacheConfig {
                memory_budget: one * 3,
                ..Default::default()
            },
        );
        let mut r = VertexReader::new(&c, f, "name").unwrap();
        for i in (0..ROWS).step_by(37) {
            assert_eq!(r.get(i as u32).unwrap(), expected("name", i));
            assert!(c.stats().resident_bytes <= one * 3);
        }
        assert!(c.stats().vertex_evictions > 0);
    }

    #[test]
    fn oversized_unit_is_rejected() {
        let (_, catalog, f) = fixture(ROWS as usize);
        let c = cache(
            &catalog,
            CacheConfig {
                memory_budget: 64,
                ..Default::default()
            },
        );
        assert!(matches!(
            c.vertex_unit(&CacheKey::new(f, 0, "id")),
            Err(Error::AdmissionFailed)
        ));
    }

    #[test]
    fn pinned_units_block_admission() {
        let (_, catalog, f) = fixture(2500);
        let one = cache(&catalog, CacheConfig::default())
            .charge_of(&CacheKey::new(f, 0, "id"), Flavor::Vertex)
            .unwrap();
        let c = cache(
            &catalog,
            CacheConfig {
                memory_budget: one,
                ..Default::default()
            },
        );
        let held = c.vertex_unit(&CacheKey::new(f, 0, "id")).unwrap();
        assert!(matches!(
            c.vertex_unit(&CacheKey::new(f, 1, "id")),
            Err(Error::AdmissionFailed)
        ));
        drop(held);
        c.vertex_unit(&CacheKey::new(f, 1, "id")).unwrap();
    }

    #[test]
    fn prefetch_targets_groups_in_frontier_range() {
        let (_, catalog, f) = fixture(500);
        let c = cache(&catalog, CacheConfig::default());
        let mut frontier = ActiveVertexSet::new();
        frontier.insert(lakegraph_core::VertexId::new(f, 1200));
        frontier.insert(lakegraph_core::VertexId::new(f, 2600));
        let n = c
            .prefetch_for_frontier(&frontier, &|_| vec!["score".to_string()])
            .unwrap();
        assert_eq!(n, 4);
        c.wait_prefetch();
        for g in 0..10 {
            assert_eq!(
                c.is_resident(&CacheKey::new(f, g, "score")),
                (2..=5).contains(&g),
                "group {g}"
            );
        }
        assert_eq!(c.stats().memory_hits, 0);
    }

    #[test]
    fn naive_rescan_decodes_from_the_start() {
        let (_, catalog, f) = fixture(ROWS as usize);
        let c = cache(
            &catalog,
            CacheConfig {
                vertex_mode: VertexMode::NaiveRescan,
                ..Default::default()
            },
        );
        let key = CacheKey::new(f, 0, "score");
        assert_eq!(c.get_vertex_value(&key, 99).unwrap(), expected("score", 99));
        assert_eq!(c.get_vertex_value(&key, 99).unwrap(), expected("score", 99));
        assert_eq!(c.lineage(&key).values_decoded, 200);
    }

    #[test]
    fn disk_tier_respects_its_budget() {
        let (_, catalog, f) = fixture(500);
        let raw = catalog.footer(f).unwrap().row_groups[0].columns[1].byte_length;
        let c = cache(
            &catalog,
            CacheConfig {
                disk_budget: raw * 3,
                ..Default::default()
            },
        );
        for g in 0..10 {
            c.edge_unit(&CacheKey::new(f, g, "name")).unwrap();
            assert!(c.stats().disk_bytes <= raw * 3);
        }
        assert!(c.stats().disk_evictions > 0);
    }
}
