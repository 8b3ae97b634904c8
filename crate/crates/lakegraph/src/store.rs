//! Object-store abstraction.
//!
//! Paths are opaque keys. Every backend counts requests and bytes in a
//! shared [`StoreStats`]; reads can additionally be recorded one by one so
//! tests can attribute bytes to the column chunks they belong to.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};

use crate::error::{Error, Result};

/// Key of an object in the store.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectRef(pub String);

impl ObjectRef {
    pub fn new(path: impl Into<String>) -> Self {
        ObjectRef(path.into())
    }

    pub fn path(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub get_count: u64,
    pub put_count: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

impl StatsSnapshot {
    pub fn since(&self, earlier: &StatsSnapshot) -> StatsSnapshot {
        StatsSnapshot {
            get_count: self.get_count - earlier.get_count,
            put_count: self.put_count - earlier.put_count,
            bytes_read: self.bytes_read - earlier.bytes_read,
            bytes_written: self.bytes_written - earlier.bytes_written,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadRecord {
    pub path: String,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Default)]
pub struct StoreStats {
    get_count: AtomicU64,
    put_count: AtomicU64,
    bytes_read: AtomicU64,
    bytes_written: AtomicU64,
    log: Mutex<Option<Vec<ReadRecord>>>,
}

impl StoreStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            get_count: self.get_count.load(Ordering::Relaxed),
            put_count: self.put_count.load(Ordering::Relaxed),
            bytes_read: self.bytes_read.load(Ordering::Relaxed),
            bytes_written: self.bytes_written.load(Ordering::Relaxed),
        }
    }

    fn record_get(&self, path: &str, offset: u64, len: u64) {
        self.get_count.fetch_add(1, Ordering::Relaxed);
        self.bytes_read.fetch_add(len, Ordering::Relaxed);
        if let Some(log) = self.log.lock().as_mut() {
            log.push(ReadRecord {
                path: path.to_string(),
                offset,
                len,
            });
        }
    }

    fn record_put(&self, len: u64) {
        self.put_count.fetch_add(1, Ordering::Relaxed);
        self.bytes_written.fetch_add(len, Ordering::Relaxed);
    }

    /// Starts recording individual reads, discarding any earlier log.
    pub fn start_recording(&self) {
        *self.log.lock() = Some(Vec::new());
    }

    pub fn take_recording(&self) -> Vec<ReadRecord> {
        self.log.lock().take().unwrap_or_default()
    }
}

pub trait ObjectStore: Send + Sync {
    /// Reads `len` bytes at `offset`.
    fn get(&self, path: &str, offset: u64, len: u64) -> Result<Vec<u8>>;

    /// Reads the last `len` bytes; also returns the object size.
    fn get_suffix(&self, path: &str, len: u64) -> Result<(Vec<u8>, u64)>;

    /// Reads a whole object.
    fn get_all(&self, path: &str) -> Result<Vec<u8>>;

    fn put(&self, path: &str, bytes: &[u8]) -> Result<()>;

    /// Paths starting with `prefix`, sorted.
    fn list(&self, prefix: &str) -> Result<Vec<String>>;

    fn delete(&self, path: &str) -> Result<()>;

    fn stats(&self) -> &StoreStats;
}

fn check_range(path: &str, offset: u64, len: u64, size: u64) -> Result<()> {
    if offset.checked_add(len).is_none_or(|end| end > size) {
        return Err(Error::OutOfRange {
            path: path.to_string(),
            offset,
            len,
            size,
        });
    }
    Ok(())
}

const PARTIAL: &str = ".partial-";

/// Serves objects from files under a root directory.
pub struct LocalStore {
    root: PathBuf,
    stats: StoreStats,
}

impl LocalStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(LocalStore {
            root,
            stats: StoreStats::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn resolve(&self, path: &str) -> PathBuf {
        self.root.join(path)
    }

    fn open(&self, path: &str) -> Result<fs::File> {
        fs::File::open(self.resolve(path)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_string()),
            _ => Error::Io(e),
        })
    }

    fn walk(dir: &Path, rel: &str, out: &mut Vec<String>) -> Result<()> {
        let rd = match fs::read_dir(dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        for entry in rd {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let child = if rel.is_empty() { name } else { format!("{rel}/{name}") };
            if entry.file_type()?.is_dir() {
                Self::walk(&entry.path(), &child, out)?;
            } else {
                out.push(child);
            }
        }
        Ok(())
    }
}

impl ObjectStore for LocalStore {
    fn get(&self, path: &str, offset: u64, len: u64) -> Result<Vec<u8>> {
        let mut f = self.open(path)?;
        let size = f.metadata()?.len();
        check_range(path, offset, len, size)?;
        f.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0; len as usize];
        f.read_exact(&mut buf)?;
        self.stats.record_get(path, offset, len);
        Ok(buf)
    }

    fn get_suffix(&self, path: &str, len: u64) -> Result<(Vec<u8>, u64)> {
        let mut f = self.open(path)?;
        let size = f.metadata()?.len();
        if len > size {
            return Err(Error::OutOfRange {
                path: path.to_string(),
                offset: 0,
                len,
                size,
            });
        }
        f.seek(SeekFrom::Start(size - len))?;
        let mut buf = vec![0; len as usize];
        f.read_exact(&mut buf)?;
        self.stats.record_get(path, size - len, len);
        Ok((buf, size))
    }

    fn get_all(&self, path: &str) -> Result<Vec<u8>> {
        let mut f = self.open(path)?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        self.stats.record_get(path, 0, buf.len() as u64);
        Ok(buf)
    }

    fn put(&self, path: &str, bytes: &[u8]) -> Result<()> {
        let full = self.resolve(path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        // Write to a sibling and rename so readers never see a torn object.
        static SEQ: AtomicU64 = AtomicU64::new(0);
        let tmp = PathBuf::from(format!(
            "{}{PARTIAL}{}-{}",
            full.display(),
            std::process::id(),
            SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &full)?;
        self.stats.record_put(bytes.len() as u64);
        Ok(())
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        let mut all = Vec::new();
        // Start the walk at the deepest directory fully named by the prefix.
        let dir_part = match prefix.rfind('/') {
            Some(i) => &prefix[..i],
            None => "",
        };
        Self::walk(&self.resolve(dir_part), dir_part, &mut all)?;
        all.retain(|p| p.starts_with(prefix) && !p.contains(PARTIAL));
        all.sort();
        Ok(all)
    }

    fn delete(&self, path: &str) -> Result<()> {
        fs::remove_file(self.resolve(path)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_string()),
            _ => Error::Io(e),
        })
    }

    fn stats(&self) -> &StoreStats {
        &self.stats
    }
}

/// In-memory backend, handy for tests.
#[derive(Default)]
pub struct MemoryStore {
    objects: RwLock<BTreeMap<String, Arc<Vec<u8>>>>,
    stats: StoreStats,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn object(&self, path: &str) -> Result<Arc<Vec<u8>>> {
        self.objects
            .read()
            .get(path)
            .cloned()
            .ok_or_else(|| Error::NotFound(path.to_string()))
    }

    /// Mutates an object in place without touching the counters.
    pub fn tamper(&self, path: &str, f: impl FnOnce(&mut Vec<u8>)) -> Result<()> {
        let mut objects = self.objects.write();
        let obj = objects.get_mut(path).ok_or_else(|| Error::NotFound(path.to_string()))?;
        f(Arc::make_mut(obj));
        Ok(())
    }
}

impl ObjectStore for MemoryStore {
    fn get(&self, path: &str, offset: u64, len: u64) -> Result<Vec<u8>> {
        let obj = self.object(path)?;
        check_range(path, offset, len, obj.len() as u64)?;
        self.stats.record_get(path, offset, len);
        Ok(obj[offset as usize..(offset + len) as usize].to_vec())
    }

    fn get_suffix(&self, path: &str, len: u64) -> Result<(Vec<u8>, u64)> {
        let obj = self.object(path)?;
        let size = obj.len() as u64;
        if len > size {
            return Err(Error::OutOfRange {
                path: path.to_string(),
                offset: 0,
                len,
                size,
            });
        }
        self.stats.record_get(path, size - len, len);
        Ok((obj[(size - len) as usize..].to_vec(), size))
    }

    fn get_all(&self, path: &str) -> Result<Vec<u8>> {
        let obj = self.object(path)?;
        self.stats.record_get(path, 0, obj.len() as u64);
        Ok(obj.to_vec())
    }

    fn put(&self, path: &str, bytes: &[u8]) -> Result<()> {
        self.objects.write().insert(path.to_string(), Arc::new(bytes.to_vec()));
        self.stats.record_put(bytes.len() as u64);
        Ok(())
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        Ok(self
            .objects
            .read()
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k.clone())
            .collect())
    }

    fn delete(&self, path: &str) -> Result<()> {
        self.objects
            .write()
            .remove(path)
            .map(|_| ())
            .ok_or_else(|| Error::NotFound(path.to_string()))
    }

    fn stats(&self) -> &StoreStats {
        &self.stats
    }
}

/// Injects per-request latency in front of another backend: every read
/// sleeps `base + len / throughput` before being served. Counters are the
/// inner backend's.
pub struct LatencyStore {
    inner: Arc<dyn ObjectStore>,
    base: Duration,
    bytes_per_sec: Option<f64>,
}

impl LatencyStore {
    pub fn new(inner: Arc<dyn ObjectStore>, base: Duration, throughput_mbps: Option<f64>) -> Self {
        LatencyStore {
            inner,
            base,
            bytes_per_sec: throughput_mbps.filter(|t| *t > 0.0).map(|t| t * 1e6),
        }
    }

    pub fn inner(&self) -> &Arc<dyn ObjectStore> {
        &self.inner
    }

    fn delay(&self, len: u64) {
        let transfer = self
            .bytes_per_sec
            .map(|bps| Duration::from_secs_f64(len as f64 / bps))
            .unwrap_or_default();
        let d = self.base + transfer;
        if !d.is_zero() {
            std::thread::sleep(d);
        }
    }
}

impl ObjectStore for LatencyStore {
    fn get(&self, path: &str, offset: u64, len: u64) -> Result<Vec<u8>> {
        self.delay(len);
        self.inner.get(path, offset, len)
    }

    fn get_suffix(&self, path: &str, len: u64) -> Result<(Vec<u8>, u64)> {
        self.delay(len);
        self.inner.get_suffix(path, len)
    }

    fn get_all(&self, path: &str) -> Result<Vec<u8>> {
        let out = self.inner.get_all(path)?;
        self.delay(out.len() as u64);
        Ok(out)
    }

    fn put(&self, path: &str, bytes: &[u8]) -> Result<()> {
        self.inner.put(path, bytes)
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>> {
        self.inner.list(prefix)
    }

    fn delete(&self, path: &str) -> Result<()> {
        self.inner.delete(path)
    }

    fn stats(&self) -> &StoreStats {
        self.inner.stats()
    }
}
