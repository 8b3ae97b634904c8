//! Graph schema, table manifests and the file registry.
//!
//! Object layout in the store:
//!
//! * `catalog/schema.json` holds the graph schema;
//! * `tables/<table>/manifest.json` lists a table's data files;
//! * `catalog/registry.json` persists file-id bindings across restarts so
//!   ids are never reused and materialized topology stays addressable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use lakegraph_core::ColumnKind;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgc::{self, Footer};
use crate::store::ObjectStore;

pub const SCHEMA_PATH: &str = "catalog/schema.json";
pub const REGISTRY_PATH: &str = "catalog/registry.json";

pub fn manifest_path(table: &str) -> String {
    format!("tables/{table}/manifest.json")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexType {
    #[serde(rename = "type")]
    pub name: String,
    pub table: String,
    pub key: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeType {
    #[serde(rename = "type")]
    pub name: String,
    pub table: String,
    #[serde(rename = "srcKey")]
    pub src_key: String,
    #[serde(rename = "srcType")]
    pub src_type: String,
    #[serde(rename = "tgtKey")]
    pub tgt_key: String,
    #[serde(rename = "tgtType")]
    pub tgt_type: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSchema {
    pub vertices: Vec<VertexType>,
    pub edges: Vec<EdgeType>,
}

impl GraphSchema {
    pub fn vertex(&self, name: &str) -> Option<&VertexType> {
        self.vertices.iter().find(|v| v.name == name)
    }

    pub fn edge(&self, name: &str) -> Option<&EdgeType> {
        self.edges.iter().find(|e| e.name == name)
    }

    pub fn vertex_for_table(&self, table: &str) -> Option<&VertexType> {
        self.vertices.iter().find(|v| v.table == table)
    }

    pub fn edge_for_table(&self, table: &str) -> Option<&EdgeType> {
        self.edges.iter().find(|e| e.table == table)
    }

    pub fn tables(&self) -> impl Iterator<Item = &str> {
        self.vertices
            .iter()
            .map(|v| v.table.as_str())
            .chain(self.edges.iter().map(|e| e.table.as_str()))
    }

    /// Structural checks that need no table data.
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        let mut tables = BTreeSet::new();
        for v in &self.vertices {
            if !names.insert(v.name.as_str()) {
                return Err(Error::Catalog(format!("duplicate type name {}", v.name)));
            }
            if !tables.insert(v.table.as_str()) {
                return Err(Error::Catalog(format!("table {} mapped twice", v.table)));
            }
        }
        for e in &self.edges {
            if !names.insert(e.name.as_str()) {
                return Err(Error::Catalog(format!("duplicate type name {}", e.name)));
            }
            if !tables.insert(e.table.as_str()) {
                return Err(Error::Catalog(format!("table {} mapped twice", e.table)));
            }
            for t in [&e.src_type, &e.tgt_type] {
                if self.vertex(t).is_none() {
                    return Err(Error::Catalog(format!(
                        "edge type {} references unknown vertex type {t}",
                        e.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(store: &dyn ObjectStore, path: &str) -> Result<GraphSchema> {
        let schema: GraphSchema = serde_json::from_slice(&store.get_all(path)?)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, store: &dyn ObjectStore, path: &str) -> Result<()> {
        store.put(path, &serde_json::to_vec_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFile {
    pub path: String,
    #[serde(rename = "rowCount")]
    pub row_count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableManifest {
    pub table: String,
    pub version: u64,
    pub files: Vec<DataFile>,
}

impl TableManifest {
    pub fn load(store: &dyn ObjectStore, table: &str) -> Result<TableManifest> {
        let path = manifest_path(table);
        let bytes = store.get_all(&path).map_err(|e| match e {
            Error::NotFound(_) => Error::Catalog(format!("dangling table reference {table}")),
            other => other,
        })?;
        let m: TableManifest = serde_json::from_slice(&bytes)?;
        if m.table != table {
            return Err(Error::Catalog(format!(
                "manifest at {path} describes table {}",
                m.table
            )));
        }
        Ok(m)
    }

    pub fn save(&self, store: &dyn ObjectStore) -> Result<()> {
        store.put(&manifest_path(&self.table), &serde_json::to_vec_pretty(self)?)
    }

    /// Adds a file and bumps the version.
    pub fn add_file(store: &dyn ObjectStore, table: &str, file: DataFile) -> Result<TableManifest> {
        let mut m = TableManifest::load(store, table)?;
        m.files.retain(|f| f.path != file.path);
        m.files.push(file);
        m.version += 1;
        m.save(store)?;
        Ok(m)
    }

    /// Drops a file from the list and bumps the version.
    pub fn remove_file(store: &dyn ObjectStore, table: &str, path: &str) -> Result<TableManifest> {
        let mut m = TableManifest::load(store, table)?;
        let before = m.files.len();
        m.files.retain(|f| f.path != path);
        if m.files.len() == before {
            return Err(Error::Catalog(format!("{path} is not a file of {table}")));
        }
        m.version += 1;
        m.save(store)?;
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Vertex,
    Edge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub table: String,
    pub row_count: u64,
    pub kind: FileKind,
    /// Registry version at which this id was bound.
    pub bound_at: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegistryDiff {
    pub added: Vec<u32>,
    pub removed: Vec<u32>,
}

impl RegistryDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRegistry {
    pub version: u64,
    next_id: u32,
    entries: BTreeMap<u32, FileEntry>,
    retired: BTreeMap<u32, FileEntry>,
    /// Registry version at which each table's file set last changed.
    table_changed_at: BTreeMap<String, u64>,
    manifest_versions: BTreeMap<String, u64>,
}

impl FileRegistry {
    /// Assigns ids from 1 in `(table, path)` order.
    pub fn from_manifests(schema: &GraphSchema, manifests: &[TableManifest]) -> Result<FileRegistry> {
        let mut reg = FileRegistry {
            version: 1,
            next_id: 1,
            ..Default::default()
        };
        let mut files: Vec<(&str, &DataFile)> = Vec::new();
        for m in manifests {
            check_manifest(m)?;
            files.extend(m.files.iter().map(|f| (m.table.as_str(), f)));
            reg.table_changed_at.insert(m.table.clone(), 1);
            reg.manifest_versions.insert(m.table.clone(), m.version);
        }
        files.sort_by(|a, b| (a.0, &a.1.path).cmp(&(b.0, &b.1.path)));
        for (table, f) in files {
            reg.bind(schema, table, f)?;
        }
        Ok(reg)
    }

    fn bind(&mut self, schema: &GraphSchema, table: &str, f: &DataFile) -> Result<u32> {
        let kind = if schema.vertex_for_table(table).is_some() {
            FileKind::Vertex
        } else if schema.edge_for_table(table).is_some() {
            FileKind::Edge
        } else {
            return Err(Error::Catalog(format!("table {table} is not mapped")));
        };
        if self.next_id == u32::MAX {
            return Err(Error::Catalog("file id space exhausted".into()));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.entries.insert(
            id,
            FileEntry {
                path: f.path.clone(),
                table: table.to_string(),
                row_count: f.row_count,
                kind,
                bound_at: self.version,
            },
        );
        Ok(id)
    }

    /// Reconciles the registry with current manifests. Added files get
    /// fresh ids above every id ever handed out.
    pub fn refresh(&mut self, schema: &GraphSchema, manifests: &[TableManifest]) -> Result<RegistryDiff> {
        let mut current: BTreeSet<(&str, &str)> = BTreeSet::new();
        let mut added_files: Vec<(&str, &DataFile)> = Vec::new();
        let bound: HashMap<(&str, &str), u32> = self
            .entries
            .iter()
            .map(|(&id, e)| ((e.table.as_str(), e.path.as_str()), id))
            .collect();
        for m in manifests {
            check_manifest(m)?;
            for f in &m.files {
                current.insert((m.table.as_str(), f.path.as_str()));
                if !bound.contains_key(&(m.table.as_str(), f.path.as_str())) {
                    added_files.push((m.table.as_str(), f));
                }
            }
        }
        let removed: Vec<u32> = self
            .entries
            .iter()
            .filter(|(_, e)| !current.contains(&(e.table.as_str(), e.path.as_str())))
            .map(|(&id, _)| id)
            .collect();
        drop(bound);
        if added_files.is_empty() && removed.is_empty() {
            for m in manifests {
                self.manifest_versions.insert(m.table.clone(), m.version);
            }
            return Ok(RegistryDiff::default());
        }
        self.version += 1;
        let mut changed_tables = BTreeSet::new();
        for id in &removed {
            let e = self.entries.remove(id).unwrap();
            changed_tables.insert(e.table.clone());
            self.retired.insert(*id, e);
        }
        added_files.sort_by(|a, b| (a.0, &a.1.path).cmp(&(b.0, &b.1.path)));
        let mut added = Vec::with_capacity(added_files.len());
        for (table, f) in added_files {
            changed_tables.insert(table.to_string());
            added.push(self.bind(schema, table, f)?);
        }
        for t in changed_tables {
            self.table_changed_at.insert(t, self.version);
        }
        for m in manifests {
            self.manifest_versions.insert(m.table.clone(), m.version);
        }
        Ok(RegistryDiff { added, removed })
    }

    pub fn get(&self, id: u32) -> Option<&FileEntry> {
        self.entries.get(&id)
    }

    pub fn entry(&self, id: u32) -> Result<&FileEntry> {
        self.entries
            .get(&id)
            .ok_or_else(|| Error::Catalog(format!("unknown file id {id}")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, &FileEntry)> {
        self.entries.iter().map(|(&id, e)| (id, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_retired(&self, id: u32) -> bool {
        self.retired.contains_key(&id)
    }

    /// File ids of a table, ascending.
    pub fn files_of(&self, table: &str) -> Vec<u32> {
        self.entries
            .iter()
            .filter(|(_, e)| e.table == table)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn table_changed_at(&self, table: &str) -> u64 {
        self.table_changed_at.get(table).copied().unwrap_or(0)
    }

    /// Version under which an edge file's topology is valid: it changes
    /// whenever the file is rebound or the vertex files its keys resolve
    /// against change.
    pub fn topology_version(&self, schema: &GraphSchema, edge_file: u32) -> Result<u64> {
        let e = self.entry(edge_file)?;
        let et = schema
            .edge_for_table(&e.table)
            .ok_or_else(|| Error::Catalog(format!("file {edge_file} is not an edge file")))?;
        let src = self.table_changed_at(&schema.vertex(&et.src_type).unwrap().table);
        let tgt = self.table_changed_at(&schema.vertex(&et.tgt_type).unwrap().table);
        Ok(e.bound_at.max(src).max(tgt))
    }

    pub fn save(&self, store: &dyn ObjectStore) -> Result<()> {
        store.put(REGISTRY_PATH, &serde_json::to_vec(self)?)
    }

    pub fn load_persisted(store: &dyn ObjectStore) -> Result<Option<FileRegistry>> {
        match store.get_all(REGISTRY_PATH) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(Error::NotFound(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

fn check_manifest(m: &TableManifest) -> Result<()> {
    let mut seen = BTreeSet::new();
    for f in &m.files {
        if f.row_count > u32::MAX as u64 {
            return Err(Error::Catalog(format!(
                "{} has {} rows, more than a transformed id can address",
                f.path, f.row_count
            )));
        }
        if !seen.insert(f.path.as_str()) {
            return Err(Error::Catalog(format!("{} listed twice in {}", f.path, m.table)));
        }
    }
    Ok(())
}

/// Lazily fetched, shared file footers.
#[derive(Default)]
pub struct FooterCache {
    footers: Mutex<HashMap<u32, Arc<Footer>>>,
}

impl FooterCache {
    pub fn get(&self, store: &dyn ObjectStore, registry: &FileRegistry, id: u32) -> Result<Arc<Footer>> {
        if let Some(f) = self.footers.lock().get(&id) {
            return Ok(f.clone());
        }
        let entry = registry.entry(id)?;
        let footer = Arc::new(lgc::read_footer(store, &entry.path).map_err(|e| e.in_file(id, &entry.path))?);
        if footer.row_count() != entry.row_count {
            return Err(Error::Catalog(format!(
                "{} has {} rows but its manifest says {}",
                entry.path,
                footer.row_count(),
                entry.row_count
            ))
            .in_file(id, &entry.path));
        }
        self.footers.lock().insert(id, footer.clone());
        Ok(footer)
    }

    pub fn insert(&self, id: u32, footer: Arc<Footer>) {
        self.footers.lock().insert(id, footer);
    }

    pub fn cached(&self, id: u32) -> Option<Arc<Footer>> {
        self.footers.lock().get(&id).cloned()
    }

    pub fn forget(&self, id: u32) {
        self.footers.lock().remove(&id);
    }
}

/// Schema, registry and footers of one store.
pub struct Catalog {
    pub store: Arc<dyn ObjectStore>,
    pub schema: GraphSchema,
    pub registry: FileRegistry,
    pub footers: FooterCache,
}

impl Catalog {
    /// Loads schema and manifests and assigns file ids afresh, ignoring any
    /// persisted registry.
    pub fn load(store: Arc<dyn ObjectStore>) -> Result<Catalog> {
        let schema = GraphSchema::load(store.as_ref(), SCHEMA_PATH)?;
        let manifests = load_manifests(store.as_ref(), &schema)?;
        let registry = FileRegistry::from_manifests(&schema, &manifests)?;
        let cat = Catalog {
            store,
            schema,
            registry,
            footers: FooterCache::default(),
        };
        cat.validate_columns()?;
        Ok(cat)
    }

    /// Resumes from the persisted registry when there is one, reconciling
    /// it with current manifests, and persists the result.
    pub fn open(store: Arc<dyn ObjectStore>) -> Result<(Catalog, RegistryDiff)> {
        let schema = GraphSchema::load(store.as_ref(), SCHEMA_PATH)?;
        let manifests = load_manifests(store.as_ref(), &schema)?;
        let (registry, diff) = match FileRegistry::load_persisted(store.as_ref())? {
            Some(mut reg) => {
                let diff = reg.refresh(&schema, &manifests)?;
                (reg, diff)
            }
            None => {
                let reg = FileRegistry::from_manifests(&schema, &manifests)?;
                let added = reg.entries().map(|(id, _)| id).collect();
                (
                    reg,
                    RegistryDiff {
                        added,
                        removed: Vec::new(),
                    },
                )
            }
        };
        let cat = Catalog {
            store,
            schema,
            registry,
            footers: FooterCache::default(),
        };
        cat.validate_columns()?;
        if !diff.is_empty() {
            cat.registry.save(cat.store.as_ref())?;
        }
        Ok((cat, diff))
    }

    /// Re-reads manifests and applies the diff. Must not overlap queries.
    pub fn refresh(&mut self) -> Result<RegistryDiff> {
        let manifests = load_manifests(self.store.as_ref(), &self.schema)?;
        let diff = self.registry.refresh(&self.schema, &manifests)?;
        for id in &diff.removed {
            self.footers.forget(*id);
        }
        if !diff.is_empty() {
            self.validate_columns()?;
            self.registry.save(self.store.as_ref())?;
        }
        Ok(diff)
    }

    pub fn footer(&self, id: u32) -> Result<Arc<Footer>> {
        self.footers.get(self.store.as_ref(), &self.registry, id)
    }

    /// Checks key columns against the first file of every table.
    fn validate_columns(&self) -> Result<()> {
        for v in &self.schema.vertices {
            if let Some(&id) = self.registry.files_of(&v.table).first() {
                let f = self.footer(id)?;
                key_column(&f, &v.key, &v.table)?;
            }
        }
        for e in &self.schema.edges {
            if let Some(&id) = self.registry.files_of(&e.table).first() {
                let f = self.footer(id)?;
                let sk = key_column(&f, &e.src_key, &e.table)?;
                let tk = key_column(&f, &e.tgt_key, &e.table)?;
                for (k, t) in [(sk, &e.src_type), (tk, &e.tgt_type)] {
                    let vt = self.schema.vertex(t).unwrap();
                    if let Some(&vid) = self.registry.files_of(&vt.table).first() {
                        let vk = key_column(&*self.footer(vid)?, &vt.key, &vt.table)?;
                        if vk != k {
                            return Err(Error::Catalog(format!(
                                "edge table {} key kind {k} does not match {} key kind {vk}",
                                e.table, vt.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn vertex_type_of_file(&self, id: u32) -> Option<&VertexType> {
        let e = self.registry.get(id)?;
        self.schema.vertex_for_table(&e.table)
    }

    pub fn edge_type_of_file(&self, id: u32) -> Option<&EdgeType> {
        let e = self.registry.get(id)?;
        self.schema.edge_for_table(&e.table)
    }
}

fn key_column(f: &Footer, name: &str, table: &str) -> Result<ColumnKind> {
    let i = f
        .column_index(name)
        .ok_or_else(|| Error::Catalog(format!("key column {name} missing from table {table}")))?;
    match f.schema[i].kind {
        k @ (ColumnKind::Int64 | ColumnKind::String) => Ok(k),
        k => Err(Error::Catalog(format!(
            "key column {name} of table {table} has kind {k}; keys must be INT64 or STRING"
        ))),
    }
}

pub fn load_manifests(store: &dyn ObjectStore, schema: &GraphSchema) -> Result<Vec<TableManifest>> {
    schema.tables().map(|t| TableManifest::load(store, t)).collect()
}
