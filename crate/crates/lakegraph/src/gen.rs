//! Synthetic social-network tables shaped after the LDBC SNB schema, plus a
//! writer for arbitrary small graphs used by tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use lakegraph_core::{ColumnKind, Encoding, Value};

use crate::catalog::{DataFile, EdgeType, GraphSchema, TableManifest, VertexType, SCHEMA_PATH};
use crate::error::{Error, Result};
use crate::lgc::{self, ColumnSchema};
use crate::store::ObjectStore;

pub const ZIPF_EXPONENT: f64 = 1.2;
/// First day of the creation-date range (2009-06-04).
pub const DATE_LO: i32 = 14400;
/// Last day of the creation-date range (2012-12-31).
pub const DATE_HI: i32 = 15705;

pub const TAG_NAMES: &[&str] = &[
    "Music", "Sports", "Politics", "Science", "Art", "Travel", "Food", "Film", "Books", "Games",
];

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub person_count: u64,
    pub comment_count: u64,
    pub tag_count: u64,
    /// Payload columns added to every table.
    pub attribute_width: usize,
    /// Average payload string length.
    pub payload_len: usize,
    pub files_per_table: usize,
    pub row_group_size: usize,
    pub sort_edges_by_src: bool,
    /// Largest out-degree drawn for Knows edges.
    pub knows_max_degree: u64,
    /// Fraction of Knows targets that reference no Person row.
    pub dangling_rate: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            person_count: 1000,
            comment_count: 5000,
            tag_count: 50,
            attribute_width: 2,
            payload_len: 16,
            files_per_table: 4,
            row_group_size: 1024,
            sort_edges_by_src: true,
            knows_max_degree: 64,
            dangling_rate: 0.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableReport {
    pub table: String,
    pub files: usize,
    pub rows: u64,
    pub total_bytes: u64,
    pub key_bytes: u64,
    pub footer_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenReport {
    pub tables: Vec<TableReport>,
    /// Bytes of schema and manifest documents.
    pub catalog_bytes: u64,
}

impl GenReport {
    pub fn key_bytes(&self) -> u64 {
        self.tables.iter().map(|t| t.key_bytes).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.tables.iter().map(|t| t.total_bytes).sum()
    }

    pub fn footer_bytes(&self) -> u64 {
        self.tables.iter().map(|t| t.footer_bytes).sum()
    }

    pub fn key_ratio(&self) -> f64 {
        self.key_bytes() as f64 / self.total_bytes().max(1) as f64
    }

    pub fn rows(&self, table: &str) -> u64 {
        self.tables.iter().find(|t| t.table == table).map_or(0, |t| t.rows)
    }
}

pub fn ldbc_schema() -> GraphSchema {
    let v = |name: &str, table: &str| VertexType {
        name: name.into(),
        table: table.into(),
        key: "id".into(),
    };
    let e = |name: &str, table: &str, sk: &str, st: &str, tk: &str, tt: &str| EdgeType {
        name: name.into(),
        table: table.into(),
        src_key: sk.into(),
        src_type: st.into(),
        tgt_key: tk.into(),
        tgt_type: tt.into(),
    };
    GraphSchema {
        vertices: vec![v("Person", "person"), v("Comment", "comment"), v("Tag", "tag")],
        edges: vec![
            e("Knows", "knows", "src", "Person", "dst", "Person"),
            e("HasCreator", "has_creator", "comment", "Comment", "person", "Person"),
            e("HasTag", "has_tag", "comment", "Comment", "tag", "Tag"),
        ],
    }
}

fn payload(rng: &mut ChaCha8Rng, avg: usize) -> String {
    if avg == 0 {
        return String::new();
    }
    let len = rng.gen_range(avg / 2..=avg + avg / 2);
    (0..len)
        .map(|_| rng.sample(rand::distributions::Alphanumeric) as char)
        .collect()
}

/// One table's rows, produced file by file.
struct TableDef<'a> {
    name: &'a str,
    schema: Vec<ColumnSchema>,
    encodings: Vec<Encoding>,
    key_columns: Vec<&'a str>,
    rows: u64,
}

/// Writes `rows` split into `files` contiguous files, plus a manifest.
/// `row` produces row `i`; it is called in ascending order.
fn write_split<F>(store: &dyn ObjectStore, spec: &GenSpec, def: &TableDef, mut row: F) -> Result<TableReport>
where
    F: FnMut(u64) -> Vec<Value>,
{
    let files = spec.files_per_table.max(1) as u64;
    let mut manifest = TableManifest {
        table: def.name.to_string(),
        version: 1,
        files: Vec::new(),
    };
    let mut report = TableReport {
        table: def.name.to_string(),
        files: 0,
        rows: def.rows,
        ..Default::default()
    };
    let per = def.rows.div_ceil(files);
    for f in 0..files {
        let lo = (f * per).min(def.rows);
        let hi = ((f + 1) * per).min(def.rows);
        if lo == hi && f > 0 {
            break;
        }
        let path = format!("tables/{}/part-{f:05}.lgc", def.name);
        let bytes = lgc::encode_table(&def.schema, (lo..hi).map(&mut row), spec.row_group_size, &def.encodings)?;
        store.put(&path, &bytes)?;
        let footer_len = u32::from_le_bytes(bytes[bytes.len() - 8..bytes.len() - 4].try_into().unwrap()) as u64;
        let footer = lgc::decode_footer(&bytes[bytes.len() - 8 - footer_len as usize..bytes.len() - 8])?;
        report.total_bytes += bytes.len() as u64;
        report.footer_bytes += footer_len + lgc::TAIL_LEN;
        for k in &def.key_columns {
            report.key_bytes += footer.column_bytes(footer.column_index(k).unwrap());
        }
        report.files += 1;
        manifest.files.push(DataFile {
            path,
            row_count: hi - lo,
        });
    }
    manifest.save(store)?;
    Ok(report)
}

fn with_payload(
    mut schema: Vec<ColumnSchema>,
    mut enc: Vec<Encoding>,
    width: usize,
) -> (Vec<ColumnSchema>, Vec<Encoding>) {
    for i in 0..width {
        schema.push(ColumnSchema::new(format!("pad{i}"), ColumnKind::String));
        enc.push(Encoding::Plain);
    }
    (schema, enc)
}

/// Generates the LDBC-shaped dataset. Output is a pure function of `spec`.
pub fn generate(store: &dyn ObjectStore, spec: &GenSpec) -> Result<GenReport> {
    if spec.person_count == 0 || spec.comment_count == 0 || spec.tag_count == 0 {
        return Err(Error::InvalidTable("every vertex table needs at least one row".into()));
    }
    if spec.row_group_size == 0 {
        return Err(Error::InvalidTable("row group size must be at least 1".into()));
    }
    let files = spec.files_per_table.max(1) as u64;
    for n in [spec.person_count, spec.comment_count] {
        if n.div_ceil(files) > u32::MAX as u64 {
            return Err(Error::InvalidTable("more than 2^32 rows per file".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let np = spec.person_count;
    let nc = spec.comment_count;
    let nt = spec.tag_count;

    // Topology first: degrees and endpoints, kept as compact integers.
    let knows_deg = Zipf::new(spec.knows_max_degree.max(1), ZIPF_EXPONENT).unwrap();
    let person_rank = Zipf::new(np, ZIPF_EXPONENT).unwrap();
    let tag_rank = Zipf::new(nt, ZIPF_EXPONENT).unwrap();
    let mut knows: Vec<(i64, i64)> = Vec::new();
    for p in 0..np {
        let d = knows_deg.sample(&mut rng) as u64;
        for _ in 0..d {
            let t = if np > 1 {
                let mut t = rng.gen_range(0..np - 1);
                if t >= p {
                    t += 1;
                }
                t as i64 + 1
            } else {
                1
            };
            let t = if spec.dangling_rate > 0.0 && rng.gen_bool(spec.dangling_rate.min(1.0)) {
                // Ids past the last person never resolve.
                np as i64 + 1 + rng.gen_range(0..np.max(1)) as i64
            } else {
                t
            };
            knows.push((p as i64 + 1, t));
        }
    }
    let mut creator: Vec<(i64, i64)> = (0..nc)
        .map(|c| (c as i64 + 1, person_rank.sample(&mut rng) as i64))
        .collect();
    let mut has_tag: Vec<(i64, i64)> = Vec::new();
    for c in 0..nc {
        let k = rng.gen_range(1..=3u64.min(nt));
        let mut picked: Vec<i64> = Vec::with_capacity(k as usize);
        while picked.len() < k as usize {
            let t = tag_rank.sample(&mut rng) as i64 - 1;
            if !picked.contains(&t) {
                picked.push(t);
            }
        }
        has_tag.extend(picked.into_iter().map(|t| (c as i64 + 1, t)));
    }
    if !spec.sort_edges_by_src {
        knows.shuffle(&mut rng);
        creator.shuffle(&mut rng);
        has_tag.shuffle(&mut rng);
    }

    let schema = ldbc_schema();
    schema.save(store, SCHEMA_PATH)?;
    let mut report = GenReport::default();
    let w = spec.attribute_width;
    let pl = spec.payload_len;
    let seed = spec.seed;
    // Attribute values come from per-table streams so tables can be
    // regenerated independently.
    let stream = |table: u64| ChaCha8Rng::seed_from_u64(seed ^ (table.wrapping_mul(0x9E37_79B9_7F4A_7C15)));

    let (s, e) = with_payload(
        vec![
            ColumnSchema::new("id", ColumnKind::Int64),
            ColumnSchema::new("firstName", ColumnKind::String),
            ColumnSchema::new("gender", ColumnKind::String),
            ColumnSchema::new("birthday", ColumnKind::Date32),
            ColumnSchema::new("creationDate", ColumnKind::Date32),
        ],
        vec![
            Encoding::Plain,
            Encoding::Dict,
            Encoding::Dict,
            Encoding::Plain,
            Encoding::Plain,
        ],
        w,
    );
    let mut r = stream(1);
    report.tables.push(write_split(
        store,
        spec,
        &TableDef {
            name: "person",
            schema: s,
            encodings: e,
            key_columns: vec!["id"],
            rows: np,
        },
        |i| {
            let mut row = vec![
                Value::Int64(i as i64 + 1),
                Value::Str(format!("Name{}", r.gen_range(0..200))),
                Value::Str(if r.gen_bool(0.5) { "female" } else { "male" }.into()),
                Value::Date32(r.gen_range(-3650..10000)),
                Value::Date32(r.gen_range(DATE_LO..=DATE_HI)),
            ];
            row.extend((0..w).map(|_| Value::Str(payload(&mut r, pl))));
            row
        },
    )?);

    let (s, e) = with_payload(
        vec![
            ColumnSchema::new("id", ColumnKind::Int64),
            ColumnSchema::new("creationDate", ColumnKind::Date32),
            ColumnSchema::new("length", ColumnKind::Int64),
        ],
        vec![Encoding::Plain, Encoding::Plain, Encoding::Plain],
        w,
    );
    let mut r = stream(2);
    report.tables.push(write_split(
        store,
        spec,
        &TableDef {
            name: "comment",
            schema: s,
            encodings: e,
            key_columns: vec!["id"],
            rows: nc,
        },
        |i| {
            let mut row = vec![
                Value::Int64(i as i64 + 1),
                Value::Date32(r.gen_range(DATE_LO..=DATE_HI)),
                Value::Int64(r.gen_range(1..2000)),
            ];
            row.extend((0..w).map(|_| Value::Str(payload(&mut r, pl))));
            row
        },
    )?);

    let (s, e) = with_payload(
        vec![
            ColumnSchema::new("id", ColumnKind::String),
            ColumnSchema::new("name", ColumnKind::String),
        ],
        vec![Encoding::Plain, Encoding::Plain],
        w,
    );
    let mut r = stream(3);
    report.tables.push(write_split(
        store,
        spec,
        &TableDef {
            name: "tag",
            schema: s,
            encodings: e,
            key_columns: vec!["id"],
            rows: nt,
        },
        |i| {
            let mut row = vec![Value::Str(tag_key(i as i64)), Value::Str(tag_name(i))];
            row.extend((0..w).map(|_| Value::Str(payload(&mut r, pl))));
            row
        },
    )?);

    let (s, e) = with_payload(
        vec![
            ColumnSchema::new("src", ColumnKind::Int64),
            ColumnSchema::new("dst", ColumnKind::Int64),
            ColumnSchema::new("creationDate", ColumnKind::Date32),
        ],
        vec![Encoding::Plain, Encoding::Plain, Encoding::Plain],
        w,
    );
    let mut r = stream(4);
    report.tables.push(write_split(
        store,
        spec,
        &TableDef {
            name: "knows",
            schema: s,
            encodings: e,
            key_columns: vec!["src", "dst"],
            rows: knows.len() as u64,
        },
        |i| {
            let (a, b) = knows[i as usize];
            let mut row = vec![
                Value::Int64(a),
                Value::Int64(b),
                Value::Date32(r.gen_range(DATE_LO..=DATE_HI)),
            ];
            row.extend((0..w).map(|_| Value::Str(payload(&mut r, pl))));
            row
        },
    )?);

    let (s, e) = with_payload(
        vec![
            ColumnSchema::new("comment", ColumnKind::Int64),
            ColumnSchema::new("person", ColumnKind::Int64),
            ColumnSchema::new("date", ColumnKind::Date32),
        ],
        vec![Encoding::Plain, Encoding::Plain, Encoding::Plain],
        w,
    );
    let mut r = stream(5);
    report.tables.push(write_split(
        store,
        spec,
        &TableDef {
            name: "has_creator",
            schema: s,
            encodings: e,
            key_columns: vec!["comment", "person"],
            rows: creator.len() as u64,
        },
        |i| {
            let (a, b) = creator[i as usize];
            let mut row = vec![
                Value::Int64(a),
                Value::Int64(b),
                Value::Date32(r.gen_range(DATE_LO..=DATE_HI)),
            ];
            row.extend((0..w).map(|_| Value::Str(payload(&mut r, pl))));
            row
        },
    )?);

    let (s, e) = with_payload(
        vec![
            ColumnSchema::new("comment", ColumnKind::Int64),
            ColumnSchema::new("tag", ColumnKind::String),
        ],
        vec![Encoding::Plain, Encoding::Dict],
        w,
    );
    let mut r = stream(6);
    report.tables.push(write_split(
        store,
        spec,
        &TableDef {
            name: "has_tag",
            schema: s,
            encodings: e,
            key_columns: vec!["comment", "tag"],
            rows: has_tag.len() as u64,
        },
        |i| {
            let (a, b) = has_tag[i as usize];
            let mut row = vec![Value::Int64(a), Value::Str(tag_key(b))];
            row.extend((0..w).map(|_| Value::Str(payload(&mut r, pl))));
            row
        },
    )?);

    report.catalog_bytes = catalog_bytes(store, &schema)?;
    Ok(report)
}

pub fn tag_key(i: i64) -> String {
    format!("tag-{i}")
}

pub fn tag_name(i: u64) -> String {
    match TAG_NAMES.get(i as usize) {
        Some(n) => n.to_string(),
        None => format!("Topic{i}"),
    }
}

fn catalog_bytes(store: &dyn ObjectStore, schema: &GraphSchema) -> Result<u64> {
    let mut n = store.get_all(SCHEMA_PATH)?.len() as u64;
    for t in schema.tables() {
        n += store.get_all(&crate::catalog::manifest_path(t))?.len() as u64;
    }
    Ok(n)
}

/// Picks `payload_len` so key-column bytes come out near `ratio` of all
/// table bytes, measured from a payload-free dry run.
pub fn tune_key_ratio(spec: &GenSpec, ratio: f64) -> Result<GenSpec> {
    let mut probe = spec.clone();
    probe.payload_len = 0;
    let store = crate::store::MemoryStore::new();
    let base = generate(&store, &probe)?;
    let k = base.key_bytes() as f64;
    let o = (base.total_bytes() - base.key_bytes()) as f64;
    let rows: u64 = base.tables.iter().map(|t| t.rows).sum();
    let mut tuned = spec.clone();
    if spec.attribute_width == 0 {
        tuned.attribute_width = 1;
    }
    // Each payload value costs a 4-byte length plus its characters.
    let wanted_payload = (k / ratio - k - o).max(0.0);
    let per_value = wanted_payload / (rows as f64 * tuned.attribute_width as f64);
    let extra = if spec.attribute_width == 0 { 4.0 } else { 0.0 };
    tuned.payload_len = (per_value - extra).round().max(0.0) as usize;
    Ok(tuned)
}

/// A small graph with one vertex type `V` and one edge type `E`, for
/// algorithm and engine tests.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimpleGraph {
    pub vertex_count: u32,
    pub edges: Vec<(u32, u32)>,
}

#[derive(Clone, Copy, Debug)]
pub struct SimpleLayout {
    pub vertex_files: usize,
    pub edge_files: usize,
    pub row_group_size: usize,
    pub seed: u64,
}

impl Default for SimpleLayout {
    fn default() -> Self {
        SimpleLayout {
            vertex_files: 3,
            edge_files: 2,
            row_group_size: 16,
            seed: 1,
        }
    }
}

/// Key of vertex `i` in a [`SimpleGraph`] table.
pub fn simple_key(i: u32) -> i64 {
    i as i64 * 3 + 11
}

/// Vertex columns: `id`, `w` (INT64 in 0..100), `color` (one of four
/// strings). Edge columns: `src`, `dst`, `weight` (INT64 in 0..100).
/// Attribute values are a pure function of `(seed, index)`.
pub fn simple_vertex_attrs(seed: u64, i: u32) -> (i64, String) {
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003) ^ i as u64);
    let colors = ["red", "green", "blue", "gray"];
    (r.gen_range(0..100), colors[r.gen_range(0..4)].to_string())
}

pub fn simple_edge_weight(seed: u64, e: usize) -> i64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7_000_009) ^ (e as u64).wrapping_add(1 << 40));
    r.gen_range(0..100)
}

pub fn write_simple_graph(store: &dyn ObjectStore, g: &SimpleGraph, layout: &SimpleLayout) -> Result<()> {
    let schema = GraphSchema {
        vertices: vec![VertexType {
            name: "V".into(),
            table: "v".into(),
            key: "id".into(),
        }],
        edges: vec![EdgeType {
            name: "E".into(),
            table: "e".into(),
            src_key: "src".into(),
            src_type: "V".into(),
            tgt_key: "dst".into(),
            tgt_type: "V".into(),
        }],
    };
    schema.save(store, SCHEMA_PATH)?;
    let vspec = GenSpec {
        files_per_table: layout.vertex_files,
        row_group_size: layout.row_group_size,
        ..Default::default()
    };
    let seed = layout.seed;
    write_split(
        store,
        &vspec,
        &TableDef {
            name: "v",
            schema: vec![
                ColumnSchema::new("id", ColumnKind::Int64),
                ColumnSchema::new("w", ColumnKind::Int64),
                ColumnSchema::new("color", ColumnKind::String),
            ],
            encodings: vec![Encoding::Plain, Encoding::Plain, Encoding::Dict],
            key_columns: vec!["id"],
            rows: g.vertex_count as u64,
        },
        |i| {
            let (w, c) = simple_vertex_attrs(seed, i as u32);
            vec![Value::Int64(simple_key(i as u32)), Value::Int64(w), Value::Str(c)]
        },
    )?;
    let espec = GenSpec {
        files_per_table: layout.edge_files,
        ..vspec
    };
    write_split(
        store,
        &espec,
        &TableDef {
            name: "e",
            schema: vec![
                ColumnSchema::new("src", ColumnKind::Int64),
                ColumnSchema::new("dst", ColumnKind::Int64),
                ColumnSchema::new("weight", ColumnKind::Int64),
            ],
            encodings: vec![Encoding::Plain, Encoding::Plain, Encoding::Plain],
            key_columns: vec!["src", "dst"],
            rows: g.edges.len() as u64,
        },
        |i| {
            let (a, b) = g.edges[i as usize];
            vec![
                Value::Int64(simple_key(a)),
                Value::Int64(simple_key(b)),
                Value::Int64(simple_edge_weight(seed, i as usize)),
            ]
        },
    )?;
    Ok(())
}

/// Random multigraph with `n` vertices and `m` directed edges; self loops
/// and duplicates allowed.
pub fn random_graph(rng: &mut impl Rng, n: u32, m: usize) -> SimpleGraph {
    let edges = if n == 0 {
        Vec::new()
    } else {
        (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
    };
    SimpleGraph { vertex_count: n, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::MemoryStore;

    fn small() -> GenSpec {
        GenSpec {
            person_count: 300,
            comment_count: 900,
            tag_count: 20,
            files_per_table: 2,
            row_group_size: 128,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = MemoryStore::new();
        let b = MemoryStore::new();
        generate(&a, &small()).unwrap();
        generate(&b, &small()).unwrap();
        let paths = a.list("").unwrap();
        assert_eq!(paths, b.list("").unwrap());
        for p in paths {
            assert_eq!(a.get_all(&p).unwrap(), b.get_all(&p).unwrap(), "{p}");
        }
    }

    #[test]
    fn single_file_per_table() {
        let s = MemoryStore::new();
        let spec = GenSpec {
            files_per_table: 1,
            ..small()
        };
        let r = generate(&s, &spec).unwrap();
        assert!(r.tables.iter().all(|t| t.files == 1));
        let m = TableManifest::load(&s, "knows").unwrap();
        assert_eq!(m.files.len(), 1);
    }

    #[test]
    fn tuned_ratio_lands_near_target() {
        let spec = tune_key_ratio(&small(), 0.10).unwrap();
        let r = generate(&MemoryStore::new(), &spec).unwrap();
        assert!((r.key_ratio() - 0.10).abs() <= 0.02, "ratio {}", r.key_ratio());
    }

    #[test]
    fn music_is_a_tag() {
        assert_eq!(tag_name(0), "Music");
        assert_eq!(tag_name(42), "Topic42");
    }
}
