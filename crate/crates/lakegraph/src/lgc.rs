//! LGC columnar table files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "LGC1" | row group 0 chunks in column order | ... | footer | u32 footer_len | "LGC1"
//! ```
//!
//! Footer: `u16` column count; per column `u16` name length, name bytes,
//! `u8` kind; `u32` row group count; per group `u64` row count and per
//! column `u64` byte offset, `u64` byte length, `u8` encoding, `u8`
//! has-min-max, then (if set) typed min and max. Numeric bounds use their
//! PLAIN width; string bounds are `u16` length + bytes.

use std::collections::HashSet;

use lakegraph_core::encoding::{self, Encoding};
use lakegraph_core::{ColumnKind, Value};

use crate::error::{Error, Result};
use crate::store::{ObjectRef, ObjectStore};

pub const MAGIC: &[u8; 4] = b"LGC1";
/// Trailing `u32` footer length plus magic.
pub const TAIL_LEN: u64 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSchema {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkMeta {
    pub byte_offset: u64,
    pub byte_length: u64,
    pub encoding: Encoding,
    pub min_max: Option<(Value, Value)>,
    /// Always 0: nulls are not supported.
    pub null_count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowGroupMeta {
    pub row_count: u64,
    pub columns: Vec<ChunkMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Footer {
    pub schema: Vec<ColumnSchema>,
    pub row_groups: Vec<RowGroupMeta>,
    /// Encoded footer size, not part of the serialized form.
    pub footer_len: u64,
}

impl Footer {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn row_count(&self) -> u64 {
        self.row_groups.iter().map(|g| g.row_count).sum()
    }

    pub fn group_rows(&self) -> Vec<u64> {
        self.row_groups.iter().map(|g| g.row_count).collect()
    }

    /// Total bytes of one column's chunks.
    pub fn column_bytes(&self, column: usize) -> u64 {
        self.row_groups.iter().map(|g| g.columns[column].byte_length).sum()
    }
}

/// One column chunk as stored: opaque bytes plus what is needed to decode.
#[derive(Clone, Debug)]
pub struct EncodedChunk {
    pub bytes: Vec<u8>,
    pub kind: ColumnKind,
    pub encoding: Encoding,
    pub row_count: u64,
}

impl EncodedChunk {
    pub fn decode_all(&self) -> Result<Vec<Value>> {
        Ok(encoding::decode_all(
            &self.bytes,
            self.kind,
            self.encoding,
            self.row_count,
        )?)
    }
}

fn put_bound(out: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Int64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Float64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Date32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Bool(x) => out.push(*x as u8),
        Value::Str(s) => {
            out.extend_from_slice(&(s.len() as u16).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::malformed("footer", format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bound(&mut self, kind: ColumnKind) -> Result<Value> {
        Ok(match kind {
            ColumnKind::Int64 => Value::Int64(self.u64()? as i64),
            ColumnKind::Float64 => Value::Float64(f64::from_bits(self.u64()?)),
            ColumnKind::Date32 => Value::Date32(self.u32()? as i32),
            ColumnKind::Bool => Value::Bool(self.u8()? != 0),
            ColumnKind::String => {
                let n = self.u16()? as usize;
                let s = std::str::from_utf8(self.take(n)?)
                    .map_err(|_| Error::malformed("footer", "string bound is not utf-8"))?;
                Value::Str(s.to_string())
            }
        })
    }
}

pub fn encode_footer(schema: &[ColumnSchema], groups: &[RowGroupMeta]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(schema.len() as u16).to_le_bytes());
    for c in schema {
        out.extend_from_slice(&(c.name.len() as u16).to_le_bytes());
        out.extend_from_slice(c.name.as_bytes());
        out.push(c.kind.tag());
    }
    out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    for g in groups {
        out.extend_from_slice(&g.row_count.to_le_bytes());
        for c in &g.columns {
            out.extend_from_slice(&c.byte_offset.to_le_bytes());
            out.extend_from_slice(&c.byte_length.to_le_bytes());
            out.push(c.encoding.tag());
            match &c.min_max {
                Some((lo, hi)) => {
                    out.push(1);
                    put_bound(&mut out, lo);
                    put_bound(&mut out, hi);
                }
                None => out.push(0),
            }
        }
    }
    out
}

pub fn decode_footer(buf: &[u8]) -> Result<Footer> {
    let mut r = Reader { buf, pos: 0 };
    let ncols = r.u16()? as usize;
    let mut schema = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let n = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::malformed("footer", "column name is not utf-8"))?
            .to_string();
        let tag = r.u8()?;
        let kind =
            ColumnKind::from_tag(tag).ok_or_else(|| Error::malformed("footer", format!("unknown kind tag {tag}")))?;
        schema.push(ColumnSchema { name, kind });
    }
    let ngroups = r.u32()? as usize;
    let mut row_groups = Vec::with_capacity(ngroups);
    for _ in 0..ngroups {
        let row_count = r.u64()?;
        let mut columns = Vec::with_capacity(ncols);
        for col in &schema {
            let byte_offset = r.u64()?;
            let byte_length = r.u64()?;
            let tag = r.u8()?;
            let encoding =
                Encoding::from_tag(tag).ok_or_else(|| Error::malformed("footer", format!("unknown encoding {tag}")))?;
            let min_max = match r.u8()? {
                0 => None,
                1 => Some((r.bound(col.kind)?, r.bound(col.kind)?)),
                b => return Err(Error::malformed("footer", format!("has-min-max byte {b}"))),
            };
            columns.push(ChunkMeta {
                byte_offset,
                byte_length,
                encoding,
                min_max,
                null_count: 0,
            });
        }
        row_groups.push(RowGroupMeta { row_count, columns });
    }
    if r.pos != buf.len() {
        return Err(Error::malformed("footer", "trailing bytes"));
    }
    Ok(Footer {
        schema,
        row_groups,
        footer_len: buf.len() as u64,
    })
}

fn chunk_bounds(kind: ColumnKind, values: &[Value]) -> Option<(Value, Value)> {
    match kind {
        ColumnKind::Int64 | ColumnKind::Float64 | ColumnKind::Date32 | ColumnKind::String => {
            let lo = values.iter().min()?.clone();
            let hi = values.iter().max()?.clone();
            if let (Value::Str(a), Value::Str(b)) = (&lo, &hi) {
                if a.len() > u16::MAX as usize || b.len() > u16::MAX as usize {
                    return None;
                }
            }
            Some((lo, hi))
        }
        ColumnKind::Bool => None,
    }
}

/// Serializes a table into LGC bytes. `encodings` is per column.
pub fn encode_table<I>(
    schema: &[ColumnSchema],
    rows: I,
    row_group_size: usize,
    encodings: &[Encoding],
) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<Value>>,
{
    if row_group_size == 0 {
        return Err(Error::InvalidTable("row group size must be at least 1".into()));
    }
    if encodings.len() != schema.len() {
        return Err(Error::InvalidTable(format!(
            "{} encodings for {} columns",
            encodings.len(),
            schema.len()
        )));
    }
    let mut seen = HashSet::new();
    for (c, e) in schema.iter().zip(encodings) {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::InvalidTable(format!("duplicate column {}", c.name)));
        }
        if !e.applies_to(c.kind) {
            return Err(Error::InvalidTable(format!(
                "{} encoding not applicable to {} column {}",
                e.name(),
                c.kind,
                c.name
            )));
        }
    }

    let mut out = MAGIC.to_vec();
    let mut groups = Vec::new();
    let mut columns: Vec<Vec<Value>> = vec![Vec::new(); schema.len()];
    let mut buffered = 0usize;
    let mut flush = |columns: &mut Vec<Vec<Value>>, out: &mut Vec<u8>, rows: usize| -> Result<()> {
        let mut metas = Vec::with_capacity(schema.len());
        for ((col, vals), enc) in schema.iter().zip(columns.iter_mut()).zip(encodings) {
            let body = encoding::encode(vals, col.kind, *enc)?;
            metas.push(ChunkMeta {
                byte_offset: out.len() as u64,
                byte_length: body.len() as u64,
                encoding: *enc,
                min_max: chunk_bounds(col.kind, vals),
                null_count: 0,
            });
            out.extend_from_slice(&body);
            vals.clear();
        }
        groups.push(RowGroupMeta {
            row_count: rows as u64,
            columns: metas,
        });
        Ok(())
    };
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != schema.len() {
            return Err(Error::InvalidTable(format!(
                "row {i} has {} values for {} columns",
                row.len(),
                schema.len()
            )));
        }
        for ((v, col), dst) in row.into_iter().zip(schema).zip(columns.iter_mut()) {
            if v.kind() != col.kind {
                return Err(Error::InvalidTable(format!(
                    "row {i} column {}: expected {}, got {}",
                    col.name,
                    col.kind,
                    v.kind()
                )));
            }
            dst.push(v);
        }
        buffered += 1;
        if buffered == row_group_size {
            flush(&mut columns, &mut out, buffered)?;
            buffered = 0;
        }
    }
    if buffered > 0 {
        flush(&mut columns, &mut out, buffered)?;
    }
    let footer = encode_footer(schema, &groups);
    let footer_len = u32::try_from(footer.len()).map_err(|_| Error::InvalidTable("footer exceeds 4 GiB".into()))?;
    out.extend_from_slice(&footer);
    out.extend_from_slice(&footer_len.to_le_bytes());
    out.extend_from_slice(MAGIC);
    Ok(out)
}

/// Writes one LGC file to `path`.
pub fn write_table<I>(
    store: &dyn ObjectStore,
    path: &str,
    schema: &[ColumnSchema],
    rows: I,
    row_group_size: usize,
    encodings: &[Encoding],
) -> Result<ObjectRef>
where
    I: IntoIterator<Item = Vec<Value>>,
{
    let bytes = encode_table(schema, rows, row_group_size, encodings)?;
    store.put(path, &bytes)?;
    Ok(ObjectRef::new(path))
}

/// Reads the footer with two ranged requests: the fixed-size tail, then
/// the footer body.
pub fn read_footer(store: &dyn ObjectStore, path: &str) -> Result<Footer> {
    let (tail, size) = store.get_suffix(path, TAIL_LEN).map_err(|e| match e {
        Error::OutOfRange { .. } => Error::Truncated(path.to_string()),
        other => other,
    })?;
    if &tail[4..8] != MAGIC {
        return Err(Error::BadMagic(path.to_string()));
    }
    let footer_len = u32::from_le_bytes(tail[..4].try_into().unwrap()) as u64;
    if footer_len + TAIL_LEN + MAGIC.len() as u64 > size {
        return Err(Error::Truncated(path.to_string()));
    }
    let body = store.get(path, size - TAIL_LEN - footer_len, footer_len)?;
    let footer = decode_footer(&body).map_err(|e| e.in_file(0, path))?;
    let body_end = size - TAIL_LEN - footer_len;
    for g in &footer.row_groups {
        for c in &g.columns {
            if c.byte_offset < MAGIC.len() as u64 || c.byte_offset + c.byte_length > body_end {
                return Err(Error::malformed(
                    "footer",
                    format!("chunk range out of file body in {path}"),
                ));
            }
        }
    }
    Ok(footer)
}

/// Fetches one column chunk with a single ranged read.
pub fn read_column_chunk(
    store: &dyn ObjectStore,
    path: &str,
    footer: &Footer,
    row_group: usize,
    column: &str,
) -> Result<EncodedChunk> {
    let col = footer
        .column_index(column)
        .ok_or_else(|| Error::InvalidTable(format!("unknown column {column} in {path}")))?;
    read_column_chunk_at(store, path, footer, row_group, col)
}

pub fn read_column_chunk_at(
    store: &dyn ObjectStore,
    path: &str,
    footer: &Footer,
    row_group: usize,
    col: usize,
) -> Result<EncodedChunk> {
    let group = footer.row_groups.get(row_group).ok_or_else(|| {
        Error::InvalidTable(format!(
            "row group {row_group} out of range ({} groups) in {path}",
            footer.row_groups.len()
        ))
    })?;
    let meta = &group.columns[col];
    let bytes = store.get(path, meta.byte_offset, meta.byte_length)?;
    Ok(EncodedChunk {
        bytes,
        kind: footer.schema[col].kind,
        encoding: meta.encoding,
        row_count: group.row_count,
    })
}

/// Reads a whole column across all row groups.
pub fn read_column(store: &dyn ObjectStore, path: &str, footer: &Footer, column: &str) -> Result<Vec<Value>> {
    let mut out = Vec::with_capacity(footer.row_count() as usize);
    for g in 0..footer.row_groups.len() {
        out.extend(read_column_chunk(store, path, footer, g, column)?.decode_all()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::MemoryStore;
    use proptest::prelude::*;

    fn person_schema() -> Vec<ColumnSchema> {
        vec![
            ColumnSchema::new("id", ColumnKind::Int64),
            ColumnSchema::new("name", ColumnKind::String),
            ColumnSchema::new("born", ColumnKind::Date32),
            ColumnSchema::new("score", ColumnKind::Float64),
            ColumnSchema::new("active", ColumnKind::Bool),
        ]
    }

    fn person_rows(n: i64) -> Vec<Vec<Value>> {
        (0..n)
            .map(|i| {
                vec![
                    Value::Int64(i * 10 - 7),
                    Value::Str(format!("p{}", i % 3)),
                    Value::Date32(14000 + (i as i32 % 4)),
                    Value::Float64(i as f64 * 0.5),
                    Value::Bool(i % 2 == 0),
                ]
            })
            .collect()
    }

    const ENC: [Encoding; 5] = [
        Encoding::Plain,
        Encoding::Dict,
        Encoding::Rle,
        Encoding::Plain,
        Encoding::Rle,
    ];

    #[test]
    fn ceil_division_row_groups() {
        let store = MemoryStore::new();
        write_table(&store, "t/a.lgc", &person_schema(), person_rows(5), 2, &ENC).unwrap();
        let footer = read_footer(&store, "t/a.lgc").unwrap();
        assert_eq!(footer.group_rows(), vec![2, 2, 1]);
        assert_eq!(footer.schema, person_schema());
    }

    #[test]
    fn empty_table_has_footer() {
        let store = MemoryStore::new();
        write_table(&store, "t/e.lgc", &person_schema(), Vec::new(), 4, &ENC).unwrap();
        let footer = read_footer(&store, "t/e.lgc").unwrap();
        assert!(footer.row_groups.is_empty());
        assert_eq!(footer.schema.len(), 5);
    }

    #[test]
    fn footer_uses_exactly_two_reads() {
        let store = MemoryStore::new();
        write_table(&store, "t/a.lgc", &person_schema(), person_rows(9), 4, &ENC).unwrap();
        let before = store.stats().snapshot();
        let footer = read_footer(&store, "t/a.lgc").unwrap();
        let d = store.stats().snapshot().since(&before);
        assert_eq!(d.get_count, 2);
        assert_eq!(d.bytes_read, TAIL_LEN + footer.footer_len);
    }

    #[test]
    fn chunk_read_is_one_exact_range() {
        let store = MemoryStore::new();
        write_table(&store, "t/a.lgc", &person_schema(), person_rows(9), 4, &ENC).unwrap();
        let footer = read_footer(&store, "t/a.lgc").unwrap();
        let before = store.stats().snapshot();
        let chunk = read_column_chunk(&store, "t/a.lgc", &footer, 1, "name").unwrap();
        let d = store.stats().snapshot().since(&before);
        assert_eq!(d.get_count, 1);
        assert_eq!(d.bytes_read, footer.row_groups[1].columns[1].byte_length);
        assert_eq!(chunk.row_count, 4);
        let names: Vec<_> = (4..8).map(|i| Value::Str(format!("p{}", i % 3))).collect();
        assert_eq!(chunk.decode_all().unwrap(), names);
        let ids = read_column_chunk(&store, "t/a.lgc", &footer, 0, "id").unwrap();
        assert_eq!(ids.row_count, footer.row_groups[0].row_count);
    }

    #[test]
    fn corrupted_magic_and_truncation() {
        let store = MemoryStore::new();
        write_table(&store, "t/a.lgc", &person_schema(), person_rows(3), 4, &ENC).unwrap();
        store
            .tamper("t/a.lgc", |b| {
                let n = b.len();
                b[n - 1] = b'X';
            })
            .unwrap();
        assert!(matches!(read_footer(&store, "t/a.lgc"), Err(Error::BadMagic(_))));
        store.put("t/short.lgc", b"LGC").unwrap();
        assert!(matches!(read_footer(&store, "t/short.lgc"), Err(Error::Truncated(_))));
        store.put("t/liar.lgc", b"LGC1\xff\xff\x00\x00LGC1").unwrap();
        assert!(matches!(read_footer(&store, "t/liar.lgc"), Err(Error::Truncated(_))));
    }

    #[test]
    fn unknown_column_and_group() {
        let store = MemoryStore::new();
        write_table(&store, "t/a.lgc", &person_schema(), person_rows(3), 4, &ENC).unwrap();
        let footer = read_footer(&store, "t/a.lgc").unwrap();
        assert!(read_column_chunk(&store, "t/a.lgc", &footer, 0, "nope").is_err());
        assert!(read_column_chunk(&store, "t/a.lgc", &footer, 1, "id").is_err());
    }

    #[test]
    fn write_errors() {
        let store = MemoryStore::new();
        let schema = person_schema();
        assert!(write_table(&store, "x", &schema, person_rows(1), 0, &ENC).is_err());
        let mut bad = ENC;
        bad[1] = Encoding::Rle;
        assert!(write_table(&store, "x", &schema, person_rows(1), 2, &bad).is_err());
        let mut rows = person_rows(2);
        rows[1][0] = Value::Str("oops".into());
        assert!(write_table(&store, "x", &schema, rows, 2, &ENC).is_err());
        let mut rows = person_rows(2);
        rows[0].pop();
        assert!(write_table(&store, "x", &schema, rows, 2, &ENC).is_err());
    }

    #[test]
    fn layout_is_bit_exact() {
        let schema = vec![ColumnSchema::new("k", ColumnKind::Int64)];
        let bytes = encode_table(
            &schema,
            vec![vec![Value::Int64(7)], vec![Value::Int64(9)]],
            8,
            &[Encoding::Plain],
        )
        .unwrap();
        let mut expected = b"LGC1".to_vec();
        expected.extend_from_slice(&7i64.to_le_bytes());
        expected.extend_from_slice(&9i64.to_le_bytes());
        let mut footer = vec![1, 0, 1, 0, b'k', 0];
        footer.extend_from_slice(&1u32.to_le_bytes());
        footer.extend_from_slice(&2u64.to_le_bytes());
        footer.extend_from_slice(&4u64.to_le_bytes());
        footer.extend_from_slice(&16u64.to_le_bytes());
        footer.push(0);
        footer.push(1);
        footer.extend_from_slice(&7i64.to_le_bytes());
        footer.extend_from_slice(&9i64.to_le_bytes());
        expected.extend_from_slice(&footer);
        expected.extend_from_slice(&(footer.len() as u32).to_le_bytes());
        expected.extend_from_slice(b"LGC1");
        assert_eq!(bytes, expected);
    }

    proptest! {
        #[test]
        fn min_max_bounds_every_value(
            ints in prop::collection::vec(any::<i64>(), 1..60),
            group in 1usize..10,
        ) {
            let schema = vec![
                ColumnSchema::new("i", ColumnKind::Int64),
                ColumnSchema::new("f", ColumnKind::Float64),
                ColumnSchema::new("s", ColumnKind::String),
            ];
            let rows: Vec<Vec<Value>> = ints
                .iter()
                .map(|&i| vec![Value::Int64(i), Value::Float64(i as f64 / 3.0), Value::Str(format!("{i:x}"))])
                .collect();
            let store = MemoryStore::new();
            write_table(&store, "p", &schema, rows, group, &[Encoding::Dict, Encoding::Plain, Encoding::Plain]).unwrap();
            let footer = read_footer(&store, "p").unwrap();
            for g in 0..footer.row_groups.len() {
                for (c, col) in schema.iter().enumerate() {
                    let vals = read_column_chunk(&store, "p", &footer, g, &col.name).unwrap().decode_all().unwrap();
                    let (lo, hi) = footer.row_groups[g].columns[c].min_max.clone().unwrap();
                    prop_assert!(vals.iter().all(|v| &lo <= v && v <= &hi));
                }
            }
        }
    }
}
