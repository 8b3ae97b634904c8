//! Column chunk encodings.
//!
//! All layouts are little-endian:
//!
//! * `PLAIN`: fixed-width values back to back (`i64`, `f64`, `i32` days,
//!   one byte per bool); strings as `u32` byte length followed by UTF-8.
//! * `DICT`: `u32` entry count, the distinct values PLAIN-encoded in order
//!   of first appearance, then one `u32` index per row.
//! * `RLE`: repeated `(uvarint run length, PLAIN value)` pairs. Only valid
//!   for `INT64`, `DATE32` and `BOOL`.
//!
//! [`ChunkDecoder`] keeps its position as plain offsets rather than borrowing
//! the chunk, so it can be stored next to the bytes it decodes and resumed
//! later (the vertex cache unit extends its decoded prefix this way).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::value::{ColumnKind, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Encoding {
    Plain = 0,
    Dict = 1,
    Rle = 2,
}

impl Encoding {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Encoding::Plain),
            1 => Some(Encoding::Dict),
            2 => Some(Encoding::Rle),
            _ => None,
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Encoding::Plain => "PLAIN",
            Encoding::Dict => "DICT",
            Encoding::Rle => "RLE",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "PLAIN" => Some(Encoding::Plain),
            "DICT" => Some(Encoding::Dict),
            "RLE" => Some(Encoding::Rle),
            _ => None,
        }
    }

    pub fn applies_to(self, kind: ColumnKind) -> bool {
        match self {
            Encoding::Plain | Encoding::Dict => true,
            Encoding::Rle => matches!(kind, ColumnKind::Int64 | ColumnKind::Date32 | ColumnKind::Bool),
        }
    }
}

pub fn write_uvarint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub fn read_uvarint(bytes: &[u8], cursor: &mut usize) -> Result<u64> {
    let mut result = 0u64;
    let mut shift = 0u32;
    loop {
        let b = *bytes.get(*cursor).ok_or(CoreError::Truncated {
            offset: *cursor,
            needed: 1,
            available: 0,
        })?;
        *cursor += 1;
        if shift >= 64 {
            return Err(CoreError::Corrupt("varint overflow".into()));
        }
        result |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return Ok(result);
        }
        shift += 7;
    }
}

fn take<'a>(bytes: &'a [u8], cursor: &mut usize, n: usize) -> Result<&'a [u8]> {
    let available = bytes.len().saturating_sub(*cursor);
    if available < n {
        return Err(CoreError::Truncated {
            offset: *cursor,
            needed: n,
            available,
        });
    }
    let s = &bytes[*cursor..*cursor + n];
    *cursor += n;
    Ok(s)
}

fn write_plain(out: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Int64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Float64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Date32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Bool(x) => out.push(*x as u8),
        Value::Str(s) => {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
}

fn read_plain(bytes: &[u8], cursor: &mut usize, kind: ColumnKind) -> Result<Value> {
    Ok(match kind {
        ColumnKind::Int64 => Value::Int64(i64::from_le_bytes(take(bytes, cursor, 8)?.try_into().unwrap())),
        ColumnKind::Float64 => Value::Float64(f64::from_le_bytes(take(bytes, cursor, 8)?.try_into().unwrap())),
        ColumnKind::Date32 => Value::Date32(i32::from_le_bytes(take(bytes, cursor, 4)?.try_into().unwrap())),
        ColumnKind::Bool => match take(bytes, cursor, 1)?[0] {
            0 => Value::Bool(false),
            1 => Value::Bool(true),
            b => return Err(CoreError::Corrupt(alloc::format!("bool byte {b}"))),
        },
        ColumnKind::String => {
            let len = u32::from_le_bytes(take(bytes, cursor, 4)?.try_into().unwrap()) as usize;
            let raw = take(bytes, cursor, len)?;
            let s =
                core::str::from_utf8(raw).map_err(|_| CoreError::Corrupt("invalid utf-8 in string value".into()))?;
            Value::Str(String::from(s))
        }
    })
}

fn skip_plain(bytes: &[u8], cursor: &mut usize, kind: ColumnKind) -> Result<()> {
    match kind.fixed_width() {
        Some(w) => {
            take(bytes, cursor, w)?;
        }
        None => {
            let len = u32::from_le_bytes(take(bytes, cursor, 4)?.try_into().unwrap()) as usize;
            take(bytes, cursor, len)?;
        }
    }
    Ok(())
}

/// Encodes `values` (all of `kind`) with `encoding`.
pub fn encode(values: &[Value], kind: ColumnKind, encoding: Encoding) -> Result<Vec<u8>> {
    if !encoding.applies_to(kind) {
        return Err(CoreError::EncodingNotApplicable {
            encoding: encoding.name(),
            kind: kind.name(),
        });
    }
    for v in values {
        v.expect_kind(kind)?;
    }
    let mut out = Vec::new();
    match encoding {
        Encoding::Plain => {
            for v in values {
                write_plain(&mut out, v);
            }
        }
        Encoding::Dict => {
            let mut index: BTreeMap<&Value, u32> = BTreeMap::new();
            let mut dict: Vec<&Value> = Vec::new();
            let mut ids = Vec::with_capacity(values.len());
            for v in values {
                let next = dict.len() as u32;
                let id = *index.entry(v).or_insert_with(|| {
                    dict.push(v);
                    next
                });
                ids.push(id);
            }
            out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
            for v in dict {
                write_plain(&mut out, v);
            }
            for id in ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        Encoding::Rle => {
            let mut i = 0;
            while i < values.len() {
                let mut j = i + 1;
                while j < values.len() && values[j] == values[i] {
                    j += 1;
                }
                write_uvarint(&mut out, (j - i) as u64);
                write_plain(&mut out, &values[i]);
                i = j;
            }
        }
    }
    Ok(out)
}

/// Resumable sequential decoder over one encoded chunk.
#[derive(Clone, Debug)]
pub struct ChunkDecoder {
    kind: ColumnKind,
    encoding: Encoding,
    row_count: u64,
    position: u64,
    cursor: usize,
    run_left: u64,
    run_value: Option<Value>,
    dict: Vec<Value>,
}

impl ChunkDecoder {
    pub fn new(bytes: &[u8], kind: ColumnKind, encoding: Encoding, row_count: u64) -> Result<Self> {
        if !encoding.applies_to(kind) {
            return Err(CoreError::EncodingNotApplicable {
                encoding: encoding.name(),
                kind: kind.name(),
            });
        }
        let mut cursor = 0;
        let mut dict = Vec::new();
        if encoding == Encoding::Dict && row_count > 0 {
            let n = u32::from_le_bytes(take(bytes, &mut cursor, 4)?.try_into().unwrap());
            dict.reserve(n as usize);
            for _ in 0..n {
                dict.push(read_plain(bytes, &mut cursor, kind)?);
            }
        }
        Ok(ChunkDecoder {
            kind,
            encoding,
            row_count,
            position: 0,
            cursor,
            run_left: 0,
            run_value: None,
            dict,
        })
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn row_count(&self) -> u64 {
        self.row_count
    }

    /// Index of the next value to be produced.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Dictionary entries for `DICT` chunks, empty otherwise.
    pub fn dictionary(&self) -> &[Value] {
        &self.dict
    }

    fn check_remaining(&self, n: u64) -> Result<()> {
        if self.position + n > self.row_count {
            return Err(CoreError::OutOfRange {
                index: self.position + n - 1,
                len: self.row_count,
            });
        }
        Ok(())
    }

    fn refill_run(&mut self, bytes: &[u8]) -> Result<()> {
        while self.run_left == 0 {
            self.run_left = read_uvarint(bytes, &mut self.cursor)?;
            self.run_value = Some(read_plain(bytes, &mut self.cursor, self.kind)?);
        }
        Ok(())
    }

    /// Reads the dictionary index of the next row of a `DICT` chunk.
    pub fn next_dict_index(&mut self, bytes: &[u8]) -> Result<u32> {
        debug_assert_eq!(self.encoding, Encoding::Dict);
        self.check_remaining(1)?;
        let id = u32::from_le_bytes(take(bytes, &mut self.cursor, 4)?.try_into().unwrap());
        if id as usize >= self.dict.len() {
            return Err(CoreError::Corrupt(alloc::format!("dictionary index {id}")));
        }
        self.position += 1;
        Ok(id)
    }

    pub fn next_value(&mut self, bytes: &[u8]) -> Result<Value> {
        self.check_remaining(1)?;
        let v = match self.encoding {
            Encoding::Plain => read_plain(bytes, &mut self.cursor, self.kind)?,
            Encoding::Dict => {
                let id = self.next_dict_index(bytes)?;
                return Ok(self.dict[id as usize].clone());
            }
            Encoding::Rle => {
                self.refill_run(bytes)?;
                self.run_left -= 1;
                self.run_value.clone().unwrap()
            }
        };
        self.position += 1;
        Ok(v)
    }

    /// Decodes the next `n` values onto `out`.
    pub fn decode_into(&mut self, bytes: &[u8], n: u64, out: &mut Vec<Value>) -> Result<()> {
        self.check_remaining(n)?;
        out.reserve(n as usize);
        for _ in 0..n {
            out.push(self.next_value(bytes)?);
        }
        Ok(())
    }

    /// Advances past `n` values without materializing them.
    pub fn skip(&mut self, bytes: &[u8], n: u64) -> Result<()> {
        self.check_remaining(n)?;
        match self.encoding {
            Encoding::Plain => match self.kind.fixed_width() {
                Some(w) => {
                    take(bytes, &mut self.cursor, w * n as usize)?;
                }
                None => {
                    for _ in 0..n {
                        skip_plain(bytes, &mut self.cursor, self.kind)?;
                    }
                }
            },
            Encoding::Dict => {
                take(bytes, &mut self.cursor, 4 * n as usize)?;
            }
            Encoding::Rle => {
                let mut left = n;
                while left > 0 {
                    self.refill_run(bytes)?;
                    let step = left.min(self.run_left);
                    self.run_left -= step;
                    left -= step;
                }
            }
        }
        self.position += n;
        Ok(())
    }
}

/// Decodes a whole chunk.
pub fn decode_all(bytes: &[u8], kind: ColumnKind, encoding: Encoding, row_count: u64) -> Result<Vec<Value>> {
    let mut dec = ChunkDecoder::new(bytes, kind, encoding, row_count)?;
    let mut out = Vec::with_capacity(row_count as usize);
    dec.decode_into(bytes, row_count, &mut out)?;
    Ok(out)
}
