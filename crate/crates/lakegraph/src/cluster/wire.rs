//! Frame codec. A frame on the wire is `u32 payload length | u8 type |
//! payload`, little endian throughout.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use lakegraph_core::accum::Update;
use lakegraph_core::{AccumValue, ActiveVertexSet, CmpOp, ColumnKind, FileBitmap, Predicate, Scalar, Value, VertexId};

use crate::engine::{ScanStats, Side};
use crate::error::{Error, Result};

pub const FETCH_REQ: u8 = 1;
pub const FETCH_REP: u8 = 2;
pub const ACCUM_PUSH: u8 = 3;
pub const BARRIER: u8 = 4;
pub const ABORT: u8 = 5;

/// Frames larger than this are rejected on read.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let mut head = [0u8; 5];
        head[..4].copy_from_slice(&(self.payload.len() as u32).to_le_bytes());
        head[4] = self.kind;
        w.write_all(&head)?;
        w.write_all(&self.payload)
    }

    /// `Ok(None)` on a clean end of stream before the header.
    pub fn read_from(r: &mut impl Read) -> Result<Option<Frame>> {
        let mut head = [0u8; 5];
        let mut got = 0;
        while got < head.len() {
            let n = r.read(&mut head[got..])?;
            if n == 0 {
                if got == 0 {
                    return Ok(None);
                }
                return Err(Error::Transport("stream ended inside a frame header".into()));
            }
            got += n;
        }
        let len = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
        if len > MAX_FRAME {
            return Err(Error::Transport(format!("frame of {len} bytes exceeds limit")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Some(Frame { kind: head[4], payload }))
    }
}

/// One group of requested vertices. Rows are returned only for ids that
/// satisfy `predicate` on the host.
#[derive(Clone, Debug, PartialEq)]
pub struct FetchSection {
    pub side: Side,
    pub ids: Vec<VertexId>,
    pub columns: Vec<String>,
    pub predicate: Vec<Predicate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FetchBatch {
    pub hop: u32,
    pub sections: Vec<FetchSection>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplySection {
    pub side: Side,
    pub rows: Vec<(VertexId, Vec<Value>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FetchReply {
    pub hop: u32,
    pub sections: Vec<ReplySection>,
}

/// Counters a worker reports with its final accumulator values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub scan: ScanStats,
    pub fetch_batches: u64,
    pub fetch_ids: u64,
    pub fetch_rows: u64,
    pub max_fetch_batches_per_hop: u64,
    pub push_messages: u64,
    pub pushed_updates: u64,
}

impl WorkerStats {
    pub fn add(&mut self, o: &WorkerStats) {
        self.scan.add(&o.scan);
        self.fetch_batches += o.fetch_batches;
        self.fetch_ids += o.fetch_ids;
        self.fetch_rows += o.fetch_rows;
        self.max_fetch_batches_per_hop = self.max_fetch_batches_per_hop.max(o.max_fetch_batches_per_hop);
        self.push_messages += o.push_messages;
        self.pushed_updates += o.pushed_updates;
    }
}

/// Coordinator/worker control messages, carried in BARRIER frames.
#[derive(Clone, Debug, PartialEq)]
pub enum Control {
    StartQuery {
        plan: String,
    },
    SourceDone {
        frontier: ActiveVertexSet,
    },
    StartHop {
        hop: u32,
        frontier: ActiveVertexSet,
    },
    /// `pushes[w]` is the number of ACCUM_PUSH frames sent to worker `w`.
    HopDone {
        hop: u32,
        frontier: ActiveVertexSet,
        pushes: Vec<u32>,
    },
    Commit {
        hop: u32,
        expected_pushes: u32,
    },
    Finish,
    Final {
        accums: Vec<(u16, VertexId, AccumValue)>,
        stats: WorkerStats,
    },
    Shutdown,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    FetchReq(FetchBatch),
    FetchRep(FetchReply),
    AccumPush { hop: u32, updates: Vec<Update> },
    Barrier(Control),
    Abort { worker: u32, detail: String },
}

impl Message {
    pub fn encode(&self) -> Frame {
        let mut w = Writer::default();
        let kind = match self {
            Message::FetchReq(b) => {
                w.u32(b.hop);
                w.u32(b.sections.len() as u32);
                for s in &b.sections {
                    w.side(s.side);
                    w.u32(s.ids.len() as u32);
                    for v in &s.ids {
                        w.u64(v.packed());
                    }
                    w.u32(s.columns.len() as u32);
                    for c in &s.columns {
                        w.str(c);
                    }
                    w.u32(s.predicate.len() as u32);
                    for p in &s.predicate {
                        w.str(&p.column);
                        w.u8(p.op as u8);
                        w.value(&p.literal);
                    }
                }
                FETCH_REQ
            }
            Message::FetchRep(r) => {
                w.u32(r.hop);
                w.u32(r.sections.len() as u32);
                for s in &r.sections {
                    w.side(s.side);
                    w.u32(s.rows.len() as u32);
                    for (v, vals) in &s.rows {
                        w.u64(v.packed());
                        w.u32(vals.len() as u32);
                        for x in vals {
                            w.value(x);
                        }
                    }
                }
                FETCH_REP
            }
            Message::AccumPush { hop, updates } => {
                w.u32(*hop);
                w.u32(updates.len() as u32);
                for u in updates {
                    w.u16(u.accum);
                    w.u64(u.vertex.packed());
                    w.u64(u.origin.0);
                    w.u32(u.origin.1);
                    w.scalar(&u.value);
                }
                ACCUM_PUSH
            }
            Message::Barrier(c) => {
                match c {
                    Control::StartQuery { plan } => {
                        w.u8(0);
                        w.str(plan);
                    }
                    Control::SourceDone { frontier } => {
                        w.u8(1);
                        w.frontier(frontier);
                    }
                    Control::StartHop { hop, frontier } => {
                        w.u8(2);
                        w.u32(*hop);
                        w.frontier(frontier);
                    }
                    Control::HopDone { hop, frontier, pushes } => {
                        w.u8(3);
                        w.u32(*hop);
                        w.frontier(frontier);
                        w.u32(pushes.len() as u32);
                        for p in pushes {
                            w.u32(*p);
                        }
                    }
                    Control::Commit { hop, expected_pushes } => {
                        w.u8(4);
                        w.u32(*hop);
                        w.u32(*expected_pushes);
                    }
                    Control::Finish => w.u8(5),
                    Control::Final { accums, stats } => {
                        w.u8(6);
                        w.u32(accums.len() as u32);
                        for (slot, v, a) in accums {
                            w.u16(*slot);
                            w.u64(v.packed());
                            w.accum(a);
                        }
                        w.stats(stats);
                    }
                    Control::Shutdown => w.u8(7),
                }
                BARRIER
            }
            Message::Abort { worker, detail } => {
                w.u32(*worker);
                w.str(detail);
                ABORT
            }
        };
        Frame { kind, payload: w.0 }
    }

    pub fn decode(frame: &Frame) -> Result<Message> {
        let mut r = Reader {
            buf: &frame.payload,
            pos: 0,
        };
        let msg = match frame.kind {
            FETCH_REQ => {
                let hop = r.u32()?;
                let n = r.u32()?;
                let mut sections = Vec::new();
                for _ in 0..n {
                    let side = r.side()?;
                    let ids = (0..r.u32()?).map(|_| r.u64().map(VertexId)).collect::<Result<_>>()?;
                    let columns = (0..r.u32()?).map(|_| r.str()).collect::<Result<_>>()?;
                    let mut predicate = Vec::new();
                    for _ in 0..r.u32()? {
                        let col = r.str()?;
                        let op = CmpOp::from_tag(r.u8()?).ok_or_else(|| bad("comparison operator"))?;
                        predicate.push(Predicate::new(col, op, r.value()?));
                    }
                    sections.push(FetchSection {
                        side,
                        ids,
                        columns,
                        predicate,
                    });
                }
                Message::FetchReq(FetchBatch { hop, sections })
            }
            FETCH_REP => {
                let hop = r.u32()?;
                let n = r.u32()?;
                let mut sections = Vec::new();
                for _ in 0..n {
                    let side = r.side()?;
                    let mut rows = Vec::new();
                    for _ in 0..r.u32()? {
                        let v = VertexId(r.u64()?);
                        let vals = (0..r.u32()?).map(|_| r.value()).collect::<Result<_>>()?;
                        rows.push((v, vals));
                    }
                    sections.push(ReplySection { side, rows });
                }
                Message::FetchRep(FetchReply { hop, sections })
            }
            ACCUM_PUSH => {
                let hop = r.u32()?;
                let mut updates = Vec::new();
                for _ in 0..r.u32()? {
                    updates.push(Update {
                        accum: r.u16()?,
                        vertex: VertexId(r.u64()?),
                        origin: (r.u64()?, r.u32()?),
                        value: r.scalar()?,
                    });
                }
                Message::AccumPush { hop, updates }
            }
            BARRIER => Message::Barrier(match r.u8()? {
                0 => Control::StartQuery { plan: r.str()? },
                1 => Control::SourceDone {
                    frontier: r.frontier()?,
                },
                2 => Control::StartHop {
                    hop: r.u32()?,
                    frontier: r.frontier()?,
                },
                3 => Control::HopDone {
                    hop: r.u32()?,
                    frontier: r.frontier()?,
                    pushes: (0..r.u32()?).map(|_| r.u32()).collect::<Result<_>>()?,
                },
                4 => Control::Commit {
                    hop: r.u32()?,
                    expected_pushes: r.u32()?,
                },
                5 => Control::Finish,
                6 => {
                    let mut accums = Vec::new();
                    for _ in 0..r.u32()? {
                        accums.push((r.u16()?, VertexId(r.u64()?), r.accum()?));
                    }
                    Control::Final {
                        accums,
                        stats: r.stats()?,
                    }
                }
                7 => Control::Shutdown,
                t => return Err(bad(&format!("barrier subtype {t}"))),
            }),
            ABORT => Message::Abort {
                worker: r.u32()?,
                detail: r.str()?,
            },
            t => return Err(bad(&format!("message type {t}"))),
        };
        if r.pos != r.buf.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(msg)
    }
}

fn bad(what: &str) -> Error {
    Error::malformed("frame", what)
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u16(&mut self, x: u16) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn side(&mut self, s: Side) {
        self.u8(match s {
            Side::Source => 0,
            Side::Target => 1,
        });
    }
    fn value(&mut self, v: &Value) {
        self.u8(v.kind().tag());
        match v {
            Value::Int64(x) => self.u64(*x as u64),
            Value::Float64(x) => self.u64(x.to_bits()),
            Value::Str(s) => self.str(s),
            Value::Date32(x) => self.u32(*x as u32),
            Value::Bool(b) => self.u8(*b as u8),
        }
    }
    fn scalar(&mut self, s: &Scalar) {
        match s {
            Scalar::Bool(b) => {
                self.u8(0);
                self.u8(*b as u8);
            }
            Scalar::Int(x) => {
                self.u8(1);
                self.u64(*x as u64);
            }
            Scalar::Id(x) => {
                self.u8(2);
                self.u64(*x);
            }
            Scalar::Float(x) => {
                self.u8(3);
                self.u64(x.to_bits());
            }
            Scalar::Str(s) => {
                self.u8(4);
                self.str(s);
            }
        }
    }
    fn accum(&mut self, a: &AccumValue) {
        match a {
            AccumValue::IntSum(x) => {
                self.u8(0);
                self.u64(*x as u64);
            }
            AccumValue::FloatSum(x) => {
                self.u8(1);
                self.u64(x.to_bits());
            }
            AccumValue::Count(x) => {
                self.u8(2);
                self.u64(*x);
            }
            AccumValue::Or(b) => {
                self.u8(3);
                self.u8(*b as u8);
            }
            AccumValue::Min(s) => {
                self.u8(4);
                self.scalar(s);
            }
            AccumValue::Max(s) => {
                self.u8(5);
                self.scalar(s);
            }
            AccumValue::Map(m) => {
                self.u8(6);
                self.u32(m.len() as u32);
                for (k, c) in m {
                    self.scalar(k);
                    self.u64(*c);
                }
            }
        }
    }
    fn frontier(&mut self, f: &ActiveVertexSet) {
        let files: Vec<(u32, &FileBitmap)> = f.files().collect();
        self.u32(files.len() as u32);
        for (id, bits) in files {
            self.u32(id);
            self.u32(bits.words().len() as u32);
            for w in bits.words() {
                self.u64(*w);
            }
        }
    }
    fn stats(&mut self, s: &WorkerStats) {
        let c = &s.scan;
        for x in [
            c.lists_total,
            c.lists_scanned,
            c.portions_total,
            c.portions_scanned,
            c.edges_examined,
            c.edges_matched,
            c.udf_calls,
            c.prefetched,
            s.fetch_batches,
            s.fetch_ids,
            s.fetch_rows,
            s.max_fetch_batches_per_hop,
            s.push_messages,
            s.pushed_updates,
        ] {
            self.u64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(bad("truncated payload"));
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
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("string is not utf-8"))
    }
    fn side(&mut self) -> Result<Side> {
        match self.u8()? {
            0 => Ok(Side::Source),
            1 => Ok(Side::Target),
            t => Err(bad(&format!("side {t}"))),
        }
    }
    fn value(&mut self) -> Result<Value> {
        let kind = ColumnKind::from_tag(self.u8()?).ok_or_else(|| bad("column kind"))?;
        Ok(match kind {
            ColumnKind::Int64 => Value::Int64(self.u64()? as i64),
            ColumnKind::Float64 => Value::Float64(f64::from_bits(self.u64()?)),
            ColumnKind::String => Value::Str(self.str()?),
            ColumnKind::Date32 => Value::Date32(self.u32()? as i32),
            ColumnKind::Bool => Value::Bool(self.u8()? != 0),
        })
    }
    fn scalar(&mut self) -> Result<Scalar> {
        Ok(match self.u8()? {
            0 => Scalar::Bool(self.u8()? != 0),
            1 => Scalar::Int(self.u64()? as i64),
            2 => Scalar::Id(self.u64()?),
            3 => Scalar::Float(f64::from_bits(self.u64()?)),
            4 => Scalar::Str(self.str()?),
            t => return Err(bad(&format!("scalar tag {t}"))),
        })
    }
    fn accum(&mut self) -> Result<AccumValue> {
        Ok(match self.u8()? {
            0 => AccumValue::IntSum(self.u64()? as i64),
            1 => AccumValue::FloatSum(f64::from_bits(self.u64()?)),
            2 => AccumValue::Count(self.u64()?),
            3 => AccumValue::Or(self.u8()? != 0),
            4 => AccumValue::Min(self.scalar()?),
            5 => AccumValue::Max(self.scalar()?),
            6 => {
                let mut m = BTreeMap::new();
                for _ in 0..self.u32()? {
                    let k = self.scalar()?;
                    m.insert(k, self.u64()?);
                }
                AccumValue::Map(m)
            }
            t => return Err(bad(&format!("accumulator tag {t}"))),
        })
    }
    fn frontier(&mut self) -> Result<ActiveVertexSet> {
        let mut set = ActiveVertexSet::new();
        for _ in 0..self.u32()? {
            let id = self.u32()?;
            let words = (0..self.u32()?).map(|_| self.u64()).collect::<Result<Vec<_>>>()?;
            set.insert_bitmap(id, FileBitmap::from_words(words));
        }
        Ok(set)
    }
    fn stats(&mut self) -> Result<WorkerStats> {
        let mut x = [0u64; 14];
        for v in x.iter_mut() {
            *v = self.u64()?;
        }
        Ok(WorkerStats {
            scan: ScanStats {
                lists_total: x[0],
                lists_scanned: x[1],
                portions_total: x[2],
                portions_scanned: x[3],
                edges_examined: x[4],
                edges_matched: x[5],
                udf_calls: x[6],
                prefetched: x[7],
            },
            fetch_batches: x[8],
            fetch_ids: x[9],
            fetch_rows: x[10],
            max_fetch_batches_per_hop: x[11],
            push_messages: x[12],
            pushed_updates: x[13],
        })
    }
}
