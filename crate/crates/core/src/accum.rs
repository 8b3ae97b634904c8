//! Accumulators: per-vertex aggregation state with barrier semantics.
//!
//! Updates issued during a superstep are buffered as [`Update`]s and only
//! become visible when [`AccumulatorStore::apply`] runs at the barrier.
//! Every kind is a commutative-associative merge. Floating point sums are
//! not associative in IEEE arithmetic, so updates carry an origin key and
//! are folded in `(vertex, origin)` order; the combined value then does not
//! depend on how updates were partitioned across workers or in which order
//! they arrived.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{CoreError, Result};
use crate::value::Value;
use crate::vid::VertexId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccumKind {
    Sum,
    Min,
    Max,
    Count,
    Or,
    /// Bounded key -> count map.
    MapCount {
        bound: usize,
    },
}

impl AccumKind {
    pub const DEFAULT_MAP_BOUND: usize = 4096;

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "SUM" => AccumKind::Sum,
            "MIN" => AccumKind::Min,
            "MAX" => AccumKind::Max,
            "COUNT" => AccumKind::Count,
            "OR" => AccumKind::Or,
            "MAPCOUNT" => AccumKind::MapCount {
                bound: Self::DEFAULT_MAP_BOUND,
            },
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AccumKind::Sum => "SUM",
            AccumKind::Min => "MIN",
            AccumKind::Max => "MAX",
            AccumKind::Count => "COUNT",
            AccumKind::Or => "OR",
            AccumKind::MapCount { .. } => "MAPCOUNT",
        }
    }
}

/// Input to an accumulator update, and key type of `MAPCOUNT` maps.
#[derive(Clone, Debug)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Id(u64),
    Float(f64),
    Str(String),
}

impl Scalar {
    fn rank(&self) -> u8 {
        match self {
            Scalar::Bool(_) => 0,
            Scalar::Int(_) => 1,
            Scalar::Id(_) => 2,
            Scalar::Float(_) => 3,
            Scalar::Str(_) => 4,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Scalar::Int(v) => Some(v as f64),
            Scalar::Float(v) => Some(v),
            Scalar::Id(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Scalar::Bool(b) => Some(b),
            _ => None,
        }
    }
}

impl From<&Value> for Scalar {
    fn from(v: &Value) -> Self {
        match v {
            Value::Int64(x) => Scalar::Int(*x),
            Value::Date32(x) => Scalar::Int(*x as i64),
            Value::Float64(x) => Scalar::Float(*x),
            Value::Bool(x) => Scalar::Bool(*x),
            Value::Str(s) => Scalar::Str(s.clone()),
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scalar {}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Scalar::Bool(a), Scalar::Bool(b)) => a.cmp(b),
            (Scalar::Int(a), Scalar::Int(b)) => a.cmp(b),
            (Scalar::Id(a), Scalar::Id(b)) => a.cmp(b),
            (Scalar::Float(a), Scalar::Float(b)) => a.total_cmp(b),
            (Scalar::Str(a), Scalar::Str(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl core::fmt::Display for Scalar {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Scalar::Bool(v) => write!(f, "{v}"),
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Id(v) => write!(f, "{}", VertexId(*v)),
            Scalar::Float(v) => write!(f, "{v}"),
            Scalar::Str(v) => f.write_str(v),
        }
    }
}

/// Combined accumulator state for one vertex.
#[derive(Clone, Debug, PartialEq)]
pub enum AccumValue {
    IntSum(i64),
    FloatSum(f64),
    Count(u64),
    Or(bool),
    Min(Scalar),
    Max(Scalar),
    Map(BTreeMap<Scalar, u64>),
}

impl AccumValue {
    fn variant(&self) -> &'static str {
        match self {
            AccumValue::IntSum(_) => "integer sum",
            AccumValue::FloatSum(_) => "float sum",
            AccumValue::Count(_) => "count",
            AccumValue::Or(_) => "or",
            AccumValue::Min(_) => "min",
            AccumValue::Max(_) => "max",
            AccumValue::Map(_) => "map",
        }
    }

    /// The value a single update contributes on its own.
    pub fn lift(kind: AccumKind, input: Scalar) -> Result<AccumValue> {
        Ok(match kind {
            AccumKind::Sum => match input {
                Scalar::Int(v) => AccumValue::IntSum(v),
                Scalar::Float(v) => AccumValue::FloatSum(v),
                other => {
                    return Err(CoreError::AccumMismatch {
                        left: "sum",
                        right: scalar_name(&other),
                    })
                }
            },
            AccumKind::Count => AccumValue::Count(1),
            AccumKind::Or => match input {
                Scalar::Bool(b) => AccumValue::Or(b),
                other => {
                    return Err(CoreError::AccumMismatch {
                        left: "or",
                        right: scalar_name(&other),
                    })
                }
            },
            AccumKind::Min => AccumValue::Min(input),
            AccumKind::Max => AccumValue::Max(input),
            AccumKind::MapCount { .. } => {
                let mut m = BTreeMap::new();
                m.insert(input, 1);
                AccumValue::Map(m)
            }
        })
    }

    /// Merges `other` into `self`. `bound` caps the key count of maps.
    pub fn merge(&mut self, other: AccumValue, bound: usize) -> Result<()> {
        match (&mut *self, other) {
            (AccumValue::IntSum(a), AccumValue::IntSum(b)) => *a = a.wrapping_add(b),
            (AccumValue::FloatSum(a), AccumValue::FloatSum(b)) => *a += b,
            (AccumValue::IntSum(a), AccumValue::FloatSum(b)) => *self = AccumValue::FloatSum(*a as f64 + b),
            (AccumValue::FloatSum(a), AccumValue::IntSum(b)) => *a += b as f64,
            (AccumValue::Count(a), AccumValue::Count(b)) => *a += b,
            (AccumValue::Or(a), AccumValue::Or(b)) => *a |= b,
            (AccumValue::Min(a), AccumValue::Min(b)) => {
                if b < *a {
                    *a = b
                }
            }
            (AccumValue::Max(a), AccumValue::Max(b)) => {
                if b > *a {
                    *a = b
                }
            }
            (AccumValue::Map(a), AccumValue::Map(b)) => {
                for (k, c) in b {
                    *a.entry(k).or_insert(0) += c;
                }
                if a.len() > bound {
                    return Err(CoreError::MapCountOverflow { bound });
                }
            }
            (a, b) => {
                return Err(CoreError::AccumMismatch {
                    left: a.variant(),
                    right: b.variant(),
                })
            }
        }
        Ok(())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AccumValue::IntSum(v) => Some(*v as f64),
            AccumValue::FloatSum(v) => Some(*v),
            AccumValue::Count(v) => Some(*v as f64),
            AccumValue::Min(s) | AccumValue::Max(s) => s.as_f64(),
            _ => None,
        }
    }

    pub fn as_id(&self) -> Option<u64> {
        match self {
            AccumValue::Min(Scalar::Id(v)) | AccumValue::Max(Scalar::Id(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<Scalar, u64>> {
        match self {
            AccumValue::Map(m) => Some(m),
            _ => None,
        }
    }
}

impl core::fmt::Display for AccumValue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AccumValue::IntSum(v) => write!(f, "{v}"),
            AccumValue::FloatSum(v) => write!(f, "{v}"),
            AccumValue::Count(v) => write!(f, "{v}"),
            AccumValue::Or(v) => write!(f, "{v}"),
            AccumValue::Min(s) | AccumValue::Max(s) => write!(f, "{s}"),
            AccumValue::Map(m) => {
                f.write_str("{")?;
                for (i, (k, c)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{k}:{c}")?;
                }
                f.write_str("}")
            }
        }
    }
}

fn scalar_name(s: &Scalar) -> &'static str {
    match s {
        Scalar::Bool(_) => "bool",
        Scalar::Int(_) => "int",
        Scalar::Id(_) => "id",
        Scalar::Float(_) => "float",
        Scalar::Str(_) => "string",
    }
}

/// Position of the update's producer in the scan, used as the fold order.
/// For edge scans it is the edge's packed (file, entry) locator.
pub type Origin = (u64, u32);

#[derive(Clone, Debug, PartialEq)]
pub struct Update {
    pub accum: u16,
    pub vertex: VertexId,
    pub origin: Origin,
    pub value: Scalar,
}

/// Named accumulators with their barrier-combined values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccumulatorStore {
    names: Vec<String>,
    kinds: Vec<AccumKind>,
    values: Vec<BTreeMap<VertexId, AccumValue>>,
}

impl AccumulatorStore {
    /// Key for accumulators that hold a single graph-wide value.
    pub const GLOBAL: VertexId = VertexId(u64::MAX);

    pub fn new() -> Self {
        Self::default()
    }

    /// Declares an accumulator and returns its slot. Redeclaring a name with
    /// the same kind returns the existing slot.
    pub fn declare(&mut self, name: &str, kind: AccumKind) -> Result<u16> {
        if let Some(i) = self.slot(name) {
            if self.kinds[i as usize] != kind {
                return Err(CoreError::AccumMismatch {
                    left: self.kinds[i as usize].name(),
                    right: kind.name(),
                });
            }
            return Ok(i);
        }
        self.names.push(name.into());
        self.kinds.push(kind);
        self.values.push(BTreeMap::new());
        Ok((self.names.len() - 1) as u16)
    }

    pub fn slot(&self, name: &str) -> Option<u16> {
        self.names.iter().position(|n| n == name).map(|i| i as u16)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kind(&self, slot: u16) -> AccumKind {
        self.kinds[slot as usize]
    }

    pub fn get(&self, slot: u16, v: VertexId) -> Option<&AccumValue> {
        self.values[slot as usize].get(&v)
    }

    pub fn get_named(&self, name: &str, v: VertexId) -> Option<&AccumValue> {
        self.slot(name).and_then(|s| self.get(s, v))
    }

    pub fn entries(&self, slot: u16) -> &BTreeMap<VertexId, AccumValue> {
        &self.values[slot as usize]
    }

    pub fn entries_mut(&mut self, slot: u16) -> &mut BTreeMap<VertexId, AccumValue> {
        &mut self.values[slot as usize]
    }

    pub fn reset(&mut self, slot: u16) {
        self.values[slot as usize].clear();
    }

    /// Folds buffered updates into the combined values. Called at a barrier.
    pub fn apply<I>(&mut self, batches: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<Update>>,
    {
        let mut all: Vec<Update> = batches.into_iter().flatten().collect();
        all.sort_by(|a, b| (a.accum, a.vertex, a.origin).cmp(&(b.accum, b.vertex, b.origin)));
        for u in all {
            let kind = self.kinds[u.accum as usize];
            let bound = match kind {
                AccumKind::MapCount { bound } => bound,
                _ => usize::MAX,
            };
            let lifted = AccumValue::lift(kind, u.value)?;
            match self.values[u.accum as usize].entry(u.vertex) {
                alloc::collections::btree_map::Entry::Vacant(e) => {
                    if let AccumValue::Map(m) = &lifted {
                        if m.len() > bound {
                            return Err(CoreError::MapCountOverflow { bound });
                        }
                    }
                    e.insert(lifted);
                }
                alloc::collections::btree_map::Entry::Occupied(mut e) => {
                    e.get_mut().merge(lifted, bound)?;
                }
            }
        }
        Ok(())
    }
}
