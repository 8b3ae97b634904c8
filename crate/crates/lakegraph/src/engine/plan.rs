//! Declarative multi-hop query plans.
//!
//! A plan filters a source vertex type, then runs one edge scan per hop.
//! Each hop filters on edge and neighbor attributes, emits accumulator
//! updates for kept edges and hands one endpoint side to the next hop.

use std::collections::BTreeMap;

use lakegraph_core::accum::Update;
use lakegraph_core::predicate::eval_all;
use lakegraph_core::value::parse_date;
use lakegraph_core::{
    AccumKind, AccumulatorStore, ActiveVertexSet, CmpOp, ColumnKind, Predicate, Scalar, Value, VertexId,
};
use serde::{Deserialize, Serialize};

use super::{Direction, EdgeScanSpec, EdgeView, Emit, Graph, RowView, ScanStats, Side};
use crate::cache::VertexReader;
use crate::catalog::Catalog;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub col: String,
    pub op: String,
    pub value: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(rename = "type")]
    pub vertex_type: String,
    #[serde(rename = "where", default)]
    pub filter: Vec<Condition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccumSpec {
    /// `neighbor` or `scanside`.
    pub target: String,
    pub name: String,
    pub kind: String,
    /// A numeric literal, an edge column (`col` or `edge.col`), or a
    /// vertex column (`neighbor.col`, `scanside.col`).
    pub expr: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopSpec {
    pub edge: String,
    pub dir: String,
    #[serde(rename = "whereEdge", default)]
    pub where_edge: Vec<Condition>,
    #[serde(rename = "whereNeighbor", default)]
    pub where_neighbor: Vec<Condition>,
    #[serde(default)]
    pub accum: Vec<AccumSpec>,
    pub frontier: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub accums: Vec<String>,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub source: SourceSpec,
    #[serde(default)]
    pub hops: Vec<HopSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl QueryPlan {
    pub fn from_json(text: &str) -> Result<QueryPlan> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AccumInput {
    Const(Scalar),
    Edge(usize),
    Src(usize),
    Tgt(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledAccum {
    pub slot: u16,
    pub target: Side,
    pub input: AccumInput,
}

#[derive(Clone, Debug)]
pub struct CompiledHop {
    pub spec: EdgeScanSpec,
    pub where_edge: Vec<Predicate>,
    pub where_neighbor: Vec<Predicate>,
    pub neighbor: Side,
    pub accums: Vec<CompiledAccum>,
    /// Vertex type of the hop's output frontier.
    pub output_type: String,
}

impl CompiledHop {
    /// The hop's per-edge function.
    pub fn eval(&self, e: &EdgeView, emit: &mut Emit) -> bool {
        let nb = match self.neighbor {
            Side::Source => &e.src,
            Side::Target => &e.tgt,
        };
        if !eval_all(&self.where_edge, |c| e.edge.get(c)) || !eval_all(&self.where_neighbor, |c| nb.get(c)) {
            return false;
        }
        for a in &self.accums {
            let v = match &a.input {
                AccumInput::Const(s) => Some(s.clone()),
                AccumInput::Edge(i) => e.edge.at(*i).map(Scalar::from),
                AccumInput::Src(i) => e.src.at(*i).map(Scalar::from),
                AccumInput::Tgt(i) => e.tgt.at(*i).map(Scalar::from),
            };
            if let Some(v) = v {
                let target = match a.target {
                    Side::Source => e.src.id,
                    Side::Target => e.tgt.id,
                };
                emit.push(a.slot, target, v);
            }
        }
        true
    }
}

#[derive(Clone, Debug)]
pub struct CompiledPlan {
    pub source_type: String,
    pub source_filter: Vec<Predicate>,
    pub hops: Vec<CompiledHop>,
    pub output_type: String,
    pub output_columns: Vec<String>,
    pub output_accums: Vec<(String, u16)>,
    pub limit: Option<usize>,
    /// Declared accumulators, all empty.
    pub accums: AccumulatorStore,
}

impl CompiledPlan {
    pub fn source_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.source_filter.iter().map(|p| p.column.clone()).collect();
        cols.sort();
        cols.dedup();
        cols
    }

    pub fn source_eval(&self, row: &RowView) -> bool {
        eval_all(&self.source_filter, |c| row.get(c))
    }
}

/// Column kinds of a table, from its first data file. `None` when the
/// table has no files yet.
fn table_columns(catalog: &Catalog, table: &str) -> Result<Option<BTreeMap<String, ColumnKind>>> {
    let Some(&f) = catalog.registry.files_of(table).first() else {
        return Ok(None);
    };
    let footer = catalog.footer(f)?;
    Ok(Some(footer.schema.iter().map(|c| (c.name.clone(), c.kind)).collect()))
}

fn literal(kind: ColumnKind, v: &serde_json::Value) -> Option<Value> {
    use serde_json::Value as J;
    Some(match (kind, v) {
        (ColumnKind::Int64, J::Number(n)) => Value::Int64(n.as_i64()?),
        (ColumnKind::Float64, J::Number(n)) => Value::Float64(n.as_f64()?),
        (ColumnKind::Date32, J::Number(n)) => Value::Date32(i32::try_from(n.as_i64()?).ok()?),
        (ColumnKind::Date32, J::String(s)) => {
            let inner = s.strip_prefix("Date('").and_then(|r| r.strip_suffix("')")).unwrap_or(s);
            Value::Date32(parse_date(inner)?)
        }
        (ColumnKind::Bool, J::Bool(b)) => Value::Bool(*b),
        (ColumnKind::String, J::String(s)) => Value::Str(s.clone()),
        _ => return None,
    })
}

struct Checker<'a> {
    errors: Vec<String>,
    catalog: &'a Catalog,
}

impl Checker<'_> {
    fn conditions(&mut self, at: &str, table: &str, conds: &[Condition]) -> Vec<Predicate> {
        let cols = match table_columns(self.catalog, table) {
            Ok(c) => c,
            Err(e) => {
                self.errors.push(format!("{at}: {e}"));
                return Vec::new();
            }
        };
        let mut out = Vec::new();
        for (i, c) in conds.iter().enumerate() {
            let loc = format!("{at}[{i}]");
            let Some(op) = CmpOp::parse(&c.op) else {
                self.errors.push(format!("{loc}: unknown operator {:?}", c.op));
                continue;
            };
            let kind = match &cols {
                Some(cols) => match cols.get(&c.col) {
                    Some(k) => *k,
                    None => {
                        self.errors
                            .push(format!("{loc}: unknown column {:?} in table {table}", c.col));
                        continue;
                    }
                },
                None => match &c.value {
                    serde_json::Value::Bool(_) => ColumnKind::Bool,
                    serde_json::Value::String(_) => ColumnKind::String,
                    serde_json::Value::Number(n) if n.is_i64() => ColumnKind::Int64,
                    _ => ColumnKind::Float64,
                },
            };
            match literal(kind, &c.value) {
                Some(v) => out.push(Predicate::new(c.col.clone(), op, v)),
                None => self.errors.push(format!(
                    "{loc}: literal {} does not match column {:?} of kind {kind}",
                    c.value, c.col
                )),
            }
        }
        out
    }

    fn column(&mut self, at: &str, table: &str, col: &str) -> Option<ColumnKind> {
        match table_columns(self.catalog, table) {
            Ok(Some(cols)) => match cols.get(col) {
                Some(k) => Some(*k),
                None => {
                    self.errors
                        .push(format!("{at}: unknown column {col:?} in table {table}"));
                    None
                }
            },
            Ok(None) => Some(ColumnKind::Int64),
            Err(e) => {
                self.errors.push(format!("{at}: {e}"));
                None
            }
        }
    }
}

fn push_unique(cols: &mut Vec<String>, c: &str) -> usize {
    match cols.iter().position(|x| x == c) {
        Some(i) => i,
        None => {
            cols.push(c.to_string());
            cols.len() - 1
        }
    }
}

/// Validates a plan against the catalog. All problems are reported
/// together, each prefixed with its location in the plan.
pub fn compile(catalog: &Catalog, plan: &QueryPlan) -> Result<CompiledPlan> {
    let mut ck = Checker {
        errors: Vec::new(),
        catalog,
    };
    let schema = &catalog.schema;
    let mut accums = AccumulatorStore::new();
    let source_vt = schema.vertex(&plan.source.vertex_type);
    if source_vt.is_none() {
        ck.errors.push(format!(
            "source.type: unknown vertex type {:?}",
            plan.source.vertex_type
        ));
    }
    let source_filter = match source_vt {
        Some(vt) => ck.conditions("source.where", &vt.table, &plan.source.filter),
        None => Vec::new(),
    };
    let mut current = source_vt.map(|v| v.name.clone());
    let mut hops = Vec::new();
    for (h, hop) in plan.hops.iter().enumerate() {
        let at = format!("hops[{h}]");
        let Some(et) = schema.edge(&hop.edge) else {
            ck.errors.push(format!("{at}.edge: unknown edge type {:?}", hop.edge));
            current = None;
            continue;
        };
        let dir = match hop.dir.as_str() {
            "out" => Direction::Out,
            "in" => Direction::In,
            d => {
                ck.errors
                    .push(format!("{at}.dir: expected \"out\" or \"in\", got {d:?}"));
                current = None;
                continue;
            }
        };
        let frontier = match hop.frontier.as_str() {
            "source" => Side::Source,
            "target" => Side::Target,
            f => {
                ck.errors
                    .push(format!("{at}.frontier: expected \"source\" or \"target\", got {f:?}"));
                current = None;
                continue;
            }
        };
        let (scan_type, nb_type, neighbor) = match dir {
            Direction::Out => (&et.src_type, &et.tgt_type, Side::Target),
            Direction::In => (&et.tgt_type, &et.src_type, Side::Source),
        };
        if let Some(cur) = &current {
            if cur != scan_type {
                ck.errors.push(format!(
                    "{at}: edge {} scanned {} starts at {scan_type} but the frontier holds {cur}",
                    et.name, hop.dir
                ));
            }
        }
        let table_of = |t: &str| schema.vertex(t).map(|v| v.table.clone()).unwrap_or_default();
        let nb_table = table_of(nb_type);
        let scan_table = table_of(scan_type);
        let where_edge = ck.conditions(&format!("{at}.whereEdge"), &et.table, &hop.where_edge);
        let where_neighbor = ck.conditions(&format!("{at}.whereNeighbor"), &nb_table, &hop.where_neighbor);
        let mut spec = EdgeScanSpec {
            edge_type: et.name.clone(),
            dir,
            src_columns: Vec::new(),
            edge_columns: Vec::new(),
            tgt_columns: Vec::new(),
            frontier,
        };
        for p in &where_edge {
            push_unique(&mut spec.edge_columns, &p.column);
        }
        for p in &where_neighbor {
            match neighbor {
                Side::Source => push_unique(&mut spec.src_columns, &p.column),
                Side::Target => push_unique(&mut spec.tgt_columns, &p.column),
            };
        }
        let mut compiled_accums = Vec::new();
        for (i, a) in hop.accum.iter().enumerate() {
            let loc = format!("{at}.accum[{i}]");
            let target = match a.target.as_str() {
                "neighbor" => neighbor,
                "scanside" => match neighbor {
                    Side::Source => Side::Target,
                    Side::Target => Side::Source,
                },
                t => {
                    ck.errors.push(format!(
                        "{loc}.target: expected \"neighbor\" or \"scanside\", got {t:?}"
                    ));
                    continue;
                }
            };
            let Some(kind) = AccumKind::parse(&a.kind) else {
                ck.errors
                    .push(format!("{loc}.kind: unknown accumulator kind {:?}", a.kind));
                continue;
            };
            let expr = a.expr.trim();
            let (input, input_kind) = if let Ok(i) = expr.parse::<i64>() {
                (AccumInput::Const(Scalar::Int(i)), Some(ColumnKind::Int64))
            } else if let Ok(f) = expr.parse::<f64>() {
                (AccumInput::Const(Scalar::Float(f)), Some(ColumnKind::Float64))
            } else if expr == "true" || expr == "false" {
                (AccumInput::Const(Scalar::Bool(expr == "true")), Some(ColumnKind::Bool))
            } else {
                let (scope, col) = expr.split_once('.').unwrap_or(("edge", expr));
                let vertex_side = match scope {
                    "edge" => None,
                    "neighbor" => Some(neighbor),
                    "scanside" => Some(match neighbor {
                        Side::Source => Side::Target,
                        Side::Target => Side::Source,
                    }),
                    s => {
                        ck.errors.push(format!("{loc}.expr: unknown scope {s:?}"));
                        continue;
                    }
                };
                match vertex_side {
                    None => {
                        let k = ck.column(&format!("{loc}.expr"), &et.table, col);
                        (AccumInput::Edge(push_unique(&mut spec.edge_columns, col)), k)
                    }
                    Some(side) => {
                        let table = if side == neighbor { &nb_table } else { &scan_table };
                        let k = ck.column(&format!("{loc}.expr"), table, col);
                        match side {
                            Side::Source => (AccumInput::Src(push_unique(&mut spec.src_columns, col)), k),
                            Side::Target => (AccumInput::Tgt(push_unique(&mut spec.tgt_columns, col)), k),
                        }
                    }
                }
            };
            let Some(input_kind) = input_kind else { continue };
            let ok = match kind {
                AccumKind::Sum => matches!(input_kind, ColumnKind::Int64 | ColumnKind::Float64),
                AccumKind::Or => input_kind == ColumnKind::Bool,
                _ => true,
            };
            if !ok {
                ck.errors
                    .push(format!("{loc}: {} cannot accumulate {input_kind} values", kind.name()));
                continue;
            }
            match accums.declare(&a.name, kind) {
                Ok(slot) => compiled_accums.push(CompiledAccum { slot, target, input }),
                Err(e) => ck.errors.push(format!("{loc}.name: {e}")),
            }
        }
        let output_type = match frontier {
            Side::Source => et.src_type.clone(),
            Side::Target => et.tgt_type.clone(),
        };
        current = Some(output_type.clone());
        hops.push(CompiledHop {
            spec,
            where_edge,
            where_neighbor,
            neighbor,
            accums: compiled_accums,
            output_type,
        });
    }
    let mut output_accums = Vec::new();
    if let Some(t) = current.as_deref().and_then(|t| schema.vertex(t)) {
        for (i, c) in plan.output.columns.iter().enumerate() {
            ck.column(&format!("output.columns[{i}]"), &t.table, c);
        }
    }
    for (i, a) in plan.output.accums.iter().enumerate() {
        match accums.slot(a) {
            Some(s) => output_accums.push((a.clone(), s)),
            None => ck
                .errors
                .push(format!("output.accums[{i}]: accumulator {a:?} is never declared")),
        }
    }
    if !ck.errors.is_empty() {
        return Err(Error::Plan(ck.errors));
    }
    Ok(CompiledPlan {
        source_type: plan.source.vertex_type.clone(),
        source_filter,
        hops,
        output_type: current.unwrap_or_default(),
        output_columns: plan.output.columns.clone(),
        output_accums,
        limit: plan.output.limit,
        accums,
    })
}

/// Rows of a plan result, sorted by packed vertex id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResultTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

pub struct PlanRun {
    pub table: ResultTable,
    pub frontier: ActiveVertexSet,
    pub accums: AccumulatorStore,
    /// Source step first, then one entry per hop.
    pub stats: Vec<ScanStats>,
}

impl Graph {
    pub fn run_plan(&self, plan: &QueryPlan) -> Result<PlanRun> {
        let compiled = compile(&self.catalog, plan)?;
        self.run_compiled(&compiled)
    }

    pub fn run_compiled(&self, plan: &CompiledPlan) -> Result<PlanRun> {
        let mut accums = plan.accums.clone();
        let mut stats = Vec::new();
        let all = self.all_vertices(&plan.source_type)?;
        let src_cols = plan.source_columns();
        let step = self.vertex_map(&all, &src_cols, &accums, |row, _| plan.source_eval(row))?;
        stats.push(step.stats);
        let mut frontier = step.frontier;
        for hop in &plan.hops {
            let step = self.edge_scan(&frontier, &hop.spec, &accums, |e, emit| hop.eval(e, emit))?;
            barrier(&mut accums, vec![step.updates])?;
            stats.push(step.stats);
            frontier = step.frontier;
        }
        let table = self.project(plan, &frontier, &accums)?;
        Ok(PlanRun {
            table,
            frontier,
            accums,
            stats,
        })
    }

    /// Output rows for the final frontier.
    pub fn project(
        &self,
        plan: &CompiledPlan,
        frontier: &ActiveVertexSet,
        accums: &AccumulatorStore,
    ) -> Result<ResultTable> {
        let mut header = vec!["vid".to_string()];
        header.extend(plan.output_columns.iter().cloned());
        header.extend(plan.output_accums.iter().map(|(n, _)| format!("@{n}")));
        let mut rows = Vec::new();
        let mut readers: BTreeMap<u32, Vec<VertexReader>> = BTreeMap::new();
        for v in frontier.iter() {
            if plan.limit.is_some_and(|l| rows.len() >= l) {
                break;
            }
            let mut row = vec![v.packed().to_string()];
            if v.is_dangling() {
                row.extend(plan.output_columns.iter().map(|_| String::new()));
            } else {
                if let std::collections::btree_map::Entry::Vacant(e) = readers.entry(v.file_id()) {
                    let rs = plan
                        .output_columns
                        .iter()
                        .map(|c| VertexReader::new(&self.cache, v.file_id(), c))
                        .collect::<Result<Vec<_>>>()?;
                    e.insert(rs);
                }
                for r in readers.get_mut(&v.file_id()).unwrap() {
                    row.push(r.get(v.row())?.to_string());
                }
            }
            for (_, slot) in &plan.output_accums {
                row.push(accums.get(*slot, v).map(|a| a.to_string()).unwrap_or_default());
            }
            rows.push(row);
        }
        Ok(ResultTable { header, rows })
    }
}

/// Folds buffered updates into the accumulators.
pub fn barrier(accums: &mut AccumulatorStore, batches: Vec<Vec<Update>>) -> Result<()> {
    accums
        .apply(batches)
        .map_err(|e| Error::Query(format!("accumulator merge failed: {e}")))
}

/// The two-hop aggregation from the paper's running example: persons who
/// created comments tagged `tag_name` after `after`, counted per person.
pub fn music_plan(tag_name: &str, after: &str, gender: &str) -> QueryPlan {
    let text = format!(
        r#"{{
  "source": {{"type": "Tag", "where": [{{"col": "name", "op": "==", "value": "{tag_name}"}}]}},
  "hops": [
    {{"edge": "HasTag", "dir": "in", "frontier": "source"}},
    {{"edge": "HasCreator", "dir": "out",
      "whereEdge": [{{"col": "date", "op": ">", "value": "{after}"}}],
      "whereNeighbor": [{{"col": "gender", "op": "==", "value": "{gender}"}}],
      "accum": [{{"target": "neighbor", "name": "sum", "kind": "SUM", "expr": "1"}}],
      "frontier": "target"}}
  ],
  "output": {{"columns": ["id"], "accums": ["sum"]}}
}}"#
    );
    QueryPlan::from_json(&text).expect("static plan parses")
}

/// Vertex id for result rows.
pub fn parse_vid(s: &str) -> Option<VertexId> {
    s.parse::<u64>().ok().map(VertexId)
}
