//! Built-in graph algorithms as supersteps over `vertex_map`/`edge_scan`.
//!
//! Each algorithm runs over one vertex type and one edge type connecting
//! it to itself. Per-vertex state lives with the driver; the primitives
//! read it and emit accumulator updates that are folded at each barrier.

use std::collections::{BTreeMap, HashMap, HashSet};

use lakegraph_core::{AccumKind, AccumulatorStore, ActiveVertexSet, Scalar, VertexId};

use super::plan::barrier;
use super::{Direction, EdgeScanSpec, Graph, Side};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PageRankResult {
    pub scores: BTreeMap<VertexId, f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Dense numbering of the vertex universe in packed-id order.
struct Universe {
    all: ActiveVertexSet,
    ids: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
}

impl Universe {
    fn new(g: &Graph, vertex_type: &str, edge_type: &str) -> Result<Universe> {
        let et = g
            .catalog
            .schema
            .edge(edge_type)
            .ok_or_else(|| Error::Query(format!("unknown edge type {edge_type}")))?;
        if et.src_type != vertex_type || et.tgt_type != vertex_type {
            return Err(Error::Query(format!(
                "edge type {edge_type} connects {} to {}, not {vertex_type} to itself",
                et.src_type, et.tgt_type
            )));
        }
        let all = g.all_vertices(vertex_type)?;
        let ids: Vec<VertexId> = all.iter().collect();
        let index = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        Ok(Universe { all, ids, index })
    }

    fn idx(&self, v: VertexId) -> Option<usize> {
        self.index.get(&v).copied()
    }

    fn collect<T: Clone>(&self, values: &[T]) -> BTreeMap<VertexId, T> {
        self.ids.iter().copied().zip(values.iter().cloned()).collect()
    }
}

/// Packed edge ids of the undirected simple view: the first entry of every
/// unordered endpoint pair in (edge file, row) order, self loops dropped.
fn canonical_edges(g: &Graph, edge_type: &str) -> HashSet<u64> {
    let mut seen = HashSet::new();
    let mut keep = HashSet::new();
    for list in g.topology.lists_of_type(edge_type) {
        for (i, &(s, t)) in list.entries.iter().enumerate() {
            if s == t {
                continue;
            }
            if seen.insert((s.min(t), s.max(t))) {
                keep.insert(VertexId::new(list.edge_file_id, i as u32).packed());
            }
        }
    }
    keep
}

pub fn pagerank(
    g: &Graph,
    vertex_type: &str,
    edge_type: &str,
    damping: f64,
    max_iters: usize,
    tol: f64,
) -> Result<PageRankResult> {
    let u = Universe::new(g, vertex_type, edge_type)?;
    let n = u.ids.len();
    if n == 0 {
        return Ok(PageRankResult {
            scores: BTreeMap::new(),
            iterations: 0,
            converged: true,
        });
    }
    let mut acc = AccumulatorStore::new();
    let outdeg = acc.declare("outdeg", AccumKind::Count)?;
    let contrib = acc.declare("contrib", AccumKind::Sum)?;
    let dmass = acc.declare("dangling", AccumKind::Sum)?;
    let scan = EdgeScanSpec::bare(edge_type, Direction::Out, Side::Target);

    let step = g.edge_scan(&u.all, &scan, &acc, |e, emit| {
        emit.push(outdeg, e.src.id, Scalar::Int(1));
        false
    })?;
    barrier(&mut acc, vec![step.updates])?;
    let deg: Vec<f64> = u
        .ids
        .iter()
        .map(|&v| acc.get(outdeg, v).and_then(|a| a.as_f64()).unwrap_or(0.0))
        .collect();

    let mut rank = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        acc.reset(contrib);
        acc.reset(dmass);
        let r = &rank;
        let d = &deg;
        let dang = g.vertex_map(&u.all, &[], &acc, |row, emit| {
            let i = u.index[&row.id];
            if d[i] == 0.0 {
                emit.push(dmass, AccumulatorStore::GLOBAL, Scalar::Float(r[i]));
            }
            false
        })?;
        let spread = g.edge_scan(&u.all, &scan, &acc, |e, emit| {
            if let (Some(i), true) = (u.idx(e.src.id), u.index.contains_key(&e.tgt.id)) {
                emit.push(contrib, e.tgt.id, Scalar::Float(r[i] / d[i]));
            }
            false
        })?;
        barrier(&mut acc, vec![dang.updates, spread.updates])?;
        let dm = acc
            .get(dmass, AccumulatorStore::GLOBAL)
            .and_then(|a| a.as_f64())
            .unwrap_or(0.0);
        let base = (1.0 - damping) / n as f64 + damping * dm / n as f64;
        let next: Vec<f64> = u
            .ids
            .iter()
            .map(|&v| base + damping * acc.get(contrib, v).and_then(|a| a.as_f64()).unwrap_or(0.0))
            .collect();
        let delta: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        iterations += 1;
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok(PageRankResult {
        scores: u.collect(&rank),
        iterations,
        converged,
    })
}

/// Weakly connected components; each vertex is labelled with the smallest
/// packed id in its component.
pub fn wcc(g: &Graph, vertex_type: &str, edge_type: &str) -> Result<BTreeMap<VertexId, VertexId>> {
    let u = Universe::new(g, vertex_type, edge_type)?;
    let mut acc = AccumulatorStore::new();
    let minl = acc.declare("min_label", AccumKind::Min)?;
    let mut label: Vec<u64> = u.ids.iter().map(|v| v.packed()).collect();
    let mut changed = u.all.clone();
    while !changed.is_empty() {
        acc.reset(minl);
        let l = &label;
        let fwd = g.edge_scan(
            &changed,
            &EdgeScanSpec::bare(edge_type, Direction::Out, Side::Target),
            &acc,
            |e, emit| {
                if let Some(i) = u.idx(e.src.id) {
                    emit.push(minl, e.tgt.id, Scalar::Id(l[i]));
                }
                false
            },
        )?;
        let back = g.edge_scan(
            &changed,
            &EdgeScanSpec::bare(edge_type, Direction::In, Side::Source),
            &acc,
            |e, emit| {
                if let Some(i) = u.idx(e.tgt.id) {
                    emit.push(minl, e.src.id, Scalar::Id(l[i]));
                }
                false
            },
        )?;
        barrier(&mut acc, vec![fwd.updates, back.updates])?;
        changed = ActiveVertexSet::new();
        for (v, a) in acc.entries(minl) {
            let (Some(i), Some(m)) = (u.idx(*v), a.as_id()) else {
                continue;
            };
            if m < label[i] {
                label[i] = m;
                changed.insert(*v);
            }
        }
    }
    let labels: Vec<VertexId> = label.into_iter().map(VertexId).collect();
    Ok(u.collect(&labels))
}

/// Synchronous label propagation over the undirected simple view. Ties go
/// to the smallest label; isolated vertices keep their own.
pub fn cdlp(g: &Graph, vertex_type: &str, edge_type: &str, max_iters: usize) -> Result<BTreeMap<VertexId, VertexId>> {
    let u = Universe::new(g, vertex_type, edge_type)?;
    let canon = canonical_edges(g, edge_type);
    let mut acc = AccumulatorStore::new();
    let counts = acc.declare("labels", AccumKind::MapCount { bound: usize::MAX })?;
    let mut label: Vec<u64> = u.ids.iter().map(|v| v.packed()).collect();
    let scan = EdgeScanSpec::bare(edge_type, Direction::Out, Side::Target);
    for _ in 0..max_iters {
        acc.reset(counts);
        let l = &label;
        let step = g.edge_scan(&u.all, &scan, &acc, |e, emit| {
            if canon.contains(&e.edge.id.packed()) {
                if let (Some(s), Some(t)) = (u.idx(e.src.id), u.idx(e.tgt.id)) {
                    emit.push(counts, e.tgt.id, Scalar::Id(l[s]));
                    emit.push(counts, e.src.id, Scalar::Id(l[t]));
                }
            }
            false
        })?;
        barrier(&mut acc, vec![step.updates])?;
        let mut next = label.clone();
        for (v, a) in acc.entries(counts) {
            let (Some(i), Some(m)) = (u.idx(*v), a.as_map()) else {
                continue;
            };
            let mut best: Option<(u64, u64)> = None;
            for (k, &c) in m {
                if let Scalar::Id(l) = k {
                    if best.is_none_or(|(_, bc)| c > bc) {
                        best = Some((*l, c));
                    }
                }
            }
            if let Some((l, _)) = best {
                next[i] = l;
            }
        }
        label = next;
    }
    let labels: Vec<VertexId> = label.into_iter().map(VertexId).collect();
    Ok(u.collect(&labels))
}

/// Hop distance from `source` along stored edge direction; -1 when
/// unreachable.
pub fn bfs(g: &Graph, vertex_type: &str, edge_type: &str, source: VertexId) -> Result<BTreeMap<VertexId, i64>> {
    let u = Universe::new(g, vertex_type, edge_type)?;
    let Some(si) = u.idx(source) else {
        return Err(Error::Query(format!(
            "bfs source {source} is not a {vertex_type} vertex"
        )));
    };
    let mut level = vec![-1i64; u.ids.len()];
    level[si] = 0;
    let mut frontier = ActiveVertexSet::new();
    frontier.insert(source);
    let acc = AccumulatorStore::new();
    let scan = EdgeScanSpec::bare(edge_type, Direction::Out, Side::Target);
    let mut depth = 0;
    while !frontier.is_empty() {
        let l = &level;
        let step = g.edge_scan(&frontier, &scan, &acc, |e, _| u.idx(e.tgt.id).is_some_and(|t| l[t] < 0))?;
        depth += 1;
        frontier = ActiveVertexSet::new();
        for v in step.frontier.iter() {
            let i = u.index[&v];
            if level[i] < 0 {
                level[i] = depth;
                frontier.insert(v);
            }
        }
    }
    Ok(u.collect(&level))
}

/// Local clustering coefficient over the undirected simple view.
pub fn lcc(g: &Graph, vertex_type: &str, edge_type: &str) -> Result<BTreeMap<VertexId, f64>> {
    let u = Universe::new(g, vertex_type, edge_type)?;
    let canon = canonical_edges(g, edge_type);
    let mut acc = AccumulatorStore::new();
    let nbrs = acc.declare("neighbors", AccumKind::MapCount { bound: usize::MAX })?;
    let tri = acc.declare("triangles", AccumKind::Sum)?;
    let scan = EdgeScanSpec::bare(edge_type, Direction::Out, Side::Target);
    let step = g.edge_scan(&u.all, &scan, &acc, |e, emit| {
        if canon.contains(&e.edge.id.packed()) && u.idx(e.src.id).is_some() && u.idx(e.tgt.id).is_some() {
            emit.push(nbrs, e.src.id, Scalar::Id(e.tgt.id.packed()));
            emit.push(nbrs, e.tgt.id, Scalar::Id(e.src.id.packed()));
        }
        false
    })?;
    barrier(&mut acc, vec![step.updates])?;
    let mut adj: Vec<Vec<u64>> = vec![Vec::new(); u.ids.len()];
    for (v, a) in acc.entries(nbrs) {
        if let (Some(i), Some(m)) = (u.idx(*v), a.as_map()) {
            adj[i] = m
                .keys()
                .filter_map(|k| match k {
                    Scalar::Id(x) => Some(*x),
                    _ => None,
                })
                .collect();
        }
    }
    let a = &adj;
    let step = g.edge_scan(&u.all, &scan, &acc, |e, emit| {
        if !canon.contains(&e.edge.id.packed()) {
            return false;
        }
        if let (Some(s), Some(t)) = (u.idx(e.src.id), u.idx(e.tgt.id)) {
            let common = sorted_intersection(&a[s], &a[t]) as i64;
            if common > 0 {
                emit.push(tri, e.src.id, Scalar::Int(common));
                emit.push(tri, e.tgt.id, Scalar::Int(common));
            }
        }
        false
    })?;
    barrier(&mut acc, vec![step.updates])?;
    let values: Vec<f64> = u
        .ids
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = adj[i].len() as f64;
            if d < 2.0 {
                return 0.0;
            }
            // Each triangle at v is seen from both of its edges at v.
            let t = acc.get(tri, v).and_then(|a| a.as_f64()).unwrap_or(0.0) / 2.0;
            t / (d * (d - 1.0) / 2.0)
        })
        .collect();
    Ok(u.collect(&values))
}

fn sorted_intersection(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}
