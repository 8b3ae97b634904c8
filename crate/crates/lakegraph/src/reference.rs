//! Plain single-threaded graph algorithms over an explicit edge list, used
//! as oracles for the engine. The graph is read straight from the raw
//! tables, bypassing topology loading and the cache.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use lakegraph_core::VertexId;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::lgc;
use crate::topology::RawKey;

#[derive(Clone, Debug, PartialEq)]
pub struct RawGraph {
    /// Ascending.
    pub vertices: Vec<VertexId>,
    pub edges: Vec<(VertexId, VertexId)>,
}

/// Reads a homogeneous graph from its vertex and edge tables. Edge keys
/// without a vertex row are rejected.
pub fn raw_graph(catalog: &Catalog, vertex_type: &str, edge_type: &str) -> Result<RawGraph> {
    let store = catalog.store.as_ref();
    let vt = catalog
        .schema
        .vertex(vertex_type)
        .ok_or_else(|| Error::Query(format!("unknown vertex type {vertex_type}")))?;
    let et = catalog
        .schema
        .edge(edge_type)
        .ok_or_else(|| Error::Query(format!("unknown edge type {edge_type}")))?;
    let mut ids: HashMap<RawKey, VertexId> = HashMap::new();
    let mut vertices = Vec::new();
    for f in catalog.registry.files_of(&vt.table) {
        let path = &catalog.registry.entry(f)?.path;
        let footer = lgc::read_footer(store, path)?;
        for (row, key) in lgc::read_column(store, path, &footer, &vt.key)?.into_iter().enumerate() {
            let v = VertexId::new(f, row as u32);
            ids.insert(RawKey::from_value(key)?, v);
            vertices.push(v);
        }
    }
    vertices.sort();
    let mut edges = Vec::new();
    let mut files = catalog.registry.files_of(&et.table);
    files.sort();
    for f in files {
        let path = &catalog.registry.entry(f)?.path;
        let footer = lgc::read_footer(store, path)?;
        let src = lgc::read_column(store, path, &footer, &et.src_key)?;
        let tgt = lgc::read_column(store, path, &footer, &et.tgt_key)?;
        for (s, t) in src.into_iter().zip(tgt) {
            let look = |k: lakegraph_core::Value| -> Result<VertexId> {
                let k = RawKey::from_value(k)?;
                ids.get(&k)
                    .copied()
                    .ok_or_else(|| Error::Query(format!("edge key {k} has no vertex row")))
            };
            edges.push((look(s)?, look(t)?));
        }
    }
    Ok(RawGraph { vertices, edges })
}

impl RawGraph {
    fn index(&self) -> HashMap<VertexId, usize> {
        self.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect()
    }

    /// Neighbor sets of the undirected simple graph.
    fn undirected(&self) -> Vec<BTreeSet<usize>> {
        let ix = self.index();
        let mut adj = vec![BTreeSet::new(); self.vertices.len()];
        for &(s, t) in &self.edges {
            if s != t {
                adj[ix[&s]].insert(ix[&t]);
                adj[ix[&t]].insert(ix[&s]);
            }
        }
        adj
    }

    pub fn pagerank(&self, damping: f64, max_iters: usize, tol: f64) -> (BTreeMap<VertexId, f64>, usize) {
        let n = self.vertices.len();
        if n == 0 {
            return (BTreeMap::new(), 0);
        }
        let ix = self.index();
        let mut out = vec![0usize; n];
        for (s, _) in &self.edges {
            out[ix[s]] += 1;
        }
        let mut pr = vec![1.0 / n as f64; n];
        let mut iters = 0;
        for _ in 0..max_iters {
            let dangling: f64 = (0..n).filter(|&i| out[i] == 0).map(|i| pr[i]).sum();
            let mut next = vec![(1.0 - damping) / n as f64 + damping * dangling / n as f64; n];
            for (s, t) in &self.edges {
                let (s, t) = (ix[s], ix[t]);
                next[t] += damping * pr[s] / out[s] as f64;
            }
            let delta: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
            pr = next;
            iters += 1;
            if delta < tol {
                break;
            }
        }
        (self.vertices.iter().copied().zip(pr).collect(), iters)
    }

    pub fn wcc(&self) -> BTreeMap<VertexId, VertexId> {
        let ix = self.index();
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (s, t) in &self.edges {
            let (a, b) = (find(&mut parent, ix[s]), find(&mut parent, ix[t]));
            // Vertices are ascending, so the smaller index is the smaller id.
            if a < b {
                parent[b] = a;
            } else if b < a {
                parent[a] = b;
            }
        }
        (0..self.vertices.len())
            .map(|i| (self.vertices[i], self.vertices[find(&mut parent, i)]))
            .collect()
    }

    pub fn cdlp(&self, max_iters: usize) -> BTreeMap<VertexId, VertexId> {
        let adj = self.undirected();
        let mut label: Vec<VertexId> = self.vertices.clone();
        for _ in 0..max_iters {
            let next: Vec<VertexId> = (0..label.len())
                .map(|i| {
                    let mut freq: BTreeMap<VertexId, usize> = BTreeMap::new();
                    for &j in &adj[i] {
                        *freq.entry(label[j]).or_default() += 1;
                    }
                    let top = freq.values().copied().max();
                    match top {
                        Some(top) => *freq.iter().find(|(_, &c)| c == top).unwrap().0,
                        None => label[i],
                    }
                })
                .collect();
            label = next;
        }
        self.vertices.iter().copied().zip(label).collect()
    }

    pub fn bfs(&self, source: VertexId) -> BTreeMap<VertexId, i64> {
        let ix = self.index();
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (s, t) in &self.edges {
            adj[ix[s]].push(ix[t]);
        }
        let mut dist = vec![-1i64; self.vertices.len()];
        let mut q = VecDeque::new();
        if let Some(&s) = ix.get(&source) {
            dist[s] = 0;
            q.push_back(s);
        }
        while let Some(x) = q.pop_front() {
            for &y in &adj[x] {
                if dist[y] < 0 {
                    dist[y] = dist[x] + 1;
                    q.push_back(y);
                }
            }
        }
        self.vertices.iter().copied().zip(dist).collect()
    }

    pub fn lcc(&self) -> BTreeMap<VertexId, f64> {
        let adj = self.undirected();
        (0..self.vertices.len())
            .map(|i| {
                let nb: Vec<usize> = adj[i].iter().copied().collect();
                let d = nb.len();
                let value = if d < 2 {
                    0.0
                } else {
                    let mut links = 0usize;
                    for a in 0..d {
                        for b in a + 1..d {
                            if adj[nb[a]].contains(&nb[b]) {
                                links += 1;
                            }
                        }
                    }
                    links as f64 / (d * (d - 1) / 2) as f64
                };
                (self.vertices[i], value)
            })
            .collect()
    }
}
