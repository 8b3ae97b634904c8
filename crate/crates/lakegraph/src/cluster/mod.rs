//! Distributed query execution. Data files are partitioned across workers;
//! a worker scans the edge lists of its edge files, fetches attributes of
//! vertices hosted elsewhere in one batch per peer per hop, and pushes
//! accumulator updates to the vertex's host at the barrier.
//!
//! Nodes `0..W` are workers and node `W` is the coordinator.

pub mod transport;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use lakegraph_core::accum::Update;
use lakegraph_core::predicate::eval_all;
use lakegraph_core::{AccumulatorStore, ActiveVertexSet, Value, VertexId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, ColumnCache, VertexReader};
use crate::catalog::Catalog;
use crate::engine::plan::{barrier, compile, CompiledHop, CompiledPlan, QueryPlan, ResultTable};
use crate::engine::{Direction, Graph, RemoteRows, ScanScope, Side};
use crate::error::{Error, Result};
use crate::store::ObjectStore;

pub use transport::{channel_mesh, ChannelTransport, Event, TcpTransport, Transport};
pub use wire::{Control, FetchBatch, FetchReply, FetchSection, Frame, Message, ReplySection, WorkerStats};

/// Assignment of data files to workers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub workers: usize,
    pub owner: BTreeMap<u32, usize>,
}

impl Partition {
    /// Files without an entry belong to worker 0.
    pub fn owner_of(&self, file: u32) -> usize {
        self.owner.get(&file).copied().unwrap_or(0)
    }

    /// Worker that holds the vertex's attributes and accumulators.
    /// Dangling vertices live on worker 0.
    pub fn host(&self, v: VertexId) -> usize {
        if v.is_dangling() {
            0
        } else {
            self.owner_of(v.file_id())
        }
    }

    pub fn files_of(&self, worker: usize) -> BTreeSet<u32> {
        self.owner
            .iter()
            .filter(|(_, &w)| w == worker)
            .map(|(&f, _)| f)
            .collect()
    }

    pub fn bytes_per_worker(&self, sizes: &BTreeMap<u32, u64>) -> Vec<u64> {
        let mut out = vec![0u64; self.workers];
        for (f, &w) in &self.owner {
            out[w] += sizes.get(f).copied().unwrap_or(0);
        }
        out
    }
}

/// Stored size of every live data file: its chunks plus its footer.
pub fn file_sizes(catalog: &Catalog) -> Result<BTreeMap<u32, u64>> {
    let mut out = BTreeMap::new();
    for (id, _) in catalog.registry.entries() {
        if catalog.registry.is_retired(id) {
            continue;
        }
        let footer = catalog.footer(id)?;
        let chunks: u64 = footer
            .row_groups
            .iter()
            .flat_map(|g| g.columns.iter())
            .map(|c| c.byte_length)
            .sum();
        out.insert(id, chunks + footer.footer_len);
    }
    Ok(out)
}

/// Greedy size-balanced assignment: files in seeded random order, stably
/// sorted by size descending, each placed on the least loaded worker.
pub fn partition_files(catalog: &Catalog, workers: usize, seed: u64) -> Result<Partition> {
    if workers == 0 {
        return Err(Error::Query("a cluster needs at least one worker".into()));
    }
    let sizes = file_sizes(catalog)?;
    if sizes.len() < workers {
        return Err(Error::Query(format!(
            "{} data files cannot give each of {workers} workers a file",
            sizes.len()
        )));
    }
    let mut files: Vec<(u32, u64)> = sizes.into_iter().collect();
    files.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    files.sort_by_key(|f| std::cmp::Reverse(f.1));
    let mut load = vec![0u64; workers];
    let mut count = vec![0usize; workers];
    let mut owner = BTreeMap::new();
    for (f, size) in files {
        let w = (0..workers).min_by_key(|&w| (load[w], count[w], w)).unwrap();
        load[w] += size.max(1);
        count[w] += 1;
        owner.insert(f, w);
    }
    Ok(Partition { workers, owner })
}

/// Uniformly random assignment, for testing that results do not depend on
/// placement. Workers may end up without files.
pub fn random_partition(catalog: &Catalog, workers: usize, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owner = catalog
        .registry
        .entries()
        .filter(|(id, _)| !catalog.registry.is_retired(*id))
        .map(|(id, _)| (id, rng.gen_range(0..workers)))
        .collect();
    Partition { workers, owner }
}

/// A graph sharing `g`'s catalog and topology with a cache of its own.
pub fn with_own_cache(g: &Graph, disk: Arc<dyn ObjectStore>, cfg: CacheConfig) -> Graph {
    let cache = Arc::new(ColumnCache::new(g.catalog.clone(), disk, cfg));
    Graph::new(g.catalog.clone(), g.topology.clone(), cache, g.cfg.clone())
}

fn side_columns(hop: &CompiledHop, side: Side) -> &[String] {
    match side {
        Side::Source => &hop.spec.src_columns,
        Side::Target => &hop.spec.tgt_columns,
    }
}

/// First pass of a distributed hop: walks the worker's share of the edge
/// lists and collects, per peer, the remote vertices whose attributes the
/// hop reads. Neighbors carry the hop's neighbor predicate; scan-side
/// vertices are fetched unfiltered.
pub fn pass_one(
    graph: &Graph,
    partition: &Partition,
    me: usize,
    hop_index: u32,
    hop: &CompiledHop,
    frontier: &ActiveVertexSet,
) -> Result<BTreeMap<usize, FetchBatch>> {
    let edge_files = partition.files_of(me);
    let scope = ScanScope {
        edge_files: Some(&edge_files),
        remote: None,
    };
    let (tasks, _) = graph.scan_tasks(frontier, &hop.spec, scope);
    let scan_side = hop.spec.scan_side();
    let nb_cols = side_columns(hop, hop.neighbor);
    let scan_cols = side_columns(hop, scan_side);
    let mut nb_ids: BTreeMap<usize, BTreeSet<VertexId>> = BTreeMap::new();
    let mut scan_ids: BTreeMap<usize, BTreeSet<VertexId>> = BTreeMap::new();
    let remote_host = |v: VertexId| {
        let h = partition.host(v);
        (h != me && !v.is_dangling()).then_some(h)
    };
    for task in &tasks {
        for range in &task.ranges {
            for &(s, t) in &task.list.entries[range.clone()] {
                let (sv, nv) = match hop.spec.dir {
                    Direction::Out => (s, t),
                    Direction::In => (t, s),
                };
                if !frontier.contains(sv) {
                    continue;
                }
                if !nb_cols.is_empty() {
                    if let Some(h) = remote_host(nv) {
                        nb_ids.entry(h).or_default().insert(nv);
                    }
                }
                if !scan_cols.is_empty() {
                    if let Some(h) = remote_host(sv) {
                        scan_ids.entry(h).or_default().insert(sv);
                    }
                }
            }
        }
    }
    let peers: BTreeSet<usize> = nb_ids.keys().chain(scan_ids.keys()).copied().collect();
    let mut out = BTreeMap::new();
    for p in peers {
        let mut sections = Vec::new();
        if let Some(ids) = nb_ids.remove(&p) {
            sections.push(FetchSection {
                side: hop.neighbor,
                ids: ids.into_iter().collect(),
                columns: nb_cols.to_vec(),
                predicate: hop.where_neighbor.clone(),
            });
        }
        if let Some(ids) = scan_ids.remove(&p) {
            sections.push(FetchSection {
                side: scan_side,
                ids: ids.into_iter().collect(),
                columns: scan_cols.to_vec(),
                predicate: Vec::new(),
            });
        }
        out.insert(
            p,
            FetchBatch {
                hop: hop_index,
                sections,
            },
        );
    }
    Ok(out)
}

/// Answers a fetch batch from the local cache: each requested vertex that
/// satisfies its section's predicate comes back with its column values.
pub fn serve_fetch(graph: &Graph, batch: &FetchBatch) -> Result<FetchReply> {
    let mut sections = Vec::new();
    for s in &batch.sections {
        let mut needed: Vec<String> = s.columns.clone();
        for p in &s.predicate {
            if !needed.contains(&p.column) {
                needed.push(p.column.clone());
            }
        }
        let mut readers: HashMap<u32, Vec<VertexReader>> = HashMap::new();
        let mut rows = Vec::new();
        let mut buf: Vec<Value> = Vec::with_capacity(needed.len());
        for &v in &s.ids {
            if v.is_dangling() {
                continue;
            }
            if let std::collections::hash_map::Entry::Vacant(e) = readers.entry(v.file_id()) {
                let rs = needed
                    .iter()
                    .map(|c| VertexReader::new(&graph.cache, v.file_id(), c))
                    .collect::<Result<Vec<_>>>()?;
                e.insert(rs);
            }
            buf.clear();
            for r in readers.get_mut(&v.file_id()).unwrap() {
                buf.push(r.get(v.row())?);
            }
            let ok = eval_all(&s.predicate, |c| needed.iter().position(|n| n == c).map(|i| &buf[i]));
            if ok {
                rows.push((v, buf[..s.columns.len()].to_vec()));
            }
        }
        sections.push(ReplySection { side: s.side, rows });
    }
    Ok(FetchReply {
        hop: batch.hop,
        sections,
    })
}

struct QueryState {
    plan: CompiledPlan,
    accums: AccumulatorStore,
    local: BTreeMap<u32, Vec<Update>>,
    pushed: BTreeMap<u32, Vec<Vec<Update>>>,
    stats: WorkerStats,
}

/// Why a worker's event loop stopped.
#[derive(Debug, PartialEq, Eq)]
pub enum WorkerExit {
    Shutdown,
    CoordinatorGone,
}

struct Worker<'a> {
    graph: &'a Graph,
    partition: &'a Partition,
    net: &'a dyn Transport,
    me: usize,
    coordinator: usize,
    query: Option<QueryState>,
    replies: Vec<(usize, FetchReply)>,
}

enum Step {
    Continue,
    Exit(WorkerExit),
}

/// Runs a worker's event loop until the coordinator shuts it down or goes
/// away. Query failures are reported to the coordinator as ABORT frames.
pub fn run_worker(graph: &Graph, partition: &Partition, net: &dyn Transport) -> Result<WorkerExit> {
    let mut w = Worker {
        graph,
        partition,
        net,
        me: net.id(),
        coordinator: partition.workers,
        query: None,
        replies: Vec::new(),
    };
    loop {
        let Some(ev) = net.recv(Duration::from_millis(200))? else {
            continue;
        };
        match w.handle(ev) {
            Ok(Step::Continue) => {}
            Ok(Step::Exit(e)) => return Ok(e),
            Err(e) => {
                w.query = None;
                let abort = Message::Abort {
                    worker: w.me as u32,
                    detail: e.to_string(),
                };
                if net.send(w.coordinator, &abort.encode()).is_err() {
                    return Ok(WorkerExit::CoordinatorGone);
                }
            }
        }
    }
}

impl Worker<'_> {
    fn send(&self, to: usize, msg: &Message) -> Result<()> {
        self.net.send(to, &msg.encode())
    }

    fn state(&mut self) -> Result<&mut QueryState> {
        self.query
            .as_mut()
            .ok_or_else(|| Error::Query("no query in progress".into()))
    }

    fn handle(&mut self, ev: Event) -> Result<Step> {
        let (from, frame) = match ev {
            Event::Closed(n) if n == self.coordinator => return Ok(Step::Exit(WorkerExit::CoordinatorGone)),
            Event::Closed(_) => return Ok(Step::Continue),
            Event::Frame(from, f) => (from, f),
        };
        match Message::decode(&frame)? {
            Message::FetchReq(b) => {
                let reply = serve_fetch(self.graph, &b)?;
                self.send(from, &Message::FetchRep(reply))?;
            }
            Message::FetchRep(r) => self.replies.push((from, r)),
            Message::AccumPush { hop, updates } => {
                self.state()?.pushed.entry(hop).or_default().push(updates);
            }
            Message::Abort { .. } => {
                self.query = None;
                self.replies.clear();
            }
            Message::Barrier(c) => return self.control(c),
        }
        Ok(Step::Continue)
    }

    /// Handles events until `done` holds. Control messages cannot arrive
    /// while a worker waits on its peers.
    fn pump(&mut self, done: impl Fn(&Worker) -> bool) -> Result<()> {
        while !done(self) {
            let Some(ev) = self.net.recv(Duration::from_millis(200))? else {
                continue;
            };
            match self.handle(ev)? {
                Step::Continue => {}
                Step::Exit(_) => return Err(Error::Transport("coordinator went away mid-query".into())),
            }
            if self.query.is_none() {
                return Err(Error::Query("query aborted".into()));
            }
        }
        Ok(())
    }

    fn control(&mut self, c: Control) -> Result<Step> {
        match c {
            Control::StartQuery { plan } => {
                let plan = compile(&self.graph.catalog, &QueryPlan::from_json(&plan)?)?;
                self.query = Some(QueryState {
                    accums: plan.accums.clone(),
                    plan,
                    local: BTreeMap::new(),
                    pushed: BTreeMap::new(),
                    stats: WorkerStats::default(),
                });
                let frontier = self.source_step()?;
                self.send(self.coordinator, &Message::Barrier(Control::SourceDone { frontier }))?;
            }
            Control::StartHop { hop, frontier } => self.hop(hop, &frontier)?,
            Control::Commit { hop, expected_pushes } => {
                let expected = expected_pushes as usize;
                self.pump(|w| {
                    w.query
                        .as_ref()
                        .is_some_and(|q| q.pushed.get(&hop).map_or(0, |v| v.len()) >= expected)
                })?;
                let q = self.state()?;
                let mut batches = q.pushed.remove(&hop).unwrap_or_default();
                batches.push(q.local.remove(&hop).unwrap_or_default());
                barrier(&mut q.accums, batches)?;
            }
            Control::Finish => {
                let q = self
                    .query
                    .take()
                    .ok_or_else(|| Error::Query("no query in progress".into()))?;
                let mut accums = Vec::new();
                for slot in 0..q.accums.names().len() as u16 {
                    for (v, a) in q.accums.entries(slot) {
                        accums.push((slot, *v, a.clone()));
                    }
                }
                self.send(
                    self.coordinator,
                    &Message::Barrier(Control::Final { accums, stats: q.stats }),
                )?;
            }
            Control::Shutdown => return Ok(Step::Exit(WorkerExit::Shutdown)),
            other => return Err(Error::Query(format!("unexpected control message {other:?}"))),
        }
        Ok(Step::Continue)
    }

    /// Source filter over the source-type files this worker owns.
    fn source_step(&mut self) -> Result<ActiveVertexSet> {
        let (graph, me, partition) = (self.graph, self.me, self.partition);
        let q = self.state()?;
        let all = graph.all_vertices(&q.plan.source_type)?;
        let mut mine = ActiveVertexSet::new();
        for (f, bits) in all.files() {
            let host = if f == VertexId::DANGLING_FILE {
                0
            } else {
                partition.owner_of(f)
            };
            if host == me {
                mine.insert_bitmap(f, bits.clone());
            }
        }
        let step = graph.vertex_map(&mine, &q.plan.source_columns(), &q.accums, |row, _| {
            q.plan.source_eval(row)
        })?;
        q.stats.scan.add(&step.stats);
        Ok(step.frontier)
    }

    fn hop(&mut self, h: u32, frontier: &ActiveVertexSet) -> Result<()> {
        let (graph, me, partition) = (self.graph, self.me, self.partition);
        let net = self.net;
        let hop = self
            .state()?
            .plan
            .hops
            .get(h as usize)
            .cloned()
            .ok_or_else(|| Error::Query(format!("hop {h} out of range")))?;
        let batches = pass_one(graph, partition, me, h, &hop, frontier)?;
        {
            let q = self.state()?;
            q.stats.fetch_batches += batches.len() as u64;
            q.stats.max_fetch_batches_per_hop = q.stats.max_fetch_batches_per_hop.max(batches.len() as u64);
            q.stats.fetch_ids += batches
                .values()
                .flat_map(|b| b.sections.iter())
                .map(|s| s.ids.len() as u64)
                .sum::<u64>();
        }
        let waiting: BTreeSet<usize> = batches.keys().copied().collect();
        for (p, b) in batches {
            self.send(p, &Message::FetchReq(b))?;
        }
        self.pump(|w| {
            let got: BTreeSet<usize> = w.replies.iter().filter(|(_, r)| r.hop == h).map(|(p, _)| *p).collect();
            waiting.is_subset(&got)
        })?;
        let mut remote = RemoteRows {
            local_files: partition.files_of(me),
            ..Default::default()
        };
        let mut rows = 0u64;
        for (_, r) in std::mem::take(&mut self.replies) {
            for s in r.sections {
                rows += s.rows.len() as u64;
                let map = match s.side {
                    Side::Source => &mut remote.src,
                    Side::Target => &mut remote.tgt,
                };
                map.extend(s.rows);
            }
        }
        let edge_files = partition.files_of(me);
        let scope = ScanScope {
            edge_files: Some(&edge_files),
            remote: Some(&remote),
        };
        let q = self.state()?;
        q.stats.fetch_rows += rows;
        let out = graph.edge_scan_scoped(frontier, &hop.spec, &q.accums, scope, |e, emit| hop.eval(e, emit))?;
        q.stats.scan.add(&out.stats);
        let mut by_host: BTreeMap<usize, Vec<Update>> = BTreeMap::new();
        for u in out.updates {
            by_host.entry(partition.host(u.vertex)).or_default().push(u);
        }
        q.local.insert(h, by_host.remove(&me).unwrap_or_default());
        let mut pushes = vec![0u32; partition.workers];
        for (host, updates) in by_host {
            pushes[host] = 1;
            q.stats.push_messages += 1;
            q.stats.pushed_updates += updates.len() as u64;
            net.send(host, &Message::AccumPush { hop: h, updates }.encode())?;
        }
        self.send(
            self.coordinator,
            &Message::Barrier(Control::HopDone {
                hop: h,
                frontier: out.frontier,
                pushes,
            }),
        )
    }
}

/// Result of a distributed query.
#[derive(Debug)]
pub struct DistributedRun {
    pub table: ResultTable,
    pub frontier: ActiveVertexSet,
    pub accums: AccumulatorStore,
    /// Per worker.
    pub stats: Vec<WorkerStats>,
}

impl DistributedRun {
    pub fn total(&self) -> WorkerStats {
        let mut t = WorkerStats::default();
        for s in &self.stats {
            t.add(s);
        }
        t
    }
}

/// Drives queries over a set of workers. It compiles the plan and
/// projects the output with its own graph handle.
pub struct Coordinator<'a> {
    pub graph: &'a Graph,
    pub net: &'a dyn Transport,
    pub workers: usize,
    /// Longest wait for any single worker reply.
    pub timeout: Duration,
}

impl Coordinator<'_> {
    pub fn run_plan(&self, plan: &QueryPlan) -> Result<DistributedRun> {
        let compiled = compile(&self.graph.catalog, plan)?;
        let r = self.drive(plan, &compiled);
        if let Err(Error::Worker { worker, detail }) = &r {
            let abort = Message::Abort {
                worker: *worker,
                detail: detail.clone(),
            }
            .encode();
            for w in 0..self.workers {
                if w as u32 != *worker {
                    let _ = self.net.send(w, &abort);
                }
            }
        }
        r
    }

    pub fn shutdown(&self) {
        let m = Message::Barrier(Control::Shutdown).encode();
        for w in 0..self.workers {
            let _ = self.net.send(w, &m);
        }
    }

    fn broadcast(&self, msg: &Message) -> Result<()> {
        let f = msg.encode();
        for w in 0..self.workers {
            self.net.send(w, &f).map_err(|e| Error::Worker {
                worker: w as u32,
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// One control reply from every worker.
    fn gather(&self, what: &str) -> Result<Vec<Control>> {
        let mut got: Vec<Option<Control>> = (0..self.workers).map(|_| None).collect();
        let mut deadline = Instant::now() + self.timeout;
        while got.iter().any(Option::is_none) {
            let left = deadline.saturating_duration_since(Instant::now());
            let missing = got.iter().position(Option::is_none).unwrap() as u32;
            let ev = self.net.recv(left).map_err(|e| Error::Worker {
                worker: missing,
                detail: e.to_string(),
            })?;
            let Some(ev) = ev else {
                return Err(Error::Worker {
                    worker: missing,
                    detail: format!("no {what} within {:?}", self.timeout),
                });
            };
            match ev {
                Event::Closed(w) if w < self.workers => {
                    return Err(Error::Worker {
                        worker: w as u32,
                        detail: "connection closed".into(),
                    })
                }
                Event::Closed(_) => {}
                Event::Frame(from, f) => match Message::decode(&f)? {
                    Message::Abort { worker, detail } => return Err(Error::Worker { worker, detail }),
                    Message::Barrier(c) if from < self.workers && got[from].is_none() => {
                        got[from] = Some(c);
                        deadline = Instant::now() + self.timeout;
                    }
                    other => {
                        return Err(Error::Worker {
                            worker: from as u32,
                            detail: format!("unexpected message while waiting for {what}: {other:?}"),
                        })
                    }
                },
            }
        }
        Ok(got.into_iter().map(Option::unwrap).collect())
    }

    fn drive(&self, plan: &QueryPlan, compiled: &CompiledPlan) -> Result<DistributedRun> {
        self.broadcast(&Message::Barrier(Control::StartQuery { plan: plan.to_json() }))?;
        let mut frontier = ActiveVertexSet::new();
        for (w, c) in self.gather("source frontier")?.into_iter().enumerate() {
            match c {
                Control::SourceDone { frontier: f } => frontier.union_with(&f),
                other => return Err(unexpected(w, other)),
            }
        }
        for h in 0..compiled.hops.len() as u32 {
            self.broadcast(&Message::Barrier(Control::StartHop {
                hop: h,
                frontier: frontier.clone(),
            }))?;
            let mut next = ActiveVertexSet::new();
            let mut expected = vec![0u32; self.workers];
            for (w, c) in self.gather("hop completion")?.into_iter().enumerate() {
                match c {
                    Control::HopDone {
                        hop,
                        frontier: f,
                        pushes,
                    } if hop == h && pushes.len() == self.workers => {
                        next.union_with(&f);
                        for (e, p) in expected.iter_mut().zip(pushes) {
                            *e += p;
                        }
                    }
                    other => return Err(unexpected(w, other)),
                }
            }
            for (w, &e) in expected.iter().enumerate() {
                let m = Message::Barrier(Control::Commit {
                    hop: h,
                    expected_pushes: e,
                });
                self.net.send(w, &m.encode()).map_err(|e| Error::Worker {
                    worker: w as u32,
                    detail: e.to_string(),
                })?;
            }
            frontier = next;
        }
        self.broadcast(&Message::Barrier(Control::Finish))?;
        let mut accums = compiled.accums.clone();
        let mut stats = Vec::new();
        for (w, c) in self.gather("final accumulators")?.into_iter().enumerate() {
            match c {
                Control::Final {
                    accums: entries,
                    stats: s,
                } => {
                    for (slot, v, a) in entries {
                        accums.entries_mut(slot).insert(v, a);
                    }
                    stats.push(s);
                }
                other => return Err(unexpected(w, other)),
            }
        }
        let table = self.graph.project(compiled, &frontier, &accums)?;
        Ok(DistributedRun {
            table,
            frontier,
            accums,
            stats,
        })
    }
}

fn unexpected(w: usize, c: Control) -> Error {
    Error::Worker {
        worker: w as u32,
        detail: format!("unexpected reply {c:?}"),
    }
}

/// Workers on threads of this process, connected by channels.
pub struct LocalCluster {
    net: ChannelTransport,
    handles: Vec<JoinHandle<Result<WorkerExit>>>,
    workers: usize,
    pub timeout: Duration,
}

impl LocalCluster {
    /// One worker per graph; `graphs.len()` must equal `partition.workers`.
    pub fn start(graphs: Vec<Graph>, partition: Partition) -> LocalCluster {
        assert_eq!(graphs.len(), partition.workers);
        let workers = partition.workers;
        let mut mesh = channel_mesh(workers + 1);
        let net = mesh.pop().unwrap();
        let partition = Arc::new(partition);
        let handles = graphs
            .into_iter()
            .zip(mesh)
            .map(|(g, t)| {
                let p = partition.clone();
                std::thread::spawn(move || run_worker(&g, &p, &t))
            })
            .collect();
        LocalCluster {
            net,
            handles,
            workers,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn run_plan(&self, coordinator_graph: &Graph, plan: &QueryPlan) -> Result<DistributedRun> {
        Coordinator {
            graph: coordinator_graph,
            net: &self.net,
            workers: self.workers,
            timeout: self.timeout,
        }
        .run_plan(plan)
    }
}

impl Drop for LocalCluster {
    fn drop(&mut self) {
        let m = Message::Barrier(Control::Shutdown).encode();
        for w in 0..self.workers {
            let _ = self.net.send(w, &m);
        }
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

/// Multi-process cluster layout, shared by every node.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterConfig {
    pub coordinator: String,
    pub workers: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    /// Seconds to wait on a worker before aborting.
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

impl ClusterConfig {
    pub fn load(path: &std::path::Path) -> Result<ClusterConfig> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Worker addresses followed by the coordinator's.
    pub fn addrs(&self) -> Result<Vec<std::net::SocketAddr>> {
        self.workers
            .iter()
            .chain(std::iter::once(&self.coordinator))
            .map(|a| a.parse().map_err(|e| Error::Transport(format!("bad address {a}: {e}"))))
            .collect()
    }
}
