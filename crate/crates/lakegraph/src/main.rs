use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use lakegraph::bench::{self, BenchReport, CacheState, CsrBaseline};
use lakegraph::cache::CacheConfig;
use lakegraph::cluster::{self, ClusterConfig, Coordinator, TcpTransport};
use lakegraph::engine::plan::QueryPlan;
use lakegraph::engine::{EngineConfig, Graph};
use lakegraph::gen::{self, GenSpec};
use lakegraph::store::{LatencyStore, LocalStore, ObjectStore};
use lakegraph::topology::StartupConfig;
use lakegraph::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lakegraph",
    version,
    about = "Graph analytics over columnar lakehouse tables"
)]
struct Cli {
    #[command(flatten)]
    env: Env,
    /// Write the CSV report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Env {
    #[arg(long, env = "LAKEGRAPH_STORE_ROOT", default_value = "lakegraph-data", global = true)]
    store_root: PathBuf,
    /// Local directory of the disk cache tier; defaults to `<store-root>/_cache`.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Per-request latency injected in front of the store.
    #[arg(long, env = "LAKEGRAPH_LATENCY_MS", default_value_t = 0, global = true)]
    latency_ms: u64,
    #[arg(long, env = "LAKEGRAPH_THROUGHPUT_MBPS", global = true)]
    throughput_mbps: Option<f64>,
    /// Memory tier budget in bytes (K/M/G suffixes allowed).
    #[arg(long, env = "LAKEGRAPH_MEM_BUDGET", value_parser = parse_bytes, global = true)]
    mem_budget: Option<u64>,
    #[arg(long, env = "LAKEGRAPH_DISK_BUDGET", value_parser = parse_bytes, global = true)]
    disk_budget: Option<u64>,
    #[arg(long, default_value_t = 0, global = true)]
    parallelism: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic social graph into the store.
    Generate(GenArgs),
    /// Time a first and a second startup.
    Startup {
        #[arg(long, default_value_t = 8)]
        pipeline_depth: usize,
    },
    /// Run a query plan under one or all cache states.
    Query {
        #[arg(long)]
        plan: PathBuf,
        /// hot, diskcold, storecold or all.
        #[arg(long, default_value = "all")]
        mode: String,
        /// Also write the result table here.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Run a graph algorithm (pr, wcc, cdlp, bfs, lcc or all) and check it
    /// against the reference implementation.
    Algo {
        name: String,
        #[arg(long, default_value = "Person")]
        vertex_type: String,
        #[arg(long, default_value = "Knows")]
        edge_type: String,
    },
    /// One-hop evaluation through the edge-list scan and through a CSR.
    CsrCompare {
        #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01,0.001,0.0001")]
        selectivities: Vec<f64>,
        #[arg(long, default_value = "HasCreator")]
        edge_type: String,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run as one node of a multi-process cluster.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        role: String,
        /// Worker index, for the worker role.
        #[arg(long)]
        index: Option<usize>,
        /// Plan to run, for the coordinator role.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    persons: u64,
    #[arg(long, default_value_t = 5000)]
    comments: u64,
    #[arg(long, default_value_t = 50)]
    tags: u64,
    #[arg(long, default_value_t = 2)]
    attribute_width: usize,
    #[arg(long, default_value_t = 16)]
    payload_len: usize,
    /// Pick the payload length so key columns make up this share of bytes.
    #[arg(long)]
    key_ratio: Option<f64>,
    #[arg(long, default_value_t = 4)]
    files_per_table: usize,
    #[arg(long, default_value_t = 1024)]
    row_group_size: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    sort_edges: bool,
    #[arg(long, default_value_t = 64)]
    knows_max_degree: u64,
    #[arg(long, default_value_t = 0.0)]
    dangling_rate: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn parse_bytes(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    let (num, mult) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let m = match c.to_ascii_uppercase() {
                'K' => 1u64 << 10,
                'M' => 1 << 20,
                'G' => 1 << 30,
                _ => return Err(format!("unknown size suffix in {s}")),
            };
            (&s[..i], m)
        }
        _ => (s, 1),
    };
    num.trim()
        .parse::<u64>()
        .map(|n| n * mult)
        .map_err(|e| format!("bad size {s}: {e}"))
}

impl Env {
    fn store(&self) -> Result<Arc<dyn ObjectStore>> {
        let local: Arc<dyn ObjectStore> = Arc::new(LocalStore::new(&self.store_root)?);
        if self.latency_ms == 0 && self.throughput_mbps.is_none() {
            return Ok(local);
        }
        Ok(Arc::new(LatencyStore::new(
            local,
            Duration::from_millis(self.latency_ms),
            self.throughput_mbps,
        )))
    }

    fn disk(&self) -> Result<Arc<dyn ObjectStore>> {
        let dir = self.cache_dir.clone().unwrap_or_else(|| self.store_root.join("_cache"));
        Ok(Arc::new(LocalStore::new(dir)?))
    }

    fn cache(&self) -> CacheConfig {
        let mut c = CacheConfig::default();
        if let Some(b) = self.mem_budget {
            c.memory_budget = b;
        }
        if let Some(b) = self.disk_budget {
            c.disk_budget = b;
        }
        c
    }

    fn engine(&self) -> EngineConfig {
        let mut e = EngineConfig::default();
        if self.parallelism > 0 {
            e.parallelism = self.parallelism;
        }
        e
    }

    fn startup(&self) -> StartupConfig {
        let mut s = StartupConfig::default();
        if self.parallelism > 0 {
            s.parallelism = self.parallelism;
        }
        s
    }

    fn open(&self) -> Result<(Graph, Arc<dyn ObjectStore>)> {
        let store = self.store()?;
        let (g, _) = Graph::open(
            store.clone(),
            self.disk()?,
            &self.startup(),
            self.cache(),
            self.engine(),
        )?;
        Ok((g, store))
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn generate(env: &Env, a: &GenArgs) -> Result<BenchReport> {
    let mut spec = GenSpec {
        person_count: a.persons,
        comment_count: a.comments,
        tag_count: a.tags,
        attribute_width: a.attribute_width,
        payload_len: a.payload_len,
        files_per_table: a.files_per_table,
        row_group_size: a.row_group_size,
        sort_edges_by_src: a.sort_edges,
        knows_max_degree: a.knows_max_degree,
        dangling_rate: a.dangling_rate,
        seed: a.seed,
    };
    if let Some(r) = a.key_ratio {
        spec = gen::tune_key_ratio(&spec, r)?;
    }
    let store = LocalStore::new(&env.store_root)?;
    let rep = gen::generate(&store, &spec)?;
    let mut r = BenchReport::default();
    for t in &rep.tables {
        r.push("rows", &t.table, t.rows as f64, "count");
        r.push("files", &t.table, t.files as f64, "count");
        r.push("total_bytes", &t.table, t.total_bytes as f64, "bytes");
        r.push("key_bytes", &t.table, t.key_bytes as f64, "bytes");
    }
    r.push("key_ratio", "all", rep.key_ratio(), "ratio");
    r.push("catalog_bytes", "all", rep.catalog_bytes as f64, "bytes");
    r.push("payload_len", "all", spec.payload_len as f64, "chars");
    Ok(r)
}

fn run(cli: Cli) -> Result<()> {
    let env = &cli.env;
    let report = match &cli.cmd {
        Cmd::Generate(a) => generate(env, a)?,
        Cmd::Startup { pipeline_depth } => {
            let mut cfg = env.startup();
            cfg.pipeline_depth = *pipeline_depth;
            let (first, second) = bench::bench_startup(env.store()?, &cfg)?;
            bench::startup_report(&first, &second)
        }
        Cmd::Query { plan, mode, results } => {
            let plan = QueryPlan::from_json(&std::fs::read_to_string(plan)?)?;
            let states: Vec<CacheState> = if mode == "all" {
                CacheState::ALL.to_vec()
            } else {
                vec![CacheState::parse(mode)
                    .ok_or_else(|| Error::Query(format!("unknown mode {mode}: expected hot, diskcold or storecold")))?]
            };
            let (g, store) = env.open()?;
            let runs = states
                .into_iter()
                .map(|s| bench::query_in_state(&g, store.as_ref(), &plan, s))
                .collect::<Result<Vec<_>>>()?;
            if let Some(p) = results {
                std::fs::write(p, g.run_plan(&plan)?.table.to_csv())?;
            }
            bench::query_report(&runs)
        }
        Cmd::Algo {
            name,
            vertex_type,
            edge_type,
        } => {
            let (g, _) = env.open()?;
            let names: Vec<&str> = if name == "all" {
                bench::ALGORITHMS.to_vec()
            } else {
                vec![name.as_str()]
            };
            let runs = names
                .into_iter()
                .map(|n| bench::run_algorithm(&g, n, vertex_type, edge_type))
                .collect::<Result<Vec<_>>>()?;
            bench::algo_report(&runs)
        }
        Cmd::CsrCompare {
            selectivities,
            edge_type,
            repeats,
            seed,
        } => {
            let (g, _) = env.open()?;
            let csr = CsrBaseline::build(&g, edge_type)?;
            let points = bench::csr_compare(&g, &csr, edge_type, selectivities, *repeats, *seed)?;
            bench::csr_report(&points)
        }
        Cmd::Cluster {
            config,
            role,
            index,
            plan,
        } => {
            let cfg = ClusterConfig::load(config)?;
            let addrs = cfg.addrs()?;
            let (g, _) = env.open()?;
            let partition = cluster::partition_files(&g.catalog, cfg.workers.len(), cfg.seed)?;
            match role.as_str() {
                "worker" => {
                    let i = index.ok_or_else(|| Error::Query("--index is required for a worker".into()))?;
                    if i >= cfg.workers.len() {
                        return Err(Error::Query(format!("worker index {i} out of range")));
                    }
                    let net = TcpTransport::bind(i, addrs)?;
                    cluster::run_worker(&g, &partition, &net)?;
                    return Ok(());
                }
                "coordinator" => {
                    let plan = plan
                        .as_ref()
                        .ok_or_else(|| Error::Query("--plan is required for the coordinator".into()))?;
                    let plan = QueryPlan::from_json(&std::fs::read_to_string(plan)?)?;
                    let net = TcpTransport::bind(cfg.workers.len(), addrs)?;
                    let coord = Coordinator {
                        graph: &g,
                        net: &net,
                        workers: cfg.workers.len(),
                        timeout: Duration::from_secs(cfg.timeout_secs),
                    };
                    let run = coord.run_plan(&plan);
                    coord.shutdown();
                    emit(&cli.out, &run?.table.to_csv())?;
                    return Ok(());
                }
                r => {
                    return Err(Error::Query(format!(
                        "unknown role {r}: expected coordinator or worker"
                    )))
                }
            }
        }
    };
    emit(&cli.out, &report.to_csv())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
