mod common;

use std::collections::HashMap;
use std::sync::Arc;

use lakegraph::catalog::{Catalog, DataFile, TableManifest};
use lakegraph::gen::{self, GenSpec};
use lakegraph::lgc;
use lakegraph::store::{MemoryStore, ObjectStore};
use lakegraph::topology::{self, RawKey, StartupConfig, Topology};
use lakegraph_core::{Value, VertexId};

fn dataset(seed: u64, dangling: f64) -> Arc<dyn ObjectStore> {
    let store: Arc<dyn ObjectStore> = Arc::new(MemoryStore::new());
    let spec = GenSpec {
        dangling_rate: dangling,
        ..common::micro_spec(seed)
    };
    gen::generate(store.as_ref(), &spec).unwrap();
    store
}

fn start(store: &Arc<dyn ObjectStore>, cfg: &StartupConfig) -> (Catalog, Topology, topology::StartupReport) {
    let (catalog, _) = Catalog::open(store.clone()).unwrap();
    let (topo, report) = topology::startup(&catalog, cfg).unwrap();
    (catalog, topo, report)
}

fn column(store: &dyn ObjectStore, catalog: &Catalog, file: u32, name: &str) -> Vec<Value> {
    let path = &catalog.registry.entry(file).unwrap().path;
    let footer = lgc::read_footer(store, path).unwrap();
    lgc::read_column(store, path, &footer, name).unwrap()
}

fn key_of(
    store: &dyn ObjectStore,
    catalog: &Catalog,
    topo: &Topology,
    v: VertexId,
    cache: &mut HashMap<u32, Vec<Value>>,
) -> RawKey {
    if v.is_dangling() {
        return topo.dangling.key_of(v.row()).unwrap().1.clone();
    }
    let keys = cache.entry(v.file_id()).or_insert_with(|| {
        let table = &catalog.registry.entry(v.file_id()).unwrap().table;
        let key = &catalog.schema.vertex_for_table(table).unwrap().key;
        column(store, catalog, v.file_id(), key)
    });
    RawKey::from_value(keys[v.row() as usize].clone()).unwrap()
}

fn entries(topo: &Topology) -> Vec<(u32, Vec<(VertexId, VertexId)>)> {
    topo.lists.iter().map(|(f, l)| (*f, l.entries.clone())).collect()
}

#[test]
fn entries_resolve_back_to_raw_keys_in_row_order() {
    for seed in 0..4 {
        let store = dataset(seed, 0.25);
        let (catalog, topo, _) = start(&store, &StartupConfig::default());
        let mut vkeys = HashMap::new();
        let mut dangling = 0;
        for (&file, list) in &topo.lists {
            let et = catalog.schema.edge(&list.edge_type).unwrap();
            let src = column(store.as_ref(), &catalog, file, &et.src_key);
            let tgt = column(store.as_ref(), &catalog, file, &et.tgt_key);
            assert_eq!(list.entries.len(), src.len());
            for (i, &(s, t)) in list.entries.iter().enumerate() {
                dangling += t.is_dangling() as usize;
                assert_eq!(
                    key_of(store.as_ref(), &catalog, &topo, s, &mut vkeys),
                    RawKey::from_value(src[i].clone()).unwrap()
                );
                assert_eq!(
                    key_of(store.as_ref(), &catalog, &topo, t, &mut vkeys),
                    RawKey::from_value(tgt[i].clone()).unwrap()
                );
            }
        }
        assert!(dangling > 0, "seed {seed} produced no dangling targets");
    }
}

#[test]
fn restart_loads_every_list_unchanged() {
    let store = dataset(11, 0.1);
    let (_, first, r1) = start(&store, &StartupConfig::default());
    assert!(r1.loaded.is_empty());
    let (_, second, r2) = start(&store, &StartupConfig::default());
    assert!(r2.rebuilt.is_empty());
    assert_eq!(r2.loaded.len(), first.lists.len());
    assert_eq!(entries(&first), entries(&second));
    assert_eq!(first.dangling.len(), second.dangling.len());
    for row in 0..first.dangling.len() as u32 {
        assert_eq!(first.dangling.key_of(row), second.dangling.key_of(row));
    }
}

#[test]
fn restart_restores_dangling_vertices() {
    let store = dataset(14, 0.3);
    let fresh = common::open(store.clone());
    let restarted = common::open(store.clone());
    assert!(!fresh.topology.dangling.is_empty());
    assert_eq!(
        fresh.all_vertices("Person").unwrap(),
        restarted.all_vertices("Person").unwrap()
    );
    let plan = common::plan_suite(1);
    assert_eq!(
        fresh.run_plan(&plan).unwrap().table,
        restarted.run_plan(&plan).unwrap().table
    );
}

#[test]
fn stale_dangling_image_forces_a_rebuild() {
    let store = dataset(15, 0.3);
    let (_, first, _) = start(&store, &StartupConfig::default());
    store.delete(topology::DANGLING_PATH).unwrap();
    let (_, second, report) = start(&store, &StartupConfig::default());
    assert!(!report.rebuilt.is_empty());
    assert_eq!(entries(&first), entries(&second));
    assert_eq!(first.dangling.len(), second.dangling.len());
}

#[test]
fn vertex_table_change_rebuilds_only_dependent_lists() {
    let store = dataset(12, 0.0);
    let (catalog, before, _) = start(&store, &StartupConfig::default());
    // A new tag file: its keys resolve nothing that was dangling, but every
    // list keyed against tags must be rebuilt against the new mapping.
    let first = catalog.registry.files_of("tag")[0];
    let footer = lgc::read_footer(store.as_ref(), &catalog.registry.entry(first).unwrap().path).unwrap();
    let rows = (0..5).map(|i| {
        footer
            .schema
            .iter()
            .map(|c| match c.name.as_str() {
                "id" => Value::Str(format!("extra-{i}")),
                _ => Value::Str(format!("v{i}")),
            })
            .collect()
    });
    let encodings = vec![lakegraph_core::Encoding::Plain; footer.schema.len()];
    lgc::write_table(
        store.as_ref(),
        "tables/tag/extra.lgc",
        &footer.schema,
        rows,
        4,
        &encodings,
    )
    .unwrap();
    TableManifest::add_file(
        store.as_ref(),
        "tag",
        DataFile {
            path: "tables/tag/extra.lgc".into(),
            row_count: 5,
        },
    )
    .unwrap();
    let (_, after, report) = start(&store, &StartupConfig::default());
    let has_tag: Vec<u32> = catalog.registry.files_of("has_tag");
    let mut rebuilt = report.rebuilt.clone();
    rebuilt.sort();
    assert_eq!(rebuilt, has_tag);
    assert_eq!(report.loaded.len(), before.lists.len() - has_tag.len());
    assert_eq!(entries(&before), entries(&after));
}

#[test]
fn startup_settings_do_not_change_the_topology() {
    let store = dataset(13, 0.2);
    let reference = entries(
        &start(
            &store,
            &StartupConfig {
                materialize: false,
                reuse_materialized: false,
                ..StartupConfig::default()
            },
        )
        .1,
    );
    for (depth, par) in [(1, 1), (2, 3), (8, 1), (16, 8)] {
        let cfg = StartupConfig {
            pipeline_depth: depth,
            parallelism: par,
            materialize: false,
            reuse_materialized: false,
        };
        assert_eq!(
            entries(&start(&store, &cfg).1),
            reference,
            "depth {depth} parallelism {par}"
        );
    }
}
