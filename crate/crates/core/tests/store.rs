use yardmaster_core::orchestrator::fixture::scenario_jsonl;
use yardmaster_core::sim::SiteConfig;
use yardmaster_core::store::{ParamStore, ParamType, ParameterRecord, PARAMETERS_FILE, TASKS_FILE};

#[test]
fn reopening_a_store_restores_its_contents() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ParamStore::open(dir.path()).unwrap();
    store.load_fixture_str(&scenario_jsonl(&SiteConfig::default())).unwrap();
    let rec = ParameterRecord::new("zx200", ParamType::Dynamic, "Scratch", serde_json::json!({ "x": 1.5 }));
    store.upsert_parameter(rec).unwrap();
    assert!(dir.path().join(TASKS_FILE).exists() && dir.path().join(PARAMETERS_FILE).exists());

    let reopened = ParamStore::open(dir.path()).unwrap();
    assert_eq!(reopened.dump(), store.dump());
    assert_eq!(reopened.query_parameter("zx200", "Scratch").unwrap().f64_field("x"), Some(1.5));
}

#[test]
fn reloading_a_dump_is_a_no_op() {
    let mut store = ParamStore::in_memory();
    store.load_fixture_str(&scenario_jsonl(&SiteConfig::default())).unwrap();
    let first = store.dump();
    store.load_fixture_str(&first).unwrap();
    assert_eq!(store.dump(), first);
}

#[test]
fn new_records_do_not_reuse_loaded_ids() {
    let mut store = ParamStore::in_memory();
    store.load_fixture_str(&scenario_jsonl(&SiteConfig::default())).unwrap();
    let max = store.parameters().map(|p| p.id).chain(store.tasks().map(|t| t.id)).max().unwrap();
    store.upsert_parameter(ParameterRecord::new("ic120", ParamType::Dynamic, "Fresh", serde_json::Value::Null)).unwrap();
    assert_eq!(store.query_parameter("ic120", "Fresh").unwrap().id, max + 1);
}
