//! Rewrites the shipped fixtures from their generators.
//!
//! cargo run -p yardmaster-core --example regen_fixtures

use std::path::Path;

use yardmaster_core::comms::vectors::conformance_vectors_jsonl;
use yardmaster_core::orchestrator::fixture::scenario_jsonl;
use yardmaster_core::sim::SiteConfig;

fn main() -> std::io::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::write(root.join("scenario/scenario.jsonl"), scenario_jsonl(&SiteConfig::default()))?;
    std::fs::write(root.join("conformance_vectors.jsonl"), conformance_vectors_jsonl())?;
    let site = serde_json::to_string_pretty(&SiteConfig::default()).expect("config serializes");
    std::fs::write(root.join("site.json"), site + "\n")?;
    Ok(())
}
