//! Command-line runner and HTTP/WebSocket control service for the site simulator.

pub mod server;

use std::fs;
use std::path::Path;

use anyhow::Context;
use yardmaster_core::sim::SiteConfig;

/// Fixture text from a JSON-lines file, or from every `.jsonl` file of a
/// directory in name order.
pub fn read_fixtures(path: &Path) -> anyhow::Result<String> {
    if !path.is_dir() {
        return fs::read_to_string(path).with_context(|| format!("reading {}", path.display()));
    }
    let mut files: Vec<_> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    anyhow::ensure!(!files.is_empty(), "no .jsonl fixtures in {}", path.display());
    let mut text = String::new();
    for f in files {
        let body = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        text.push_str(&body);
        if !text.ends_with('\n') {
            text.push('\n');
        }
    }
    Ok(text)
}

/// Site configuration from a JSON file; missing fields keep their defaults.
pub fn read_site_config(path: &Path) -> anyhow::Result<SiteConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
