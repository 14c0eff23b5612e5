//! Deterministic output files: no timestamps, stable key order.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn write_resolved_config(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    // the output directory itself is left out so relocated runs compare equal
    let mut c = cfg.clone();
    c.out_dir = None;
    write_json(
        &out.join("resolved_config.json"),
        &json!({ "version": proxylab::VERSION, "config": c }),
    )
}

/// Records what a stage produced, relative to the output directory.
pub fn write_stage_manifest(out: &Path, stage: &str, files: &[String]) -> Result<()> {
    write_json(
        &out.join(format!("{stage}.manifest.json")),
        &json!({
            "version": proxylab::VERSION,
            "stage": stage,
            "resolved_config": "resolved_config.json",
            "outputs": files,
        }),
    )
}
