//! Newline-delimited JSON datasets and the bundle manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sample::DyckSample;
use super::splits::{SplitBundle, SplitName, SplitStats};
use super::DyckSpec;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub tokens: Vec<u32>,
    pub text: String,
    pub structure: String,
    pub max_depth: u32,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: SplitName,
    pub file: String,
    pub size: usize,
    #[serde(flatten)]
    pub stats: SplitStats,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub spec: DyckSpec,
    pub seed: u64,
    pub splits: Vec<ManifestEntry>,
}

pub fn write_dataset(path: &Path, spec: &DyckSpec, samples: &[DyckSample]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let rec = SampleRecord {
            tokens: s.tokens.clone(),
            text: s.text(spec),
            structure: s.structure.clone(),
            max_depth: s.max_depth(),
            length: s.len(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset, recomputing derived fields from the tokens and checking
/// them against the stored ones.
pub fn read_dataset(path: &Path, spec: &DyckSpec) -> Result<Vec<DyckSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)?;
        let s = DyckSample::from_tokens(rec.tokens, spec)?;
        if s.structure != rec.structure || s.max_depth() != rec.max_depth || s.len() != rec.length {
            return Err(Error::Format(format!(
                "{}:{}: stored fields disagree with tokens",
                path.display(),
                lineno + 1
            )));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_bundle(dir: &Path, bundle: &SplitBundle) -> Result<BundleManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut splits = Vec::new();
    for (&name, data) in &bundle.datasets {
        let file = format!("{name}.ndjson");
        write_dataset(&dir.join(&file), &bundle.spec, data)?;
        splits.push(ManifestEntry {
            split: name,
            file,
            size: data.len(),
            stats: bundle.stats.get(&name).cloned().unwrap_or_default(),
        });
    }
    let manifest = BundleManifest {
        spec: bundle.spec,
        seed: bundle.seed,
        splits,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_bundle(dir: &Path) -> Result<SplitBundle> {
    let manifest = read_manifest(dir)?;
    let mut datasets = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for entry in &manifest.splits {
        let data = read_dataset(&dir.join(&entry.file), &manifest.spec)?;
        if data.len() != entry.size {
            return Err(Error::Format(format!(
                "{}: manifest says {} records, file has {}",
                entry.file,
                entry.size,
                data.len()
            )));
        }
        datasets.insert(entry.split, data);
        stats.insert(entry.split, entry.stats.clone());
    }
    Ok(SplitBundle {
        spec: manifest.spec,
        seed: manifest.seed,
        datasets,
        stats,
    })
}

/// Reads one split of a bundle directory.
pub fn read_split(dir: &Path, split: SplitName) -> Result<Vec<DyckSample>> {
    let manifest = read_manifest(dir)?;
    let entry = manifest
        .splits
        .iter()
        .find(|e| e.split == split)
        .ok_or_else(|| Error::InvalidArgument(format!("bundle at {} has no split {split}", dir.display())))?;
    read_dataset(&dir.join(&entry.file), &manifest.spec)
}
