//! CSV tables for records and breakdowns. Every table is plain
//! comma-separated text with a header row; no field contains a comma.

use std::fmt::Write as _;
use std::path::Path;

use super::breakdown::{AttentionErrorProfile, ClusterDepthProfile, DepthErrorGrid, ProjectionTable};
use super::FaithfulnessRecord;
use crate::error::{Error, Result};

pub const METRIC_HEADER: &str = "split,simplifier,strength,metric,value,n,layer,head";

/// One line of the long-format metric table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub split: String,
    pub simplifier: String,
    pub strength: usize,
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub layer: usize,
    pub head: usize,
}

impl FaithfulnessRecord {
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut metrics = vec![
            ("mean_jsd", self.mean_jsd, self.n_rows),
            ("mean_jsd_eval", self.mean_jsd_eval, self.n_eval_positions),
            ("same_prediction", self.same_prediction_rate, self.n_eval_positions),
            ("same_prediction_full", self.same_prediction_full, self.n_rows),
        ];
        if let Some(v) = self.same_prediction_when_correct {
            metrics.push(("same_prediction_when_correct", v, self.n_original_correct));
        }
        metrics.push(("accuracy_original", self.accuracy_original, self.n_eval_positions));
        metrics.push(("accuracy_simplified", self.accuracy_simplified, self.n_eval_positions));
        metrics
            .into_iter()
            .map(|(m, value, n)| MetricRow {
                split: self.split.clone(),
                simplifier: self.simplifier.clone(),
                strength: self.strength,
                metric: m.to_string(),
                value,
                n,
                layer: self.layer,
                head: self.head,
            })
            .collect()
    }
}

pub fn metric_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRIC_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.split, r.simplifier, r.strength, r.metric, r.value, r.n, r.layer, r.head
        );
    }
    out
}

pub fn records_csv(records: &[FaithfulnessRecord]) -> String {
    let rows: Vec<MetricRow> = records.iter().flat_map(|r| r.metric_rows()).collect();
    metric_csv(&rows)
}

/// One line per record.
pub fn summary_csv(records: &[FaithfulnessRecord]) -> String {
    let mut out = String::from(
        "split,simplifier,strength,layer,head,mean_jsd,mean_jsd_eval,same_prediction,same_prediction_full,\
same_prediction_when_correct,accuracy_original,accuracy_simplified,n_eval_positions,n_rows\n",
    );
    for r in records {
        let when = r.same_prediction_when_correct.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{when},{},{},{},{}",
            r.split,
            r.simplifier,
            r.strength,
            r.layer,
            r.head,
            r.mean_jsd,
            r.mean_jsd_eval,
            r.same_prediction_rate,
            r.same_prediction_full,
            r.accuracy_original,
            r.accuracy_simplified,
            r.n_eval_positions,
            r.n_rows
        );
    }
    out
}

pub fn parse_metric_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRIC_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "metric table header should be `{METRIC_HEADER}`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let bad = |line: usize, what: &str| Error::Format(format!("metric table line {}: {what}", line + 2));
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(bad(i, "expected 8 fields"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad(i, "bad integer"));
            Ok(MetricRow {
                split: f[0].to_string(),
                simplifier: f[1].to_string(),
                strength: int(f[2])?,
                metric: f[3].to_string(),
                value: f[4].parse().map_err(|_| bad(i, "bad value"))?,
                n: int(f[5])?,
                layer: int(f[6])?,
                head: int(f[7])?,
            })
        })
        .collect()
}

pub fn read_metric_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metric_csv(&text)
}

pub fn grid_csv(grid: &DepthErrorGrid) -> String {
    let mut out = String::from("token_depth,max_depth,correct,total,accuracy\n");
    for (&(d, m), &(c, t)) in &grid.cells {
        let _ = writeln!(out, "{d},{m},{c},{t},{}", c as f64 / t as f64);
    }
    out
}

pub fn error_profile_csv(profile: &AttentionErrorProfile) -> String {
    let mut out = String::from("kind,a,b,count\n");
    for (&(t, a), &c) in &profile.depth_pairs {
        let _ = writeln!(out, "depth,{t},{a},{c}");
    }
    for (&o, &c) in &profile.offsets {
        let _ = writeln!(out, "offset,{o},,{c}");
    }
    out
}

pub fn projection_csv(table: &ProjectionTable) -> String {
    let mut out = String::from("sequence,position,role,token,token_depth,bracket_type");
    for c in &table.components {
        let _ = write!(out, ",c{c}");
    }
    out.push('\n');
    for r in &table.rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.sequence,
            r.position,
            r.role.as_str(),
            r.token,
            r.token_depth,
            r.bracket_type
        );
        for v in &r.coords {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn cluster_csv(profile: &ClusterDepthProfile) -> String {
    let mut out = String::from("role,cluster,depth,count,nearest_key\n");
    for (q, h) in profile.query_depths.iter().enumerate() {
        for (d, c) in h {
            let _ = writeln!(out, "query,{q},{d},{c},{}", profile.nearest_key[q]);
        }
    }
    for (k, h) in profile.key_depths.iter().enumerate() {
        for (d, c) in h {
            let _ = writeln!(out, "key,{k},{d},{c},");
        }
    }
    out
}
