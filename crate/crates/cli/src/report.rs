//! SVG rendering from the CSV outputs of earlier stages.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use proxylab::code::inspect::uniform_baseline;
use proxylab::code::inspect_head;
use proxylab::faithfulness::report::read_metric_csv;
use proxylab::faithfulness::svg::{BarChart, Heatmap, LineChart, Series};
use proxylab::model::ModelParameters;

use crate::commands::write_rel;
use crate::output::write_stage_manifest;
use crate::Ctx;

/// Header-keyed rows of a plain CSV file.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .with_context(|| format!("{} is empty", path.display()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column `{name}`"))
    }

    fn num(&self, row: &[String], name: &str) -> Result<f64> {
        let v = &row[self.col(name)?];
        v.parse().with_context(|| format!("column `{name}`: `{v}` is not a number"))
    }
}

/// Sorted `*.csv` files in `dir` whose names start with `prefix`.
fn csv_files(dir: &Path, prefix: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for e in fs::read_dir(dir)? {
        let name = e?.file_name().to_string_lossy().into_owned();
        if name.starts_with(prefix) && name.ends_with(".csv") {
            out.push(name);
        }
    }
    out.sort();
    Ok(out)
}

pub fn render(ctx: &Ctx) -> Result<()> {
    let mut files = Vec::new();
    let faith = ctx.out.join("faithfulness.csv");
    if faith.exists() {
        files.extend(faithfulness_charts(ctx, &faith)?);
    }
    let bd = ctx.out.join("breakdowns");
    for name in csv_files(&bd, "grid_")? {
        let t = Table::read(&bd.join(&name))?;
        let mut cells = Vec::new();
        for r in &t.rows {
            cells.push((
                t.num(r, "token_depth")? as i64,
                t.num(r, "max_depth")? as i64,
                t.num(r, "accuracy")?,
                t.num(r, "total")? as usize,
            ));
        }
        let stem = name.trim_end_matches(".csv");
        let chart = Heatmap {
            title: format!("closing accuracy: {stem}"),
            x_label: "depth of the closed bracket".into(),
            y_label: "max depth of the sentence".into(),
            cells,
        };
        files.push(write_rel(ctx, Path::new(&format!("figures/{stem}.svg")), &chart.render())?);
    }
    for name in csv_files(&bd, "clusters_")? {
        let t = Table::read(&bd.join(&name))?;
        let (role, cluster) = (t.col("role")?, t.col("cluster")?);
        let mut sizes: BTreeMap<i64, f64> = BTreeMap::new();
        for r in t.rows.iter().filter(|r| r[role] == "query") {
            *sizes.entry(r[cluster].parse()?).or_default() += t.num(r, "count")?;
        }
        let mut cells = Vec::new();
        for r in t.rows.iter().filter(|r| r[role] == "query") {
            let c: i64 = r[cluster].parse()?;
            let n = t.num(r, "count")?;
            cells.push((c, t.num(r, "depth")? as i64, n / sizes[&c], n as usize));
        }
        let stem = name.trim_end_matches(".csv");
        let chart = Heatmap {
            title: format!("query depth share per cluster: {stem}"),
            x_label: "query cluster".into(),
            y_label: "depth".into(),
            cells,
        };
        files.push(write_rel(ctx, Path::new(&format!("figures/{stem}.svg")), &chart.render())?);
    }
    for name in csv_files(&ctx.out, "gaps_")? {
        files.push(gap_chart(ctx, &name)?);
    }
    if files.is_empty() {
        bail!("nothing to render in {}: run evaluate first", ctx.out.display());
    }
    write_stage_manifest(&ctx.out, "report", &files)
}

fn faithfulness_charts(ctx: &Ctx, path: &Path) -> Result<Vec<String>> {
    let rows = read_metric_csv(path)?;
    let mut files = Vec::new();
    let kinds: BTreeSet<&str> = rows.iter().map(|r| r.simplifier.as_str()).collect();
    for kind in kinds {
        if kind == "one_hot" {
            let splits: Vec<String> = rows
                .iter()
                .filter(|r| r.simplifier == kind)
                .map(|r| r.split.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let series = ["same_prediction", "accuracy_original", "accuracy_simplified"]
                .iter()
                .map(|m| {
                    let vals = splits
                        .iter()
                        .map(|s| {
                            rows.iter()
                                .find(|r| r.simplifier == kind && &r.metric == m && &r.split == s)
                                .map_or(0.0, |r| r.value)
                        })
                        .collect();
                    (m.to_string(), vals)
                })
                .collect();
            let chart = BarChart {
                title: "one-hot attention".into(),
                x_label: "split".into(),
                y_label: "rate".into(),
                categories: splits,
                series,
            };
            files.push(write_rel(ctx, Path::new("figures/one_hot.svg"), &chart.render())?);
            continue;
        }
        for metric in ["same_prediction", "mean_jsd"] {
            let mut by_split: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.simplifier == kind && r.metric == metric) {
                by_split.entry(&r.split).or_default().push((r.strength as f64, r.value));
            }
            let series = by_split
                .into_iter()
                .map(|(name, mut points)| {
                    points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Series {
                        name: name.to_string(),
                        points,
                    }
                })
                .collect();
            let chart = LineChart {
                title: format!("{kind}: {metric}"),
                x_label: if kind == "svd" { "rank" } else { "clusters" }.into(),
                y_label: metric.into(),
                log2_x: true,
                series,
            };
            files.push(write_rel(ctx, Path::new(&format!("figures/{kind}_{metric}.svg")), &chart.render())?);
        }
    }
    Ok(files)
}

/// Pooled, unfiltered in-domain minus out-of-domain agreement per head.
fn gap_chart(ctx: &Ctx, name: &str) -> Result<String> {
    let t = Table::read(&ctx.out.join(name))?;
    let (cat, co) = (t.col("category")?, t.col("correct_only")?);
    let mut heads = BTreeSet::new();
    let mut gaps: BTreeMap<u64, BTreeMap<(u64, u64), f64>> = BTreeMap::new();
    for r in t.rows.iter().filter(|r| r[cat] == "all" && r[co] == "false") {
        let head = (t.num(r, "layer")? as u64, t.num(r, "head")? as u64);
        heads.insert(head);
        gaps.entry(t.num(r, "rank")? as u64).or_default().insert(head, t.num(r, "gap")?);
    }
    let series = gaps
        .into_iter()
        .map(|(rank, by_head)| {
            let vals = heads.iter().map(|h| by_head.get(h).copied().unwrap_or(0.0)).collect();
            (format!("rank {rank}"), vals)
        })
        .collect();
    let stem = name.trim_end_matches(".csv");
    let chart = BarChart {
        title: format!("agreement gap: {}", stem.trim_start_matches("gaps_")),
        x_label: "head".into(),
        y_label: "in-domain minus out-of-domain".into(),
        categories: heads.iter().map(|(l, h)| format!("l{l}h{h}")).collect(),
        series,
    };
    write_rel(ctx, Path::new(&format!("figures/{stem}.svg")), &chart.render())
}

/// Head scores for every head, plus an attention heatmap and matrix per
/// head and text, cropped to the first `first_n` positions.
pub fn inspect_outputs(
    ctx: &Ctx,
    params: &ModelParameters,
    sequences: &[Vec<u32>],
    labels: &[Vec<String>],
    first_n: usize,
) -> Result<Vec<String>> {
    let (base_prev, base_ind) = uniform_baseline(sequences);
    let mut scores =
        String::from("layer,head,previous_token,induction,uniform_previous_token,uniform_induction\n");
    let mut files = Vec::new();
    for layer in 0..params.config.layers {
        for head in 0..params.config.heads {
            let ins = inspect_head(params, layer, head, sequences)?;
            let _ = writeln!(
                scores,
                "{layer},{head},{},{},{base_prev},{base_ind}",
                ins.previous_token_score, ins.induction_score
            );
            for (i, att) in ins.attention.iter().enumerate() {
                let n = att.rows().min(first_n);
                let mut csv = String::from("query,key,query_token,key_token,weight\n");
                let mut cells = Vec::new();
                for q in 0..n {
                    for k in 0..=q {
                        let w = att.get(q, k) as f64;
                        let _ = writeln!(csv, "{q},{k},{},{},{w}", labels[i][q], labels[i][k]);
                        cells.push((k as i64, q as i64, w, 1));
                    }
                }
                let stem = format!("inspect/l{layer}h{head}_text{i}");
                files.push(write_rel(ctx, Path::new(&format!("{stem}.csv")), &csv)?);
                let chart = Heatmap {
                    title: format!("layer {layer} head {head}, text {i}"),
                    x_label: "key position".into(),
                    y_label: "query position".into(),
                    cells,
                };
                files.push(write_rel(ctx, Path::new(&format!("{stem}.svg")), &chart.render())?);
            }
        }
    }
    files.push(write_rel(ctx, Path::new("inspect/head_scores.csv"), &scores)?);
    Ok(files)
}
