//! Code-corpus stages: ingest, train, per-head SVD fitting and the sweep.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use proxylab::code::categorize::load_keywords;
use proxylab::code::corpus::{read_functions, read_lines, write_functions, IN_DOMAIN, TRAIN, UNSEEN_DEPTH};
use proxylab::code::sweep::{
    category_accuracy, category_accuracy_csv, fit_all_heads, gaps_csv, generalization_gaps, paired_head_rates,
    sweep_csv, sweep_fitted, CategoryAccuracy,
};
use proxylab::code::{ingest as ingest_lines, java_keywords, paired_t_test, CodeFunction, CodeSplit, IngestConfig};
use proxylab::model::checkpoint::save_checkpoint;
use proxylab::model::train::{train_from, write_curve_csv, TrainObserver};
use proxylab::model::{init_model, CurvePoint, ModelParameters};
use proxylab::simplify::{FitSample, SimplifierKind, SimplifierSpec};
use serde_json::json;

use crate::commands::{checkpoint_name, final_checkpoint, load_model, load_planned, save_all, write_rel};
use crate::output::{write_json, write_stage_manifest};
use crate::Ctx;

fn code_dir(ctx: &Ctx) -> PathBuf {
    ctx.out.join("code")
}

fn keywords(ctx: &Ctx) -> Result<HashSet<String>> {
    match &ctx.cfg.code()?.keywords {
        Some(p) => load_keywords(p).with_context(|| format!("reading keywords {}", p.display())),
        None => Ok(java_keywords()),
    }
}

pub fn ingest(ctx: &Ctx) -> Result<()> {
    let c = ctx.cfg.code()?;
    let lines = read_lines(&c.input).with_context(|| format!("reading code corpus {}", c.input.display()))?;
    let cfg = IngestConfig {
        heldout_every: c.heldout_every,
        ..IngestConfig::new(&c.train_language, c.max_depth, c.max_len)
    };
    let report = ingest_lines(&lines, &cfg);
    if report.split(TRAIN).is_empty() {
        bail!("no `{}` functions within depth {} were found in {}", cfg.train_language, c.max_depth, c.input.display());
    }
    let mut files = Vec::new();
    for (name, fs) in &report.splits {
        let rel = format!("code/{name}.ndjson");
        write_functions(&ctx.out.join(&rel), fs)?;
        files.push(rel);
    }
    let mut summary = String::from("split,count,mean_length\n");
    for s in report.summaries() {
        let _ = writeln!(summary, "{},{},{}", s.split, s.count, s.mean_length);
        eprintln!("{:>16}: {:>7} functions, mean length {:.1}", s.split, s.count, s.mean_length);
    }
    files.push(write_rel(ctx, Path::new("code/summary.csv"), &summary)?);
    write_json(
        &code_dir(ctx).join("ingest.json"),
        &json!({
            "lines": lines.len(),
            "skipped_malformed": report.skipped_malformed,
            "rejected_negative_depth": report.rejected_negative_depth,
            "dropped_too_long": report.dropped_too_long,
            "dropped_unrouted": report.dropped_unrouted,
        }),
    )?;
    files.push("code/ingest.json".into());
    write_stage_manifest(&ctx.out, "code-ingest", &files)
}

fn read_split(ctx: &Ctx, name: &str) -> Result<Vec<CodeFunction>> {
    let path = code_dir(ctx).join(format!("{name}.ndjson"));
    read_functions(&path).with_context(|| format!("reading {} (run code-ingest first)", path.display()))
}

/// Every ingested evaluation split, in name order.
fn eval_split_names(ctx: &Ctx) -> Result<Vec<String>> {
    let dir = code_dir(ctx);
    let mut names = Vec::new();
    for e in std::fs::read_dir(&dir).with_context(|| format!("listing {} (run code-ingest first)", dir.display()))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "ndjson") {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            if stem != TRAIN {
                names.push(stem);
            }
        }
    }
    names.sort();
    Ok(names)
}

fn eval_splits(ctx: &Ctx, limit: Option<usize>) -> Result<Vec<CodeSplit>> {
    let kw = keywords(ctx)?;
    eval_split_names(ctx)?
        .into_iter()
        .map(|name| {
            let fs = read_split(ctx, &name)?;
            let n = limit.unwrap_or(fs.len()).min(fs.len());
            Ok(CodeSplit::from_functions(&name, &fs[..n], &kw))
        })
        .collect()
}

fn pooled(rows: &[CategoryAccuracy]) -> impl Iterator<Item = &CategoryAccuracy> {
    rows.iter().filter(|r| r.category.is_none() && r.total > 0)
}

struct CodeObserver {
    ckpt_dir: PathBuf,
    seed: u64,
    splits: Vec<CodeSplit>,
    written: Vec<String>,
    started: Instant,
}

impl TrainObserver for CodeObserver {
    fn on_step(&mut self, step: usize, loss: f64) {
        if step.is_multiple_of(100) {
            eprintln!("step {step:>7}  loss {loss:.5}  ({:.0}s)", self.started.elapsed().as_secs_f64());
        }
    }

    fn evaluate(&mut self, step: usize, params: &ModelParameters) -> proxylab::Result<Vec<CurvePoint>> {
        let rows = category_accuracy(params, &self.splits)?;
        Ok(pooled(&rows)
            .map(|r| {
                let value = r.correct as f64 / r.total as f64;
                eprintln!("step {step:>7}  {:>16} accuracy {value:.4}", r.split);
                CurvePoint {
                    step,
                    split: r.split.clone(),
                    metric: "next_char_accuracy".into(),
                    value,
                }
            })
            .collect())
    }

    fn checkpoint(&mut self, step: usize, params: &ModelParameters, diagnostic: bool) -> proxylab::Result<()> {
        let name = checkpoint_name(step, diagnostic);
        save_checkpoint(&self.ckpt_dir.join(&name), params, self.seed, step)?;
        self.written.push(format!("checkpoints/{name}"));
        Ok(())
    }
}

pub fn train(ctx: &Ctx) -> Result<()> {
    let model_cfg = ctx.cfg.model_config()?;
    let tc = ctx.cfg.train_config();
    let max_len = model_cfg.max_len;
    let data: Vec<Vec<u32>> = read_split(ctx, TRAIN)?
        .iter()
        .map(|f| proxylab::code::CharVocab::encode_sequence(&f.text))
        .filter(|s| s.len() <= max_len)
        .collect();
    if data.is_empty() {
        bail!("no training function fits the model context of {max_len} tokens");
    }
    let mut obs = CodeObserver {
        ckpt_dir: ctx.out.join("checkpoints"),
        seed: tc.seed,
        splits: eval_splits(ctx, Some(tc.eval_sample))?,
        written: Vec::new(),
        started: Instant::now(),
    };
    let params = init_model(&model_cfg, tc.seed)?;
    let outcome = train_from(params, &tc, &data, &mut obs)?;
    save_checkpoint(&final_checkpoint(ctx), &outcome.params, tc.seed, tc.steps)?;
    write_curve_csv(&ctx.out.join("curve.csv"), &outcome.curve)?;
    let mut files = obs.written;
    files.push("checkpoints/final.ckpt".into());
    files.push("curve.csv".into());
    write_stage_manifest(&ctx.out, "train", &files)
}

fn fit_data(ctx: &Ctx) -> Result<(Vec<Vec<u32>>, FitSample)> {
    let sweep = ctx.cfg.sweep()?;
    let train = read_split(ctx, TRAIN)?;
    let n = sweep.fit_sequences.min(train.len());
    let seqs = train[..n]
        .iter()
        .map(|f| proxylab::code::CharVocab::encode_sequence(&f.text))
        .collect();
    Ok((
        seqs,
        FitSample {
            dataset: TRAIN.into(),
            sequences: n,
            seed: ctx.cfg.seed,
        },
    ))
}

pub fn fit_simplifier(ctx: &Ctx) -> Result<()> {
    let sweep = ctx.cfg.sweep()?;
    if sweep.svd_ranks.is_empty() {
        bail!("code sweeps need at least one entry in sweep.svd_ranks");
    }
    let params = load_model(ctx)?;
    let (seqs, fs) = fit_data(ctx)?;
    let fitted = fit_all_heads(&params, &sweep.svd_ranks, &seqs, &fs)?;
    save_all(ctx, &fitted)
}

pub fn evaluate(ctx: &Ctx) -> Result<()> {
    let sweep = ctx.cfg.sweep()?;
    let params = load_model(ctx)?;
    let (_, fs) = fit_data(ctx)?;
    let c = &params.config;
    let specs: Vec<SimplifierSpec> = (0..c.layers)
        .flat_map(|layer| (0..c.heads).map(move |head| (layer, head)))
        .flat_map(|(layer, head)| {
            let fs = fs.clone();
            sweep.svd_ranks.iter().map(move |&rank| SimplifierSpec {
                layer,
                head,
                kind: SimplifierKind::Svd { rank },
                fit: fs.clone(),
            })
        })
        .collect();
    let fitted = load_planned(ctx, &specs)?;
    let splits = eval_splits(ctx, sweep.eval_limit)?;
    if !splits.iter().any(|s| s.name == IN_DOMAIN) {
        bail!("no `{IN_DOMAIN}` split was ingested; set code.heldout_every or tag partitions");
    }
    let records = sweep_fitted(&params, &fitted, &splits)?;
    let languages: Vec<&str> = splits
        .iter()
        .map(|s| s.name.as_str())
        .filter(|n| *n != IN_DOMAIN && *n != UNSEEN_DEPTH)
        .collect();
    let depth: Vec<&str> = splits
        .iter()
        .map(|s| s.name.as_str())
        .filter(|n| *n == UNSEEN_DEPTH)
        .collect();
    let mut files = vec![write_rel(ctx, Path::new("code_sweep.csv"), &sweep_csv(&records))?];
    let mut tests = String::from("comparison,rank,correct_only,pairing,n,mean_difference,t,p_value,degenerate\n");
    for (label, outs) in [("languages", &languages), ("depth", &depth)] {
        if outs.is_empty() {
            continue;
        }
        let gaps = generalization_gaps(&records, IN_DOMAIN, outs);
        files.push(write_rel(ctx, Path::new(&format!("gaps_{label}.csv")), &gaps_csv(&gaps))?);
        for &rank in &sweep.svd_ranks {
            for correct_only in [false, true] {
                let (a, b) = paired_head_rates(&records, rank, correct_only, IN_DOMAIN, outs);
                // pairs heads of one model; a seed-paired test needs several trained models
                match paired_t_test(&a, &b) {
                    Ok(t) => {
                        let _ = writeln!(
                            tests,
                            "{label},{rank},{correct_only},heads,{},{},{},{},{}",
                            t.n, t.mean_difference, t.t, t.p_value, t.degenerate
                        );
                    }
                    Err(e) => eprintln!("t-test skipped for {label} rank {rank}: {e}"),
                }
            }
        }
    }
    files.push(write_rel(ctx, Path::new("t_tests.csv"), &tests)?);
    let acc = category_accuracy(&params, &splits)?;
    files.push(write_rel(ctx, Path::new("category_accuracy.csv"), &category_accuracy_csv(&acc))?);
    write_stage_manifest(&ctx.out, "evaluate", &files)
}
