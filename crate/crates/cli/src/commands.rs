use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use proxylab::dyck::io::{read_bundle, write_bundle};
use proxylab::dyck::vocab::parse as parse_brackets;
use proxylab::dyck::{build_splits, DyckSample, SplitBundle, SplitName};
use proxylab::faithfulness::report::{
    cluster_csv, error_profile_csv, grid_csv, projection_csv, records_csv, summary_csv,
};
use proxylab::faithfulness::{
    attention_error_profile, cluster_depth_profile, depth_error_grid, evaluate_faithfulness, export_projection,
    EvalSet, Unchanged,
};
use proxylab::model::checkpoint::{load_checkpoint, save_checkpoint};
use proxylab::model::eval::closing_bracket_accuracy;
use proxylab::model::train::{train_from, write_curve_csv, TrainObserver};
use proxylab::model::{init_model, CurvePoint, ModelParameters};
use proxylab::simplify::{
    fit, fit_svd_ranks, load_fitted, save_fitted, FitSample, FittedSimplifier, FittedState, SimplifiedRunner,
    SimplifierKind, SimplifierSpec,
};

use crate::config::SweepSection;
use crate::output::{write_stage_manifest, write_text};
use crate::Ctx;

pub fn data_dir(ctx: &Ctx) -> PathBuf {
    ctx.out.join("data")
}

pub fn final_checkpoint(ctx: &Ctx) -> PathBuf {
    ctx.out.join("checkpoints").join("final.ckpt")
}

pub fn load_bundle(ctx: &Ctx) -> Result<SplitBundle> {
    let dir = data_dir(ctx);
    read_bundle(&dir).with_context(|| format!("reading the Dyck bundle in {} (run gen-data first)", dir.display()))
}

pub fn load_model(ctx: &Ctx) -> Result<ModelParameters> {
    let path = final_checkpoint(ctx);
    let (params, _) = load_checkpoint(&path).with_context(|| format!("loading {} (run train first)", path.display()))?;
    Ok(params)
}

/// Dyck unless the config only describes a code corpus.
pub fn is_code_task(ctx: &Ctx) -> bool {
    ctx.cfg.code.is_some() && ctx.cfg.dyck.is_none()
}

pub fn gen_data(ctx: &Ctx) -> Result<()> {
    let d = ctx.cfg.dyck()?;
    let bundle = build_splits(&d.spec, &d.sizes, ctx.cfg.seed)?;
    let violations = bundle.integrity_violations();
    if !violations.is_empty() {
        bail!("split integrity violated: {}", violations.join("; "));
    }
    let manifest = write_bundle(&data_dir(ctx), &bundle)?;
    let mut files = vec!["data/manifest.json".to_string()];
    files.extend(manifest.splits.iter().map(|e| format!("data/{}", e.file)));
    for e in &manifest.splits {
        eprintln!("{:>20}: {:>7} sentences, {:>9} attempts", e.split.as_str(), e.size, e.stats.attempts);
    }
    write_stage_manifest(&ctx.out, "gen-data", &files)
}

struct CliObserver<'a> {
    ckpt_dir: PathBuf,
    seed: u64,
    eval_sets: Vec<(SplitName, &'a [DyckSample])>,
    k: u32,
    written: Vec<String>,
    started: Instant,
}

impl TrainObserver for CliObserver<'_> {
    fn on_step(&mut self, step: usize, loss: f64) {
        if step.is_multiple_of(100) {
            eprintln!("step {step:>7}  loss {loss:.5}  ({:.0}s)", self.started.elapsed().as_secs_f64());
        }
    }

    fn evaluate(&mut self, step: usize, params: &ModelParameters) -> proxylab::Result<Vec<CurvePoint>> {
        let mut out = Vec::new();
        for (name, data) in &self.eval_sets {
            match closing_bracket_accuracy(params, data, self.k, proxylab::dyck::DEFAULT_MIN_DISTANCE) {
                Ok(acc) => {
                    eprintln!("step {step:>7}  {name:>20} accuracy {acc:.4}");
                    out.push(CurvePoint {
                        step,
                        split: name.to_string(),
                        metric: "closing_accuracy".into(),
                        value: acc,
                    });
                }
                Err(proxylab::Error::Undefined(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    fn checkpoint(&mut self, step: usize, params: &ModelParameters, diagnostic: bool) -> proxylab::Result<()> {
        let name = checkpoint_name(step, diagnostic);
        save_checkpoint(&self.ckpt_dir.join(&name), params, self.seed, step)?;
        self.written.push(format!("checkpoints/{name}"));
        Ok(())
    }
}

pub fn checkpoint_name(step: usize, diagnostic: bool) -> String {
    if diagnostic {
        format!("diverged_step_{step:07}.ckpt")
    } else {
        format!("step_{step:07}.ckpt")
    }
}

pub fn train(ctx: &Ctx) -> Result<()> {
    if is_code_task(ctx) {
        return crate::code_commands::train(ctx);
    }
    let bundle = load_bundle(ctx)?;
    let model_cfg = ctx.cfg.model_config()?;
    let tc = ctx.cfg.train_config();
    let data: Vec<Vec<u32>> = bundle.get(SplitName::Train).iter().map(|s| s.tokens.clone()).collect();
    let eval_sets = SplitName::ALL[1..]
        .iter()
        .map(|&n| {
            let d = bundle.get(n);
            (n, &d[..tc.eval_sample.min(d.len())])
        })
        .collect();
    let mut obs = CliObserver {
        ckpt_dir: ctx.out.join("checkpoints"),
        seed: tc.seed,
        eval_sets,
        k: bundle.spec.bracket_types,
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

pub fn simplifier_dir(ctx: &Ctx) -> PathBuf {
    ctx.out.join("simplifiers")
}

/// File stem of a fitted simplifier, e.g. `l1h0_svd_r04`.
pub fn simplifier_stem(spec: &SimplifierSpec) -> String {
    let kind = match spec.kind {
        SimplifierKind::Svd { rank } => format!("svd_r{rank:02}"),
        SimplifierKind::KMeans { clusters } => format!("kmeans_k{clusters:02}"),
        SimplifierKind::OneHot => "one_hot".into(),
    };
    format!("l{}h{}_{kind}", spec.layer, spec.head)
}

/// Specs the sweep section asks for, in a fixed order.
pub fn planned_specs(sweep: &SweepSection, fit_sample: &FitSample) -> Vec<SimplifierSpec> {
    let spec = |kind| SimplifierSpec {
        layer: sweep.layer,
        head: sweep.head,
        kind,
        fit: fit_sample.clone(),
    };
    let mut out: Vec<SimplifierSpec> = sweep
        .svd_ranks
        .iter()
        .map(|&rank| spec(SimplifierKind::Svd { rank }))
        .collect();
    out.extend(
        sweep
            .kmeans_clusters
            .iter()
            .map(|&clusters| spec(SimplifierKind::KMeans { clusters })),
    );
    if sweep.one_hot {
        out.push(spec(SimplifierKind::OneHot));
    }
    out
}

pub fn fit_sample(ctx: &Ctx, sweep: &SweepSection, available: usize) -> FitSample {
    FitSample {
        dataset: "train".into(),
        sequences: sweep.fit_sequences.min(available),
        seed: ctx.cfg.seed,
    }
}

pub fn fit_simplifier(ctx: &Ctx) -> Result<()> {
    if is_code_task(ctx) {
        return crate::code_commands::fit_simplifier(ctx);
    }
    let sweep = ctx.cfg.sweep()?;
    let bundle = load_bundle(ctx)?;
    let params = load_model(ctx)?;
    let train = bundle.get(SplitName::Train);
    let fs = fit_sample(ctx, sweep, train.len());
    let seqs: Vec<Vec<u32>> = train[..fs.sequences].iter().map(|s| s.tokens.clone()).collect();
    let mut fitted = fit_svd_ranks(&params, sweep.layer, sweep.head, &sweep.svd_ranks, &seqs, &fs)?;
    for spec in planned_specs(sweep, &fs).into_iter().skip(sweep.svd_ranks.len()) {
        fitted.push(fit(&spec, &params, &seqs)?);
    }
    save_all(ctx, &fitted)
}

pub fn save_all(ctx: &Ctx, fitted: &[FittedSimplifier]) -> Result<()> {
    let mut files = Vec::new();
    for f in fitted {
        let name = format!("{}.simp", simplifier_stem(&f.spec));
        save_fitted(&simplifier_dir(ctx).join(&name), f)?;
        files.push(format!("simplifiers/{name}"));
    }
    eprintln!("fitted {} simplifiers", fitted.len());
    write_stage_manifest(&ctx.out, "fit-simplifier", &files)
}

pub fn load_planned(ctx: &Ctx, specs: &[SimplifierSpec]) -> Result<Vec<FittedSimplifier>> {
    specs
        .iter()
        .map(|s| {
            let path = simplifier_dir(ctx).join(format!("{}.simp", simplifier_stem(s)));
            load_fitted(&path).with_context(|| format!("loading {} (run fit-simplifier first)", path.display()))
        })
        .collect()
}

fn eval_splits(sweep: &SweepSection) -> Vec<SplitName> {
    if sweep.splits.is_empty() {
        SplitName::ALL[1..].to_vec()
    } else {
        sweep.splits.clone()
    }
}

fn limited<T>(xs: &[T], limit: Option<usize>) -> &[T] {
    &xs[..limit.unwrap_or(xs.len()).min(xs.len())]
}

pub fn evaluate(ctx: &Ctx) -> Result<()> {
    if is_code_task(ctx) {
        return crate::code_commands::evaluate(ctx);
    }
    let sweep = ctx.cfg.sweep()?;
    let bundle = load_bundle(ctx)?;
    let params = load_model(ctx)?;
    let k = bundle.spec.bracket_types;
    let md = sweep.min_distance;
    let train = bundle.get(SplitName::Train);
    let fs = fit_sample(ctx, sweep, train.len());
    let fitted = load_planned(ctx, &planned_specs(sweep, &fs))?;
    let mut files = Vec::new();
    let mut records = Vec::new();
    let bd = Path::new("breakdowns");
    for split in eval_splits(sweep) {
        let samples = limited(bundle.get(split), sweep.eval_limit);
        let set = EvalSet::Dyck {
            samples,
            bracket_types: k,
            min_distance: md,
        };
        let grid = depth_error_grid(&params, samples, k, md)?;
        let prof = attention_error_profile(&params, &Unchanged, sweep.layer, sweep.head, samples, k, md)?;
        files.push(write_rel(ctx, &bd.join(format!("grid_original_{split}.csv")), &grid_csv(&grid))?);
        files.push(write_rel(ctx, &bd.join(format!("errors_original_{split}.csv")), &error_profile_csv(&prof))?);
        for f in &fitted {
            match evaluate_faithfulness(&params, f, &set, split.as_str()) {
                Ok(r) => records.push(r),
                Err(proxylab::Error::Undefined(why)) => {
                    eprintln!("skipping {} on {split}: {why}", simplifier_stem(&f.spec));
                    continue;
                }
                Err(e) => return Err(e.into()),
            }
            let stem = simplifier_stem(&f.spec);
            let runner = SimplifiedRunner { params: &params, fitted: f };
            let grid = depth_error_grid(&runner, samples, k, md)?;
            let prof = attention_error_profile(&params, f, f.spec.layer, f.spec.head, samples, k, md)?;
            files.push(write_rel(ctx, &bd.join(format!("grid_{stem}_{split}.csv")), &grid_csv(&grid))?);
            files.push(write_rel(ctx, &bd.join(format!("errors_{stem}_{split}.csv")), &error_profile_csv(&prof))?);
        }
        eprintln!("evaluated {split}");
    }
    let fit_samples = &train[..fs.sequences];
    for f in &fitted {
        if let FittedState::KMeans { .. } = f.state {
            let prof = cluster_depth_profile(f, &params, fit_samples)?;
            let name = format!("clusters_{}.csv", simplifier_stem(&f.spec));
            files.push(write_rel(ctx, &bd.join(name), &cluster_csv(&prof))?);
        }
    }
    let widest = fitted
        .iter()
        .filter_map(|f| match &f.state {
            FittedState::Svd { basis, .. } => Some((f, basis)),
            _ => None,
        })
        .max_by_key(|(f, _)| f.spec.kind.strength());
    if let Some((f, basis)) = widest {
        let comps: Vec<usize> = sweep
            .projection_components
            .iter()
            .copied()
            .filter(|&c| c < basis.cols())
            .collect();
        let iid = limited(bundle.get(SplitName::Iid), Some(100));
        let table = export_projection(&params, f.spec.layer, f.spec.head, basis, iid, &comps)?;
        let name = format!("projection_{}.csv", simplifier_stem(&f.spec));
        files.push(write_rel(ctx, &bd.join(name), &projection_csv(&table))?);
    }
    files.push(write_rel(ctx, Path::new("faithfulness.csv"), &records_csv(&records))?);
    files.push(write_rel(ctx, Path::new("faithfulness_summary.csv"), &summary_csv(&records))?);
    write_stage_manifest(&ctx.out, "evaluate", &files)
}

/// Writes `text` under the output directory and returns the relative path.
pub fn write_rel(ctx: &Ctx, rel: &Path, text: &str) -> Result<String> {
    write_text(&ctx.out.join(rel), text)?;
    Ok(rel.display().to_string())
}

pub fn report(ctx: &Ctx) -> Result<()> {
    crate::report::render(ctx)
}

pub fn inspect_head(ctx: &Ctx) -> Result<()> {
    let inspect = ctx.cfg.inspect.as_ref().context("config has no `inspect` section")?;
    let params = load_model(ctx)?;
    let sequences: Vec<Vec<u32>> = if is_code_task(ctx) {
        inspect
            .texts
            .iter()
            .map(|t| proxylab::code::CharVocab::encode_sequence(t))
            .collect()
    } else {
        let vocab = ctx.cfg.dyck()?.spec.vocab();
        inspect
            .texts
            .iter()
            .map(|t| {
                let mut s = vec![vocab.bos()];
                s.extend(parse_brackets(t)?);
                s.push(vocab.eos());
                Ok(s)
            })
            .collect::<proxylab::Result<_>>()?
    };
    let labels: Vec<Vec<String>> = sequences
        .iter()
        .map(|s| {
            if is_code_task(ctx) {
                s.iter().map(|&t| token_label_code(t)).collect()
            } else {
                s.iter().map(|t| t.to_string()).collect()
            }
        })
        .collect();
    let files = crate::report::inspect_outputs(ctx, &params, &sequences, &labels, inspect.first_n)?;
    write_stage_manifest(&ctx.out, "inspect-head", &files)
}

fn token_label_code(t: u32) -> String {
    use proxylab::code::CharVocab;
    match t {
        CharVocab::BOS => "BOS".into(),
        CharVocab::EOS => "EOS".into(),
        CharVocab::UNKNOWN => "UNK".into(),
        _ => match CharVocab::char_of(t) {
            Some(' ') => "SPACE".into(),
            Some(',') => "COMMA".into(),
            Some(c) => c.to_string(),
            None => "?".into(),
        },
    }
}

pub fn code_ingest(ctx: &Ctx) -> Result<()> {
    crate::code_commands::ingest(ctx)
}
