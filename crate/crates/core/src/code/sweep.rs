//! Per-head SVD sweeps on code, broken down by prediction type.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::categorize::{categorize_characters, Category};
use super::corpus::CodeFunction;
use super::vocab::CharVocab;
use crate::error::Result;
use crate::faithfulness::{compare_all, EvalSet, SequenceComparison};
use crate::model::eval::full_argmax;
use crate::model::forward::forward;
use crate::model::ModelParameters;
use crate::par;
use crate::simplify::{fit_svd_ranks, FitSample, FittedSimplifier};

/// Encoded sequences of one split with a label per character.
#[derive(Clone, Debug)]
pub struct CodeSplit {
    pub name: String,
    /// `BOS text EOS`.
    pub sequences: Vec<Vec<u32>>,
    /// `labels[s][i]` labels character `i`, i.e. token `i + 1`.
    pub labels: Vec<Vec<Category>>,
}

impl CodeSplit {
    pub fn from_functions(name: &str, functions: &[CodeFunction], keywords: &HashSet<String>) -> Self {
        Self {
            name: name.to_string(),
            sequences: functions.iter().map(|f| CharVocab::encode_sequence(&f.text)).collect(),
            labels: functions
                .iter()
                .map(|f| categorize_characters(&f.text, keywords))
                .collect(),
        }
    }

    pub fn eval_set(&self) -> EvalSet<'_> {
        EvalSet::Code {
            sequences: &self.sequences,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSweepRecord {
    pub layer: usize,
    pub head: usize,
    pub rank: usize,
    pub split: String,
    /// `None` pools every category.
    pub category: Option<Category>,
    /// Only positions the original model predicts correctly.
    pub correct_only: bool,
    pub same: usize,
    pub n: usize,
}

impl HeadSweepRecord {
    pub fn rate(&self) -> Option<f64> {
        (self.n > 0).then(|| self.same as f64 / self.n as f64)
    }

    pub fn category_name(&self) -> &'static str {
        self.category.map_or("all", |c| c.as_str())
    }
}

/// `[category slot][correct_only] → (same, n)`; slot 0 pools all categories.
type Tally = [[(usize, usize); 2]; 7];

fn slot(c: Category) -> usize {
    1 + Category::ALL.iter().position(|&x| x == c).expect("listed")
}

fn tally(comparisons: &[SequenceComparison], labels: &[Vec<Category>]) -> Tally {
    let mut t = [[(0, 0); 2]; 7];
    for (c, lab) in comparisons.iter().zip(labels) {
        for o in &c.outcomes {
            let same = usize::from(o.original == o.simplified);
            let correct = o.original == o.target;
            for s in [0, slot(lab[o.position - 1])] {
                for (f, include) in [(0, true), (1, correct)] {
                    if include {
                        t[s][f].0 += same;
                        t[s][f].1 += 1;
                    }
                }
            }
        }
    }
    t
}

/// Fits SVD simplifiers at every rank for each head of the model in turn.
pub fn fit_all_heads(
    params: &ModelParameters,
    ranks: &[usize],
    fit_sequences: &[Vec<u32>],
    fit_sample: &FitSample,
) -> Result<Vec<FittedSimplifier>> {
    let mut out = Vec::new();
    for layer in 0..params.config.layers {
        for head in 0..params.config.heads {
            out.extend(fit_svd_ranks(params, layer, head, ranks, fit_sequences, fit_sample)?);
        }
    }
    Ok(out)
}

/// Full-vocabulary prediction agreement of each fitted simplifier on every
/// split, per category and with the correct-only filter.
pub fn sweep_fitted(
    params: &ModelParameters,
    fitted: &[FittedSimplifier],
    splits: &[CodeSplit],
) -> Result<Vec<HeadSweepRecord>> {
    let mut out = Vec::new();
    for f in fitted {
        let (layer, head) = (f.spec.layer, f.spec.head);
        let rank = f.spec.kind.strength();
        for split in splits {
            let comps = compare_all(params, f, layer, head, &split.eval_set())?;
            let t = tally(&comps, &split.labels);
            let cats = std::iter::once(None).chain(Category::ALL.iter().copied().map(Some));
            for (s, category) in cats.enumerate() {
                for (fi, correct_only) in [false, true].into_iter().enumerate() {
                    out.push(HeadSweepRecord {
                        layer,
                        head,
                        rank,
                        split: split.name.clone(),
                        category,
                        correct_only,
                        same: t[s][fi].0,
                        n: t[s][fi].1,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// [`fit_all_heads`] followed by [`sweep_fitted`].
pub fn per_head_sweep(
    params: &ModelParameters,
    ranks: &[usize],
    fit_sequences: &[Vec<u32>],
    fit_sample: &FitSample,
    splits: &[CodeSplit],
) -> Result<Vec<HeadSweepRecord>> {
    let fitted = fit_all_heads(params, ranks, fit_sequences, fit_sample)?;
    sweep_fitted(params, &fitted, splits)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadGap {
    pub layer: usize,
    pub head: usize,
    pub rank: usize,
    pub category: Option<Category>,
    pub correct_only: bool,
    pub in_domain: f64,
    pub out_of_domain: f64,
    /// `in_domain − out_of_domain`.
    pub gap: f64,
}

/// Agreement on `in_domain` minus agreement pooled over `out_splits`, per
/// head and cell. Cells without positions on either side are skipped.
pub fn generalization_gaps(records: &[HeadSweepRecord], in_domain: &str, out_splits: &[&str]) -> Vec<HeadGap> {
    let mut gaps = Vec::new();
    for r in records.iter().filter(|r| r.split == in_domain) {
        let same_cell = |o: &&HeadSweepRecord| {
            (o.layer, o.head, o.rank, o.category, o.correct_only) == (r.layer, r.head, r.rank, r.category, r.correct_only)
        };
        let (same, n) = records
            .iter()
            .filter(|o| out_splits.contains(&o.split.as_str()))
            .filter(same_cell)
            .fold((0, 0), |a, o| (a.0 + o.same, a.1 + o.n));
        let (Some(inr), true) = (r.rate(), n > 0) else { continue };
        let outr = same as f64 / n as f64;
        gaps.push(HeadGap {
            layer: r.layer,
            head: r.head,
            rank: r.rank,
            category: r.category,
            correct_only: r.correct_only,
            in_domain: inr,
            out_of_domain: outr,
            gap: inr - outr,
        });
    }
    gaps
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub split: String,
    pub category: Option<Category>,
    pub correct: usize,
    pub total: usize,
}

/// Next-character accuracy of the unmodified model per split and category.
pub fn category_accuracy(params: &ModelParameters, splits: &[CodeSplit]) -> Result<Vec<CategoryAccuracy>> {
    let mut out = Vec::new();
    for split in splits {
        let per = par::map_range(split.sequences.len(), |i| -> Result<[(usize, usize); 7]> {
            let s = &split.sequences[i];
            let logits = forward(params, s, false)?.logits;
            let mut t = [(0, 0); 7];
            for p in split.eval_set().positions(i) {
                let ok = usize::from(full_argmax(logits.row(p - 1)) == s[p]);
                for k in [0, slot(split.labels[i][p - 1])] {
                    t[k].0 += ok;
                    t[k].1 += 1;
                }
            }
            Ok(t)
        });
        let mut t = [(0, 0); 7];
        for r in per {
            for (acc, v) in t.iter_mut().zip(r?) {
                acc.0 += v.0;
                acc.1 += v.1;
            }
        }
        let cats = std::iter::once(None).chain(Category::ALL.iter().copied().map(Some));
        for (k, category) in cats.enumerate() {
            out.push(CategoryAccuracy {
                split: split.name.clone(),
                category,
                correct: t[k].0,
                total: t[k].1,
            });
        }
    }
    Ok(out)
}

/// Per-head agreement (pooled categories) on `in_domain` and pooled over
/// `out_splits` at one rank, paired by head for a t-test.
pub fn paired_head_rates(
    records: &[HeadSweepRecord],
    rank: usize,
    correct_only: bool,
    in_domain: &str,
    out_splits: &[&str],
) -> (Vec<f64>, Vec<f64>) {
    generalization_gaps(records, in_domain, out_splits)
        .into_iter()
        .filter(|g| g.rank == rank && g.category.is_none() && g.correct_only == correct_only)
        .map(|g| (g.in_domain, g.out_of_domain))
        .unzip()
}

pub fn sweep_csv(records: &[HeadSweepRecord]) -> String {
    let mut out = String::from("layer,head,rank,split,category,correct_only,same,n,rate\n");
    for r in records {
        let rate = r.rate().map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{rate}",
            r.layer,
            r.head,
            r.rank,
            r.split,
            r.category_name(),
            r.correct_only,
            r.same,
            r.n
        );
    }
    out
}

pub fn gaps_csv(gaps: &[HeadGap]) -> String {
    let mut out = String::from("layer,head,rank,category,correct_only,in_domain,out_of_domain,gap\n");
    for g in gaps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g.layer,
            g.head,
            g.rank,
            g.category.map_or("all", |c| c.as_str()),
            g.correct_only,
            g.in_domain,
            g.out_of_domain,
            g.gap
        );
    }
    out
}

pub fn category_accuracy_csv(rows: &[CategoryAccuracy]) -> String {
    let mut out = String::from("split,category,correct,total,accuracy\n");
    for a in rows {
        let acc = if a.total > 0 {
            (a.correct as f64 / a.total as f64).to_string()
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{acc}",
            a.split,
            a.category.map_or("all", |c| c.as_str()),
            a.correct,
            a.total
        );
    }
    out
}
