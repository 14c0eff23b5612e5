use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use proptest::prelude::*;
use proxylab::code::categorize::{is_space, Category};
use proxylab::code::corpus::{bracket_depths, read_lines, IN_DOMAIN, TRAIN};
use proxylab::code::inspect::{induction_score, previous_token_score, uniform_baseline};
use proxylab::code::stats::{student_t_cdf, two_sided_p};
use proxylab::code::sweep::{category_accuracy, generalization_gaps, CodeSplit};
use proxylab::code::{
    categorize_characters, ingest, inspect_head, java_keywords, paired_t_test, per_head_sweep, CharVocab,
    IngestConfig,
};
use proxylab::dyck::depths_and_matches;
use proxylab::model::{init_model, train, LayerNormPlacement, ModelConfig, NoopObserver, TrainConfig};
use proxylab::numerics::Tensor;
use proxylab::simplify::FitSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn oracle() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("code_1k.oracle.json")).unwrap()).unwrap()
}

fn fixture_config() -> IngestConfig {
    IngestConfig::new("java", 3, 512)
}

#[test]
fn ingestion_matches_fixture_oracle() {
    let lines = read_lines(&fixture("code_1k.ndjson")).unwrap();
    assert_eq!(lines.len(), 1000);
    let o = oracle();
    let cfg = &o["config"];
    let mut ic = IngestConfig::new(cfg["train_language"].as_str().unwrap(), 3, 512);
    ic.heldout_every = cfg["heldout_every"].as_u64().unwrap() as usize;
    assert_eq!(ic, fixture_config());
    let r = ingest(&lines, &ic);
    for (field, got) in [
        ("skipped_malformed", r.skipped_malformed),
        ("rejected_negative_depth", r.rejected_negative_depth),
        ("dropped_too_long", r.dropped_too_long),
        ("dropped_unrouted", r.dropped_unrouted),
    ] {
        assert_eq!(o[field].as_u64().unwrap() as usize, got, "{field}");
    }
    let splits = o["splits"].as_object().unwrap();
    assert_eq!(splits.keys().cloned().collect::<Vec<_>>(), r.splits.keys().cloned().collect::<Vec<_>>());
    for s in r.summaries() {
        let e = &splits[&s.split];
        assert_eq!(e["count"].as_u64().unwrap() as usize, s.count);
        assert!((e["mean_length"].as_f64().unwrap() - s.mean_length).abs() < 1e-9);
        let fns = r.split(&s.split);
        let want: Vec<String> = e["lines"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| {
                let v: Value = serde_json::from_str(&lines[i.as_u64().unwrap() as usize]).unwrap();
                v["code"].as_str().unwrap().to_string()
            })
            .collect();
        let got: Vec<String> = fns.iter().map(|f| f.text.clone()).collect();
        assert_eq!(want, got, "{}", s.split);
        let depths: Vec<u64> = e["max_depths"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap()).collect();
        assert_eq!(depths, fns.iter().map(|f| u64::from(f.max_depth)).collect::<Vec<_>>());
    }
    assert!(r.split(TRAIN).iter().all(|f| f.max_depth <= 3 && f.language == "java"));
}

#[test]
fn categorizer_matches_fixture_oracle() {
    let lines = read_lines(&fixture("code_1k.ndjson")).unwrap();
    let r = ingest(&lines, &fixture_config());
    let kw = java_keywords();
    let o = oracle();
    for (name, fns) in &r.splits {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for f in fns {
            let labels = categorize_characters(&f.text, &kw);
            assert_eq!(labels.len(), f.len());
            for l in labels {
                *counts.entry(l.as_str().to_string()).or_default() += 1;
            }
        }
        let want: BTreeMap<String, u64> = o["splits"][name]["labels"]
            .as_object()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.as_u64().unwrap()))
            .collect();
        assert_eq!(counts, want, "{name}");
    }
}

/// Two passes: find word spans, then label every character.
fn two_pass_labels(text: &str, kw: &HashSet<String>) -> Vec<Category> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, chars.len()));
    }
    let mut labels: Vec<Category> = chars
        .iter()
        .map(|&c| {
            if is_space(c) {
                Category::Whitespace
            } else if ")]}".contains(c) {
                Category::CloseBracket
            } else {
                Category::Other
            }
        })
        .collect();
    let mut earlier: Vec<String> = Vec::new();
    for (s, e) in spans {
        let w: String = chars[s..e].iter().collect();
        let cat = if kw.contains(&w) {
            Category::Keyword
        } else if earlier.contains(&w) {
            Category::RepeatedWord
        } else {
            Category::NewWord
        };
        earlier.push(w);
        labels[s..e].fill(cat);
    }
    labels
}

#[test]
fn categorizer_matches_two_pass_reference_on_ten_thousand_characters() {
    let lines = read_lines(&fixture("code_1k.ndjson")).unwrap();
    let r = ingest(&lines, &fixture_config());
    let kw = java_keywords();
    let mut chars = 0;
    for f in r.splits.values().flatten() {
        assert_eq!(categorize_characters(&f.text, &kw), two_pass_labels(&f.text, &kw));
        chars += f.len();
        if chars >= 10_000 {
            break;
        }
    }
    assert!(chars >= 10_000);
}

fn typed_text() -> impl Strategy<Value = String> {
    // random well-typed bracket skeleton with filler characters
    proptest::collection::vec((0u8..3, 0u8..4), 0..40).prop_map(|ops| {
        let mut out = String::new();
        let mut stack = Vec::new();
        for (t, f) in ops {
            match f {
                0 | 1 => {
                    out.push(['(', '[', '{'][t as usize]);
                    stack.push(t);
                }
                2 => {
                    if let Some(o) = stack.pop() {
                        out.push([')', ']', '}'][o as usize]);
                    }
                }
                _ => out.push_str("a;"),
            }
        }
        while let Some(o) = stack.pop() {
            out.push([')', ']', '}'][o as usize]);
        }
        out
    })
}

proptest! {
    #[test]
    fn depth_agrees_with_the_bracket_oracle(text in typed_text()) {
        let depths = bracket_depths(&text).unwrap();
        let positions: Vec<usize> = text.char_indices().filter(|(_, c)| "()[]{}".contains(*c)).map(|(i, _)| i).collect();
        let tokens: Vec<u32> = positions
            .iter()
            .map(|&i| match text.as_bytes()[i] {
                b'(' => 1, b')' => 2, b'[' => 3, b']' => 4, b'{' => 5, _ => 6,
            })
            .collect();
        let info = depths_and_matches(&tokens).unwrap();
        for (k, &i) in positions.iter().enumerate() {
            prop_assert_eq!(depths[i], info.prefix_depths[k]);
        }
    }

    #[test]
    fn labels_are_exhaustive(text in "[ -~\t\né]{0,80}") {
        prop_assert_eq!(categorize_characters(&text, &java_keywords()).len(), text.chars().count());
    }
}

#[test]
fn encoding_round_trip_and_unknown() {
    let t = "int f(){return g([1]);}";
    assert_eq!(CharVocab::decode(&CharVocab::encode(t)), t);
    assert_eq!(bracket_depths(t).unwrap().into_iter().max(), Some(3));
    let ids = CharVocab::encode("a\u{7f}b");
    assert_eq!(ids[1], CharVocab::UNKNOWN);
}

#[test]
fn t_test_matches_reference_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x - rng.random_range(-0.2..0.3)).collect();
        let r = paired_t_test(&a, &b).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = mean / (sd / (n as f64).sqrt());
        assert!((r.t - t).abs() < 1e-9 * t.abs().max(1.0));
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
        let p = 2.0 * (1.0 - dist.cdf(t.abs()));
        assert!((r.p_value - p).abs() < 1e-6, "n={n} t={t} {} vs {p}", r.p_value);
    }
}

/// Simpson integration of the t density from 0 to `t`.
fn t_cdf_by_quadrature(t: f64, nu: f64) -> f64 {
    let ln_c = statrs::function::gamma::ln_gamma((nu + 1.0) / 2.0)
        - statrs::function::gamma::ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    let f = |x: f64| (ln_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp();
    let n = 20_000;
    let h = t / n as f64;
    let mut s = f(0.0) + f(t);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

#[test]
fn t_cdf_matches_quadrature_at_twenty_points() {
    let points = [
        (0.3, 1.0),
        (1.0, 1.0),
        (6.3, 1.0),
        (0.8, 2.0),
        (2.9, 2.0),
        (4.3, 2.0),
        (1.5, 3.0),
        (3.2, 4.0),
        (-2.1, 5.0),
        (0.05, 6.0),
        (2.4, 7.0),
        (-1.1, 9.0),
        (2.23, 10.0),
        (3.9, 12.0),
        (1.7, 15.0),
        (-2.9, 20.0),
        (0.6, 25.0),
        (2.04, 30.0),
        (3.5, 60.0),
        (1.96, 120.0),
    ];
    for (t, nu) in points {
        let want = if t >= 0.0 {
            t_cdf_by_quadrature(t, nu)
        } else {
            1.0 - t_cdf_by_quadrature(-t, nu)
        };
        assert!((student_t_cdf(t, nu) - want).abs() < 1e-8, "t={t} nu={nu}");
    }
    // tabulated 5% two-sided critical values
    for (t, nu) in [(12.706, 1.0), (4.303, 2.0), (2.776, 4.0), (2.228, 10.0), (2.042, 30.0)] {
        assert!((two_sided_p(t, nu) - 0.05).abs() < 2e-4);
    }
}

fn offset_head_model(n: usize) -> proxylab::model::ModelParameters {
    let cfg = ModelConfig {
        layers: 1,
        heads: 1,
        model_dim: n,
        head_dim: n,
        mlp_dim: 1,
        max_len: n,
        vocab_size: CharVocab::SIZE,
        dropout: 0.0,
        tie_embeddings: true,
        layer_norm: LayerNormPlacement::None,
    };
    let mut p = init_model(&cfg, 0).unwrap();
    *p.get_mut("tok_emb").unwrap() = Tensor::zeros(&[CharVocab::SIZE, n]);
    *p.get_mut("pos_emb").unwrap() = Tensor::identity(n);
    let mut wq = Tensor::identity(n);
    wq.scale_assign(30.0);
    let mut wk = Tensor::zeros(&[n, n]);
    for j in 0..n - 1 {
        wk.set(j, j + 1, 30.0);
    }
    *p.get_mut("l0.h0.wq").unwrap() = wq;
    *p.get_mut("l0.h0.wk").unwrap() = wk;
    p
}

#[test]
fn constructed_previous_token_head_scores_one() {
    let p = offset_head_model(16);
    let seqs = vec![CharVocab::encode_sequence("abcab abcab")];
    let ins = inspect_head(&p, 0, 0, &seqs).unwrap();
    assert!((ins.previous_token_score - 1.0).abs() < 1e-6);
    assert!((previous_token_score(&ins.attention) - ins.previous_token_score).abs() < 1e-12);
    assert_eq!(ins.attention[0].rows(), 13);
}

#[test]
fn random_heads_average_to_the_uniform_baseline() {
    let seqs = vec![
        CharVocab::encode_sequence("abcab abcab"),
        CharVocab::encode_sequence("for (i = 0; i < n; i++) { s += a[i]; }"),
    ];
    let (prev0, ind0) = uniform_baseline(&seqs);
    let mut cfg = ModelConfig::code_desk(CharVocab::SIZE);
    cfg.model_dim = 32;
    cfg.head_dim = 16;
    cfg.mlp_dim = 32;
    cfg.max_len = 64;
    let trials = 60;
    let (mut prev, mut ind) = (0.0, 0.0);
    for seed in 0..trials {
        let p = init_model(&cfg, seed).unwrap();
        let ins = inspect_head(&p, 1, (seed % 2) as usize, &seqs).unwrap();
        prev += ins.previous_token_score;
        ind += induction_score(&seqs, &ins.attention);
    }
    let (prev, ind) = (prev / trials as f64, ind / trials as f64);
    assert!((prev - prev0).abs() < 0.02, "{prev} vs {prev0}");
    assert!((ind - ind0).abs() < 0.02, "{ind} vs {ind0}");
}

#[test]
fn rank_one_loses_agreement_that_full_rank_keeps() {
    let lines = read_lines(&fixture("code_1k.ndjson")).unwrap();
    let r = ingest(&lines, &fixture_config());
    let kw = java_keywords();
    let train_seqs: Vec<Vec<u32>> = r.split(TRAIN).iter().map(|f| CharVocab::encode_sequence(&f.text)).collect();
    let mut cfg = ModelConfig::code_desk(CharVocab::SIZE);
    cfg.model_dim = 32;
    cfg.head_dim = 8;
    cfg.mlp_dim = 64;
    cfg.max_len = 514;
    cfg.dropout = 0.0;
    let tc = TrainConfig {
        steps: 150,
        batch_size: 16,
        warmup_steps: 30,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &tc, &train_seqs, &mut NoopObserver).unwrap();
    let params = out.params;
    let splits: Vec<CodeSplit> = r
        .splits
        .iter()
        .filter(|(n, _)| n.as_str() != TRAIN)
        .map(|(n, fs)| CodeSplit::from_functions(n, &fs[..fs.len().min(30)], &kw))
        .collect();
    let fit = &train_seqs[..60];
    let recs = per_head_sweep(&params, &[1, 8], fit, &FitSample::default(), &splits).unwrap();
    assert_eq!(recs.len(), 2 * 2 * 2 * splits.len() * 7 * 2);
    for split in &splits {
        let pooled = |rank: usize| {
            let (s, n) = recs
                .iter()
                .filter(|x| x.split == split.name && x.rank == rank && x.category.is_none() && !x.correct_only)
                .fold((0, 0), |a, x| (a.0 + x.same, a.1 + x.n));
            s as f64 / n as f64
        };
        assert_eq!(pooled(8), 1.0, "{}", split.name);
        assert!(pooled(1) < pooled(8) - 1e-6, "{}", split.name);
    }
    // categories partition the pooled cell
    for x in recs.iter().filter(|x| x.category.is_none()) {
        let parts: usize = recs
            .iter()
            .filter(|y| {
                y.category.is_some()
                    && (y.layer, y.head, y.rank, &y.split, y.correct_only) == (x.layer, x.head, x.rank, &x.split, x.correct_only)
            })
            .map(|y| y.n)
            .sum();
        assert_eq!(parts, x.n);
    }
    let gaps = generalization_gaps(&recs, IN_DOMAIN, &["go", "javascript", "php"]);
    assert!(gaps.iter().filter(|g| g.rank == 8).all(|g| g.gap.abs() < 1e-12));
    let acc = category_accuracy(&params, &splits).unwrap();
    assert!(acc.iter().all(|a| a.correct <= a.total));
}
