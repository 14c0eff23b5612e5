use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxylab"))
        .args(args)
        .env_remove("PROXYLAB_OUT")
        .env("PROXYLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(stage: &str, cfg: &Path, out: &Path) {
    let o = run(&[stage, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(
        o.status.success(),
        "{stage} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn tiny_config() -> Value {
    json!({
        "seed": 3,
        "dyck": {
            "spec": {"bracket_types": 2, "max_depth": 3, "max_len": 40},
            "sizes": {"train": 80, "iid": 12, "seen_struct": 12, "unseen_struct_short": 12,
                      "unseen_struct_long": 12, "unseen_depth": 12}
        },
        "train": {"steps": 6, "batch_size": 8, "warmup_steps": 3, "eval_every": 3, "eval_sample": 6},
        "sweep": {"svd_ranks": [1, 4, 32], "kmeans_clusters": [2], "one_hot": true,
                  "fit_sequences": 20, "min_distance": 2},
        "inspect": {"texts": ["([])", "(()[])"], "first_n": 8}
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn pipeline(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, &tiny_config());
    let out = dir.join("out");
    for stage in ["gen-data", "train", "sweep", "report", "inspect-head"] {
        ok(stage, &cfg, &out);
    }
    out
}

fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn gen_data_respects_the_split_rules() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config();
    cfg["dyck"]["spec"] = json!({"bracket_types": 3, "max_depth": 2, "max_len": 40});
    let cfg = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    ok("gen-data", &cfg, &out);
    let spec = proxylab::dyck::DyckSpec::new(3, 2, 40).unwrap();
    let bundle = proxylab::dyck::io::read_bundle(&out.join("data")).unwrap();
    assert!(bundle.integrity_violations().is_empty());
    for name in proxylab::dyck::SplitName::ALL {
        let limit = if name == proxylab::dyck::SplitName::UnseenDepth { 4 } else { 2 };
        for s in bundle.get(name) {
            assert!(proxylab::dyck::oracle::is_valid(s.brackets(), limit), "{name}: {:?}", s.tokens);
            assert_eq!(name == proxylab::dyck::SplitName::UnseenDepth, s.max_depth() > 2);
            assert!(s.tokens.len() <= spec.max_len);
        }
    }
}

#[test]
fn pipeline_writes_one_summary_row_per_simplifier_and_split_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = pipeline(a.path());
    let out_b = pipeline(b.path());

    let summary = read_lines(&out_a.join("faithfulness_summary.csv"));
    // 3 SVD ranks + 1 k-means + one-hot, on 5 evaluation splits
    assert_eq!(summary.len() - 1, 5 * 5, "{summary:?}");
    let header: Vec<&str> = summary[0].split(',').collect();
    assert_eq!(&header[..5], ["split", "simplifier", "strength", "layer", "head"]);

    for rel in [
        "faithfulness.csv",
        "faithfulness_summary.csv",
        "figures/svd_same_prediction.svg",
        "figures/kmeans_mean_jsd.svg",
        "figures/one_hot.svg",
        "inspect/head_scores.csv",
        "inspect/l1h0_text1.svg",
        "curve.csv",
        "resolved_config.json",
        "evaluate.manifest.json",
        "report.manifest.json",
    ] {
        let x = fs::read(out_a.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
        let y = fs::read(out_b.join(rel)).unwrap();
        assert!(x == y, "{rel} differs between identical runs");
    }
    for dir in ["breakdowns", "simplifiers", "checkpoints"] {
        for e in fs::read_dir(out_a.join(dir)).unwrap() {
            let name = e.unwrap().file_name();
            assert_eq!(
                fs::read(out_a.join(dir).join(&name)).unwrap(),
                fs::read(out_b.join(dir).join(&name)).unwrap(),
                "{dir}/{name:?}"
            );
        }
    }

    let svg = fs::read_to_string(out_a.join("figures/svd_same_prediction.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<!-- data") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn unknown_config_keys_are_all_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config();
    cfg["speed"] = json!(1);
    cfg["sweep"]["ranks"] = json!([1]);
    let cfg = write_config(dir.path(), &cfg);
    let o = run(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("speed") && err.contains("sweep.ranks"), "{err}");
}

#[test]
fn missing_inputs_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--config", "/nonexistent/cfg.json", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.json"));

    let cfg = write_config(dir.path(), &tiny_config());
    let out = dir.path().join("out");
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("data") && err.contains("gen-data"), "{err}");
}

#[test]
fn code_pipeline_runs_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/code_1k.ndjson");
    let cfg = json!({
        "seed": 1,
        "code": {"input": fixture, "train_language": "java", "max_len": 200},
        "model": {"layers": 1, "heads": 2, "model_dim": 16, "head_dim": 8, "mlp_dim": 32,
                  "max_len": 202, "vocab_size": 98, "dropout": 0.0,
                  "tie_embeddings": true, "layer_norm": "pre"},
        "train": {"steps": 3, "batch_size": 4, "warmup_steps": 2, "eval_every": 0, "eval_sample": 4},
        "sweep": {"svd_ranks": [1, 8], "fit_sequences": 10, "eval_limit": 6},
        "inspect": {"texts": ["int f(){return 1;}"], "first_n": 10}
    });
    let cfg = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    for stage in ["code-ingest", "train", "sweep", "report", "inspect-head"] {
        ok(stage, &cfg, &out);
    }
    let summary = read_lines(&out.join("code/summary.csv"));
    assert!(summary.iter().any(|l| l.starts_with("in_domain,")));
    let sweep = read_lines(&out.join("code_sweep.csv"));
    assert!(sweep.len() > 1);
    assert!(out.join("gaps_languages.csv").exists() && out.join("figures/gaps_languages.svg").exists());
    let tests = read_lines(&out.join("t_tests.csv"));
    assert!(tests.len() > 1, "{tests:?}");
}
