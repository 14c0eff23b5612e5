//! NDJSON ingestion and depth/length/language routing.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Split holding the training functions.
pub const TRAIN: &str = "train";
/// Held-out functions of the training language at seen depths.
pub const IN_DOMAIN: &str = "in_domain";
/// Functions of the training language deeper than the depth bound.
pub const UNSEEN_DEPTH: &str = "unseen_depth";

/// The fields read from each input line; others are ignored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub language: String,
    pub code: String,
    /// CodeSearchNet partition (`train`, `valid`, `test`) when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeFunction {
    pub language: String,
    pub text: String,
    /// Running depth after each character.
    pub depths: Vec<u32>,
    pub max_depth: u32,
}

impl CodeFunction {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

/// Running depth over `()`, `[]` and `{}` after each character, treating the
/// three pairs as interchangeable. `Err(i)` names the first character at
/// which the depth would go negative.
pub fn bracket_depths(text: &str) -> std::result::Result<Vec<u32>, usize> {
    let mut depth = 0u32;
    let mut out = Vec::with_capacity(text.len());
    for (i, c) in text.chars().enumerate() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.checked_sub(1).ok_or(i)?,
            _ => {}
        }
        out.push(depth);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub train_language: String,
    pub max_depth: u32,
    pub max_len: usize,
    /// Without partition tags, every n-th eligible training-language function
    /// is held out for in-domain evaluation; 0 holds out none.
    pub heldout_every: usize,
}

impl IngestConfig {
    pub fn new(train_language: &str, max_depth: u32, max_len: usize) -> Self {
        Self {
            train_language: train_language.to_lowercase(),
            max_depth,
            max_len,
            heldout_every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: String,
    pub count: usize,
    pub mean_length: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub splits: BTreeMap<String, Vec<CodeFunction>>,
    /// Lines that are not JSON objects with string `language` and `code`.
    pub skipped_malformed: usize,
    /// Functions whose running depth goes negative.
    pub rejected_negative_depth: usize,
    pub dropped_too_long: usize,
    /// Deeper functions of other languages, and training-partition
    /// functions that would otherwise land in an evaluation split.
    pub dropped_unrouted: usize,
}

impl IngestReport {
    pub fn split(&self, name: &str) -> &[CodeFunction] {
        self.splits.get(name).map_or(&[], Vec::as_slice)
    }

    pub fn summaries(&self) -> Vec<SplitSummary> {
        self.splits
            .iter()
            .map(|(name, fs)| SplitSummary {
                split: name.clone(),
                count: fs.len(),
                mean_length: if fs.is_empty() {
                    0.0
                } else {
                    fs.iter().map(CodeFunction::len).sum::<usize>() as f64 / fs.len() as f64
                },
            })
            .collect()
    }
}

pub fn parse_record(line: &str) -> Option<CodeRecord> {
    let v: serde_json::Value = serde_json::from_str(line).ok()?;
    let obj = v.as_object()?;
    let language = obj.get("language")?.as_str()?.to_lowercase();
    let code = obj.get("code")?.as_str()?.to_string();
    let partition = match obj.get("partition") {
        None | Some(serde_json::Value::Null) => None,
        Some(p) => Some(p.as_str()?.to_string()),
    };
    Some(CodeRecord {
        language,
        code,
        partition,
    })
}

enum Parsed {
    Malformed,
    Negative,
    Ok(CodeRecord, Vec<u32>),
}

/// Routes the functions on `lines` (one JSON record per line; blank lines
/// are ignored) into splits.
pub fn ingest(lines: &[String], cfg: &IngestConfig) -> IngestReport {
    let parsed = par::map(lines, |l| {
        if l.trim().is_empty() {
            return None;
        }
        Some(match parse_record(l) {
            None => Parsed::Malformed,
            Some(r) => match bracket_depths(&r.code) {
                Err(_) => Parsed::Negative,
                Ok(d) => Parsed::Ok(r, d),
            },
        })
    });
    let train_lang = cfg.train_language.to_lowercase();
    let mut report = IngestReport::default();
    let mut eligible = 0usize;
    for p in parsed.into_iter().flatten() {
        let (rec, depths) = match p {
            Parsed::Malformed => {
                report.skipped_malformed += 1;
                continue;
            }
            Parsed::Negative => {
                report.rejected_negative_depth += 1;
                continue;
            }
            Parsed::Ok(r, d) => (r, d),
        };
        if depths.len() > cfg.max_len {
            report.dropped_too_long += 1;
            continue;
        }
        let max_depth = depths.iter().copied().max().unwrap_or(0);
        let shallow = max_depth <= cfg.max_depth;
        let train_part = rec.partition.as_deref().map(|p| p == "train");
        let split = if rec.language == train_lang {
            match (shallow, train_part) {
                (true, Some(true)) => Some(TRAIN.to_string()),
                (true, Some(false)) => Some(IN_DOMAIN.to_string()),
                (true, None) => {
                    eligible += 1;
                    let held = cfg.heldout_every > 0 && eligible.is_multiple_of(cfg.heldout_every);
                    Some(if held { IN_DOMAIN } else { TRAIN }.to_string())
                }
                (false, Some(true)) => None,
                (false, _) => Some(UNSEEN_DEPTH.to_string()),
            }
        } else if shallow && train_part != Some(true) {
            Some(rec.language.clone())
        } else {
            None
        };
        let Some(split) = split else {
            report.dropped_unrouted += 1;
            continue;
        };
        report.splits.entry(split).or_default().push(CodeFunction {
            language: rec.language,
            text: rec.code,
            depths,
            max_depth,
        });
    }
    report
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Writes functions as `{"language", "code"}` lines.
pub fn write_functions(path: &Path, functions: &[CodeFunction]) -> Result<()> {
    let mut buf = Vec::new();
    for f in functions {
        let rec = CodeRecord {
            language: f.language.clone(),
            code: f.text.clone(),
            partition: None,
        };
        serde_json::to_writer(&mut buf, &rec)?;
        buf.push(b'\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads functions written by [`write_functions`], recomputing depths.
pub fn read_functions(path: &Path) -> Result<Vec<CodeFunction>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec = parse_record(l)
                .ok_or_else(|| Error::Format(format!("{}: line {} is not a code record", path.display(), i + 1)))?;
            let depths = bracket_depths(&rec.code).map_err(|p| {
                Error::Format(format!("{}: line {} goes below depth 0 at {p}", path.display(), i + 1))
            })?;
            Ok(CodeFunction {
                language: rec.language,
                max_depth: depths.iter().copied().max().unwrap_or(0),
                text: rec.code,
                depths,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(lang: &str, code: &str) -> String {
        serde_json::json!({ "language": lang, "code": code }).to_string()
    }

    #[test]
    fn depth_counts_all_three_pairs() {
        let d = bracket_depths("int f(){return g([1]);}").unwrap();
        assert_eq!(d.iter().max(), Some(&3));
        assert_eq!(bracket_depths("a)("), Err(1));
        assert_eq!(bracket_depths(""), Ok(vec![]));
    }

    #[test]
    fn routing() {
        let mut cfg = IngestConfig::new("Java", 3, 40);
        cfg.heldout_every = 2;
        let lines = vec![
            line("java", "f(){}"),
            line("java", "g(){}"),
            line("java", "f({[()]})"),
            line("go", "x{}"),
            line("go", "x{{{{}}}}"),
            line("java", ")("),
            line("java", &"a".repeat(41)),
            "{\"language\": \"java\"}".into(),
            "not json".into(),
            String::new(),
            serde_json::json!({"language": "php", "code": "p()", "partition": "train"}).to_string(),
        ];
        let r = ingest(&lines, &cfg);
        assert_eq!(r.split(TRAIN).len(), 1);
        assert_eq!(r.split(IN_DOMAIN).len(), 1);
        assert_eq!(r.split(UNSEEN_DEPTH).len(), 1);
        assert_eq!(r.split("go").len(), 1);
        assert_eq!(r.skipped_malformed, 2);
        assert_eq!(r.rejected_negative_depth, 1);
        assert_eq!(r.dropped_too_long, 1);
        assert_eq!(r.dropped_unrouted, 2);
    }

    #[test]
    fn partition_tags_override_holdout() {
        let cfg = IngestConfig::new("java", 3, 100);
        let rec = |p: &str| serde_json::json!({"language": "Java", "code": "a()", "partition": p}).to_string();
        let r = ingest(&[rec("train"), rec("valid"), rec("test")], &cfg);
        assert_eq!(r.split(TRAIN).len(), 1);
        assert_eq!(r.split(IN_DOMAIN).len(), 2);
    }
}
