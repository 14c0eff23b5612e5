//! Train / generalization split construction by rejection sampling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::{sample_sentence, DyckSample};
use super::DyckSpec;
use crate::error::{Error, Result};
use crate::par;

/// Sentences of at most this many tokens (BOS/EOS included) go to the short
/// unseen-structure split.
pub const SHORT_LEN: usize = 32;
/// Attempts allowed per wanted sentence before a split is declared starved.
pub const ATTEMPTS_PER_SENTENCE: usize = 500;
pub const ATTEMPT_SLACK: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Iid,
    SeenStruct,
    UnseenStructShort,
    UnseenStructLong,
    UnseenDepth,
}

impl SplitName {
    pub const ALL: [SplitName; 6] = [
        SplitName::Train,
        SplitName::Iid,
        SplitName::SeenStruct,
        SplitName::UnseenStructShort,
        SplitName::UnseenStructLong,
        SplitName::UnseenDepth,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Iid => "iid",
            SplitName::SeenStruct => "seen_struct",
            SplitName::UnseenStructShort => "unseen_struct_short",
            SplitName::UnseenStructLong => "unseen_struct_long",
            SplitName::UnseenDepth => "unseen_depth",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub iid: usize,
    pub seen_struct: usize,
    pub unseen_struct_short: usize,
    pub unseen_struct_long: usize,
    pub unseen_depth: usize,
}

impl SplitSizes {
    pub fn get(&self, name: SplitName) -> usize {
        match name {
            SplitName::Train => self.train,
            SplitName::Iid => self.iid,
            SplitName::SeenStruct => self.seen_struct,
            SplitName::UnseenStructShort => self.unseen_struct_short,
            SplitName::UnseenStructLong => self.unseen_struct_long,
            SplitName::UnseenDepth => self.unseen_depth,
        }
    }

    /// Same size for every evaluation split.
    pub fn uniform(train: usize, eval: usize) -> Self {
        Self {
            train,
            iid: eval,
            seen_struct: eval,
            unseen_struct_short: eval,
            unseen_struct_long: eval,
            unseen_depth: eval,
        }
    }
}

/// Provenance of one dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub seed: u64,
    pub attempts: usize,
    /// Rejection counts keyed by reason.
    pub rejected: BTreeMap<String, usize>,
}

impl SplitStats {
    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
    }
}

#[derive(Clone, Debug)]
pub struct SplitBundle {
    pub spec: DyckSpec,
    pub seed: u64,
    pub datasets: BTreeMap<SplitName, Vec<DyckSample>>,
    pub stats: BTreeMap<SplitName, SplitStats>,
}

impl SplitBundle {
    pub fn get(&self, name: SplitName) -> &[DyckSample] {
        self.datasets.get(&name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn train_sentences(&self) -> HashSet<&[u32]> {
        self.get(SplitName::Train).iter().map(|s| s.tokens.as_slice()).collect()
    }

    pub fn train_structures(&self) -> HashSet<&str> {
        self.get(SplitName::Train).iter().map(|s| s.structure.as_str()).collect()
    }

    /// Checks the set relations every bundle must satisfy; returns one message
    /// per violated relation.
    pub fn integrity_violations(&self) -> Vec<String> {
        let m = self.spec.max_depth;
        let sentences = self.train_sentences();
        let structures = self.train_structures();
        let mut out = Vec::new();
        for (&name, data) in &self.datasets {
            if name == SplitName::Train {
                continue;
            }
            let bad = data.iter().filter(|s| sentences.contains(s.tokens.as_slice())).count();
            if bad > 0 {
                out.push(format!("{name}: {bad} sentence(s) also in train"));
            }
            let check = |pred: &dyn Fn(&DyckSample) -> bool, what: &str, out: &mut Vec<String>| {
                let bad = data.iter().filter(|s| !pred(s)).count();
                if bad > 0 {
                    out.push(format!("{name}: {bad} sample(s) violate `{what}`"));
                }
            };
            match name {
                SplitName::SeenStruct => check(&|s| structures.contains(s.structure.as_str()), "structure in train", &mut out),
                SplitName::UnseenStructShort => {
                    check(&|s| !structures.contains(s.structure.as_str()), "structure not in train", &mut out);
                    check(&|s| s.len() <= SHORT_LEN, "short length", &mut out);
                }
                SplitName::UnseenStructLong => {
                    check(&|s| !structures.contains(s.structure.as_str()), "structure not in train", &mut out);
                    check(&|s| s.len() > SHORT_LEN, "long length", &mut out);
                }
                SplitName::UnseenDepth => check(&|s| s.max_depth() > m, "max depth > m", &mut out),
                SplitName::Iid => check(&|s| s.max_depth() <= m, "max depth <= m", &mut out),
                SplitName::Train => {}
            }
        }
        out
    }
}

/// Independent seed for each sampling stream (splitmix64 of seed and stream).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cap(wanted: usize) -> usize {
    wanted * ATTEMPTS_PER_SENTENCE + ATTEMPT_SLACK
}

fn starved(names: &[SplitName], accepted: usize, wanted: usize, attempts: usize) -> Error {
    Error::SplitStarved {
        split: names.iter().map(|n| n.as_str()).collect::<Vec<_>>().join("+"),
        accepted,
        wanted,
        attempts,
    }
}

struct Stream {
    id: u64,
    names: Vec<SplitName>,
}

type StreamOutput = Vec<(SplitName, Vec<DyckSample>, SplitStats)>;

/// Builds all six datasets. Train is drawn first; the evaluation splits then
/// sample from independent seed streams, in parallel when enabled.
///
/// Train may contain repeated sentences (it is an i.i.d. sample); every other
/// split excludes exact train sentences.
pub fn build_splits(spec: &DyckSpec, sizes: &SplitSizes, seed: u64) -> Result<SplitBundle> {
    spec.validate()?;
    let train_seed = stream_seed(seed, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(train_seed);
    let train: Vec<DyckSample> = (0..sizes.train).map(|_| sample_sentence(spec, &mut rng)).collect();
    let train_stats = SplitStats {
        seed: train_seed,
        attempts: sizes.train,
        rejected: BTreeMap::new(),
    };
    let sentences: HashSet<&[u32]> = train.iter().map(|s| s.tokens.as_slice()).collect();
    let structures: HashSet<&str> = train.iter().map(|s| s.structure.as_str()).collect();

    let streams = [
        Stream {
            id: 1,
            names: vec![SplitName::Iid],
        },
        Stream {
            id: 2,
            names: vec![SplitName::SeenStruct],
        },
        Stream {
            id: 3,
            names: vec![SplitName::UnseenStructShort, SplitName::UnseenStructLong],
        },
        Stream {
            id: 4,
            names: vec![SplitName::UnseenDepth],
        },
    ];
    let results: Vec<Result<StreamOutput>> = par::map(&streams, |stream| {
        run_stream(spec, sizes, seed, stream, &sentences, &structures)
    });

    let mut datasets = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for r in results {
        for (name, data, st) in r? {
            datasets.insert(name, data);
            stats.insert(name, st);
        }
    }
    datasets.insert(SplitName::Train, train);
    stats.insert(SplitName::Train, train_stats);
    Ok(SplitBundle {
        spec: *spec,
        seed,
        datasets,
        stats,
    })
}

fn run_stream(
    spec: &DyckSpec,
    sizes: &SplitSizes,
    seed: u64,
    stream: &Stream,
    sentences: &HashSet<&[u32]>,
    structures: &HashSet<&str>,
) -> Result<StreamOutput> {
    let s_seed = stream_seed(seed, stream.id);
    let mut rng = ChaCha8Rng::seed_from_u64(s_seed);
    let wanted: Vec<usize> = stream.names.iter().map(|&n| sizes.get(n)).collect();
    let total: usize = wanted.iter().sum();
    let mut out: Vec<Vec<DyckSample>> = vec![Vec::new(); stream.names.len()];
    let mut stats = SplitStats {
        seed: s_seed,
        ..Default::default()
    };
    let sample_spec = if stream.names[0] == SplitName::UnseenDepth {
        spec.with_depth(2 * spec.max_depth)
    } else {
        *spec
    };
    let limit = cap(total);
    let accepted = |out: &Vec<Vec<DyckSample>>| out.iter().map(Vec::len).sum::<usize>();
    while accepted(&out) < total {
        if stats.attempts >= limit {
            return Err(starved(&stream.names, accepted(&out), total, stats.attempts));
        }
        stats.attempts += 1;
        let s = sample_sentence(&sample_spec, &mut rng);
        if sentences.contains(s.tokens.as_slice()) {
            stats.reject("in_train");
            continue;
        }
        let slot = match stream.names[0] {
            SplitName::Iid => Some(0),
            SplitName::SeenStruct => {
                if structures.contains(s.structure.as_str()) {
                    Some(0)
                } else {
                    stats.reject("unseen_structure");
                    None
                }
            }
            SplitName::UnseenStructShort => {
                if structures.contains(s.structure.as_str()) {
                    stats.reject("seen_structure");
                    None
                } else {
                    Some(usize::from(s.len() > SHORT_LEN))
                }
            }
            SplitName::UnseenDepth => {
                if s.max_depth() > spec.max_depth {
                    Some(0)
                } else {
                    stats.reject("shallow");
                    None
                }
            }
            other => unreachable!("no stream starts with {other}"),
        };
        if let Some(slot) = slot {
            if out[slot].len() < wanted[slot] {
                out[slot].push(s);
            } else {
                stats.reject("split_full");
            }
        }
    }
    // streams feeding two splits share one stats record
    Ok(stream
        .names
        .iter()
        .zip(out)
        .map(|(&n, data)| (n, data, stats.clone()))
        .collect())
}
