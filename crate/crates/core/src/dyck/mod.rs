//! Bounded-depth Dyck languages: sampling, split construction and exact
//! stack oracles.

pub mod io;
pub mod oracle;
pub mod sample;
pub mod splits;
pub mod vocab;

pub use oracle::{
    closing_eval_positions, depths_and_matches, enclosing_opener, legal_next, most_recent_unmatched_opener,
    structure_of, DepthInfo, LegalNext,
};
pub use sample::{sample_sentence, DyckSample};
pub use splits::{build_splits, SplitBundle, SplitName, SplitSizes, SplitStats};
pub use vocab::DyckVocab;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Minimum distance between a closer and its opener for it to be scored.
pub const DEFAULT_MIN_DISTANCE: usize = 10;

/// Dyck-(k, m) with a token budget that includes BOS and EOS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyckSpec {
    pub bracket_types: u32,
    pub max_depth: u32,
    pub max_len: usize,
}

impl DyckSpec {
    pub fn new(bracket_types: u32, max_depth: u32, max_len: usize) -> Result<Self> {
        let spec = Self {
            bracket_types,
            max_depth,
            max_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bracket_types == 0 || self.max_depth == 0 || self.max_len < 4 {
            return Err(Error::InvalidArgument(format!(
                "Dyck spec needs k >= 1, m >= 1, max_len >= 4; got k={}, m={}, max_len={}",
                self.bracket_types, self.max_depth, self.max_len
            )));
        }
        Ok(())
    }

    pub fn vocab(&self) -> DyckVocab {
        DyckVocab::new(self.bracket_types)
    }

    /// Number of bracket tokens available: `max_len − 2`, rounded down to even.
    pub fn bracket_budget(&self) -> usize {
        (self.max_len - 2) & !1
    }

    /// The same language with doubled depth bound.
    pub fn with_depth(&self, max_depth: u32) -> Self {
        Self { max_depth, ..*self }
    }
}
