use super::oracle::{depths_and_matches, structure_of};
use super::vocab::{render, BOS};
use super::DyckSpec;
use crate::error::{Error, Result};
use rand::Rng;

/// Probability of stopping whenever the stack is empty and the sentence is
/// nonempty.
pub const STOP_PROB: f64 = 0.25;
/// Probability of opening when both opening and closing are allowed.
pub const OPEN_PROB: f64 = 0.5;

/// One sentence `BOS w EOS`. Per-position vectors are aligned with `tokens`
/// and are zero / `None` at BOS and EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyckSample {
    pub tokens: Vec<u32>,
    pub structure: String,
    pub prefix_depths: Vec<u32>,
    pub token_depths: Vec<u32>,
    pub match_index: Vec<Option<usize>>,
}

impl DyckSample {
    /// Builds a sample from a full `BOS … EOS` token sequence.
    pub fn from_tokens(tokens: Vec<u32>, spec: &DyckSpec) -> Result<Self> {
        let vocab = spec.vocab();
        if tokens.len() < 2 || tokens[0] != BOS || *tokens.last().unwrap() != vocab.eos() {
            return Err(Error::InvalidArgument("sentence must be BOS … EOS".into()));
        }
        for (i, &t) in tokens[1..tokens.len() - 1].iter().enumerate() {
            if !vocab.is_bracket(t) {
                return Err(Error::BadToken { token: t, position: i + 1 });
            }
        }
        let info = depths_and_matches(&tokens)?;
        Ok(Self {
            structure: structure_of(&tokens)?,
            tokens,
            prefix_depths: info.prefix_depths,
            token_depths: info.token_depths,
            match_index: info.match_index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_depth(&self) -> u32 {
        self.prefix_depths.iter().copied().max().unwrap_or(0)
    }

    pub fn brackets(&self) -> &[u32] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn text(&self, spec: &DyckSpec) -> String {
        render(&self.tokens, spec.vocab())
    }
}

/// Draws one sentence from Dyck-(k, m) within the length budget.
///
/// At depth 0 a nonempty sentence stops with probability [`STOP_PROB`];
/// otherwise the sampler opens with probability [`OPEN_PROB`] while below
/// depth `m` and closes otherwise. Once the remaining budget equals the depth,
/// only closes are drawn. Opener types are uniform.
pub fn sample_sentence<R: Rng + ?Sized>(spec: &DyckSpec, rng: &mut R) -> DyckSample {
    let vocab = spec.vocab();
    let budget = spec.bracket_budget();
    let mut tokens = vec![BOS];
    let mut stack: Vec<u32> = Vec::new();
    let mut used = 0usize;
    loop {
        let depth = stack.len();
        let remaining = budget - used;
        let open = if depth == 0 {
            if remaining == 0 || (used > 0 && rng.random::<f64>() < STOP_PROB) {
                break;
            }
            true
        } else if remaining == depth {
            false
        } else {
            (depth as u32) < spec.max_depth && rng.random::<f64>() < OPEN_PROB
        };
        if open {
            let t = rng.random_range(1..=spec.bracket_types);
            stack.push(t);
            tokens.push(vocab.open(t));
        } else {
            let t = stack.pop().expect("close with nonempty stack");
            tokens.push(vocab.close(t));
        }
        used += 1;
    }
    tokens.push(vocab.eos());
    DyckSample::from_tokens(tokens, spec).expect("sampler emits balanced sentences")
}
