//! Exact stack-based analyses of bracket sequences.
//!
//! Every function accepts either a bare bracket sequence or one wrapped as
//! `BOS … EOS`; per-position outputs are aligned with the input, with zero
//! depth and no match at the special tokens.

use super::vocab::{closer_for, is_open, BOS};
use super::DyckSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthInfo {
    /// `#opens − #closes` after reading each position.
    pub prefix_depths: Vec<u32>,
    /// Depth of each bracket; a closer carries its opener's depth.
    pub token_depths: Vec<u32>,
    /// For each bracket, the index of its partner.
    pub match_index: Vec<Option<usize>>,
}

/// Which tokens may follow a prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegalNext {
    /// The single closer that matches the top of the stack, if any.
    pub closer: Option<u32>,
    pub openers: Vec<u32>,
    pub eos: bool,
}

impl LegalNext {
    pub fn contains(&self, token: u32) -> bool {
        self.closer == Some(token) || self.openers.contains(&token)
    }
}

/// Range of bracket tokens. A sequence starting with BOS is taken to be a
/// full sentence, so an odd final token after it is EOS.
fn bracket_span(tokens: &[u32]) -> (usize, usize) {
    let start = usize::from(tokens.first() == Some(&BOS));
    let mut end = tokens.len();
    if start == 1 && end > 1 && is_open(tokens[end - 1]) {
        end -= 1;
    }
    (start, end)
}

/// O/C skeleton of the bracket part of a sequence.
pub fn structure_of(tokens: &[u32]) -> Result<String> {
    let (start, end) = bracket_span(tokens);
    tokens[start..end]
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if t == BOS {
                Err(Error::BadToken {
                    token: t,
                    position: start + i,
                })
            } else if is_open(t) {
                Ok('O')
            } else {
                Ok('C')
            }
        })
        .collect()
}

/// Single-pass stack analysis. Fails on the first mismatched or unmatched
/// bracket.
pub fn depths_and_matches(tokens: &[u32]) -> Result<DepthInfo> {
    let (start, end) = bracket_span(tokens);
    let n = tokens.len();
    let mut info = DepthInfo {
        prefix_depths: vec![0; n],
        token_depths: vec![0; n],
        match_index: vec![None; n],
    };
    let mut stack: Vec<usize> = Vec::new();
    for i in start..end {
        let t = tokens[i];
        if t == BOS {
            return Err(Error::BadToken { token: t, position: i });
        }
        if is_open(t) {
            stack.push(i);
            info.prefix_depths[i] = stack.len() as u32;
            info.token_depths[i] = stack.len() as u32;
        } else {
            let Some(j) = stack.pop() else {
                return Err(Error::Unbalanced {
                    position: i,
                    reason: "closer with empty stack".into(),
                });
            };
            if closer_for(tokens[j]) != t {
                return Err(Error::Unbalanced {
                    position: i,
                    reason: format!("closer {t} does not match opener {} at {j}", tokens[j]),
                });
            }
            info.prefix_depths[i] = stack.len() as u32;
            info.token_depths[i] = info.token_depths[j];
            info.match_index[i] = Some(j);
            info.match_index[j] = Some(i);
        }
    }
    if let Some(&j) = stack.last() {
        return Err(Error::Unbalanced {
            position: j,
            reason: format!("{} opener(s) never closed", stack.len()),
        });
    }
    Ok(info)
}

/// The most recent unmatched opening bracket as seen from `position`: the
/// largest `j ≤ position` holding an opener whose prefix depth equals the
/// prefix depth at `position`. `None` when that depth is zero. This is the
/// bracket the next closer must match.
pub fn most_recent_unmatched_opener(tokens: &[u32], position: usize) -> Option<usize> {
    let (start, end) = bracket_span(tokens);
    let mut stack: Vec<usize> = Vec::new();
    for (i, &t) in tokens.iter().enumerate().take((position + 1).min(end)).skip(start) {
        if is_open(t) {
            stack.push(i);
        } else {
            stack.pop();
        }
    }
    stack.last().copied()
}

/// The opener a bracket belongs to: itself for an opener, its partner for a
/// closer. Positions outside the brackets give `None`.
pub fn enclosing_opener(tokens: &[u32], position: usize) -> Result<Option<usize>> {
    let info = depths_and_matches(tokens)?;
    let t = tokens[position];
    if info.token_depths[position] == 0 {
        return Ok(None);
    }
    Ok(if is_open(t) {
        Some(position)
    } else {
        info.match_index[position]
    })
}

/// Legal continuations of a prefix under a Dyck-(k, m) spec with a token
/// budget. The prefix may start with BOS; BOS itself counts towards the length.
pub fn legal_next(prefix: &[u32], spec: &DyckSpec) -> Result<LegalNext> {
    let vocab = spec.vocab();
    let start = usize::from(prefix.first() == Some(&BOS));
    let mut stack: Vec<u32> = Vec::new();
    for (i, &t) in prefix.iter().enumerate().skip(start) {
        if !vocab.is_bracket(t) {
            return Err(Error::BadToken { token: t, position: i });
        }
        if is_open(t) {
            if stack.len() as u32 >= spec.max_depth {
                return Err(Error::Unbalanced {
                    position: i,
                    reason: format!("depth exceeds {}", spec.max_depth),
                });
            }
            stack.push(t);
        } else {
            match stack.pop() {
                Some(o) if closer_for(o) == t => {}
                _ => {
                    return Err(Error::Unbalanced {
                        position: i,
                        reason: "closer does not match the stack top".into(),
                    })
                }
            }
        }
    }
    let used = prefix.len() - start;
    let budget = spec.bracket_budget();
    let depth = stack.len();
    let remaining = budget.saturating_sub(used);
    let can_open = (depth as u32) < spec.max_depth && remaining >= depth + 2;
    Ok(LegalNext {
        closer: stack.last().map(|&o| closer_for(o)),
        openers: if can_open { vocab.openers().collect() } else { Vec::new() },
        eos: depth == 0,
    })
}

/// Closer positions whose opener is at least `min_distance` positions back.
pub fn closing_eval_positions(match_index: &[Option<usize>], min_distance: usize) -> Vec<usize> {
    (0..match_index.len())
        .filter_map(|i| match match_index[i] {
            Some(j) if j < i && i - j >= min_distance => Some(i),
            _ => None,
        })
        .collect()
}

/// Independent validity check: balanced, matching types, depth bound.
pub fn is_valid(tokens: &[u32], max_depth: u32) -> bool {
    let mut stack = Vec::new();
    for &t in tokens {
        if is_open(t) {
            stack.push(t);
            if stack.len() as u32 > max_depth {
                return false;
            }
        } else if stack.pop().map(closer_for) != Some(t) {
            return false;
        }
    }
    stack.is_empty()
}
