use crate::error::{Error, Result};

/// Display characters for the first twenty bracket types.
const PAIRS: [(char, char); 20] = [
    ('(', ')'),
    ('[', ']'),
    ('{', '}'),
    ('<', '>'),
    ('⟨', '⟩'),
    ('⟦', '⟧'),
    ('⟪', '⟫'),
    ('⟬', '⟭'),
    ('⦃', '⦄'),
    ('⦅', '⦆'),
    ('⦇', '⦈'),
    ('⦉', '⦊'),
    ('⦋', '⦌'),
    ('⦍', '⦎'),
    ('⦏', '⦐'),
    ('⦑', '⦒'),
    ('⦓', '⦔'),
    ('⦕', '⦖'),
    ('⦗', '⦘'),
    ('«', '»'),
];

pub const BOS: u32 = 0;

/// Token ids for Dyck-k: `BOS = 0`, bracket type `t ∈ 1..=k` opens with
/// `2t - 1` and closes with `2t`, and `EOS = 2k + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyckVocab {
    pub k: u32,
}

impl DyckVocab {
    pub fn new(k: u32) -> Self {
        Self { k }
    }

    pub fn size(&self) -> usize {
        2 * self.k as usize + 2
    }

    pub fn bos(&self) -> u32 {
        BOS
    }

    pub fn eos(&self) -> u32 {
        2 * self.k + 1
    }

    pub fn open(&self, t: u32) -> u32 {
        2 * t - 1
    }

    pub fn close(&self, t: u32) -> u32 {
        2 * t
    }

    pub fn is_bracket(&self, id: u32) -> bool {
        id >= 1 && id <= 2 * self.k
    }

    pub fn closers(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.k).map(|t| 2 * t)
    }

    pub fn openers(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.k).map(|t| 2 * t - 1)
    }
}

pub fn is_open(id: u32) -> bool {
    id % 2 == 1
}

/// Bracket type of a bracket token (1-based).
pub fn bracket_type(id: u32) -> u32 {
    id.div_ceil(2)
}

/// Closing token matching an opening token.
pub fn closer_for(open: u32) -> u32 {
    open + 1
}

/// Renders bracket tokens as text; BOS/EOS are omitted. Types beyond the
/// display table fall back to space-separated ids.
pub fn render(tokens: &[u32], vocab: DyckVocab) -> String {
    let inner = tokens.iter().copied().filter(|&t| vocab.is_bracket(t));
    if vocab.k as usize <= PAIRS.len() {
        inner
            .map(|t| {
                let (o, c) = PAIRS[bracket_type(t) as usize - 1];
                if is_open(t) {
                    o
                } else {
                    c
                }
            })
            .collect()
    } else {
        inner.map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
    }
}

/// Parses bracket text (as produced by [`render`] for `k ≤ 20`) into bracket
/// tokens without BOS/EOS.
pub fn parse(text: &str) -> Result<Vec<u32>> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .enumerate()
        .map(|(i, ch)| {
            PAIRS
                .iter()
                .enumerate()
                .find_map(|(t, &(o, c))| {
                    let t = t as u32 + 1;
                    if ch == o {
                        Some(2 * t - 1)
                    } else if ch == c {
                        Some(2 * t)
                    } else {
                        None
                    }
                })
                .ok_or_else(|| Error::InvalidArgument(format!("character {ch:?} at {i} is not a bracket")))
        })
        .collect()
}
