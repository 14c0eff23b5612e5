/// Character vocabulary: the 95 printable ASCII characters `0x20..=0x7E` at
/// ids `0..95`, then UNKNOWN, BOS and EOS. Tabs and newlines are outside the
/// printable range and encode as UNKNOWN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CharVocab;

impl CharVocab {
    pub const PRINTABLE: u32 = 95;
    pub const UNKNOWN: u32 = 95;
    pub const BOS: u32 = 96;
    pub const EOS: u32 = 97;
    pub const SIZE: usize = 98;

    pub fn id(c: char) -> u32 {
        match c {
            ' '..='~' => c as u32 - 0x20,
            _ => Self::UNKNOWN,
        }
    }

    pub fn char_of(id: u32) -> Option<char> {
        (id < Self::PRINTABLE).then(|| char::from_u32(id + 0x20).expect("printable ASCII"))
    }

    /// Ids of the characters, without BOS/EOS.
    pub fn encode(text: &str) -> Vec<u32> {
        text.chars().map(Self::id).collect()
    }

    /// `BOS text EOS`.
    pub fn encode_sequence(text: &str) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len() + 2);
        out.push(Self::BOS);
        out.extend(text.chars().map(Self::id));
        out.push(Self::EOS);
        out
    }

    /// Inverse of [`encode`](Self::encode); UNKNOWN becomes U+FFFD and
    /// BOS/EOS are dropped.
    pub fn decode(ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| i != Self::BOS && i != Self::EOS)
            .map(|&i| Self::char_of(i).unwrap_or('\u{FFFD}'))
            .collect()
    }
}
