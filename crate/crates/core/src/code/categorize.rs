//! Prediction-type labels for code characters.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Whitespace,
    Keyword,
    NewWord,
    RepeatedWord,
    CloseBracket,
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Whitespace,
        Category::Keyword,
        Category::NewWord,
        Category::RepeatedWord,
        Category::CloseBracket,
        Category::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Whitespace => "whitespace",
            Category::Keyword => "keyword",
            Category::NewWord => "new_word",
            Category::RepeatedWord => "repeated_word",
            Category::CloseBracket => "close_bracket",
            Category::Other => "other",
        }
    }
}

/// Java reserved words plus `true`, `false` and `null`.
pub const JAVA_KEYWORDS: &str = include_str!("../../data/java_keywords.txt");

pub fn parse_keywords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn java_keywords() -> HashSet<String> {
    parse_keywords(JAVA_KEYWORDS)
}

pub fn load_keywords(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_keywords(&text))
}

/// Whitespace as Python's `str.isspace` sees it.
pub fn is_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

/// One label per character. Words are maximal alphanumeric runs; a word is
/// a keyword, else repeated if the same string occurred as an earlier word,
/// else new.
pub fn categorize_characters(text: &str, keywords: &HashSet<String>) -> Vec<Category> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::with_capacity(chars.len());
    let mut seen: HashSet<String> = HashSet::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_space(c) {
            out.push(Category::Whitespace);
            i += 1;
        } else if matches!(c, ')' | ']' | '}') {
            out.push(Category::CloseBracket);
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let cat = if keywords.contains(&word) {
                Category::Keyword
            } else if seen.contains(&word) {
                Category::RepeatedWord
            } else {
                Category::NewWord
            };
            seen.insert(word);
            out.extend(std::iter::repeat_n(cat, i - start));
        } else {
            out.push(Category::Other);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Category::*;

    #[test]
    fn if_statement() {
        let l = categorize_characters("if (x) {", &java_keywords());
        assert_eq!(l, vec![Keyword, Keyword, Whitespace, Other, NewWord, CloseBracket, Whitespace, Other]);
    }

    #[test]
    fn repetition() {
        let l = categorize_characters("foo(foo)", &java_keywords());
        assert_eq!(&l[..3], &[NewWord; 3]);
        assert_eq!(l[3], Other);
        assert_eq!(&l[4..7], &[RepeatedWord; 3]);
        assert_eq!(l[7], CloseBracket);
    }

    #[test]
    fn underscores_split_words_and_case_matters() {
        let l = categorize_characters("a_b Null null A a", &java_keywords());
        assert_eq!(l[1], Other);
        assert_eq!(l[2], NewWord);
        assert_eq!(&l[4..8], &[NewWord; 4]);
        assert_eq!(&l[9..13], &[Keyword; 4]);
        assert_eq!(l[14], NewWord);
        assert_eq!(l[16], RepeatedWord);
    }

    #[test]
    fn keyword_file_has_the_literals() {
        let k = java_keywords();
        assert_eq!(k.len(), 53);
        for w in ["true", "false", "null", "class", "goto", "strictfp"] {
            assert!(k.contains(w));
        }
    }
}
