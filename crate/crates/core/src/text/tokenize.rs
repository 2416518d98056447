use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How raw text is split into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Lowercase, split on whitespace, trim punctuation from each word.
    #[default]
    Whitespace,
    /// Overlapping character n-grams of the lowercased, punctuation-free text.
    CharNgram(usize),
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerMode::Whitespace => f.write_str("whitespace"),
            TokenizerMode::CharNgram(n) => write!(f, "char:{n}"),
        }
    }
}

impl FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "whitespace" {
            return Ok(TokenizerMode::Whitespace);
        }
        if let Some(n) = s.strip_prefix("char:") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad n-gram size in {s:?}")))?;
            if n == 0 {
                return Err(Error::InvalidArgument("n-gram size must be at least 1".into()));
            }
            return Ok(TokenizerMode::CharNgram(n));
        }
        Err(Error::InvalidArgument(format!(
            "unknown tokenizer {s:?} (expected \"whitespace\" or \"char:N\")"
        )))
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn tokenize(text: &str, mode: TokenizerMode) -> Result<Vec<String>> {
    match mode {
        TokenizerMode::Whitespace => Ok(text
            .split_whitespace()
            .map(|w| w.trim_matches(is_punct).to_lowercase())
            .filter(|w| !w.is_empty())
            .collect()),
        TokenizerMode::CharNgram(0) => {
            Err(Error::InvalidArgument("n-gram size must be at least 1".into()))
        }
        TokenizerMode::CharNgram(n) => {
            let cleaned: String = text.to_lowercase().chars().filter(|&c| !is_punct(c)).collect();
            let chars: Vec<char> = cleaned
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .chars()
                .collect();
            Ok(chars.windows(n).map(|w| w.iter().collect()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn whitespace_examples() {
        let t = tokenize("Switch outage, again.", TokenizerMode::Whitespace).unwrap();
        assert_eq!(t, ["switch", "outage", "again"]);
        assert!(tokenize("", TokenizerMode::Whitespace).unwrap().is_empty());
        assert!(tokenize(" -- ... ", TokenizerMode::Whitespace).unwrap().is_empty());
        assert_eq!(tokenize("e-mail's", TokenizerMode::Whitespace).unwrap(), ["e-mail's"]);
    }

    #[test]
    fn char_ngrams() {
        assert_eq!(tokenize("abc", TokenizerMode::CharNgram(2)).unwrap(), ["ab", "bc"]);
        assert_eq!(tokenize("A.b", TokenizerMode::CharNgram(2)).unwrap(), ["ab"]);
        assert!(tokenize("a", TokenizerMode::CharNgram(2)).unwrap().is_empty());
        assert_eq!(tokenize("障害発生", TokenizerMode::CharNgram(2)).unwrap(), ["障害", "害発", "発生"]);
        assert!(tokenize("abc", TokenizerMode::CharNgram(0)).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("char:3".parse::<TokenizerMode>().unwrap(), TokenizerMode::CharNgram(3));
        assert_eq!("whitespace".parse::<TokenizerMode>().unwrap(), TokenizerMode::Whitespace);
        assert!("char:0".parse::<TokenizerMode>().is_err());
        assert!("jieba".parse::<TokenizerMode>().is_err());
        assert_eq!(TokenizerMode::CharNgram(4).to_string().parse::<TokenizerMode>().unwrap(), TokenizerMode::CharNgram(4));
    }

    proptest! {
        #[test]
        fn whitespace_tokenization_is_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s, TokenizerMode::Whitespace).unwrap();
            let twice = tokenize(&once.join(" "), TokenizerMode::Whitespace).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
