//! Whitespace-and-punctuation tokenizer with a corpus-built vocabulary.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Ids of the reserved marker tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Markers {
    pub pad: TokenId,
    pub unk: TokenId,
    pub cls: TokenId,
    pub sep: TokenId,
    pub usr: TokenId,
    pub agt: TokenId,
}

pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<TokenId>;
    fn markers(&self) -> Markers;
    fn vocab_size(&self) -> usize;
}

const RESERVED: [(&str, &str); 6] = [
    ("pad", "[PAD]"),
    ("unk", "[UNK]"),
    ("cls", "[CLS]"),
    ("sep", "[SEP]"),
    ("usr", "[USR]"),
    ("agt", "[AGT]"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordTokenizer {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    markers: Markers,
}

#[derive(Serialize, Deserialize)]
struct VocabHeader {
    markers: HashMap<String, String>,
}

/// Lowercases and splits on whitespace; every punctuation character is
/// its own piece.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() {
                cur.extend(ch.to_lowercase());
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

impl WordTokenizer {
    /// Vocabulary of every piece seen at least `min_count` times, ordered by
    /// descending frequency then lexicographically.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in split_words(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|(_, s)| s.to_string())
            .chain(words.into_iter().map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens).expect("reserved markers present")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        let id = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::Data(format!("vocabulary lacks marker {s}")))
        };
        let markers = Markers {
            pad: id("[PAD]")?,
            unk: id("[UNK]")?,
            cls: id("[CLS]")?,
            sep: id("[SEP]")?,
            usr: id("[USR]")?,
            agt: id("[AGT]")?,
        };
        Ok(Self {
            tokens,
            index,
            markers,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn from_token_list(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    /// Header line with the marker table, then one token per line.
    pub fn to_vocab_string(&self) -> String {
        let header = VocabHeader {
            markers: RESERVED
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        let mut out = serde_json::to_string(&header).expect("header");
        out.push('\n');
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_vocab_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header: VocabHeader = lines
            .next()
            .ok_or_else(|| Error::Data("empty vocabulary file".into()))
            .and_then(|l| {
                serde_json::from_str(l).map_err(|e| Error::Data(format!("vocabulary header: {e}")))
            })?;
        for (key, marker) in RESERVED {
            if header.markers.get(key).map(String::as_str) != Some(marker) {
                return Err(Error::Data(format!(
                    "vocabulary header must declare {key} = {marker}"
                )));
            }
        }
        Self::from_tokens(lines.map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_vocab_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_vocab_str(&s)
    }
}

impl Tokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        split_words(text)
            .iter()
            .map(|w| self.index.get(w).copied().unwrap_or(self.markers.unk))
            .collect()
    }

    fn markers(&self) -> Markers {
        self.markers
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(
            split_words("Hello, World!"),
            vec!["hello", ",", "world", "!"]
        );
        assert_eq!(split_words("[cls] x"), vec!["[", "cls", "]", "x"]);
    }

    #[test]
    fn markers_never_produced_by_text() {
        let tok = WordTokenizer::build(["[CLS] [SEP] [USR] [AGT] cls sep usr agt"], 1);
        let m = tok.markers();
        let ids = tok.tokenize("[CLS] [SEP] [USR] [AGT] [PAD] [UNK] cls");
        for reserved in [m.cls, m.sep, m.usr, m.agt, m.pad] {
            assert!(!ids.contains(&reserved));
        }
    }

    #[test]
    fn vocab_file_round_trip() {
        let tok = WordTokenizer::build(["a b c a", "d e"], 1);
        let back = WordTokenizer::from_vocab_str(&tok.to_vocab_string()).unwrap();
        assert_eq!(tok, back);
        assert_eq!(back.tokenize("a e zzz"), tok.tokenize("a e zzz"));
        assert_eq!(back.tokenize("zzz"), vec![back.markers().unk]);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(WordTokenizer::from_vocab_str("{\"markers\":{}}\n[PAD]\n").is_err());
    }
}
