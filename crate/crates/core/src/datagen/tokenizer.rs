// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const EOD: usize = 1;
const SPECIALS: [&str; 2] = ["<unk>", "<eod>"];

/// Splits text into words (maximal alphanumeric runs) and single
/// punctuation characters, with byte ranges. Whitespace is dropped.
pub fn pre_tokenize(text: &str) -> Vec<(&str, Range<usize>)> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            out.push((&text[s..i], s..i));
        }
        if !c.is_whitespace() {
            let end = i + c.len_utf8();
            out.push((&text[i..end], i..end));
        }
    }
    if let Some(s) = word_start {
        out.push((&text[s..], s..text.len()));
    }
    out
}

/// Word-level vocabulary: `<unk>`, `<eod>`, then every corpus token sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl From<VocabFile> for Tokenizer {
    fn from(v: VocabFile) -> Self {
        let index = v.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: v.tokens, index }
    }
}

impl From<Tokenizer> for VocabFile {
    fn from(t: Tokenizer) -> Self {
        Self { tokens: t.tokens }
    }
}

impl Tokenizer {
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let words: BTreeSet<&str> = corpus
            .iter()
            .flat_map(|d| pre_tokenize(d.as_ref()).into_iter().map(|(w, _)| w))
            .collect();
        let tokens = SPECIALS
            .iter()
            .copied()
            .chain(words)
            .map(String::from)
            .collect();
        Ok(VocabFile { tokens }.into())
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(SPECIALS[UNK], String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.encode_with_offsets(text).into_iter().map(|(id, _)| id).collect()
    }

    /// Token ids with the byte range of each token in `text`.
    pub fn encode_with_offsets(&self, text: &str) -> Vec<(usize, Range<usize>)> {
        pre_tokenize(text)
            .into_iter()
            .map(|(w, r)| (self.id(w).unwrap_or(UNK), r))
            .collect()
    }

    /// Joins tokens with single spaces, except none before `, . ? ! : ; ) '
    /// -` and none after `' ( - $`.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        let mut glue_next = true;
        for &id in ids {
            let t = self.token(id);
            let glue_prev = matches!(t, "," | "." | "?" | "!" | ":" | ";" | ")" | "'" | "-");
            if !glue_next && !glue_prev {
                out.push(' ');
            }
            out.push_str(t);
            glue_next = matches!(t, "'" | "(" | "-" | "$");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn squash(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    #[test]
    fn three_words_round_trip() {
        let tok = Tokenizer::build(&["Alice Smith stars"]).unwrap();
        let ids = tok.encode("Alice Smith stars");
        assert_eq!(ids.len(), 3);
        assert_eq!(tok.decode(&ids), "Alice Smith stars");
    }

    #[test]
    fn punctuation_and_glue() {
        let text = "Q: Who stars with Annette O'Toole? A: grossed $7 million, in Jean-Luc.";
        let tok = Tokenizer::build(&[text]).unwrap();
        let ids = tok.encode(text);
        assert!(!ids.contains(&UNK));
        assert_eq!(tok.decode(&ids), "Q: Who stars with Annette O'Toole? A: grossed $7 million, in Jean-Luc.");
        let odd = "In a new film,Sarah stars.The End";
        let tok = Tokenizer::build(&[odd]).unwrap();
        assert_eq!(squash(&tok.decode(&tok.encode(odd))), squash(odd));
    }

    #[test]
    fn vocab_counts_unique_tokens() {
        let corpus = ["a b, c.", "b c d!", "d e"];
        let tok = Tokenizer::build(&corpus).unwrap();
        // a b c d e , . !
        assert_eq!(tok.vocab_size(), 2 + 8);
        assert_eq!(tok.token(UNK), "<unk>");
        assert_eq!(tok.token(EOD), "<eod>");
        assert_eq!(tok.encode("zebra"), vec![UNK]);
        assert!(Tokenizer::build::<&str>(&[]).is_err());
    }

    #[test]
    fn offsets_cover_source() {
        let text = "Ann  O'Neil,x";
        let got: Vec<_> = pre_tokenize(text).into_iter().map(|(w, r)| (w, &text[r])).collect();
        assert!(got.iter().all(|(w, s)| w == s));
        assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), ["Ann", "O", "'", "Neil", ",", "x"]);
    }

    #[test]
    fn json_round_trip() {
        let tok = Tokenizer::build(&["x y z"]).unwrap();
        let back: Tokenizer = serde_json::from_str(&serde_json::to_string(&tok).unwrap()).unwrap();
        assert_eq!(back, tok);
    }
}
