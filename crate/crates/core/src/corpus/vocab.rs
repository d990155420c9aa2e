use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Example, Token};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
const PAD: &str = "<pad>";
const UNK: &str = "<unk>";

/// Lemma vocabulary. Ids 0 and 1 are reserved for padding and unknown
/// lemmas; corpus lemmas follow in order of decreasing frequency, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn build(examples: &[Example], min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for ex in examples {
            for tok in ex.segments.iter().flatten() {
                *counts.entry(tok.lemma.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(lemma, c)| c >= min_count.max(1) && lemma != PAD && lemma != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = [PAD, UNK]
            .into_iter()
            .chain(kept.into_iter().map(|(l, _)| l))
            .map(str::to_string)
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuilds from a stored token list (index = id).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, lemma: &str) -> u32 {
        match self.index.get(lemma) {
            Some(&id) if id > UNK_ID => id,
            _ => UNK_ID,
        }
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.id(lemma) != UNK_ID
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(&t.lemma)).collect()
    }

    /// SHA-256 over the id-ordered token list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Pos, Task};

    fn corpus(words: &[&str]) -> Vec<Example> {
        vec![Example {
            id: "0".into(),
            task: Task::Classification,
            segments: vec![words
                .iter()
                .map(|w| Token::new(*w, *w, Pos::Noun))
                .collect()],
            label: 0,
            annotation: None,
        }]
    }

    #[test]
    fn counts_and_reserved_ids() {
        let v = Vocabulary::build(&corpus(&["a", "b", "a"]), 1);
        assert_eq!(v.len(), 4);
        assert_eq!(v.token(PAD_ID), Some("<pad>"));
        assert_eq!(v.token(UNK_ID), Some("<unk>"));
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("zzz"), UNK_ID);
    }

    #[test]
    fn min_count_filters() {
        let v = Vocabulary::build(&corpus(&["a", "b", "a"]), 2);
        assert_eq!(v.len(), 3);
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
    }

    #[test]
    fn reserved_strings_in_corpus_never_collide() {
        let v = Vocabulary::build(&corpus(&["<pad>", "<unk>", "x"]), 1);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("<pad>"), UNK_ID);
    }

    #[test]
    fn deterministic_assignment_and_hash() {
        let a = Vocabulary::build(&corpus(&["c", "b", "a", "b"]), 1);
        let b = Vocabulary::build(&corpus(&["c", "b", "a", "b"]), 1);
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let c = Vocabulary::build(&corpus(&["c", "b", "a"]), 1);
        assert_ne!(a.hash(), c.hash());
    }
}
