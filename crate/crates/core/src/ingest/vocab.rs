use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Review;
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Word list with the four reserved tokens at indices 0..4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    /// Builds a vocabulary from ordinary words (reserved tokens are prepended).
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Result<Self> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for w in words {
            if all.contains(&w) {
                return Err(Error::invalid(format!("duplicate vocabulary word `{w}`")));
            }
            all.push(w);
        }
        Ok(all.into())
    }

    /// Restores a vocabulary from its full word list (reserved tokens included).
    pub fn from_full_list(words: Vec<String>) -> Result<Self> {
        if words.len() < 4 || words[..4].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::invalid("vocabulary must start with the reserved tokens"));
        }
        let vocab: Vocabulary = words.into();
        if vocab.index.len() != vocab.words.len() {
            return Err(Error::invalid("vocabulary contains duplicate words"));
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: u32) -> Option<&str> {
        self.words.get(idx as usize).map(String::as_str)
    }
}

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Keeps words with frequency `>= min_freq`, ranked by descending frequency and
/// then lexicographically, truncated to `max_size - 4` ordinary words.
pub fn build_vocabulary(reviews: &[Review], max_size: usize, min_freq: usize) -> Result<Vocabulary> {
    if max_size <= RESERVED.len() {
        return Err(Error::invalid(format!(
            "vocabulary cap {max_size} leaves no room beyond the reserved tokens"
        )));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in reviews {
        for w in split_words(&r.text) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_freq)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - RESERVED.len());
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w))
}

/// Index sequence for one review, framed by BOS/EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub review_id: String,
    pub indices: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Maps the review text to `[BOS, w.., EOS]`, out-of-vocabulary words to UNK,
/// keeping at most `max_len` indices in total (`max_len >= 2`).
pub fn tokenize(review: &Review, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let max_len = max_len.max(2);
    let mut indices = Vec::with_capacity(max_len.min(64));
    indices.push(BOS);
    indices.extend(
        split_words(&review.text)
            .take(max_len - 2)
            .map(|w| vocab.index_of(&w).unwrap_or(UNK)),
    );
    indices.push(EOS);
    TokenSequence {
        review_id: review.review_id.clone(),
        indices,
    }
}

/// Space-joined words of a sequence, without BOS/EOS/PAD.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    seq.indices
        .iter()
        .filter(|&&i| i != BOS && i != EOS && i != PAD)
        .map(|&i| vocab.word(i).unwrap_or(RESERVED[UNK as usize]))
        .collect::<Vec<_>>()
        .join(" ")
}
