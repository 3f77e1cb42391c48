//! Review corpora: loading, cleaning, vocabulary, folds and the planted
//! synthetic corpus.

mod filter;
mod folds;
mod review;
mod stats;
pub mod synthetic;
mod vocab;

pub use filter::filter_corpus;
pub use folds::{split_folds, FoldAssignment};
pub use review::{
    load_reviews, read_reviews_jsonl, write_reviews_jsonl, LoadReport, RecordError, Review,
    ReviewFormat,
};
pub use stats::{corpus_stats, round_significant, CorpusStats};
pub use synthetic::{generate_synthetic_corpus, SyntheticConfig};
pub use vocab::{
    build_vocabulary, detokenize, split_words, tokenize, TokenSequence, Vocabulary, BOS, EOS,
    PAD, UNK,
};
