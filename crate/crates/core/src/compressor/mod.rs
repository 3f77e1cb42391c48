//! Compositional discrete codes for review embeddings.
//!
//! Each embedding is approximated by a sum of `K` codewords, one drawn from
//! each of `K` codebooks of size `M`. Assignments come from a small score
//! network trained through a Gumbel-Softmax relaxation, and the argmax of its
//! logits gives the latent ratings in `1..=M`.

mod codebook;
mod codes;
mod gumbel;
mod train;

pub use codebook::{init_codebooks, reconstruct_embedding, Codebooks};
pub use codes::{
    brute_force_best_codes, compression_loss, discretize, hard_loss, CodeLogits, LatentEntry,
    LatentRatingTable, DEFAULT_ENUMERATION_CAP,
};
pub use gumbel::gumbel_softmax_sample;
pub use train::{
    soft_loss, train_compression, train_compression_from, CompressionConfig, CompressionModel,
    ScoreNetwork, TrainedCompression,
};
