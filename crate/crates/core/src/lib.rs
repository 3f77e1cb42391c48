//! Latent multi-criteria ratings for recommendation.
//!
//! The pipeline has three stages:
//!
//! 1. [`encoder`]: a bidirectional GRU sequence autoencoder maps each review to a
//!    continuous embedding (concatenated final forward/backward hidden states).
//! 2. [`compressor`]: compositional code learning with the Gumbel-Softmax relaxation
//!    compresses every embedding into `K` discrete codes over `{1..M}`.
//! 3. [`recommender`]: the codes are used as multi-criteria ratings by KNN,
//!    SlopeOne, co-clustering, SVR and aggregation-function recommenders.
//!
//! [`ingest`] loads and prepares review corpora (including a planted synthetic
//! corpus), [`evaluation`] runs k-fold cross-validation with Pre@k/Rec@k and paired
//! significance tests, and [`pipeline`] persists every stage to a work directory.

pub mod compressor;
pub mod container;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod linalg;
pub mod optim;
pub mod pipeline;
pub mod recommender;
pub mod rng;

pub use error::{Error, Result};
