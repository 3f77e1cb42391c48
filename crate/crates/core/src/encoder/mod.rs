//! Review encoding with a bidirectional GRU sequence autoencoder.

mod embedding;
mod gru;
mod model;
mod train;

pub use embedding::{embed_corpus, EmbeddingMatrix};
pub use gru::{gru_step, GruParams};
pub use model::{AeParams, AutoencoderDims, AutoencoderModel};
pub use train::{batch_loss_grad, sequence_loss, train_autoencoder, EncoderConfig, TrainedAutoencoder};
