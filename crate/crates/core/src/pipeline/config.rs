use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compressor::CompressionConfig;
use crate::encoder::EncoderConfig;
use crate::evaluation::EvalConfig;
use crate::ingest::ReviewFormat;
use crate::recommender::RecommenderConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Input format; inferred from the corpus extension when absent.
    pub format: Option<ReviewFormat>,
    pub m_rating: u32,
    pub min_reviews_per_user: usize,
    pub min_reviews_per_item: usize,
    pub vocab_size: usize,
    pub min_freq: usize,
    pub max_len: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            format: None,
            m_rating: 5,
            min_reviews_per_user: 5,
            min_reviews_per_item: 5,
            vocab_size: 10_000,
            min_freq: 2,
            max_len: 64,
        }
    }
}

/// Everything a run needs. Serialised as TOML; `seed` is mandatory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Review file read by the `ingest` stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub compression: CompressionConfig,
    #[serde(default)]
    pub recommender: RecommenderConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            corpus: None,
            workdir: None,
            ingest: IngestConfig::default(),
            encoder: EncoderConfig::default(),
            compression: CompressionConfig::default(),
            recommender: RecommenderConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.ingest;
        if i.m_rating < 2 {
            return Err(Error::Config("ingest.m_rating must be at least 2".into()));
        }
        if i.min_reviews_per_user == 0 || i.min_reviews_per_item == 0 {
            return Err(Error::Config("ingest thresholds must be at least 1".into()));
        }
        if i.vocab_size <= 4 {
            return Err(Error::Config("ingest.vocab_size must exceed the 4 reserved tokens".into()));
        }
        if i.max_len < 2 {
            return Err(Error::Config("ingest.max_len must be at least 2".into()));
        }
        self.encoder.validate()?;
        self.compression.validate()?;
        if self.compression.m > i.m_rating as usize {
            return Err(Error::Config(format!(
                "compression.m = {} exceeds the rating scale 1..={}",
                self.compression.m, i.m_rating
            )));
        }
        if self.compression.k > 2 * self.encoder.hidden_dim {
            return Err(Error::Config(format!(
                "compression.k = {} exceeds the embedding width {}",
                self.compression.k,
                2 * self.encoder.hidden_dim
            )));
        }
        self.recommender.validate()?;
        self.evaluation.validate(i.m_rating)
    }

    /// Corpus path with its format, checked to exist.
    pub fn corpus_input(&self) -> Result<(PathBuf, ReviewFormat)> {
        let path = self
            .corpus
            .clone()
            .ok_or_else(|| Error::Config("no corpus path configured".into()))?;
        if !path.is_file() {
            return Err(Error::Config(format!("corpus {} does not exist", path.display())));
        }
        let format = match self.ingest.format {
            Some(f) => f,
            None => match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => ReviewFormat::Csv,
                Some("jsonl") | Some("json") => ReviewFormat::Jsonl,
                _ => {
                    return Err(Error::Config(format!(
                        "cannot infer the format of {}; set ingest.format",
                        path.display()
                    )))
                }
            },
        };
        Ok((path, format))
    }
}
