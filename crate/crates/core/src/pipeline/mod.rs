//! Stage orchestration over a work directory.
//!
//! Layout: `corpus/`, `models/`, `embeddings/`, `codes/`, `predictions/` and
//! `reports/` with fixed file names, plus `manifest.jsonl` with one line per
//! stage run (seed, config digest, input and output SHA-256 digests).

mod config;
mod stages;
mod workdir;

pub use config::{IngestConfig, PipelineConfig};
pub use stages::{run_all, run_stage, Stage, StageOutcome};
pub use workdir::{read_manifest, sha256_file, ManifestEntry, Workdir};

/// Environment variable naming the default work directory.
pub const WORKDIR_ENV: &str = "LATENTMC_WORKDIR";
