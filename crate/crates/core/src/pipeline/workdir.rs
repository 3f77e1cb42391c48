use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Stage;
use crate::recommender::{Algorithm, CriteriaSource};
use crate::{Error, Result};

/// Fixed artifact locations under a work directory.
#[derive(Clone, Debug)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub const SUBDIRS: [&'static str; 6] = ["corpus", "models", "embeddings", "codes", "predictions", "reports"];

    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<()> {
        for d in Self::SUBDIRS {
            let p = self.root.join(d);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Path relative to the root, `/`-separated, for manifests.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn reviews(&self) -> PathBuf {
        self.path("corpus/reviews.jsonl")
    }
    pub fn vocab(&self) -> PathBuf {
        self.path("corpus/vocab.txt")
    }
    pub fn stats(&self) -> PathBuf {
        self.path("corpus/stats.json")
    }
    pub fn rejected(&self) -> PathBuf {
        self.path("corpus/rejected.csv")
    }
    pub fn encoder(&self) -> PathBuf {
        self.path("models/encoder.lmc")
    }
    pub fn encoder_history(&self) -> PathBuf {
        self.path("models/encoder_history.csv")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.path("embeddings/embeddings.bin")
    }
    pub fn embedding_ids(&self) -> PathBuf {
        self.path("embeddings/embeddings.bin.ids")
    }
    pub fn pca(&self) -> PathBuf {
        self.path("embeddings/pca.bin")
    }
    pub fn pca_ids(&self) -> PathBuf {
        self.path("embeddings/pca.bin.ids")
    }
    pub fn codebooks(&self) -> PathBuf {
        self.path("models/codebooks.lmc")
    }
    pub fn compression_history(&self) -> PathBuf {
        self.path("models/compression_history.csv")
    }
    pub fn codes(&self) -> PathBuf {
        self.path("codes/codes.csv")
    }
    pub fn predictor(&self, a: Algorithm, s: CriteriaSource) -> PathBuf {
        self.path(&format!("models/predictor-{a}-{s}.lmc"))
    }
    pub fn predictions(&self, fold: usize, a: Algorithm, s: CriteriaSource) -> PathBuf {
        self.path(&format!("predictions/fold{fold}/{a}-{s}.csv"))
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.path(&format!("reports/{name}"))
    }
    pub fn manifest(&self) -> PathBuf {
        self.path("manifest.jsonl")
    }

    /// Errors with the producing stage if `path` is absent.
    pub fn require(&self, path: &Path, producer: Stage) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                stage: producer.name().to_string(),
            })
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    /// The stage's substream seed.
    pub seed: u64,
    /// Digest of the serialised configuration.
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl ManifestEntry {
    pub fn new(stage: Stage, seed: u64, config_toml: &str) -> Self {
        Self {
            stage: stage.name().to_string(),
            seed,
            config: hex::encode(Sha256::digest(config_toml.as_bytes())),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn digest_inputs(&mut self, wd: &Workdir, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            self.inputs.insert(wd.relative(p), sha256_file(p)?);
        }
        Ok(())
    }

    pub fn digest_outputs(&mut self, wd: &Workdir, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            self.outputs.insert(wd.relative(p), sha256_file(p)?);
        }
        Ok(())
    }

    pub fn append(&self, wd: &Workdir) -> Result<()> {
        let path = wd.manifest();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(self).expect("manifest serialises");
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }
}

pub fn read_manifest(wd: &Workdir) -> Result<Vec<ManifestEntry>> {
    let path = wd.manifest();
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Record {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
