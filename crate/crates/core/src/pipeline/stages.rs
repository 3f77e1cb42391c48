use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::workdir::{ManifestEntry, Workdir};
use super::PipelineConfig;
use crate::compressor::{train_compression, LatentRatingTable};
use crate::encoder::{embed_corpus, train_autoencoder, AutoencoderModel, EmbeddingMatrix};
use crate::evaluation::{alignment_csv, code_alignment, cross_validate, pca_project, EvalReport};
use crate::ingest::{
    build_vocabulary, corpus_stats, filter_corpus, load_reviews, read_reviews_jsonl, tokenize,
    write_reviews_jsonl, Review, TokenSequence, Vocabulary,
};
use crate::recommender::{build_rating_table, write_predictions, CriteriaSource, Predictor};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    TrainEncoder,
    Embed,
    Compress,
    Recommend,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::TrainEncoder,
        Stage::Embed,
        Stage::Compress,
        Stage::Recommend,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::TrainEncoder => "train-encoder",
            Stage::Embed => "embed",
            Stage::Compress => "compress",
            Stage::Recommend => "recommend",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Files a stage wrote, plus the evaluation report for `evaluate`.
#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub report: Option<EvalReport>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::from_full_list(text.lines().map(str::to_string).collect())
        .map_err(|e| Error::format(path, e.to_string()))
}

fn tokens(reviews: &[Review], vocab: &Vocabulary, max_len: usize) -> Vec<TokenSequence> {
    reviews.iter().map(|r| tokenize(r, vocab, max_len)).collect()
}

fn history_csv(header: &str, columns: &[&[f64]]) -> String {
    let mut out = format!("{header}\n");
    for e in 0..columns.first().map_or(0, |c| c.len()) {
        out.push_str(&(e + 1).to_string());
        for c in columns {
            out.push_str(&format!(",{}", c[e]));
        }
        out.push('\n');
    }
    out
}

/// Runs one stage against the work directory and appends its manifest line.
pub fn run_stage(stage: Stage, config: &PipelineConfig, wd: &Workdir) -> Result<StageOutcome> {
    config.validate()?;
    wd.create()?;
    let mut entry = ManifestEntry::new(stage, derive_seed(config.seed, stage.name()), &config.to_toml());
    let outcome = execute(stage, config, wd, &mut entry).map_err(|e| e.in_stage(stage.name()))?;
    entry.digest_outputs(wd, &outcome.outputs)?;
    entry.append(wd)?;
    log::info!("{stage}: wrote {} file(s)", outcome.outputs.len());
    Ok(outcome)
}

fn execute(stage: Stage, config: &PipelineConfig, wd: &Workdir, entry: &mut ManifestEntry) -> Result<StageOutcome> {
    let m = config.ingest.m_rating;
    let seed = derive_seed(config.seed, stage.name());
    let mut outputs = Vec::new();
    let mut report = None;
    let load_reviews_artifact = |entry: &mut ManifestEntry| -> Result<Vec<Review>> {
        wd.require(&wd.reviews(), Stage::Ingest)?;
        entry.digest_inputs(wd, &[wd.reviews()])?;
        read_reviews_jsonl(&wd.reviews(), m)
    };
    match stage {
        Stage::Ingest => {
            let (path, format) = config.corpus_input()?;
            entry.digest_inputs(wd, std::slice::from_ref(&path))?;
            let loaded = load_reviews(&path, format, m)?;
            let i = &config.ingest;
            let reviews = filter_corpus(&loaded.reviews, i.min_reviews_per_user, i.min_reviews_per_item);
            if reviews.is_empty() {
                return Err(Error::invalid(format!(
                    "no review of {} survives the ({}, {}) thresholds",
                    path.display(),
                    i.min_reviews_per_user,
                    i.min_reviews_per_item
                )));
            }
            let mut seen = HashSet::new();
            if let Some(dup) = reviews.iter().find(|r| !seen.insert(r.review_id.as_str())) {
                return Err(Error::invalid(format!("duplicate review id {}", dup.review_id)));
            }
            let vocab = build_vocabulary(&reviews, i.vocab_size, i.min_freq)?;
            write_reviews_jsonl(&wd.reviews(), &reviews)?;
            write_text(&wd.vocab(), &(vocab.words().join("\n") + "\n"))?;
            let stats = corpus_stats(&reviews);
            let summary = serde_json::json!({
                "loaded": loaded.reviews.len(),
                "rejected": loaded.errors.len(),
                "kept": reviews.len(),
                "stats": stats,
                "sparsity_percent": stats.sparsity_percent(),
                "vocabulary": vocab.len(),
            });
            write_text(&wd.stats(), &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
            let mut rejected = String::from("line,message\n");
            for e in &loaded.errors {
                rejected.push_str(&format!("{},\"{}\"\n", e.line, e.message.replace('"', "\"\"")));
            }
            write_text(&wd.rejected(), &rejected)?;
            log::info!(
                "ingest: {} loaded, {} rejected, {} kept; sparsity {}",
                loaded.reviews.len(),
                loaded.errors.len(),
                reviews.len(),
                stats.sparsity_percent()
            );
            outputs.extend([wd.reviews(), wd.vocab(), wd.stats(), wd.rejected()]);
        }
        Stage::TrainEncoder => {
            let reviews = load_reviews_artifact(entry)?;
            wd.require(&wd.vocab(), Stage::Ingest)?;
            entry.digest_inputs(wd, &[wd.vocab()])?;
            let vocab = read_vocab(&wd.vocab())?;
            let seqs = tokens(&reviews, &vocab, config.ingest.max_len);
            let trained = train_autoencoder(&seqs, vocab.len(), config.ingest.max_len, &config.encoder, seed)?;
            trained.model.save(&wd.encoder(), Some(&vocab))?;
            write_text(&wd.encoder_history(), &history_csv("epoch,loss", &[&trained.loss_history]))?;
            outputs.extend([wd.encoder(), wd.encoder_history()]);
        }
        Stage::Embed => {
            let reviews = load_reviews_artifact(entry)?;
            wd.require(&wd.encoder(), Stage::TrainEncoder)?;
            entry.digest_inputs(wd, &[wd.encoder()])?;
            let (model, vocab) = AutoencoderModel::load(&wd.encoder())?;
            let vocab = vocab.ok_or_else(|| Error::format(wd.encoder(), "checkpoint has no vocabulary"))?;
            let seqs = tokens(&reviews, &vocab, model.dims.max_len);
            let emb = embed_corpus(&model, &seqs)?;
            emb.write(&wd.embeddings())?;
            outputs.extend([wd.embeddings(), wd.embedding_ids()]);
        }
        Stage::Compress => {
            let reviews = load_reviews_artifact(entry)?;
            wd.require(&wd.embeddings(), Stage::Embed)?;
            entry.digest_inputs(wd, &[wd.embeddings(), wd.embedding_ids()])?;
            let emb = EmbeddingMatrix::read(&wd.embeddings())?;
            let trained = train_compression(&emb, &config.compression, seed)?;
            let mut codes = trained.codes.clone();
            codes.attach_reviews(&reviews)?;
            codes.write_csv(&wd.codes())?;
            trained.model.save(&wd.codebooks())?;
            write_text(
                &wd.compression_history(),
                &history_csv("epoch,hard_loss,soft_loss", &[&trained.loss_history, &trained.soft_loss_history]),
            )?;
            outputs.extend([wd.codes(), wd.codebooks(), wd.compression_history()]);
        }
        Stage::Recommend => {
            let reviews = load_reviews_artifact(entry)?;
            wd.require(&wd.codes(), Stage::Compress)?;
            wd.require(&wd.embeddings(), Stage::Embed)?;
            entry.digest_inputs(wd, &[wd.codes(), wd.embeddings(), wd.embedding_ids()])?;
            let codes = LatentRatingTable::read_csv(&wd.codes(), config.compression.m)?;
            let emb = EmbeddingMatrix::read(&wd.embeddings())?;
            let pca = pca_project(&emb, config.compression.k)?;
            pca.write(&wd.pca())?;
            outputs.extend([wd.pca(), wd.pca_ids()]);
            for &source in &config.evaluation.sources {
                let continuous = match source {
                    CriteriaSource::Embedding => Some(&emb),
                    CriteriaSource::Pca => Some(&pca),
                    _ => None,
                };
                let table = match build_rating_table(&reviews, source, Some(&codes), continuous, m) {
                    Ok(t) => Arc::new(t),
                    Err(e) => {
                        log::warn!("recommend: skipping source {source}: {e}");
                        continue;
                    }
                };
                for &algorithm in config.evaluation.algorithms.iter().filter(|a| a.supports(source)) {
                    let label = format!("{algorithm}/{source}");
                    match Predictor::fit(algorithm, table.clone(), &config.recommender, derive_seed(seed, &label)) {
                        Ok(p) => {
                            let path = wd.predictor(algorithm, source);
                            p.save(&path)?;
                            outputs.push(path);
                        }
                        Err(e @ Error::Numerical(_)) => return Err(e),
                        Err(e) => log::warn!("recommend: skipping {label}: {e}"),
                    }
                }
            }
        }
        Stage::Evaluate => {
            let reviews = load_reviews_artifact(entry)?;
            wd.require(&wd.codes(), Stage::Compress)?;
            entry.digest_inputs(wd, &[wd.codes()])?;
            let codes = LatentRatingTable::read_csv(&wd.codes(), config.compression.m)?;
            let cv = cross_validate(&reviews, config, seed)?;
            for fold in &cv.folds {
                if let Ok(cells) = &fold.cells {
                    for (&(a, s), cell) in cells {
                        if let Ok(rows) = cell {
                            let path = wd.predictions(fold.fold, a, s);
                            if let Some(dir) = path.parent() {
                                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                            }
                            write_predictions(&path, rows)?;
                            outputs.push(path);
                        }
                    }
                }
            }
            let r = &cv.report;
            for (name, text) in [
                ("folds.csv", r.folds_csv()),
                ("summary.csv", r.summary_csv()),
                ("users.csv", r.users_csv()),
                ("table.txt", r.render_table()),
            ] {
                write_text(&wd.report(name), &text)?;
                outputs.push(wd.report(name));
            }
            if reviews.iter().all(|r| !r.criteria.is_empty()) {
                let mut codes = codes;
                codes.attach_reviews(&reviews)?;
                let al = code_alignment(&codes, &reviews)?;
                write_text(&wd.report("code_alignment.csv"), &alignment_csv(&al))?;
                outputs.push(wd.report("code_alignment.csv"));
            }
            report = Some(cv.report);
        }
    }
    Ok(StageOutcome {
        stage,
        outputs,
        report,
    })
}

/// Runs every stage in order; stops at the first failure.
pub fn run_all(config: &PipelineConfig, wd: &Workdir) -> Result<EvalReport> {
    let mut report = None;
    for stage in Stage::ALL {
        log::info!("running stage {stage}");
        report = run_stage(stage, config, wd)?.report.or(report);
    }
    Ok(report.expect("evaluate produces a report"))
}
