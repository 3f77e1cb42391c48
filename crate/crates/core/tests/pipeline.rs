use std::fs;
use std::path::{Path, PathBuf};

use latentmc::pipeline::{read_manifest, run_all, run_stage, PipelineConfig, Stage, Workdir};
use latentmc::recommender::{Algorithm, CriteriaSource};
use latentmc::rng::derive_seed;
use latentmc::Error;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic200.jsonl")
}

fn config() -> PipelineConfig {
    let mut c = PipelineConfig::new(42);
    c.corpus = Some(fixture());
    c.encoder.input_dim = 6;
    c.encoder.hidden_dim = 6;
    c.encoder.epochs = 2;
    c.compression.k = 3;
    c.compression.epochs = 5;
    c.evaluation.folds = 3;
    c.recommender.svr.epochs = 20;
    c
}

fn run_chain(c: &PipelineConfig, wd: &Workdir) {
    for st in Stage::ALL {
        run_stage(st, c, wd).unwrap_or_else(|e| panic!("{st}: {e}"));
    }
}

#[test]
fn chained_stages_write_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let wd = Workdir::new(dir.path());
    let c = config();
    run_chain(&c, &wd);

    for p in [
        wd.reviews(),
        wd.vocab(),
        wd.stats(),
        wd.encoder(),
        wd.embeddings(),
        wd.embedding_ids(),
        wd.pca(),
        wd.codes(),
        wd.codebooks(),
        wd.predictor(Algorithm::Knn, CriteriaSource::Latent),
        wd.predictions(0, Algorithm::Knn, CriteriaSource::Overall),
        wd.report("summary.csv"),
        wd.report("folds.csv"),
        wd.report("table.txt"),
        wd.report("code_alignment.csv"),
    ] {
        assert!(p.is_file(), "missing {}", p.display());
    }

    let manifest = read_manifest(&wd).unwrap();
    let stages: Vec<&str> = manifest.iter().map(|m| m.stage.as_str()).collect();
    assert_eq!(stages, ["ingest", "train-encoder", "embed", "compress", "recommend", "evaluate"]);
    for m in &manifest {
        assert_eq!(m.seed, derive_seed(42, &m.stage));
        assert!(!m.outputs.is_empty());
    }
    assert!(manifest[2].inputs.contains_key("models/encoder.lmc"));
    assert_eq!(manifest[1].outputs["models/encoder.lmc"], manifest[2].inputs["models/encoder.lmc"]);
}

#[test]
fn summary_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let wd = Workdir::new(dir.path());
    let c = config();
    let report = run_all(&c, &wd).unwrap();
    let text = fs::read_to_string(wd.report("summary.csv")).unwrap();
    let expected = Algorithm::ALL.len() * CriteriaSource::ALL.len() * 2 * c.evaluation.k_values.len();
    assert_eq!(text.lines().count(), 1 + expected);
    assert!(report.failures.is_empty(), "{:?}", report.failures);
}

#[test]
fn embed_without_encoder_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let wd = Workdir::new(dir.path());
    let c = config();
    run_stage(Stage::Ingest, &c, &wd).unwrap();
    let err = run_stage(Stage::Embed, &c, &wd).unwrap_err();
    match err.root() {
        Error::MissingArtifact { path, stage } => {
            assert_eq!(stage, "train-encoder");
            assert!(path.ends_with("models/encoder.lmc"));
        }
        other => panic!("unexpected {other}"),
    }
    assert!(err.to_string().contains("train-encoder"));
}

#[test]
fn compress_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let wd = Workdir::new(dir.path());
    let c = config();
    for st in [Stage::Ingest, Stage::TrainEncoder, Stage::Embed, Stage::Compress] {
        run_stage(st, &c, &wd).unwrap();
    }
    let first = fs::read(wd.codes()).unwrap();
    let books = fs::read(wd.codebooks()).unwrap();
    run_stage(Stage::Compress, &c, &wd).unwrap();
    assert_eq!(fs::read(wd.codes()).unwrap(), first);
    assert_eq!(fs::read(wd.codebooks()).unwrap(), books);
}

#[test]
fn full_run_matches_chained_digests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (wa, wb) = (Workdir::new(a.path()), Workdir::new(b.path()));
    let c = config();
    run_all(&c, &wa).unwrap();
    run_chain(&c, &wb);
    let (ma, mb) = (read_manifest(&wa).unwrap(), read_manifest(&wb).unwrap());
    assert_eq!(ma.len(), mb.len());
    for (x, y) in ma.iter().zip(&mb) {
        // the corpus input is recorded by absolute path, identical for both
        assert_eq!(x, y, "stage {}", x.stage);
    }
}

#[test]
fn missing_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let wd = Workdir::new(dir.path());
    let mut c = config();
    c.corpus = Some(dir.path().join("nope.jsonl"));
    let err = run_stage(Stage::Ingest, &c, &wd).unwrap_err();
    assert!(matches!(err.root(), Error::Config(_)), "{err}");
    c.compression.m = 9;
    let err = run_stage(Stage::Ingest, &c, &wd).unwrap_err();
    assert!(matches!(err.root(), Error::Config(_)), "{err}");
    assert!(!wd.manifest().exists());
}
