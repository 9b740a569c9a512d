use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::export::{export_representations, write_scores};
use super::featurize::{build_provider, featurize_corpus, FeaturizeOutput, RepresentationRecord, SampleFailure};
use crate::classifier::{train_with_history, MlpHead};
use crate::error::{Error, Result};
use crate::eval::{MetricsReport, ScoredSample};
use crate::label::Label;
use crate::manifest::{load_manifest, manifest_root, write_manifest, SampleRecord};
use crate::providers::Provider;
use crate::representation::FusionMode;

pub const MODEL_FILE: &str = "model.itmc";
pub const RUN_FILE: &str = "run.json";
pub const EVAL_RUN_FILE: &str = "eval_run.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const FAILURES_FILE: &str = "failures.json";
pub const REPRESENTATIONS_FILE: &str = "representations.csv";

/// Audit record written next to every trained model and every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub sample_count: usize,
    pub n_real: usize,
    pub n_fake: usize,
    pub failures: usize,
    pub embedding_dim: usize,
    pub mode: FusionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented_manifest: Option<PathBuf>,
}

impl RunMetadata {
    fn new(cfg: &RunConfig, reps: &[RepresentationRecord], failures: usize, dim: usize) -> Self {
        let n_fake = reps.iter().filter(|r| r.label.is_fake()).count();
        Self {
            config_hash: cfg.config_hash(),
            seed: cfg.train.seed,
            sample_count: reps.len(),
            n_real: reps.len() - n_fake,
            n_fake,
            failures,
            embedding_dim: dim,
            mode: cfg.fusion.mode,
            epochs: None,
            final_loss: None,
            augmented_manifest: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub head: MlpHead,
    pub metadata: RunMetadata,
    pub featurized: FeaturizeOutput,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: MetricsReport,
    pub scores: Vec<ScoredSample>,
    pub metadata: RunMetadata,
    pub featurized: FeaturizeOutput,
}

fn check_both_classes(labels: impl Iterator<Item = Label> + Clone) -> Result<()> {
    let has = |l: Label| labels.clone().any(|x| x == l);
    match (has(Label::Real), has(Label::Fake)) {
        (true, true) => Ok(()),
        (false, false) => Err(Error::EmptyDataset),
        (true, false) => Err(Error::SingleClassDataset(Label::Real.name())),
        (false, true) => Err(Error::SingleClassDataset(Label::Fake.name())),
    }
}

/// Featurizes `records` and trains a head on the fused vectors.
pub fn train_on_records(
    records: &[SampleRecord],
    provider: &dyn Provider,
    image_root: &Path,
    cfg: &RunConfig,
) -> Result<TrainingRun> {
    check_both_classes(records.iter().map(|r| r.label))?;
    let featurized = featurize_corpus(records, provider, image_root, cfg)?;
    let reps = featurized.representations();
    check_both_classes(reps.iter().map(|r| r.label))?;
    let dataset: Vec<_> = reps.iter().map(|r| (r.d_combined.clone(), r.label)).collect();
    let outcome = train_with_history(&dataset, &cfg.train)?;
    let mut metadata = RunMetadata::new(cfg, &reps, featurized.failures.len(), provider.embedding_dim());
    metadata.epochs = Some(cfg.train.epochs);
    metadata.final_loss = outcome.epoch_losses.last().copied();
    Ok(TrainingRun {
        head: outcome.head,
        metadata,
        featurized,
    })
}

/// `prob_fake` for every representation, in input order.
pub fn score_records(head: &MlpHead, reps: &[RepresentationRecord]) -> Result<Vec<ScoredSample>> {
    reps.iter()
        .map(|r| {
            let p = head.predict(&r.d_combined)?;
            Ok(ScoredSample::new(r.id.clone(), p.prob_fake, r.label))
        })
        .collect()
}

pub fn run_eval_on_records(
    records: &[SampleRecord],
    provider: &dyn Provider,
    image_root: &Path,
    head: &MlpHead,
    cfg: &RunConfig,
) -> Result<EvalRun> {
    if head.input_dim() != provider.embedding_dim() {
        return Err(Error::DimensionMismatch {
            expected: head.input_dim(),
            actual: provider.embedding_dim(),
        });
    }
    let featurized = featurize_corpus(records, provider, image_root, cfg)?;
    let reps = featurized.representations();
    let scores = score_records(head, &reps)?;
    let report = MetricsReport::compute(&scores)?;
    let metadata = RunMetadata::new(cfg, &reps, featurized.failures.len(), provider.embedding_dim());
    Ok(EvalRun {
        report,
        scores,
        metadata,
        featurized,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Sibling of the input manifest carrying computed captions and detections.
/// The input itself is never modified. A write failure only costs the cache.
fn write_augmented(manifest: &Path, records: &[SampleRecord], out: &FeaturizeOutput) -> Option<PathBuf> {
    let stem = manifest.file_stem().map_or_else(|| "manifest".into(), |s| s.to_string_lossy().into_owned());
    let stem = stem.strip_suffix(".augmented").unwrap_or(&stem).to_string();
    let path = manifest_root(manifest).join(format!("{stem}.augmented.jsonl"));
    if path.file_name() == manifest.file_name() {
        return None;
    }
    match write_manifest(&path, &out.augmented_manifest(records)) {
        Ok(()) => Some(path),
        Err(e) => {
            log::warn!("could not write augmented manifest: {e}");
            None
        }
    }
}

fn load(manifest: &Path, cfg: &RunConfig) -> Result<(Vec<SampleRecord>, PathBuf, std::sync::Arc<dyn Provider>)> {
    cfg.validate()?;
    let records = load_manifest(manifest)?;
    let root = manifest_root(manifest);
    let provider = build_provider(&cfg.provider, &root, &records)?;
    Ok((records, root, provider))
}

fn write_failures(out_dir: &Path, failures: &[SampleFailure]) -> Result<()> {
    write_json(&out_dir.join(FAILURES_FILE), &failures)
}

/// Featurizes a manifest, writes `failures.json` into `out_dir` and the
/// augmented manifest next to the input. Returns the augmented manifest path
/// when it could be written.
pub fn run_featurize(manifest: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<(FeaturizeOutput, Option<PathBuf>)> {
    let (records, root, provider) = load(manifest, cfg)?;
    let out = featurize_corpus(&records, provider.as_ref(), &root, cfg)?;
    create_dir(out_dir)?;
    let augmented = write_augmented(manifest, &records, &out);
    write_failures(out_dir, &out.failures)?;
    Ok((out, augmented))
}

/// Featurizes a manifest and writes `representations.csv` and
/// `failures.json` into `out_dir`. Returns the CSV path.
pub fn run_export(manifest: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<(FeaturizeOutput, PathBuf)> {
    let (out, _) = run_featurize(manifest, out_dir, cfg)?;
    let path = out_dir.join(REPRESENTATIONS_FILE);
    export_representations(&out.representations(), &path)?;
    Ok((out, path))
}

/// Trains on a manifest and writes `model.itmc`, `run.json` and
/// `failures.json` into `out_dir`.
pub fn run_training(manifest: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<TrainingRun> {
    let (records, root, provider) = load(manifest, cfg)?;
    let mut run = train_on_records(&records, provider.as_ref(), &root, cfg)?;
    create_dir(out_dir)?;
    run.metadata.augmented_manifest = write_augmented(manifest, &records, &run.featurized);
    run.head.save(out_dir.join(MODEL_FILE))?;
    write_json(&out_dir.join(RUN_FILE), &run.metadata)?;
    write_failures(out_dir, &run.featurized.failures)?;
    Ok(run)
}

/// Scores a manifest with a saved model and writes `scores.csv`,
/// `metrics.json`, `eval_run.json` and `failures.json` into `out_dir`.
pub fn run_eval(manifest: &Path, model: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<EvalRun> {
    let head = MlpHead::load(model)?;
    let (records, root, provider) = load(manifest, cfg)?;
    let mut run = run_eval_on_records(&records, provider.as_ref(), &root, &head, cfg)?;
    create_dir(out_dir)?;
    run.metadata.augmented_manifest = write_augmented(manifest, &records, &run.featurized);
    write_scores(&run.scores, out_dir.join(SCORES_FILE))?;
    write_json(&out_dir.join(METRICS_FILE), &run.report)?;
    write_json(&out_dir.join(EVAL_RUN_FILE), &run.metadata)?;
    write_failures(out_dir, &run.featurized.failures)?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::write_synthetic_corpus;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.provider.embedding_dim = 32;
        cfg.train.hidden_dim = 64;
        cfg.train.batch_size = 16;
        cfg.train.epochs = 40;
        cfg.train.seed = 7;
        cfg
    }

    #[test]
    fn single_class_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_synthetic_corpus(dir.path(), "r", 5, 0).unwrap();
        let out = dir.path().join("out");
        assert!(matches!(run_training(&m, &out, &small_cfg()), Err(Error::SingleClassDataset("real"))));
        assert!(!out.join(MODEL_FILE).exists());
    }

    #[test]
    fn training_is_reproducible_and_reloadable() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_synthetic_corpus(&dir.path().join("train"), "tr", 60, 60).unwrap();
        let cfg = small_cfg();
        let a = run_training(&m, &dir.path().join("a"), &cfg).unwrap();
        run_training(&m, &dir.path().join("b"), &cfg).unwrap();
        let bytes_a = fs::read(dir.path().join("a").join(MODEL_FILE)).unwrap();
        assert_eq!(bytes_a, fs::read(dir.path().join("b").join(MODEL_FILE)).unwrap());

        let reloaded = MlpHead::load(dir.path().join("a").join(MODEL_FILE)).unwrap();
        for r in a.featurized.representations() {
            assert_eq!(a.head.predict(&r.d_combined).unwrap(), reloaded.predict(&r.d_combined).unwrap());
        }

        let meta: RunMetadata =
            serde_json::from_str(&fs::read_to_string(dir.path().join("a").join(RUN_FILE)).unwrap()).unwrap();
        assert_eq!(meta.sample_count, 120);
        assert_eq!((meta.n_real, meta.n_fake), (60, 60));
        assert_eq!(meta.seed, 7);
        assert_eq!(meta.config_hash, cfg.config_hash());
        let aug = meta.augmented_manifest.unwrap();
        let recs = load_manifest(&aug).unwrap();
        assert!(recs.iter().all(|r| r.caption.is_some() && r.objects.is_some()));
        assert_eq!(load_manifest(&m).unwrap()[0].caption, None);
    }

    #[test]
    fn eval_on_training_corpus_and_inverted_labels() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_synthetic_corpus(&dir.path().join("c"), "c", 80, 80).unwrap();
        let cfg = small_cfg();
        let model_dir = dir.path().join("model");
        run_training(&m, &model_dir, &cfg).unwrap();
        let model = model_dir.join(MODEL_FILE);
        let run = run_eval(&m, &model, &dir.path().join("eval"), &cfg).unwrap();
        assert!(run.report.acc >= 0.99, "acc {}", run.report.acc);
        let scores = fs::read_to_string(dir.path().join("eval").join(SCORES_FILE)).unwrap();
        assert_eq!(scores.lines().count(), 161);
        assert!(dir.path().join("eval").join(METRICS_FILE).exists());

        let mut inverted = load_manifest(&m).unwrap();
        for r in &mut inverted {
            r.label = r.label.flipped();
        }
        let inv_path = dir.path().join("c").join("inverted.jsonl");
        write_manifest(&inv_path, &inverted).unwrap();
        let inv = run_eval(&inv_path, &model, &dir.path().join("eval_inv"), &cfg).unwrap();
        assert!((inv.report.acc - (1.0 - run.report.acc)).abs() < 1e-12);
    }

    #[test]
    fn eval_rejects_model_of_other_dim() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_synthetic_corpus(dir.path(), "d", 2, 2).unwrap();
        let model = dir.path().join("m.itmc");
        MlpHead::init(8, 4, 0).unwrap().save(&model).unwrap();
        assert!(matches!(
            run_eval(&m, &model, &dir.path().join("out"), &small_cfg()),
            Err(Error::DimensionMismatch { expected: 8, actual: 32 })
        ));
    }

    #[test]
    fn featurize_run_writes_representations() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_synthetic_corpus(dir.path(), "f", 3, 3).unwrap();
        let out = dir.path().join("out");
        let (res, augmented) = run_featurize(&m, &out, &small_cfg()).unwrap();
        assert_eq!(res.featurized.len(), 6);
        assert_eq!(augmented, Some(dir.path().join("manifest.augmented.jsonl")));
        assert!(!out.join(REPRESENTATIONS_FILE).exists());
        let (_, csv) = run_export(&m, &out, &small_cfg()).unwrap();
        let rows = crate::pipeline::read_representations(csv).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].values.len(), 32);
        assert_eq!(fs::read_to_string(out.join(FAILURES_FILE)).unwrap().trim(), "[]");
    }
}
