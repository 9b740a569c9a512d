//! Corpus-level orchestration: featurize every sample, train the head,
//! score a corpus, and persist the artifacts that go with each run.

mod config;
mod export;
mod featurize;
mod robustness;
mod run;
mod synth;

pub use config::{CropConfig, RunConfig};
pub use export::{export_representations, read_representations, write_scores, ExportedRow};
pub use featurize::{
    build_provider, featurize, featurize_corpus, Featurized, FeaturizeOutput, RepresentationRecord,
    SampleFailure,
};
pub use robustness::{perturb_directory, PerturbSummary};
pub use run::{
    EVAL_RUN_FILE, FAILURES_FILE, METRICS_FILE, MODEL_FILE, REPRESENTATIONS_FILE, RUN_FILE, SCORES_FILE,
    run_eval, run_eval_on_records, run_export, run_featurize, run_training, score_records, train_on_records,
    EvalRun, RunMetadata, TrainingRun,
};
pub use synth::write_synthetic_corpus;
