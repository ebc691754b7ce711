//! Dataset ingestion, splitting and one-vs-all training.

mod dataset;
mod experiment;
mod features;
mod predict;
mod split;
mod train;

pub use dataset::{
    label_counts, load_dataset, read_csv, read_jsonl, save_dataset, write_csv, write_jsonl,
    DataFormat, DatasetManifest, Utterance, CSV_HEADER,
};
pub use experiment::{
    paired_deltas, prepare_split, run_experiment, run_seed, Aggregate, ExperimentConfig,
    ExperimentResult, Mode, PairedDelta, PreparedSplit, SeedRun, Summary,
};
pub use features::{build_vocab, utterance_tokens, Featurizer, TextConfig};
pub use predict::{
    check_vocab, checkpoint_file, load_bundle, predict, save_bundle, ClassifierBundle,
    ModelSidecar, PredictionMatrix, PredictionRow, BUNDLE_FORMAT_VERSION, SIDECAR_FILE, VOCAB_FILE,
};
pub use split::{stratified_split, Split, SplitAssignment, DEFAULT_TRAIN_FRAC};
pub use train::{
    evaluate_binary, train_binary, train_one_vs_all, with_jobs, Adam, BinaryRun, BinarySet,
    EpochRecord, GradBuffer, OneVsAll, TrainConfig,
};
