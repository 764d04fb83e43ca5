//! Experiment plumbing: dataset manifests, experiment configs, feature
//! preparation, the training loop, decoding/evaluation drivers, and a
//! synthetic benchmark generator. Everything here is deterministic given the
//! config seed so that whole experiments can be replayed bit for bit.

pub mod config;
pub mod data;
pub mod manifest;
pub mod prepare;
pub mod synthetic;
pub mod train;
pub mod translate;

pub use config::ExperimentConfig;
pub use data::{epoch_batches, load_dataset, load_features_only, Utterance};
pub use manifest::{sample_subset, Manifest, ManifestRow, TaskKind};
pub use prepare::{prepare_features, PrepareConfig};
pub use synthetic::{generate, SyntheticSpec, SyntheticTask, SyntheticTasks};
pub use train::{train, write_curves, CurveRow, TrainOutput, CURVE_HEADER};
pub use translate::{
    dump_attention, evaluate_files, translate, BaselineReport, EvalSummary,
};
