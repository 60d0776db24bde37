//! End-to-end orchestration: corpus preparation, training entry points,
//! synthesis and layer sweeps.

pub mod config;
pub mod corpus;
pub mod features;
pub mod manifest;
pub mod melfile;
pub mod prepare;
pub mod stages;
pub mod sweep;
pub mod toy;

pub use config::{BackendConfig, DataConfig, ExperimentConfig, RunLock, CONFIG_ECHO};
pub use corpus::{write_toy_corpus, ToyCorpusSpec};
pub use features::{Feature, FeatureExtractor};
pub use manifest::{load_manifest, write_manifest, UtteranceRecord};
pub use melfile::{load_mel, persist_mel, MelFile, MEL_MAGIC};
pub use prepare::{achieved_snr_db, prepare_data, prepare_data_with, NoiseCorpus, PreparationReport, PreparedUtterance, Rejection};
pub use stages::{
    acoustic_dir, acoustic_examples, synthesize, train_acoustic_stage, train_vocoder_stage, vocoder_config_for, vocoder_dir,
    vocoder_examples,
};
pub use sweep::{condition_label, evaluate_dirs, run_layer_sweep, run_sweep, SWEEP_DIR};
pub use toy::{render, toy_noise, toy_utterance, NoiseKind, ToySpeaker, ToyUtterance};
