//! Two-stage training protocol, checkpoints and the seeded experiment grid.

mod checkpoint;
mod config;
mod experiment;
mod stages;

pub use checkpoint::{
    load_generator, load_laed, load_latent, save_generator, save_laed, save_latent, LoadedGenerator, Manifest,
    Stage1Paths, CODES, FORMAT_VERSION, MANIFEST, STAGE1_DIR, VOCAB, WEIGHTS,
};
pub use config::{ExperimentConfig, Variant, KEYS};
pub use experiment::{run_experiment, write_report, ExperimentOutcome, REPORT_FILE, RUNS_FILE, TIMINGS_FILE};
pub use stages::{
    code_inventory, evaluate_generator, prepare_instances, train_stage1, train_stage2, Stage1Outcome, Stage2Log,
    Stage2Outcome,
};
