//! Shared fixtures for the benchmark targets: the desk-scale configuration
//! and deterministic synthetic inputs.

use mash_core::harness::config::RunConfig;
use mash_core::harness::dataset::{gen_dataset, Dataset};
use mash_core::model::ModelConfig;

/// Desk-scale run with a dataset just big enough to draw batches from.
pub fn bench_run() -> RunConfig {
    let mut run = RunConfig::default();
    run.gen.train_samples = 32;
    run.gen.test_samples = 6;
    run
}

pub fn bench_setup() -> (RunConfig, ModelConfig, Dataset) {
    let run = bench_run();
    let cfg = run.model_config().expect("default config is valid");
    let dataset = gen_dataset(&run.gen, run.seed).expect("generation succeeds");
    (run, cfg, dataset)
}
