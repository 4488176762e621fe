//! Experiment harness: configuration, execution at matched budgets, result files.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{resolve, ConfigFile, Experiment, ExperimentConfig, Method, Overrides};
pub use output::{emit_results, read_csv, read_json, write_csv, write_json, ResultRow, Unwritable};
pub use runner::{data_dir, ground_truth, run_experiment, MissingFixture};

/// Process exit code for an error: 2 for a missing fixture, 3 for an unwritable path, else 1.
pub fn exit_code(error: &anyhow::Error) -> i32 {
    let missing = error.downcast_ref::<MissingFixture>().is_some()
        || error.chain().any(|c| c.is::<MissingFixture>());
    let unwritable =
        error.downcast_ref::<Unwritable>().is_some() || error.chain().any(|c| c.is::<Unwritable>());
    match (missing, unwritable) {
        (true, _) => 2,
        (_, true) => 3,
        _ => 1,
    }
}
