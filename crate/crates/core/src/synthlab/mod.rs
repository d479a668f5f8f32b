//! Seeded synthetic translation tasks and the end-to-end experiment that
//! trains two or more systems on nested subsets, decodes a shared test set and
//! produces the rescoring matrix and attribution reports.

mod experiment;
mod task;

pub use experiment::{
    run_experiment, run_to_dir, write_artifacts, Experiment, ExperimentSpec, SystemSpec, INCOMPLETE_MARKER,
};
pub use task::{gen_corpus, gen_split, CipherTable, Split, TaskKind, TaskSpec};
