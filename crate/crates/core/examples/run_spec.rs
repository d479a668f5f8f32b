//! Runs an experiment spec in memory and prints its reports.
//!
//! `cargo run --release -p nbest-core --example run_spec -- specs/standard.spec`

use std::path::PathBuf;

use nbest_core::formats::{render_attribution_text, render_matrix_text};
use nbest_core::synthlab::{run_experiment, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path: PathBuf = std::env::args().nth(1).ok_or("usage: run_spec SPEC")?.into();
    let spec = ExperimentSpec::read(&path)?;
    let start = std::time::Instant::now();
    let exp = run_experiment(&spec)?;
    print!("{}", render_matrix_text(&exp.matrix, &path.display().to_string()));
    println!();
    print!("{}", render_attribution_text(&exp.attributions));
    eprintln!("{:.2?}", start.elapsed());
    Ok(())
}
