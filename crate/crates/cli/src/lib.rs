//! Configuration-driven runner for the oss-core experiments.
//!
//! A run resolves a [`config::RunConfig`], executes one experiment, and
//! writes its tables, a config echo and a manifest into the output
//! directory. See [`error::CliError`] for the exit-code table.

pub mod config;
pub mod error;
pub mod experiments;
pub mod figures;
pub mod output;

use config::RunConfig;
use error::CliError;
use output::RunManifest;
use std::path::Path;
use std::time::Instant;

/// Validate, execute and write `cfg` into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut outputs = experiments::execute(cfg)?;
    outputs.timings.push(output::Timing { stage: "total".into(), seconds: start.elapsed().as_secs_f64() });
    let kind = cfg.experiment.expect("validated");
    output::write_run(
        Path::new(&cfg.output_dir),
        kind.name(),
        cfg.master_seed,
        &cfg.to_json(),
        &outputs.artifacts,
        outputs.timings,
    )
}
