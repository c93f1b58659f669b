use std::path::PathBuf;
use std::time::Duration;

use accabet_core::{FilterMode, SolverParams};
use accabet_service::Dataset;
use anyhow::{bail, Context, Result};

use crate::Common;

/// Expands every `--season` value into CSV files: patterns through glob,
/// directories to the `.csv` files they hold, anything else must exist.
pub fn season_files(inputs: &[String]) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        bail!("no season data given; pass --season <file|dir|glob>");
    }
    let mut files = Vec::new();
    for input in inputs {
        if input.contains(['*', '?', '[']) {
            let mut matched: Vec<PathBuf> =
                glob::glob(input).with_context(|| format!("bad pattern {input}"))?.filter_map(Result::ok).collect();
            if matched.is_empty() {
                bail!("{input}: pattern matched no files");
            }
            matched.sort();
            files.extend(matched);
        } else {
            files.extend(accabet_service::resolve_paths(std::slice::from_ref(input)).map_err(anyhow::Error::msg)?);
        }
    }
    files.dedup();
    Ok(files)
}

pub fn load(common: &Common) -> Result<Dataset> {
    let files = season_files(&common.season)?;
    let dataset = Dataset::load(&files, common.probabilities.as_deref()).map_err(anyhow::Error::msg)?;
    for w in &dataset.season.warnings {
        eprintln!("warning: {}:{}: {}", w.source, w.line, w.message);
    }
    if dataset.season.pools.is_empty() {
        bail!("no fixtures found in {}", files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(", "));
    }
    Ok(dataset)
}

pub fn params(common: &Common, filter: FilterMode, default_time: f64) -> Result<SolverParams> {
    let secs = common.max_time.unwrap_or(default_time);
    if !(secs.is_finite() && secs > 0.0) {
        bail!("--max-time must be a positive number of seconds");
    }
    let params = SolverParams {
        p_min: common.p_min,
        min_exp: common.min_exp,
        max_time: Duration::from_secs_f64(secs),
        population: common.agents,
        seed: common.seed,
        max_legs: common.max_legs,
        filter_mode: filter,
        max_iterations: common.max_iterations,
        threads: common.threads,
        ..SolverParams::default()
    };
    params.validate()?;
    Ok(params)
}

/// The single filter a command runs with.
pub fn single_filter(common: &Common) -> Result<FilterMode> {
    match common.filter.as_slice() {
        [] => Ok(FilterMode::default()),
        [one] => Ok(*one),
        _ => bail!("this command takes a single --filter value"),
    }
}
