//! Command-line front end: configuration parsing and run dispatch.

pub mod config;

use std::fs;
use std::path::Path;

use wavetransit::experiments::{
    log_spaced_thicknesses, run_coefficient_table, run_condition_study, run_constituents,
    run_figures, run_hartman_sweep, run_packet, run_partials, RunOutcome,
};

use config::{CliConfig, Command, ConfigError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{0}")]
    Run(#[from] wavetransit::Error),

    #[error("cannot read config file {path}: {source}")]
    ReadConfig {
        path: String,
        source: std::io::Error,
    },
}

/// Reads and parses the configuration file for `command`.
pub fn load_config(
    path: &Path,
    command: Command,
    overrides: &config::Overrides,
) -> Result<CliConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.display().to_string(),
        source,
    })?;
    Ok(config::parse_config(&text, command, overrides)?)
}

/// Executes the configured run and writes the resolved-config echo next to
/// the manifest.
pub fn dispatch(config: &CliConfig) -> Result<RunOutcome, CliError> {
    let scenario = config.scenario()?;
    let out_root = Path::new(&config.resolved.output.dir);
    let format = config.resolved.output.format;

    let outcome = match config.command {
        Command::Coef => run_coefficient_table(&scenario, out_root, format)?,
        Command::Packet => run_packet(&scenario, out_root, format)?,
        Command::Constituents => run_constituents(&scenario, out_root, format)?,
        Command::Partial => run_partials(&scenario, out_root, format)?,
        Command::Figures => run_figures(&scenario, out_root, format)?,
        Command::Hartman => {
            let h = &config.resolved.hartman;
            let thicknesses =
                log_spaced_thicknesses(&scenario, h.kappa_a_min, h.kappa_a_max, h.count)?;
            run_hartman_sweep(&scenario, &thicknesses, out_root, format)?
        }
        Command::Sweep => {
            run_condition_study(&scenario, &config.resolved.sweep.multipliers, out_root, format)?
        }
    };

    fs::write(
        outcome.dir.join("resolved_config.toml"),
        config.to_toml_string(),
    )
    .map_err(wavetransit::Error::from)?;
    Ok(outcome)
}
