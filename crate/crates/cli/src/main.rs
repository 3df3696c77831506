//! `wavetransit`: quantum wave-packet transmission datasets from the
//! command line.
//!
//! Exit codes: 0 on a clean run, 1 on configuration or validation errors,
//! 2 when the run completed but raised numeric-quality flags (the outputs
//! are retained and the flags recorded in the manifest).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wavetransit_cli::config::{Command, Overrides};
use wavetransit_cli::{dispatch, load_config};

#[derive(Parser)]
#[command(
    name = "wavetransit",
    version,
    about = "Multiple-reflection decomposition of wave-packet transmission through rectangular wells and barriers"
)]
struct Cli {
    #[command(subcommand)]
    command: CommandArg,

    /// Scenario configuration file (TOML sections; JSON also accepted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,

    /// Dataset encoding: csv or json (overrides output.format).
    #[arg(long, global = true, value_name = "FMT")]
    format: Option<String>,

    /// Spectral quadrature nodes (overrides grid.n_omega).
    #[arg(long = "n-omega", global = true, value_name = "N")]
    n_omega: Option<usize>,

    /// Time samples (overrides grid.n_t).
    #[arg(long = "n-t", global = true, value_name = "N")]
    n_t: Option<usize>,

    /// Series truncation (overrides series.terms).
    #[arg(long, global = true, value_name = "J")]
    terms: Option<u32>,

    /// Differentiation step for delay extraction (overrides grid.diff_step).
    #[arg(long = "diff-step", global = true, value_name = "H")]
    diff_step: Option<f64>,

    /// Suppress the run summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum CommandArg {
    /// Sample the complex transmission coefficient over the packet window.
    Coef,
    /// Synthesize the incident and transmitted packets.
    Packet,
    /// Synthesize individual multiple-reflection constituents.
    Constituents,
    /// Synthesize partial reshaping sums (term counts or "all").
    Partial,
    /// Sweep the group delay against barrier thickness.
    Hartman,
    /// Produce the full well dataset bundle (decomposition, profiles, reshaping).
    Figures,
    /// Study shape degradation as thickness grows toward a = v_g tau.
    Sweep,
}

impl CommandArg {
    fn to_command(&self) -> Command {
        match self {
            CommandArg::Coef => Command::Coef,
            CommandArg::Packet => Command::Packet,
            CommandArg::Constituents => Command::Constituents,
            CommandArg::Partial => Command::Partial,
            CommandArg::Hartman => Command::Hartman,
            CommandArg::Figures => Command::Figures,
            CommandArg::Sweep => Command::Sweep,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.to_command();

    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config <PATH> is required");
        return ExitCode::from(1);
    };
    let overrides = Overrides {
        out: cli.out.clone(),
        format: cli.format.clone(),
        n_omega: cli.n_omega,
        n_t: cli.n_t,
        terms: cli.terms,
        diff_step: cli.diff_step,
    };

    let config = match load_config(config_path, command, &overrides) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let outcome = match dispatch(&config) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    if !cli.quiet {
        // Writes may hit a closed pipe (e.g. `| head`); that is not a
        // failure of the run itself.
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        let mut summary = format!(
            "wrote {} ({} datasets + manifest)\n",
            outcome.dir.display(),
            outcome.manifest.outputs.len()
        );
        for (key, value) in &outcome.manifest.results {
            summary.push_str(&format!("  {key} = {value}\n"));
        }
        if let Some(delay) = &outcome.manifest.delay {
            summary.push_str(&format!("  tau_phi = {}\n", delay.tau_phi));
            summary.push_str(&format!("  tau_n = {}\n", delay.tau_n));
            if let Some(limit) = delay.hartman_limit {
                summary.push_str(&format!("  hartman_limit = {limit}\n"));
            }
        }
        let _ = out.write_all(summary.as_bytes());
    }

    if outcome.manifest.quality_flags.is_empty() {
        ExitCode::SUCCESS
    } else {
        for flag in &outcome.manifest.quality_flags {
            eprintln!("quality flag: {flag}");
        }
        ExitCode::from(2)
    }
}
