//! Command-line driver: parses a run configuration and dispatches to the commands in
//! [`commands`]. The `jhpf` binary is a thin wrapper around [`run`].

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::{parse_config, parse_with_overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "jhpf",
    version,
    about = "Learned joint hybrid precoding and combining: data, training, BER curves, gradient checks and latency"
)]
struct Cli {
    /// Run configuration (flat key=value file).
    #[arg(short, long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Print the fully resolved configuration, defaults included.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Generate the train, val and test channel datasets.
    GenChannels,
    /// Train the framework; writes the best checkpoint and the per-epoch history.
    Train,
    /// BER curves for the configured schemes.
    EvalBer,
    /// CSI and scenario mismatch curves for the trained framework.
    Mismatch,
    /// Finite-difference and closed-form gradient check on a random instance.
    GradCheck,
    /// Per-call design latency of dl-jhpf, beam sweeping and fully digital.
    Bench,
}

/// Runs the CLI on `args` (program name first), writing reports to `out`.
pub fn run<I, T>(args: I, out: &mut impl Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().after_help(config::key_table()).try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{}", e.render())?;
            return Ok(());
        }
        Err(e) => return Err(anyhow!("{}", e.render())),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| anyhow!("{}", e.render()))?;
    let Some(path) = &cli.config else {
        bail!("--config FILE is required (see --help for the keys)");
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg = parse_with_overrides(&text, &cli.set).map_err(|e| anyhow!("config {}: {e}", path.display()))?;
    if cli.print_config {
        write!(out, "{}", cfg.to_text())?;
    }
    let Some(cmd) = cli.command else {
        if cli.print_config {
            return Ok(());
        }
        bail!("no command given (expected gen-channels, train, eval-ber, mismatch, grad-check or bench)");
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    let report = pool.install(|| match cmd {
        Cmd::GenChannels => commands::gen_channels(&cfg),
        Cmd::Train => commands::train(&cfg),
        Cmd::EvalBer => commands::eval_ber(&cfg),
        Cmd::Mismatch => commands::mismatch(&cfg),
        Cmd::GradCheck => commands::grad_check(&cfg),
        Cmd::Bench => commands::bench(&cfg),
    })?;
    write!(out, "{report}")?;
    Ok(())
}

/// The error and its causes on a single line.
pub fn one_line(e: &anyhow::Error) -> String {
    let text = format!("{e:#}");
    let text = text.trim().strip_prefix("error: ").unwrap_or(text.trim());
    // clap appends usage hints after a blank line
    let first = text.split("\n\n").next().unwrap_or(text);
    first.split_whitespace().collect::<Vec<_>>().join(" ")
}
