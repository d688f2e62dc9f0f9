use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scdn_cli::commands::{self, Run};
use scdn_cli::config::{load, Source};
use scdn_cli::CliError;

/// Pooling-aware dispatch pipeline: synthetic cities, flow-unit networks,
/// embeddings, hotspot identification and order assignment.
///
/// Any configuration key can be overridden with a dot-keyed flag, e.g.
/// `--eatne.walk_length 10` or `--dispatch.method=ruled`.
#[derive(Parser, Debug)]
#[command(name = "scdn", version)]
struct Cli {
    /// TOML configuration file; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, copied into every stage seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (paths.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic city with its trajectory history.
    Generate,
    /// Build the flow-unit network from the scenario's trajectories.
    BuildGraph,
    /// Train FU embeddings and fill uncovered FUs by cold start.
    Train,
    /// Compute FEI for every FU and export HPP pairs.
    Index,
    /// Identify scale-effect hotspots.
    IdentifySeh,
    /// Solve one assignment instance.
    Dispatch,
    /// Simulate the evaluation day under each method and hotspot mode.
    Evaluate,
    /// Compare every implementation against its independent oracle.
    OracleCheck {
        /// Fewer random instances per check.
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::BuildGraph => "build-graph",
            Command::Train => "train",
            Command::Index => "index",
            Command::IdentifySeh => "identify-seh",
            Command::Dispatch => "dispatch",
            Command::Evaluate => "evaluate",
            Command::OracleCheck { .. } => "oracle-check",
        }
    }
}

/// Splits `--a.b value` and `--a.b=value` overrides from the arguments
/// clap should see.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| CliError::Config(format!("override --{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn run() -> Result<(), CliError> {
    let (args, mut overrides) = split_overrides(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    let source = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => CliError::MissingInput(p.clone()),
                _ => CliError::Other(format!("{}: {e}", p.display())),
            })?;
            Some(Source::new(p.display().to_string(), text))
        }
        None => None,
    };
    if let Some(out) = &cli.out {
        overrides.push(("paths.out".into(), toml::Value::String(out.display().to_string()).to_string()));
    }
    let cfg = load(source, &overrides, cli.seed)?;
    let mut run = Run::new(cfg);
    let name = cli.command.name();
    log::info!("{name}: seed {}, output {}", run.cfg.seed, run.out.display());
    match cli.command {
        Command::Generate => commands::generate(&mut run),
        Command::BuildGraph => commands::build_graph(&mut run),
        Command::Train => commands::train(&mut run),
        Command::Index => commands::index(&mut run),
        Command::IdentifySeh => commands::identify_seh(&mut run),
        Command::Dispatch => commands::dispatch(&mut run),
        Command::Evaluate => commands::evaluate(&mut run),
        Command::OracleCheck { quick } => commands::oracle_check(&mut run, quick),
    }?;
    let manifest = run.finish(name)?;
    log::info!("wrote {} files; config hash {}", manifest.outputs.len(), &manifest.config_hash[..12]);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCDN_LOG", "info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scdn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
