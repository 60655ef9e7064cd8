use std::path::PathBuf;
use std::process::ExitCode;

use aerochunk_cli::commands;
use aerochunk_cli::config::RunConfig;
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aerochunk", version, about = "Chunk, slice, plan and emulate aerial 3D printing missions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; missing fields take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input mesh (STL), overrides the config
    #[arg(long, global = true)]
    mesh: Option<PathBuf>,
    /// Output directory, overrides the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise seed, overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mesh scale factor, overrides the config
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Validate the configuration and exit
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose the mesh into chunks
    Chunk,
    /// Slice every chunk, or convert a G-code file, into toolpaths
    Slice {
        /// Parse this G-code file instead of slicing the mesh
        #[arg(long)]
        gcode: Option<PathBuf>,
    },
    /// Chunk the mesh and write the print order and fleet plan
    Plan,
    /// Run the full mission emulation
    Simulate,
    /// Recompute tracking statistics from a flight trace
    Report {
        /// Trace to read; defaults to trace.csv in the output directory
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn load(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &g.mesh {
        cfg.mesh = Some(m.clone());
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = g.scale {
        cfg.scale = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load(&cli.global)?;
    let dry = cli.global.dry_run;
    match cli.command {
        Command::Chunk => commands::chunk(&cfg, dry),
        Command::Slice { gcode } => commands::slice(&cfg, gcode.as_ref(), dry),
        Command::Plan => commands::plan(&cfg, dry),
        Command::Simulate => commands::simulate(&cfg, dry),
        Command::Report { trace } => commands::report(&cfg, trace.as_ref(), dry),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
