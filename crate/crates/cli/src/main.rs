mod cmd;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use manifest::RunManifest;

/// Integer quantization toolkit: table building, softmax truncation search,
/// position-embedding magnitude reports and synthetic simulations.
#[derive(Parser, Debug)]
#[command(name = "fqkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a cascaded table pair for a nonlinear function.
    BuildDulut(cmd::build::BuildArgs),
    /// Evaluate a table or pair on input codes.
    Eval(cmd::eval::EvalArgs),
    /// Truncation-bound search for softmax on a logits CSV.
    Qans(cmd::qans::QansArgs),
    /// Magnitude report for a position-embedding kind.
    PeReport(cmd::pe::PeArgs),
    /// Fusion, attention and ablation simulations.
    Sim(cmd::sim::SimArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// Flags shared by every artifact-producing command.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Manifest path; defaults to manifest.json next to the main output.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Fail unless every recorded output is reproduced byte for byte.
    #[arg(long)]
    verify: bool,
}

/// Bad flags or names: exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// What a command produced, for its manifest.
pub struct Outcome {
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Main output; the default manifest goes next to it.
    pub primary: PathBuf,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<fqkit_core::Error>() {
        Some(fqkit_core::Error::UnknownFunction(_)) => 2,
        _ => 1,
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("FQKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Usage(format!("FQKIT_THREADS must be a non-negative integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    Ok(())
}

fn execute(command: Command, argv: &[String]) -> anyhow::Result<()> {
    let started = Instant::now();
    let (name, outcome) = match command {
        Command::BuildDulut(a) => ("build-dulut", cmd::build::run(a)?),
        Command::Eval(a) => ("eval", cmd::eval::run(a)?),
        Command::Qans(a) => ("qans", cmd::qans::run(a)?),
        Command::PeReport(a) => ("pe-report", cmd::pe::run(a)?),
        Command::Sim(a) => ("sim", cmd::sim::run(a)?),
        Command::Replay(a) => return replay(a),
    };
    let m = RunManifest::new(name, argv, outcome.config, outcome.seed, &outcome.inputs, &outcome.outputs, started.elapsed())?;
    let path = outcome
        .manifest
        .unwrap_or_else(|| io::sibling(&outcome.primary, "manifest.json"));
    m.write(&path)?;
    Ok(())
}

fn replay(a: ReplayArgs) -> anyhow::Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    if m.argv.first().map(String::as_str) == Some("replay") {
        bail!(Usage("a manifest cannot record a replay".into()));
    }
    std::env::set_current_dir(&m.cwd).with_context(|| format!("entering {}", m.cwd))?;
    let before: Vec<Option<Vec<u8>>> = m.outputs.iter().map(|p| std::fs::read(p).ok()).collect();
    let cli = Cli::try_parse_from(std::iter::once("fqkit".to_string()).chain(m.argv.iter().cloned()))
        .map_err(|e| Usage(format!("recorded arguments no longer parse: {e}")))?;
    execute(cli.command, &m.argv)?;
    if a.verify {
        let changed: Vec<&str> = m
            .outputs
            .iter()
            .zip(before)
            .filter(|(p, old)| std::fs::read(p).ok() != *old)
            .map(|(p, _)| p.as_str())
            .collect();
        if !changed.is_empty() {
            bail!("replay changed {} output(s): {}", changed.len(), changed.join(", "));
        }
        println!("replayed {} output(s), all identical", m.outputs.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match init_threads().and_then(|_| execute(cli.command, &argv)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
