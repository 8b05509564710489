mod commands;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use output::{OutputFile, Outputs, MANIFEST};
use pbc_core::{corpus, Error, MapSpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ANALYSIS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "pbc", version, about = "Prediction-based control of scalar maps")]
pub struct Cli {
    /// Built-in map (piecewise, piecewise-full, ricker2, ricker3, ricker4),
    /// `ricker` or `logistic` with --r, or a path to a map JSON file.
    #[arg(long, global = true)]
    pub map: Option<String>,
    /// Growth parameter for `--map ricker` / `--map logistic`.
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Iterate of the base map for `--map ricker` / `--map logistic`.
    #[arg(long, global = true, default_value_t = 1)]
    pub iterate: u32,
    /// Output directory.
    #[arg(long, global = true, default_value = "pbc-out")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// What to print on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Re-run the command recorded in a manifest and compare its outputs byte for byte.
    #[arg(long)]
    #[serde(skip)]
    pub replay: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Equilibria, thresholds, block decomposition and the admissible noise region.
    Analyze(commands::AnalyzeArgs),
    /// One orbit, or an ensemble of noisy orbits.
    Simulate(commands::SimulateArgs),
    /// Bifurcation diagram over a control range and the last bifurcation point.
    Bifurcate(commands::BifurcateArgs),
    /// Run the property suites.
    Verify(commands::VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Simulate(_) => "simulate",
            Command::Bifurcate(_) => "bifurcate",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
    pub fn analysis(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_ANALYSIS, message: message.into() }
    }
    pub fn verify(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_VERIFY, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::NothingToStabilize { .. } | Error::Uncontrollable { .. } | Error::Analysis(_) => EXIT_ANALYSIS,
            _ => EXIT_CONFIG,
        };
        Failure { code, message: e.to_string() }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Cli,
    /// The map actually used, in map JSON form.
    pub map_spec: Option<serde_json::Value>,
    pub parallel_feature: bool,
    pub outputs: Vec<OutputFile>,
}

/// Everything a command needs besides its own arguments.
pub struct Context<'a> {
    pub cli: &'a Cli,
    pub map: Option<MapSpec>,
    pub out: Outputs,
    /// Set when a run is finished but should exit non-zero.
    pub status: Option<Failure>,
}

fn resolve_map(cli: &Cli, embedded: Option<&serde_json::Value>) -> Result<Option<MapSpec>, Failure> {
    if let Some(v) = embedded {
        return Ok(Some(MapSpec::from_json_str(&v.to_string())?));
    }
    let Some(name) = cli.map.as_deref() else { return Ok(None) };
    if let Some(m) = corpus::by_name(name) {
        return Ok(Some(m));
    }
    match name {
        "ricker" | "logistic" => {
            let r = cli.r.ok_or_else(|| Failure::config(format!("--map {name} needs --r")))?;
            if cli.iterate == 0 {
                return Err(Failure::config("--iterate must be at least 1"));
            }
            let base = if name == "ricker" { MapSpec::ricker(r) } else { MapSpec::logistic(r) };
            let m = base.iterate(cli.iterate)?;
            let label = if cli.iterate == 1 { format!("{name}(r={r})") } else { format!("{name}^{}(r={r})", cli.iterate) };
            Ok(Some(m.with_name(&label)))
        }
        path => {
            let p = std::path::Path::new(path);
            if !p.exists() {
                return Err(Failure::config(format!("unknown map {path:?}: not a built-in name or an existing file")));
            }
            Ok(Some(MapSpec::from_json_file(p)?))
        }
    }
}

fn execute(cli: &Cli, embedded: Option<&serde_json::Value>) -> Result<(Vec<OutputFile>, Option<Failure>), Failure> {
    let Some(cmd) = &cli.command else {
        return Err(Failure::config("a subcommand is required (analyze, simulate, bifurcate, verify)"));
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        pbc_core::par::configure_threads(t);
    }
    let map = resolve_map(cli, embedded)?;
    let out = Outputs::new(&cli.out)?;
    let mut ctx = Context { cli, map, out, status: None };
    match cmd {
        Command::Analyze(a) => commands::analyze(&mut ctx, a)?,
        Command::Simulate(a) => commands::simulate(&mut ctx, a)?,
        Command::Bifurcate(a) => commands::bifurcate(&mut ctx, a)?,
        Command::Verify(a) => commands::verify(&mut ctx, a)?,
    }
    let manifest = Manifest {
        tool: "pbc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        args: cli.clone(),
        map_spec: ctx.map.as_ref().map(|m| m.to_json_value()),
        parallel_feature: pbc_core::par::parallel_enabled(),
        outputs: ctx.out.files.clone(),
    };
    let files = ctx.out.files.clone();
    ctx.out.write_json(MANIFEST, &manifest)?;
    Ok((files, ctx.status))
}

fn replay(cli: &Cli, path: &std::path::Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Failure::config(format!("bad manifest: {e}")))?;
    let mut args = manifest.args.clone();
    args.out = cli.out.clone();
    let (files, _) = execute(&args, manifest.map_spec.as_ref())?;
    let mut bad = Vec::new();
    for want in &manifest.outputs {
        match files.iter().find(|f| f.file == want.file) {
            Some(got) if got == want => {}
            Some(got) => bad.push(format!("{}: sha256 {} != {}", want.file, got.sha256, want.sha256)),
            None => bad.push(format!("{}: not produced", want.file)),
        }
    }
    if bad.is_empty() {
        println!("replay: {} files identical", manifest.outputs.len());
        Ok(())
    } else {
        Err(Failure::verify(format!("replay mismatch:\n  {}", bad.join("\n  "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.replay {
        Some(p) => replay(&cli, p),
        None => execute(&cli, None).and_then(|(_, status)| status.map_or(Ok(()), Err)),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
