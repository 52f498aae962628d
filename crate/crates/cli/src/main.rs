use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::Value;
use spinprobe_cli::{resolve_config, run, CliError, Command, Format};

/// Spin-probe sensitivity calculator.
#[derive(Debug, Parser)]
#[command(name = "spinprobe", version)]
struct Args {
    command: Command,
    /// JSON configuration file, or `-` for stdin.
    #[arg(long)]
    config: Option<String>,
    /// Figure-reproduction preset: fig4, fig5, fig7, fig8 or fig9.
    #[arg(long)]
    preset: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn read_document(path: &str) -> Result<Value, CliError> {
    let text = if path == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Config(format!("reading stdin: {e}")))?;
        s
    } else {
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("reading {path}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("parsing {path}: {e}")))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SPINPROBE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "SPINPROBE_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".crossover.json");
    PathBuf::from(name)
}

fn execute(args: Args) -> Result<i32, CliError> {
    configure_threads()?;
    let document = args.config.as_deref().map(read_document).transpose()?;
    let mut cfg = resolve_config(args.preset.as_deref(), document, args.seed)?;
    if let Some(out) = &args.out {
        cfg.output.path = Some(out.display().to_string());
    }
    if let Some(f) = args.format {
        cfg.output.format = Some(f);
    }
    let format = cfg.output.format.unwrap_or(args.command.default_format());
    let result = run(args.command, &cfg, format)?;
    let io_err = |e: io::Error| CliError::Io(e.to_string());
    match cfg.output.path.as_deref().map(PathBuf::from) {
        Some(path) => {
            fs::write(&path, &result.body).map_err(io_err)?;
            if let Some(side) = &result.sidecar {
                fs::write(sidecar_path(&path), side).map_err(io_err)?;
            }
        }
        None => {
            io::stdout()
                .write_all(result.body.as_bytes())
                .map_err(io_err)?;
            if let Some(side) = &result.sidecar {
                io::stderr().write_all(side.as_bytes()).map_err(io_err)?;
            }
        }
    }
    Ok(result.exit_code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("spinprobe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
