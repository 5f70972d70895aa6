use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mesoscribe_cli::{parse_script, run_script};
use mesoscribe_core::session::{BackendKind, Config, Session};

/// Build mesoscale scenes from natural-language scripts.
#[derive(Debug, Parser)]
#[command(name = "mesoscribe", version)]
struct Args {
    /// Script to run, one turn per line.
    #[arg(long, required_unless_present = "serve")]
    script: Option<PathBuf>,
    /// Serve the HTTP/WebSocket API on this address instead.
    #[arg(long, conflicts_with = "script")]
    serve: Option<SocketAddr>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// mock or remote.
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Prompt record directory; corrections are written back here.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Target of the save and load intents.
    #[arg(long)]
    model_path: Option<PathBuf>,
    /// Write the final scene file here.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Write the final scene as a Wavefront OBJ mesh here.
    #[arg(long)]
    export_obj: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    BackendKind::parse(s).ok_or_else(|| format!("unknown backend `{s}`; use mock or remote"))
}

fn config(args: &Args) -> Result<Config, String> {
    let mut c = match &args.config {
        Some(p) => Config::load(p).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(b) = args.backend {
        c.backend = b;
    }
    if args.prompts.is_some() {
        c.prompts_dir = args.prompts.clone();
    }
    if args.model_path.is_some() {
        c.model_path = args.model_path.clone();
    }
    Ok(c)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(addr) = args.serve {
        let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
        return match rt.block_on(mesoscribe_server::serve(addr, config)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }
    let path = args.script.as_ref().expect("clap requires --script");
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            eprintln!("error: script not found: {}", path.display());
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let script = match parse_script(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let mut session = match Session::from_config("cli", &config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run_script(&mut session, &script, &mut io::stdout().lock()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(p) = &args.export {
        if let Err(e) = session.scene().save(p) {
            eprintln!("error: export {}: {e}", p.display());
            return ExitCode::FAILURE;
        }
    }
    if let Some(p) = &args.export_obj {
        let written = session
            .scene()
            .to_obj(session.catalog())
            .map_err(|e| e.to_string())
            .and_then(|obj| std::fs::write(p, obj).map_err(|e| e.to_string()));
        if let Err(e) = written {
            eprintln!("error: export {}: {e}", p.display());
            return ExitCode::FAILURE;
        }
    }
    if report.ok() {
        return ExitCode::SUCCESS;
    }
    for f in &report.failures {
        let turn = f.turn.map_or_else(String::new, |t| format!(" turn {t}"));
        eprintln!("failed: line {}{turn}: {}: {}", f.line, f.error.kind, f.error.message);
    }
    ExitCode::FAILURE
}
