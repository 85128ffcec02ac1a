use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use costudy_core::config::{Mode, SessionConfig};
use costudy_core::provider::Backend;
use costudy_core::Session;
use costudy_server::{AppState, Clock, ServerConfig, ServerError};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "costudy", version, about = "Co-study session server")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    serve: ServeArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP server (the default).
    Serve(ServeArgs),
    /// Re-run the user inputs of an exported log and compare the result.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Baseline,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProviderArg {
    Http,
    Stub,
}

#[derive(Debug, Default, clap::Args)]
struct ServeArgs {
    /// Server configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    /// Overrides the session seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
}

#[derive(Debug, clap::Args)]
struct ReplayArgs {
    /// Session configuration (TOML or JSON). Built-in defaults when omitted.
    #[arg(long)]
    session_config: Option<PathBuf>,
    #[arg(long)]
    transcript: PathBuf,
    /// Exported JSONL log to replay.
    #[arg(long)]
    log: PathBuf,
    /// Where to write the replayed log.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
}

fn apply_overrides(
    config: &mut SessionConfig,
    seed: Option<u64>,
    mode: Option<ModeArg>,
    provider: Option<ProviderArg>,
) {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(mode) = mode {
        config.mode = match mode {
            ModeArg::Full => Mode::Full,
            ModeArg::Baseline => Mode::Baseline,
        };
    }
    if let Some(provider) = provider {
        config.provider.backend = match provider {
            ProviderArg::Http => Backend::Http,
            ProviderArg::Stub => Backend::Stub,
        };
    }
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = ctrl_c => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = ctrl_c.await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = ctrl_c.await;
    }
}

async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let mut config = match &args.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    if let Some(port) = args.port {
        config.port = port;
    }
    let mut session = config.session_defaults()?;
    apply_overrides(&mut session, args.seed, args.mode, args.provider);
    let addr = format!("{}:{}", config.bind, config.port);
    let state = AppState::new(config, session, Clock::wall())?;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: addr.clone(),
            source,
        })?;
    tracing::info!(%addr, "listening");
    costudy_server::serve(listener, state, async {
        shutdown_signal().await;
        tracing::info!("shutting down");
    })
    .await?;
    Ok(())
}

fn replay(args: ReplayArgs) -> anyhow::Result<bool> {
    let mut config = match &args.session_config {
        Some(path) => SessionConfig::load(path)?,
        None => SessionConfig::default(),
    };
    apply_overrides(&mut config, args.seed, args.mode, args.provider);
    let transcript = std::fs::read_to_string(&args.transcript)
        .with_context(|| format!("reading {}", args.transcript.display()))?;
    let original = std::fs::read(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    let events = costudy_core::event::read_jsonl(original.as_slice())?;
    let session = Session::replay(config, &transcript, &events)?;
    let replayed = session.export_log_bytes();
    if let Some(out) = &args.out {
        std::fs::write(out, &replayed).with_context(|| format!("writing {}", out.display()))?;
    }
    if replayed == original {
        println!("identical: {} events", events.len());
        return Ok(true);
    }
    let original = String::from_utf8_lossy(&original);
    let replayed = String::from_utf8_lossy(&replayed);
    match original.lines().zip(replayed.lines()).position(|(a, b)| a != b) {
        Some(i) => println!("differs at line {}", i + 1),
        None => println!(
            "differs in length: {} vs {} lines",
            original.lines().count(),
            replayed.lines().count()
        ),
    }
    Ok(false)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let cli = Cli::parse();
    let result = match cli.command.unwrap_or(Command::Serve(cli.serve)) {
        Command::Serve(args) => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .context("starting runtime")
            .and_then(|rt| rt.block_on(serve(args))),
        Command::Replay(args) => match replay(args) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(err) => Err(err),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_without_subcommand() {
        let cli = Cli::try_parse_from([
            "costudy",
            "--port",
            "9000",
            "--seed",
            "4",
            "--mode",
            "baseline",
            "--provider",
            "stub",
        ])
        .unwrap();
        assert!(cli.command.is_none());
        assert_eq!(cli.serve.port, Some(9000));
        assert_eq!(cli.serve.seed, Some(4));
    }

    #[test]
    fn replay_subcommand_parses() {
        let cli = Cli::try_parse_from([
            "costudy",
            "replay",
            "--transcript",
            "t.vtt",
            "--log",
            "a.jsonl",
            "--provider",
            "stub",
        ])
        .unwrap();
        let Some(Command::Replay(args)) = cli.command else {
            panic!("expected replay");
        };
        let mut config = SessionConfig::default();
        config.provider.backend = Backend::Http;
        apply_overrides(&mut config, args.seed, args.mode, args.provider);
        assert_eq!(config.provider.backend, Backend::Stub);
    }

    #[test]
    fn bad_mode_is_rejected() {
        assert!(Cli::try_parse_from(["costudy", "--mode", "partial"]).is_err());
    }
}
