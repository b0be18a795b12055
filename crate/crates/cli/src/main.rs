use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use narrascope_cli::api::{self, AppState};
use narrascope_cli::config::AppConfig;
use narrascope_cli::demo;
use narrascope_cli::store::Store;
use narrascope_core::llm::Gateway;
use narrascope_core::{Actor, Operation, Session, SessionError};

#[derive(Parser)]
#[command(name = "narrascope", version, about = "Narrative-driven data exploration")]
struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Load a CSV into a scratch session and report what was derived.
    Ingest {
        csv: PathBuf,
        /// Table name; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run the scripted exploration on the bundled travel dataset.
    Demo {
        #[arg(long)]
        json: bool,
    },
    /// Retrieval index maintenance.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
}

#[derive(Subcommand)]
enum IndexAction {
    /// Rebuild the joint index from CSV files and write it as JSON lines.
    Rebuild {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = AppConfig::load(cli.config.as_deref())?;
    let gateway = Gateway::from_config(cfg.gateway.clone())?;
    match cli.command {
        Command::Serve { port, host } => serve(&host, port, gateway, cfg.data_dir.as_deref()),
        Command::Ingest { csv, name, json } => ingest(&csv, name, json, &gateway),
        Command::Demo { json } => {
            let (session, report) = demo::run(&gateway)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", demo::render_text(&report, &session));
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Index { action: IndexAction::Rebuild { csv, out } } => rebuild_index(&csv, &out, &gateway),
    }
}

fn serve(host: &str, port: u16, gateway: Gateway, data_dir: Option<&Path>) -> anyhow::Result<ExitCode> {
    let store = data_dir.map(Store::open).transpose().context("opening the data directory")?;
    let state = AppState::new(gateway, store);
    let restored = state.load_stored()?;
    let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{} ({restored} stored session(s) restored)", listener.local_addr()?);
        axum::serve(listener, api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(ExitCode::SUCCESS)
    })
}

fn session_with(tables: &[PathBuf], name: Option<String>, gateway: &Gateway) -> anyhow::Result<(Session, Vec<narrascope_core::catalog::TableSchema>)> {
    let mut s = Session::new("cli", chrono::Utc::now());
    let mut schemas = Vec::new();
    for path in tables {
        let csv = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table = match (&name, tables.len()) {
            (Some(n), 1) => n.clone(),
            _ => path.file_stem().and_then(|x| x.to_str()).unwrap_or("table").to_string(),
        };
        let op = Operation::IngestDataset { name: table, csv, category_tags: vec![] };
        match s.apply(op, Actor::User, gateway) {
            Ok(narrascope_core::Outcome::Schema(schema)) => schemas.push(schema),
            Ok(_) => unreachable!("ingest yields a schema"),
            Err(e) => anyhow::bail!("{}: {} ({})", path.display(), e, code_of(&e)),
        }
    }
    Ok((s, schemas))
}

fn code_of(e: &SessionError) -> String {
    e.code()
}

fn ingest(csv: &Path, name: Option<String>, json: bool, gateway: &Gateway) -> anyhow::Result<ExitCode> {
    let (s, schemas) = session_with(&[csv.to_path_buf()], name, gateway)?;
    let schema = &schemas[0];
    let entries = s.index().map_or(0, |i| i.len());
    if json {
        let out = serde_json::json!({ "schema": schema, "index_entries": entries });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{}", serde_json::to_string_pretty(schema)?);
        println!("index entries: {entries}");
    }
    Ok(ExitCode::SUCCESS)
}

fn rebuild_index(tables: &[PathBuf], out: &Path, gateway: &Gateway) -> anyhow::Result<ExitCode> {
    let (s, _) = session_with(tables, None, gateway)?;
    let index = s.index().context("no table produced any index entries")?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("index.jsonl"), index.to_jsonl())?;
    std::fs::write(out.join("index.fingerprint"), format!("{}\n", index.fingerprint()))?;
    println!("{} entries, fingerprint {}", index.len(), index.fingerprint());
    Ok(ExitCode::SUCCESS)
}
