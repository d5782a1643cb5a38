//! `holoboard` subcommands.
//!
//! Exit codes: 0 success, 2 config or schema errors, 3 runtime errors.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use holo_client::{ApiClient, ClientError, SessionClient};
use holo_core::analytics::{
    build_report, generate, load_pair, render_text, write_pair, DatasetError, LexiconProvider, Report,
    ReportOptions, SyntheticParams, TTestVariant,
};
use holo_core::api::{DatasetPayload, ReportRequest};
use holo_core::config::{ConfigError, EngineConfig};
use holo_core::protocol::{self, Body, Command, Message};
use holo_core::scenario::{self, demo_deck, ScenarioScript, BUILTIN_SCENARIOS};
use holo_core::scene::SlideDeck;
use holo_core::session::{replay, ReplayError};
use holo_server::{RunningServer, ServerError, ServerOptions};
use thiserror::Error;

pub const LOG_ENV: &str = "HOLO_LOG";

/// Files written by `simulate`.
pub const SESSION_LOG: &str = "session.jsonl";
pub const FINAL_SNAPSHOT: &str = "final_snapshot.json";
pub const DIGESTS: &str = "digests.txt";

/// Files written by `analyze`.
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, script, dataset or request content.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        match e {
            ConfigError::Invalid { .. } => CliError::Config(e.to_string()),
            ConfigError::Io(..) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> CliError {
        if e.is_schema() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> CliError {
        match &e {
            ClientError::Http { status, .. } if (400..500).contains(status) => CliError::Config(e.to_string()),
            ClientError::Protocol(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "holoboard", version, about = "Double-sided teaching board engine and engagement analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the session server until interrupted.
    Serve(ServeArgs),
    /// Run a scenario script through the tick loop without sockets.
    Simulate(SimulateArgs),
    /// Re-run a recorded session log and check every snapshot matches.
    Replay(ReplayArgs),
    /// Build a two-group engagement report from a dataset directory.
    Analyze(AnalyzeArgs),
    /// Write the built-in scenario scripts.
    GenScenarios(GenScenariosArgs),
    /// Write a synthetic two-group dataset.
    GenDataset(GenDatasetArgs),
    /// Send one command to a running server and print the acknowledgement.
    Send(SendArgs),
    /// Print messages streamed by a running server.
    Watch(WatchArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Line-protocol port; overrides the config.
    #[arg(long)]
    pub port: Option<u16>,
    /// HTTP/WebSocket port; overrides the config.
    #[arg(long)]
    pub http_port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Record the session for `replay`.
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of ticks; by default just enough to apply every entry.
    #[arg(long)]
    pub ticks: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TVariantArg {
    Welch,
    Pooled,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory holding `group_a/` and `group_b/`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory for report.json and report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compute on a running server, e.g. http://127.0.0.1:7341.
    #[arg(long)]
    pub remote: Option<String>,
    #[arg(long, value_enum, default_value = "welch")]
    pub t_test: TVariantArg,
    /// Normalize acoustic series by the mean of this leading fraction.
    #[arg(long)]
    pub baseline: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenScenariosArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to the config seed, or 7 without a config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// No injected effects.
    #[arg(long)]
    pub null: bool,
    #[arg(long)]
    pub no_audio: bool,
    #[arg(long)]
    pub students: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SendArgs {
    /// Server HTTP address.
    #[arg(long, default_value = "http://127.0.0.1:7341")]
    pub server: String,
    /// Command payload, e.g. '{"name":"next_slide"}'.
    pub command: String,
}

#[derive(Debug, Args)]
pub struct WatchArgs {
    /// Server line-protocol address.
    #[arg(long, default_value = "127.0.0.1:7340")]
    pub addr: SocketAddr,
    /// Stop after this many snapshots.
    #[arg(long)]
    pub count: Option<u64>,
    /// Print events only.
    #[arg(long)]
    pub events: bool,
}

/// Installs the stderr log subscriber, filtered by `HOLO_LOG` (default `info`).
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env(LOG_ENV)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Serve(a) => serve(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Replay(a) => replay_log(a),
        Cmd::Analyze(a) => analyze(a),
        Cmd::GenScenarios(a) => gen_scenarios(a),
        Cmd::GenDataset(a) => gen_dataset(a),
        Cmd::Send(a) => send(a),
        Cmd::Watch(a) => watch(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, CliError> {
    match path {
        Some(p) => Ok(EngineConfig::load(p)?),
        None => Ok(EngineConfig::default()),
    }
}

/// The config's deck file, or the built-in demo deck.
fn load_deck(cfg: &EngineConfig) -> Result<SlideDeck, CliError> {
    match &cfg.deck {
        Some(p) => SlideDeck::load(p).map_err(|e| CliError::Config(format!("deck {}: {e}", p.display()))),
        None => Ok(demo_deck()),
    }
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime("tokio runtime"))
}

async fn interrupted() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(port) = a.port {
        cfg.port = port;
        if a.http_port.is_none() && cfg.http_port.is_none() {
            cfg.http_port = Some(port.wrapping_add(1));
        }
    }
    if let Some(p) = a.http_port {
        cfg.http_port = Some(p);
    }
    let deck = load_deck(&cfg)?;
    let mut opts = ServerOptions::new(cfg, deck);
    opts.bind = a.bind;
    opts.event_log = a.event_log;
    tokio_runtime()?.block_on(async move {
        let server = RunningServer::start(opts).await?;
        // One machine-readable line so scripts can find ephemeral ports.
        println!("listening tcp={} http={}", server.tcp_addr, server.http_addr);
        let _ = std::io::stdout().flush();
        server.run_until(interrupted()).await?;
        Ok(())
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(runtime(path.display()))
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let deck = load_deck(&cfg)?;
    let text = fs::read_to_string(&a.script).map_err(runtime(a.script.display()))?;
    let script =
        ScenarioScript::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", a.script.display())))?;
    let out = scenario::simulate(&script, &cfg, deck, a.ticks);
    fs::create_dir_all(&a.out).map_err(runtime(a.out.display()))?;
    write_file(&a.out.join(SESSION_LOG), &out.log)?;
    write_file(&a.out.join(DIGESTS), out.digest_lines().as_bytes())?;
    if let Some(snap) = out.final_snapshot() {
        let line = protocol::encode(snap).map_err(|e| CliError::Runtime(format!("final snapshot: {e}")))?;
        write_file(&a.out.join(FINAL_SNAPSHOT), &line)?;
    }
    let last = out.digests.last().map(|(_, d)| d.as_str()).unwrap_or("-");
    println!("ticks={} inputs={} events={} final_digest={last}", out.digests.len(), script.entries.len(), out.events.len());
    Ok(())
}

fn replay_log(a: ReplayArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let deck = load_deck(&cfg)?;
    let text = fs::read_to_string(&a.log).map_err(runtime(a.log.display()))?;
    match replay(cfg, deck, &text) {
        Ok(s) => {
            println!("replayed inputs={} snapshots={} identical", s.inputs, s.snapshots);
            Ok(())
        }
        Err(e @ ReplayError::Decode { .. }) => Err(CliError::Config(format!("{}: {e}", a.log.display()))),
        Err(e) => Err(CliError::Runtime(format!("{}: {e}", a.log.display()))),
    }
}

fn report_options(a: &AnalyzeArgs) -> ReportOptions {
    ReportOptions {
        t_variant: match a.t_test {
            TVariantArg::Welch => TTestVariant::Welch,
            TVariantArg::Pooled => TTestVariant::Pooled,
        },
        baseline_fraction: a.baseline,
        ..ReportOptions::default()
    }
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let (ga, gb) = load_pair(&a.input)?;
    let opts = report_options(&a);
    let (report, text): (Report, String) = match &a.remote {
        Some(url) => {
            let req = ReportRequest {
                group_a: DatasetPayload::from_dataset(&ga),
                group_b: DatasetPayload::from_dataset(&gb),
                options: opts,
            };
            let resp = tokio_runtime()?.block_on(ApiClient::new(url.clone()).report(&req))?;
            (resp.report, resp.text)
        }
        None => {
            let report = build_report(&ga, &gb, &opts, &LexiconProvider::default())
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let text = render_text(&report);
            (report, text)
        }
    };
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(runtime(out.display()))?;
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_file(&out.join(REPORT_JSON), json.as_bytes())?;
        write_file(&out.join(REPORT_TEXT), text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn gen_scenarios(a: GenScenariosArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let seed = a.seed.unwrap_or(cfg.seed);
    fs::create_dir_all(&a.out).map_err(runtime(a.out.display()))?;
    for name in BUILTIN_SCENARIOS {
        let script = scenario::builtin(name, seed).expect("built-in scenario");
        let path = a.out.join(format!("{name}.jsonl"));
        write_file(&path, script.to_jsonl().as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn gen_dataset(a: GenDatasetArgs) -> Result<(), CliError> {
    let mut params = if a.null { SyntheticParams::null() } else { SyntheticParams::default() };
    if let Some(p) = &a.config {
        params.seed = EngineConfig::load(p)?.seed;
    }
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    if let Some(n) = a.students {
        params.students = n;
    }
    params.with_audio = !a.no_audio;
    let pair = generate(&params).map_err(|e| CliError::Config(e.to_string()))?;
    write_pair(&a.out, &pair).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{}", a.out.display());
    Ok(())
}

fn send(a: SendArgs) -> Result<(), CliError> {
    let value: serde_json::Value =
        serde_json::from_str(&a.command).map_err(|e| CliError::Config(format!("command: {e}")))?;
    let msg = protocol::decode_value(serde_json::json!({ "payload": value, "seq": 0, "type": "command" }))
        .map_err(|e| CliError::Config(format!("command: {e}")))?;
    let Body::Command(command): Body = msg.body else { unreachable!("decoded as a command") };
    let ack = tokio_runtime()?.block_on(send_command(&a.server, &command))?;
    println!("{}", serde_json::to_string(&ack).expect("ack serializes"));
    Ok(())
}

async fn send_command(server: &str, command: &Command) -> Result<holo_core::api::CommandAck, ClientError> {
    ApiClient::new(server).command(command).await
}

fn watch(a: WatchArgs) -> Result<(), CliError> {
    tokio_runtime()?.block_on(async move {
        let (mut client, _) = SessionClient::handshake(a.addr, "holoboard-watch", None).await?;
        let mut snapshots = 0;
        let mut stdout = std::io::stdout();
        loop {
            let msg: Message = client.recv().await?;
            let is_snapshot = matches!(msg.body, Body::StateSnapshot(_));
            if !(a.events && is_snapshot) {
                let line = protocol::encode(&msg).map_err(ClientError::from)?;
                stdout.write_all(&line).map_err(runtime("stdout"))?;
            }
            if is_snapshot {
                snapshots += 1;
                if a.count.is_some_and(|c| snapshots >= c) {
                    return Ok(());
                }
            }
        }
    })
}
