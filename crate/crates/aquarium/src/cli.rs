//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::time::Duration;

use anyhow::{anyhow, Context};
use aquarium_core::control::{Controller, ControlConfig, PumpState};
use aquarium_core::display;
use aquarium_core::domain::{EventPayload, EventRecord};
use aquarium_core::eventlog::{list_runs, replay_path, replay_run, RunLog};
use aquarium_core::metrics::{evaluate, EvalConfig, GroundTruthTrace};
use aquarium_core::plant::{parse_duration, Pacing, Script};
use aquarium_core::signal::CalibrationSet;
use aquarium_core::station::{trace_path, RunSummary, Simulation, SimulationConfig};
use aquarium_core::telemetry::{ReadingsSnapshot, TelemetryHub};
use clap::{Args, Parser, Subcommand};

use crate::api;

#[derive(Debug, Parser)]
#[command(name = "aquarium", version, about = "Simulated smart aquarium: control loop, telemetry service and evaluator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the plant, control loop and telemetry service over a scenario.
    Run(RunArgs),
    /// Score a finished run against its ground-truth trace.
    Eval(EvalArgs),
    /// Emulate the 16x2 LCD against a running service.
    Display(DisplayArgs),
    /// Serve a recorded run read-only.
    ServeOnly(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ServiceArgs {
    /// HTTP port for the telemetry service.
    #[arg(long, env = "AQUA_PORT", default_value_t = 80)]
    pub port: u16,
    /// Address to bind the telemetry service to.
    #[arg(long, env = "AQUA_BIND", default_value = "0.0.0.0")]
    pub bind: std::net::IpAddr,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario script; the built-in 72 h script when omitted.
    #[arg(long, env = "AQUA_SCENARIO")]
    pub scenario: Option<PathBuf>,
    /// Simulated seconds per wall second; unpaced when omitted.
    #[arg(long, env = "AQUA_SPEEDUP")]
    pub speedup: Option<f64>,
    /// Simulated run length, e.g. `72h`, `90m`, `300s`.
    #[arg(long, env = "AQUA_DURATION", default_value = "72h")]
    pub duration: String,
    #[arg(long, env = "AQUA_LOG_DIR", default_value = "aquarium-logs")]
    pub log_dir: PathBuf,
    /// Controller settings (TOML).
    #[arg(long, env = "AQUA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Calibration curves (TOML).
    #[arg(long, env = "AQUA_CALIBRATION")]
    pub calibration: Option<PathBuf>,
    /// Sensor-noise seed.
    #[arg(long, env = "AQUA_SEED")]
    pub seed: Option<u64>,
    /// Run identifier; derived from the wall clock when omitted.
    #[arg(long, env = "AQUA_RUN_ID")]
    pub run_id: Option<String>,
    /// Skip the telemetry service.
    #[arg(long)]
    pub no_serve: bool,
    /// Keep serving after the scenario ends, until interrupted.
    #[arg(long)]
    pub linger: bool,
    #[command(flatten)]
    pub service: ServiceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, env = "AQUA_LOG_DIR", default_value = "aquarium-logs")]
    pub log_dir: PathBuf,
    /// Run to score; required when the directory holds several.
    #[arg(long, env = "AQUA_RUN_ID")]
    pub run_id: Option<String>,
    /// Score a single log file instead of a run directory.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Ground-truth trace; `<log-dir>/<run-id>.trace.ndjson` by default.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Controller settings whose rules and poll period the scoring uses.
    #[arg(long, env = "AQUA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Where to write the JSON report; next to the log by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Corrupt log lines tolerated before the evaluation fails.
    #[arg(long, default_value_t = 16)]
    pub max_corrupt: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DisplayArgs {
    /// Base address of the telemetry service.
    #[arg(long, env = "AQUA_ADDR", default_value = "http://127.0.0.1:80")]
    pub addr: String,
    /// Milliseconds per page.
    #[arg(long, default_value_t = display::PAGE_PERIOD.as_millis() as u64)]
    pub interval_ms: u64,
    /// Stop after this many frames; 0 runs until interrupted.
    #[arg(long, default_value_t = 0)]
    pub frames: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "AQUA_LOG_DIR", default_value = "aquarium-logs")]
    pub log_dir: PathBuf,
    #[arg(long, env = "AQUA_RUN_ID")]
    pub run_id: Option<String>,
    #[arg(long, env = "AQUA_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub service: ServiceArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Parses `args` and runs the chosen command.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    match cli.command {
        Command::Run(args) => rt.block_on(cmd_run(args)).map(|_| ()),
        Command::Eval(args) => cmd_eval(&args, &mut std::io::stdout()),
        Command::Display(args) => rt.block_on(cmd_display(args, std::io::stdout())),
        Command::ServeOnly(args) => rt.block_on(cmd_serve(args)),
    }
}

/// Turns flags into a validated simulation config.
pub fn simulation_config(args: &RunArgs) -> Result<SimulationConfig, CliError> {
    let duration_s = parse_duration(&args.duration)
        .filter(|d| *d > 0.0)
        .ok_or_else(|| CliError::Usage(format!("invalid --duration {:?}; use e.g. 72h, 90m, 300s", args.duration)))?;
    let pacing = match args.speedup {
        None => Pacing::Unpaced,
        Some(s) if s >= 1.0 && s.is_finite() => Pacing::Speedup(s),
        Some(s) => return Err(CliError::Usage(format!("--speedup must be >= 1, got {s}"))),
    };
    let run_id = args
        .run_id
        .clone()
        .unwrap_or_else(|| format!("run-{}", chrono::Utc::now().format("%Y%m%dT%H%M%S")));
    let mut cfg = SimulationConfig::new(run_id, &args.log_dir);
    cfg.duration_s = duration_s;
    cfg.pacing = pacing;
    if let Some(path) = &args.scenario {
        cfg.script = Script::load(path).with_context(|| format!("loading scenario {}", path.display()))?;
    }
    cfg.control = ControlConfig::load(args.config.as_deref()).context("loading controller config")?;
    cfg.calibration = CalibrationSet::load(args.calibration.as_deref()).context("loading calibration")?;
    if let Some(seed) = args.seed {
        cfg.noise.seed = seed;
    }
    cfg.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

async fn bind(service: &ServiceArgs) -> anyhow::Result<tokio::net::TcpListener> {
    let addr = SocketAddr::new(service.bind, service.port);
    tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding telemetry service to {addr}"))
}

async fn ctrl_c() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
}

fn print_summary(s: &RunSummary) {
    println!("run {} in {}", s.run_id, s.log_dir.display());
    println!(
        "  simulated {:.0} s{}, {} records in {} segment(s), {} alerts",
        s.sim_seconds,
        if s.interrupted { " (interrupted)" } else { "" },
        s.records,
        s.segments,
        s.alerts
    );
    println!(
        "  {} poll cycles, mean {:?}, worst {:?}",
        s.timing.cycles,
        s.timing.mean(),
        s.timing.max
    );
    println!("  published {}, dropped {}", s.published, s.publish_dropped);
    if let Some(t) = &s.trace_path {
        println!("  trace {}", t.display());
    }
}

pub async fn cmd_run(args: RunArgs) -> Result<RunSummary, CliError> {
    let cfg = simulation_config(&args)?;
    std::fs::create_dir_all(&cfg.log_dir).with_context(|| format!("creating {}", cfg.log_dir.display()))?;
    let mut sim = Simulation::new(cfg).map_err(|e| anyhow!(e))?;
    let stop = sim.stop_flag();

    let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
    let server = if args.no_serve {
        None
    } else {
        let listener = bind(&args.service).await?;
        tracing::info!(addr = %listener.local_addr().context("listener address")?, "telemetry service listening");
        let (hub, inbox) = TelemetryHub::new();
        sim.attach_hub(hub.clone(), inbox);
        Some(tokio::spawn(api::serve(listener, hub, async {
            let _ = shutdown_rx.await;
        })))
    };

    let interrupt = {
        let stop = stop.clone();
        tokio::spawn(async move {
            ctrl_c().await;
            tracing::info!("interrupt received, stopping");
            stop.store(true, Ordering::Relaxed);
        })
    };
    let summary = tokio::task::spawn_blocking(move || sim.run())
        .await
        .context("simulation thread")?
        .map_err(|e| anyhow!(e))?;
    print_summary(&summary);

    if let Some(server) = server {
        if args.linger && !stop.load(Ordering::Relaxed) {
            println!("scenario finished; serving until interrupted");
            let _ = interrupt.await;
        }
        let _ = shutdown_tx.send(());
        server.await.context("telemetry service task")?.context("telemetry service")?;
    }
    Ok(summary)
}

fn pick_run(dir: &Path, run_id: Option<&str>) -> Result<String, CliError> {
    if let Some(id) = run_id {
        return Ok(id.to_string());
    }
    let runs = list_runs(dir).with_context(|| format!("listing runs in {}", dir.display()))?;
    match runs.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(anyhow!("no runs found in {}", dir.display()).into()),
        many => Err(CliError::Usage(format!("several runs in {}; pick one with --run-id: {}", dir.display(), many.join(", ")))),
    }
}

pub fn cmd_eval(args: &EvalArgs, out: &mut impl Write) -> Result<(), CliError> {
    let control = ControlConfig::load(args.config.as_deref()).context("loading controller config")?;
    let (log, trace_file, report_file): (RunLog, PathBuf, PathBuf) = match &args.log {
        Some(path) => {
            let log = replay_path(path, None).with_context(|| format!("reading {}", path.display()))?;
            let trace = args.trace.clone().ok_or_else(|| CliError::Usage("--log needs --trace".into()))?;
            (log, trace, path.with_extension("report.json"))
        }
        None => {
            let run = pick_run(&args.log_dir, args.run_id.as_deref())?;
            let log = replay_run(&args.log_dir, &run).with_context(|| format!("reading run {run}"))?;
            let trace = args.trace.clone().unwrap_or_else(|| trace_path(&args.log_dir, &run));
            (log, trace, args.log_dir.join(format!("{run}.report.json")))
        }
    };
    let trace = GroundTruthTrace::load(&trace_file).with_context(|| format!("loading trace {}", trace_file.display()))?;
    if !log.corrupt.is_empty() {
        eprintln!("warning: skipped {} corrupt log line(s)", log.corrupt.len());
        for c in log.corrupt.iter().take(10) {
            eprintln!("  {} line {}: {}", c.segment, c.line, c.reason);
        }
    }
    if log.corrupt.len() > args.max_corrupt {
        return Err(anyhow!("{} corrupt lines exceed the tolerance of {}", log.corrupt.len(), args.max_corrupt).into());
    }
    let config = EvalConfig {
        rules: control.rules.clone(),
        poll_period_s: control.poll_period_s,
        ..EvalConfig::default()
    };
    let report = evaluate(&trace, &log.records, log.corrupt.len(), &config);
    let report_file = args.out.clone().unwrap_or(report_file);
    let json = serde_json::to_string_pretty(&report).context("encoding report")?;
    std::fs::write(&report_file, json).with_context(|| format!("writing {}", report_file.display()))?;
    write!(out, "{}", report.render_table()).context("writing table")?;
    writeln!(out, "report written to {}", report_file.display()).context("writing table")?;
    Ok(())
}

fn boxed(frame: &display::Frame) -> String {
    let [a, b] = frame.padded();
    let rule = "-".repeat(display::COLUMNS);
    format!("+{rule}+\n|{a}|\n|{b}|\n+{rule}+\n")
}

async fn fetch(client: &reqwest::Client, url: &str) -> anyhow::Result<ReadingsSnapshot> {
    let resp = client.get(url).send().await?;
    if !resp.status().is_success() {
        return Err(anyhow!("service answered {}", resp.status()));
    }
    Ok(resp.json().await?)
}

/// Polls the service once per page and writes each frame to `out`.
pub async fn cmd_display(args: DisplayArgs, mut out: impl Write) -> Result<(), CliError> {
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(2))
        .build()
        .context("building HTTP client")?;
    let url = format!("{}/api/readings", args.addr.trim_end_matches('/'));
    let interval = Duration::from_millis(args.interval_ms.max(1));
    let mut ticker = tokio::time::interval(interval);
    let mut failures = 0u64;
    let mut tick = 0u64;
    loop {
        ticker.tick().await;
        let frame = match fetch(&client, &url).await {
            Ok(snapshot) => {
                failures = 0;
                display::render(&snapshot, (tick % display::PAGES.len() as u64) as usize)
            }
            Err(e) => {
                failures += 1;
                tracing::warn!(error = %e, "display cannot reach the service");
                display::unreachable_frame(failures)
            }
        };
        out.write_all(boxed(&frame).as_bytes()).context("writing frame")?;
        out.flush().context("writing frame")?;
        tick += 1;
        if args.frames > 0 && tick >= args.frames {
            return Ok(());
        }
    }
}

/// Hub holding a recorded run: full history and the last snapshot.
pub fn recorded_hub(records: Vec<EventRecord>, control: &ControlConfig) -> Result<TelemetryHub, CliError> {
    let mut ctl = Controller::new(control).context("controller config")?;
    ctl.recover_from(&records);
    let mut pump = PumpState::default();
    let mut last = None;
    for r in &records {
        match &r.payload {
            EventPayload::PumpResult { on, acknowledged: true } => {
                pump = PumpState {
                    on: *on,
                    last_toggle: Some(r.timestamp),
                }
            }
            EventPayload::SensorSnapshot { cycle, readings } => last = Some((*cycle, readings.clone(), r.timestamp)),
            _ => {}
        }
    }
    let hub = TelemetryHub::read_only();
    if let Some((cycle, readings, at)) = last {
        hub.publish_snapshot(ReadingsSnapshot::new(cycle, &readings, ctl.rules(), pump, *ctl.feeder(), at));
    }
    hub.push_events(records);
    Ok(hub)
}

pub async fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let run = pick_run(&args.log_dir, args.run_id.as_deref())?;
    let log = replay_run(&args.log_dir, &run).with_context(|| format!("reading run {run}"))?;
    if !log.corrupt.is_empty() {
        eprintln!("warning: skipped {} corrupt log line(s)", log.corrupt.len());
    }
    let control = ControlConfig::load(args.config.as_deref()).context("loading controller config")?;
    let hub = recorded_hub(log.records, &control)?;
    let listener = bind(&args.service).await?;
    println!(
        "serving run {run} ({} records) on {}",
        hub.event_count(),
        listener.local_addr().context("listener address")?
    );
    api::serve(listener, hub, ctrl_c()).await.context("telemetry service")?;
    Ok(())
}
