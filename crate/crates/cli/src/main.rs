//! Batch front end: ingest price data, cluster nodes, solve a single hour,
//! run multi-day backtests and regenerate report tables.
//!
//! Exit codes: 0 success, 1 validation error, 2 data coverage error,
//! 3 solver failure. Every output file carries the hash of the effective
//! run configuration.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand};
use convbid::backtest::optimize_hour;
use convbid::bidmodels::block_payoff;
use convbid::market_data::{
    cluster_nodes, load_price_csv, rolling_window, MarketDataError, PricePanel,
};
use convbid::{BacktestConfig, BacktestReport, HourlyOutcome, ModelKind};
use rayon::prelude::*;

use config::RunConfig;
use output::{hash_header, write_report_files, ReportFile};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_COVERAGE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub fn validation(message: String) -> CliError {
    CliError {
        code: EXIT_VALIDATION,
        message,
    }
}

pub fn coverage(message: String) -> CliError {
    CliError {
        code: EXIT_COVERAGE,
        message,
    }
}

pub fn solver_failure(message: String) -> CliError {
    CliError {
        code: EXIT_SOLVER,
        message,
    }
}

pub fn io_err(context: &str, e: std::io::Error) -> CliError {
    validation(format!("{context}: {e}"))
}

#[derive(Parser)]
#[command(
    name = "convbid",
    version,
    about = "Convergence bidding toolkit: data ingestion, node clustering, \
             risk-constrained bid optimization and rolling backtests"
)]
struct Cli {
    /// Run configuration (TOML); flags override individual keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw price CSV and write the panel cache.
    Ingest(IngestArgs),
    /// Group nodes by delta-event synchronization and list representatives.
    Cluster(ClusterArgs),
    /// Build and solve one target hour; write its bids and a solve log.
    Optimize(OptimizeArgs),
    /// Run a rolling backtest and write the report and statistics tables.
    Backtest(BacktestArgs),
    /// Regenerate statistics tables from an existing report file.
    Report(ReportArgs),
}

/// Overrides shared by optimize and backtest.
#[derive(Args, Clone)]
struct ModelOverrides {
    /// Model recipe: sample-vp, sample-v, sample-p or sample-p-max.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Tail fraction of the risk constraint.
    #[arg(long)]
    alpha: Option<f64>,
    /// Volume-normalized risk budget; "inf" disables the constraint.
    #[arg(long)]
    rho_tilde: Option<f64>,
    /// Hourly volume budget W in MWh.
    #[arg(long)]
    total_volume: Option<f64>,
    /// Per-position volume cap in MWh.
    #[arg(long)]
    per_position_cap: Option<f64>,
    /// Training window length in days.
    #[arg(long)]
    lookback_days: Option<usize>,
    /// Positions kept per side for budget-spreading recipes.
    #[arg(long)]
    top_positions: Option<usize>,
    /// Positions kept per side for the at-cap recipe.
    #[arg(long)]
    max_positions: Option<usize>,
    /// Comma-separated node list (default: all nodes in the cache).
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<String>>,
    /// Panel cache path (overrides the config file).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output directory (overrides the config file).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ModelOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.model {
            cfg.model.kind = v;
        }
        if let Some(v) = self.alpha {
            cfg.model.config.alpha = v;
        }
        if let Some(v) = self.rho_tilde {
            cfg.model.config.rho_tilde = v;
        }
        if let Some(v) = self.total_volume {
            cfg.model.config.total_volume = v;
        }
        if let Some(v) = self.per_position_cap {
            cfg.model.config.per_position_cap = v;
        }
        if let Some(v) = self.lookback_days {
            cfg.backtest.lookback_days = v;
        }
        if let Some(v) = self.top_positions {
            cfg.backtest.top_positions = v;
        }
        if let Some(v) = self.max_positions {
            cfg.backtest.max_positions = v;
        }
        if let Some(v) = &self.nodes {
            cfg.backtest.nodes = Some(v.clone());
        }
        if let Some(v) = &self.cache {
            cfg.data.cache = Some(v.clone());
        }
        if let Some(v) = &self.out_dir {
            cfg.output.dir = v.clone();
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Raw price CSV (overrides the config file).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Cache path to write (overrides the config file).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Validate and summarize only; write nothing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Synchronization score above which two nodes are merged.
    #[arg(long)]
    threshold: Option<f64>,
    /// |delta| quantile defining an event hour.
    #[arg(long)]
    event_quantile: Option<f64>,
    /// Output CSV (default <out-dir>/clusters.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Target hour, RFC 3339 (e.g. 2020-11-01T07:00:00Z).
    #[arg(long)]
    hour: DateTime<Utc>,
    #[command(flatten)]
    overrides: ModelOverrides,
}

#[derive(Args)]
struct BacktestArgs {
    /// First backtest day, RFC 3339 (overrides the config file).
    #[arg(long)]
    start: Option<DateTime<Utc>>,
    /// Number of backtest days.
    #[arg(long)]
    days: Option<usize>,
    /// Worker threads; 0 = one per logical CPU.
    #[arg(long)]
    workers: Option<usize>,
    /// Reuse per-hour outputs of an interrupted run with the same config.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    overrides: ModelOverrides,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `backtest` (default <out-dir>/report.json).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Subsampling block length in days.
    #[arg(long)]
    block_days: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's help/version "errors" are success; anything else is a
            // usage problem and therefore a validation failure.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = run(cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&mut cfg, args),
        Command::Cluster(args) => cmd_cluster(&mut cfg, args),
        Command::Optimize(args) => cmd_optimize(&mut cfg, args),
        Command::Backtest(args) => cmd_backtest(&mut cfg, args),
        Command::Report(args) => cmd_report(&mut cfg, args),
    }
}

const CACHE_HEADER: &str = "#convbid-panel-cache v1";

fn data_error(e: MarketDataError) -> CliError {
    match e {
        MarketDataError::Coverage { .. } => coverage(e.to_string()),
        other => validation(other.to_string()),
    }
}

/// Loads either a panel cache (versioned header) or a raw CSV.
fn load_panel(cfg: &RunConfig) -> Result<PricePanel, CliError> {
    let path = cfg
        .data
        .cache
        .as_ref()
        .or(cfg.data.prices.as_ref())
        .ok_or_else(|| validation("no data.cache or data.prices configured".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let schema = if text.starts_with("#convbid-panel-cache") {
        let version = text.lines().next().unwrap_or("");
        if version != CACHE_HEADER {
            return Err(validation(format!(
                "unsupported cache version {version:?} in {} (expected {CACHE_HEADER:?})",
                path.display()
            )));
        }
        // caches are always written in the default schema
        convbid::market_data::CsvSchema::default()
    } else {
        cfg.data.schema.clone()
    };
    convbid::market_data::load_price_reader(text.as_bytes(), &schema).map_err(data_error)
}

fn cmd_ingest(cfg: &mut RunConfig, args: IngestArgs) -> Result<(), CliError> {
    if let Some(v) = &args.input {
        cfg.data.prices = Some(v.clone());
    }
    if let Some(v) = &args.cache {
        cfg.data.cache = Some(v.clone());
    }
    let input = cfg
        .data
        .prices
        .clone()
        .ok_or_else(|| validation("no input: pass --input or set data.prices".into()))?;
    let cache = cfg
        .data
        .cache
        .clone()
        .unwrap_or_else(|| PathBuf::from("panel-cache.csv"));
    cfg.validate()?;
    let hash = cfg.hash();

    let panel = load_price_csv(&input, &cfg.data.schema).map_err(data_error)?;
    let (first, last) = match (panel.hours().first(), panel.hours().last()) {
        (Some(f), Some(l)) => (f.to_rfc3339(), l.to_rfc3339()),
        _ => ("-".into(), "-".into()),
    };
    println!(
        "ingested {}: {} nodes, {} hours ({first} .. {last}), {} missing cells [config {hash}]",
        input.display(),
        panel.num_nodes(),
        panel.num_hours(),
        panel.missing_cells()
    );
    if args.dry_run {
        println!("dry run: cache not written");
        return Ok(());
    }
    let mut buf = Vec::new();
    use std::io::Write;
    writeln!(buf, "{CACHE_HEADER}").unwrap();
    writeln!(buf, "#config_hash={hash}").unwrap();
    convbid::market_data::write_price_csv(&panel.to_records(), &mut buf)
        .map_err(|e| io_err("writing cache", e))?;
    std::fs::write(&cache, buf).map_err(|e| io_err("writing cache", e))?;
    println!("cache written to {}", cache.display());
    Ok(())
}

fn cmd_cluster(cfg: &mut RunConfig, args: ClusterArgs) -> Result<(), CliError> {
    if let Some(v) = &args.cache {
        cfg.data.cache = Some(v.clone());
    }
    if let Some(v) = args.threshold {
        cfg.cluster.threshold = v;
    }
    if let Some(v) = args.event_quantile {
        cfg.cluster.event_quantile = v;
    }
    if let Some(v) = &args.out_dir {
        cfg.output.dir = v.clone();
    }
    cfg.validate()?;
    let hash = cfg.hash();
    let panel = load_panel(cfg)?;
    let clustering = cluster_nodes(&panel, cfg.cluster.threshold, cfg.cluster.event_quantile);
    let reps = clustering.representatives();

    let out = args
        .out
        .unwrap_or_else(|| cfg.output.dir.join("clusters.csv"));
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err("creating output dir", e))?;
    }
    let mut body = hash_header(&hash, false);
    body.push_str("node,representative\n");
    for (node, rep) in &clustering.representative {
        body.push_str(&format!("{node},{rep}\n"));
    }
    std::fs::write(&out, body).map_err(|e| io_err("writing clusters", e))?;
    println!(
        "{} nodes -> {} representatives (threshold {}): {}",
        panel.num_nodes(),
        reps.len(),
        cfg.cluster.threshold,
        reps.join(",")
    );
    println!("written to {}", out.display());
    Ok(())
}

fn cmd_optimize(cfg: &mut RunConfig, args: OptimizeArgs) -> Result<(), CliError> {
    args.overrides.apply(cfg);
    cfg.validate()?;
    let hash = cfg.hash();
    let panel = load_panel(cfg)?;
    let bt = cfg.to_backtest_config(args.hour, 1);
    let outcome = optimize_hour(&panel, &bt, args.hour).map_err(backtest_error)?;

    let out_dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| io_err("creating output dir", e))?;
    let stamp = args.hour.format("%Y%m%dT%H%MZ");

    // Bid files (CSV and JSON), even when empty.
    let csv_path = out_dir.join(format!("bids-{stamp}.csv"));
    let mut body = hash_header(&hash, false);
    body.push_str(
        &outcome
            .bids
            .to_csv_string()
            .map_err(|e| validation(format!("serializing bids: {e}")))?,
    );
    std::fs::write(&csv_path, body).map_err(|e| io_err("writing bids", e))?;
    let json_path = out_dir.join(format!("bids-{stamp}.json"));
    let bids_json = serde_json::json!({
        "config_hash": hash,
        "target_hour": outcome.target_hour,
        "bids": outcome.bids,
    });
    std::fs::write(&json_path, pretty(&bids_json)).map_err(|e| io_err("writing bids", e))?;

    // Solve log with the in-sample objective: mean payoff of the emitted
    // bids over the training window, normalized by the budget W.
    let in_sample = in_sample_mean(&panel, &bt, &outcome);
    let log = serde_json::json!({
        "config_hash": hash,
        "model": bt.model,
        "target_hour": outcome.target_hour,
        "status": if outcome.failure.is_none() { "optimal" } else { "failed" },
        "failure": outcome.failure,
        "num_segments": outcome.num_segments,
        "solve_time_ms": outcome.solve_time_ms,
        "in_sample_mean_normalized_revenue": in_sample,
        "settlement": if outcome.failure.is_none() { Some(&outcome.settlement) } else { None },
    });
    let log_path = out_dir.join(format!("solve-log-{stamp}.json"));
    std::fs::write(&log_path, pretty(&log)).map_err(|e| io_err("writing solve log", e))?;

    match &outcome.failure {
        None => {
            println!(
                "{}: {} segments, solve {:.1} ms, revenue {:.2} [config {hash}]",
                outcome.target_hour, outcome.num_segments, outcome.solve_time_ms, outcome.revenue
            );
            Ok(())
        }
        Some(reason) if reason.starts_with("coverage:") => Err(coverage(reason.clone())),
        Some(reason) if reason.starts_with("solver:") => Err(solver_failure(reason.clone())),
        Some(reason) => {
            // model-level emptiness (e.g. no scorable positions) and missing
            // settlement are explained in the log, not fatal
            println!("{}: no settled bids ({reason}); see {}", outcome.target_hour, log_path.display());
            Ok(())
        }
    }
}

/// Mean per-sample payoff of the emitted bids over the training window,
/// divided by the budget. `None` when the window is unavailable or empty.
fn in_sample_mean(
    panel: &PricePanel,
    bt: &BacktestConfig,
    outcome: &HourlyOutcome,
) -> Option<f64> {
    if outcome.bids.is_empty() {
        return None;
    }
    let nodes: Vec<String> = outcome.bids.curves.keys().cloned().collect();
    let window = rolling_window(
        panel,
        outcome.target_hour,
        bt.lookback_days,
        &nodes,
        bt.market_offset(),
    )
    .ok()?;
    let t = window.num_samples();
    let mut total = 0.0;
    for ti in 0..t {
        for (node, curves) in &outcome.bids.curves {
            let ni = window.node_index(node)?;
            let lambda = window.da_of(ti, ni);
            let delta = window.delta_of(ti, ni);
            total += block_payoff(&curves.supply, convbid::bidmodels::Side::Supply, lambda, delta);
            total += block_payoff(&curves.demand, convbid::bidmodels::Side::Demand, lambda, delta);
        }
    }
    Some(total / t as f64 / bt.model_config.total_volume)
}

fn backtest_error(e: convbid::backtest::BacktestError) -> CliError {
    use convbid::backtest::BacktestError as E;
    match e {
        E::Data(d) => data_error(d),
        E::MissingRealized { .. } => coverage(e.to_string()),
        other => validation(other.to_string()),
    }
}

/// Per-hour output record; lets an interrupted run resume without
/// recomputing finished hours.
#[derive(serde::Serialize, serde::Deserialize)]
struct HourRecord {
    config_hash: String,
    outcome: HourlyOutcome,
}

fn cmd_backtest(cfg: &mut RunConfig, args: BacktestArgs) -> Result<(), CliError> {
    args.overrides.apply(cfg);
    if let Some(v) = args.start {
        cfg.backtest.start = Some(v);
    }
    if let Some(v) = args.days {
        cfg.backtest.num_days = v;
    }
    if let Some(v) = args.workers {
        cfg.backtest.workers = v;
    }
    cfg.validate()?;
    let hash = cfg.hash();
    let start = cfg
        .backtest
        .start
        .ok_or_else(|| validation("no start: pass --start or set backtest.start".into()))?;
    let panel = load_panel(cfg)?;
    let bt = cfg.to_backtest_config(start, cfg.backtest.num_days);

    let out_dir = cfg.output.dir.clone();
    let hours_dir = out_dir.join("hours");
    std::fs::create_dir_all(&hours_dir).map_err(|e| io_err("creating output dir", e))?;

    let targets: Vec<DateTime<Utc>> = (0..bt.num_days * 24)
        .map(|h| start + Duration::hours(h as i64))
        .collect();
    let hour_path = |t: &DateTime<Utc>| hours_dir.join(format!("{}.json", t.format("%Y%m%dT%H%MZ")));

    let compute = || -> Result<Vec<HourlyOutcome>, CliError> {
        targets
            .par_iter()
            .map(|t| {
                if args.resume {
                    // reuse a finished hour only if it came from this config
                    if let Ok(text) = std::fs::read_to_string(hour_path(t)) {
                        if let Ok(rec) = serde_json::from_str::<HourRecord>(&text) {
                            if rec.config_hash == hash && rec.outcome.target_hour == *t {
                                return Ok(rec.outcome);
                            }
                        }
                    }
                }
                let outcome = optimize_hour(&panel, &bt, *t).map_err(backtest_error)?;
                let rec = HourRecord {
                    config_hash: hash.clone(),
                    outcome,
                };
                std::fs::write(hour_path(t), pretty(&rec))
                    .map_err(|e| io_err("writing hour output", e))?;
                Ok(rec.outcome)
            })
            .collect()
    };
    let outcomes = if cfg.backtest.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.backtest.workers)
            .build()
            .map_err(|e| validation(format!("worker pool: {e}")))?
            .install(compute)?
    } else {
        compute()?
    };

    let report = BacktestReport {
        model: bt.model,
        total_volume: bt.model_config.total_volume,
        outcomes,
    };
    let first_coverage = report
        .outcomes
        .iter()
        .filter_map(|o| o.failure.as_deref())
        .find(|r| r.starts_with("coverage:"));
    let first_solver = report
        .outcomes
        .iter()
        .filter_map(|o| o.failure.as_deref())
        .find(|r| r.starts_with("solver:"));
    let partial = first_coverage.is_some() || first_solver.is_some();

    write_report_files(&ReportFile {
        out_dir: &out_dir,
        hash: &hash,
        partial,
        report: &report,
        alpha: cfg.model.config.alpha,
        block_days: cfg.output.block_days,
        confidence: cfg.output.confidence,
    })?;
    print!(
        "{}",
        convbid::backtest::render_summary_table(
            &[&report],
            cfg.output.block_days,
            cfg.output.confidence
        )
    );
    println!("outputs written to {} [config {hash}]", out_dir.display());

    if let Some(reason) = first_coverage {
        return Err(coverage(format!("partial outputs written; first failure: {reason}")));
    }
    if let Some(reason) = first_solver {
        return Err(solver_failure(format!(
            "partial outputs written; first failure: {reason}"
        )));
    }
    Ok(())
}

fn cmd_report(cfg: &mut RunConfig, args: ReportArgs) -> Result<(), CliError> {
    if let Some(v) = &args.out_dir {
        cfg.output.dir = v.clone();
    }
    if let Some(v) = args.block_days {
        cfg.output.block_days = v;
    }
    if let Some(v) = args.confidence {
        cfg.output.confidence = v;
    }
    let path = args
        .report
        .unwrap_or_else(|| cfg.output.dir.join("report.json"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| validation(format!("invalid report {}: {e}", path.display())))?;
    let hash = value["config_hash"]
        .as_str()
        .unwrap_or("unknown")
        .to_string();
    let partial = value["partial"].as_bool().unwrap_or(false);
    let report: BacktestReport = serde_json::from_value(value["report"].clone())
        .map_err(|e| validation(format!("invalid report {}: {e}", path.display())))?;

    write_report_files(&ReportFile {
        out_dir: &cfg.output.dir,
        hash: &hash,
        partial,
        report: &report,
        alpha: cfg.model.config.alpha,
        block_days: cfg.output.block_days,
        confidence: cfg.output.confidence,
    })?;
    print!(
        "{}",
        convbid::backtest::render_summary_table(
            &[&report],
            cfg.output.block_days,
            cfg.output.confidence
        )
    );
    println!("tables written to {} [config {hash}]", cfg.output.dir.display());
    Ok(())
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
