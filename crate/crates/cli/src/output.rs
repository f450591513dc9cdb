//! Report artifacts: the full JSON report, a per-hour CSV, the revenue /
//! volume / bid statistics tables, confidence intervals, solve-time summary
//! and a plot-ready daily cleared-volume series. All files start with the
//! config hash; partial runs are marked as such.

use std::fmt::Write as _;
use std::path::Path;

use chrono::Duration;
use convbid::backtest::{
    bid_statistics, render_summary_table, revenue_statistics, subsample_ci, summary_stats,
    volume_statistics, BlockStatistic,
};
use convbid::BacktestReport;

use crate::{io_err, validation, CliError};

pub struct ReportFile<'a> {
    pub out_dir: &'a Path,
    pub hash: &'a str,
    pub partial: bool,
    pub report: &'a BacktestReport,
    pub alpha: f64,
    pub block_days: usize,
    pub confidence: f64,
}

pub fn hash_header(hash: &str, partial: bool) -> String {
    let mut s = format!("#config_hash={hash}\n");
    if partial {
        s.push_str("#partial=true\n");
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report_files(f: &ReportFile<'_>) -> Result<(), CliError> {
    std::fs::create_dir_all(f.out_dir).map_err(|e| io_err("creating output dir", e))?;
    let write = |name: &str, body: String| -> Result<(), CliError> {
        std::fs::write(f.out_dir.join(name), body)
            .map_err(|e| io_err(&format!("writing {name}"), e))
    };
    let report = f.report;

    // Full report.
    let mut json = serde_json::to_string_pretty(&serde_json::json!({
        "config_hash": f.hash,
        "partial": f.partial,
        "report": report,
    }))
    .map_err(|e| validation(format!("serializing report: {e}")))?;
    json.push('\n');
    write("report.json", json)?;

    // One row per hour.
    let mut csv = hash_header(f.hash, f.partial);
    csv.push_str(
        "target_hour,revenue,normalized_revenue,attempted_supply,attempted_demand,\
         cleared_supply,cleared_demand,num_segments,solve_time_ms,failure\n",
    );
    for o in &report.outcomes {
        let s = &o.settlement;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            o.target_hour.to_rfc3339(),
            o.revenue,
            o.revenue / report.total_volume,
            s.attempted_supply,
            s.attempted_demand,
            s.cleared_supply,
            s.cleared_demand,
            o.num_segments,
            o.solve_time_ms,
            o.failure.as_deref().unwrap_or("").replace(',', ";"),
        )
        .unwrap();
    }
    write("outcomes.csv", csv)?;

    // Revenue statistics of the hourly normalized series.
    let mut csv = hash_header(f.hash, f.partial);
    csv.push_str("model,alpha,mean,expected_shortfall,expected_windfall\n");
    if let Ok(r) = revenue_statistics(report, f.alpha) {
        writeln!(
            csv,
            "{},{},{},{},{}",
            report.model, f.alpha, r.mean, r.expected_shortfall, r.expected_windfall
        )
        .unwrap();
    }
    write("table-revenue.csv", csv)?;

    // Volume statistics.
    let mut csv = hash_header(f.hash, f.partial);
    csv.push_str(
        "model,mean_attempted,mean_cleared,attempted_supply_pct,attempted_demand_pct,\
         cleared_supply_pct,cleared_demand_pct\n",
    );
    if let Some(v) = volume_statistics(report) {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            report.model,
            v.mean_attempted,
            v.mean_cleared,
            opt(v.attempted_supply_pct),
            opt(v.attempted_demand_pct),
            opt(v.cleared_supply_pct),
            opt(v.cleared_demand_pct),
        )
        .unwrap();
    }
    write("table-volumes.csv", csv)?;

    // Bid-shape statistics.
    let mut csv = hash_header(f.hash, f.partial);
    csv.push_str(
        "model,single_position_pct,double_position_pct,max_segments,\
         one_step_pct,two_step_pct,more_step_pct\n",
    );
    if let Some(b) = bid_statistics(report) {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            report.model,
            b.single_position_pct,
            b.double_position_pct,
            b.max_segments,
            b.one_step_pct,
            b.two_step_pct,
            b.more_step_pct,
        )
        .unwrap();
    }
    write("table-bids.csv", csv)?;

    // Subsampling confidence intervals on the hourly normalized revenues.
    let hourly = report.hourly_normalized_revenue();
    let block_hours = f.block_days * 24;
    let mut csv = hash_header(f.hash, f.partial);
    csv.push_str("model,statistic,alpha,block_hours,confidence,lo,hi\n");
    for (name, stat) in [
        ("mean", BlockStatistic::Mean),
        (
            "expected-shortfall",
            BlockStatistic::ExpectedShortfall { alpha: f.alpha },
        ),
    ] {
        if let Ok((lo, hi)) = subsample_ci(&hourly, stat, block_hours, f.confidence) {
            writeln!(
                csv,
                "{},{name},{},{block_hours},{},{lo},{hi}",
                report.model, f.alpha, f.confidence
            )
            .unwrap();
        }
    }
    write("ci.csv", csv)?;

    // Solve-time summary (mean and deviation over hours).
    let times: Vec<f64> = report.outcomes.iter().map(|o| o.solve_time_ms).collect();
    let mut csv = hash_header(f.hash, f.partial);
    csv.push_str("model,hours,mean_ms,std_ms,min_ms,max_ms\n");
    if let Some(s) = summary_stats(&times) {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            report.model, s.count, s.mean, s.std, s.min, s.max
        )
        .unwrap();
    }
    write("solve-times.csv", csv)?;

    // Plot-ready series: cleared volume summed per backtest day.
    let mut csv = hash_header(f.hash, f.partial);
    csv.push_str("date,cleared_mwh\n");
    if let Some(first) = report.outcomes.first() {
        let mut days: Vec<f64> = Vec::new();
        for o in &report.outcomes {
            let d = ((o.target_hour - first.target_hour).num_hours() / 24) as usize;
            if days.len() <= d {
                days.resize(d + 1, 0.0);
            }
            days[d] += o.cleared_volume();
        }
        for (d, cleared) in days.iter().enumerate() {
            let date = (first.target_hour + Duration::days(d as i64)).date_naive();
            writeln!(csv, "{date},{cleared}").unwrap();
        }
    }
    write("daily-cleared-volume.csv", csv)?;

    // Human-readable comparison table.
    let mut txt = hash_header(f.hash, f.partial);
    txt.push_str(&render_summary_table(&[report], f.block_days, f.confidence));
    write("summary.txt", txt)?;

    Ok(())
}
