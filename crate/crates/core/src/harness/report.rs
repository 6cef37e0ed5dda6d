//! CSV emitters. Every file starts with a `#` header line carrying the schema,
//! config digest and code version.

use std::path::Path;

use super::{EpisodeRecord, RunSummary, SweepRow};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub const RUN_CSV_SCHEMA: &str = "run-v1";
pub const SUMMARY_CSV_SCHEMA: &str = "summary-v1";
pub const SWEEP_CSV_SCHEMA: &str = "sweep-v1";

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn finish(schema: &str, digest: &str, writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    let body = writer.into_inner().map_err(|e| Error::Parse {
        context: "csv".into(),
        message: e.to_string(),
    })?;
    let mut out = format!("# schema={schema} digest={digest} version={VERSION}\n").into_bytes();
    out.extend(body);
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        context: "csv".into(),
        message: e.to_string(),
    }
}

/// One row per episode.
pub fn run_csv(records: &[EpisodeRecord], summary: &RunSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "k",
        "per_episode_regret",
        "cumulative_regret",
        "optimistic",
        "default_steps",
        "max_eta_norm",
        "sigma_k",
        "alpha_L",
        "alpha_U",
    ])
    .map_err(csv_err)?;
    for (r, cum) in records.iter().zip(&summary.cumulative_regret) {
        let sched = r.schedule;
        w.write_record([
            r.k.to_string(),
            r.per_episode_regret.to_string(),
            cum.to_string(),
            opt(r.optimistic.map(u8::from)),
            r.default_steps.to_string(),
            opt(r.max_eta_norm()),
            opt(sched.map(|s| s.sigma)),
            opt(sched.map(|s| s.alpha_l)),
            opt(sched.map(|s| s.alpha_u)),
        ])
        .map_err(csv_err)?;
    }
    finish(RUN_CSV_SCHEMA, &summary.digest, w)
}

/// A single row with the run's headline numbers.
pub fn summary_csv(summary: &RunSummary) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "agent",
        "seed",
        "episodes",
        "cumulative_regret",
        "optimism_rate",
        "relaxed_optimism_rate",
        "resampled_optimism_rate",
        "warmup_total",
        "warmup_bound",
        "good_event_xi_rate",
        "loglog_slope",
    ])
    .map_err(csv_err)?;
    w.write_record([
        summary.agent.clone(),
        summary.seed.to_string(),
        summary.episodes.to_string(),
        summary.final_regret().to_string(),
        opt(summary.optimism_rate),
        opt(summary.relaxed_optimism_rate),
        opt(summary.resampled_optimism_rate),
        summary.warmup_total.to_string(),
        opt(summary.warmup_bound),
        opt(summary.good_event_xi_rate),
        opt(summary.loglog_slope),
    ])
    .map_err(csv_err)?;
    finish(SUMMARY_CSV_SCHEMA, &summary.digest, w)
}

pub fn sweep_csv(rows: &[SweepRow], digest: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label",
        "digest",
        "runs",
        "regret_mean",
        "regret_stderr",
        "optimism_mean",
        "optimism_stderr",
        "warmup_mean",
        "warmup_stderr",
        "loglog_slope_mean",
        "loglog_slope_stderr",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.digest.clone(),
            r.runs.to_string(),
            r.regret_mean.to_string(),
            r.regret_stderr.to_string(),
            r.optimism_mean.to_string(),
            r.optimism_stderr.to_string(),
            r.warmup_mean.to_string(),
            r.warmup_stderr.to_string(),
            r.slope_mean.to_string(),
            r.slope_stderr.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(SWEEP_CSV_SCHEMA, digest, w)
}

/// Writes `<stem>.csv` and `<stem>.summary.csv` into `dir`, each atomically.
pub fn write_run_outputs(dir: &Path, stem: &str, records: &[EpisodeRecord], summary: &RunSummary) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.csv")), &run_csv(records, summary)?)?;
    write_atomic(&dir.join(format!("{stem}.summary.csv")), &summary_csv(summary)?)
}
