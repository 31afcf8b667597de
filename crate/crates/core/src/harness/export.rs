//! CSV export and re-validation.
//!
//! Every file has a header row and one record per line. Floats are written
//! with 9 significant digits (`{:.8e}`).
//!
//! | file | columns |
//! |------|---------|
//! | trace | `episode,mean_reward,min_rate,sum_rate` |
//! | summary | `algorithm,seed,p_max_dbm,elements,final_mean_reward,final_min_rate,final_sum_rate,avg_throughput` |
//! | timing | `algorithm,seed,p_max_dbm,elements,wall_clock_s` |
//! | amplitudes | `surface,element,beta_f,beta_b,row_sum,forward_faces_ap` |
//! | powers | `cluster,power,hidden,members` |

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::run::{final_mean_by, OptimalReport, RunRecord};
use crate::rl::train::replay_final_step;
use crate::rl::{Env, EpisodeStats, HyperParams};

/// Episodes averaged for the "final" summary columns.
pub const FINAL_WINDOW: usize = 50;

pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn trace_csv(trace: &[EpisodeStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "mean_reward", "min_rate", "sum_rate"])?;
    for s in trace {
        w.write_record([s.episode.to_string(), fmt9(s.mean_reward), fmt9(s.min_rate), fmt9(s.sum_rate)])?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub min_rate: f64,
    pub sum_rate: f64,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}

/// Replays the final step of every episode and compares the recomputed
/// rates with the logged row. Returns one message per mismatch.
pub fn revalidate_trace(env: &Env, hp: &HyperParams, seed: u64, trace: &[EpisodeStats], csv: &str) -> Result<Vec<String>> {
    let rows = parse_trace_csv(csv)?;
    let mut bad = Vec::new();
    if rows.len() != trace.len() {
        bad.push(format!("row count {} != trace length {}", rows.len(), trace.len()));
    }
    for (row, stats) in rows.iter().zip(trace) {
        if row.episode != stats.episode {
            bad.push(format!("episode index {} != {}", row.episode, stats.episode));
            continue;
        }
        let out = replay_final_step(env, seed, hp, stats)?;
        for (name, logged, recomputed, exact) in [
            ("min_rate", row.min_rate, out.min_rate, stats.min_rate),
            ("sum_rate", row.sum_rate, out.sum_rate, stats.sum_rate),
        ] {
            let rel = (recomputed - exact).abs() / exact.abs().max(f64::MIN_POSITIVE);
            if fmt9(recomputed) != fmt9(logged) || rel > 1e-9 {
                bad.push(format!(
                    "episode {}: {name} logged {} recomputed {}",
                    row.episode,
                    fmt9(logged),
                    fmt9(recomputed)
                ));
            }
        }
    }
    Ok(bad)
}

pub fn summary_csv(records: &[RunRecord], users: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "algorithm",
        "seed",
        "p_max_dbm",
        "elements",
        "final_mean_reward",
        "final_min_rate",
        "final_sum_rate",
        "avg_throughput",
    ])?;
    for r in records {
        let sum_rate = final_mean_by(&r.trace, FINAL_WINDOW, |s| s.sum_rate);
        w.write_record([
            r.cell.algorithm.name().to_string(),
            r.cell.seed.to_string(),
            fmt9(r.cell.p_max_dbm),
            r.elements.to_string(),
            fmt9(final_mean_by(&r.trace, FINAL_WINDOW, |s| s.mean_reward)),
            fmt9(final_mean_by(&r.trace, FINAL_WINDOW, |s| s.min_rate)),
            fmt9(sum_rate),
            fmt9(sum_rate / users as f64),
        ])?;
    }
    finish(w)
}

pub fn timing_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "seed", "p_max_dbm", "elements", "wall_clock_s"])?;
    for r in records {
        w.write_record([
            r.cell.algorithm.name().to_string(),
            r.cell.seed.to_string(),
            fmt9(r.cell.p_max_dbm),
            r.elements.to_string(),
            fmt9(r.wall_clock.as_secs_f64()),
        ])?;
    }
    finish(w)
}

pub fn amplitudes_csv(report: &OptimalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["surface", "element", "beta_f", "beta_b", "row_sum", "forward_faces_ap"])?;
    for s in &report.surfaces {
        for (m, (f, b)) in s.beta_f.iter().zip(&s.beta_b).enumerate() {
            w.write_record([
                (s.surface + 1).to_string(),
                (m + 1).to_string(),
                fmt9(*f),
                fmt9(*b),
                fmt9(f + b),
                s.forward_faces_ap.to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn powers_csv(report: &OptimalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cluster", "power", "hidden", "members"])?;
    for (k, p) in report.cluster_powers.iter().enumerate() {
        let members: Vec<String> = report.cluster_members[k].iter().map(|u| (u + 1).to_string()).collect();
        w.write_record([
            (k + 1).to_string(),
            fmt9(*p),
            report.hidden_clusters[k].to_string(),
            members.join(" "),
        ])?;
    }
    finish(w)
}

/// File name of a record's trace.
pub fn trace_file_name(r: &RunRecord) -> String {
    let mut name = format!("{}_seed{}", r.cell.algorithm.name(), r.cell.seed);
    name.push_str(&format!("_p{}", r.cell.p_max_dbm));
    if r.cell.elements.is_some() {
        name.push_str(&format!("_m{}", r.elements));
    }
    name.push_str(".csv");
    name
}

/// Writes one trace per record plus `summary.csv` and `timing.csv` into `dir`.
pub fn write_records(dir: &Path, records: &[RunRecord], users: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in records {
        let path = dir.join(trace_file_name(r));
        fs::write(&path, trace_csv(&r.trace)?)?;
        written.push(path);
    }
    for (name, text) in [("summary.csv", summary_csv(records, users)?), ("timing.csv", timing_csv(records)?)] {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
