//! Report emission: evaluation metrics, loss curves and benchmark tables as
//! CSV (and, via [`save_json`], pretty JSON of any serializable report).
//!
//! Floats print with Rust's shortest round-trip formatting; absent values
//! (metrics past a truncation point, timings of failed runs) become empty
//! fields rather than sentinel numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::train::{BenchTable, CurvePoint, EvalReport, GenRow};

pub fn save_text(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("cannot encode report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    save_text(path, &to_json_string(value)?)
}

/// Quotes a field when it contains CSV metacharacters (commas show up in
/// benchmark error messages).
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Loss curve as `step,loss,lr`.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("step,loss,lr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.step, p.loss, p.lr);
    }
    out
}

/// Sample standard deviation of the present values; empty below two samples.
fn stddev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}

/// Evaluation metrics: one row per trajectory per horizon, then per-horizon
/// `summary` rows (pooled metrics) and `stddev` rows (spread across
/// trajectories).
pub fn eval_report_csv(report: &EvalReport) -> String {
    let mut out = String::from("trajectory,tau,rmse,energy_signed,truncated_at,wall_seconds\n");
    for t in &report.trajectories {
        for m in &t.metrics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                t.trajectory,
                m.tau,
                opt(m.rmse),
                opt(m.energy_signed),
                opt_usize(t.truncated_at),
                t.wall_seconds
            );
        }
    }
    for s in &report.summary {
        let _ = writeln!(
            out,
            "summary,{},{},{},,{}",
            s.tau,
            opt(s.rmse),
            opt(s.energy_mean_signed),
            report.wall_seconds_total
        );
        let rmses: Vec<f64> = report
            .trajectories
            .iter()
            .flat_map(|t| &t.metrics)
            .filter(|m| m.tau == s.tau)
            .filter_map(|m| m.rmse)
            .collect();
        let energies: Vec<f64> = report
            .trajectories
            .iter()
            .flat_map(|t| &t.metrics)
            .filter(|m| m.tau == s.tau)
            .filter_map(|m| m.energy_signed)
            .collect();
        let _ = writeln!(
            out,
            "stddev,{},{},{},,",
            s.tau,
            opt(stddev(&rmses)),
            opt(stddev(&energies))
        );
    }
    out
}

/// Benchmark table as `n,nodes,edges,build_seconds,forward_seconds,status`.
pub fn bench_csv(table: &BenchTable) -> String {
    let mut out = String::from("n,nodes,edges,build_seconds,forward_seconds,status\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            r.nodes,
            r.edges,
            opt(r.build_seconds),
            opt(r.forward_seconds),
            csv_field(&r.status)
        );
    }
    out
}

/// Generalisation table as `n,n_trajectories,rmse,energy_mean_abs,n_truncated`.
pub fn gen_rows_csv(rows: &[GenRow]) -> String {
    let mut out = String::from("n,n_trajectories,rmse,energy_mean_abs,n_truncated\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            r.n_trajectories,
            opt(r.rmse),
            opt(r.energy_mean_abs),
            r.n_truncated
        );
    }
    out
}
