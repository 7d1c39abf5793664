//! CSV tables and SVG trajectory plots.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs always produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, MetricsReport, PcaResult};
use crate::features::{ClusterProfile, FEATURE_NAMES};
use crate::forecast::{ForecastTrajectory, RoundRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub n_groups: usize,
    pub split: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClientRow {
    pub method: String,
    pub group: usize,
    pub id: String,
    pub split: String,
    pub metrics: MetricsReport,
}

/// Everything [`emit_report`] can write; empty parts are skipped.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub comparison: Vec<ComparisonRow>,
    pub per_client: Vec<PerClientRow>,
    pub profile: Option<ClusterProfile>,
    /// (group name, per-round metrics).
    pub histories: Vec<(String, Vec<RoundRecord>)>,
    pub forecasts: Vec<ForecastTrajectory>,
}

pub const COMPARISON_HEADER: &str = "method,n_groups,split,mse,rmse,mae,r2";
pub const HISTORY_HEADER: &str = "round,split,mse,rmse,mae,r2";

fn metric_cells(m: &MetricsReport) -> String {
    format!("{},{},{},{}", m.mse, m.rmse, m.mae, m.r2)
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.method, r.n_groups, r.split, metric_cells(&r.metrics));
    }
    s
}

pub fn per_client_csv(rows: &[PerClientRow]) -> String {
    let mut s = String::from("method,group,id,split,mse,rmse,mae,r2,r2_degenerate\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method,
            r.group,
            r.id,
            r.split,
            metric_cells(&r.metrics),
            r.metrics.r2_degenerate
        );
    }
    s
}

pub fn history_csv(records: &[RoundRecord]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.round, r.split, metric_cells(&r.metrics));
    }
    s
}

/// One row per cluster: count, then mean and std of every feature.
pub fn profile_csv(profile: &ClusterProfile) -> String {
    let mut s = String::from("cluster,count");
    for name in FEATURE_NAMES {
        let _ = write!(s, ",{name}_mean");
    }
    for name in FEATURE_NAMES {
        let _ = write!(s, ",{name}_std");
    }
    s.push('\n');
    for c in &profile.clusters {
        let _ = write!(s, "{},{}", c.cluster, c.count);
        for v in c.means.iter().chain(&c.stds) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn pca_csv(ids: &[String], pca: &PcaResult, labels: &[usize]) -> String {
    let mut s = String::from("id,pc1,pc2,pc3,cluster\n");
    for (i, id) in ids.iter().enumerate() {
        let row = pca.projected.row(i);
        let pc = |c: usize| row.get(c).map_or(String::new(), |v| v.to_string());
        let _ = writeln!(s, "{id},{},{},{},{}", pc(0), pc(1), pc(2), labels[i]);
    }
    s
}

pub fn forecast_csv(trajectories: &[ForecastTrajectory]) -> String {
    let mut s = String::from("id,timestamp,measured_kw,predicted_kw,mode\n");
    for t in trajectories {
        for i in 0..t.timestamps.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                t.id,
                t.timestamps[i].format("%Y-%m-%dT%H:%M:%S"),
                t.measured_kw[i],
                t.predicted_kw[i],
                t.mode.as_str()
            );
        }
    }
    s
}

/// Measured versus predicted power as a self-contained SVG line chart.
pub fn trajectory_svg(t: &ForecastTrajectory) -> String {
    let (w, h, pad) = (640.0, 320.0, 40.0);
    let n = t.measured_kw.len().max(2);
    let top = t
        .measured_kw
        .iter()
        .chain(&t.predicted_kw)
        .copied()
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (n - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v / top;
    let line = |vals: &[f64]| {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{} ({}), start {}, max {:.1} kW</text>"#,
        t.id,
        t.mode.as_str(),
        t.timestamps.first().map(|ts| ts.format("%Y-%m-%d %H:%M").to_string()).unwrap_or_default(),
        top
    );
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="black" stroke-width="2" points="{}"/>"#,
        line(&t.measured_kw)
    );
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="crimson" stroke-width="2" stroke-dasharray="6 3" points="{}"/>"#,
        line(&t.predicted_kw)
    );
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

/// Writes the report tables (and one SVG per trajectory) below `out_dir`
/// and returns the written paths.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = Vec::new();
    write(out_dir.join("comparison.csv"), &comparison_csv(&report.comparison), &mut written)?;
    if !report.per_client.is_empty() {
        write(out_dir.join("per_client.csv"), &per_client_csv(&report.per_client), &mut written)?;
    }
    if let Some(p) = &report.profile {
        write(out_dir.join("profile.csv"), &profile_csv(p), &mut written)?;
    }
    if !report.histories.is_empty() {
        let mut s = String::from("group,round,split,mse,rmse,mae,r2\n");
        for (name, records) in &report.histories {
            for r in records {
                let _ = writeln!(s, "{name},{},{},{}", r.round, r.split, metric_cells(&r.metrics));
            }
        }
        write(out_dir.join("curves.csv"), &s, &mut written)?;
    }
    if !report.forecasts.is_empty() {
        write(out_dir.join("forecast.csv"), &forecast_csv(&report.forecasts), &mut written)?;
        for t in &report.forecasts {
            let name = format!("{}_{}.svg", t.id, t.mode.as_str());
            write(out_dir.join("plots").join(name), &trajectory_svg(t), &mut written)?;
        }
    }
    Ok(written)
}
