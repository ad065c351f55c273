//! Trace and summary emission.
//!
//! CSV column order: `iter,wall_time_s,obj,obj_ergodic,feas,feas_ergodic,dual_norm,eps_k,delta_k,lemma1_lhs,lemma1_rhs,kkt_res,dist_sq`.
//! Absent optional columns are empty in CSV and `null` in JSON. Floats use the
//! shortest representation that round-trips, so identical runs give identical bytes.

use std::fs;
use std::path::Path;

use anyhow::Result;
use nccp_core::analysis::{rate_fit, Metric, TraceRecord};
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 13] = [
    "iter",
    "wall_time_s",
    "obj",
    "obj_ergodic",
    "feas",
    "feas_ergodic",
    "dual_norm",
    "eps_k",
    "delta_k",
    "lemma1_lhs",
    "lemma1_rhs",
    "kkt_res",
    "dist_sq",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Csv,
    Json,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Json => "json",
        }
    }
}

/// The thirteen exported columns of a [`TraceRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub wall_time_s: f64,
    pub obj: f64,
    pub obj_ergodic: f64,
    pub feas: f64,
    pub feas_ergodic: f64,
    pub dual_norm: f64,
    pub eps_k: f64,
    pub delta_k: Option<f64>,
    pub lemma1_lhs: Option<f64>,
    pub lemma1_rhs: Option<f64>,
    pub kkt_res: Option<f64>,
    pub dist_sq: Option<f64>,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        TraceRow {
            iter: r.iter,
            wall_time_s: r.wall_time_s,
            obj: r.obj,
            obj_ergodic: r.obj_ergodic,
            feas: r.feas,
            feas_ergodic: r.feas_ergodic,
            dual_norm: r.dual_norm,
            eps_k: r.eps_k,
            delta_k: r.delta_k,
            lemma1_lhs: r.lemma1_lhs,
            lemma1_rhs: r.lemma1_rhs,
            kkt_res: r.kkt_res,
            dist_sq: r.dist_sq,
        }
    }
}

pub fn rows(trace: &[TraceRecord]) -> Vec<TraceRow> {
    trace.iter().map(TraceRow::from).collect()
}

pub fn to_csv(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows(trace) {
        w.serialize(r)?;
    }
    if trace.is_empty() {
        w.write_record(COLUMNS)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn to_json(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&rows(trace))?;
    out.push(b'\n');
    Ok(out)
}

pub fn encode(trace: &[TraceRecord], format: TraceFormat) -> Result<Vec<u8>> {
    match format {
        TraceFormat::Csv => to_csv(trace),
        TraceFormat::Json => to_json(trace),
    }
}

pub fn write_trace(path: &Path, trace: &[TraceRecord], format: TraceFormat) -> Result<()> {
    fs::write(path, encode(trace, format)?)?;
    Ok(())
}

pub fn read_csv(bytes: &[u8]) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<Vec<TraceRow>, _>>()?)
}

/// Rate fit as reported in summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub metric: String,
    pub window: (usize, usize),
    pub loglog_slope: Option<f64>,
    pub contraction_ratio: Option<f64>,
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Fits over the last decade of iterations, `[⌈k/10⌉, k]`.
pub fn default_fits(trace: &[TraceRecord], opt_value: Option<f64>) -> Vec<FitSummary> {
    let Some(last) = trace.last() else { return Vec::new() };
    let window = ((last.iter / 10).max(1), last.iter);
    let mut metrics = vec![Metric::FeasErgodic, Metric::Feas, Metric::KktRes, Metric::DistSq];
    if let Some(opt) = opt_value {
        metrics.push(Metric::ObjErgodicGap(opt));
        metrics.push(Metric::ObjGap(opt));
    }
    metrics
        .into_iter()
        .filter(|m| trace.iter().any(|r| m.extract(r).is_some()))
        .map(|m| match rate_fit(trace, m, window) {
            Ok(f) => FitSummary {
                metric: f.metric.to_string(),
                window: f.window,
                loglog_slope: Some(f.loglog_slope),
                contraction_ratio: f.contraction_ratio,
                truncated: f.truncated,
                note: f.truncated.then(|| "metric reached zero inside the window".to_string()),
            },
            Err(e) => FitSummary {
                metric: m.name().to_string(),
                window,
                loglog_slope: None,
                contraction_ratio: None,
                truncated: false,
                note: Some(e.to_string()),
            },
        })
        .collect()
}

/// Final-state summary written next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub converged: bool,
    pub iterations: usize,
    pub obj: f64,
    pub feas: f64,
    pub obj_ergodic: f64,
    pub feas_ergodic: f64,
    pub dual_norm: f64,
    pub eps_k: f64,
    pub wall_time_s: f64,
    pub step_time_s: f64,
    pub per_iter_s: f64,
    pub rate_fits: Vec<FitSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize) -> TraceRecord {
        TraceRecord {
            iter: k,
            obj: 0.1 + k as f64,
            obj_ergodic: 1.0 / 3.0,
            feas: 1e-300,
            delta_k: Some(-0.0),
            kkt_res: if k.is_multiple_of(2) { Some(2.5) } else { None },
            ..Default::default()
        }
    }

    #[test]
    fn csv_header_order() {
        let bytes = to_csv(&[rec(1)]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
        assert_eq!(String::from_utf8(to_csv(&[]).unwrap()).unwrap().trim_end(), COLUMNS.join(","));
    }

    #[test]
    fn csv_and_json_carry_identical_values() {
        let trace: Vec<TraceRecord> = (1..6).map(rec).collect();
        let from_csv = read_csv(&to_csv(&trace).unwrap()).unwrap();
        let from_json: Vec<TraceRow> = serde_json::from_slice(&to_json(&trace).unwrap()).unwrap();
        assert_eq!(from_csv, from_json);
        assert_eq!(from_csv, rows(&trace));
    }

    #[test]
    fn fits_on_power_law() {
        let trace: Vec<TraceRecord> = (1..=1000).map(|k| TraceRecord { iter: k, feas_ergodic: 1.0 / k as f64, feas: 1.0, ..Default::default() }).collect();
        let fits = default_fits(&trace, None);
        let f = fits.iter().find(|f| f.metric == "feas_ergodic").unwrap();
        assert!((f.loglog_slope.unwrap() + 1.0).abs() < 1e-9);
        assert_eq!(f.window, (100, 1000));
    }
}
