use std::io::Write;

use serde::Serialize;

use super::metrics::MetricsRecord;
use super::runner::SweepResult;
use super::Method;
use crate::error::Result;

pub const METRICS_HEADER: [&str; 7] = ["method", "rep", "sen", "spe", "rel_error", "support_size", "runtime_ms"];

const UNDEFINED: &str = "NA";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string())
}

/// One row per (rep, method). Undefined metrics and failed fits are `NA`.
pub fn write_metrics_csv<W: Write>(w: W, records: &[MetricsRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for r in records {
        let (sen, spe, rel, size) = match &r.values {
            Some(v) => (opt(v.sen), opt(v.spe), opt(v.rel_error), v.support_size.to_string()),
            None => (opt(None), opt(None), opt(None), UNDEFINED.to_string()),
        };
        out.write_record([
            r.method.as_str(),
            &r.rep.to_string(),
            &sen,
            &spe,
            &rel,
            &size,
            &r.runtime_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Plot-ready row keyed by `(rho, s, a, method, metric)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRow {
    pub rho: f64,
    pub s: usize,
    pub a: f64,
    pub method: Method,
    pub metric: &'static str,
    pub mean: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

impl SweepResult {
    pub fn long_rows(&self) -> Vec<LongRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            for m in &cell.result.summary {
                let defined = m.n_records - m.n_failed;
                let mut push = |metric, mean, undefined: usize| {
                    rows.push(LongRow {
                        rho: cell.rho,
                        s: cell.s,
                        a: cell.a,
                        method: m.method,
                        metric,
                        mean,
                        n_defined: defined - undefined,
                        n_undefined: undefined + m.n_failed,
                    })
                };
                push("sen", m.mean_sen, m.n_sen_undefined);
                push("spe", m.mean_spe, m.n_spe_undefined);
                push("rel_error", m.mean_rel_error, m.n_rel_error_undefined);
                push("support_size", m.mean_support_size, 0);
            }
        }
        rows
    }
}

pub fn write_long_csv<W: Write>(w: W, sweep: &SweepResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rho", "s", "a", "method", "metric", "mean", "n_defined", "n_undefined"])?;
    for r in sweep.long_rows() {
        out.write_record([
            r.rho.to_string(),
            r.s.to_string(),
            r.a.to_string(),
            r.method.to_string(),
            r.metric.to_string(),
            opt(r.mean),
            r.n_defined.to_string(),
            r.n_undefined.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
