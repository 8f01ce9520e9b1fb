use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::Method;
use crate::model::GroundTruth;

/// Selection and estimation metrics for one coefficient vector.
/// `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub rel_error: Option<f64>,
    pub support_size: usize,
}

/// SEN = |Ŝ ∩ S⋆| / |S⋆|, SPE = |Ŝ ∩ S⋆| / |Ŝ|, and `‖β̂ − β⋆‖ / ‖β⋆‖`.
///
/// SPE as defined here is a precision: its denominator is the number of
/// selected coordinates.
pub fn compute_metrics(beta_hat: ArrayView1<'_, f64>, truth: &GroundTruth) -> MetricValues {
    assert_eq!(beta_hat.len(), truth.beta_star.len(), "coefficient length mismatch");
    let mut hits = 0usize;
    let mut selected = 0usize;
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for (b, t) in beta_hat.iter().zip(truth.beta_star.iter()) {
        if *b != 0.0 {
            selected += 1;
            if *t != 0.0 {
                hits += 1;
            }
        }
        diff2 += (b - t) * (b - t);
        norm2 += t * t;
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    MetricValues {
        sen: ratio(hits, truth.s),
        spe: ratio(hits, selected),
        rel_error: (norm2 > 0.0).then(|| (diff2 / norm2).sqrt()),
        support_size: selected,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub rep: usize,
    /// `None` when the method failed on this replication.
    pub values: Option<MetricValues>,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

impl MetricsRecord {
    pub fn ok(method: Method, rep: usize, values: MetricValues, runtime_ms: f64) -> Self {
        Self {
            method,
            rep,
            values: Some(values),
            runtime_ms,
            error: None,
        }
    }

    pub fn failed(method: Method, rep: usize, error: String, runtime_ms: f64) -> Self {
        Self {
            method,
            rep,
            values: None,
            runtime_ms,
            error: Some(error),
        }
    }
}

/// Per-method averages; undefined entries are left out and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_records: usize,
    pub n_failed: usize,
    pub mean_sen: Option<f64>,
    pub n_sen_undefined: usize,
    pub mean_spe: Option<f64>,
    pub n_spe_undefined: usize,
    pub mean_rel_error: Option<f64>,
    pub n_rel_error_undefined: usize,
    pub mean_support_size: Option<f64>,
    pub mean_runtime_ms: f64,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    count: usize,
    missing: usize,
}

impl Mean {
    fn push(&mut self, v: Option<f64>) {
        match v {
            Some(v) => {
                self.sum += v;
                self.count += 1;
            }
            None => self.missing += 1,
        }
    }

    fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

pub fn summarize(records: &[MetricsRecord]) -> Vec<MethodSummary> {
    let mut out = Vec::new();
    for method in Method::ALL {
        let rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.method == method).collect();
        if rows.is_empty() {
            continue;
        }
        let (mut sen, mut spe, mut rel, mut size) =
            (Mean::default(), Mean::default(), Mean::default(), Mean::default());
        let mut failed = 0;
        let mut runtime = 0.0;
        for r in &rows {
            runtime += r.runtime_ms;
            match &r.values {
                Some(v) => {
                    sen.push(v.sen);
                    spe.push(v.spe);
                    rel.push(v.rel_error);
                    size.push(Some(v.support_size as f64));
                }
                None => failed += 1,
            }
        }
        out.push(MethodSummary {
            method,
            n_records: rows.len(),
            n_failed: failed,
            mean_sen: sen.value(),
            n_sen_undefined: sen.missing,
            mean_spe: spe.value(),
            n_spe_undefined: spe.missing,
            mean_rel_error: rel.value(),
            n_rel_error_undefined: rel.missing,
            mean_support_size: size.value(),
            mean_runtime_ms: runtime / rows.len() as f64,
        });
    }
    out
}
