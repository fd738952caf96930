//! Per-iteration convergence records, trace assembly, and the CSV/JSON
//! trace formats.
//!
//! CSV schema (one row per iteration):
//! `r,d_l2,d_l1,delta_norm,lambda_bound_prime,max_contraction_ratio,per_learner_d_json,eta_json`
//! Scalars carry 17 significant digits; infinities print as `inf`; the
//! ratio column is empty on the first row. The JSON mirror additionally
//! carries the per-class detail behind the aggregated scalars.

use std::io::Write;

use serde_json::{json, Value};

use crate::error::{NcelmError, Result};
use crate::ncelm::NcelmConfig;

/// Per-class quantities behind the aggregated scalars of one record.
/// Outer index is the learner, inner the class, except `delta_norms`
/// which is per class only (the output delta is ensemble-wide).
#[derive(Debug, Clone)]
pub struct PerClassDetail {
    pub delta_norms: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub lambda_bound_prime: Vec<Vec<f64>>,
    pub penalty_norms: Vec<Vec<f64>>,
    /// Triangle-chain bound on the squared correction norm; `None` where
    /// its denominator is nonpositive (bound inapplicable).
    pub correction_bound: Vec<Vec<Option<f64>>>,
}

/// One iteration of the training loop, as recorded in the trace.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub r: usize,
    /// Squared-L2 distance between the previous and current stacked weights.
    pub d_l2: f64,
    /// L1 distance between the same pair.
    pub d_l1: f64,
    /// Per-learner components of `d_l2`; their left-to-right sum is `d_l2`.
    pub per_learner_d: Vec<f64>,
    /// Spectral norm of the output-delta at this iteration (max over classes).
    pub delta_norm: f64,
    /// Computable lambda bound, minimized over learners and classes;
    /// positive infinity when vacuous.
    pub lambda_bound_prime: f64,
    /// Per-learner inverse-norm ratios (max over classes).
    pub eta: Vec<f64>,
    /// `d_l2(r) / d_l2(r-1)`, absent on the first record.
    pub contraction_ratio: Option<f64>,
    pub per_class: PerClassDetail,
}

/// Quantities the trainer hands to [`build_trace`]; everything except the
/// iteration index and the contraction ratio, which are derived here.
#[derive(Debug, Clone)]
pub struct RawIteration {
    pub d_l2: f64,
    pub d_l1: f64,
    pub per_learner_d: Vec<f64>,
    pub delta_norm: f64,
    pub lambda_bound_prime: f64,
    pub eta: Vec<f64>,
    pub per_class: PerClassDetail,
}

/// Ordered per-iteration records plus the configuration that produced them.
#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub config_echo: NcelmConfig,
}

/// Assemble records from raw per-iteration quantities, numbering
/// iterations from 1 and deriving contraction ratios.
pub fn build_trace(history: Vec<RawIteration>, config_echo: NcelmConfig) -> ConvergenceTrace {
    assert!(!history.is_empty(), "trace assembly needs at least one iteration");
    let mut records = Vec::with_capacity(history.len());
    let mut prev_d: Option<f64> = None;
    for (i, raw) in history.into_iter().enumerate() {
        let contraction_ratio = prev_d.map(|p| raw.d_l2 / p);
        prev_d = Some(raw.d_l2);
        records.push(IterationRecord {
            r: i + 1,
            d_l2: raw.d_l2,
            d_l1: raw.d_l1,
            per_learner_d: raw.per_learner_d,
            delta_norm: raw.delta_norm,
            lambda_bound_prime: raw.lambda_bound_prime,
            eta: raw.eta,
            contraction_ratio,
            per_class: raw.per_class,
        });
    }
    ConvergenceTrace {
        records,
        config_echo,
    }
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// End-of-run summary of the contraction evidence.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    /// Final inter-iteration distance within tolerance.
    pub converged: bool,
    pub final_distance: f64,
    /// Largest observed `d(r)/d(r-1)`; 0 when fewer than two records exist.
    pub max_contraction_ratio: f64,
    /// First iteration whose bound exceeded the configured lambda, if any.
    pub lambda_within_bound_at: Option<usize>,
    pub summary_text: String,
}

impl DiagnosticsReport {
    pub fn from_trace(trace: &ConvergenceTrace, tolerance: f64, lambda: f64) -> Self {
        let final_distance = trace.last().map(|r| r.d_l2).unwrap_or(0.0);
        let converged = final_distance <= tolerance;
        let max_contraction_ratio = trace
            .records
            .iter()
            .filter_map(|r| r.contraction_ratio)
            .fold(0.0, f64::max);
        let lambda_within_bound_at = trace
            .records
            .iter()
            .find(|r| lambda < r.lambda_bound_prime)
            .map(|r| r.r);
        let bound_text = match lambda_within_bound_at {
            Some(r) => format!("lambda={lambda:e} within bound from iteration {r}"),
            None => format!("lambda={lambda:e} never within bound"),
        };
        let summary_text = format!(
            "iterations={} final_d={} max_contraction_ratio={} converged={converged}; {bound_text}",
            trace.len(),
            fmt_sig17(final_distance),
            fmt_sig17(max_contraction_ratio),
        );
        Self {
            converged,
            final_distance,
            max_contraction_ratio,
            lambda_within_bound_at,
            summary_text,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "converged": self.converged,
            "final_distance": json_float(self.final_distance),
            "max_contraction_ratio": json_float(self.max_contraction_ratio),
            "lambda_within_bound_at": self.lambda_within_bound_at,
            "summary_text": self.summary_text,
        })
    }
}

/// 17-significant-digit decimal; infinities as `inf`.
pub fn fmt_sig17(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// JSON value for a float, with the `inf` string standing in for
/// infinities (JSON numbers cannot carry them).
pub fn json_float(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn float_array(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| json_float(*x)).collect())
}

fn json_number_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| fmt_sig17(*x)).collect();
    format!("[{}]", parts.join(","))
}

/// Write the iteration trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &ConvergenceTrace, out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "r,d_l2,d_l1,delta_norm,lambda_bound_prime,max_contraction_ratio,per_learner_d_json,eta_json"
    )?;
    for rec in &trace.records {
        let ratio = rec
            .contraction_ratio
            .map(fmt_sig17)
            .unwrap_or_default();
        // The JSON list fields contain commas and must be quoted.
        writeln!(
            out,
            "{},{},{},{},{},{},\"{}\",\"{}\"",
            rec.r,
            fmt_sig17(rec.d_l2),
            fmt_sig17(rec.d_l1),
            fmt_sig17(rec.delta_norm),
            fmt_sig17(rec.lambda_bound_prime),
            ratio,
            json_number_list(&rec.per_learner_d),
            json_number_list(&rec.eta),
        )?;
    }
    Ok(())
}

pub fn trace_csv_string(trace: &ConvergenceTrace) -> String {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace CSV is ASCII")
}

/// JSON mirror of the trace with the full per-class detail.
pub fn trace_json(trace: &ConvergenceTrace) -> Value {
    let records: Vec<Value> = trace
        .records
        .iter()
        .map(|rec| {
            let per_class = &rec.per_class;
            json!({
                "r": rec.r,
                "d_l2": json_float(rec.d_l2),
                "d_l1": json_float(rec.d_l1),
                "per_learner_d": float_array(&rec.per_learner_d),
                "delta_norm": json_float(rec.delta_norm),
                "lambda_bound_prime": json_float(rec.lambda_bound_prime),
                "eta": float_array(&rec.eta),
                "contraction_ratio": rec.contraction_ratio.map(json_float),
                "per_class": {
                    "delta_norms": float_array(&per_class.delta_norms),
                    "eta": per_class.eta.iter().map(|v| float_array(v)).collect::<Vec<_>>(),
                    "lambda_bound_prime": per_class
                        .lambda_bound_prime
                        .iter()
                        .map(|v| float_array(v))
                        .collect::<Vec<_>>(),
                    "penalty_norms": per_class
                        .penalty_norms
                        .iter()
                        .map(|v| float_array(v))
                        .collect::<Vec<_>>(),
                    "correction_bound": per_class
                        .correction_bound
                        .iter()
                        .map(|row| {
                            Value::Array(
                                row.iter()
                                    .map(|b| match b {
                                        Some(v) => json_float(*v),
                                        None => json!("inapplicable"),
                                    })
                                    .collect(),
                            )
                        })
                        .collect::<Vec<_>>(),
                },
            })
        })
        .collect();
    json!({
        "config": serde_json::to_value(&trace.config_echo).expect("config serializes"),
        "records": records,
    })
}

pub fn write_trace_json<W: Write>(trace: &ConvergenceTrace, out: &mut W) -> Result<()> {
    let value = trace_json(trace);
    serde_json::to_writer_pretty(&mut *out, &value).map_err(NcelmError::ModelParse)?;
    out.write_all(b"\n")
        .map_err(|e| NcelmError::io("<trace json>", e))?;
    Ok(())
}
