//! File formats: trace and ground-truth CSVs, the JSON estimate report, and
//! the filter and plot CSVs.
//!
//! Trace CSV: header `t,sales,replenishment`, one row per period with `t`
//! running 1, 2, ... The initial inventory is not part of the file.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::em::EMResult;
use crate::error::{Error, Result};
use crate::filter::BeliefSeries;
use crate::model::{LogLik, ObservedTrace, Units};
use crate::sim::SimOutcome;

pub const TRACE_HEADER: [&str; 3] = ["t", "sales", "replenishment"];

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::TraceFile {
        row,
        message: e.to_string(),
    }
}

fn write_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Parses a trace CSV. Row numbers in errors are file line numbers.
pub fn read_trace_csv<R: Read>(reader: R, initial_inventory: Units) -> Result<ObservedTrace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::TraceFile {
            row: 1,
            message: format!("expected header `{}`, found `{}`", TRACE_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut sales = Vec::new();
    let mut replenishments = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |k: usize| -> Result<Units> {
            record[k].parse::<Units>().map_err(|e| Error::TraceFile {
                row,
                message: format!("column `{}`: `{}` is not a nonnegative integer ({e})", TRACE_HEADER[k], &record[k]),
            })
        };
        let t = field(0)?;
        if t != sales.len() as Units + 1 {
            return Err(Error::TraceFile {
                row,
                message: format!("expected period {}, found {t}", sales.len() + 1),
            });
        }
        sales.push(field(1)?);
        replenishments.push(field(2)?);
    }
    if sales.is_empty() {
        return Err(Error::TraceFile {
            row: 1,
            message: "trace has no data rows".into(),
        });
    }
    ObservedTrace::new(initial_inventory, sales, replenishments)
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &ObservedTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER).map_err(write_error)?;
    for (t, (s, r)) in trace.sales().iter().zip(trace.replenishments()).enumerate() {
        w.write_record([(t + 1).to_string(), s.to_string(), r.to_string()])
            .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Ground truth: the trace columns plus true and recorded levels, the loss
/// and a 0/1 frozen indicator per period.
pub fn write_truth_csv<W: Write>(writer: W, outcome: &SimOutcome) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "sales", "replenishment", "true_inventory", "recorded_inventory", "loss", "froze"])
        .map_err(write_error)?;
    for k in 0..outcome.horizon() {
        let t = k + 1;
        let frozen = outcome.freeze_period.is_some_and(|f| t >= f);
        w.write_record([
            t.to_string(),
            outcome.sales[k].to_string(),
            outcome.replenishments[k].to_string(),
            outcome.true_inventory[k].to_string(),
            outcome.recorded_inventory[k].to_string(),
            outcome.losses[k].to_string(),
            (frozen as u8).to_string(),
        ])
        .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

mod loglik_list {
    //! `-inf` has no JSON spelling; it is written as `null`.
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mapped: Vec<Option<f64>> = values.iter().map(|&v| v.is_finite().then_some(v)).collect();
        mapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub sigma0: f64,
    pub lambda0: f64,
    pub sigma_star: f64,
    pub lambda_star: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(with = "loglik_list")]
    pub loglik_history: Vec<LogLik>,
    pub trajectory: Vec<Units>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mmle: Option<Vec<Units>>,
}

impl EstimateReport {
    pub fn new(result: &EMResult, mmle: Option<Vec<Units>>) -> Self {
        Self {
            sigma0: result.initial.sigma(),
            lambda0: result.initial.lambda(),
            sigma_star: result.sigma_star,
            lambda_star: result.lambda_star,
            iterations: result.iterations,
            converged: result.converged,
            loglik_history: result.loglik_history.clone(),
            trajectory: result.trajectory.levels().to_vec(),
            mmle,
        }
    }

    /// Pretty-printed JSON. Floats use the shortest representation that
    /// parses back to the same value.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(format!("bad report: {e}")))
    }
}

/// Per-period summary: `t,mmle,support_lo,support_hi`.
pub fn write_filter_csv<W: Write>(writer: W, series: &BeliefSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "mmle", "support_lo", "support_hi"]).map_err(write_error)?;
    for (belief, mmle) in series.beliefs.iter().zip(&series.mmle_path) {
        let (lo, hi) = belief.support();
        w.write_record([belief.period().to_string(), mmle.to_string(), lo.to_string(), hi.to_string()])
            .map_err(write_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Full beliefs in long format: `t,level,probability`.
pub fn write_beliefs_csv<W: Write>(writer: W, series: &BeliefSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "level", "probability"]).map_err(write_error)?;
    for belief in &series.beliefs {
        for (level, p) in belief.iter() {
            w.write_record([belief.period().to_string(), level.to_string(), p.to_string()])
                .map_err(write_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const PLOT_SERIES: [&str; 4] = ["sales", "naive_inventory", "mmle_inventory", "true_inventory"];

/// Long-format plot data `t,series,value` for sales and the naive, filtered
/// and true inventory histories.
pub fn write_plot_csv<W: Write>(writer: W, outcome: &SimOutcome, mmle: &[Units]) -> Result<()> {
    if mmle.len() != outcome.horizon() {
        return Err(Error::LengthMismatch {
            expected: outcome.horizon(),
            got: mmle.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "series", "value"]).map_err(write_error)?;
    let columns: [&[Units]; 4] = [&outcome.sales, &outcome.recorded_inventory, mmle, &outcome.true_inventory];
    for (name, values) in PLOT_SERIES.iter().zip(columns) {
        for (k, v) in values.iter().enumerate() {
            w.write_record([(k + 1).to_string(), name.to_string(), v.to_string()])
                .map_err(write_error)?;
        }
    }
    w.flush()?;
    Ok(())
}
