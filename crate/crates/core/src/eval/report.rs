use serde::{Deserialize, Serialize};

use super::EvalRecord;
use crate::error::{Error, Result};

/// Sample attribute a report is binned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinAxis {
    Visibility,
    Noise,
    Deformation,
}

impl BinAxis {
    fn value(self, r: &EvalRecord) -> f64 {
        match self {
            BinAxis::Visibility => r.visibility,
            BinAxis::Noise => r.noise_level,
            BinAxis::Deformation => r.deformation_rms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub method: String,
    pub bin: String,
    pub lower: f64,
    pub upper: f64,
    /// Successful registrations in the bin.
    pub n: usize,
    pub failed: usize,
    /// mm, over successful registrations; `None` for an empty bin.
    pub mean: Option<f64>,
    /// Population standard deviation, mm.
    pub std: Option<f64>,
    pub mean_runtime_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub axis: BinAxis,
    pub rows: Vec<BinRow>,
}

fn methods_in_order(records: &[EvalRecord]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in records {
        if !out.contains(&r.method) {
            out.push(r.method.clone());
        }
    }
    out
}

fn row(method: &str, bin: String, lower: f64, upper: f64, members: &[&EvalRecord]) -> BinRow {
    let errs: Vec<f64> = members.iter().filter_map(|r| r.rms_tre).collect();
    let n = errs.len();
    let (mean, std) = if n == 0 {
        (None, None)
    } else {
        let m = errs.iter().sum::<f64>() / n as f64;
        let v = errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / n as f64;
        (Some(m), Some(v.sqrt()))
    };
    let mean_runtime_s =
        (!members.is_empty()).then(|| members.iter().map(|r| r.runtime_s).sum::<f64>() / members.len() as f64);
    BinRow {
        method: method.to_string(),
        bin,
        lower,
        upper,
        n,
        failed: members.len() - n,
        mean,
        std,
        mean_runtime_s,
    }
}

/// Per (method, bin) statistics. Bins are `[e_k, e_{k+1})`, the last one
/// closed; records outside every bin are ignored. Methods keep their first
/// appearance order.
pub fn bin_report(records: &[EvalRecord], axis: BinAxis, edges: &[f64]) -> Result<BinReport> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param(
            "bin edges must be strictly increasing with at least two entries",
        ));
    }
    let bins = edges.len() - 1;
    let mut rows = Vec::new();
    for method in methods_in_order(records) {
        for b in 0..bins {
            let (lo, hi) = (edges[b], edges[b + 1]);
            let last = b + 1 == bins;
            let members: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| r.method == method)
                .filter(|r| {
                    let v = axis.value(r);
                    v >= lo && (v < hi || (last && v <= hi))
                })
                .collect();
            let close = if last { ']' } else { ')' };
            rows.push(row(&method, format!("[{lo},{hi}{close}"), lo, hi, &members));
        }
    }
    Ok(BinReport { axis, rows })
}

/// Per (method, distinct value) statistics, values ascending.
pub fn level_report(records: &[EvalRecord], axis: BinAxis) -> BinReport {
    let mut levels: Vec<f64> = records.iter().map(|r| axis.value(r)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut rows = Vec::new();
    for method in methods_in_order(records) {
        for &level in &levels {
            let members: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| r.method == method && axis.value(r) == level)
                .collect();
            rows.push(row(&method, format!("{level}"), level, level, &members));
        }
    }
    BinReport { axis, rows }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    bin: &'a str,
    mean: Option<f64>,
    std: Option<f64>,
    n: usize,
    failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_s: Option<Option<f64>>,
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

impl BinReport {
    /// `method,bin,mean,std,n,failed[,runtime_s]`; empty cells for empty bins.
    pub fn to_csv(&self, with_runtime: bool) -> Result<String> {
        if self.rows.is_empty() {
            let mut header = String::from("method,bin,mean,std,n,failed");
            header.push_str(if with_runtime { ",runtime_s\n" } else { "\n" });
            return Ok(header);
        }
        csv_string(self.rows.iter().map(|r| CsvRow {
            method: &r.method,
            bin: &r.bin,
            mean: r.mean,
            std: r.std,
            n: r.n,
            failed: r.failed,
            runtime_s: with_runtime.then_some(r.mean_runtime_s),
        }))
    }

    pub fn row(&self, method: &str, bin: &str) -> Option<&BinRow> {
        self.rows.iter().find(|r| r.method == method && r.bin == bin)
    }

    /// Drops runtimes so the report depends only on the registrations.
    pub fn without_runtime(&self) -> Self {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|row| row.mean_runtime_s = None);
        r
    }
}

/// `{2, 4, ..., 40}` mm.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=20).map(|k| 2.0 * k as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessPoint {
    pub method: String,
    pub tau: f64,
    pub rate: f64,
}

/// Success rate of every method at every threshold.
pub fn success_curve(records: &[EvalRecord], taus: &[f64]) -> Result<Vec<SuccessPoint>> {
    let mut out = Vec::new();
    for method in methods_in_order(records) {
        let mine: Vec<EvalRecord> = records.iter().filter(|r| r.method == method).cloned().collect();
        for &tau in taus {
            out.push(SuccessPoint {
                method: method.clone(),
                tau,
                rate: super::success_rate(&mine, tau)?,
            });
        }
    }
    Ok(out)
}

pub fn success_curve_csv(points: &[SuccessPoint]) -> Result<String> {
    if points.is_empty() {
        return Ok("method,tau,rate\n".into());
    }
    csv_string(points)
}

/// Both methods' errors on each sample they share, in `a`'s record order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub sample_id: String,
    pub visibility: f64,
    pub noise_level: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b - a`, when both succeeded.
    pub difference: Option<f64>,
}

pub fn paired_rows(records: &[EvalRecord], method_a: &str, method_b: &str) -> Vec<PairedRow> {
    let b: std::collections::HashMap<&str, &EvalRecord> = records
        .iter()
        .filter(|r| r.method == method_b)
        .map(|r| (r.sample_id.as_str(), r))
        .collect();
    records
        .iter()
        .filter(|r| r.method == method_a)
        .filter_map(|ra| {
            let rb = b.get(ra.sample_id.as_str())?;
            Some(PairedRow {
                sample_id: ra.sample_id.clone(),
                visibility: ra.visibility,
                noise_level: ra.noise_level,
                a: ra.rms_tre,
                b: rb.rms_tre,
                difference: ra.rms_tre.zip(rb.rms_tre).map(|(x, y)| y - x),
            })
        })
        .collect()
}

/// `sample_id,visibility,noise_level,<a>,<b>,difference`.
pub fn paired_csv(rows: &[PairedRow], method_a: &str, method_b: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "sample_id",
        "visibility",
        "noise_level",
        method_a,
        method_b,
        "difference",
    ])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.sample_id.clone(),
            r.visibility.to_string(),
            r.noise_level.to_string(),
            cell(r.a),
            cell(r.b),
            cell(r.difference),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
