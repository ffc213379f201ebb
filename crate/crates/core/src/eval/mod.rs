//! RMS-TRE, the Procrustes reference, success rates and binned reports.

mod report;

pub use report::{
    bin_report, default_tau_grid, level_report, paired_csv, paired_rows, success_curve, success_curve_csv, BinAxis,
    BinReport, BinRow, PairedRow, SuccessPoint,
};

use serde::{Deserialize, Serialize};

use crate::cloud::{Point, RigidTransform};
use crate::error::{Error, Result};
use crate::matching::{fit_rigid, Diagnostics};

/// `sqrt(mean |Y_i - (R X_i + t)|^2)` over paired fiducials.
pub fn rms_tre(transform: &RigidTransform, source_fiducials: &[Point], target_fiducials: &[Point]) -> Result<f64> {
    if source_fiducials.len() != target_fiducials.len() {
        return Err(Error::param(format!(
            "{} source fiducials vs {} target fiducials",
            source_fiducials.len(),
            target_fiducials.len()
        )));
    }
    if source_fiducials.is_empty() {
        return Err(Error::param("RMS-TRE needs at least one fiducial"));
    }
    let sum: f64 = source_fiducials
        .iter()
        .zip(target_fiducials)
        .map(|(x, y)| (y - transform.apply(x)).norm_squared())
        .sum();
    Ok((sum / source_fiducials.len() as f64).sqrt())
}

/// Best rigid fit of the fiducials themselves and its RMS-TRE: the floor for
/// any rigid registration of the sample.
pub fn procrustes_reference(source_fiducials: &[Point], target_fiducials: &[Point]) -> Result<(RigidTransform, f64)> {
    if source_fiducials.len() != target_fiducials.len() {
        return Err(Error::param("fiducial sets differ in length"));
    }
    let t = fit_rigid(source_fiducials, target_fiducials, None)?;
    let e = rms_tre(&t, source_fiducials, target_fiducials)?;
    Ok((t, e))
}

/// One method's outcome on one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub method: String,
    /// mm; `None` when the registration failed.
    pub rms_tre: Option<f64>,
    /// Same error in normalized units.
    pub rms_tre_normalized: Option<f64>,
    pub runtime_s: f64,
    pub visibility: f64,
    pub noise_level: f64,
    pub deformation_rms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl EvalRecord {
    pub fn failed(&self) -> bool {
        self.rms_tre.is_none()
    }
}

/// Percentage of records with RMS-TRE strictly below `tau` mm. Failed
/// registrations count as misses.
pub fn success_rate(records: &[EvalRecord], tau: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::param("success rate of an empty record set"));
    }
    let hits = records.iter().filter(|r| r.rms_tre.is_some_and(|e| e < tau)).count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}
