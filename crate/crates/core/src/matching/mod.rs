//! Correspondence pipeline shared by the baseline and the patch path:
//! cosine score matrix, dual-softmax confidences, mutual nearest neighbors and
//! weighted Procrustes.

mod correspondence;
mod kernel;
mod procrustes;
mod result;
mod softmax;

pub use correspondence::{Correspondence, CorrespondenceSet};
pub use kernel::SoftmaxKernel;
pub use procrustes::{fit_rigid, weighted_svd};
pub use result::{CandidateScore, Diagnostics, RegistrationResult, SelectionRule};
pub use softmax::{
    default_temperature, dual_softmax, mutual_nn_matches, score_matrix, softmax_factors, ConfidenceMatrix, ScoreMatrix,
};

use std::time::Instant;

use crate::cloud::PointCloud;
use crate::descriptors::FeatureMatrix;
use crate::error::{Error, Result};

/// Baseline complete-to-partial registration: score matrix, dual softmax,
/// mutual nearest neighbors, weighted SVD.
pub fn match_and_estimate(
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    source: &PointCloud,
    target: &PointCloud,
    temperature: f64,
) -> Result<RegistrationResult> {
    let start = Instant::now();
    check_rows(xs, xt, source, target)?;
    let scores = score_matrix(xs, xt)?;
    let kernel = SoftmaxKernel::new(&scores, temperature)?;
    let all: Vec<usize> = (0..source.len()).collect();
    let correspondences = kernel.mutual_matches(&all);
    let transform = weighted_svd(&correspondences, source.points(), target.points())?;
    let mut diagnostics = Diagnostics::single("baseline");
    diagnostics
        .timings
        .insert("baseline_s".into(), start.elapsed().as_secs_f64());
    Ok(RegistrationResult {
        transform,
        correspondences,
        diagnostics,
    })
}

pub(crate) fn check_rows(
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    source: &PointCloud,
    target: &PointCloud,
) -> Result<()> {
    if xs.rows() != source.len() || xt.rows() != target.len() {
        return Err(Error::param(format!(
            "feature rows ({}, {}) do not match cloud sizes ({}, {})",
            xs.rows(),
            xt.rows(),
            source.len(),
            target.len()
        )));
    }
    Ok(())
}
