use thiserror::Error;

use crate::cloud::RigidTransform;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("degenerate source cloud: all points coincide, normalization scale is zero")]
    ZeroScale,

    #[error("spatial index is empty")]
    EmptyIndex,

    #[error("degenerate configuration: {pairs} correspondences, source covariance rank {rank}")]
    Degenerate { pairs: usize, rank: usize },

    #[error("no registration candidate survived: baseline and every patch failed")]
    NoCandidate,

    #[error("ICP stalled after {iterations} iterations: no correspondence within the distance gate")]
    IcpStall { iterations: usize, last: RigidTransform },

    #[error("RANSAC found no model with at least 3 inliers (best: {best_inliers})")]
    RansacFailed { best_inliers: usize },

    #[error(
        "deformation rejected: max displacement gradient {gradient:.3} >= 1; \
         resample with a smaller amplitude or a wider kernel"
    )]
    DeformationRejected { gradient: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
