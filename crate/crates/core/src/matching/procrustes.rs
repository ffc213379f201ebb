use nalgebra::{Matrix3, SymmetricEigen};

use super::CorrespondenceSet;
use crate::cloud::{Point, RigidTransform};
use crate::error::{Error, Result};

const RANK_TOLERANCE: f64 = 1e-10;

/// Weighted Procrustes over a correspondence set: minimizes
/// `sum_j w_j |R p_j + t - q_j|^2` with `det(R) = +1`.
pub fn weighted_svd(corr: &CorrespondenceSet, source: &[Point], target: &[Point]) -> Result<RigidTransform> {
    corr.check_bounds(source.len(), target.len())?;
    let src: Vec<Point> = corr.iter().map(|c| source[c.source]).collect();
    let tgt: Vec<Point> = corr.iter().map(|c| target[c.target]).collect();
    let weights: Vec<f64> = corr.iter().map(|c| c.weight).collect();
    fit_rigid(&src, &tgt, Some(&weights))
}

/// Kabsch fit of paired points, optionally weighted.
pub fn fit_rigid(source: &[Point], target: &[Point], weights: Option<&[f64]>) -> Result<RigidTransform> {
    let n = source.len();
    if target.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::param("source, target and weights must have equal lengths"));
    }
    if n < 3 {
        return Err(Error::Degenerate { pairs: n, rank: 0 });
    }
    // Rescale so the largest weight is 1; the minimizer is scale invariant.
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::param("weights must be finite and non-negative"));
            }
            let max = w.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(Error::Degenerate { pairs: n, rank: 0 });
            }
            w.iter().map(|v| v / max).collect()
        }
        None => vec![1.0; n],
    };
    let total: f64 = weights.iter().sum();
    let weighted_mean = |pts: &[Point]| {
        pts.iter()
            .zip(&weights)
            .fold(Point::zeros(), |acc, (p, w)| acc + p * *w)
            / total
    };
    let (sc, tc) = (weighted_mean(source), weighted_mean(target));

    let mut spread = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for ((p, q), w) in source.iter().zip(target).zip(&weights) {
        let dp = p - sc;
        spread += dp * dp.transpose() * *w;
        cross += dp * (q - tc).transpose() * *w;
    }
    let eig = SymmetricEigen::new(spread).eigenvalues;
    let max = eig.amax();
    let rank = eig.iter().filter(|&&l| l > RANK_TOLERANCE * max && max > 0.0).count();
    if rank < 2 {
        return Err(Error::Degenerate { pairs: n, rank });
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let k = svd.singular_values.imin();
        correction[(k, k)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = tc - rotation * sc;
    Ok(RigidTransform::from_parts(rotation, translation))
}
