use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{icp, IcpConfig};
use crate::cloud::{Point, PointCloud, RigidTransform};
use crate::error::{Error, Result};
use crate::matching::{fit_rigid, CorrespondenceSet};
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    pub sample_size: usize,
    /// Inlier threshold on `‖R p + t − q‖`.
    pub max_correspondence_distance: f64,
    pub seed: u64,
    /// Polish the refit with gated ICP over the whole clouds.
    pub icp_refine: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            sample_size: 3,
            max_correspondence_distance: 0.05,
            seed: 0,
            icp_refine: false,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("RANSAC needs at least one iteration"));
        }
        if self.sample_size < 3 {
            return Err(Error::param("RANSAC sample size must be at least 3"));
        }
        if !(self.max_correspondence_distance > 0.0 && self.max_correspondence_distance.is_finite()) {
            return Err(Error::param(format!(
                "max correspondence distance must be positive, got {}",
                self.max_correspondence_distance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacOutcome {
    pub transform: RigidTransform,
    /// Inliers of the returned transform.
    pub inliers: usize,
    /// Inliers of the best sampled hypothesis; never above `inliers`.
    pub best_sample_inliers: usize,
    pub best_iteration: usize,
    /// Hypotheses whose minimal sample was degenerate.
    pub degenerate_samples: usize,
}

fn inlier_mask(t: &RigidTransform, src: &[Point], tgt: &[Point], d2: f64) -> Vec<bool> {
    src.iter()
        .zip(tgt)
        .map(|(p, q)| (t.apply(p) - q).norm_squared() < d2)
        .collect()
}

/// Hypothesize-and-verify over `corr`. Every iteration draws its sample from a
/// stream derived from `(seed, iteration)`, so the result does not depend on
/// scheduling.
pub fn ransac_registration(
    corr: &CorrespondenceSet,
    source: &PointCloud,
    target: &PointCloud,
    config: &RansacConfig,
) -> Result<RansacOutcome> {
    config.validate()?;
    corr.check_bounds(source.len(), target.len())?;
    if corr.len() < config.sample_size {
        return Err(Error::param(format!(
            "RANSAC needs at least {} correspondences, got {}",
            config.sample_size,
            corr.len()
        )));
    }
    let src: Vec<Point> = corr.iter().map(|c| source.points()[c.source]).collect();
    let tgt: Vec<Point> = corr.iter().map(|c| target.points()[c.target]).collect();
    let d2 = config.max_correspondence_distance.powi(2);

    let hypotheses: Vec<Option<(usize, RigidTransform)>> = (0..config.iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = rng_for(config.seed, &[it as u64]);
            let picks = sample(&mut rng, src.len(), config.sample_size);
            let s: Vec<Point> = picks.iter().map(|i| src[i]).collect();
            let t: Vec<Point> = picks.iter().map(|i| tgt[i]).collect();
            let model = fit_rigid(&s, &t, None).ok()?;
            let count = inlier_mask(&model, &src, &tgt, d2).into_iter().filter(|&b| b).count();
            Some((count, model))
        })
        .collect();

    let degenerate_samples = hypotheses.iter().filter(|h| h.is_none()).count();
    // Most inliers, earliest iteration on ties.
    let best = hypotheses
        .iter()
        .enumerate()
        .filter_map(|(it, h)| h.map(|(n, m)| (n, it, m)))
        .fold(None::<(usize, usize, RigidTransform)>, |acc, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        });
    let Some((best_count, best_iteration, best_model)) = best else {
        return Err(Error::RansacFailed { best_inliers: 0 });
    };
    if best_count < 3 {
        return Err(Error::RansacFailed {
            best_inliers: best_count,
        });
    }

    let mask = inlier_mask(&best_model, &src, &tgt, d2);
    let (is, it): (Vec<Point>, Vec<Point>) = src
        .iter()
        .zip(&tgt)
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|((p, q), _)| (*p, *q))
        .unzip();
    let mut transform = best_model;
    let mut inliers = best_count;
    if let Ok(refit) = fit_rigid(&is, &it, None) {
        let n = inlier_mask(&refit, &src, &tgt, d2).into_iter().filter(|&b| b).count();
        if n >= best_count {
            transform = refit;
            inliers = n;
        }
    }
    if config.icp_refine {
        let cfg = IcpConfig {
            max_correspondence_distance: Some(config.max_correspondence_distance),
            ..Default::default()
        };
        if let Ok(polished) = icp(source, target, &transform, &cfg) {
            let n = inlier_mask(&polished.transform, &src, &tgt, d2)
                .into_iter()
                .filter(|&b| b)
                .count();
            if n >= inliers {
                transform = polished.transform;
                inliers = n;
            }
        }
    }
    Ok(RansacOutcome {
        transform,
        inliers,
        best_sample_inliers: best_count,
        best_iteration,
        degenerate_samples,
    })
}
