use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud, RigidTransform, SpatialIndex};
use crate::error::{Error, Result};
use crate::matching::fit_rigid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the RMS residual improves by less than this.
    pub tolerance: f64,
    /// Pairs farther apart than this are ignored; `None` keeps all.
    pub max_correspondence_distance: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-9,
            max_correspondence_distance: None,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("ICP needs at least one iteration"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::param(format!(
                "ICP tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if let Some(d) = self.max_correspondence_distance {
            if !(d > 0.0) {
                return Err(Error::param(format!("ICP distance gate must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpOutcome {
    pub transform: RigidTransform,
    /// RMS residual of the correspondences at each accepted iterate; non-increasing.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcpOutcome {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least one iterate")
    }
}

/// Point-to-point ICP from `initial`: nearest target point for every
/// transformed source point, then an unweighted SVD update.
///
/// If the gated correspondence set changes so that the residual would grow,
/// iteration stops at the previous iterate.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    config: &IcpConfig,
) -> Result<IcpOutcome> {
    config.validate()?;
    let index = SpatialIndex::new(target.points());
    let gate = config.max_correspondence_distance;
    let mut current = *initial;
    let mut previous = *initial;
    let mut residuals: Vec<f64> = Vec::new();
    let mut src: Vec<Point> = Vec::with_capacity(source.len());
    let mut tgt: Vec<Point> = Vec::with_capacity(source.len());
    let done = |transform, residuals, iterations, converged| {
        Ok(IcpOutcome {
            transform,
            residuals,
            iterations,
            converged,
        })
    };

    for iteration in 1..=config.max_iterations {
        src.clear();
        tgt.clear();
        let mut sum2 = 0.0;
        for p in source.points() {
            let (j, d) = index.nearest(&current.apply(p))?;
            if gate.is_some_and(|g| d > g) {
                continue;
            }
            src.push(*p);
            tgt.push(target.points()[j]);
            sum2 += d * d;
        }
        if src.is_empty() {
            return Err(Error::IcpStall {
                iterations: iteration,
                last: current,
            });
        }
        let rms = (sum2 / src.len() as f64).sqrt();
        if let Some(&prev) = residuals.last() {
            if rms > prev {
                return done(previous, residuals, iteration - 1, true);
            }
            if prev - rms < config.tolerance {
                residuals.push(rms);
                return done(current, residuals, iteration, true);
            }
        }
        residuals.push(rms);
        if iteration == config.max_iterations {
            break;
        }
        match fit_rigid(&src, &tgt, None) {
            Ok(t) => {
                previous = current;
                current = t;
            }
            // Too few or collinear pairs: keep the last valid iterate.
            Err(Error::Degenerate { .. }) => return done(current, residuals, iteration, false),
            Err(e) => return Err(e),
        }
    }
    done(current, residuals, config.max_iterations, false)
}
