use std::f64::consts::PI;

use rayon::prelude::*;

use super::FeatureMatrix;
use crate::cloud::{Point, PointCloud, SpatialIndex};
use crate::error::{Error, Result};

pub const DEFAULT_DESCRIPTOR_DIM: usize = 33;

#[derive(Clone, Debug)]
pub struct LocalDescriptor {
    pub features: FeatureMatrix,
    /// Points with no neighbor inside the radius; their row is the normalized all-ones vector.
    pub isolated: Vec<usize>,
}

/// Simplified fast point feature histogram.
///
/// For every neighbor pair the Darboux-frame angles (alpha, phi, |theta|) are
/// binned into `dim / 3` bins each. A point's own histogram is then augmented
/// with the inverse-distance weighted histograms of its neighbors.
pub fn compute_local_descriptor(cloud: &PointCloud, radius: f64, dim: usize) -> Result<LocalDescriptor> {
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::param("local descriptors need a cloud with normals"))?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param(format!("radius must be positive, got {radius}")));
    }
    if dim < 3 || !dim.is_multiple_of(3) {
        return Err(Error::param(format!(
            "descriptor dim must be a positive multiple of 3, got {dim}"
        )));
    }
    let bins = dim / 3;
    let points = cloud.points();
    let index = SpatialIndex::new(points);

    let neighborhoods: Vec<(Vec<usize>, Vec<f64>)> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (idx, dist) = index.within_radius(p, radius).expect("non-empty index");
            idx.into_iter().zip(dist).filter(|&(j, _)| j != i).unzip()
        })
        .collect();

    let spfh: Vec<Vec<f64>> = (0..points.len())
        .into_par_iter()
        .map(|i| simple_histogram(i, &neighborhoods[i].0, points, normals, bins))
        .collect();

    let rows: Vec<(Vec<f64>, bool)> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let (nbrs, dists) = &neighborhoods[i];
            if nbrs.is_empty() {
                return (vec![1.0; dim], true);
            }
            let mut row = spfh[i].clone();
            let k = nbrs.len() as f64;
            for (&j, &d) in nbrs.iter().zip(dists) {
                if d > 0.0 {
                    let w = 1.0 / (d * k);
                    row.iter_mut().zip(&spfh[j]).for_each(|(r, s)| *r += w * s);
                }
            }
            if row.iter().all(|&v| v == 0.0) {
                return (vec![1.0; dim], true);
            }
            (row, false)
        })
        .collect();

    let isolated = rows.iter().enumerate().filter(|(_, r)| r.1).map(|(i, _)| i).collect();
    let values = rows.into_iter().flat_map(|r| r.0).collect();
    let features = FeatureMatrix::from_rows_normalized(points.len(), dim, values)?;
    Ok(LocalDescriptor { features, isolated })
}

fn simple_histogram(i: usize, nbrs: &[usize], points: &[Point], normals: &[Point], bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; 3 * bins];
    let u = normals[i];
    let mut count = 0usize;
    for &j in nbrs {
        let d = points[j] - points[i];
        let dist = d.norm();
        if dist <= 0.0 {
            continue;
        }
        let dir = d / dist;
        let v = u.cross(&dir);
        let vn = v.norm();
        if vn < 1e-12 {
            continue;
        }
        let v = v / vn;
        let w = u.cross(&v);
        let nq = normals[j];
        let alpha = v.dot(&nq);
        let phi = u.dot(&dir);
        // |theta| sidesteps the atan2 branch cut at +-pi.
        let theta = w.dot(&nq).abs().atan2(u.dot(&nq));
        hist[bin(alpha, -1.0, 1.0, bins)] += 1.0;
        hist[bins + bin(phi, -1.0, 1.0, bins)] += 1.0;
        hist[2 * bins + bin(theta, 0.0, PI, bins)] += 1.0;
        count += 1;
    }
    if count > 0 {
        let scale = 100.0 / count as f64;
        hist.iter_mut().for_each(|h| *h *= scale);
    }
    hist
}

fn bin(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((value - lo) / (hi - lo) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{RigidTransform, Role};
    use crate::descriptors::estimate_normals;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                let v = Point::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                )
                .normalize();
                Point::new(v.x * 1.5, v.y, v.z * (0.7 + 0.2 * v.x))
            })
            .collect();
        PointCloud::new(pts, Role::Source).unwrap()
    }

    fn cosine_stats(a: &FeatureMatrix, b: &FeatureMatrix) -> f64 {
        let mut sum = 0.0;
        for i in 0..a.rows() {
            for j in 0..b.rows() {
                sum += a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        sum / (a.rows() * b.rows()) as f64
    }

    #[test]
    fn rows_are_unit_and_invariant_to_rigid_motion() {
        let cloud = estimate_normals(&blob(1, 600), 10).unwrap().cloud;
        let base = compute_local_descriptor(&cloud, 0.35, DEFAULT_DESCRIPTOR_DIM).unwrap();
        for i in 0..base.features.rows() {
            let n: f64 = base.features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }

        let shift = RigidTransform::from_translation(Point::new(12.0, -3.0, 7.5));
        let shifted = compute_local_descriptor(&cloud.transformed(&shift), 0.35, 33).unwrap();
        for (a, b) in base.features.values().iter().zip(shifted.features.values()) {
            assert!((a - b).abs() < 1e-9);
        }

        let rot = RigidTransform::from_euler_xyz(0.4, -1.1, 2.5, Point::new(1.0, 2.0, 3.0));
        let rotated = compute_local_descriptor(&cloud.transformed(&rot), 0.35, 33).unwrap();
        for (a, b) in base.features.values().iter().zip(rotated.features.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn separates_plane_from_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let plane: Vec<Point> = (0..400)
            .map(|_| Point::new(rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0, 0.0))
            .collect();
        let sphere: Vec<Point> = (0..400)
            .map(|_| {
                Point::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                )
                .normalize()
                    * 0.6
            })
            .collect();
        let describe = |pts: Vec<Point>| {
            let c = estimate_normals(&PointCloud::new(pts, Role::Source).unwrap(), 10)
                .unwrap()
                .cloud;
            compute_local_descriptor(&c, 0.3, 33).unwrap().features
        };
        let (fp, fs) = (describe(plane), describe(sphere));
        let intra = (cosine_stats(&fp, &fp) + cosine_stats(&fs, &fs)) / 2.0;
        let inter = cosine_stats(&fp, &fs);
        assert!(inter < intra, "inter {inter} intra {intra}");
    }

    #[test]
    fn isolated_points_get_flat_row() {
        let pts = vec![Point::zeros(), Point::new(10.0, 0.0, 0.0)];
        let cloud = PointCloud::with_normals(pts, vec![Point::z(), Point::z()], Role::Source).unwrap();
        let d = compute_local_descriptor(&cloud, 1.0, 9).unwrap();
        assert_eq!(d.isolated, vec![0, 1]);
        let expected = 1.0 / 3.0;
        assert!(d.features.row(0).iter().all(|v| (v - expected).abs() < 1e-12));
    }

    #[test]
    fn parameter_errors() {
        let plain = PointCloud::new(vec![Point::zeros()], Role::Source).unwrap();
        assert!(compute_local_descriptor(&plain, 1.0, 33).is_err());
        let with_n = PointCloud::with_normals(vec![Point::zeros()], vec![Point::z()], Role::Source).unwrap();
        assert!(compute_local_descriptor(&with_n, 0.0, 33).is_err());
        assert!(compute_local_descriptor(&with_n, 1.0, 32).is_err());
    }
}
