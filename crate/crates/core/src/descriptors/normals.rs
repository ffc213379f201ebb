use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::cloud::{centroid, Point, PointCloud, SpatialIndex};
use crate::error::{Error, Result};

/// Axis assigned to points whose neighborhood has rank < 2.
pub const FALLBACK_NORMAL: Point = Point::new(0.0, 0.0, 1.0);

#[derive(Clone, Debug)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// Points that received [`FALLBACK_NORMAL`].
    pub degenerate: Vec<usize>,
}

/// PCA normals over the `k` nearest neighbors (the point included), oriented
/// away from the neighborhood centroid.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(Error::param(format!("normal estimation needs k >= 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(Error::param(format!("k = {k} exceeds the {} points", cloud.len())));
    }
    let index = SpatialIndex::new(cloud.points());
    let global = cloud.centroid();
    let estimates: Vec<(Point, bool)> = cloud
        .points()
        .par_iter()
        .map(|p| {
            let (nbrs, _) = index.nearest_neighbors(p, k).expect("k checked above");
            let local: Vec<Point> = nbrs.iter().map(|&i| cloud.points()[i]).collect();
            point_normal(p, &local, &global)
        })
        .collect();

    let degenerate = estimates
        .iter()
        .enumerate()
        .filter(|(_, e)| e.1)
        .map(|(i, _)| i)
        .collect();
    let normals = estimates.into_iter().map(|e| e.0).collect();
    let cloud = PointCloud::with_normals(cloud.points().to_vec(), normals, cloud.role())?;
    Ok(NormalEstimate { cloud, degenerate })
}

fn point_normal(p: &Point, neighborhood: &[Point], global_centroid: &Point) -> (Point, bool) {
    let c = centroid(neighborhood);
    let mut cov = Matrix3::zeros();
    for q in neighborhood {
        let d = q - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, max) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if max <= f64::MIN_POSITIVE || mid <= 1e-10 * max {
        return (FALLBACK_NORMAL, true);
    }
    let mut n: Point = eig.eigenvectors.column(order[0]).normalize();

    let scale = max.sqrt();
    let away = p - c;
    let dot = n.dot(&away);
    if dot.abs() > 1e-9 * scale {
        if dot < 0.0 {
            n = -n;
        }
    } else {
        // Flat neighborhood: fall back to the cloud centroid, then to a fixed sign.
        let outward = n.dot(&(p - global_centroid));
        if outward < -1e-9 * scale || (outward.abs() <= 1e-9 * scale && n[n.iamax()] < 0.0) {
            n = -n;
        }
    }
    (n, false)
}
