use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Affine map from millimeters to normalized units: `x_n = (x - centroid) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationInfo {
    pub centroid: Vector3<f64>,
    /// Millimeters per normalized unit.
    pub scale: f64,
}

impl NormalizationInfo {
    pub fn new(centroid: Vector3<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::ZeroScale);
        }
        Ok(Self { centroid, scale })
    }

    pub fn normalize_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.centroid) / self.scale
    }

    pub fn denormalize_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p * self.scale + self.centroid
    }

    pub fn normalize_cloud(&self, cloud: &PointCloud) -> PointCloud {
        map_cloud(cloud, |p| self.normalize_point(p))
    }

    pub fn denormalize_cloud(&self, cloud: &PointCloud) -> PointCloud {
        map_cloud(cloud, |p| self.denormalize_point(p))
    }

    /// Converts a transform between normalized clouds into the equivalent one in millimeters.
    pub fn denormalize_transform(&self, t: &RigidTransform) -> RigidTransform {
        let r = *t.rotation();
        let translation = self.centroid - r * self.centroid + t.translation() * self.scale;
        RigidTransform::from_parts(r, translation)
    }

    pub fn normalize_transform(&self, t: &RigidTransform) -> RigidTransform {
        let r = *t.rotation();
        let translation = (t.translation() - self.centroid + r * self.centroid) / self.scale;
        RigidTransform::from_parts(r, translation)
    }
}

fn map_cloud(cloud: &PointCloud, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> PointCloud {
    PointCloud {
        points: cloud.points().iter().map(f).collect(),
        normals: cloud.normals.clone(),
        role: cloud.role(),
    }
}

/// Centers the source on its centroid and scales it into the unit sphere; the
/// target gets the same shift and scale.
pub fn normalize_pair(source: &PointCloud, target: &PointCloud) -> Result<(PointCloud, PointCloud, NormalizationInfo)> {
    let centroid = source.centroid();
    let scale = source
        .points()
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0, f64::max);
    let magnitude = source.points().iter().map(|p| p.amax()).fold(1.0, f64::max);
    if scale <= 1e-12 * magnitude {
        return Err(Error::ZeroScale);
    }
    let info = NormalizationInfo::new(centroid, scale)?;
    Ok((info.normalize_cloud(source), info.normalize_cloud(target), info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point, Role};

    fn cube_at(offset: Point) -> PointCloud {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Point::new(x, y, z) + offset);
                }
            }
        }
        PointCloud::new(pts, Role::Source).unwrap()
    }

    #[test]
    fn centers_and_scales_source() {
        let src = cube_at(Point::new(100.0, 0.0, 0.0));
        let (ns, nt, info) = normalize_pair(&src, &src).unwrap();
        assert!(ns.centroid().norm() < 1e-9);
        let max = ns.points().iter().map(|p| p.norm()).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-9);
        assert_eq!(ns.points(), nt.points());
        assert!((info.scale - 3f64.sqrt() / 2.0).abs() < 1e-12);
        let back = info.denormalize_cloud(&ns);
        for (a, b) in back.points().iter().zip(src.points()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn degenerate_source_has_zero_scale() {
        let src = PointCloud::new(vec![Point::new(0.1, 0.2, 0.3); 3], Role::Source).unwrap();
        assert!(matches!(normalize_pair(&src, &src), Err(Error::ZeroScale)));
    }

    #[test]
    fn transform_round_trip_through_units() {
        let info = NormalizationInfo::new(Point::new(10.0, -4.0, 7.0), 80.0).unwrap();
        let t = RigidTransform::from_euler_xyz(0.3, -1.2, 2.0, Point::new(30.0, 5.0, -60.0));
        let tn = info.normalize_transform(&t);
        let p = Point::new(3.0, 40.0, -12.0);
        let via_units = info.denormalize_point(&tn.apply(&info.normalize_point(&p)));
        assert!((via_units - t.apply(&p)).norm() < 1e-9);
        let back = info.denormalize_transform(&tn);
        assert!(back.translation_error(&t) < 1e-9);
    }
}
