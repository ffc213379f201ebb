//! Point-cloud container, rigid transforms, spatial indexing, sampling and
//! the normalization / voxelization preprocessing applied before matching.

mod fps;
pub mod io;
mod kdtree;
mod normalize;
mod transform;
mod voxel;

pub use fps::{farthest_point_sample, farthest_point_sample_points};
pub use kdtree::SpatialIndex;
pub use normalize::{normalize_pair, NormalizationInfo};
pub use transform::RigidTransform;
pub use voxel::{voxel_downsample, voxel_downsample_with_members};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Which side of a registration problem a cloud plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Complete surface, N points.
    Source,
    /// Partial view, M points.
    Target,
}

/// An ordered, non-empty set of finite 3D points with optional unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    normals: Option<Vec<Point>>,
    role: Role,
}

const NORMAL_TOLERANCE: f64 = 1e-6;

impl PointCloud {
    pub fn new(points: Vec<Point>, role: Role) -> Result<Self> {
        validate_points(&points)?;
        Ok(Self {
            points,
            normals: None,
            role,
        })
    }

    pub fn with_normals(points: Vec<Point>, normals: Vec<Point>, role: Role) -> Result<Self> {
        validate_points(&points)?;
        if normals.len() != points.len() {
            return Err(Error::InvalidCloud(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > NORMAL_TOLERANCE)
        {
            return Err(Error::InvalidCloud(format!("normal {i} is not unit length")));
        }
        Ok(Self {
            points,
            normals: Some(normals),
            role,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Point]> {
        self.normals.as_deref()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Drops the normals, keeping points and role.
    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: clouds are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        centroid(&self.points)
    }

    /// Cloud made of the points at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::param("empty subset"));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::param(format!("subset index {i} out of range {}", self.len())));
        }
        Ok(Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
            role: self.role,
        })
    }

    /// Applies `T` to every point; normals are rotated only.
    pub fn transformed(&self, transform: &RigidTransform) -> Self {
        Self {
            points: self.points.iter().map(|p| transform.apply(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|v| transform.rotate(v)).collect()),
            role: self.role,
        }
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// Maps every point `p` to `R p + t`.
pub fn apply_transform(cloud: &PointCloud, transform: &RigidTransform) -> PointCloud {
    cloud.transformed(transform)
}

pub fn centroid(points: &[Point]) -> Point {
    if points.is_empty() {
        return Point::zeros();
    }
    points.iter().fold(Point::zeros(), |acc, p| acc + p) / points.len() as f64
}

fn validate_points(points: &[Point]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidCloud("a cloud needs at least one point".into()));
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidCloud(format!("point {i} has a non-finite coordinate")));
    }
    Ok(())
}
