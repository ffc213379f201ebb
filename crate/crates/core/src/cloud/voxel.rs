use std::collections::HashMap;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

/// One output point per occupied voxel, placed at the centroid of its members.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    voxel_downsample_with_members(cloud, voxel_size).map(|(c, _)| c)
}

/// Like [`voxel_downsample`], also returning the input indices merged into each
/// output point. Output order follows the first input point of each voxel.
pub fn voxel_downsample_with_members(cloud: &PointCloud, voxel_size: f64) -> Result<(PointCloud, Vec<Vec<usize>>)> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::param(format!("voxel size must be positive, got {voxel_size}")));
    }
    let mut slots: HashMap<[i64; 3], usize> = HashMap::with_capacity(cloud.len());
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = [
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        ];
        let slot = *slots.entry(key).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[slot].push(i);
    }

    let pts = cloud.points();
    let points: Vec<Point> = members
        .iter()
        .map(|m| m.iter().fold(Point::zeros(), |acc, &i| acc + pts[i]) / m.len() as f64)
        .collect();
    let normals = cloud.normals().map(|normals| {
        members
            .iter()
            .map(|m| {
                let sum = m.iter().fold(Point::zeros(), |acc, &i| acc + normals[i]);
                let norm = sum.norm();
                if norm > 1e-12 {
                    sum / norm
                } else {
                    normals[m[0]]
                }
            })
            .collect::<Vec<_>>()
    });
    let out = PointCloud {
        points,
        normals,
        role: cloud.role(),
    };
    Ok((out, members))
}
