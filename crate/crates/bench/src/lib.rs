//! Fixtures shared by the benchmarks.

use patchreg::benchgen::{crop_visibility, generate_shape_with, random_rigid, ShapeParams};
use patchreg::cloud::{Point, PointCloud, RigidTransform, Role};
use patchreg::descriptors::{oracle_features, FeatureMatrix, OracleNoiseSpec};

/// A complete source, a partial rigidly moved target and oracle features.
pub struct Fixture {
    pub source: PointCloud,
    pub target: PointCloud,
    pub xs: FeatureMatrix,
    pub xt: FeatureMatrix,
}

/// About `n` source points and `m` target points, in normalized units.
pub fn fixture(n: usize, m: usize, seed: u64) -> Fixture {
    let mesh = generate_shape_with(
        seed,
        &ShapeParams {
            subdivisions: 5,
            ..Default::default()
        },
    )
    .expect("default shape parameters are valid");
    let total = mesh.vertices.len();
    let keep = crop_visibility(&mesh.vertices, (n as f64 / total as f64).min(1.0), seed)
        .expect("ratio within (0, 1]")
        .indices;
    let src: Vec<Point> = keep.iter().map(|&i| mesh.vertices[i] / 100.0).collect();
    let part = crop_visibility(&src, (m as f64 / src.len() as f64).min(1.0), seed + 1)
        .expect("ratio within (0, 1]")
        .indices;
    let pose = random_rigid(seed);
    let pose = RigidTransform::new(*pose.rotation(), pose.translation() / 100.0).expect("rotation is orthonormal");
    let tgt: Vec<Point> = part.iter().map(|&i| pose.apply(&src[i])).collect();
    let (xs, xt) = oracle_features(
        src.len(),
        &part,
        &OracleNoiseSpec {
            corruption_sigma: 0.3,
            seed,
            ..Default::default()
        },
    )
    .expect("valid oracle spec");
    Fixture {
        source: PointCloud::new(src, Role::Source).expect("non-empty source"),
        target: PointCloud::new(tgt, Role::Target).expect("non-empty target"),
        xs,
        xt,
    }
}
