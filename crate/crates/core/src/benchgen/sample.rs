use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_scaling_augmentation, deform, generate_shape_with, remove_rigid_component, DeformationSpec, ShapeParams,
    SyntheticMesh,
};
use crate::cloud::{
    normalize_pair, voxel_downsample_with_members, NormalizationInfo, Point, PointCloud, RigidTransform, Role,
    SpatialIndex,
};
use crate::descriptors::{oracle_features, FeatureMatrix, OracleNoiseSpec};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};

const CROP_STREAM: u64 = 0x4352_4f50;
const NOISE_STREAM: u64 = 0x4e4f_4953;
const RIGID_STREAM: u64 = 0x5249_4744;
/// Extra seed-path component for deformation retries after a rejection.
const RETRY_STREAM: u64 = 0x5254_5259;
const MAX_DEFORMATION_ATTEMPTS: u64 = 16;

/// Target indices of a connected crop and their source vertex indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub seed_vertex: usize,
    /// Surface indices kept, ascending.
    pub indices: Vec<usize>,
}

/// Ball crop: a uniformly drawn seed point and its `ceil(ratio * N)` nearest
/// surface points.
pub fn crop_visibility(surface: &[Point], ratio: f64, seed: u64) -> Result<Crop> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::param(format!(
            "visibility ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if surface.is_empty() {
        return Err(Error::param("cannot crop an empty surface"));
    }
    let n = surface.len();
    // The epsilon keeps ratios built as M / N from rounding up to M + 1.
    let m = ((ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut rng = rng_for(seed, &[CROP_STREAM]);
    let seed_vertex = rng.random_range(0..n);
    let index = SpatialIndex::new(surface);
    let (mut indices, _) = index.nearest_neighbors(&surface[seed_vertex], m)?;
    indices.sort_unstable();
    Ok(Crop { seed_vertex, indices })
}

/// Euler angles uniform on `[0, 2 pi)`, translation components uniform on `[-100, 100]` mm.
pub fn random_rigid(seed: u64) -> RigidTransform {
    let mut rng = rng_for(seed, &[RIGID_STREAM]);
    let tau = std::f64::consts::TAU;
    let (x, y, z) = (
        rng.random_range(0.0..tau),
        rng.random_range(0.0..tau),
        rng.random_range(0.0..tau),
    );
    let t = Vector3::new(
        rng.random_range(-100.0..=100.0),
        rng.random_range(-100.0..=100.0),
        rng.random_range(-100.0..=100.0),
    );
    RigidTransform::from_euler_xyz(x, y, z, t)
}

/// Adds `U[-0.5, 0.5] * level` to every coordinate.
pub fn add_noise(points: &[Point], level: f64, seed: u64) -> Result<Vec<Point>> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::param(format!("noise level must be non-negative, got {level}")));
    }
    if level == 0.0 {
        return Ok(points.to_vec());
    }
    let mut rng = rng_for(seed, &[NOISE_STREAM]);
    Ok(points
        .iter()
        .map(|p| p + Vector3::from_fn(|_, _| (rng.random::<f64>() - 0.5) * level))
        .collect())
}

/// Everything needed to rebuild one sample bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub shape_seed: u64,
    #[serde(default)]
    pub shape: ShapeParams,
    /// `None` skips the scaling augmentation.
    pub augmentation_seed: Option<u64>,
    pub deformation: DeformationSpec,
    /// Requested M / N.
    pub visibility: f64,
    pub crop_seed: u64,
    pub noise_level: f64,
    pub noise_seed: u64,
    pub rigid_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    /// Achieved M / N.
    pub visibility: f64,
    /// Fiducial RMS after rigid removal, mm.
    pub deformation_rms: f64,
    pub noise_level: f64,
    /// Seed-path suffix used for the deformation after rejected draws.
    pub deformation_attempt: u64,
    pub spec: SampleSpec,
}

/// A complete source, a deformed partial target in a random pose, and the
/// ground truth relating them.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSample {
    pub source: PointCloud,
    pub source_fiducials: Vec<Point>,
    pub target: PointCloud,
    pub target_fiducials: Vec<Point>,
    /// Maps source coordinates into the target frame.
    pub ground_truth: RigidTransform,
    /// Source vertex index of every target point.
    pub target_to_source: Vec<usize>,
    pub metadata: SampleMetadata,
}

/// Undeformed and deformed (rigidly re-aligned) versions of one model; the
/// stage shared by all crops of a deformation.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformedModel {
    pub undeformed: SyntheticMesh,
    pub deformed: SyntheticMesh,
    pub deformation_rms: f64,
    pub deformation_attempt: u64,
}

/// Shape, scaling augmentation, deformation and rigid removal. Rejected
/// deformation draws are retried on derived seeds.
pub fn build_model(
    shape_seed: u64,
    shape: &ShapeParams,
    augmentation_seed: Option<u64>,
    deformation: &DeformationSpec,
) -> Result<DeformedModel> {
    let base = generate_shape_with(shape_seed, shape)?;
    let undeformed = match augmentation_seed {
        Some(seed) => apply_scaling_augmentation(&base, seed),
        None => base,
    };
    let mut last = Error::DeformationRejected { gradient: f64::NAN };
    for attempt in 0..MAX_DEFORMATION_ATTEMPTS {
        let spec = DeformationSpec {
            seed: if attempt == 0 {
                deformation.seed
            } else {
                derive_seed(deformation.seed, &[RETRY_STREAM, attempt])
            },
            ..*deformation
        };
        match deform(&undeformed, &spec) {
            Ok((deformed, _)) => {
                let removal = remove_rigid_component(&undeformed.fiducials, &deformed)?;
                return Ok(DeformedModel {
                    undeformed,
                    deformed: removal.mesh,
                    deformation_rms: removal.residual_rms,
                    deformation_attempt: attempt,
                });
            }
            Err(e @ Error::DeformationRejected { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

impl DeformedModel {
    /// Crop, noise and random pose; `spec` supplies the seeds.
    pub fn sample(&self, spec: &SampleSpec) -> Result<BenchmarkSample> {
        let crop = crop_visibility(&self.deformed.vertices, spec.visibility, spec.crop_seed)?;
        let cropped: Vec<Point> = crop.indices.iter().map(|&i| self.deformed.vertices[i]).collect();
        let noisy = add_noise(&cropped, spec.noise_level, spec.noise_seed)?;
        let ground_truth = random_rigid(spec.rigid_seed);
        let target = PointCloud::new(noisy.iter().map(|p| ground_truth.apply(p)).collect(), Role::Target)?;
        let target_fiducials = self.deformed.fiducials.iter().map(|p| ground_truth.apply(p)).collect();
        let source = PointCloud::new(self.undeformed.vertices.clone(), Role::Source)?;
        Ok(BenchmarkSample {
            metadata: SampleMetadata {
                visibility: crop.indices.len() as f64 / source.len() as f64,
                deformation_rms: self.deformation_rms,
                noise_level: spec.noise_level,
                deformation_attempt: self.deformation_attempt,
                spec: spec.clone(),
            },
            source,
            source_fiducials: self.undeformed.fiducials.clone(),
            target,
            target_fiducials,
            ground_truth,
            target_to_source: crop.indices,
        })
    }
}

/// generate_shape → scaling augmentation → deform → rigid removal → crop →
/// noise → random pose.
pub fn build_sample(spec: &SampleSpec) -> Result<BenchmarkSample> {
    build_model(spec.shape_seed, &spec.shape, spec.augmentation_seed, &spec.deformation)?.sample(spec)
}

/// A sample after normalization and voxelization, ready for matching.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPair {
    pub source: PointCloud,
    pub target: PointCloud,
    pub normalization: NormalizationInfo,
    /// Raw indices merged into each prepared point.
    pub source_members: Vec<Vec<usize>>,
    pub target_members: Vec<Vec<usize>>,
}

impl PreparedPair {
    /// Normalizes both clouds by the source's centroid and radius, then
    /// voxel-downsamples each at `voxel_size` (normalized units).
    pub fn new(source: &PointCloud, target: &PointCloud, voxel_size: f64) -> Result<Self> {
        let (ns, nt, normalization) = normalize_pair(source, target)?;
        let (source, source_members) = voxel_downsample_with_members(&ns, voxel_size)?;
        let (target, target_members) = voxel_downsample_with_members(&nt, voxel_size)?;
        Ok(Self {
            source,
            target,
            normalization,
            source_members,
            target_members,
        })
    }

    /// Prepared ground truth: each target voxel maps to the source voxel
    /// holding the source vertex of its first raw member.
    pub fn voxel_ground_truth(&self, target_to_source: &[usize], source_raw_len: usize) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; source_raw_len];
        for (v, members) in self.source_members.iter().enumerate() {
            for &i in members {
                *owner
                    .get_mut(i)
                    .ok_or_else(|| Error::param("source member out of range"))? = v;
            }
        }
        self.target_members
            .iter()
            .map(|members| {
                let raw = *target_to_source
                    .get(members[0])
                    .ok_or_else(|| Error::param("ground-truth map shorter than the target"))?;
                match owner.get(raw) {
                    Some(&v) if v != usize::MAX => Ok(v),
                    _ => Err(Error::param(format!("ground-truth source index {raw} out of range"))),
                }
            })
            .collect()
    }
}

impl BenchmarkSample {
    pub fn prepare(&self, voxel_size: f64) -> Result<PreparedPair> {
        PreparedPair::new(&self.source, &self.target, voxel_size)
    }
}

/// Oracle features for a prepared sample.
pub fn oracle_descriptor(
    prepared: &PreparedPair,
    target_to_source: &[usize],
    source_raw_len: usize,
    spec: &OracleNoiseSpec,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let map = prepared.voxel_ground_truth(target_to_source, source_raw_len)?;
    oracle_features(prepared.source.len(), &map, spec)
}
