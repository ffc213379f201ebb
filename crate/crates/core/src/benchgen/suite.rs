//! Suite enumeration and the on-disk layout.
//!
//! ```text
//! <root>/suite.json
//! <root>/models/<model>/source.ply, source_fiducials.csv
//! <root>/samples/<id>/manifest.json, target.ply, target_fiducials.csv, target_to_source.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_model, BenchmarkSample, DeformationSpec, SampleMetadata, SampleSpec, ShapeParams};
use crate::cloud::io::{read_ply, write_ply, PlyFormat};
use crate::cloud::{Point, RigidTransform, Role};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

const SHAPE_PATH: u64 = 1;
const AUGMENT_PATH: u64 = 2;
const DEFORM_PATH: u64 = 3;
const VISIBILITY_PATH: u64 = 4;
const CROP_PATH: u64 = 5;
const NOISE_PATH: u64 = 6;
const RIGID_PATH: u64 = 7;

pub const SUITE_FILE: &str = "suite.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub shapes: usize,
    /// Augmented and deformed variants per shape.
    pub deformations_per_shape: usize,
    pub crops_per_deformation: usize,
    /// Crops cycle through these visibility bins so every bin is equally populated.
    pub visibility_edges: Vec<f64>,
    /// Every crop is emitted once per level, mm.
    pub noise_levels: Vec<f64>,
    pub scaling_augmentation: bool,
    pub shape: ShapeParams,
    /// Template; the seed is derived per variant.
    pub deformation: DeformationSpec,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shapes: 11,
            deformations_per_shape: 10,
            crops_per_deformation: 5,
            visibility_edges: default_visibility_edges(),
            noise_levels: vec![0.0],
            scaling_augmentation: true,
            shape: ShapeParams::default(),
            deformation: DeformationSpec::default(),
        }
    }
}

/// `{0.2, 0.3, ..., 1.0}`.
pub fn default_visibility_edges() -> Vec<f64> {
    (2..=10).map(|k| k as f64 / 10.0).collect()
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shapes == 0 || self.deformations_per_shape == 0 || self.crops_per_deformation == 0 {
            return Err(Error::param("suite dimensions must be positive"));
        }
        let e = &self.visibility_edges;
        if e.len() < 2 || e[0] <= 0.0 || e[e.len() - 1] > 1.0 || e.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("visibility edges must increase within (0, 1]"));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::param(
                "noise levels must be a non-empty list of non-negative values",
            ));
        }
        self.deformation.validate()
    }

    pub fn sample_count(&self) -> usize {
        self.shapes * self.deformations_per_shape * self.crops_per_deformation * self.noise_levels.len()
    }

    fn surface_size(&self) -> usize {
        10 * 4usize.pow(self.shape.subdivisions) + 2
    }
}

/// One sample's position in the suite and its full spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub model: String,
    pub shape: usize,
    pub deformation: usize,
    pub crop: usize,
    pub noise: usize,
    pub spec: SampleSpec,
}

pub fn model_id(shape: usize, deformation: usize) -> String {
    format!("s{shape:02}-d{deformation:02}")
}

/// All samples of the suite in canonical order (shape, deformation, crop, noise).
pub fn suite_entries(config: &SuiteConfig) -> Result<Vec<SampleEntry>> {
    config.validate()?;
    let n = config.surface_size();
    let bins = config.visibility_edges.len() - 1;
    let mut out = Vec::with_capacity(config.sample_count());
    let g = config.seed;
    for s in 0..config.shapes {
        let shape_seed = derive_seed(g, &[SHAPE_PATH, s as u64]);
        for d in 0..config.deformations_per_shape {
            let (su, du) = (s as u64, d as u64);
            let deformation = DeformationSpec {
                seed: derive_seed(g, &[DEFORM_PATH, su, du]),
                ..config.deformation
            };
            let augmentation_seed = config
                .scaling_augmentation
                .then(|| derive_seed(g, &[AUGMENT_PATH, su, du]));
            for c in 0..config.crops_per_deformation {
                let cu = c as u64;
                let flat = (s * config.deformations_per_shape + d) * config.crops_per_deformation + c;
                let bin = flat % bins;
                let lo = config.visibility_edges[bin];
                let hi = config.visibility_edges[bin + 1];
                let first = ((lo * n as f64) - 1e-9).ceil() as usize;
                let last = if bin + 1 == bins {
                    ((hi * n as f64) + 1e-9).floor() as usize
                } else {
                    ((hi * n as f64) - 1e-9).ceil() as usize - 1
                };
                let mut rng = crate::seed::rng_for(g, &[VISIBILITY_PATH, su, du, cu]);
                let m = rng.random_range(first.max(1)..=last.clamp(first.max(1), n));
                let visibility = m as f64 / n as f64;
                for (k, &noise_level) in config.noise_levels.iter().enumerate() {
                    out.push(SampleEntry {
                        id: format!("{}-c{c}-n{k}", model_id(s, d)),
                        model: model_id(s, d),
                        shape: s,
                        deformation: d,
                        crop: c,
                        noise: k,
                        spec: SampleSpec {
                            shape_seed,
                            shape: config.shape,
                            augmentation_seed,
                            deformation,
                            visibility,
                            crop_seed: derive_seed(g, &[CROP_PATH, su, du, cu]),
                            noise_level,
                            noise_seed: derive_seed(g, &[NOISE_PATH, su, du, cu, k as u64]),
                            rigid_seed: derive_seed(g, &[RIGID_PATH, su, du, cu]),
                        },
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Builds every sample in memory, in canonical order. Models are shared by
/// their crops; work runs on the current rayon pool.
pub fn generate_suite(config: &SuiteConfig) -> Result<Vec<(SampleEntry, BenchmarkSample)>> {
    let entries = suite_entries(config)?;
    generate_entries(&entries)
}

pub fn generate_entries(entries: &[SampleEntry]) -> Result<Vec<(SampleEntry, BenchmarkSample)>> {
    let mut groups: Vec<Vec<&SampleEntry>> = Vec::new();
    for e in entries {
        match groups.last_mut() {
            Some(g) if g[0].model == e.model => g.push(e),
            _ => groups.push(vec![e]),
        }
    }
    let built: Vec<Result<Vec<(SampleEntry, BenchmarkSample)>>> = groups
        .par_iter()
        .map(|group| {
            let spec = &group[0].spec;
            let model = build_model(spec.shape_seed, &spec.shape, spec.augmentation_seed, &spec.deformation)?;
            group
                .iter()
                .map(|e| Ok(((*e).clone(), model.sample(&e.spec)?)))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(entries.len());
    for g in built {
        out.extend(g?);
    }
    Ok(out)
}

/// Per-sample manifest; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub id: String,
    pub source: String,
    pub source_fiducials: String,
    pub target: String,
    pub target_fiducials: String,
    pub target_to_source: String,
    pub ground_truth: RigidTransform,
    pub metadata: SampleMetadata,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteIndexEntry {
    pub id: String,
    /// Relative to the suite root.
    pub manifest: String,
    pub visibility: f64,
    pub noise_level: f64,
    /// `None` in dry runs.
    pub deformation_rms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteIndex {
    pub config: SuiteConfig,
    pub samples: Vec<SuiteIndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct XyzRow {
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct IndexRow {
    source_index: usize,
}

fn write_points_csv(path: &Path, points: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(XyzRow { x: p.x, y: p.y, z: p.z })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<XyzRow>()
        .map(|row| Ok(row.map(|v| Point::new(v.x, v.y, v.z))?))
        .collect()
}

fn write_indices(path: &Path, indices: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for &source_index in indices {
        w.serialize(IndexRow { source_index })?;
    }
    w.flush()?;
    Ok(())
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<IndexRow>().map(|row| Ok(row?.source_index)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a generated suite. With `dry_run` only `suite.json` is written.
pub fn write_suite(
    root: impl AsRef<Path>,
    config: &SuiteConfig,
    samples: &[(SampleEntry, Option<BenchmarkSample>)],
) -> Result<SuiteIndex> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    let mut index = SuiteIndex {
        config: config.clone(),
        samples: Vec::with_capacity(samples.len()),
    };
    let mut written_models = std::collections::HashSet::new();
    for (entry, sample) in samples {
        let manifest_rel = format!("samples/{}/{MANIFEST_FILE}", entry.id);
        let Some(sample) = sample else {
            index.samples.push(SuiteIndexEntry {
                id: entry.id.clone(),
                manifest: manifest_rel,
                visibility: entry.spec.visibility,
                noise_level: entry.spec.noise_level,
                deformation_rms: None,
            });
            continue;
        };
        let model_dir = root.join("models").join(&entry.model);
        if written_models.insert(entry.model.clone()) {
            fs::create_dir_all(&model_dir)?;
            write_ply(
                model_dir.join("source.ply"),
                &sample.source,
                PlyFormat::BinaryLittleEndian,
            )?;
            write_points_csv(&model_dir.join("source_fiducials.csv"), &sample.source_fiducials)?;
        }
        let dir = root.join("samples").join(&entry.id);
        fs::create_dir_all(&dir)?;
        write_ply(dir.join("target.ply"), &sample.target, PlyFormat::BinaryLittleEndian)?;
        write_points_csv(&dir.join("target_fiducials.csv"), &sample.target_fiducials)?;
        write_indices(&dir.join("target_to_source.csv"), &sample.target_to_source)?;
        let manifest = SampleManifest {
            id: entry.id.clone(),
            source: format!("../../models/{}/source.ply", entry.model),
            source_fiducials: format!("../../models/{}/source_fiducials.csv", entry.model),
            target: "target.ply".into(),
            target_fiducials: "target_fiducials.csv".into(),
            target_to_source: "target_to_source.csv".into(),
            ground_truth: sample.ground_truth,
            metadata: sample.metadata.clone(),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        index.samples.push(SuiteIndexEntry {
            id: entry.id.clone(),
            manifest: manifest_rel,
            visibility: sample.metadata.visibility,
            noise_level: sample.metadata.noise_level,
            deformation_rms: Some(sample.metadata.deformation_rms),
        });
    }
    write_json(&root.join(SUITE_FILE), &index)?;
    Ok(index)
}

pub fn read_suite_index(root: impl AsRef<Path>) -> Result<SuiteIndex> {
    let text = fs::read_to_string(root.as_ref().join(SUITE_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a sample from its manifest.
pub fn load_sample(manifest_path: impl AsRef<Path>) -> Result<BenchmarkSample> {
    let manifest_path = manifest_path.as_ref();
    let manifest: SampleManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let dir: PathBuf = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let sample = BenchmarkSample {
        source: read_ply(dir.join(&manifest.source), Role::Source)?,
        source_fiducials: read_points_csv(dir.join(&manifest.source_fiducials))?,
        target: read_ply(dir.join(&manifest.target), Role::Target)?,
        target_fiducials: read_points_csv(dir.join(&manifest.target_fiducials))?,
        ground_truth: manifest.ground_truth,
        target_to_source: read_indices(&dir.join(&manifest.target_to_source))?,
        metadata: manifest.metadata,
    };
    if sample.target_to_source.len() != sample.target.len() {
        return Err(Error::Format(format!(
            "{}: correspondence map has {} rows for {} target points",
            manifest_path.display(),
            sample.target_to_source.len(),
            sample.target.len()
        )));
    }
    if sample.source_fiducials.len() != sample.target_fiducials.len() {
        return Err(Error::Format(format!(
            "{}: fiducial counts differ",
            manifest_path.display()
        )));
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        SuiteConfig {
            shapes: 2,
            deformations_per_shape: 2,
            crops_per_deformation: 4,
            ..Default::default()
        }
    }

    #[test]
    fn default_counts_and_bins() {
        let cfg = SuiteConfig::default();
        let entries = suite_entries(&cfg).unwrap();
        assert_eq!(entries.len(), 550);
        let mut counts = [0usize; 8];
        for e in &entries {
            let v = e.spec.visibility;
            assert!((0.2..=1.0).contains(&v));
            let b = (((v - 0.2) * 10.0).floor() as usize).min(7);
            counts[b] += 1;
        }
        assert!(counts.iter().all(|&c| (68..=69).contains(&c)), "{counts:?}");
        let ids: std::collections::HashSet<_> = entries.iter().map(|e| &e.id).collect();
        assert_eq!(ids.len(), 550);
    }

    #[test]
    fn bins_hold_exact_counts() {
        let cfg = SuiteConfig::default();
        let n = 2562.0;
        for (k, e) in suite_entries(&cfg).unwrap().iter().enumerate() {
            let bin = k % 8;
            let v = e.spec.visibility;
            assert!(v >= 0.2 + bin as f64 * 0.1 - 1e-12);
            if bin < 7 {
                assert!(v < 0.3 + bin as f64 * 0.1);
            }
            assert_eq!((v * n).round() / n, v);
        }
    }

    #[test]
    fn round_trip_through_disk() {
        let cfg = small();
        let samples = generate_suite(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let with: Vec<_> = samples.iter().map(|(e, s)| (e.clone(), Some(s.clone()))).collect();
        let index = write_suite(dir.path(), &cfg, &with).unwrap();
        assert_eq!(index, read_suite_index(dir.path()).unwrap());
        for (entry, sample) in &samples {
            let loaded = load_sample(dir.path().join(format!("samples/{}/{MANIFEST_FILE}", entry.id))).unwrap();
            assert_eq!(&loaded, sample);
        }
    }

    #[test]
    fn rebuild_from_metadata_is_bit_identical() {
        let cfg = small();
        for (_, s) in generate_suite(&cfg).unwrap().iter().take(3) {
            assert_eq!(&super::super::build_sample(&s.metadata.spec).unwrap(), s);
        }
    }

    #[test]
    fn worker_count_does_not_matter() {
        let cfg = small();
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| generate_suite(&cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
