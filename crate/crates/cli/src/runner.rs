use std::path::Path;
use std::time::Instant;

use patchreg::baselines::{icp, ransac_registration};
use patchreg::benchgen::{oracle_descriptor, BenchmarkSample, PreparedPair};
use patchreg::cloud::io::read_transform;
use patchreg::cloud::RigidTransform;
use patchreg::descriptors::{compute_local_descriptor, estimate_normals, FeatureMatrix, OracleNoiseSpec};
use patchreg::eval::{procrustes_reference, rms_tre, EvalRecord};
use patchreg::matching::{
    default_temperature, match_and_estimate, score_matrix, CandidateScore, Diagnostics, SoftmaxKernel,
};
use patchreg::p2p::{p2p_register, P2PConfig};
use patchreg::seed::derive_seed;
use serde::{Deserialize, Serialize};

use crate::config::{DescriptorSpec, ExperimentConfig, IcpInit, MethodEntry, MethodKind};
use crate::error::CliResult;

const ORACLE_STREAM: u64 = 0x4f52_4143;
const METHOD_STREAM: u64 = 0x4d45_5448;

/// Seed of everything random about one sample, independent of processing order.
pub fn sample_seed(global: u64, sample_id: &str) -> u64 {
    derive_seed(global, &[fnv1a(sample_id.as_bytes())])
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// One method's output on one sample as written to disk. Contains nothing
/// timing-dependent, so reruns reproduce it byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub sample_id: String,
    pub method: String,
    /// Source to target, mm.
    pub transform: Option<RigidTransform>,
    /// Same map in the normalized frame used for matching.
    pub transform_normalized: Option<RigidTransform>,
    pub rms_tre: Option<f64>,
    pub rms_tre_normalized: Option<f64>,
    pub correspondences: usize,
    pub visibility: f64,
    pub noise_level: f64,
    pub deformation_rms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl ResultFile {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn to_record(&self, runtime_s: f64) -> EvalRecord {
        EvalRecord {
            sample_id: self.sample_id.clone(),
            method: self.method.clone(),
            rms_tre: self.rms_tre,
            rms_tre_normalized: self.rms_tre_normalized,
            runtime_s,
            visibility: self.visibility,
            noise_level: self.noise_level,
            deformation_rms: self.deformation_rms,
            failure: self.failure.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MethodRun {
    pub result: ResultFile,
    /// Wall time of the method alone, seconds.
    pub runtime_s: f64,
}

/// A loaded sample with its preprocessing and (lazily) its features.
pub struct SampleContext<'a> {
    pub id: &'a str,
    pub sample: &'a BenchmarkSample,
    pub prepared: PreparedPair,
    pub seed: u64,
    features: Option<(FeatureMatrix, FeatureMatrix)>,
}

impl<'a> SampleContext<'a> {
    pub fn new(id: &'a str, sample: &'a BenchmarkSample, config: &ExperimentConfig) -> CliResult<Self> {
        Ok(Self {
            id,
            sample,
            prepared: sample.prepare(config.preprocessing.voxel_size)?,
            seed: sample_seed(config.seed(), id),
            features: None,
        })
    }

    fn ensure_features(&mut self, spec: &DescriptorSpec) -> CliResult<()> {
        if self.features.is_none() {
            self.features = Some(compute_features(spec, self.id, self.sample, &self.prepared, self.seed)?);
        }
        Ok(())
    }

    fn features(&self) -> (&FeatureMatrix, &FeatureMatrix) {
        let (xs, xt) = self.features.as_ref().expect("features are computed before use");
        (xs, xt)
    }
}

pub fn compute_features(
    spec: &DescriptorSpec,
    id: &str,
    sample: &BenchmarkSample,
    prepared: &PreparedPair,
    seed: u64,
) -> CliResult<(FeatureMatrix, FeatureMatrix)> {
    Ok(match spec {
        DescriptorSpec::Oracle {
            feature_dim,
            corruption_sigma,
        } => oracle_descriptor(
            prepared,
            &sample.target_to_source,
            sample.source.len(),
            &OracleNoiseSpec {
                feature_dim: *feature_dim,
                corruption_sigma: *corruption_sigma,
                seed: derive_seed(seed, &[ORACLE_STREAM]),
            },
        )?,
        DescriptorSpec::Fpfh { radius, normal_k, dim } => {
            let describe = |cloud| -> CliResult<FeatureMatrix> {
                let with_normals = estimate_normals(cloud, *normal_k)?.cloud;
                Ok(compute_local_descriptor(&with_normals, *radius, *dim)?.features)
            };
            (describe(&prepared.source)?, describe(&prepared.target)?)
        }
        DescriptorSpec::Cached { dir } => {
            let d = dir.join(id);
            (
                FeatureMatrix::read_cache(d.join("source.feat"))?,
                FeatureMatrix::read_cache(d.join("target.feat"))?,
            )
        }
    })
}

struct Estimate {
    transform_normalized: Option<RigidTransform>,
    transform_mm: RigidTransform,
    correspondences: usize,
    diagnostics: Option<Diagnostics>,
}

impl Estimate {
    fn normalized(
        t: RigidTransform,
        ctx: &SampleContext,
        correspondences: usize,
        diagnostics: Option<Diagnostics>,
    ) -> Self {
        Self {
            transform_mm: ctx.prepared.normalization.denormalize_transform(&t),
            transform_normalized: Some(t),
            correspondences,
            diagnostics,
        }
    }

    fn mm(t: RigidTransform, ctx: &SampleContext) -> Self {
        Self {
            transform_normalized: Some(ctx.prepared.normalization.normalize_transform(&t)),
            transform_mm: t,
            correspondences: 0,
            diagnostics: None,
        }
    }
}

fn strip_timings(mut d: Diagnostics) -> Diagnostics {
    d.timings.clear();
    d
}

fn temperature_for(t: Option<f64>, xs: &FeatureMatrix) -> f64 {
    t.unwrap_or_else(|| default_temperature(xs.dim()))
}

fn baseline_transform(
    ctx: &mut SampleContext,
    spec: &DescriptorSpec,
    temperature: Option<f64>,
) -> CliResult<RigidTransform> {
    ctx.ensure_features(spec)?;
    let (xs, xt) = ctx.features();
    let t = temperature_for(temperature, xs);
    Ok(match_and_estimate(xs, xt, &ctx.prepared.source, &ctx.prepared.target, t)?.transform)
}

fn estimate(method: &MethodEntry, ctx: &mut SampleContext, config: &ExperimentConfig) -> CliResult<Estimate> {
    let spec = &config.descriptor;
    let method_seed = derive_seed(ctx.seed, &[METHOD_STREAM]);
    match &method.kind {
        MethodKind::Baseline { temperature } => {
            ctx.ensure_features(spec)?;
            let (xs, xt) = ctx.features();
            let t = temperature_for(*temperature, xs);
            let r = match_and_estimate(xs, xt, &ctx.prepared.source, &ctx.prepared.target, t)?;
            Ok(Estimate::normalized(
                r.transform,
                ctx,
                r.correspondences.len(),
                Some(strip_timings(r.diagnostics)),
            ))
        }
        MethodKind::P2p(p) => {
            let cfg = P2PConfig {
                seed: derive_seed(p.seed, &[method_seed]),
                ..p.clone()
            };
            ctx.ensure_features(spec)?;
            let (xs, xt) = ctx.features();
            let out = p2p_register(&ctx.prepared.source, &ctx.prepared.target, xs, xt, &cfg)?;
            let r = out.result;
            Ok(Estimate::normalized(
                r.transform,
                ctx,
                r.correspondences.len(),
                Some(strip_timings(r.diagnostics)),
            ))
        }
        MethodKind::Icp { icp: icp_cfg, init } => {
            let start = match init {
                IcpInit::Identity => RigidTransform::identity(),
                IcpInit::GroundTruth => ctx.prepared.normalization.normalize_transform(&ctx.sample.ground_truth),
                IcpInit::Baseline => baseline_transform(ctx, spec, None)?,
            };
            let out = icp(&ctx.prepared.source, &ctx.prepared.target, &start, icp_cfg)?;
            let mut d = Diagnostics::single("icp");
            d.candidates.push(CandidateScore {
                label: "icp".into(),
                node: None,
                pairs: ctx.prepared.source.len(),
                score: Some(out.final_residual()),
                failed: false,
            });
            d.chosen = Some(0);
            Ok(Estimate::normalized(out.transform, ctx, 0, Some(d)))
        }
        MethodKind::Ransac { ransac, temperature } => {
            ctx.ensure_features(spec)?;
            let (xs, xt) = ctx.features();
            let t = temperature_for(*temperature, xs);
            let kernel = SoftmaxKernel::new(&score_matrix(xs, xt)?, t)?;
            let rows: Vec<usize> = (0..xs.rows()).collect();
            let corr = kernel.mutual_matches(&rows);
            let cfg = patchreg::baselines::RansacConfig {
                seed: derive_seed(ransac.seed, &[method_seed]),
                ..*ransac
            };
            let out = ransac_registration(&corr, &ctx.prepared.source, &ctx.prepared.target, &cfg)?;
            Ok(Estimate::normalized(
                out.transform,
                ctx,
                out.inliers,
                Some(Diagnostics::single("ransac")),
            ))
        }
        MethodKind::Procrustes => {
            let (t, _) = procrustes_reference(&ctx.sample.source_fiducials, &ctx.sample.target_fiducials)?;
            Ok(Estimate::mm(t, ctx))
        }
        MethodKind::External { dir } => {
            let t = read_transform(dir.join(format!("{}.json", ctx.id)))?;
            Ok(Estimate::mm(t, ctx))
        }
    }
}

/// Runs one method on one sample. Registration errors become a failed
/// result; only feature/preprocessing problems that make the method
/// meaningless are also reported as failures, never as panics.
pub fn run_method(method: &MethodEntry, ctx: &mut SampleContext, config: &ExperimentConfig) -> MethodRun {
    let meta = &ctx.sample.metadata;
    let mut result = ResultFile {
        sample_id: ctx.id.to_string(),
        method: method.name.clone(),
        transform: None,
        transform_normalized: None,
        rms_tre: None,
        rms_tre_normalized: None,
        correspondences: 0,
        visibility: meta.visibility,
        noise_level: meta.noise_level,
        deformation_rms: meta.deformation_rms,
        failure: None,
        diagnostics: None,
    };
    // Features are shared between methods; keep their cost out of each method's time.
    if method.kind.needs_features() {
        if let Err(e) = ctx.ensure_features(&config.descriptor) {
            result.failure = Some(e.to_string());
            return MethodRun { result, runtime_s: 0.0 };
        }
    }
    let start = Instant::now();
    let estimate = estimate(method, ctx, config);
    let runtime_s = start.elapsed().as_secs_f64();
    let scored = estimate.and_then(|e| {
        let err = rms_tre(
            &e.transform_mm,
            &ctx.sample.source_fiducials,
            &ctx.sample.target_fiducials,
        )?;
        Ok((e, err))
    });
    match scored {
        Ok((e, err)) => {
            result.rms_tre = Some(err);
            result.rms_tre_normalized = Some(err / ctx.prepared.normalization.scale);
            result.transform = Some(e.transform_mm);
            result.transform_normalized = e.transform_normalized;
            result.correspondences = e.correspondences;
            result.diagnostics = e.diagnostics;
        }
        Err(e) => result.failure = Some(e.to_string()),
    }
    MethodRun { result, runtime_s }
}

/// Runs every method on one sample, sharing preprocessing and features.
pub fn run_sample(
    id: &str,
    sample: &BenchmarkSample,
    methods: &[&MethodEntry],
    config: &ExperimentConfig,
) -> CliResult<Vec<MethodRun>> {
    let mut ctx = SampleContext::new(id, sample, config)?;
    Ok(methods.iter().map(|m| run_method(m, &mut ctx, config)).collect())
}

pub fn result_path(results_dir: &Path, method: &str, sample_id: &str) -> std::path::PathBuf {
    results_dir.join(method).join(format!("{sample_id}.json"))
}
