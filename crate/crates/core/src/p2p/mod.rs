//! Patches-to-partial matching.
//!
//! The complete source is replaced by K patches, each holding as many points as
//! the partial target. Patch nodes are spread by farthest point sampling over
//! the source points most similar to the target, every patch is rematched
//! against the target, and one transform is selected among the baseline and
//! the patch candidates.

mod selection;

pub use selection::{select_by_closest_distance, select_by_closest_distance_indexed, select_by_inliers, Selection};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cloud::{farthest_point_sample_points, PointCloud, RigidTransform, SpatialIndex};
use crate::descriptors::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matching::{
    check_rows, default_temperature, dual_softmax, mutual_nn_matches, score_matrix, weighted_svd, CandidateScore,
    CorrespondenceSet, Diagnostics, RegistrationResult, ScoreMatrix, SelectionRule, SoftmaxKernel,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct P2PConfig {
    /// Number of patches.
    pub patches: usize,
    pub selection: SelectionRule,
    /// Acceptance radius of the inlier rule, normalized units.
    pub tau: f64,
    /// Dual-softmax temperature; `None` means `1 / sqrt(d)`.
    pub temperature: Option<f64>,
    /// Seed of the patch-node FPS start (0: farthest from the centroid).
    pub seed: u64,
    /// Restrict patch nodes to the visible source points. Disabling it is an
    /// ablation: nodes are spread over the whole source surface.
    pub visibility_filter: bool,
}

impl Default for P2PConfig {
    fn default() -> Self {
        Self {
            patches: 5,
            selection: SelectionRule::ClosestDistance,
            tau: 0.05,
            temperature: None,
            seed: 0,
            visibility_filter: true,
        }
    }
}

impl P2PConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patches == 0 {
            return Err(Error::param("patch count K must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param(format!("tau must be positive, got {}", self.tau)));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::param(format!("temperature must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// Per-source-point sum of similarities over all target points.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityScores(Vec<f64>);

impl VisibilityScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("visibility scores must be non-empty and finite"));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Row sums of the raw score matrix. Negative similarities are kept.
pub fn visibility_scores(scores: &ScoreMatrix) -> VisibilityScores {
    VisibilityScores((0..scores.rows()).map(|i| scores.row(i).iter().sum()).collect())
}

/// Indices of the `min(m, N)` highest scores, best first; ties by lower index.
pub fn select_visible(scores: &VisibilityScores, m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let s = &scores.0;
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order.truncate(m.min(scores.len()));
    order
}

/// `k` patch nodes (source indices) by farthest point sampling over the visible subset.
pub fn generate_patch_nodes(source: &PointCloud, visible: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > visible.len() {
        return Err(Error::param(format!(
            "cannot place {k} patch nodes among {} visible points",
            visible.len()
        )));
    }
    if let Some(&bad) = visible.iter().find(|&&i| i >= source.len()) {
        return Err(Error::param(format!("visible index {bad} out of range")));
    }
    let pts: Vec<_> = visible.iter().map(|&i| source.points()[i]).collect();
    let local = farthest_point_sample_points(&pts, k, seed)?;
    Ok(local.into_iter().map(|i| visible[i]).collect())
}

/// A source patch and, once registered, its transform.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchCandidate {
    pub node: usize,
    /// Source indices, nearest to the node first.
    pub members: Vec<usize>,
    /// Rows of the source features at `members`.
    pub features: FeatureMatrix,
    /// The requested size exceeded the source and was clamped.
    pub clamped: bool,
    pub correspondences: CorrespondenceSet,
    pub transform: Option<RigidTransform>,
    pub score: Option<f64>,
    pub failure: Option<String>,
}

impl PatchCandidate {
    pub fn is_registered(&self) -> bool {
        self.transform.is_some()
    }
}

/// The `m` nearest source points of `node` (clamped to the source size).
pub fn sample_patch(
    source: &PointCloud,
    index: &SpatialIndex,
    node: usize,
    m: usize,
    xs: &FeatureMatrix,
) -> Result<PatchCandidate> {
    if node >= source.len() || index.len() != source.len() || xs.rows() != source.len() {
        return Err(Error::param(
            "patch node, index and features must refer to the same source",
        ));
    }
    if m == 0 {
        return Err(Error::param("patch size must be positive"));
    }
    let clamped = m > source.len();
    let size = m.min(source.len());
    let (mut members, _) = index.nearest_neighbors(&source.points()[node], size)?;
    if !members.contains(&node) {
        // Only reachable with duplicated points that shadow the node.
        *members.last_mut().expect("size >= 1") = node;
    }
    let features = xs.select_rows(&members);
    Ok(PatchCandidate {
        node,
        members,
        features,
        clamped,
        correspondences: CorrespondenceSet::default(),
        transform: None,
        score: None,
        failure: None,
    })
}

/// Matches every patch against the target (score matrix, dual softmax,
/// mutual NN, weighted SVD). Patches with fewer than 3 usable pairs are marked
/// failed and kept; `NoCandidate` is returned only when every patch failed
/// and no baseline transform exists.
pub fn register_patches(
    patches: Vec<PatchCandidate>,
    xt: &FeatureMatrix,
    source: &PointCloud,
    target: &PointCloud,
    temperature: f64,
    baseline_available: bool,
) -> Result<Vec<PatchCandidate>> {
    if patches.is_empty() {
        return Err(Error::param("no patches to register"));
    }
    let mut out = Vec::with_capacity(patches.len());
    for mut patch in patches {
        let scores = score_matrix(&patch.features, xt)?;
        let conf = dual_softmax(&scores, temperature)?;
        let local = mutual_nn_matches(&conf);
        let pairs = local
            .iter()
            .map(|c| crate::matching::Correspondence {
                source: patch.members[c.source],
                ..*c
            })
            .collect();
        finish_patch(
            &mut patch,
            CorrespondenceSet::from_pairs_unchecked(pairs),
            source,
            target,
        );
        out.push(patch);
    }
    if !baseline_available && out.iter().all(|p| !p.is_registered()) {
        return Err(Error::NoCandidate);
    }
    Ok(out)
}

fn finish_patch(patch: &mut PatchCandidate, corr: CorrespondenceSet, source: &PointCloud, target: &PointCloud) {
    match weighted_svd(&corr, source.points(), target.points()) {
        Ok(t) => patch.transform = Some(t),
        Err(e) => patch.failure = Some(e.to_string()),
    }
    patch.correspondences = corr;
}

/// Full outcome of [`p2p_register`].
#[derive(Clone, Debug)]
pub struct P2POutcome {
    /// Selected transform, its correspondences and per-candidate diagnostics.
    pub result: RegistrationResult,
    /// Baseline (whole-source) registration, when it succeeded.
    pub baseline: Option<RegistrationResult>,
    pub patches: Vec<PatchCandidate>,
}

/// Baseline matching followed by the patch module and candidate selection.
pub fn p2p_register(
    source: &PointCloud,
    target: &PointCloud,
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    config: &P2PConfig,
) -> Result<P2POutcome> {
    run(source, target, xs, xt, config, None)
}

/// Like [`p2p_register`] with caller-chosen patch nodes instead of the
/// visibility + FPS proposal.
pub fn p2p_register_with_nodes(
    source: &PointCloud,
    target: &PointCloud,
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    config: &P2PConfig,
    nodes: &[usize],
) -> Result<P2POutcome> {
    run(source, target, xs, xt, config, Some(nodes))
}

fn run(
    source: &PointCloud,
    target: &PointCloud,
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    config: &P2PConfig,
    forced_nodes: Option<&[usize]>,
) -> Result<P2POutcome> {
    config.validate()?;
    check_rows(xs, xt, source, target)?;
    let temperature = config.temperature.unwrap_or_else(|| default_temperature(xs.dim()));
    let t0 = Instant::now();

    // Baseline: whole source against the target.
    let scores = score_matrix(xs, xt)?;
    let kernel = SoftmaxKernel::new(&scores, temperature)?;
    let all: Vec<usize> = (0..source.len()).collect();
    let base_corr = kernel.mutual_matches(&all);
    let base_transform = weighted_svd(&base_corr, source.points(), target.points());
    let t_baseline = t0.elapsed().as_secs_f64();

    // Patch proposal.
    let t1 = Instant::now();
    let nodes = match forced_nodes {
        Some(nodes) => nodes.to_vec(),
        None => {
            let visible = if config.visibility_filter {
                select_visible(&visibility_scores(&scores), target.len())
            } else {
                all.clone()
            };
            generate_patch_nodes(source, &visible, config.patches, config.seed)?
        }
    };
    drop(scores);
    let mut nodes = nodes;
    nodes.sort_unstable();
    let index = SpatialIndex::new(source.points());
    let mut patches = nodes
        .iter()
        .map(|&node| sample_patch(source, &index, node, target.len(), xs))
        .collect::<Result<Vec<_>>>()?;
    for patch in &mut patches {
        let corr = kernel.mutual_matches(&patch.members);
        finish_patch(patch, corr, source, target);
    }

    // Candidate set: baseline first, then patches by node index.
    let mut labels = vec![("baseline".to_string(), None, base_corr.len())];
    let mut transforms: Vec<Option<RigidTransform>> = vec![base_transform.as_ref().ok().copied()];
    for (k, p) in patches.iter().enumerate() {
        labels.push((format!("patch-{k}"), Some(p.node), p.correspondences.len()));
        transforms.push(p.transform);
    }
    let viable: Vec<usize> = (0..transforms.len()).filter(|&i| transforms[i].is_some()).collect();
    if viable.is_empty() {
        return Err(Error::NoCandidate);
    }
    let viable_transforms: Vec<RigidTransform> = viable.iter().map(|&i| transforms[i].expect("viable")).collect();
    let selection = match config.selection {
        SelectionRule::ClosestDistance => select_by_closest_distance_indexed(&viable_transforms, &index, target)?,
        SelectionRule::InlierCount => {
            let pool =
                CorrespondenceSet::union(std::iter::once(&base_corr).chain(patches.iter().map(|p| &p.correspondences)));
            select_by_inliers(&viable_transforms, &pool, source, target, config.tau)?
        }
    };
    let mut candidate_scores: Vec<Option<f64>> = vec![None; transforms.len()];
    for (slot, &i) in viable.iter().enumerate() {
        candidate_scores[i] = Some(selection.scores[slot]);
    }
    for (k, p) in patches.iter_mut().enumerate() {
        p.score = candidate_scores[k + 1];
    }
    let chosen = viable[selection.index];
    let t_module = t1.elapsed().as_secs_f64();

    let candidates: Vec<CandidateScore> = labels
        .into_iter()
        .zip(&candidate_scores)
        .zip(&transforms)
        .map(|(((label, node, pairs), score), t)| CandidateScore {
            label,
            node,
            pairs,
            score: *score,
            failed: t.is_none(),
        })
        .collect();
    let mut diagnostics = Diagnostics {
        method: "p2p".into(),
        candidate_count: candidates.len(),
        selection_rule: Some(config.selection),
        candidates,
        chosen: Some(chosen),
        clamped: patches.iter().any(|p| p.clamped),
        timings: Default::default(),
    };
    diagnostics.timings.insert("baseline_s".into(), t_baseline);
    diagnostics.timings.insert("p2p_module_s".into(), t_module);
    diagnostics.timings.insert("total_s".into(), t_baseline + t_module);

    let baseline = base_transform.ok().map(|transform| {
        let mut d = Diagnostics::single("baseline");
        d.timings.insert("baseline_s".into(), t_baseline);
        RegistrationResult {
            transform,
            correspondences: base_corr.clone(),
            diagnostics: d,
        }
    });
    let chosen_corr = if chosen == 0 {
        base_corr
    } else {
        patches[chosen - 1].correspondences.clone()
    };
    Ok(P2POutcome {
        result: RegistrationResult {
            transform: transforms[chosen].expect("chosen is viable"),
            correspondences: chosen_corr,
            diagnostics,
        },
        baseline,
        patches,
    })
}
