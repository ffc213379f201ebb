use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CorrespondenceSet;
use crate::cloud::RigidTransform;

/// How the final transform is picked among candidates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Mean distance from each target point to the closest transformed source point (lower wins).
    #[default]
    ClosestDistance,
    /// Count of pooled correspondences within the acceptance radius (higher wins).
    InlierCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    /// `baseline` or `patch-<k>`.
    pub label: String,
    /// Patch node (source index) for patch candidates.
    pub node: Option<usize>,
    /// Mutual-NN pair count behind the candidate.
    pub pairs: usize,
    /// Selection score; `None` for failed candidates.
    pub score: Option<f64>,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    pub candidate_count: usize,
    pub selection_rule: Option<SelectionRule>,
    pub candidates: Vec<CandidateScore>,
    /// Index into `candidates` of the returned transform.
    pub chosen: Option<usize>,
    /// Patches were clamped to the source size (target larger than source).
    pub clamped: bool,
    /// Wall-clock timings in seconds; not reproducible across runs.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub timings: BTreeMap<String, f64>,
}

impl Diagnostics {
    pub fn single(method: &str) -> Self {
        Self {
            method: method.to_string(),
            candidate_count: 1,
            selection_rule: None,
            candidates: Vec::new(),
            chosen: None,
            clamped: false,
            timings: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub correspondences: CorrespondenceSet,
    pub diagnostics: Diagnostics,
}
