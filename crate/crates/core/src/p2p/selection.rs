use crate::cloud::{PointCloud, RigidTransform, SpatialIndex};
use crate::error::{Error, Result};
use crate::matching::CorrespondenceSet;

/// Outcome of a selection rule: winning candidate and every candidate's score.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub scores: Vec<f64>,
}

/// Picks the candidate with the most pooled correspondences satisfying
/// `|R p + t - q| < tau`. Ties go to the lower candidate index.
pub fn select_by_inliers(
    candidates: &[RigidTransform],
    pool: &CorrespondenceSet,
    source: &PointCloud,
    target: &PointCloud,
    tau: f64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::param("no candidates to select from"));
    }
    if !(tau > 0.0) {
        return Err(Error::param(format!("inlier radius must be positive, got {tau}")));
    }
    pool.check_bounds(source.len(), target.len())?;
    let (sp, tp) = (source.points(), target.points());
    let scores: Vec<f64> = candidates
        .iter()
        .map(|t| {
            pool.iter()
                .filter(|c| (t.apply(&sp[c.source]) - tp[c.target]).norm() < tau)
                .count() as f64
        })
        .collect();
    let mut index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[index] {
            index = i;
        }
    }
    Ok(Selection { index, scores })
}

/// Picks the candidate minimizing the mean, over target points, of the
/// distance to the closest transformed source point. Ties go to the lower index.
pub fn select_by_closest_distance(
    candidates: &[RigidTransform],
    source: &PointCloud,
    target: &PointCloud,
) -> Result<Selection> {
    let index = SpatialIndex::new(source.points());
    select_by_closest_distance_indexed(candidates, &index, target)
}

/// Same as [`select_by_closest_distance`] with a prebuilt source index.
///
/// Target points are pulled back into the source frame instead of moving the source.
pub fn select_by_closest_distance_indexed(
    candidates: &[RigidTransform],
    source_index: &SpatialIndex,
    target: &PointCloud,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::param("no candidates to select from"));
    }
    let scores = candidates
        .iter()
        .map(|t| mean_closest_distance(t, source_index, target))
        .collect::<Result<Vec<f64>>>()?;
    let mut index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[index] {
            index = i;
        }
    }
    Ok(Selection { index, scores })
}

pub(crate) fn mean_closest_distance(
    transform: &RigidTransform,
    source_index: &SpatialIndex,
    target: &PointCloud,
) -> Result<f64> {
    let inv = transform.inverse();
    let mut sum = 0.0;
    for q in target.points() {
        sum += source_index.nearest(&inv.apply(q))?.1;
    }
    Ok(sum / target.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point, Role};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, role: Role) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point::new(rng.random(), rng.random(), rng.random()))
                .collect(),
            role,
        )
        .unwrap()
    }

    #[test]
    fn single_candidate_always_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_cloud(&mut rng, 20, Role::Source);
        let t = random_cloud(&mut rng, 10, Role::Target);
        let far = RigidTransform::from_translation(Point::new(100.0, 0.0, 0.0));
        let pool = CorrespondenceSet::from_index_pairs((0..10).map(|i| (i, i))).unwrap();
        assert_eq!(select_by_inliers(&[far], &pool, &s, &t, 0.05).unwrap().index, 0);
        assert_eq!(select_by_closest_distance(&[far], &s, &t).unwrap().index, 0);
    }

    #[test]
    fn ground_truth_beats_rotated_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_cloud(&mut rng, 100, Role::Source);
        let truth = RigidTransform::from_euler_xyz(0.3, 0.1, -0.4, Point::new(0.2, 0.0, 0.1));
        let t = s
            .subset(&(0..40).collect::<Vec<_>>())
            .unwrap()
            .transformed(&truth)
            .with_role(Role::Target);
        let off = RigidTransform::from_axis_angle(&Point::z(), 30f64.to_radians(), Point::zeros()).compose(&truth);
        let pool = CorrespondenceSet::from_index_pairs((0..40).map(|i| (i, i))).unwrap();
        let by_inliers = select_by_inliers(&[off, truth], &pool, &s, &t, 0.05).unwrap();
        assert_eq!(by_inliers.index, 1);
        assert_eq!(by_inliers.scores[1], 40.0);
        let by_dist = select_by_closest_distance(&[off, truth], &s, &t).unwrap();
        assert_eq!(by_dist.index, 1);
        assert!(by_dist.scores[1] < 1e-12);
    }

    #[test]
    fn saturated_radius_and_identical_candidates_pick_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_cloud(&mut rng, 30, Role::Source);
        let t = random_cloud(&mut rng, 30, Role::Target);
        let pool = CorrespondenceSet::from_index_pairs((0..30).map(|i| (i, 29 - i))).unwrap();
        let cands = [
            RigidTransform::from_translation(Point::new(1.0, 0.0, 0.0)),
            RigidTransform::identity(),
        ];
        assert_eq!(select_by_inliers(&cands, &pool, &s, &t, 1e9).unwrap().index, 0);
        let same = [RigidTransform::identity(); 3];
        assert_eq!(select_by_closest_distance(&same, &s, &t).unwrap().index, 0);
    }
}
