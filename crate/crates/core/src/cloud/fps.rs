use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{centroid, Point, PointCloud};
use crate::error::{Error, Result};

/// Farthest point sampling over a cloud. See [`farthest_point_sample_points`].
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    farthest_point_sample_points(cloud.points(), k, seed)
}

/// Greedy farthest point sampling.
///
/// Seed 0 starts at the point farthest from the centroid; any other seed
/// starts at a uniformly drawn index. Each next pick maximizes the distance to
/// the already selected set; distance ties go to the lower index.
pub fn farthest_point_sample_points(points: &[Point], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::param(format!("cannot sample {k} of {n} points")));
    }
    let start = if seed == 0 {
        let c = centroid(points);
        argmax(points.iter().map(|p| (p - c).norm_squared()))
    } else {
        ChaCha8Rng::seed_from_u64(seed).random_range(0..n)
    };

    let mut selected = Vec::with_capacity(k);
    selected.push(start);
    let mut min_dist2: Vec<f64> = points.iter().map(|p| (p - points[start]).norm_squared()).collect();
    while selected.len() < k {
        let next = argmax(min_dist2.iter().copied());
        selected.push(next);
        let anchor = points[next];
        for (d, p) in min_dist2.iter_mut().zip(points) {
            let candidate = (p - anchor).norm_squared();
            if candidate < *d {
                *d = candidate;
            }
        }
    }
    Ok(selected)
}

/// First index of the maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
