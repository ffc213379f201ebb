use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const DEFAULT_ORACLE_DIM: usize = 32;

const SOURCE_STREAM: u64 = 0x5352_4345;
const TARGET_STREAM: u64 = 0x5447_5400;

/// Ground-truth driven features with a single corruption knob.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleNoiseSpec {
    pub feature_dim: usize,
    /// Per-component Gaussian noise added to target features before re-normalization.
    pub corruption_sigma: f64,
    pub seed: u64,
}

impl Default for OracleNoiseSpec {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_ORACLE_DIM,
            corruption_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Source point `i` gets a random unit vector drawn from its own stream; target
/// point `j` gets the feature of source point `target_to_source[j]`, corrupted
/// by isotropic noise and re-normalized. With zero sigma the copy is exact.
pub fn oracle_features(
    source_count: usize,
    target_to_source: &[usize],
    spec: &OracleNoiseSpec,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if spec.feature_dim == 0 {
        return Err(Error::param("oracle feature dim must be positive"));
    }
    if !(spec.corruption_sigma >= 0.0 && spec.corruption_sigma.is_finite()) {
        return Err(Error::param(format!(
            "corruption sigma must be finite and non-negative, got {}",
            spec.corruption_sigma
        )));
    }
    if target_to_source.is_empty() {
        return Err(Error::param("empty ground-truth correspondence map"));
    }
    if let Some(&bad) = target_to_source.iter().find(|&&i| i >= source_count) {
        return Err(Error::param(format!(
            "ground-truth map points at source {bad}, only {source_count} exist"
        )));
    }
    let d = spec.feature_dim;
    let mut source = Vec::with_capacity(source_count * d);
    for i in 0..source_count {
        let mut rng = rng_for(spec.seed, &[SOURCE_STREAM, i as u64]);
        source.extend((0..d).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
    }
    let source = FeatureMatrix::from_rows_normalized(source_count, d, source)?;

    let mut target = Vec::with_capacity(target_to_source.len() * d);
    for (j, &i) in target_to_source.iter().enumerate() {
        let row = source.row(i);
        if spec.corruption_sigma == 0.0 {
            target.extend_from_slice(row);
        } else {
            let mut rng = rng_for(spec.seed, &[TARGET_STREAM, j as u64]);
            let mut noisy: Vec<f64> = row
                .iter()
                .map(|v| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v + spec.corruption_sigma * n
                })
                .collect();
            let norm = noisy.iter().map(|v| v * v).sum::<f64>().sqrt();
            noisy.iter_mut().for_each(|v| *v /= norm);
            target.extend(noisy);
        }
    }
    let target = FeatureMatrix::new(target_to_source.len(), d, target)?;
    Ok((source, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_copies_rows_exactly() {
        let map = [4, 0, 4, 2];
        let spec = OracleNoiseSpec {
            seed: 3,
            ..Default::default()
        };
        let (s, t) = oracle_features(5, &map, &spec).unwrap();
        for (j, &i) in map.iter().enumerate() {
            assert_eq!(t.row(j), s.row(i));
        }
    }

    #[test]
    fn deterministic_and_unit() {
        let map: Vec<usize> = (0..50).map(|j| (j * 7) % 60).collect();
        let spec = OracleNoiseSpec {
            feature_dim: 16,
            corruption_sigma: 0.5,
            seed: 11,
        };
        let a = oracle_features(60, &map, &spec).unwrap();
        let b = oracle_features(60, &map, &spec).unwrap();
        assert_eq!(a, b);
        for j in 0..a.1.rows() {
            let n: f64 = a.1.row(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_maps() {
        let spec = OracleNoiseSpec::default();
        assert!(oracle_features(5, &[], &spec).is_err());
        assert!(oracle_features(5, &[5], &spec).is_err());
        let neg = OracleNoiseSpec {
            corruption_sigma: -1.0,
            ..spec
        };
        assert!(oracle_features(5, &[0], &neg).is_err());
    }
}
