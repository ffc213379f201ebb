use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Weighted (source index, target index) pairs without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for c in &pairs {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::param(format!(
                    "correspondence ({}, {}) has non-positive weight {}",
                    c.source, c.target, c.weight
                )));
            }
            if !seen.insert((c.source, c.target)) {
                return Err(Error::param(format!(
                    "duplicate correspondence ({}, {})",
                    c.source, c.target
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Unit-weight pairs.
    pub fn from_index_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(source, target)| Correspondence {
                    source,
                    target,
                    weight: 1.0,
                })
                .collect(),
        )
    }

    pub(crate) fn from_pairs_unchecked(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    /// Union keeping the first occurrence of every (source, target) pair.
    pub fn union<'a>(sets: impl IntoIterator<Item = &'a CorrespondenceSet>) -> Self {
        let mut seen = HashSet::new();
        let mut pairs = Vec::new();
        for set in sets {
            for c in &set.pairs {
                if seen.insert((c.source, c.target)) {
                    pairs.push(*c);
                }
            }
        }
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence> {
        self.pairs.iter()
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    /// Every source and every target index appears at most once.
    pub fn is_injective(&self) -> bool {
        let mut s = HashSet::new();
        let mut t = HashSet::new();
        self.pairs.iter().all(|c| s.insert(c.source) && t.insert(c.target))
    }

    /// Checks indices against cloud sizes.
    pub fn check_bounds(&self, source_len: usize, target_len: usize) -> Result<()> {
        match self
            .pairs
            .iter()
            .find(|c| c.source >= source_len || c.target >= target_len)
        {
            Some(c) => Err(Error::param(format!(
                "correspondence ({}, {}) out of range for clouds of {source_len} and {target_len} points",
                c.source, c.target
            ))),
            None => Ok(()),
        }
    }
}

impl<'a> IntoIterator for &'a CorrespondenceSet {
    type Item = &'a Correspondence;
    type IntoIter = std::slice::Iter<'a, Correspondence>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}
