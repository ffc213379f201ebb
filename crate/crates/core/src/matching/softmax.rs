use rayon::prelude::*;

use super::{Correspondence, CorrespondenceSet};
use crate::descriptors::FeatureMatrix;
use crate::error::{Error, Result};

/// Cosine similarities between source rows and target rows, row-major `N x M`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::param(format!(
                "{} values for a {rows}x{cols} score matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("score matrix has non-finite entries"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }
}

/// Dual-softmax confidences, same shape as the score matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ConfidenceMatrix {
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::param(format!(
                "{} values for a {rows}x{cols} confidence matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("confidences must lie in [0, 1]"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `1 / sqrt(d)`, the scaled dot-product convention.
pub fn default_temperature(dim: usize) -> f64 {
    1.0 / (dim.max(1) as f64).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `S = xS xTᵀ`; entries are cosine similarities because rows are unit-norm.
pub fn score_matrix(xs: &FeatureMatrix, xt: &FeatureMatrix) -> Result<ScoreMatrix> {
    if xs.dim() != xt.dim() {
        return Err(Error::param(format!(
            "feature dims differ: source {} vs target {}",
            xs.dim(),
            xt.dim()
        )));
    }
    let (n, m) = (xs.rows(), xt.rows());
    let mut values = vec![0.0; n * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let a = xs.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = dot(a, xt.row(j));
        }
    });
    Ok(ScoreMatrix {
        rows: n,
        cols: m,
        values,
    })
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::param(format!("temperature must be positive, got {temperature}")));
    }
    Ok(())
}

/// Row-wise and column-wise softmax of `S / temperature`, each row-major.
pub fn softmax_factors(s: &ScoreMatrix, temperature: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_temperature(temperature)?;
    let (n, m) = (s.rows, s.cols);
    let mut row_sm = vec![0.0; n * m];
    for i in 0..n {
        let row = s.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = &mut row_sm[i * m..(i + 1) * m];
        let mut sum = 0.0;
        for (o, v) in out.iter_mut().zip(row) {
            *o = ((v - max) / temperature).exp();
            sum += *o;
        }
        out.iter_mut().for_each(|o| *o /= sum);
    }
    let mut col_sm = vec![0.0; n * m];
    for j in 0..m {
        let max = (0..n).map(|i| s.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in 0..n {
            let e = ((s.get(i, j) - max) / temperature).exp();
            col_sm[i * m + j] = e;
            sum += e;
        }
        for i in 0..n {
            col_sm[i * m + j] /= sum;
        }
    }
    Ok((row_sm, col_sm))
}

/// `M(i, j) = softmax_row_i(S / T)[j] * softmax_col_j(S / T)[i]`.
pub fn dual_softmax(s: &ScoreMatrix, temperature: f64) -> Result<ConfidenceMatrix> {
    let (row_sm, col_sm) = softmax_factors(s, temperature)?;
    let values = row_sm.iter().zip(&col_sm).map(|(a, b)| a * b).collect();
    Ok(ConfidenceMatrix {
        rows: s.rows,
        cols: s.cols,
        values,
    })
}

/// Pairs whose confidence is the strict maximum of both its row and its column.
pub fn mutual_nn_matches(conf: &ConfidenceMatrix) -> CorrespondenceSet {
    let (n, m) = (conf.rows, conf.cols);
    let row_best: Vec<Option<usize>> = (0..n).map(|i| strict_argmax((0..m).map(|j| conf.get(i, j)))).collect();
    let col_best: Vec<Option<usize>> = (0..m).map(|j| strict_argmax((0..n).map(|i| conf.get(i, j)))).collect();
    let pairs = row_best
        .iter()
        .enumerate()
        .filter_map(|(i, best)| {
            let j = (*best)?;
            (col_best[j] == Some(i)).then(|| Correspondence {
                source: i,
                target: j,
                weight: conf.get(i, j),
            })
        })
        .filter(|c| c.weight > 0.0)
        .collect();
    CorrespondenceSet::from_pairs_unchecked(pairs)
}

/// Index of the maximum, or `None` when the maximum is attained more than once.
pub(crate) fn strict_argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut tied = false;
    for (i, v) in values.enumerate() {
        match best {
            None => best = Some((i, v)),
            Some((_, b)) if v > b => {
                best = Some((i, v));
                tied = false;
            }
            Some((_, b)) if v == b => tied = true,
            _ => {}
        }
    }
    if tied {
        None
    } else {
        best.map(|b| b.0)
    }
}
