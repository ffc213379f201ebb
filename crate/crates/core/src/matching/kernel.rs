use super::softmax::{dual_softmax, mutual_nn_matches};
use super::{Correspondence, CorrespondenceSet, ScoreMatrix};
use crate::error::{Error, Result};

/// Largest logit spread for which the shared-exponential path cannot underflow
/// when squared.
const MAX_LOGIT_SPREAD: f64 = 300.0;

/// Dual-softmax + mutual-NN over arbitrary row subsets of one score matrix.
///
/// Exponentials are computed once with a global shift. A row subset keeps the
/// row normalizers of the full matrix (rows always span every target column)
/// and only needs its own column sums, so rematching a patch costs a few
/// multiply-adds per entry.
#[derive(Clone, Debug)]
pub struct SoftmaxKernel {
    rows: usize,
    cols: usize,
    mode: Mode,
}

#[derive(Clone, Debug)]
enum Mode {
    Shared { exp: Vec<f64>, row_inv: Vec<f64> },
    // Logit spread too wide for the shared path; recompute per subset.
    Direct { scores: ScoreMatrix, temperature: f64 },
}

impl SoftmaxKernel {
    pub fn new(scores: &ScoreMatrix, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::param(format!("temperature must be positive, got {temperature}")));
        }
        let (rows, cols) = (scores.rows(), scores.cols());
        let (lo, hi) = scores
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if (hi - lo) / temperature > MAX_LOGIT_SPREAD {
            return Ok(Self {
                rows,
                cols,
                mode: Mode::Direct {
                    scores: scores.clone(),
                    temperature,
                },
            });
        }
        let exp: Vec<f64> = scores.values().iter().map(|v| ((v - hi) / temperature).exp()).collect();
        let row_inv = exp.chunks_exact(cols).map(|r| 1.0 / r.iter().sum::<f64>()).collect();
        Ok(Self {
            rows,
            cols,
            mode: Mode::Shared { exp, row_inv },
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Mutual nearest neighbors of the dual-softmax confidences restricted to
    /// `rows` (source indices). Returned pairs carry the original source index.
    pub fn mutual_matches(&self, rows: &[usize]) -> CorrespondenceSet {
        if rows.is_empty() {
            return CorrespondenceSet::default();
        }
        let (exp, row_inv) = match &self.mode {
            Mode::Shared { exp, row_inv } => (exp, row_inv),
            Mode::Direct { scores, temperature } => {
                let sub = scores.select_rows(rows);
                let conf = dual_softmax(&sub, *temperature).expect("validated temperature");
                let pairs = mutual_nn_matches(&conf)
                    .iter()
                    .map(|c| Correspondence {
                        source: rows[c.source],
                        ..*c
                    })
                    .collect();
                return CorrespondenceSet::from_pairs_unchecked(pairs);
            }
        };
        let m = self.cols;

        let mut col_inv = vec![0.0; m];
        for &r in rows {
            col_inv
                .iter_mut()
                .zip(&exp[r * m..(r + 1) * m])
                .for_each(|(c, e)| *c += e);
        }
        col_inv.iter_mut().for_each(|c| *c = 1.0 / *c);

        // Running column maxima: (value, row position, tied).
        let mut col_best = vec![(f64::NEG_INFINITY, usize::MAX, false); m];
        let mut row_best: Vec<Option<(usize, f64)>> = Vec::with_capacity(rows.len());
        for (pos, &r) in rows.iter().enumerate() {
            let e_row = &exp[r * m..(r + 1) * m];
            let ri = row_inv[r];
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            let mut tied = false;
            for (j, (&e, &ci)) in e_row.iter().zip(&col_inv).enumerate() {
                let v = (e * ri) * (e * ci);
                if v > best.0 {
                    best = (v, j);
                    tied = false;
                } else if v == best.0 {
                    tied = true;
                }
                let cb = &mut col_best[j];
                if v > cb.0 {
                    *cb = (v, pos, false);
                } else if v == cb.0 {
                    cb.2 = true;
                }
            }
            row_best.push((!tied).then_some((best.1, best.0)));
        }

        let pairs = row_best
            .iter()
            .enumerate()
            .filter_map(|(pos, best)| {
                let (j, v) = (*best)?;
                let (_, col_pos, col_tied) = col_best[j];
                (col_pos == pos && !col_tied && v > 0.0).then_some(Correspondence {
                    source: rows[pos],
                    target: j,
                    weight: v,
                })
            })
            .collect();
        CorrespondenceSet::from_pairs_unchecked(pairs)
    }
}
