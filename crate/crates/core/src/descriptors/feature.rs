use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Row-per-point descriptor matrix with unit-norm rows, so inner products are
/// cosine similarities.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Rows are L2-normalized here; an all-zero row is an error.
    pub fn from_rows_normalized(rows: usize, dim: usize, mut values: Vec<f64>) -> Result<Self> {
        check_shape(rows, dim, values.len())?;
        for (i, row) in values.chunks_exact_mut(dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::param(format!("feature row {i} has zero or non-finite norm")));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self { rows, dim, values })
    }

    /// Validates unit-norm rows without touching the values.
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, dim, values.len())?;
        for (i, row) in values.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::param(format!("feature row {i} has norm {norm}, expected 1")));
            }
        }
        Ok(Self { rows, dim, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            values,
        }
    }

    /// Writes a one-line JSON header followed by little-endian f64 values.
    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        let header = CacheHeader {
            rows: self.rows,
            dim: self.dim,
            layout: "row-major".into(),
            dtype: "f64-le".into(),
        };
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n")?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: CacheHeader = serde_json::from_str(line.trim_end())?;
        if header.layout != "row-major" || header.dtype != "f64-le" {
            return Err(Error::Format(format!(
                "unsupported feature cache layout {} / {}",
                header.layout, header.dtype
            )));
        }
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != header.rows * header.dim * 8 {
            return Err(Error::Format(format!(
                "feature cache body has {} bytes, header implies {}",
                bytes.len(),
                header.rows * header.dim * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::new(header.rows, header.dim, values)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    rows: usize,
    dim: usize,
    layout: String,
    dtype: String,
}

fn check_shape(rows: usize, dim: usize, len: usize) -> Result<()> {
    if rows == 0 || dim == 0 {
        return Err(Error::param("feature matrix needs at least one row and one column"));
    }
    if rows * dim != len {
        return Err(Error::param(format!("{len} values for a {rows}x{dim} feature matrix")));
    }
    Ok(())
}
