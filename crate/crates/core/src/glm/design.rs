//! Regression design matrix with named columns, a log-exposure offset, and
//! an integer count response.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Named design matrix. Rows are observations; `x` is row-major with
/// `names.len()` columns. `offset[i]` is added to the linear predictor with
/// coefficient fixed at 1 (log of the exposure area).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    x: Vec<f64>,
    pub offset: Vec<f64>,
    pub response: Vec<u64>,
}

impl DesignMatrix {
    pub fn new(
        names: Vec<String>,
        x: Vec<f64>,
        offset: Vec<f64>,
        response: Vec<u64>,
    ) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(Error::Config("design needs at least one column".into()));
        }
        if x.len() != p * response.len() || offset.len() != response.len() {
            return Err(Error::Config("design dimensions disagree".into()));
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite offset".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite design entry".into()));
        }
        let n = response.len();
        for j in 0..p {
            if (0..n).all(|i| x[i * p + j] == 0.0) {
                return Err(Error::Config(format!(
                    "column {:?} is constant zero",
                    names[j]
                )));
            }
        }
        Ok(DesignMatrix {
            names,
            x,
            offset,
            response,
        })
    }

    /// Build from per-row slices.
    pub fn from_rows(
        names: Vec<String>,
        rows: &[Vec<f64>],
        offset: Vec<f64>,
        response: Vec<u64>,
    ) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * names.len());
        for row in rows {
            if row.len() != names.len() {
                return Err(Error::Config("row width disagrees with names".into()));
            }
            x.extend_from_slice(row);
        }
        DesignMatrix::new(names, x, offset, response)
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.names.len();
        &self.x[i * p..(i + 1) * p]
    }

    /// Linear predictor eta = offset + x·beta for every row.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.names.len();
        (0..self.n_obs())
            .map(|i| {
                let mut eta = self.offset[i];
                let row = &self.x[i * p..(i + 1) * p];
                for j in 0..p {
                    eta += beta[j] * row[j];
                }
                eta
            })
            .collect()
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Copy with every offset shifted by a constant (exposure rescaling).
    pub fn with_offset_shift(&self, delta: f64) -> Self {
        let mut copy = self.clone();
        for v in &mut copy.offset {
            *v += delta;
        }
        copy
    }
}
