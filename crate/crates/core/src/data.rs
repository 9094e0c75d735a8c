//! Dense point sets and labelled datasets.

use crate::error::{Error, Result};

/// A list of points in R^d, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    dim: usize,
    values: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InputDomain("points must have dimension >= 1".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::InputDomain(format!(
                "{} values do not split into rows of length {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("non-finite coordinate".into()));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() {
            return Err(Error::InputDomain("empty point list".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::new(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Largest Euclidean norm over the points.
    pub fn radius(&self) -> f64 {
        self.rows()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, values }
    }
}

/// Labelled sample D = ((x_1, y_1), ..., (x_n, y_n)).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: Points,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Points, targets: Vec<f64>) -> Result<Self> {
        if points.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: targets.len() });
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::InputDomain("non-finite label".into()));
        }
        Ok(Self { points, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::InputDomain("empty dataset".into()))
        } else {
            Ok(())
        }
    }

    /// max_i |y_i|, the default clipping level for regression.
    pub fn label_range(&self) -> f64 {
        self.targets.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: self.points.select(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}
