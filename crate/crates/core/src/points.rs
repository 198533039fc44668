//! Point sets and kernel hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, KrrError, Result};

/// Axis-aligned bounding box of a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoundingBox {
    /// Side lengths `max - min` per dimension.
    pub fn lengths(&self) -> Vec<f64> {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }
}

/// `n` points in `d` dimensions, stored row-major, with their bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    n: usize,
    d: usize,
    coords: Vec<f64>,
    bbox: BoundingBox,
}

impl PointSet {
    /// Builds a point set from row-major coordinates.
    pub fn new(coords: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(KrrError::InvalidParameter(
                "dimension d must be >= 1".into(),
            ));
        }
        if coords.is_empty() || coords.len() % d != 0 {
            return Err(KrrError::InvalidParameter(format!(
                "coordinate buffer of length {} is not a non-empty multiple of d = {d}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(KrrError::InvalidParameter(format!(
                "non-finite coordinate at point {}, dimension {}",
                pos / d,
                pos % d
            )));
        }
        let n = coords.len() / d;
        let mut min = coords[..d].to_vec();
        let mut max = coords[..d].to_vec();
        for row in coords.chunks_exact(d) {
            for j in 0..d {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Ok(Self {
            n,
            d,
            coords,
            bbox: BoundingBox { min, max },
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(KrrError::DimensionMismatch {
                context: "point rows",
                expected: d,
                found: rows[bad].len(),
            });
        }
        Self::new(rows.concat(), d)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn bounding_box(&self) -> &BoundingBox {
        &self.bbox
    }

    /// Sub-set of rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(KrrError::IndexOutOfRange {
                    index: i,
                    len: self.n,
                });
            }
            coords.extend_from_slice(self.point(i));
        }
        Self::new(coords, self.d)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian bandwidth and ridge weight. The kernel is `exp(-|x-y|^2 / epsilon^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub epsilon: f64,
    pub beta: f64,
}

impl KernelConfig {
    pub fn new(epsilon: f64, beta: f64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        check_positive("beta", beta)?;
        Ok(Self { epsilon, beta })
    }
}
