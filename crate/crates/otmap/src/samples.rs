//! Point-cloud containers for sampled distributions.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

/// A set of `n` points in `R^d`, stored row-major (point-major).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawSampleSet")]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSampleSet {
    d: usize,
    n: usize,
    points: Vec<Vec<f64>>,
}

impl TryFrom<RawSampleSet> for SampleSet {
    type Error = Error;

    fn try_from(raw: RawSampleSet) -> Result<Self> {
        if raw.points.len() != raw.n {
            return Err(Error::DimensionMismatch {
                context: "sample count",
                expected: raw.n,
                got: raw.points.len(),
            });
        }
        let mut flat = Vec::with_capacity(raw.n * raw.d);
        for row in &raw.points {
            if row.len() != raw.d {
                return Err(Error::DimensionMismatch {
                    context: "sample coordinates",
                    expected: raw.d,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        SampleSet::new(raw.d, flat)
    }
}

impl Serialize for SampleSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = self.points.chunks(self.dim).collect();
        let mut st = serializer.serialize_struct("SampleSet", 3)?;
        st.serialize_field("d", &self.dim)?;
        st.serialize_field("n", &self.len())?;
        st.serialize_field("points", &rows)?;
        st.end()
    }
}

impl SampleSet {
    /// Wraps a flat point-major coordinate buffer.
    ///
    /// # Errors
    ///
    /// The dimension must be positive, the buffer length divisible by it,
    /// and every coordinate finite.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sample set", "dimension must be positive"));
        }
        if points.len() % dim != 0 {
            return Err(Error::invalid(
                "sample set",
                format!(
                    "coordinate buffer of length {} is not divisible by dimension {dim}",
                    points.len()
                ),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample set", "non-finite coordinate"));
        }
        Ok(SampleSet { dim, points })
    }

    /// Collects owned rows into a sample set.
    ///
    /// # Errors
    ///
    /// Same conditions as [`SampleSet::new`]; rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "sample coordinates",
                    expected: dim,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        SampleSet::new(dim, flat)
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// Whether the set holds no points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension of the ambient space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterates over the points in index order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// The flat point-major coordinate buffer.
    pub fn flat(&self) -> &[f64] {
        &self.points
    }
}

/// Squared Euclidean distance between two points of equal dimension.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
