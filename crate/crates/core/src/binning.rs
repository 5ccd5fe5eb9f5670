//! Closed-form per-axis binning, row assignment and the boundary edits
//! behind interactive cluster editing.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Bins, ClusterConfig, Column, ColumnData, ModelError, BOUNDARY_TOLERANCE};
use crate::scalar::Scalar;

/// Minimum distance between boundaries after an edit, as a fraction of the axis range.
pub const EDIT_GAP: f64 = 1e-6;

/// Marker stored in an [`AssignmentVector`] for rows with a missing value.
pub const MISSING: u32 = u32::MAX;

const PAR_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinningError {
    #[error("cluster count must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("value {value} lies outside the configured range of `{axis}`")]
    ValueOutOfRange { axis: String, value: f64 },
    #[error("value `{value}` is not a category of `{axis}`")]
    UnknownCategory { axis: String, value: String },
    #[error("boundary would collide with a neighbour")]
    BoundaryCollision,
    #[error("boundary {index} is not interior to {k} clusters")]
    NotInterior { index: usize, k: usize },
    #[error("position coincides with an existing boundary")]
    OnExistingBoundary,
    #[error("position {0} lies outside the axis range")]
    PositionOutOfRange(f64),
    #[error("cannot merge the only cluster")]
    LastCluster,
    #[error("axis `{0}` is not numeric")]
    NotNumeric(String),
    #[error("column `{0}` cannot be binned")]
    Unbinnable(String),
    #[error("uniform boundaries are not representable at this precision")]
    Unrepresentable,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl BinningError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::InvalidK(_) => "InvalidK",
            Self::ValueOutOfRange { .. } => "ValueOutOfRange",
            Self::UnknownCategory { .. } => "UnknownCategory",
            Self::BoundaryCollision => "BoundaryCollision",
            Self::NotInterior { .. } => "NotInterior",
            Self::OnExistingBoundary => "OnExistingBoundary",
            Self::PositionOutOfRange(_) => "PositionOutOfRange",
            Self::LastCluster => "LastCluster",
            Self::NotNumeric(_) => "NotNumeric",
            Self::Unbinnable(_) => "Unbinnable",
            Self::Unrepresentable => "Unrepresentable",
            Self::Model(e) => e.name(),
        }
    }
}

/// Row-aligned cluster indices for one axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentVector {
    pub axis: String,
    pub k: usize,
    pub indices: Vec<u32>,
    pub missing: usize,
}

impl AssignmentVector {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<usize> {
        match self.indices[row] {
            MISSING => None,
            i => Some(i as usize),
        }
    }

    /// Per-cluster row counts, missing rows excluded.
    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.k];
        for &i in &self.indices {
            if i != MISSING {
                h[i as usize] += 1;
            }
        }
        h
    }
}

/// `k` equal-radius clusters tiling `[d_min, d_max]`, computed from the
/// range alone: `R = (d_max - d_min) / 2k`, centers `d_max - R(1 + 2i)`,
/// returned in ascending order. A zero range collapses to one cluster.
pub fn uniform_clusters<T: Scalar>(
    axis: &str,
    d_min: T,
    d_max: T,
    k: usize,
) -> Result<ClusterConfig<T>, BinningError> {
    if k < 1 {
        return Err(BinningError::InvalidK(k));
    }
    if d_min == d_max {
        return Ok(ClusterConfig::from_boundaries(axis, vec![d_min, d_max]));
    }
    let kk = T::from_usize(k).ok_or(BinningError::Unrepresentable)?;
    let radius = (d_max - d_min) / (T::lit(2.0) * kk);
    let two_r = radius + radius;
    // Boundary j sits k - j diameters below d_max, so interval midpoints
    // reproduce the closed-form centers.
    let mut boundaries = Vec::with_capacity(k + 1);
    boundaries.push(d_min);
    for j in 1..k {
        let steps = T::from_usize(k - j).ok_or(BinningError::Unrepresentable)?;
        boundaries.push(d_max - two_r * steps);
    }
    boundaries.push(d_max);
    if !boundaries.windows(2).all(|w| w[0] < w[1]) {
        return Err(BinningError::Unrepresentable);
    }
    Ok(ClusterConfig::from_boundaries(axis, boundaries))
}

/// Default config for a column: `k` uniform clusters for numeric columns,
/// one cluster per category otherwise. A numeric column without any value
/// gets a single point cluster at zero.
pub fn default_config<T: Scalar>(
    column: &Column<T>,
    k: usize,
) -> Result<ClusterConfig<T>, BinningError> {
    match column.data() {
        ColumnData::Numeric { stats, .. } => match stats {
            Some(s) => uniform_clusters(column.name(), s.min, s.max, k),
            None => {
                if k < 1 {
                    return Err(BinningError::InvalidK(k));
                }
                Ok(ClusterConfig::from_boundaries(
                    column.name(),
                    vec![T::zero(), T::zero()],
                ))
            }
        },
        ColumnData::Categorical { categories, .. } => Ok(ClusterConfig::from_categories(
            column.name(),
            categories.clone(),
        )),
        ColumnData::Text { .. } => Err(BinningError::Unbinnable(column.name().to_owned())),
    }
}

/// Interval lookup over a boundary sequence with half-open intervals and a
/// closed last interval.
struct Locator<'a, T> {
    bounds: &'a [T],
    lo: T,
    hi: T,
    /// `(b_0, 1 / width)` when the boundaries are evenly spaced.
    uniform: Option<(T, T)>,
}

impl<'a, T: Scalar> Locator<'a, T> {
    fn new(bounds: &'a [T]) -> Self {
        let first = bounds[0];
        let last = bounds[bounds.len() - 1];
        let range = last - first;
        let tol = T::lit(BOUNDARY_TOLERANCE) * range;
        let k = bounds.len() - 1;
        let uniform = if range > T::zero() {
            let width = range / T::from_usize(k).unwrap_or_else(T::one);
            let slack = width * T::lit(1e-9);
            bounds
                .windows(2)
                .all(|w| ((w[1] - w[0]) - width).abs() <= slack)
                .then(|| (first, T::one() / width))
        } else {
            None
        };
        Self {
            bounds,
            lo: first - tol,
            hi: last + tol,
            uniform,
        }
    }

    #[inline]
    fn k(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Binary search path.
    #[inline]
    fn search(&self, v: T) -> Option<u32> {
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        let interior = &self.bounds[1..self.k()];
        Some(interior.partition_point(|b| *b <= v) as u32)
    }

    /// Direct index arithmetic with a correction step, so the result is
    /// identical to [`Self::search`].
    #[inline]
    fn locate(&self, v: T) -> Option<u32> {
        let Some((b0, inv_width)) = self.uniform else {
            return self.search(v);
        };
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        let k = self.k();
        let guess = ((v - b0) * inv_width).floor();
        let mut j = if guess <= T::zero() {
            0
        } else {
            guess.to_usize().unwrap_or(k - 1).min(k - 1)
        };
        while j > 0 && v < self.bounds[j] {
            j -= 1;
        }
        while j + 1 < k && v >= self.bounds[j + 1] {
            j += 1;
        }
        Some(j as u32)
    }
}

fn numeric_bounds<T: Scalar>(config: &ClusterConfig<T>) -> Result<&[T], BinningError> {
    match config.bins() {
        Bins::Boundaries(b) if b.len() >= 2 => Ok(b),
        Bins::Boundaries(_) => Err(ModelError::EmptyConfig(config.axis().to_owned()).into()),
        Bins::Categories(_) => Err(BinningError::NotNumeric(config.axis().to_owned())),
    }
}

fn out_of_range<T: Scalar>(axis: &str, v: T) -> BinningError {
    BinningError::ValueOutOfRange {
        axis: axis.to_owned(),
        value: v.to_f64_lossy(),
    }
}

/// Maps each value to the unique cluster `j` with `b_j <= v < b_{j+1}`;
/// `v = b_k` falls in the last cluster.
pub fn assign<T: Scalar>(
    values: &[Option<T>],
    config: &ClusterConfig<T>,
) -> Result<AssignmentVector, BinningError> {
    let bounds = numeric_bounds(config)?;
    let loc = Locator::new(bounds);
    let mut missing = 0;
    let mut indices = Vec::with_capacity(values.len());
    for v in values {
        match v {
            None => {
                missing += 1;
                indices.push(MISSING);
            }
            Some(v) => indices.push(
                loc.locate(*v)
                    .ok_or_else(|| out_of_range(config.axis(), *v))?,
            ),
        }
    }
    Ok(AssignmentVector {
        axis: config.axis().to_owned(),
        k: loc.k(),
        indices,
        missing,
    })
}

/// Same as [`assign`] but always takes the binary-search path.
pub fn assign_by_search<T: Scalar>(
    values: &[Option<T>],
    config: &ClusterConfig<T>,
) -> Result<AssignmentVector, BinningError> {
    let bounds = numeric_bounds(config)?;
    let loc = Locator::new(bounds);
    let mut missing = 0;
    let indices = values
        .iter()
        .map(|v| match v {
            None => {
                missing += 1;
                Ok(MISSING)
            }
            Some(v) => loc
                .search(*v)
                .ok_or_else(|| out_of_range(config.axis(), *v)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AssignmentVector {
        axis: config.axis().to_owned(),
        k: loc.k(),
        indices,
        missing,
    })
}

/// Maps category labels to their index in the column's category list.
pub fn assign_categorical<T: Scalar, S: AsRef<str>>(
    values: &[Option<S>],
    column: &Column<T>,
) -> Result<AssignmentVector, BinningError> {
    let categories = column
        .categories()
        .ok_or_else(|| BinningError::Unbinnable(column.name().to_owned()))?;
    let mut missing = 0;
    let indices = values
        .iter()
        .map(|v| match v {
            None => {
                missing += 1;
                Ok(MISSING)
            }
            Some(s) => categories
                .iter()
                .position(|c| c == s.as_ref())
                .map(|i| i as u32)
                .ok_or_else(|| BinningError::UnknownCategory {
                    axis: column.name().to_owned(),
                    value: s.as_ref().to_owned(),
                }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AssignmentVector {
        axis: column.name().to_owned(),
        k: categories.len(),
        indices,
        missing,
    })
}

fn assign_dense_chunk<T: Scalar>(
    loc: &Locator<'_, T>,
    axis: &str,
    values: &[T],
    validity: Option<&[bool]>,
    out: &mut [u32],
) -> Result<usize, BinningError> {
    let mut missing = 0;
    match validity {
        None => {
            for (slot, &v) in out.iter_mut().zip(values) {
                *slot = loc.locate(v).ok_or_else(|| out_of_range(axis, v))?;
            }
        }
        Some(mask) => {
            for ((slot, &v), &ok) in out.iter_mut().zip(values).zip(mask) {
                if ok {
                    *slot = loc.locate(v).ok_or_else(|| out_of_range(axis, v))?;
                } else {
                    *slot = MISSING;
                    missing += 1;
                }
            }
        }
    }
    Ok(missing)
}

/// Assigns a whole column against its config. Categorical columns reuse
/// their stored codes.
pub fn assign_column<T: Scalar>(
    column: &Column<T>,
    config: &ClusterConfig<T>,
) -> Result<AssignmentVector, BinningError> {
    assign_column_with(column, config, false)
}

/// Parallel variant of [`assign_column`]; results are identical.
pub fn assign_column_par<T: Scalar>(
    column: &Column<T>,
    config: &ClusterConfig<T>,
) -> Result<AssignmentVector, BinningError> {
    assign_column_with(column, config, true)
}

fn assign_column_with<T: Scalar>(
    column: &Column<T>,
    config: &ClusterConfig<T>,
    parallel: bool,
) -> Result<AssignmentVector, BinningError> {
    match column.data() {
        ColumnData::Numeric {
            values, validity, ..
        } => {
            let bounds = numeric_bounds(config)?;
            let loc = Locator::new(bounds);
            let mut indices = vec![0u32; values.len()];
            let validity = validity.as_deref();
            let missing = if parallel {
                indices
                    .par_chunks_mut(PAR_CHUNK)
                    .enumerate()
                    .map(|(c, out)| {
                        let start = c * PAR_CHUNK;
                        let end = start + out.len();
                        assign_dense_chunk(
                            &loc,
                            column.name(),
                            &values[start..end],
                            validity.map(|m| &m[start..end]),
                            out,
                        )
                    })
                    .try_reduce(|| 0, |a, b| Ok(a + b))?
            } else {
                assign_dense_chunk(&loc, column.name(), values, validity, &mut indices)?
            };
            Ok(AssignmentVector {
                axis: column.name().to_owned(),
                k: loc.k(),
                indices,
                missing,
            })
        }
        ColumnData::Categorical { codes, categories } => {
            if !config.is_categorical() {
                return Err(BinningError::NotNumeric(column.name().to_owned()));
            }
            let mut missing = 0;
            let indices = codes
                .iter()
                .map(|c| match c {
                    Some(c) => *c,
                    None => {
                        missing += 1;
                        MISSING
                    }
                })
                .collect();
            Ok(AssignmentVector {
                axis: column.name().to_owned(),
                k: categories.len(),
                indices,
                missing,
            })
        }
        ColumnData::Text { .. } => Err(BinningError::Unbinnable(column.name().to_owned())),
    }
}

fn interior_check(index: usize, k: usize) -> Result<(), BinningError> {
    if index == 0 || index >= k {
        Err(BinningError::NotInterior { index, k })
    } else {
        Ok(())
    }
}

/// Moves interior boundary `index` to `new_value`, resizing only the two
/// clusters adjacent to it. A move within `1e-9 * range` is a no-op.
pub fn move_boundary<T: Scalar>(
    config: &ClusterConfig<T>,
    index: usize,
    new_value: T,
) -> Result<ClusterConfig<T>, BinningError> {
    let b = numeric_bounds(config)?;
    let k = b.len() - 1;
    interior_check(index, k)?;
    let range = b[k] - b[0];
    if (new_value - b[index]).abs() <= T::lit(BOUNDARY_TOLERANCE) * range {
        return Ok(config.clone());
    }
    let gap = T::lit(EDIT_GAP) * range;
    if !(new_value - b[index - 1] >= gap && b[index + 1] - new_value >= gap) {
        return Err(BinningError::BoundaryCollision);
    }
    let mut next = b.to_vec();
    next[index] = new_value;
    Ok(ClusterConfig::from_boundaries(config.axis(), next))
}

/// Inserts a boundary at `position`, splitting the cluster that contains it.
pub fn split_cluster<T: Scalar>(
    config: &ClusterConfig<T>,
    position: T,
) -> Result<ClusterConfig<T>, BinningError> {
    let b = numeric_bounds(config)?;
    let k = b.len() - 1;
    if !(position >= b[0] && position <= b[k]) {
        return Err(BinningError::PositionOutOfRange(position.to_f64_lossy()));
    }
    let gap = T::lit(EDIT_GAP) * (b[k] - b[0]);
    let j = b[1..k].partition_point(|x| *x <= position);
    if position - b[j] < gap || b[j + 1] - position < gap || b[j] == b[j + 1] {
        return Err(BinningError::OnExistingBoundary);
    }
    let mut next = b.to_vec();
    next.insert(j + 1, position);
    Ok(ClusterConfig::from_boundaries(config.axis(), next))
}

/// Removes interior boundary `index`, merging its two neighbours.
pub fn merge_at_boundary<T: Scalar>(
    config: &ClusterConfig<T>,
    index: usize,
) -> Result<ClusterConfig<T>, BinningError> {
    let b = numeric_bounds(config)?;
    let k = b.len() - 1;
    if k < 2 {
        return Err(BinningError::LastCluster);
    }
    interior_check(index, k)?;
    let mut next = b.to_vec();
    next.remove(index);
    Ok(ClusterConfig::from_boundaries(config.axis(), next))
}
