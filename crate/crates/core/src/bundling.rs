//! Cluster-pair counting between adjacent axes, bundle densities, widths,
//! anomaly flags and layout assembly.

use rayon::prelude::*;
use thiserror::Error;

use crate::binning::{assign_column, assign_column_par, AssignmentVector, BinningError, MISSING};
use crate::geometry::{axis_scale, bundle_path, AxisScale, GeometryError};
use crate::model::{
    AxisLayout, Bundle, BundleEntry, BundleLayout, ClusterLayout, ColumnKind, ControlPoint,
    Dataset, ModelError, PairLayout, ViewState,
};
use crate::scalar::Scalar;

const PAR_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundlingError {
    #[error("assignment vectors have {left} and {right} rows")]
    LengthMismatch { left: usize, right: usize },
    #[error("keep mask covers {mask} rows, assignments have {rows}")]
    MaskMismatch { mask: usize, rows: usize },
    #[error("w_max must be positive and finite")]
    InvalidWMax,
    #[error("anomaly threshold must lie in (0, 1)")]
    InvalidThreshold,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl BundlingError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LengthMismatch { .. } => "LengthMismatch",
            Self::MaskMismatch { .. } => "MaskMismatch",
            Self::InvalidWMax => "InvalidWMax",
            Self::InvalidThreshold => "InvalidThreshold",
            Self::Model(e) => e.name(),
            Self::Binning(e) => e.name(),
            Self::Geometry(e) => e.name(),
        }
    }
}

/// Rows that carry a value on every displayed axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepMask {
    /// `None` when every row is kept.
    keep: Option<Vec<bool>>,
    rows: usize,
    kept: usize,
}

impl KeepMask {
    pub fn all(rows: usize) -> Self {
        Self {
            keep: None,
            rows,
            kept: rows,
        }
    }

    pub fn from_bools(keep: Vec<bool>) -> Self {
        let rows = keep.len();
        let kept = keep.iter().filter(|k| **k).count();
        if kept == rows {
            Self::all(rows)
        } else {
            Self {
                keep: Some(keep),
                rows,
                kept,
            }
        }
    }

    /// Keeps a row iff no assignment marks it missing.
    pub fn from_assignments(assignments: &[&AssignmentVector]) -> Self {
        let rows = assignments.first().map_or(0, |a| a.len());
        if assignments.iter().all(|a| a.missing == 0) {
            return Self::all(rows);
        }
        let mut keep = vec![true; rows];
        for a in assignments.iter().filter(|a| a.missing > 0) {
            for (k, &i) in keep.iter_mut().zip(&a.indices) {
                if i == MISSING {
                    *k = false;
                }
            }
        }
        Self::from_bools(keep)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn dropped(&self) -> usize {
        self.rows - self.kept
    }

    pub fn is_kept(&self, row: usize) -> bool {
        self.keep.as_ref().is_none_or(|k| k[row])
    }

    fn slice(&self, start: usize, end: usize) -> Option<&[bool]> {
        self.keep.as_deref().map(|k| &k[start..end])
    }
}

/// Counts `N(i, j)` for one adjacent axis pair, row-major `k_left x k_right`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCountMatrix {
    pub left_axis: String,
    pub right_axis: String,
    pub k_left: usize,
    pub k_right: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl PairCountMatrix {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k_right + j]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts
            .chunks(self.k_right.max(1))
            .map(|r| r.iter().sum())
            .take(self.k_left)
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut s = vec![0u64; self.k_right];
        for (idx, c) in self.counts.iter().enumerate() {
            s[idx % self.k_right] += c;
        }
        s
    }
}

fn count_chunk(
    left: &[u32],
    right: &[u32],
    keep: Option<&[bool]>,
    k_right: usize,
    counts: &mut [u64],
) {
    match keep {
        None => {
            for (&l, &r) in left.iter().zip(right) {
                counts[l as usize * k_right + r as usize] += 1;
            }
        }
        Some(keep) => {
            for ((&l, &r), &k) in left.iter().zip(right).zip(keep) {
                if k {
                    counts[l as usize * k_right + r as usize] += 1;
                }
            }
        }
    }
}

fn check_lengths(
    left: &AssignmentVector,
    right: &AssignmentVector,
    mask: &KeepMask,
) -> Result<(), BundlingError> {
    if left.len() != right.len() {
        return Err(BundlingError::LengthMismatch {
            left: left.len(),
            right: right.len(),
        });
    }
    if mask.rows() != left.len() {
        return Err(BundlingError::MaskMismatch {
            mask: mask.rows(),
            rows: left.len(),
        });
    }
    // unkept missing markers would index out of bounds
    let unmasked_missing = |a: &AssignmentVector| {
        a.missing > 0
            && a.indices
                .iter()
                .enumerate()
                .any(|(r, &i)| i == MISSING && mask.is_kept(r))
    };
    if unmasked_missing(left) || unmasked_missing(right) {
        return Err(BundlingError::MaskMismatch {
            mask: mask.rows(),
            rows: left.len(),
        });
    }
    Ok(())
}

fn finish(left: &AssignmentVector, right: &AssignmentVector, counts: Vec<u64>) -> PairCountMatrix {
    let total = counts.iter().sum();
    PairCountMatrix {
        left_axis: left.axis.clone(),
        right_axis: right.axis.clone(),
        k_left: left.k,
        k_right: right.k,
        counts,
        total,
    }
}

/// Single pass over rows: `counts[i][j]` is the number of kept rows with
/// `left = i` and `right = j`.
pub fn count_pairs(
    left: &AssignmentVector,
    right: &AssignmentVector,
    keep: &KeepMask,
) -> Result<PairCountMatrix, BundlingError> {
    check_lengths(left, right, keep)?;
    let mut counts = vec![0u64; left.k * right.k];
    count_chunk(
        &left.indices,
        &right.indices,
        keep.slice(0, keep.rows()),
        right.k,
        &mut counts,
    );
    Ok(finish(left, right, counts))
}

/// Chunked parallel counting; equal to [`count_pairs`] for every schedule.
pub fn count_pairs_par(
    left: &AssignmentVector,
    right: &AssignmentVector,
    keep: &KeepMask,
) -> Result<PairCountMatrix, BundlingError> {
    check_lengths(left, right, keep)?;
    let cells = left.k * right.k;
    let counts = left
        .indices
        .par_chunks(PAR_CHUNK)
        .zip(right.indices.par_chunks(PAR_CHUNK))
        .enumerate()
        .fold(
            || vec![0u64; cells],
            |mut acc, (c, (l, r))| {
                let start = c * PAR_CHUNK;
                count_chunk(l, r, keep.slice(start, start + l.len()), right.k, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(finish(left, right, counts))
}

/// Row-major density matrix matching a [`PairCountMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> DensityMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |a, b| a + *b)
    }
}

/// `D[i][j] = N(i, j) / total`, or all zeros when the pair has no rows.
pub fn densities<T: Scalar>(m: &PairCountMatrix) -> DensityMatrix<T> {
    let values = if m.total == 0 {
        vec![T::zero(); m.counts.len()]
    } else {
        let total = T::from_count(m.total);
        m.counts.iter().map(|&c| T::from_count(c) / total).collect()
    };
    DensityMatrix {
        rows: m.k_left,
        cols: m.k_right,
        values,
    }
}

/// `W = D * w_max`, element-wise.
pub fn widths<T: Scalar>(d: &DensityMatrix<T>, w_max: T) -> Result<Vec<T>, BundlingError> {
    if !(w_max > T::zero() && w_max.is_finite()) {
        return Err(BundlingError::InvalidWMax);
    }
    Ok(d.values.iter().map(|&x| x * w_max).collect())
}

/// Flags non-empty bundles whose density falls below `threshold`.
pub fn flag_anomalies<T: Scalar>(
    d: &DensityMatrix<T>,
    threshold: T,
) -> Result<Vec<bool>, BundlingError> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(BundlingError::InvalidThreshold);
    }
    Ok(d.values
        .iter()
        .map(|&x| x > T::zero() && x < threshold)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

/// Assigns every displayed axis of the view, in axis order.
pub fn assign_view<T: Scalar>(
    view: &ViewState<T>,
    dataset: &Dataset<T>,
    exec: Execution,
) -> Result<Vec<AssignmentVector>, BundlingError> {
    let assign_one = |axis: &String| -> Result<AssignmentVector, BundlingError> {
        let column = dataset
            .column(axis)
            .ok_or_else(|| ModelError::UnknownAxis(axis.clone()))?;
        let config = view
            .config(axis)
            .ok_or_else(|| ModelError::MissingConfig(axis.clone()))?;
        Ok(match exec {
            Execution::Sequential => assign_column(column, config)?,
            Execution::Parallel => assign_column_par(column, config)?,
        })
    };
    match exec {
        Execution::Sequential => view.axis_order.iter().map(assign_one).collect(),
        Execution::Parallel => view.axis_order.par_iter().map(assign_one).collect(),
    }
}

/// Pair matrices for every adjacent axis pair.
pub fn count_view_pairs(
    assignments: &[&AssignmentVector],
    keep: &KeepMask,
    exec: Execution,
) -> Result<Vec<PairCountMatrix>, BundlingError> {
    match exec {
        Execution::Sequential => assignments
            .windows(2)
            .map(|w| count_pairs(w[0], w[1], keep))
            .collect(),
        Execution::Parallel => assignments
            .par_windows(2)
            .map(|w| count_pairs_par(w[0], w[1], keep))
            .collect(),
    }
}

/// Builds the renderable layout from already-computed assignments and
/// pair matrices. The caller supplies them in axis order.
pub fn assemble_layout<T: Scalar>(
    view: &ViewState<T>,
    dataset: &Dataset<T>,
    assignments: &[&AssignmentVector],
    matrices: &[&PairCountMatrix],
    keep: &KeepMask,
) -> Result<BundleLayout<T>, BundlingError> {
    let frame = view.frame;
    let n_axes = view.axis_order.len();
    let mut scales: Vec<AxisScale<T>> = Vec::with_capacity(n_axes);
    let mut axes: Vec<AxisLayout<T>> = Vec::with_capacity(n_axes);

    for (a, axis) in view.axis_order.iter().enumerate() {
        let column = dataset
            .column(axis)
            .ok_or_else(|| ModelError::UnknownAxis(axis.clone()))?;
        let config = view
            .config(axis)
            .ok_or_else(|| ModelError::MissingConfig(axis.clone()))?;
        let scale = axis_scale(column, config, &frame);
        // marginals of a neighbouring pair equal the kept-row histogram
        let counts: Vec<u64> = if a + 1 < n_axes {
            matrices[a].row_sums()
        } else if a > 0 {
            matrices[a - 1].col_sums()
        } else {
            let mut h = vec![0u64; config.k()];
            for (r, &i) in assignments[a].indices.iter().enumerate() {
                if i != MISSING && keep.is_kept(r) {
                    h[i as usize] += 1;
                }
            }
            h
        };
        let kind = column.kind();
        let clusters = config
            .clusters()
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(i, (c, &count))| {
                let (y, y_top, y_bottom) = match kind {
                    ColumnKind::Numeric => (
                        scale.y(c.center),
                        scale.y(c.center + c.radius),
                        scale.y(c.center - c.radius),
                    ),
                    _ => {
                        let (top, bottom) = scale.band_edges(i);
                        (scale.band_center(i), top, bottom)
                    }
                };
                ClusterLayout {
                    center: c.center,
                    radius: c.radius,
                    count,
                    y,
                    y_top,
                    y_bottom,
                }
            })
            .collect();
        let boundaries = config.boundaries().map(<[T]>::to_vec).unwrap_or_default();
        let control_points = if boundaries.len() > 2 {
            boundaries[1..boundaries.len() - 1]
                .iter()
                .enumerate()
                .map(|(i, &value)| ControlPoint {
                    index: i + 1,
                    value,
                    y: scale.y(value),
                })
                .collect()
        } else {
            Vec::new()
        };
        axes.push(AxisLayout {
            name: axis.clone(),
            kind,
            x: frame.axis_x(a, n_axes),
            domain: column.numeric_stats().map(|s| [s.min, s.max]),
            categories: column
                .categories()
                .map(<[String]>::to_vec)
                .unwrap_or_default(),
            boundaries,
            clusters,
            control_points,
        });
        scales.push(scale);
    }

    let mut pairs = Vec::with_capacity(n_axes.saturating_sub(1));
    for (p, m) in matrices.iter().enumerate() {
        let (left, right) = (&axes[p], &axes[p + 1]);
        let d = densities::<T>(m);
        let w = widths(&d, view.w_max)?;
        let flags = flag_anomalies(&d, view.anomaly_threshold)?;
        let mut bundles = Vec::new();
        for i in 0..m.k_left {
            for j in 0..m.k_right {
                let idx = i * m.k_right + j;
                if m.counts[idx] == 0 {
                    continue;
                }
                let bundle = Bundle {
                    left_cluster: i,
                    right_cluster: j,
                    count: m.counts[idx],
                    density: d.values[idx],
                    width: w[idx],
                    anomaly: flags[idx],
                };
                let path = bundle_path(
                    &bundle,
                    left.x,
                    right.x,
                    left.clusters[i].y,
                    right.clusters[j].y,
                    view.curve_tension,
                )?;
                bundles.push(BundleEntry { bundle, path });
            }
        }
        pairs.push(PairLayout {
            left_axis: m.left_axis.clone(),
            right_axis: m.right_axis.clone(),
            total: m.total,
            bundles,
        });
    }

    Ok(BundleLayout {
        frame,
        axes,
        pairs,
        kept_rows: keep.kept() as u64,
        dropped_rows: keep.dropped() as u64,
    })
}

/// Full pipeline: assign, count adjacent pairs, derive densities, widths,
/// anomaly flags and Bezier geometry.
pub fn build_layout<T: Scalar>(
    view: &ViewState<T>,
    dataset: &Dataset<T>,
) -> Result<BundleLayout<T>, BundlingError> {
    build_layout_with(view, dataset, Execution::Sequential)
}

pub fn build_layout_with<T: Scalar>(
    view: &ViewState<T>,
    dataset: &Dataset<T>,
    exec: Execution,
) -> Result<BundleLayout<T>, BundlingError> {
    view.validate(dataset)?;
    let assignments = assign_view(view, dataset, exec)?;
    let refs: Vec<&AssignmentVector> = assignments.iter().collect();
    let keep = KeepMask::from_assignments(&refs);
    let matrices = count_view_pairs(&refs, &keep, exec)?;
    let mrefs: Vec<&PairCountMatrix> = matrices.iter().collect();
    assemble_layout(view, dataset, &refs, &mrefs, &keep)
}
