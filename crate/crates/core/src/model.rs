//! Domain vocabulary: datasets, clusters, bundles, view state and the
//! renderable layout document.
//!
//! Every type here is immutable once built. Edits produce new values.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BezierPath, PlotFrame};
use crate::scalar::Scalar;

/// Relative tolerance (fraction of the axis range) for boundary checks.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("column `{column}` has {len} values, expected {expected}")]
    RaggedColumn {
        column: String,
        len: usize,
        expected: usize,
    },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("cluster config for `{0}` has fewer than two boundaries")]
    EmptyConfig(String),
    #[error("boundaries of `{0}` are not strictly increasing")]
    NonMonotonicBoundaries(String),
    #[error("boundaries of `{axis}` must span [{d_min}, {d_max}]")]
    BoundaryOutOfRange {
        axis: String,
        d_min: f64,
        d_max: f64,
    },
    #[error("column `{0}` is not numeric")]
    NotNumeric(String),
    #[error("categories configured for `{0}` do not match the column")]
    CategoryMismatch(String),
    #[error("column `{0}` has too many distinct values to be used as an axis")]
    UnbinnableColumn(String),
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("axis `{0}` appears more than once")]
    DuplicateAxis(String),
    #[error("axis `{0}` has no cluster config")]
    MissingConfig(String),
    #[error("config for `{config}` is attached to axis `{axis}`")]
    ConfigAxisMismatch { axis: String, config: String },
    #[error("view has no axes")]
    EmptyAxisOrder,
    #[error("new axis order must be a permutation of the current one")]
    NotAPermutation,
    #[error("w_max must be positive and finite")]
    InvalidWMax,
    #[error("anomaly threshold must lie in (0, 1)")]
    InvalidThreshold,
    #[error("curve tension must lie in (0, 1]")]
    InvalidTension,
    #[error("plot frame leaves no drawable area")]
    InvalidFrame,
}

impl ModelError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RaggedColumn { .. } => "RaggedColumn",
            Self::DuplicateColumn(_) => "DuplicateColumn",
            Self::EmptyConfig(_) => "EmptyConfig",
            Self::NonMonotonicBoundaries(_) => "NonMonotonicBoundaries",
            Self::BoundaryOutOfRange { .. } => "BoundaryOutOfRange",
            Self::NotNumeric(_) => "NotNumeric",
            Self::CategoryMismatch(_) => "CategoryMismatch",
            Self::UnbinnableColumn(_) => "UnbinnableColumn",
            Self::UnknownAxis(_) => "UnknownAxis",
            Self::DuplicateAxis(_) => "DuplicateAxis",
            Self::MissingConfig(_) => "MissingConfig",
            Self::ConfigAxisMismatch { .. } => "ConfigAxisMismatch",
            Self::EmptyAxisOrder => "EmptyAxisOrder",
            Self::NotAPermutation => "NotAPermutation",
            Self::InvalidWMax => "InvalidWMax",
            Self::InvalidThreshold => "InvalidThreshold",
            Self::InvalidTension => "InvalidTension",
            Self::InvalidFrame => "InvalidFrame",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetId(String);

impl DatasetId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    /// Non-numeric column with more distinct values than the ingest limit.
    /// Kept for row alignment but never usable as an axis.
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericStats<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> NumericStats<T> {
    pub fn range(&self) -> T {
        self.max - self.min
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData<T> {
    /// Dense values with an optional validity mask; `validity[r] == false`
    /// marks a missing value and the slot in `values` is a placeholder.
    Numeric {
        values: Vec<T>,
        validity: Option<Vec<bool>>,
        stats: Option<NumericStats<T>>,
    },
    Categorical {
        codes: Vec<Option<u32>>,
        categories: Vec<String>,
    },
    Text {
        values: Vec<Option<String>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column<T> {
    name: String,
    data: ColumnData<T>,
}

impl<T: Scalar> Column<T> {
    /// Builds a numeric column, computing min/max over the non-missing values.
    pub fn numeric(name: impl Into<String>, values: Vec<Option<T>>) -> Self {
        let has_missing = values.iter().any(Option::is_none);
        let validity = has_missing.then(|| values.iter().map(Option::is_some).collect());
        let dense: Vec<T> = values
            .into_iter()
            .map(|v| v.unwrap_or_else(T::zero))
            .collect();
        Self::from_parts(name.into(), dense, validity)
    }

    /// Builds a numeric column without missing values.
    pub fn numeric_dense(name: impl Into<String>, values: Vec<T>) -> Self {
        Self::from_parts(name.into(), values, None)
    }

    fn from_parts(name: String, values: Vec<T>, validity: Option<Vec<bool>>) -> Self {
        let mut stats: Option<NumericStats<T>> = None;
        for (r, &v) in values.iter().enumerate() {
            if validity.as_ref().is_some_and(|m| !m[r]) {
                continue;
            }
            stats = Some(match stats {
                None => NumericStats { min: v, max: v },
                Some(s) => NumericStats {
                    min: s.min.min(v),
                    max: s.max.max(v),
                },
            });
        }
        Self {
            name,
            data: ColumnData::Numeric {
                values,
                validity,
                stats,
            },
        }
    }

    /// Builds a categorical column; categories are listed in order of first appearance.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, values: &[Option<S>]) -> Self {
        let mut categories: Vec<String> = Vec::new();
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut codes = Vec::with_capacity(values.len());
        for v in values {
            codes.push(v.as_ref().map(|s| {
                let s = s.as_ref();
                *index.entry(s).or_insert_with(|| {
                    categories.push(s.to_owned());
                    (categories.len() - 1) as u32
                })
            }));
        }
        Self {
            name: name.into(),
            data: ColumnData::Categorical { codes, categories },
        }
    }

    pub fn text(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Text { values },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> &ColumnData<T> {
        &self.data
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric { .. } => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
            ColumnData::Text { .. } => ColumnKind::Text,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric { values, .. } => values.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
            ColumnData::Text { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn numeric_stats(&self) -> Option<NumericStats<T>> {
        match &self.data {
            ColumnData::Numeric { stats, .. } => *stats,
            _ => None,
        }
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Categorical { categories, .. } => Some(categories),
            _ => None,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Numeric { validity, .. } => validity.as_ref().is_some_and(|m| !m[row]),
            ColumnData::Categorical { codes, .. } => codes[row].is_none(),
            ColumnData::Text { values } => values[row].is_none(),
        }
    }

    pub fn numeric_value(&self, row: usize) -> Option<T> {
        match &self.data {
            ColumnData::Numeric {
                values, validity, ..
            } => match validity {
                Some(m) if !m[row] => None,
                _ => Some(values[row]),
            },
            _ => None,
        }
    }

    /// Numeric values as a row-aligned optional sequence.
    pub fn numeric_values(&self) -> Option<Vec<Option<T>>> {
        (self.kind() == ColumnKind::Numeric)
            .then(|| (0..self.len()).map(|r| self.numeric_value(r)).collect())
    }

    pub fn category_value(&self, row: usize) -> Option<&str> {
        match &self.data {
            ColumnData::Categorical { codes, categories } => {
                codes[row].map(|c| categories[c as usize].as_str())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    id: DatasetId,
    name: String,
    columns: Vec<Column<T>>,
    row_count: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        id: DatasetId,
        name: impl Into<String>,
        columns: Vec<Column<T>>,
    ) -> Result<Self, ModelError> {
        let row_count = columns.first().map_or(0, Column::len);
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != row_count {
                return Err(ModelError::RaggedColumn {
                    column: c.name.clone(),
                    len: c.len(),
                    expected: row_count,
                });
            }
            if !seen.insert(c.name.as_str()) {
                return Err(ModelError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Self {
            id,
            name: name.into(),
            columns,
            row_count,
        })
    }

    pub fn id(&self) -> &DatasetId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column<T>] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column(&self, name: &str) -> Option<&Column<T>> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn with_id(mut self, id: DatasetId) -> Self {
        self.id = id;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// One cluster on an axis: a center and a radius in column units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster<T> {
    pub center: T,
    pub radius: T,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins<T> {
    /// Tiling boundaries `b_0 < b_1 < ... < b_k`.
    Boundaries(Vec<T>),
    /// One cluster per category, in column order.
    Categories(Vec<String>),
}

/// Ordered partition of one axis into clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig<T> {
    axis: String,
    bins: Bins<T>,
}

impl<T: Scalar> ClusterConfig<T> {
    /// Wraps a boundary sequence without validating it; see [`validate_config`].
    pub fn from_boundaries(axis: impl Into<String>, boundaries: Vec<T>) -> Self {
        Self {
            axis: axis.into(),
            bins: Bins::Boundaries(boundaries),
        }
    }

    pub fn from_categories(axis: impl Into<String>, categories: Vec<String>) -> Self {
        Self {
            axis: axis.into(),
            bins: Bins::Categories(categories),
        }
    }

    pub fn axis(&self) -> &str {
        &self.axis
    }

    pub fn bins(&self) -> &Bins<T> {
        &self.bins
    }

    pub fn boundaries(&self) -> Option<&[T]> {
        match &self.bins {
            Bins::Boundaries(b) => Some(b),
            Bins::Categories(_) => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.bins, Bins::Categories(_))
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        match &self.bins {
            Bins::Boundaries(b) => b.len().saturating_sub(1),
            Bins::Categories(c) => c.len(),
        }
    }

    /// Derived clusters with zero counts. Categorical clusters sit at their
    /// category index with radius zero.
    pub fn clusters(&self) -> Vec<Cluster<T>> {
        let two = T::lit(2.0);
        match &self.bins {
            Bins::Boundaries(b) => b
                .windows(2)
                .map(|w| Cluster {
                    center: (w[0] + w[1]) / two,
                    radius: (w[1] - w[0]) / two,
                    count: 0,
                })
                .collect(),
            Bins::Categories(c) => (0..c.len())
                .map(|i| Cluster {
                    center: T::from_usize(i).unwrap_or_else(T::zero),
                    radius: T::zero(),
                    count: 0,
                })
                .collect(),
        }
    }

    /// Stable hash of the axis name and bins, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.axis.hash(&mut h);
        match &self.bins {
            Bins::Boundaries(b) => {
                0u8.hash(&mut h);
                for v in b {
                    v.to_f64_lossy().to_bits().hash(&mut h);
                }
            }
            Bins::Categories(c) => {
                1u8.hash(&mut h);
                c.hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Checks a config against its column and returns the derived clusters.
///
/// Numeric configs must strictly increase and span the column's
/// `[d_min, d_max]` within `1e-9 * range`. A zero-range (or all-missing)
/// column admits exactly one degenerate cluster `[b, b]`.
pub fn validate_config<T: Scalar>(
    config: &ClusterConfig<T>,
    column: &Column<T>,
) -> Result<Vec<Cluster<T>>, ModelError> {
    let axis = || column.name().to_owned();
    match (&config.bins, column.data()) {
        (Bins::Boundaries(b), ColumnData::Numeric { stats, .. }) => {
            if b.len() < 2 {
                return Err(ModelError::EmptyConfig(axis()));
            }
            let degenerate = stats.is_none_or(|s| s.is_degenerate());
            let single_point = b.len() == 2 && b[0] == b[1];
            let increasing = b.windows(2).all(|w| w[0] < w[1]);
            if !(increasing || (degenerate && single_point)) {
                return Err(ModelError::NonMonotonicBoundaries(axis()));
            }
            if let Some(s) = stats {
                let tol = T::lit(BOUNDARY_TOLERANCE) * s.range();
                let first = b[0];
                let last = b[b.len() - 1];
                if (first - s.min).abs() > tol || (last - s.max).abs() > tol {
                    return Err(ModelError::BoundaryOutOfRange {
                        axis: axis(),
                        d_min: s.min.to_f64_lossy(),
                        d_max: s.max.to_f64_lossy(),
                    });
                }
            }
            Ok(config.clusters())
        }
        (Bins::Categories(c), ColumnData::Categorical { categories, .. }) => {
            if c.is_empty() {
                return Err(ModelError::EmptyConfig(axis()));
            }
            if c != categories {
                return Err(ModelError::CategoryMismatch(axis()));
            }
            Ok(config.clusters())
        }
        (_, ColumnData::Text { .. }) => Err(ModelError::UnbinnableColumn(axis())),
        (Bins::Categories(_), ColumnData::Numeric { .. }) => {
            Err(ModelError::CategoryMismatch(axis()))
        }
        (Bins::Boundaries(_), ColumnData::Categorical { .. }) => {
            Err(ModelError::NotNumeric(axis()))
        }
    }
}

/// The single curve standing for every row in one cluster pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bundle<T> {
    pub left_cluster: usize,
    pub right_cluster: usize,
    pub count: u64,
    pub density: T,
    pub width: T,
    pub anomaly: bool,
}

pub const DEFAULT_W_MAX: f64 = 40.0;
pub const DEFAULT_ANOMALY_THRESHOLD: f64 = 0.005;
pub const DEFAULT_CURVE_TENSION: f64 = 1.0;
pub const DEFAULT_K: usize = 3;

/// Mutable analysis configuration, replaced wholesale on every edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewState<T> {
    pub dataset_id: DatasetId,
    pub axis_order: Vec<String>,
    pub configs: BTreeMap<String, ClusterConfig<T>>,
    pub w_max: T,
    pub anomaly_threshold: T,
    pub frame: PlotFrame<T>,
    pub curve_tension: T,
}

impl<T: Scalar> ViewState<T> {
    /// A view with default styling over the given configs.
    pub fn new(
        dataset_id: DatasetId,
        axis_order: Vec<String>,
        configs: impl IntoIterator<Item = ClusterConfig<T>>,
    ) -> Self {
        Self {
            dataset_id,
            axis_order,
            configs: configs
                .into_iter()
                .map(|c| (c.axis().to_owned(), c))
                .collect(),
            w_max: T::lit(DEFAULT_W_MAX),
            anomaly_threshold: T::lit(DEFAULT_ANOMALY_THRESHOLD),
            frame: PlotFrame::default(),
            curve_tension: T::lit(DEFAULT_CURVE_TENSION),
        }
    }

    pub fn config(&self, axis: &str) -> Option<&ClusterConfig<T>> {
        self.configs.get(axis)
    }

    pub fn validate(&self, dataset: &Dataset<T>) -> Result<(), ModelError> {
        if self.axis_order.is_empty() {
            return Err(ModelError::EmptyAxisOrder);
        }
        let mut seen = HashSet::new();
        for axis in &self.axis_order {
            if !seen.insert(axis.as_str()) {
                return Err(ModelError::DuplicateAxis(axis.clone()));
            }
            let column = dataset
                .column(axis)
                .ok_or_else(|| ModelError::UnknownAxis(axis.clone()))?;
            let config = self
                .configs
                .get(axis)
                .ok_or_else(|| ModelError::MissingConfig(axis.clone()))?;
            if config.axis() != axis {
                return Err(ModelError::ConfigAxisMismatch {
                    axis: axis.clone(),
                    config: config.axis().to_owned(),
                });
            }
            validate_config(config, column)?;
        }
        if !(self.w_max > T::zero() && self.w_max.is_finite()) {
            return Err(ModelError::InvalidWMax);
        }
        if !(self.anomaly_threshold > T::zero() && self.anomaly_threshold < T::one()) {
            return Err(ModelError::InvalidThreshold);
        }
        if !(self.curve_tension > T::zero() && self.curve_tension <= T::one()) {
            return Err(ModelError::InvalidTension);
        }
        if !self.frame.is_valid() {
            return Err(ModelError::InvalidFrame);
        }
        Ok(())
    }

    /// Returns a copy with the axes in `order`, which must permute the current order.
    pub fn reordered(&self, order: Vec<String>) -> Result<Self, ModelError> {
        let mut current: Vec<&String> = self.axis_order.iter().collect();
        let mut proposed: Vec<&String> = order.iter().collect();
        current.sort();
        proposed.sort();
        if current != proposed {
            return Err(ModelError::NotAPermutation);
        }
        Ok(Self {
            axis_order: order,
            ..self.clone()
        })
    }

    /// Returns a copy with one axis config replaced.
    pub fn with_config(&self, config: ClusterConfig<T>) -> Self {
        let mut next = self.clone();
        next.configs.insert(config.axis().to_owned(), config);
        next
    }
}

/// A cluster as drawn: data-space extent plus its pixel band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterLayout<T> {
    pub center: T,
    pub radius: T,
    pub count: u64,
    pub y: T,
    pub y_top: T,
    pub y_bottom: T,
}

/// Draggable handle at an interior boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint<T> {
    pub index: usize,
    pub value: T,
    pub y: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisLayout<T> {
    pub name: String,
    pub kind: ColumnKind,
    pub x: T,
    /// `[d_min, d_max]` for numeric axes with at least one value.
    pub domain: Option<[T; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    pub boundaries: Vec<T>,
    pub clusters: Vec<ClusterLayout<T>>,
    pub control_points: Vec<ControlPoint<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry<T> {
    #[serde(flatten)]
    pub bundle: Bundle<T>,
    pub path: BezierPath<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLayout<T> {
    pub left_axis: String,
    pub right_axis: String,
    pub total: u64,
    pub bundles: Vec<BundleEntry<T>>,
}

/// The full renderable document. Its size depends on the cluster
/// configuration only, never on the row count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleLayout<T> {
    pub frame: PlotFrame<T>,
    pub axes: Vec<AxisLayout<T>>,
    pub pairs: Vec<PairLayout<T>>,
    pub kept_rows: u64,
    pub dropped_rows: u64,
}

impl<T: Scalar> BundleLayout<T> {
    pub fn bundle_count(&self) -> usize {
        self.pairs.iter().map(|p| p.bundles.len()).sum()
    }

    pub fn bundles(&self) -> impl Iterator<Item = &BundleEntry<T>> {
        self.pairs.iter().flat_map(|p| p.bundles.iter())
    }

    /// Upper bound on the bundle count: sum of `k_left * k_right` over pairs.
    pub fn bundle_bound(&self) -> usize {
        self.axes
            .windows(2)
            .map(|w| w[0].clusters.len() * w[1].clusters.len())
            .sum()
    }
}
