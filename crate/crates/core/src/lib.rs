//! Confluent-drawing parallel coordinates.
//!
//! Each displayed dimension is split into ordered clusters by closed-form
//! binning; rows falling in the same cluster pair on two adjacent axes are
//! merged into one Bezier bundle whose width encodes the pair's share of
//! rows. The resulting [`BundleLayout`] has a size bounded by the cluster
//! configuration, independent of the number of rows.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below pin the common instantiations.

pub mod binning;
pub mod bundling;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod scalar;

use thiserror::Error;

pub use binning::{
    assign, assign_categorical, assign_column, default_config, merge_at_boundary, move_boundary,
    split_cluster, uniform_clusters, AssignmentVector, BinningError,
};
pub use bundling::{
    build_layout, count_pairs, densities, flag_anomalies, widths, BundlingError, Execution,
    KeepMask, PairCountMatrix,
};
pub use geometry::{bundle_path, render_svg, BezierPath, GeometryError, PlotFrame, SvgStyle};
pub use ingest::{parse_table, synthesize, IngestError, IngestOptions, SynthSpec};
pub use model::{
    validate_config, Bundle, BundleLayout, Cluster, ClusterConfig, Column, ColumnKind, Dataset,
    DatasetId, ModelError, ViewState,
};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type ClusterConfig64 = ClusterConfig<f64>;
pub type ClusterConfig32 = ClusterConfig<f32>;
pub type ViewState64 = ViewState<f64>;
pub type ViewState32 = ViewState<f32>;
pub type BundleLayout64 = BundleLayout<f64>;
pub type BundleLayout32 = BundleLayout<f32>;

/// Any pipeline failure, tagged with a stable variant name.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error(transparent)]
    Bundling(#[from] BundlingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl Error {
    /// Name of the innermost error variant, e.g. `"RaggedRow"`.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ingest(e) => e.name(),
            Self::Model(e) => e.name(),
            Self::Binning(e) => e.name(),
            Self::Bundling(e) => e.name(),
            Self::Geometry(e) => e.name(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
