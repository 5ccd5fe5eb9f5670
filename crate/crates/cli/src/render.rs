//! CSV to SVG or layout JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use cpcp_core::ingest::parse_table;
use cpcp_core::model::{ColumnKind, DEFAULT_ANOMALY_THRESHOLD, DEFAULT_K, DEFAULT_W_MAX};
use cpcp_core::{
    build_layout, default_config, render_svg, BundleLayout64, Dataset64, IngestOptions, SvgStyle,
    ViewState64,
};

use crate::CliError;

/// `--bins` value: one `k` for every axis, or `axis=k` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BinsSpec {
    Uniform(usize),
    PerAxis(BTreeMap<String, usize>),
}

impl BinsSpec {
    pub fn k_for(&self, axis: &str) -> usize {
        match self {
            Self::Uniform(k) => *k,
            Self::PerAxis(map) => map.get(axis).copied().unwrap_or(DEFAULT_K),
        }
    }
}

impl Default for BinsSpec {
    fn default() -> Self {
        Self::Uniform(DEFAULT_K)
    }
}

impl FromStr for BinsSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CliError::InvalidBins(s.to_owned());
        if let Ok(k) = s.trim().parse() {
            return Ok(Self::Uniform(k));
        }
        let mut map = BTreeMap::new();
        for part in s.split(',') {
            let (axis, k) = part.split_once('=').ok_or_else(bad)?;
            let k = k.trim().parse().map_err(|_| bad())?;
            if map.insert(axis.trim().to_owned(), k).is_some() {
                return Err(bad());
            }
        }
        Ok(Self::PerAxis(map))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Svg,
    Json,
}

impl OutputFormat {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("svg") => Ok(Self::Svg),
            Some("json") => Ok(Self::Json),
            _ => Err(CliError::UnsupportedOutput(path.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated axis order. Defaults to every binnable column.
    #[arg(long, value_delimiter = ',')]
    pub axes: Vec<String>,
    /// `k` for all axes, or `axis=k,...`.
    #[arg(long, default_value = "3", value_parser = parse_bins)]
    pub bins: BinsSpec,
    #[arg(long, default_value_t = DEFAULT_W_MAX, allow_negative_numbers = true)]
    pub wmax: f64,
    #[arg(long, default_value_t = DEFAULT_ANOMALY_THRESHOLD, allow_negative_numbers = true)]
    pub anomaly_threshold: f64,
    /// Destination; the extension picks SVG or layout JSON.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_bins(s: &str) -> Result<BinsSpec, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

#[derive(Debug, Clone)]
pub struct RenderSummary {
    pub format: OutputFormat,
    pub rows: usize,
    pub bundles: usize,
    pub anomalies: usize,
    pub bytes: usize,
}

/// Builds the view a render run describes.
pub fn build_view(
    dataset: &Dataset64,
    axes: &[String],
    bins: &BinsSpec,
    w_max: f64,
    anomaly_threshold: f64,
) -> Result<ViewState64, CliError> {
    let axes: Vec<String> = if axes.is_empty() {
        dataset
            .columns()
            .iter()
            .filter(|c| c.kind() != ColumnKind::Text)
            .map(|c| c.name().to_owned())
            .collect()
    } else {
        axes.to_vec()
    };
    if let BinsSpec::PerAxis(map) = bins {
        if let Some(extra) = map.keys().find(|a| !axes.contains(a)) {
            return Err(CliError::InvalidBins(format!(
                "{extra} is not a displayed axis"
            )));
        }
    }
    let configs = axes
        .iter()
        .map(|a| {
            let column = dataset
                .column(a)
                .ok_or_else(|| cpcp_core::ModelError::UnknownAxis(a.clone()))?;
            Ok(default_config(column, bins.k_for(a))?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut view = ViewState64::new(dataset.id().clone(), axes, configs);
    view.w_max = w_max;
    view.anomaly_threshold = anomaly_threshold;
    view.validate(dataset)?;
    Ok(view)
}

pub fn encode(layout: &BundleLayout64, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Svg => render_svg(layout, &SvgStyle::default()).into_bytes(),
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(layout).expect("layout serializes");
            out.push(b'\n');
            out
        }
    }
}

/// Runs the whole pipeline. Nothing is written unless every step succeeds.
pub fn render(args: &RenderArgs) -> Result<RenderSummary, CliError> {
    let format = OutputFormat::from_path(&args.out)?;
    let bytes = std::fs::read(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let dataset: Dataset64 = parse_table(&bytes, &IngestOptions::default())?;
    let view = build_view(
        &dataset,
        &args.axes,
        &args.bins,
        args.wmax,
        args.anomaly_threshold,
    )?;
    let layout = build_layout(&view, &dataset)?;
    let body = encode(&layout, format);
    std::fs::write(&args.out, &body).map_err(|e| CliError::io(&args.out, e))?;
    Ok(RenderSummary {
        format,
        rows: dataset.row_count(),
        bundles: layout.bundle_count(),
        anomalies: layout.bundles().filter(|b| b.bundle.anomaly).count(),
        bytes: body.len(),
    })
}
