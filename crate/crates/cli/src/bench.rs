//! Scaling benchmarks. Every run prints JSON lines to stdout.
//!
//! Timed regions exclude data synthesis and ingest. Each configuration is
//! repeated `repeat` times and summarized by min, median and mean; `t` is
//! the median.

use std::hint::black_box;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use cpcp_core::bundling::{assemble_layout, assign_view, count_view_pairs, Execution};
use cpcp_core::ingest::parse_table;
use cpcp_core::{
    default_config, densities, synthesize, AssignmentVector, BundleLayout64, Dataset64,
    IngestOptions, KeepMask, PairCountMatrix, SynthSpec, ViewState64,
};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Parallel,
    Both,
}

impl Mode {
    fn executions(self) -> &'static [(Execution, &'static str)] {
        match self {
            Self::Single => &[(Execution::Sequential, "single")],
            Self::Parallel => &[(Execution::Parallel, "parallel")],
            Self::Both => &[
                (Execution::Sequential, "single"),
                (Execution::Parallel, "parallel"),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
}

impl Timing {
    pub fn of(samples: &[f64]) -> Self {
        assert!(!samples.is_empty());
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let mid = s.len() / 2;
        let median = if s.len() % 2 == 1 {
            s[mid]
        } else {
            (s[mid - 1] + s[mid]) / 2.0
        };
        Self {
            min: s[0],
            median,
            mean: s.iter().sum::<f64>() / s.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[arg(long, default_value_t = 4)]
    pub dims: usize,
    #[arg(long)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub bins: usize,
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// CSV whose numeric columns are resampled; uniform data otherwise.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterRow {
    pub bench: &'static str,
    pub mode: &'static str,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub timing: Timing,
    pub t: f64,
}

#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    /// Row counts to compare, e.g. `--points 1000 1000000`.
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    pub points: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub bins: usize,
    #[arg(long, default_value_t = 5)]
    pub dims: usize,
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub base: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayoutRow {
    pub bench: &'static str,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    /// Layout assembly plus JSON serialization, from finished pair counts.
    #[serde(flatten)]
    pub timing: Timing,
    pub t: f64,
    /// Median of the whole pipeline including clustering, for reference.
    pub t_pipeline: f64,
    pub bundles: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayoutSummary {
    pub bench: &'static str,
    pub summary: bool,
    pub bundle_counts: Vec<usize>,
    pub bytes: Vec<usize>,
    pub bundle_count_constant: bool,
}

fn check_positive(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::InvalidArgument(format!(
            "--{name} must be positive"
        )));
    }
    Ok(())
}

fn load_base(path: &Option<PathBuf>) -> Result<Option<Dataset64>, CliError> {
    path.as_ref()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            Ok(parse_table(&bytes, &IngestOptions::default())?)
        })
        .transpose()
}

fn uniform_view(dataset: &Dataset64, k: usize) -> Result<ViewState64, CliError> {
    let axes: Vec<String> = dataset
        .columns()
        .iter()
        .map(|c| c.name().to_owned())
        .collect();
    let configs = dataset
        .columns()
        .iter()
        .map(|c| default_config(c, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ViewState64::new(dataset.id().clone(), axes, configs))
}

/// The clustering step the cluster bench times: closed-form configs,
/// assignment, pair counting and densities.
pub fn cluster_once(dataset: &Dataset64, k: usize, exec: Execution) -> Result<f64, CliError> {
    let view = uniform_view(dataset, k)?;
    let assignments = assign_view(&view, dataset, exec)?;
    let refs: Vec<&AssignmentVector> = assignments.iter().collect();
    let keep = KeepMask::from_assignments(&refs);
    let matrices = count_view_pairs(&refs, &keep, exec)?;
    let mut sum = 0.0;
    for m in &matrices {
        sum += densities::<f64>(m).sum();
    }
    Ok(black_box(sum))
}

/// Times the clustering step on already-synthesized data.
pub fn time_cluster(
    dataset: &Dataset64,
    k: usize,
    repeat: usize,
    exec: Execution,
) -> Result<Timing, CliError> {
    check_positive("repeat", repeat)?;
    let mut samples = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let start = Instant::now();
        cluster_once(dataset, k, exec)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(Timing::of(&samples))
}

pub fn bench_cluster(
    args: &ClusterArgs,
    out: &mut impl Write,
) -> Result<Vec<ClusterRow>, CliError> {
    check_positive("dims", args.dims)?;
    check_positive("points", args.points)?;
    check_positive("bins", args.bins)?;
    check_positive("repeat", args.repeat)?;
    let base = load_base(&args.base)?;
    let spec = SynthSpec {
        dims: args.dims,
        rows: args.points,
        seed: args.seed,
    };
    let dataset: Dataset64 = synthesize(spec, base.as_ref())?;
    let mut rows = Vec::new();
    for &(exec, mode) in args.mode.executions() {
        let timing = time_cluster(&dataset, args.bins, args.repeat, exec)?;
        let row = ClusterRow {
            bench: "cluster",
            mode,
            d: args.dims,
            n: args.points,
            k: args.bins,
            repeat: args.repeat,
            seed: args.seed,
            timing,
            t: timing.median,
        };
        emit(out, &row)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Clustering output the layout step starts from.
pub struct Clustered {
    pub view: ViewState64,
    pub assignments: Vec<AssignmentVector>,
    pub matrices: Vec<PairCountMatrix>,
    pub keep: KeepMask,
}

pub fn cluster_for_layout(dataset: &Dataset64, k: usize) -> Result<Clustered, CliError> {
    let view = uniform_view(dataset, k)?;
    let assignments = assign_view(&view, dataset, Execution::Sequential)?;
    let refs: Vec<&AssignmentVector> = assignments.iter().collect();
    let keep = KeepMask::from_assignments(&refs);
    let matrices = count_view_pairs(&refs, &keep, Execution::Sequential)?;
    Ok(Clustered {
        view,
        assignments,
        matrices,
        keep,
    })
}

/// Layout assembly and serialization from finished clustering.
pub fn layout_once(
    dataset: &Dataset64,
    c: &Clustered,
) -> Result<(BundleLayout64, Vec<u8>), CliError> {
    let refs: Vec<&AssignmentVector> = c.assignments.iter().collect();
    let mrefs: Vec<&PairCountMatrix> = c.matrices.iter().collect();
    let layout = assemble_layout(&c.view, dataset, &refs, &mrefs, &c.keep)?;
    let body = serde_json::to_vec(&layout).expect("layout serializes");
    Ok((layout, body))
}

pub fn bench_layout(
    args: &LayoutArgs,
    out: &mut impl Write,
) -> Result<(Vec<LayoutRow>, LayoutSummary), CliError> {
    check_positive("dims", args.dims)?;
    check_positive("bins", args.bins)?;
    check_positive("repeat", args.repeat)?;
    let base = load_base(&args.base)?;
    let mut rows = Vec::new();
    for &n in &args.points {
        let spec = SynthSpec {
            dims: args.dims,
            rows: n,
            seed: args.seed,
        };
        let dataset: Dataset64 = synthesize(spec, base.as_ref())?;
        let mut samples = Vec::with_capacity(args.repeat);
        let mut pipeline = Vec::with_capacity(args.repeat);
        let mut last = None;
        for _ in 0..args.repeat {
            let start = Instant::now();
            let clustered = cluster_for_layout(&dataset, args.bins)?;
            let mid = Instant::now();
            let (layout, body) = layout_once(&dataset, &clustered)?;
            let end = Instant::now();
            samples.push((end - mid).as_secs_f64());
            pipeline.push((end - start).as_secs_f64());
            last = Some((layout.bundle_count(), body.len()));
        }
        let (bundles, bytes) = last.expect("repeat is positive");
        let timing = Timing::of(&samples);
        let row = LayoutRow {
            bench: "layout",
            d: args.dims,
            n,
            k: args.bins,
            repeat: args.repeat,
            seed: args.seed,
            timing,
            t: timing.median,
            t_pipeline: Timing::of(&pipeline).median,
            bundles,
            bytes,
        };
        emit(out, &row)?;
        rows.push(row);
    }
    // an empty table has no bundles by construction, so it is left out
    let bundle_counts: Vec<usize> = rows.iter().filter(|r| r.n > 0).map(|r| r.bundles).collect();
    let summary = LayoutSummary {
        bench: "layout",
        summary: true,
        bundle_count_constant: bundle_counts.windows(2).all(|w| w[0] == w[1]),
        bundle_counts,
        bytes: rows.iter().filter(|r| r.n > 0).map(|r| r.bytes).collect(),
    };
    emit(out, &summary)?;
    Ok((rows, summary))
}

fn emit(out: &mut impl Write, row: &impl Serialize) -> Result<(), CliError> {
    let line = serde_json::to_string(row).expect("row serializes");
    writeln!(out, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_summary() {
        let t = Timing::of(&[3.0, 1.0, 2.0]);
        assert_eq!((t.min, t.median, t.mean), (1.0, 2.0, 2.0));
        assert_eq!(Timing::of(&[4.0, 1.0, 2.0, 3.0]).median, 2.5);
    }

    #[test]
    fn cluster_rows_are_json_lines() {
        let args = ClusterArgs {
            dims: 3,
            points: 2000,
            bins: 4,
            repeat: 3,
            seed: 1,
            base: None,
            mode: Mode::Both,
        };
        let mut out = Vec::new();
        let rows = bench_cluster(&args, &mut out).unwrap();
        assert_eq!(rows.len(), 2);
        let lines: Vec<serde_json::Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["mode"], "single");
        assert_eq!(lines[1]["mode"], "parallel");
        for l in &lines {
            assert_eq!(l["d"], 3);
            assert_eq!(l["n"], 2000);
            assert_eq!(l["k"], 4);
            assert_eq!(l["t"], l["median"]);
            assert!(l["min"].as_f64().unwrap() <= l["median"].as_f64().unwrap());
        }
    }

    #[test]
    fn zero_arguments_are_rejected() {
        let mut args = ClusterArgs {
            dims: 2,
            points: 0,
            bins: 3,
            repeat: 1,
            seed: 1,
            base: None,
            mode: Mode::Single,
        };
        assert_eq!(
            bench_cluster(&args, &mut Vec::new()).unwrap_err().name(),
            "InvalidArgument"
        );
        args.points = 10;
        args.bins = 0;
        assert_eq!(
            bench_cluster(&args, &mut Vec::new()).unwrap_err().name(),
            "InvalidArgument"
        );
    }

    #[test]
    fn absurd_size_hits_allocation_limit() {
        let args = ClusterArgs {
            dims: 1000,
            points: 1_000_000_000,
            bins: 3,
            repeat: 1,
            seed: 1,
            base: None,
            mode: Mode::Single,
        };
        assert_eq!(
            bench_cluster(&args, &mut Vec::new()).unwrap_err().name(),
            "AllocationLimit"
        );
    }

    #[test]
    fn layout_bench_with_empty_table() {
        let args = LayoutArgs {
            points: vec![0, 1000, 5000],
            bins: 3,
            dims: 5,
            repeat: 2,
            seed: 3,
            base: None,
        };
        let mut out = Vec::new();
        let (rows, summary) = bench_layout(&args, &mut out).unwrap();
        assert_eq!(rows[0].bundles, 0);
        assert!(summary.bundle_count_constant);
        assert_eq!(summary.bundle_counts, vec![36, 36]);
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
    }
}
