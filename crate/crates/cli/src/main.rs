use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpcp_cli::bench::{bench_cluster, bench_layout, ClusterArgs, LayoutArgs};
use cpcp_cli::render::{render, RenderArgs};
use cpcp_cli::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cpcp",
    version,
    about = "Confluent parallel-coordinates renderer and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a CSV file to SVG or layout JSON.
    Render(RenderArgs),
    /// Scaling benchmarks, reported as JSON lines.
    #[command(subcommand)]
    Bench(Bench),
}

#[derive(Debug, Subcommand)]
enum Bench {
    /// Time closed-form clustering, pair counting and densities.
    Cluster(ClusterArgs),
    /// Time layout assembly and serialization across row counts.
    Layout(LayoutArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Render(args) => {
            let s = render(&args)?;
            writeln!(
                out,
                "{}",
                serde_json::json!({
                    "out": args.out,
                    "rows": s.rows,
                    "bundles": s.bundles,
                    "anomalies": s.anomalies,
                    "bytes": s.bytes,
                })
            )
            .map_err(|e| CliError::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
        }
        Command::Bench(Bench::Cluster(args)) => {
            bench_cluster(&args, &mut out)?;
        }
        Command::Bench(Bench::Layout(args)) => {
            let (_, summary) = bench_layout(&args, &mut out)?;
            if !summary.bundle_count_constant {
                return Err(CliError::BundleCountVaries(summary.bundle_counts));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::FAILURE
        }
    }
}
