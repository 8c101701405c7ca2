//! Command-line interface: batch evaluation, removal refinement, fixture
//! generation, report merging, and manifest validation.
//!
//! Exit codes: 0 success, 1 usage errors, 2 validation/input failures,
//! 3 when the evaluation completed but some views carry failures,
//! 4 when refinement could not build a graph (the seed stays untouched).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::pipeline::{
    emit_report, gen_fixture, merge_summary_csv, read_report, run_eval, validate_manifest,
    write_atomic, EvalConfig, FixtureSpec, ReportFormat,
};
use crate::refine::{refine, RefineConfig, RefinementStatus};
use crate::scene::{
    load_feature_sidecar, load_ply, load_removal, save_ply, save_removal_indices,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_VIEW_FAILURES: i32 = 3;
pub const EXIT_GRAPH_EMPTY: i32 = 4;

#[derive(Parser)]
#[command(
    name = "splateval",
    version,
    about = "Object-removal residual metrics and removal refinement for Gaussian splat scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scene manifest and write a metrics report.
    Eval {
        /// Scene manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
        /// Evaluation config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report output path.
        #[arg(long)]
        out: PathBuf,
        /// Report format: csv or json.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Refine a removal set over a splat cloud and write the merged set.
    Refine {
        /// Gaussian splat cloud (binary little-endian PLY).
        #[arg(long)]
        ply: PathBuf,
        /// Seed removal set (index list or bitmask file).
        #[arg(long)]
        removal_set: PathBuf,
        /// Refinement config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature sidecar (JSON header) when the PLY has no feature_* columns.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Output path for the refined removal set.
        #[arg(long)]
        out_removal: PathBuf,
        /// Optional output PLY with the refined set deleted.
        #[arg(long)]
        out_ply: Option<PathBuf>,
        /// Optional CSV with the per-iteration energy trace.
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Generate a synthetic fixture with known metric values.
    GenFixture {
        /// Fixture spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge JSON reports into a comparison table.
    Report {
        /// Input JSON reports.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Merged output path.
        #[arg(long)]
        out: PathBuf,
        /// Output format: csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Render 2-decimal cells and the `drop / pct` composite column.
        #[arg(long)]
        table_style: bool,
    },
    /// Check that a manifest's referenced files exist.
    Validate {
        /// Scene manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
    },
}

/// Runs the CLI on the given argv (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Eval {
            manifest,
            config,
            out,
            format,
        } => cmd_eval(manifest, config, out, format),
        Command::Refine {
            ply,
            removal_set,
            config,
            features,
            out_removal,
            out_ply,
            out_trace,
        } => cmd_refine(ply, removal_set, config, features, out_removal, out_ply, out_trace),
        Command::GenFixture { spec, out } => {
            let spec = FixtureSpec::load(&spec)?;
            gen_fixture(&spec, &out)?;
            println!(
                "fixture written to {} (manifest.json, expected.json)",
                out.display()
            );
            Ok(EXIT_OK)
        }
        Command::Report {
            inputs,
            out,
            format,
            table_style,
        } => cmd_report(inputs, out, format, table_style),
        Command::Validate { manifest } => cmd_validate(manifest),
    }
}

fn cmd_eval(
    manifest_path: PathBuf,
    config: Option<PathBuf>,
    out: PathBuf,
    format: String,
) -> Result<i32> {
    let format: ReportFormat = format.parse()?;
    let (manifest, issues) = validate_manifest(&manifest_path)?;
    for issue in &issues {
        eprintln!(
            "warning: view {}: {} ({})",
            issue.view_id,
            issue.reason,
            issue.path.display()
        );
    }
    let config = match config {
        Some(p) => EvalConfig::load(p)?,
        None => EvalConfig::default(),
    };
    let report = run_eval(&manifest, &manifest_path, &config)?;
    emit_report(&report, format, &out)?;

    let failures = report
        .rows
        .iter()
        .filter(|r| r.skipped || r.has_failures())
        .count();
    println!(
        "evaluated {} views ({} skipped, {} with failures) -> {}",
        report.rows.len(),
        report.summary.skipped_views,
        failures,
        out.display()
    );
    if let Some(sem) = &report.summary.semantic {
        println!(
            "iou_drop {} | acc_depth {} | sim_sam {}",
            sem.drop_pct_cell(),
            report
                .summary
                .mean_acc_depth
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "n/a".into()),
            report
                .summary
                .mean_sim_sam
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "n/a".into()),
        );
    }
    Ok(if failures > 0 {
        EXIT_VIEW_FAILURES
    } else {
        EXIT_OK
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_refine(
    ply: PathBuf,
    removal_set: PathBuf,
    config: Option<PathBuf>,
    features: Option<PathBuf>,
    out_removal: PathBuf,
    out_ply: Option<PathBuf>,
    out_trace: Option<PathBuf>,
) -> Result<i32> {
    let mut cloud = load_ply(&ply)?;
    if let Some(sidecar) = features {
        cloud.set_features(load_feature_sidecar(&sidecar)?)?;
    }
    let seed = load_removal(&removal_set, cloud.len())?;
    let cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io_at(&p, e))?;
            let cfg: RefineConfig = serde_json::from_str(&text)?;
            cfg.validate()?;
            cfg
        }
        None => RefineConfig::default(),
    };

    let result = refine(&cloud, &seed, &cfg)?;
    if result.status == RefinementStatus::GraphEmpty {
        eprintln!("graph empty: refinement not applicable, seed set left untouched");
        return Ok(EXIT_GRAPH_EMPTY);
    }

    save_removal_indices(&result.refined_set, &out_removal)?;
    if let Some(ply_out) = out_ply {
        save_ply(&cloud, Some(&result.refined_set), &ply_out)?;
    }
    if let Some(trace_out) = out_trace {
        let mut csv = String::from("iteration,energy\n");
        for (i, e) in result.energy_trace.iter().enumerate() {
            let _ = writeln!(csv, "{i},{e}");
        }
        write_atomic(&trace_out, csv.as_bytes())?;
    }
    println!(
        "refined {} -> {} removed splats ({} graph nodes, {:?}) -> {}",
        seed.count(),
        result.refined_set.count(),
        result.node_indices.len(),
        result.status,
        out_removal.display()
    );
    Ok(EXIT_OK)
}

fn cmd_report(
    inputs: Vec<PathBuf>,
    out: PathBuf,
    format: String,
    table_style: bool,
) -> Result<i32> {
    let format: ReportFormat = format.parse()?;
    let reports = inputs
        .iter()
        .map(read_report)
        .collect::<Result<Vec<_>>>()?;
    match format {
        ReportFormat::Csv => {
            let bytes = merge_summary_csv(&reports, table_style)?;
            write_atomic(&out, &bytes)?;
        }
        ReportFormat::Json => {
            let bytes = serde_json::to_vec_pretty(&reports)?;
            write_atomic(&out, &bytes)?;
        }
    }
    println!("merged {} reports -> {}", reports.len(), out.display());
    Ok(EXIT_OK)
}

fn cmd_validate(manifest_path: PathBuf) -> Result<i32> {
    let (manifest, issues) = validate_manifest(&manifest_path)?;
    if issues.is_empty() {
        println!(
            "ok: {} views, scene {} / object {} / method {}",
            manifest.views.len(),
            manifest.scene_id,
            manifest.object_id,
            manifest.method_id
        );
        return Ok(EXIT_OK);
    }
    for issue in &issues {
        println!(
            "view {}: {} ({})",
            issue.view_id,
            issue.reason,
            issue.path.display()
        );
    }
    println!("{} issue(s) found", issues.len());
    Ok(EXIT_VALIDATION)
}
