//! Scenario orchestration: config loading, the per-BS chain, fusion,
//! scoring and artifact output.

pub mod config;
pub mod output;
pub mod run;
pub mod seed;

use std::path::Path;

pub use config::{bundled_profile, config_from_str, load_config, ScenarioConfig};
pub use output::{emit_outputs, read_ply_points, summarize, SummaryRow};
pub use run::{execute, execute_prepared, run_unit, RunArtifacts, RunOptions, RunRow, Scenario, TruthPoint};

use crate::error::{Result, Stage, StageExt};
use crate::metrics::{precision_recall_f, MetricReport};

/// Run the full sweep and write every artifact into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunArtifacts> {
    let art = execute(cfg, opts)?;
    emit_outputs(&art, out_dir).stage(Stage::Output)?;
    Ok(art)
}

/// Metrics-only mode: score a predicted PLY against a ground-truth PLY.
/// Without an explicit radius the `match_radius_m` header comment of the
/// prediction (then of the ground truth) is used.
pub fn eval_files(pred: &Path, gt: &Path, radius: Option<f64>) -> Result<MetricReport> {
    let (pred_pts, pred_r) = read_ply_points(pred).stage(Stage::Output)?;
    let (gt_pts, gt_r) = read_ply_points(gt).stage(Stage::Output)?;
    let radius = radius.or(pred_r).or(gt_r).ok_or_else(|| {
        crate::Error::config("radius", "no --radius given and no match_radius_m in either file")
    });
    precision_recall_f(&gt_pts, &pred_pts, radius.stage(Stage::Metrics)?).stage(Stage::Metrics)
}
