//! Run artifacts on disk.
//!
//! ```text
//! <out>/config.toml                   resolved configuration
//! <out>/ground_truth.{ply,csv}
//! <out>/clouds/<solver>/snr_<s>/trial_<t>/fused.{ply,csv}
//! <out>/clouds/<solver>/snr_<s>/trial_<t>/bs_<j>.{ply,csv}   BS-local frame
//! <out>/metrics.csv                   one row per (solver, snr_db, trial)
//! <out>/summary.csv                   means per (solver, snr_db)
//! <out>/complexity.csv                correlation counts per solver
//! <out>/rdm/bs_<j>_snr_<s>_trial_<t>.bin   with --dump-rdm
//! ```
//!
//! Every file records the config hash: PLY as a `comment config_hash`
//! header line, CSV and TOML as a leading `# config_hash=` line.
//!
//! Cloud CSV columns are `x,y,z,v,power,bs_id`; the PLY vertex properties
//! are `x y z velocity power` (float) and `bs_id` (int). Ground-truth rows
//! carry the speed as `v`, squared amplitude as `power` and `bs_id = -1`.

use log::info;
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{RunArtifacts, RunRow};
use crate::angle::SolverKind;
use crate::error::{Error, Result};
use crate::fusion::PointCloud4D;
use crate::range_doppler::write_rdm_dump;

/// One output row: position, velocity, power, source BS (`-1` for truth).
pub type PointRow = ([f64; 3], f64, f64, i64);

pub fn cloud_rows(cloud: &PointCloud4D) -> Vec<PointRow> {
    cloud
        .points
        .iter()
        .map(|p| (p.position, p.radial_velocity_mps, p.power, p.bs_id as i64))
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn ply_text(rows: &[PointRow], config_hash: &str, match_radius_m: Option<f64>) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "comment config_hash {config_hash}");
    if let Some(r) = match_radius_m {
        let _ = writeln!(s, "comment match_radius_m {r}");
    }
    let _ = writeln!(s, "element vertex {}", rows.len());
    for p in ["x", "y", "z", "velocity", "power"] {
        let _ = writeln!(s, "property float {p}");
    }
    s.push_str("property int bs_id\nend_header\n");
    for (pos, v, power, bs) in rows {
        let _ = writeln!(s, "{} {} {} {} {} {}", pos[0], pos[1], pos[2], v, power, bs);
    }
    s
}

pub fn csv_text(rows: &[PointRow], config_hash: &str) -> String {
    let mut s = format!("# config_hash={config_hash}\nx,y,z,v,power,bs_id\n");
    for (pos, v, power, bs) in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", pos[0], pos[1], pos[2], v, power, bs);
    }
    s
}

/// Positions from an ASCII PLY file, plus its `match_radius_m` comment if any.
pub fn read_ply_points(path: &Path) -> Result<(Vec<Vector3<f64>>, Option<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing `ply` magic".into()));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut radius = None;
    let mut in_vertex = false;
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or_else(|| bad("missing end_header".into()))?.trim();
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", ..] => ascii = true,
            ["comment", "match_radius_m", r] => {
                radius = Some(r.parse::<f64>().map_err(|e| bad(format!("match radius: {e}")))?)
            }
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| bad(format!("vertex count: {e}")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", .., name] if in_vertex => props.push(name.to_string()),
            _ => {}
        }
    }
    if !ascii {
        return Err(bad("only ASCII PLY is supported".into()));
    }
    let count = count.ok_or_else(|| bad("no vertex element".into()))?;
    let idx = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| bad(format!("vertex property `{name}` missing")))
    };
    let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);
    let mut pts = Vec::with_capacity(count);
    for i in 0..count {
        let line = lines.next().ok_or_else(|| bad(format!("expected {count} vertices, found {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("vertex {i}: {e}")))?;
        if vals.len() < props.len() {
            return Err(bad(format!("vertex {i}: {} values for {} properties", vals.len(), props.len())));
        }
        pts.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
    }
    Ok((pts, radius))
}

/// `10`, `-5`, `2.5`, `inf`.
pub fn snr_label(snr_db: f64) -> String {
    format!("{snr_db}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "nan".into())
}

fn row_dir(out: &Path, row: &RunRow) -> PathBuf {
    out.join("clouds")
        .join(row.solver.name())
        .join(format!("snr_{}", snr_label(row.snr_db)))
        .join(format!("trial_{}", row.trial))
}

pub fn metrics_csv(art: &RunArtifacts) -> String {
    let mut s = format!(
        "# config_hash={}\nsolver,snr_db,trial,chamfer_m,precision,recall,f_score,match_radius_m,correlation_count,peaks,gt_count,pred_count,warning\n",
        art.config_hash
    );
    for r in &art.rows {
        let rep = r.report.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.solver,
            r.snr_db,
            r.trial,
            fmt_opt(rep.map(|m| m.chamfer_m)),
            rep.map_or(0.0, |m| m.precision),
            rep.map_or(0.0, |m| m.recall),
            rep.map_or(0.0, |m| m.f_score),
            art.match_radius_m,
            r.correlation_count,
            r.peak_count,
            art.truth.len(),
            r.fused.len(),
            r.warning.as_deref().unwrap_or("")
        );
    }
    s
}

/// Mean and standard error of the mean (`nan` when undefined).
pub fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregate of one (solver, SNR) cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: SolverKind,
    pub snr_db: f64,
    pub trials: usize,
    /// Trials with a defined Chamfer distance.
    pub scored: usize,
    pub mean_chamfer_m: f64,
    pub sem_chamfer_m: f64,
    pub mean_f_score: f64,
    pub sem_f_score: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

/// Empty predictions count as F = 0 and are left out of the Chamfer mean.
pub fn summarize(art: &RunArtifacts) -> Vec<SummaryRow> {
    let mut keys: Vec<(SolverKind, usize, f64)> = Vec::new();
    for r in &art.rows {
        if !keys.iter().any(|k| k.0 == r.solver && k.1 == r.snr_index) {
            keys.push((r.solver, r.snr_index, r.snr_db));
        }
    }
    keys.into_iter()
        .map(|(solver, si, snr_db)| {
            let rows: Vec<&RunRow> = art
                .rows
                .iter()
                .filter(|r| r.solver == solver && r.snr_index == si)
                .collect();
            let cd: Vec<f64> = rows.iter().filter_map(|r| r.report.map(|m| m.chamfer_m)).collect();
            let f: Vec<f64> = rows.iter().map(|r| r.report.map_or(0.0, |m| m.f_score)).collect();
            let p: Vec<f64> = rows.iter().map(|r| r.report.map_or(0.0, |m| m.precision)).collect();
            let rc: Vec<f64> = rows.iter().map(|r| r.report.map_or(0.0, |m| m.recall)).collect();
            let (mean_chamfer_m, sem_chamfer_m) = mean_sem(&cd);
            let (mean_f_score, sem_f_score) = mean_sem(&f);
            SummaryRow {
                solver,
                snr_db,
                trials: rows.len(),
                scored: cd.len(),
                mean_chamfer_m,
                sem_chamfer_m,
                mean_f_score,
                sem_f_score,
                mean_precision: mean_sem(&p).0,
                mean_recall: mean_sem(&rc).0,
            }
        })
        .collect()
}

pub fn summary_csv(art: &RunArtifacts) -> String {
    let mut s = format!(
        "# config_hash={}\nsolver,snr_db,trials,scored,mean_chamfer_m,sem_chamfer_m,mean_f_score,sem_f_score,mean_precision,mean_recall\n",
        art.config_hash
    );
    for r in summarize(art) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.solver,
            r.snr_db,
            r.trials,
            r.scored,
            r.mean_chamfer_m,
            r.sem_chamfer_m,
            r.mean_f_score,
            r.sem_f_score,
            r.mean_precision,
            r.mean_recall
        );
    }
    s
}

pub fn complexity_csv(art: &RunArtifacts) -> String {
    let mut s = format!(
        "# config_hash={}\nsolver,total_correlations,total_peaks,correlations_per_peak\n",
        art.config_hash
    );
    let mut solvers: Vec<SolverKind> = art.rows.iter().map(|r| r.solver).collect();
    solvers.dedup();
    for solver in solvers {
        let rows = art.rows.iter().filter(|r| r.solver == solver);
        let (corr, peaks) = rows.fold((0u64, 0usize), |(c, p), r| (c + r.correlation_count, p + r.peak_count));
        let per_peak = if peaks > 0 {
            corr as f64 / peaks as f64
        } else {
            0.0
        };
        let _ = writeln!(s, "{solver},{corr},{peaks},{per_peak}");
    }
    s
}

fn truth_rows(art: &RunArtifacts) -> Vec<PointRow> {
    art.truth
        .iter()
        .map(|t| (t.position.into(), t.velocity.norm(), t.amplitude * t.amplitude, -1))
        .collect()
}

/// Write every artifact file; returns the paths written.
pub fn emit_outputs(art: &RunArtifacts, out: &Path) -> Result<Vec<PathBuf>> {
    let hash = &art.config_hash;
    let radius = Some(art.match_radius_m);
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<()> {
        write(&path, &text)?;
        written.push(path);
        Ok(())
    };

    put(
        out.join("config.toml"),
        format!("# config_hash={hash}\n{}", art.config.canonical_toml()),
    )?;
    let gt = truth_rows(art);
    put(out.join("ground_truth.ply"), ply_text(&gt, hash, radius))?;
    put(out.join("ground_truth.csv"), csv_text(&gt, hash))?;

    for row in &art.rows {
        let dir = row_dir(out, row);
        let fused = cloud_rows(&row.fused);
        put(dir.join("fused.ply"), ply_text(&fused, hash, radius))?;
        put(dir.join("fused.csv"), csv_text(&fused, hash))?;
        for (j, local) in row.local_clouds.iter().enumerate() {
            let rows = cloud_rows(local);
            put(dir.join(format!("bs_{j}.ply")), ply_text(&rows, hash, radius))?;
            put(dir.join(format!("bs_{j}.csv")), csv_text(&rows, hash))?;
        }
    }
    put(out.join("metrics.csv"), metrics_csv(art))?;
    put(out.join("summary.csv"), summary_csv(art))?;
    put(out.join("complexity.csv"), complexity_csv(art))?;

    for d in &art.rdm_dumps {
        let dir = out.join("rdm");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("bs_{}_snr_{}_trial_{}.bin", d.bs, snr_label(d.snr_db), d.trial));
        write_rdm_dump(&path, &d.power)?;
        written.push(path);
    }
    info!("wrote {} files to {}", written.len(), out.display());
    Ok(written)
}
