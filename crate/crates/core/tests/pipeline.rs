//! End-to-end pipeline behaviour: point recovery, determinism, artifacts and
//! the command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use isac_imaging::angle::SolverKind;
use isac_imaging::array_geometry::{angle_to_unit_vector, Angle};
use isac_imaging::pipeline::config::{BsSection, ScattererSection};
use isac_imaging::pipeline::{
    bundled_profile, execute, run_scenario, summarize, RunOptions, Scenario, ScenarioConfig,
};

fn single_target(snr_db: f64) -> ScenarioConfig {
    let mut cfg = bundled_profile("desk").unwrap();
    cfg.scene.random = None;
    cfg.scene.scatterers = vec![ScattererSection {
        position_m: [4.0, -3.0, 1.0],
        velocity_mps: [12.0, -5.0, 0.0],
        amplitude: 0.1,
        hidden_from: vec![],
    }];
    cfg.processing.solver.kinds = vec![SolverKind::Zoom];
    cfg.evaluation.snr_db = vec![snr_db];
    cfg.evaluation.trials = 1;
    cfg
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn noiseless_on_bin_scatterer_gives_one_exact_point() {
    let mut cfg = single_target(f64::INFINITY);
    cfg.bs = vec![BsSection::default()];
    let dims = Scenario::prepare(&cfg).unwrap().dims;
    cfg.processing.n_r = Some(dims.k);
    cfg.processing.n_d = Some(dims.l);
    let scn = Scenario::prepare(&cfg).unwrap();
    let u = angle_to_unit_vector(&Angle::from_degrees(-37.5, 71.0).unwrap());
    let range = 200.0 * scn.dims.range_bin_m(scn.n_r);
    let v_r = -9.0 * scn.dims.velocity_bin_mps(scn.n_d);
    let truth = range * u;
    cfg.scene.scatterers[0].position_m = truth.into();
    cfg.scene.scatterers[0].velocity_mps = (-v_r * u).into();

    let art = execute(&cfg, &RunOptions::default()).unwrap();
    let row = &art.rows[0];
    assert_eq!(row.fused.len(), 1);
    let p = &row.fused.points[0];
    assert!((p.position() - truth).norm() < 1e-9, "{:?} vs {truth:?}", p.position);
    assert!((p.radial_velocity_mps - v_r).abs() < 1e-9);
    let rep = row.report.as_ref().unwrap();
    assert_eq!((rep.precision, rep.recall), (1.0, 1.0));
}

#[test]
fn noiseless_scatterer_is_found_by_every_bs() {
    let cfg = single_target(f64::INFINITY);
    let poses = Scenario::prepare(&cfg).unwrap().poses;
    let art = execute(&cfg, &RunOptions::default()).unwrap();
    let row = &art.rows[0];
    let truth = art.truth[0].position;
    for (j, local) in row.local_clouds.iter().enumerate() {
        let best = local
            .points
            .iter()
            .max_by(|a, b| a.power.total_cmp(&b.power))
            .unwrap_or_else(|| panic!("BS {j} saw nothing"));
        let err = (poses[j].to_global(&best.position()) - truth).norm();
        assert!(err <= art.match_radius_m, "BS {j}: {err}");
    }
    assert_eq!(row.report.as_ref().unwrap().recall, 1.0);
}

#[test]
fn runs_are_byte_identical() {
    let cfg = single_target(5.0);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&cfg, a.path(), &RunOptions::default()).unwrap();
    run_scenario(&cfg, b.path(), &RunOptions::default()).unwrap();
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    assert_eq!(
        fa.iter().map(|p| p.strip_prefix(a.path()).unwrap()).collect::<Vec<_>>(),
        fb.iter().map(|p| p.strip_prefix(b.path()).unwrap()).collect::<Vec<_>>()
    );
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{x:?}");
    }
}

#[test]
fn seed_changes_noisy_output() {
    let mut cfg = single_target(0.0);
    let a = execute(&cfg, &RunOptions::default()).unwrap();
    cfg.seed += 1;
    let b = execute(&cfg, &RunOptions::default()).unwrap();
    assert_ne!(a.config_hash, b.config_hash);
    assert_ne!(a.rows[0].fused.points, b.rows[0].fused.points);
}

#[test]
fn every_artifact_records_the_config_hash() {
    let cfg = single_target(10.0);
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { dump_rdm: true };
    let art = run_scenario(&cfg, dir.path(), &opts).unwrap();
    assert_eq!(art.config_hash, cfg.hash());
    assert_eq!(art.config_hash.len(), 64);
    let files = files_under(dir.path());
    for name in ["config.toml", "ground_truth.ply", "metrics.csv", "summary.csv", "complexity.csv"] {
        assert!(files.contains(&dir.path().join(name)), "{name} missing");
    }
    let mut text_files = 0;
    for f in &files {
        match f.extension().and_then(|e| e.to_str()) {
            Some("ply") | Some("csv") | Some("toml") => {
                let text = fs::read_to_string(f).unwrap();
                assert!(text.contains(&art.config_hash), "{f:?}");
                text_files += 1;
            }
            Some("bin") => {}
            other => panic!("unexpected artifact {f:?} ({other:?})"),
        }
    }
    assert!(text_files >= 5 + 2 * 5);
    assert_eq!(files.iter().filter(|f| f.extension().is_some_and(|e| e == "bin")).count(), 4);
}

#[test]
fn sweep_has_one_row_per_solver_snr_and_trial() {
    let mut cfg = single_target(0.0);
    cfg.processing.solver.kinds = vec![SolverKind::Zoom, SolverKind::Full];
    cfg.evaluation.snr_db = vec![0.0, 20.0];
    cfg.evaluation.trials = 2;
    let art = execute(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(art.rows.len(), 2 * 2 * 2);
    let mut keys: Vec<(String, usize, usize)> = art
        .rows
        .iter()
        .map(|r| (r.solver.name().to_string(), r.snr_index, r.trial))
        .collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 8);
    let summary = summarize(&art);
    assert_eq!(summary.len(), 4);
}

#[test]
fn empty_prediction_is_reported_not_fatal() {
    let mut cfg = single_target(f64::INFINITY);
    cfg.scene.scatterers[0].hidden_from = vec![0, 1, 2, 3];
    let art = execute(&cfg, &RunOptions::default()).unwrap();
    let row = &art.rows[0];
    assert!(row.fused.is_empty());
    assert!(row.report.is_none());
    assert_eq!(row.warning.as_deref(), Some("empty predicted cloud"));
}

fn isac4d(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_isac4d"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn cli_run_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("scene.toml");
    let mut cfg = single_target(20.0);
    cfg.profile = None;
    fs::write(&cfg_path, cfg.canonical_toml()).unwrap();
    let out = dir.path().join("out");
    let o = isac4d(&[
        "run",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--snr-list",
        "inf,10",
        "--seed",
        "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("config hash"));
    let fused = out.join("clouds/zoom/snr_inf/trial_0/fused.ply");
    assert!(fused.exists());
    assert!(out.join("clouds/zoom/snr_10/trial_0/fused.csv").exists());

    let gt = out.join("ground_truth.ply");
    let o = isac4d(&["eval", fused.to_str().unwrap(), gt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["recall"], 1.0);

    let o = isac4d(&["eval", fused.to_str().unwrap(), gt.to_str().unwrap(), "--radius", "-1"]);
    assert!(!o.status.success());
}

#[test]
fn cli_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.toml");
    let o = isac4d(&["run", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nno_such_key = 2\n").unwrap();
    let o = isac4d(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let o = isac4d(&["frobnicate"]);
    assert!(!o.status.success());
}
