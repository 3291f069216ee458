use log::{info, warn};
use nalgebra::Vector3;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

use super::config::{FullGrid, RandomSceneSection, RdmMode, ScenarioConfig};
use super::seed::{derive_seed, stream};
use crate::angle::{estimate_angles, AngleSolver, AngularGrid, Detection, SolverKind, ZoomOmp};
use crate::array_geometry::{steering_vector, UpaConfig};
use crate::error::{Error, Result, Stage, StageExt};
use crate::fusion::{fuse, local_cloud, BsPose, PointCloud4D};
use crate::metrics::{precision_recall_f, MetricReport};
use crate::nr_grid::{fill_grid, make_grid_dims, make_numerology, GridDims};
use crate::range_doppler::{
    compute_rdm, compute_rdm_lean, default_padding, dense_map_bytes, estimate_channel_owned,
    oscfar_detect, CfarConfig, RangeDopplerMap, RdPeak,
};
use crate::scene::{sample_primitive_points, synthesize_echo, ScatterScene, Scatterer};

/// A ground-truth scatterer in the global frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthPoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub amplitude: f64,
    pub hidden_from: Vec<usize>,
}

impl TruthPoint {
    pub fn visible_to(&self, bs: usize) -> bool {
        !self.hidden_from.contains(&bs)
    }
}

/// Everything derived once from a config: grid, array, poses, ground truth,
/// detector and solvers.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub dims: GridDims,
    pub upa: UpaConfig,
    pub precoder: Vec<Complex64>,
    pub poses: Vec<BsPose>,
    pub truth: Vec<TruthPoint>,
    pub n_r: usize,
    pub n_d: usize,
    pub cfar: CfarConfig,
    pub solvers: Vec<AngleSolver>,
    pub match_radius_m: f64,
    pub lean: bool,
}

impl Scenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self> {
        config.validate().stage(Stage::Config)?;
        let g = &config.grid;
        let dims = make_numerology(g.mu, g.cp)
            .and_then(|num| make_grid_dims(num, g.n_rb, g.n_subframes, g.carrier_hz))
            .stage(Stage::Grid)?;
        let upa = config.array.upa().stage(Stage::Config)?;
        let precoder = config.array.precoder.vector(&upa).stage(Stage::Config)?;
        let poses = config
            .bs
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let [yaw, pitch, roll] = b.yaw_pitch_roll_deg;
                BsPose::from_yaw_pitch_roll_deg(yaw, pitch, roll, Vector3::from(b.position_m), j)
            })
            .collect::<Result<Vec<_>>>()
            .stage(Stage::Config)?;

        let p = &config.processing;
        let n_r = p.n_r.unwrap_or_else(|| default_padding(dims.k));
        let n_d = p.n_d.unwrap_or_else(|| default_padding(dims.l));
        if n_r < dims.k || n_d < dims.l {
            return Err(Error::PaddingTooSmall {
                axis: if n_r < dims.k { "range" } else { "doppler" },
                padded: if n_r < dims.k { n_r } else { n_d },
                data: if n_r < dims.k { dims.k } else { dims.l },
            })
            .stage(Stage::Config);
        }
        let lean = match p.rdm_mode {
            RdmMode::Dense => false,
            RdmMode::Lean => true,
            RdmMode::Auto => dense_map_bytes(upa.len(), n_r, n_d) as u64 > p.dense_budget_bytes,
        };
        let cfar = p.cfar.build().stage(Stage::Config)?;
        let solvers = build_solvers(config, &upa, &precoder).stage(Stage::Angle)?;
        let match_radius_m = config
            .evaluation
            .match_radius_m
            .unwrap_or_else(|| dims.range_bin_m(n_r));

        let mut scn = Self {
            config: config.clone(),
            dims,
            upa,
            precoder,
            poses,
            truth: Vec::new(),
            n_r,
            n_d,
            cfar,
            solvers,
            match_radius_m,
            lean,
        };
        scn.truth = scn.build_truth().stage(Stage::Config)?;
        scn.warn_out_of_view();
        Ok(scn)
    }

    fn build_truth(&self) -> Result<Vec<TruthPoint>> {
        let cfg = &self.config;
        let mut truth: Vec<TruthPoint> = cfg
            .scene
            .scatterers
            .iter()
            .map(|s| TruthPoint {
                position: Vector3::from(s.position_m),
                velocity: Vector3::from(s.velocity_mps),
                amplitude: s.amplitude,
                hidden_from: s.hidden_from.clone(),
            })
            .collect();
        if !cfg.scene.primitives.is_empty() {
            let seed = derive_seed(cfg.seed, &[stream::SCENE, 0]);
            for p in sample_primitive_points(&cfg.scene.primitives, cfg.scene.density_per_m2, seed)? {
                truth.push(TruthPoint {
                    position: p.position,
                    velocity: p.velocity,
                    amplitude: cfg.scene.primitive_amplitude,
                    hidden_from: Vec::new(),
                });
            }
        }
        if let Some(r) = &cfg.scene.random {
            let seed = derive_seed(cfg.seed, &[stream::SCENE, 1]);
            truth.extend(self.resolvable_random_scene(r, seed)?);
        }
        Ok(truth)
    }

    /// Fractional (range bin, signed Doppler bin) of a global point at BS `j`.
    fn rd_bins(&self, j: usize, pos: &Vector3<f64>, vel: &Vector3<f64>) -> (f64, f64, Scatterer) {
        let pose = &self.poses[j];
        let s = Scatterer::from_local(
            &pose.to_local(pos),
            &pose.vector_to_local(vel),
            Complex64::new(0.0, 0.0),
        );
        (
            s.range_m / self.dims.range_bin_m(self.n_r),
            s.radial_velocity_mps / self.dims.velocity_bin_mps(self.n_d),
            s,
        )
    }

    /// Whether a local direction lies on the coarse grid, `margin_deg` away
    /// from every edge that is not a natural bound, and is not resolved onto
    /// its elevation mirror (ties go to the lower, negative elevation).
    fn in_view(&self, s: &Scatterer, margin_deg: f64) -> bool {
        let sv = &self.config.processing.solver;
        let (t, p) = (s.angle.theta_deg(), s.angle.phi_deg());
        let within = |x: f64, [lo, hi]: [f64; 2], bound: f64| {
            let lo = if lo <= -bound { lo } else { lo + margin_deg };
            let hi = if hi >= bound { hi } else { hi - margin_deg };
            x >= lo && x <= hi
        };
        let on_grid = |p: f64| within(p, sv.coarse_phi_deg, 90.0);
        within(t, sv.coarse_theta_deg, 180.0) && on_grid(p) && (p <= 0.0 || !on_grid(-p))
    }

    /// Power gain of the antenna sum toward a local direction, relative to
    /// broadside.
    fn sum_beam_gain(&self, s: &Scatterer) -> f64 {
        let a = steering_vector(&self.upa, &s.angle);
        let n = self.upa.len() as f64;
        a.values.iter().sum::<Complex64>().norm_sqr() / (n * n)
    }

    /// Rejection sampling: points uniform in the region, horizontal velocity
    /// with uniform heading and speed, accepted only if every BS sees them
    /// inside its angular grid, optionally above a sum-beam gain floor, and at least
    /// `min_bin_separation` range-Doppler bins (Chebyshev) from every point
    /// accepted so far.
    fn resolvable_random_scene(&self, r: &RandomSceneSection, seed: u64) -> Result<Vec<TruthPoint>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<TruthPoint> = Vec::with_capacity(r.count);
        let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); self.poses.len()];
        let vmax = self.dims.max_unambiguous_velocity_mps();
        let n_d = self.n_d as f64;
        let min_gain = r.min_array_gain_db.map(|db| 10f64.powf(db / 10.0));
        let mut attempts = 0;
        while out.len() < r.count && attempts < r.max_attempts {
            attempts += 1;
            let pos = Vector3::from_fn(|i, _| {
                let (lo, hi) = (r.region_min_m[i], r.region_max_m[i]);
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            });
            let speed = r.max_speed_mps * rng.random::<f64>();
            let heading = rng.random_range(0.0..2.0 * PI);
            let vel = Vector3::new(speed * heading.cos(), speed * heading.sin(), 0.0);
            let amp_db = if r.amplitude_db[1] > r.amplitude_db[0] {
                rng.random_range(r.amplitude_db[0]..r.amplitude_db[1])
            } else {
                r.amplitude_db[0]
            };
            let here: Vec<(f64, f64, Scatterer)> =
                (0..self.poses.len()).map(|j| self.rd_bins(j, &pos, &vel)).collect();
            let ok = here.iter().enumerate().all(|(j, (m, n, s))| {
                self.in_view(s, r.fov_margin_deg)
                    && min_gain.is_none_or(|g| self.sum_beam_gain(s) >= g)
                    && s.radial_velocity_mps.abs() < vmax
                    && bins[j].iter().all(|(m2, n2)| {
                        let dn = (n - n2).rem_euclid(n_d);
                        let dn = dn.min(n_d - dn);
                        (m - m2).abs().max(dn) >= r.min_bin_separation
                    })
            });
            if ok {
                for (j, (m, n, _)) in here.iter().enumerate() {
                    bins[j].push((*m, *n));
                }
                out.push(TruthPoint {
                    position: pos,
                    velocity: vel,
                    amplitude: 10f64.powf(amp_db / 20.0),
                    hidden_from: Vec::new(),
                });
            }
        }
        if out.len() < r.count {
            return Err(Error::InvalidScene(format!(
                "placed only {} of {} resolvable scatterers in {} attempts",
                out.len(),
                r.count,
                r.max_attempts
            )));
        }
        info!("random scene: {} scatterers after {attempts} draws", out.len());
        Ok(out)
    }

    fn warn_out_of_view(&self) {
        for (j, _) in self.poses.iter().enumerate() {
            let outside = self
                .truth
                .iter()
                .filter(|t| t.visible_to(j))
                .filter(|t| !self.in_view(&self.rd_bins(j, &t.position, &t.velocity).2, 0.0))
                .count();
            if outside > 0 {
                warn!("BS {j}: {outside} scatterers lie outside the angular search grid");
            }
        }
    }

    pub fn truth_positions(&self) -> Vec<Vector3<f64>> {
        self.truth.iter().map(|t| t.position).collect()
    }

    /// BS-local scene for one trial; gain phases are drawn per (BS, trial).
    pub fn local_scene(&self, bs: usize, trial: usize) -> ScatterScene {
        let pose = &self.poses[bs];
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[stream::GAINS, bs as u64, trial as u64]));
        let scatterers = self
            .truth
            .iter()
            .filter_map(|t| {
                let gain = Complex64::from_polar(t.amplitude, rng.random_range(0.0..2.0 * PI));
                t.visible_to(bs).then(|| {
                    Scatterer::from_local(&pose.to_local(&t.position), &pose.vector_to_local(&t.velocity), gain)
                })
            })
            .collect();
        ScatterScene::new(scatterers)
    }

    /// Simulate one BS and form its range-Doppler map.
    pub fn observe(&self, bs: usize, snr_index: usize, snr_db: f64, trial: usize) -> Result<RangeDopplerMap> {
        let seed = self.config.seed;
        let (b, s, t) = (bs as u64, snr_index as u64, trial as u64);
        let tx = fill_grid(&self.dims, derive_seed(seed, &[stream::SYMBOLS, b, t]));
        let scene = self.local_scene(bs, trial);
        let noise_seed = derive_seed(seed, &[stream::NOISE, b, s, t]);
        let rx = synthesize_echo(&tx, &self.upa, &self.precoder, &scene, snr_db, noise_seed)
            .stage(Stage::Echo)?;
        let est = estimate_channel_owned(rx, &tx).stage(Stage::RangeDoppler)?;
        if self.lean {
            compute_rdm_lean(Arc::new(est), self.n_r, self.n_d)
        } else {
            compute_rdm(&est, self.n_r, self.n_d)
        }
        .stage(Stage::RangeDoppler)
    }

    pub fn detect(&self, map: &RangeDopplerMap) -> Result<Vec<RdPeak>> {
        oscfar_detect(map, &self.cfar).stage(Stage::Cfar)
    }
}

fn build_solvers(cfg: &ScenarioConfig, upa: &UpaConfig, w: &[Complex64]) -> Result<Vec<AngleSolver>> {
    let sv = &cfg.processing.solver;
    let coarse = AngularGrid::lattice(
        (sv.coarse_theta_deg[0], sv.coarse_theta_deg[1]),
        (sv.coarse_phi_deg[0], sv.coarse_phi_deg[1]),
        (sv.coarse_step_deg[0], sv.coarse_step_deg[1]),
    )?;
    sv.kinds
        .iter()
        .map(|kind| match kind {
            SolverKind::Zoom => Ok(AngleSolver::Zoom(ZoomOmp::new(
                *upa,
                w.to_vec(),
                &coarse,
                (sv.fine_step_deg[0], sv.fine_step_deg[1]),
                (sv.zoom_halfwidth_deg[0], sv.zoom_halfwidth_deg[1]),
            )?)),
            SolverKind::Full => {
                let grid = match sv.full_grid {
                    FullGrid::Coarse => coarse.clone(),
                    FullGrid::Fine => AngularGrid::lattice(
                        (sv.coarse_theta_deg[0], sv.coarse_theta_deg[1]),
                        (sv.coarse_phi_deg[0], sv.coarse_phi_deg[1]),
                        (sv.fine_step_deg[0], sv.fine_step_deg[1]),
                    )?,
                };
                Ok(AngleSolver::Full(crate::angle::build_dictionary(upa, w, &grid)?))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep every integrated map for `--dump-rdm`.
    pub dump_rdm: bool,
}

/// Result of one (solver, SNR, trial) unit.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub solver: SolverKind,
    pub snr_index: usize,
    pub snr_db: f64,
    pub trial: usize,
    /// BS-local clouds, indexed by BS.
    pub local_clouds: Vec<PointCloud4D>,
    pub fused: PointCloud4D,
    pub report: Option<MetricReport>,
    pub correlation_count: u64,
    pub peak_count: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RdmDump {
    pub bs: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub power: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub match_radius_m: f64,
    pub truth: Vec<TruthPoint>,
    pub rows: Vec<RunRow>,
    pub rdm_dumps: Vec<RdmDump>,
}

struct BsOutcome {
    per_solver: Vec<(Vec<Detection>, u64)>,
    peak_count: usize,
    dump: Option<Array2<f64>>,
}

fn process_bs(scn: &Scenario, bs: usize, snr_index: usize, snr_db: f64, trial: usize, keep_map: bool) -> Result<BsOutcome> {
    let map = scn.observe(bs, snr_index, snr_db, trial)?;
    let peaks = scn.detect(&map)?;
    let n_target = scn.config.processing.n_target;
    let per_solver = scn
        .solvers
        .iter()
        .map(|solver| {
            let est = estimate_angles(&map, &peaks, solver, n_target).stage(Stage::Angle)?;
            Ok((est.detections, est.correlation_count))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BsOutcome {
        per_solver,
        peak_count: peaks.len(),
        dump: keep_map.then(|| map.integrated.clone()),
    })
}

/// Run all BSs for one (SNR, trial) and score every solver.
pub fn run_unit(
    scn: &Scenario,
    snr_index: usize,
    snr_db: f64,
    trial: usize,
    keep_maps: bool,
) -> Result<(Vec<RunRow>, Vec<RdmDump>)> {
    let bs_ids: Vec<usize> = (0..scn.poses.len()).collect();
    let outcomes: Vec<BsOutcome> = if scn.lean {
        bs_ids
            .iter()
            .map(|&j| process_bs(scn, j, snr_index, snr_db, trial, keep_maps))
            .collect::<Result<_>>()?
    } else {
        bs_ids
            .par_iter()
            .map(|&j| process_bs(scn, j, snr_index, snr_db, trial, keep_maps))
            .collect::<Result<_>>()?
    };

    let gt = scn.truth_positions();
    let mut rows = Vec::with_capacity(scn.solvers.len());
    for (si, solver) in scn.solvers.iter().enumerate() {
        let per_bs: Vec<(BsPose, Vec<Detection>)> = outcomes
            .iter()
            .zip(&scn.poses)
            .map(|(o, pose)| (*pose, o.per_solver[si].0.clone()))
            .collect();
        let local_clouds = per_bs.iter().map(|(pose, d)| local_cloud(d, pose.bs_id)).collect();
        let fused = fuse(&per_bs).stage(Stage::Fusion)?;
        let pred = fused.positions();
        let (report, warning) = if gt.is_empty() || pred.is_empty() {
            let msg = if pred.is_empty() {
                "empty predicted cloud"
            } else {
                "empty ground truth"
            };
            warn!("{} snr {snr_db} trial {trial}: {msg}", solver.kind());
            (None, Some(msg.to_string()))
        } else {
            let r = precision_recall_f(&gt, &pred, scn.match_radius_m).stage(Stage::Metrics)?;
            (Some(r), None)
        };
        rows.push(RunRow {
            solver: solver.kind(),
            snr_index,
            snr_db,
            trial,
            local_clouds,
            fused,
            report,
            correlation_count: outcomes.iter().map(|o| o.per_solver[si].1).sum(),
            peak_count: outcomes.iter().map(|o| o.peak_count).sum(),
            warning,
        });
    }
    let dumps = outcomes
        .into_iter()
        .enumerate()
        .filter_map(|(bs, o)| {
            o.dump.map(|power| RdmDump {
                bs,
                snr_db,
                trial,
                power,
            })
        })
        .collect();
    Ok((rows, dumps))
}

/// Execute every (SNR, trial) unit of a scenario without writing files.
pub fn execute(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    let scn = Scenario::prepare(cfg)?;
    execute_prepared(&scn, opts)
}

pub fn execute_prepared(scn: &Scenario, opts: &RunOptions) -> Result<RunArtifacts> {
    let cfg = &scn.config;
    let units: Vec<(usize, f64, usize)> = cfg
        .evaluation
        .snr_db
        .iter()
        .enumerate()
        .flat_map(|(si, &snr)| (0..cfg.evaluation.trials).map(move |t| (si, snr, t)))
        .collect();
    info!(
        "running {} units x {} BSs ({} RDM, N_R = {}, N_D = {})",
        units.len(),
        scn.poses.len(),
        if scn.lean { "lean" } else { "dense" },
        scn.n_r,
        scn.n_d
    );
    let results: Vec<(Vec<RunRow>, Vec<RdmDump>)> = if scn.lean {
        units
            .iter()
            .map(|&(si, snr, t)| run_unit(scn, si, snr, t, opts.dump_rdm))
            .collect::<Result<_>>()?
    } else {
        units
            .par_iter()
            .map(|&(si, snr, t)| run_unit(scn, si, snr, t, opts.dump_rdm))
            .collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    let mut rdm_dumps = Vec::new();
    for (r, d) in results {
        rows.extend(r);
        rdm_dumps.extend(d);
    }
    rows.sort_by(|a, b| {
        (a.solver, a.snr_index, a.trial).cmp(&(b.solver, b.snr_index, b.trial))
    });
    Ok(RunArtifacts {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        match_radius_m: scn.match_radius_m,
        truth: scn.truth.clone(),
        rows,
        rdm_dumps,
    })
}
