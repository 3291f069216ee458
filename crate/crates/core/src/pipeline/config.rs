//! Scenario configuration.
//!
//! Configs are TOML. A run's effective configuration is built by layering
//! tables: built-in defaults, then an optional bundled profile (`desk` or
//! `table1`), then the user file. Nested tables merge key by key; arrays and
//! scalars replace. The merged document is deserialized with field-path
//! diagnostics and then validated.
//!
//! BS poses give the array position in global meters and the orientation as
//! yaw/pitch/roll in degrees, applied as `R = Rz(yaw) Ry(pitch) Rx(roll)`.
//! The local frame has x along the array broadside, y along the horizontal
//! array axis and z up.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::angle::SolverKind;
use crate::array_geometry::{Precoder, UpaConfig};
use crate::error::{Error, Result};
use crate::nr_grid::CpMode;
use crate::range_doppler::CfarConfig;
use crate::scene::Primitive;

pub const DESK_PROFILE: &str = include_str!("../../configs/desk.cfg");
pub const TABLE1_PROFILE: &str = include_str!("../../configs/table1.cfg");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    pub seed: u64,
    pub grid: GridSection,
    pub array: ArraySection,
    pub bs: Vec<BsSection>,
    pub scene: SceneSection,
    pub processing: ProcessingSection,
    pub evaluation: EvaluationSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            profile: None,
            seed: 0,
            grid: GridSection::default(),
            array: ArraySection::default(),
            bs: vec![BsSection::default()],
            scene: SceneSection::default(),
            processing: ProcessingSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub mu: i64,
    pub n_rb: usize,
    pub n_subframes: usize,
    pub carrier_hz: f64,
    pub cp: CpMode,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            mu: 3,
            n_rb: 264,
            n_subframes: 2,
            carrier_hz: 26e9,
            cp: CpMode::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub p: usize,
    pub q: usize,
    pub d_over_lambda: f64,
    pub precoder: Precoder,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            p: 8,
            q: 8,
            d_over_lambda: 0.5,
            precoder: Precoder::SingleElement,
        }
    }
}

impl ArraySection {
    pub fn upa(&self) -> Result<UpaConfig> {
        UpaConfig::new(self.p, self.q, self.d_over_lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsSection {
    pub position_m: [f64; 3],
    pub yaw_pitch_roll_deg: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    /// Explicit scatterers in the global frame.
    pub scatterers: Vec<ScattererSection>,
    /// Surface primitives in the global frame.
    pub primitives: Vec<Primitive>,
    /// Surface sampling density for primitives, points per square meter.
    pub density_per_m2: f64,
    /// Amplitude of primitive surface points.
    pub primitive_amplitude: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSceneSection>,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            scatterers: Vec::new(),
            primitives: Vec::new(),
            density_per_m2: 1.0,
            primitive_amplitude: 1.0,
            random: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScattererSection {
    pub position_m: [f64; 3],
    pub velocity_mps: [f64; 3],
    pub amplitude: f64,
    /// Indices of BSs that do not see this scatterer.
    pub hidden_from: Vec<usize>,
}

impl Default for ScattererSection {
    fn default() -> Self {
        Self {
            position_m: [0.0; 3],
            velocity_mps: [0.0; 3],
            amplitude: 1.0,
            hidden_from: Vec::new(),
        }
    }
}

/// Randomly drawn scatterers that are resolvable in range-Doppler at every BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomSceneSection {
    pub count: usize,
    pub region_min_m: [f64; 3],
    pub region_max_m: [f64; 3],
    pub max_speed_mps: f64,
    /// Amplitude range in dB, drawn uniformly.
    pub amplitude_db: [f64; 2],
    /// Minimum Chebyshev distance between any two scatterers in (padded)
    /// range-Doppler bins, at every BS.
    pub min_bin_separation: f64,
    /// Margin kept from the edges of the coarse angular grid, degrees.
    pub fov_margin_deg: f64,
    /// Minimum antenna-sum power gain toward the point, dB relative to
    /// broadside, at every BS.
    pub min_array_gain_db: Option<f64>,
    pub max_attempts: usize,
}

impl Default for RandomSceneSection {
    fn default() -> Self {
        Self {
            count: 20,
            region_min_m: [-10.0, -10.0, 0.0],
            region_max_m: [10.0, 10.0, 2.0],
            max_speed_mps: 0.0,
            amplitude_db: [0.0, 0.0],
            min_bin_separation: 4.0,
            fov_margin_deg: 2.0,
            min_array_gain_db: None,
            max_attempts: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RdmMode {
    /// Dense unless the per-antenna maps would exceed the memory budget.
    Auto,
    Dense,
    Lean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FullGrid {
    /// Full OMP over the coarse grid (the baseline of the SNR sweep).
    Coarse,
    /// Full OMP over the global fine lattice.
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_d: Option<usize>,
    /// Atoms recovered per peak.
    pub n_target: usize,
    pub rdm_mode: RdmMode,
    pub dense_budget_bytes: u64,
    pub cfar: CfarSection,
    pub solver: SolverSection,
}

impl Default for ProcessingSection {
    fn default() -> Self {
        Self {
            n_r: None,
            n_d: None,
            n_target: 1,
            rdm_mode: RdmMode::Auto,
            dense_budget_bytes: 1 << 30,
            cfar: CfarSection::default(),
            solver: SolverSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfarSection {
    pub guard_cells: [usize; 2],
    pub training_cells: [usize; 2],
    pub os_rank_fraction: f64,
    pub design_pfa: f64,
    /// Explicit threshold multiplier; overrides `design_pfa` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_factor: Option<f64>,
    pub min_peak_separation: usize,
}

impl Default for CfarSection {
    fn default() -> Self {
        Self {
            guard_cells: [2, 2],
            training_cells: [8, 4],
            os_rank_fraction: 0.75,
            design_pfa: 1e-4,
            scale_factor: None,
            min_peak_separation: 2,
        }
    }
}

impl CfarSection {
    pub fn build(&self) -> Result<CfarConfig> {
        let guard = (self.guard_cells[0], self.guard_cells[1]);
        let train = (self.training_cells[0], self.training_cells[1]);
        match self.scale_factor {
            Some(scale_factor) => {
                let cfg = CfarConfig {
                    guard_cells: guard,
                    training_cells: train,
                    os_rank_fraction: self.os_rank_fraction,
                    scale_factor,
                    min_peak_separation: self.min_peak_separation,
                };
                cfg.validate()?;
                Ok(cfg)
            }
            None => CfarConfig::for_false_alarm_rate(
                guard,
                train,
                self.os_rank_fraction,
                self.design_pfa,
                self.min_peak_separation,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub kinds: Vec<SolverKind>,
    pub coarse_theta_deg: [f64; 2],
    pub coarse_phi_deg: [f64; 2],
    pub coarse_step_deg: [f64; 2],
    pub fine_step_deg: [f64; 2],
    pub zoom_halfwidth_deg: [f64; 2],
    pub full_grid: FullGrid,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            kinds: vec![SolverKind::Zoom, SolverKind::Full],
            coarse_theta_deg: [-60.0, 60.0],
            coarse_phi_deg: [-30.0, 30.0],
            coarse_step_deg: [5.0, 5.0],
            fine_step_deg: [0.5, 0.5],
            zoom_halfwidth_deg: [5.0, 5.0],
            full_grid: FullGrid::Coarse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// `inf` disables noise.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Defaults to the range-bin size of the active grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_radius_m: Option<f64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            snr_db: vec![10.0],
            trials: 1,
            match_radius_m: None,
        }
    }
}

/// Bundled profile text by name.
pub fn profile_source(name: &str) -> Result<&'static str> {
    match name {
        "desk" => Ok(DESK_PROFILE),
        "table1" => Ok(TABLE1_PROFILE),
        other => Err(Error::config(
            "profile",
            format!("unknown profile `{other}` (expected desk or table1)"),
        )),
    }
}

/// Recursively overlay `top` onto `base`.
pub fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &Path) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

fn defaults_table() -> toml::Table {
    toml::Table::try_from(ScenarioConfig::default()).expect("defaults serialize to TOML")
}

/// Build a config from TOML text layered over the defaults and, if named
/// either by `profile` or by the document's own `profile` key, a bundled
/// profile.
pub fn config_from_str(text: &str, origin: &Path, profile: Option<&str>) -> Result<ScenarioConfig> {
    let user = parse_table(text, origin)?;
    let named = profile
        .map(str::to_owned)
        .or_else(|| user.get("profile").and_then(|v| v.as_str()).map(str::to_owned));
    let mut merged = defaults_table();
    if let Some(name) = &named {
        let src = profile_source(name)?;
        let mut prof = parse_table(src, Path::new(name))?;
        prof.remove("profile");
        merge_tables(&mut merged, prof);
    }
    merge_tables(&mut merged, user);
    if let Some(name) = named {
        merged.insert("profile".into(), toml::Value::String(name));
    }
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(toml::Value::Table(merged))
        .map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, profile: Option<&str>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    config_from_str(&text, path, profile)
}

/// One of the bundled profiles on its own.
pub fn bundled_profile(name: &str) -> Result<ScenarioConfig> {
    config_from_str("", Path::new(name), Some(name))
}

fn check(ok: bool, path: &str, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, msg()))
    }
}

fn finite3(v: &[f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit
        check(self.seed <= i64::MAX as u64, "seed", || format!("must be at most {}, got {}", i64::MAX, self.seed))?;
        let g = &self.grid;
        check((0..=6).contains(&g.mu), "grid.mu", || format!("must be in 0..=6, got {}", g.mu))?;
        check(g.n_rb >= 1, "grid.n_rb", || "must be at least 1".into())?;
        check(g.n_subframes >= 1, "grid.n_subframes", || "must be at least 1".into())?;
        check(g.carrier_hz.is_finite() && g.carrier_hz > 0.0, "grid.carrier_hz", || {
            format!("must be positive, got {}", g.carrier_hz)
        })?;

        let a = &self.array;
        check(a.p >= 1, "array.p", || "must be at least 1".into())?;
        check(a.q >= 1, "array.q", || "must be at least 1".into())?;
        check(a.d_over_lambda.is_finite() && a.d_over_lambda > 0.0, "array.d_over_lambda", || {
            format!("must be positive, got {}", a.d_over_lambda)
        })?;
        if let Precoder::Matched { theta_deg, phi_deg } = a.precoder {
            check(theta_deg.abs() <= 180.0 && phi_deg.abs() <= 90.0, "array.precoder", || {
                format!("boresight ({theta_deg}, {phi_deg}) out of range")
            })?;
        }

        check(!self.bs.is_empty(), "bs", || "at least one BS is required".into())?;
        for (j, bs) in self.bs.iter().enumerate() {
            check(
                finite3(&bs.position_m) && finite3(&bs.yaw_pitch_roll_deg),
                &format!("bs[{j}]"),
                || "non-finite pose".into(),
            )?;
        }

        let s = &self.scene;
        for (i, sc) in s.scatterers.iter().enumerate() {
            let path = format!("scene.scatterers[{i}]");
            check(finite3(&sc.position_m) && finite3(&sc.velocity_mps), &path, || {
                "non-finite position or velocity".into()
            })?;
            check(sc.amplitude.is_finite() && sc.amplitude >= 0.0, &format!("{path}.amplitude"), || {
                format!("must be >= 0, got {}", sc.amplitude)
            })?;
            if let Some(&bad) = sc.hidden_from.iter().find(|&&b| b >= self.bs.len()) {
                return Err(Error::config(
                    format!("{path}.hidden_from"),
                    format!("BS index {bad} out of range (J = {})", self.bs.len()),
                ));
            }
        }
        check(s.density_per_m2.is_finite() && s.density_per_m2 > 0.0, "scene.density_per_m2", || {
            format!("must be positive, got {}", s.density_per_m2)
        })?;
        check(s.primitive_amplitude.is_finite() && s.primitive_amplitude >= 0.0, "scene.primitive_amplitude", || {
            format!("must be >= 0, got {}", s.primitive_amplitude)
        })?;
        if let Some(r) = &s.random {
            let ordered = r.region_min_m.iter().zip(&r.region_max_m).all(|(lo, hi)| lo <= hi);
            check(finite3(&r.region_min_m) && finite3(&r.region_max_m) && ordered, "scene.random.region_min_m", || {
                "region bounds must be finite with min <= max".into()
            })?;
            check(r.max_speed_mps.is_finite() && r.max_speed_mps >= 0.0, "scene.random.max_speed_mps", || {
                "must be >= 0".into()
            })?;
            check(r.amplitude_db[0] <= r.amplitude_db[1], "scene.random.amplitude_db", || {
                "expected [low, high]".into()
            })?;
            check(r.min_bin_separation >= 0.0, "scene.random.min_bin_separation", || {
                "must be >= 0".into()
            })?;
        }

        let p = &self.processing;
        check(p.n_target >= 1, "processing.n_target", || "must be at least 1".into())?;
        p.cfar.build().map_err(|e| Error::config("processing.cfar", e.to_string()))?;
        let sv = &p.solver;
        check(!sv.kinds.is_empty(), "processing.solver.kinds", || "at least one solver".into())?;
        let pos2 = |v: &[f64; 2]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        check(pos2(&sv.coarse_step_deg), "processing.solver.coarse_step_deg", || "must be positive".into())?;
        check(pos2(&sv.fine_step_deg), "processing.solver.fine_step_deg", || "must be positive".into())?;
        check(
            sv.fine_step_deg[0] < sv.coarse_step_deg[0] && sv.fine_step_deg[1] < sv.coarse_step_deg[1],
            "processing.solver.fine_step_deg",
            || "must be smaller than the coarse step".into(),
        )?;
        check(
            2.0 * sv.zoom_halfwidth_deg[0] >= sv.coarse_step_deg[0]
                && 2.0 * sv.zoom_halfwidth_deg[1] >= sv.coarse_step_deg[1],
            "processing.solver.zoom_halfwidth_deg",
            || "window must span at least one coarse step".into(),
        )?;
        check(
            sv.coarse_theta_deg[0] <= sv.coarse_theta_deg[1] && sv.coarse_theta_deg.iter().all(|t| t.abs() <= 180.0),
            "processing.solver.coarse_theta_deg",
            || "expected [low, high] within [-180, 180]".into(),
        )?;
        check(
            sv.coarse_phi_deg[0] <= sv.coarse_phi_deg[1] && sv.coarse_phi_deg.iter().all(|t| t.abs() <= 90.0),
            "processing.solver.coarse_phi_deg",
            || "expected [low, high] within [-90, 90]".into(),
        )?;

        let e = &self.evaluation;
        check(!e.snr_db.is_empty(), "evaluation.snr_db", || "at least one SNR point".into())?;
        check(e.snr_db.iter().all(|s| !s.is_nan() && *s != f64::NEG_INFINITY), "evaluation.snr_db", || {
            "SNR values must be numbers or inf".into()
        })?;
        check(e.trials >= 1, "evaluation.trials", || "must be at least 1".into())?;
        if let Some(r) = e.match_radius_m {
            check(r.is_finite() && r > 0.0, "evaluation.match_radius_m", || format!("must be positive, got {r}"))?;
        }
        Ok(())
    }

    /// Canonical TOML serialization of the resolved configuration.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of [`Self::canonical_toml`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_toml().as_bytes()))
    }
}
