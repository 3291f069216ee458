//! Scatterer scenes and frequency-domain echo synthesis.
//!
//! Each BS sees its scene in its own local frame. The received grid at
//! antenna `pq` is
//!
//! ```text
//! Y_pq[k, l] = sum_i alpha_i a_Rx,pq(th_i, ph_i) (a_Tx(th_i, ph_i)^H w) s[k, l]
//!              * exp(-j 2 pi k df 2 R_i / c) * exp(+j 2 pi (2 v_i / lambda) l T_s)
//!              + n_pq[k, l]
//! ```
//!
//! with positive `v_i` meaning an approaching scatterer.

use log::warn;
use nalgebra::Vector3;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::array_geometry::{cartesian_to_range_angle, effective_steering, Angle, UpaConfig};
use crate::constants::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::nr_grid::{GridDims, ResourceGrid};
use crate::pipeline::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub range_m: f64,
    pub angle: Angle,
    /// Positive when approaching the BS.
    pub radial_velocity_mps: f64,
    pub gain: Complex64,
}

impl Scatterer {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_m.is_finite() && self.range_m >= 0.0) {
            return Err(Error::InvalidScene(format!(
                "range must be finite and >= 0, got {}",
                self.range_m
            )));
        }
        if !self.radial_velocity_mps.is_finite() || !self.gain.re.is_finite() || !self.gain.im.is_finite()
        {
            return Err(Error::InvalidScene("non-finite velocity or gain".into()));
        }
        self.angle.validate()
    }

    /// Build a scatterer from a BS-local Cartesian position and velocity.
    pub fn from_local(position: &Vector3<f64>, velocity: &Vector3<f64>, gain: Complex64) -> Self {
        let (range_m, angle) = cartesian_to_range_angle(position);
        let radial_velocity_mps = if range_m > 0.0 {
            -velocity.dot(position) / range_m
        } else {
            0.0
        };
        Self {
            range_m,
            angle,
            radial_velocity_mps,
            gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SceneFrame {
    #[default]
    BsLocal,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScatterScene {
    pub scatterers: Vec<Scatterer>,
    pub frame: SceneFrame,
}

impl ScatterScene {
    pub fn new(scatterers: Vec<Scatterer>) -> Self {
        Self {
            scatterers,
            frame: SceneFrame::BsLocal,
        }
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }
}

/// Per-antenna received grids `Y_pq` (each K x L), vertical-major antenna order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedGrid {
    pub per_antenna: Vec<Array2<Complex64>>,
    pub snr_db: f64,
    pub noise_seed: u64,
}

/// Noise variance per resource element and receive antenna:
/// `sigma^2 = PQ / SNR_linear` (unit symbols, unit-gain scatterer, matched beam).
pub fn noise_variance(cfg: &UpaConfig, snr_db: f64) -> f64 {
    cfg.len() as f64 / 10f64.powf(snr_db / 10.0)
}

/// Synthesize the received grids. `snr_db = +inf` disables noise.
pub fn synthesize_echo(
    grid: &ResourceGrid,
    cfg: &UpaConfig,
    w: &[Complex64],
    scene: &ScatterScene,
    snr_db: f64,
    seed: u64,
) -> Result<ReceivedGrid> {
    cfg.validate()?;
    if w.len() != cfg.len() {
        return Err(Error::DimensionMismatch {
            what: "precoder length",
            expected: cfg.len(),
            got: w.len(),
        });
    }
    let dims = &grid.dims;
    if grid.symbols.dim() != (dims.k, dims.l) {
        return Err(Error::DimensionMismatch {
            what: "resource grid subcarriers",
            expected: dims.k,
            got: grid.symbols.nrows(),
        });
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidScene(format!("SNR must be a number, got {snr_db}")));
    }
    let vmax = dims.max_unambiguous_velocity_mps();
    for s in &scene.scatterers {
        s.validate()?;
        if s.radial_velocity_mps.abs() >= vmax {
            warn!(
                "radial velocity {:.2} m/s exceeds unambiguous limit {:.2} m/s",
                s.radial_velocity_mps, vmax
            );
        }
    }

    let terms = scatterer_terms(dims, cfg, w, scene)?;
    let sigma2 = if snr_db == f64::INFINITY {
        0.0
    } else {
        noise_variance(cfg, snr_db)
    };

    let per_antenna = (0..cfg.len())
        .into_par_iter()
        .map(|ant| {
            let mut y = antenna_echo(dims, &terms, ant);
            y.zip_mut_with(&grid.symbols, |y, s| *y *= s);
            if sigma2 > 0.0 {
                add_noise(&mut y, sigma2, derive_seed(seed, &[ant as u64]));
            }
            y
        })
        .collect();

    Ok(ReceivedGrid {
        per_antenna,
        snr_db,
        noise_seed: seed,
    })
}

struct ScattererTerms {
    /// Spatial gain `alpha * b(theta, phi)` per antenna, one row per scatterer.
    spatial: Vec<Vec<Complex64>>,
    range_phase: Vec<Vec<Complex64>>,
    doppler_phase: Vec<Vec<Complex64>>,
}

fn scatterer_terms(
    dims: &GridDims,
    cfg: &UpaConfig,
    w: &[Complex64],
    scene: &ScatterScene,
) -> Result<ScattererTerms> {
    let n = scene.len();
    let mut spatial = Vec::with_capacity(n);
    let mut range_phase = Vec::with_capacity(n);
    let mut doppler_phase = Vec::with_capacity(n);
    for s in &scene.scatterers {
        let b = effective_steering(cfg, &s.angle, w)?;
        spatial.push(b.into_iter().map(|x| x * s.gain).collect());
        let tau = 2.0 * s.range_m / SPEED_OF_LIGHT;
        let df = dims.scs_hz();
        range_phase.push(
            (0..dims.k)
                .map(|k| Complex64::cis(-2.0 * PI * k as f64 * df * tau))
                .collect(),
        );
        let fd = 2.0 * s.radial_velocity_mps / dims.wavelength_m;
        let ts = dims.symbol_duration_s;
        doppler_phase.push(
            (0..dims.l)
                .map(|l| Complex64::cis(2.0 * PI * fd * l as f64 * ts))
                .collect(),
        );
    }
    Ok(ScattererTerms {
        spatial,
        range_phase,
        doppler_phase,
    })
}

fn antenna_echo(dims: &GridDims, terms: &ScattererTerms, ant: usize) -> Array2<Complex64> {
    let mut y = Array2::<Complex64>::zeros((dims.k, dims.l));
    let n = terms.spatial.len();
    let mut coeff = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..dims.k {
        for (i, c) in coeff.iter_mut().enumerate() {
            *c = terms.spatial[i][ant] * terms.range_phase[i][k];
        }
        let mut row = y.row_mut(k);
        for (i, c) in coeff.iter().enumerate() {
            let d = &terms.doppler_phase[i];
            for (yl, dl) in row.iter_mut().zip(d) {
                *yl += c * dl;
            }
        }
    }
    y
}

fn add_noise(y: &mut Array2<Complex64>, sigma2: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = (sigma2 / 2.0).sqrt();
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re * std, im * std);
    }
}

/// Surface primitive used to build extended scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Parallelogram `origin + a * edge_u + b * edge_v`, `a, b` in `[0, 1]`.
    Rectangle {
        origin: [f64; 3],
        edge_u: [f64; 3],
        edge_v: [f64; 3],
        #[serde(default)]
        velocity: [f64; 3],
    },
    /// Axis-aligned box surface.
    #[serde(rename = "box")]
    AaBox {
        min: [f64; 3],
        max: [f64; 3],
        #[serde(default)]
        velocity: [f64; 3],
    },
}

/// A sampled surface point together with the velocity of its primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

struct Face {
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
}

impl Primitive {
    fn faces(&self) -> Vec<Face> {
        match self {
            Primitive::Rectangle {
                origin,
                edge_u,
                edge_v,
                ..
            } => vec![Face {
                origin: Vector3::from(*origin),
                u: Vector3::from(*edge_u),
                v: Vector3::from(*edge_v),
            }],
            Primitive::AaBox { min, max, .. } => {
                let lo = Vector3::from(*min);
                let hi = Vector3::from(*max);
                let ext = hi - lo;
                let ex = Vector3::new(ext.x, 0.0, 0.0);
                let ey = Vector3::new(0.0, ext.y, 0.0);
                let ez = Vector3::new(0.0, 0.0, ext.z);
                vec![
                    Face { origin: lo, u: ex, v: ey },
                    Face { origin: lo + ez, u: ex, v: ey },
                    Face { origin: lo, u: ex, v: ez },
                    Face { origin: lo + ey, u: ex, v: ez },
                    Face { origin: lo, u: ey, v: ez },
                    Face { origin: lo + ex, u: ey, v: ez },
                ]
            }
        }
    }

    fn velocity(&self) -> Vector3<f64> {
        match self {
            Primitive::Rectangle { velocity, .. } | Primitive::AaBox { velocity, .. } => {
                Vector3::from(*velocity)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Primitive::AaBox { min, max, .. } => {
                if min.iter().zip(max).any(|(a, b)| !(a <= b)) {
                    return Err(Error::InvalidScene(format!(
                        "box min {min:?} exceeds max {max:?}"
                    )));
                }
            }
            Primitive::Rectangle { origin, edge_u, edge_v, .. } => {
                if origin.iter().chain(edge_u).chain(edge_v).any(|x| !x.is_finite()) {
                    return Err(Error::InvalidScene("non-finite rectangle".into()));
                }
            }
        }
        Ok(())
    }
}

/// Sample points uniformly on primitive surfaces, `round(area * density)`
/// points per face. Points stay in the frame the primitives are given in.
pub fn sample_primitive_points(
    prims: &[Primitive],
    density: f64,
    seed: u64,
) -> Result<Vec<SurfacePoint>> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::InvalidScene(format!(
            "density must be positive, got {density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for prim in prims {
        prim.validate()?;
        let velocity = prim.velocity();
        for face in prim.faces() {
            let area = face.u.cross(&face.v).norm();
            let count = (area * density).round() as usize;
            for _ in 0..count {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                out.push(SurfacePoint {
                    position: face.origin + face.u * a + face.v * b,
                    velocity,
                });
            }
        }
    }
    Ok(out)
}

/// Sample a BS-local scene from primitives given in the BS-local frame.
/// Gains are unit-magnitude with uniformly random phase.
pub fn sample_scene_from_primitives(
    prims: &[Primitive],
    density: f64,
    seed: u64,
) -> Result<ScatterScene> {
    let points = sample_primitive_points(prims, density, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x6761_696e]));
    let scatterers = points
        .iter()
        .map(|p| {
            let gain = Complex64::cis(rng.random_range(0.0..2.0 * PI));
            Scatterer::from_local(&p.position, &p.velocity, gain)
        })
        .collect();
    Ok(ScatterScene::new(scatterers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::{matched_precoder, steering_vector};
    use crate::nr_grid::{fill_grid, make_grid_dims, make_numerology, CpMode};
    use std::f64::consts::FRAC_PI_2;

    fn small_dims() -> GridDims {
        let num = make_numerology(3, CpMode::Normal).unwrap();
        make_grid_dims(num, 2, 1, 26e9).unwrap()
    }

    fn upa() -> UpaConfig {
        UpaConfig::new(2, 2, 0.5).unwrap()
    }

    fn one(range_m: f64, theta: f64, phi: f64, v: f64) -> Scatterer {
        Scatterer {
            range_m,
            angle: Angle::new(theta, phi).unwrap(),
            radial_velocity_mps: v,
            gain: Complex64::new(1.0, 0.0),
        }
    }

    #[test]
    fn empty_scene_noiseless_is_zero() {
        let dims = small_dims();
        let grid = fill_grid(&dims, 3);
        let cfg = upa();
        let w = matched_precoder(&cfg, &Angle::new(0.0, 0.0).unwrap());
        let rx = synthesize_echo(&grid, &cfg, &w, &ScatterScene::default(), f64::INFINITY, 0)
            .unwrap();
        assert_eq!(rx.per_antenna.len(), 4);
        assert!(rx
            .per_antenna
            .iter()
            .all(|y| y.iter().all(|v| *v == Complex64::new(0.0, 0.0))));
    }

    #[test]
    fn broadside_zero_range_is_scaled_symbols() {
        let dims = small_dims();
        let grid = fill_grid(&dims, 3);
        let cfg = upa();
        let ang = Angle::new(0.0, FRAC_PI_2).unwrap();
        let w = matched_precoder(&cfg, &ang);
        let scene = ScatterScene::new(vec![one(0.0, 0.0, FRAC_PI_2, 0.0)]);
        let rx = synthesize_echo(&grid, &cfg, &w, &scene, f64::INFINITY, 0).unwrap();
        let gain = (cfg.len() as f64).sqrt();
        for y in &rx.per_antenna {
            for (v, s) in y.iter().zip(grid.symbols.iter()) {
                assert!((v - s * gain).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_scatterer_matches_direct_formula() {
        let dims = small_dims();
        let grid = fill_grid(&dims, 9);
        let cfg = upa();
        let w = matched_precoder(&cfg, &Angle::new(0.1, -0.2).unwrap());
        let s = Scatterer {
            range_m: 17.3,
            angle: Angle::new(0.4, -0.3).unwrap(),
            radial_velocity_mps: -12.0,
            gain: Complex64::from_polar(0.7, 1.1),
        };
        let rx = synthesize_echo(&grid, &cfg, &w, &ScatterScene::new(vec![s]), f64::INFINITY, 0)
            .unwrap();
        let a = steering_vector(&cfg, &s.angle).values;
        let tx: Complex64 = a.iter().zip(&w).map(|(a, w)| a.conj() * w).sum();
        let tau = 2.0 * s.range_m / SPEED_OF_LIGHT;
        let fd = 2.0 * s.radial_velocity_mps / dims.wavelength_m;
        for (pq, y) in rx.per_antenna.iter().enumerate() {
            for k in 0..dims.k {
                for l in 0..dims.l {
                    let expected = s.gain
                        * a[pq]
                        * tx
                        * grid.symbols[[k, l]]
                        * Complex64::cis(-2.0 * PI * k as f64 * dims.scs_hz() * tau)
                        * Complex64::cis(2.0 * PI * fd * l as f64 * dims.symbol_duration_s);
                    assert!((y[[k, l]] - expected).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn superposition_and_doppler_conjugation() {
        let dims = small_dims();
        let grid = fill_grid(&dims, 4);
        let cfg = upa();
        let w = matched_precoder(&cfg, &Angle::new(0.0, 0.0).unwrap());
        let a = one(12.0, 0.3, -0.1, 7.0);
        let b = one(30.0, -0.5, -0.4, -3.0);
        let synth = |sc: Vec<Scatterer>| {
            synthesize_echo(&grid, &cfg, &w, &ScatterScene::new(sc), f64::INFINITY, 0).unwrap()
        };
        let ya = synth(vec![a]);
        let yb = synth(vec![b]);
        let yab = synth(vec![a, b]);
        for i in 0..cfg.len() {
            let sum = &ya.per_antenna[i] + &yb.per_antenna[i];
            assert!(sum
                .iter()
                .zip(yab.per_antenna[i].iter())
                .all(|(x, y)| (x - y).norm() < 1e-12));
        }

        // Zero range isolates the Doppler ramp; negating v conjugates it.
        let pos = one(0.0, 0.0, FRAC_PI_2, 9.0);
        let neg = one(0.0, 0.0, FRAC_PI_2, -9.0);
        let yp = synth(vec![pos]);
        let yn = synth(vec![neg]);
        let (hp, hn) = (&yp.per_antenna[0], &yn.per_antenna[0]);
        for ((p, n), s) in hp.iter().zip(hn.iter()).zip(grid.symbols.iter()) {
            assert!(((p / s).conj() - n / s).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_matches_snr() {
        let num = make_numerology(3, CpMode::Normal).unwrap();
        let dims = make_grid_dims(num, 100, 1, 26e9).unwrap(); // 1200 x 112 REs
        let grid = fill_grid(&dims, 1);
        let cfg = upa();
        let w = matched_precoder(&cfg, &Angle::new(0.0, 0.0).unwrap());
        let rx = synthesize_echo(&grid, &cfg, &w, &ScatterScene::default(), 10.0, 77).unwrap();
        let expected = noise_variance(&cfg, 10.0);
        for y in &rx.per_antenna {
            assert!(y.len() >= 100_000);
            let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
            assert!((var / expected - 1.0).abs() < 0.05, "var {var} vs {expected}");
        }
        let again = synthesize_echo(&grid, &cfg, &w, &ScatterScene::default(), 10.0, 77).unwrap();
        assert_eq!(rx, again);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dims = small_dims();
        let grid = fill_grid(&dims, 1);
        let cfg = upa();
        let w = vec![Complex64::new(1.0, 0.0); 3];
        assert!(synthesize_echo(&grid, &cfg, &w, &ScatterScene::default(), 0.0, 0).is_err());
        let w = vec![Complex64::new(0.5, 0.0); 4];
        assert!(synthesize_echo(&grid, &cfg, &w, &ScatterScene::default(), f64::NAN, 0).is_err());
        let bad = ScatterScene::new(vec![Scatterer {
            range_m: -1.0,
            ..one(0.0, 0.0, 0.0, 0.0)
        }]);
        assert!(synthesize_echo(&grid, &cfg, &w, &bad, 0.0, 0).is_err());
    }

    #[test]
    fn rectangle_sampling_count_and_determinism() {
        let rect = Primitive::Rectangle {
            origin: [5.0, -0.5, -0.5],
            edge_u: [0.0, 1.0, 0.0],
            edge_v: [0.0, 0.0, 1.0],
            velocity: [0.0; 3],
        };
        let s1 = sample_scene_from_primitives(&[rect.clone()], 100.0, 11).unwrap();
        assert_eq!(s1.len(), 100);
        let s2 = sample_scene_from_primitives(&[rect], 100.0, 11).unwrap();
        assert_eq!(s1, s2);
        assert!(sample_scene_from_primitives(&[], 10.0, 0).unwrap().is_empty());
    }

    #[test]
    fn box_surface_count() {
        let b = Primitive::AaBox {
            min: [0.0, 0.0, 0.0],
            max: [2.0, 1.0, 1.0],
            velocity: [0.0; 3],
        };
        // faces: 2 x (2x1) + 2 x (2x1) + 2 x (1x1) = 10 m^2
        let pts = sample_primitive_points(&[b], 10.0, 0).unwrap();
        assert_eq!(pts.len(), 100);
    }

    #[test]
    fn point_on_axis_maps_to_zero_angles() {
        let s = Scatterer::from_local(
            &Vector3::new(10.0, 0.0, 0.0),
            &Vector3::new(-3.0, 0.0, 0.0),
            Complex64::new(1.0, 0.0),
        );
        assert_eq!(s.range_m, 10.0);
        assert_eq!(s.angle.theta_rad, 0.0);
        assert_eq!(s.angle.phi_rad, 0.0);
        assert_eq!(s.radial_velocity_mps, 3.0);
    }
}
