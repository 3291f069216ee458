//! Uniform planar array (UPA) geometry.
//!
//! The array lies in the local X-Y plane with `P` elements along X and `Q`
//! along Y. For a plane wave from azimuth `theta` / elevation `phi` the
//! element `(p, q)` sees the phase
//! `exp(-j 2 pi d/lambda (p cos(phi) cos(theta) + q cos(phi) sin(theta)))`.
//! Vectors are flattened vertical-major, i.e. flat index `q * P + p`, which
//! is the ordering of `a_q (x) a_p`.
//!
//! Only `cos(phi)` enters the phase, so `(theta, phi)` and `(theta, -phi)`
//! produce identical steering vectors: a planar array cannot tell the two
//! sides of its own plane apart.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaConfig {
    /// Elements along X.
    pub p: usize,
    /// Elements along Y.
    pub q: usize,
    pub d_over_lambda: f64,
}

impl UpaConfig {
    pub fn new(p: usize, q: usize, d_over_lambda: f64) -> Result<Self> {
        let cfg = Self { p, q, d_over_lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::InvalidArray(format!(
                "P and Q must be >= 1, got {}x{}",
                self.p, self.q
            )));
        }
        if !(self.d_over_lambda.is_finite() && self.d_over_lambda > 0.0) {
            return Err(Error::InvalidArray(format!(
                "d/lambda must be positive, got {}",
                self.d_over_lambda
            )));
        }
        Ok(())
    }

    /// Number of elements `PQ`.
    pub fn len(&self) -> usize {
        self.p * self.q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Azimuth / elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angle {
    pub theta_rad: f64,
    pub phi_rad: f64,
}

impl Angle {
    pub fn new(theta_rad: f64, phi_rad: f64) -> Result<Self> {
        let a = Self { theta_rad, phi_rad };
        a.validate()?;
        Ok(a)
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12;
        if !(self.theta_rad.abs() <= PI + tol) {
            return Err(Error::InvalidAngle(format!(
                "azimuth {} outside [-pi, pi]",
                self.theta_rad
            )));
        }
        if !(self.phi_rad.abs() <= FRAC_PI_2 + tol) {
            return Err(Error::InvalidAngle(format!(
                "elevation {} outside [-pi/2, pi/2]",
                self.phi_rad
            )));
        }
        Ok(())
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_rad.to_degrees()
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi_rad.to_degrees()
    }
}

/// Receive/transmit array response, flattened vertical-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub values: Vec<Complex64>,
}

/// Horizontal component `a_p` (length `P`).
pub fn horizontal_component(cfg: &UpaConfig, ang: &Angle) -> Vec<Complex64> {
    let u = ang.phi_rad.cos() * ang.theta_rad.cos();
    let step = -2.0 * PI * cfg.d_over_lambda * u;
    (0..cfg.p)
        .map(|p| Complex64::cis(step * p as f64))
        .collect()
}

/// Vertical component `a_q` (length `Q`).
pub fn vertical_component(cfg: &UpaConfig, ang: &Angle) -> Vec<Complex64> {
    let v = ang.phi_rad.cos() * ang.theta_rad.sin();
    let step = -2.0 * PI * cfg.d_over_lambda * v;
    (0..cfg.q)
        .map(|q| Complex64::cis(step * q as f64))
        .collect()
}

/// Write `a_q (x) a_p` into `out` (length `PQ`).
pub fn steering_into(cfg: &UpaConfig, ang: &Angle, out: &mut [Complex64]) {
    debug_assert_eq!(out.len(), cfg.len());
    let (st, ct) = ang.theta_rad.sin_cos();
    let cp = ang.phi_rad.cos();
    let step_p = -2.0 * PI * cfg.d_over_lambda * cp * ct;
    let step_q = -2.0 * PI * cfg.d_over_lambda * cp * st;
    let (first, rest) = out.split_at_mut(cfg.p);
    let (rp, rq) = (Complex64::cis(step_p), Complex64::cis(step_q));
    let mut hp = Complex64::new(1.0, 0.0);
    for o in first.iter_mut() {
        *o = hp;
        hp *= rp;
    }
    let mut vq = Complex64::new(1.0, 0.0);
    for row in rest.chunks_exact_mut(cfg.p) {
        vq *= rq;
        for (o, &hp) in row.iter_mut().zip(first.iter()) {
            *o = vq * hp;
        }
    }
}

pub fn steering_vector(cfg: &UpaConfig, ang: &Angle) -> SteeringVector {
    let mut values = vec![Complex64::new(0.0, 0.0); cfg.len()];
    steering_into(cfg, ang, &mut values);
    SteeringVector { values }
}

/// `a^H w`: the transmit array gain of precoder `w` towards `ang`.
pub fn transmit_gain(cfg: &UpaConfig, ang: &Angle, w: &[Complex64]) -> Result<Complex64> {
    if w.len() != cfg.len() {
        return Err(Error::DimensionMismatch {
            what: "precoder length",
            expected: cfg.len(),
            got: w.len(),
        });
    }
    let a = steering_vector(cfg, ang);
    Ok(a.values.iter().zip(w).map(|(a, w)| a.conj() * w).sum())
}

/// Effective steering vector `(a_Tx^H w) a_Rx` (identical Tx/Rx arrays).
pub fn effective_steering(
    cfg: &UpaConfig,
    ang: &Angle,
    w: &[Complex64],
) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.len()];
    effective_steering_into(cfg, ang, w, &mut out)?;
    Ok(out)
}

/// In-place variant of [`effective_steering`]; `out` must have length `PQ`.
pub fn effective_steering_into(
    cfg: &UpaConfig,
    ang: &Angle,
    w: &[Complex64],
    out: &mut [Complex64],
) -> Result<()> {
    if w.len() != cfg.len() {
        return Err(Error::DimensionMismatch {
            what: "precoder length",
            expected: cfg.len(),
            got: w.len(),
        });
    }
    if out.len() != cfg.len() {
        return Err(Error::DimensionMismatch {
            what: "output length",
            expected: cfg.len(),
            got: out.len(),
        });
    }
    steering_into(cfg, ang, out);
    let gain: Complex64 = out.iter().zip(w).map(|(a, w)| a.conj() * w).sum();
    for o in out.iter_mut() {
        *o *= gain;
    }
    Ok(())
}

/// Transmit precoder choice.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Precoder {
    /// Drive only element (0, 0): unit gain in every direction.
    #[default]
    SingleElement,
    /// Normalized matched beam `a_Tx(boresight) / sqrt(PQ)`.
    Matched { theta_deg: f64, phi_deg: f64 },
}

impl Precoder {
    /// Unit-norm precoding vector for `cfg`.
    pub fn vector(&self, cfg: &UpaConfig) -> Result<Vec<Complex64>> {
        match *self {
            Precoder::SingleElement => {
                let mut w = vec![Complex64::new(0.0, 0.0); cfg.len()];
                w[0] = Complex64::new(1.0, 0.0);
                Ok(w)
            }
            Precoder::Matched { theta_deg, phi_deg } => {
                let ang = Angle::from_degrees(theta_deg, phi_deg)?;
                Ok(matched_precoder(cfg, &ang))
            }
        }
    }
}

/// `a_Tx(ang) / sqrt(PQ)`.
pub fn matched_precoder(cfg: &UpaConfig, ang: &Angle) -> Vec<Complex64> {
    let scale = 1.0 / (cfg.len() as f64).sqrt();
    steering_vector(cfg, ang)
        .values
        .into_iter()
        .map(|a| a * scale)
        .collect()
}

/// Direction `(cos(phi) cos(theta), cos(phi) sin(theta), sin(phi))`.
pub fn angle_to_unit_vector(ang: &Angle) -> Vector3<f64> {
    let (st, ct) = ang.theta_rad.sin_cos();
    let (sp, cp) = ang.phi_rad.sin_cos();
    Vector3::new(cp * ct, cp * st, sp)
}

/// Inverse of `range * angle_to_unit_vector(angle)`. The origin maps to
/// range 0 with angle (0, 0).
pub fn cartesian_to_range_angle(p: &Vector3<f64>) -> (f64, Angle) {
    let range = p.norm();
    if range == 0.0 {
        return (
            0.0,
            Angle {
                theta_rad: 0.0,
                phi_rad: 0.0,
            },
        );
    }
    let theta = p.y.atan2(p.x);
    let phi = (p.z / range).clamp(-1.0, 1.0).asin();
    (
        range,
        Angle {
            theta_rad: theta,
            phi_rad: phi,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn two_element_endfire() {
        let cfg = UpaConfig::new(2, 1, 0.5).unwrap();
        let a = steering_vector(&cfg, &Angle::new(0.0, 0.0).unwrap());
        assert!(close(&a.values, &[c(1.0, 0.0), c(-1.0, 0.0)], 1e-15));
        assert_eq!(a.values[0], c(1.0, 0.0));
    }

    #[test]
    fn broadside_is_all_ones() {
        let cfg = UpaConfig::new(3, 4, 0.5).unwrap();
        let a = steering_vector(&cfg, &Angle::new(0.7, FRAC_PI_2).unwrap());
        assert!(a.values.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn two_by_two_at_ninety_degrees() {
        let cfg = UpaConfig::new(2, 2, 0.5).unwrap();
        let a = steering_vector(&cfg, &Angle::new(FRAC_PI_2, 0.0).unwrap());
        let expected = [c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)];
        assert!(close(&a.values, &expected, 1e-15));
    }

    #[test]
    fn matched_precoder_gain() {
        let cfg = UpaConfig::new(4, 3, 0.5).unwrap();
        let ang = Angle::new(0.3, -0.2).unwrap();
        let w = matched_precoder(&cfg, &ang);
        let b = effective_steering(&cfg, &ang, &w).unwrap();
        let a = steering_vector(&cfg, &ang);
        let scale = (cfg.len() as f64).sqrt();
        let expected: Vec<_> = a.values.iter().map(|x| x * scale).collect();
        assert!(close(&b, &expected, 1e-12));
    }

    #[test]
    fn orthogonal_precoder_gives_zero() {
        let cfg = UpaConfig::new(2, 1, 0.5).unwrap();
        let ang = Angle::new(0.0, 0.0).unwrap();
        // a = [1, -1]; w = [1, 1]/sqrt2 is orthogonal.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = effective_steering(&cfg, &ang, &[c(s, 0.0), c(s, 0.0)]).unwrap();
        assert!(b.iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn single_element_precoder_example() {
        let cfg = UpaConfig::new(2, 1, 0.5).unwrap();
        let ang = Angle::new(0.0, 0.0).unwrap();
        let b = effective_steering(&cfg, &ang, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(close(&b, &[c(1.0, 0.0), c(-1.0, 0.0)], 1e-15));
        assert!(effective_steering(&cfg, &ang, &[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn unit_vectors() {
        let v = angle_to_unit_vector(&Angle::new(0.0, 0.0).unwrap());
        assert!((v - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let v = angle_to_unit_vector(&Angle::new(FRAC_PI_2, 0.0).unwrap());
        assert!((v - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let v = angle_to_unit_vector(&Angle::new(0.0, FRAC_PI_2).unwrap());
        assert!((v - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn cartesian_inverse() {
        let (r, a) = cartesian_to_range_angle(&Vector3::new(10.0, 0.0, 0.0));
        assert_eq!(r, 10.0);
        assert_eq!((a.theta_rad, a.phi_rad), (0.0, 0.0));
        let p = Vector3::new(-3.0, 4.0, -2.0);
        let (r, a) = cartesian_to_range_angle(&p);
        assert!((r * angle_to_unit_vector(&a) - p).norm() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(UpaConfig::new(0, 4, 0.5).is_err());
        assert!(UpaConfig::new(4, 4, 0.0).is_err());
        assert!(Angle::new(4.0, 0.0).is_err());
        assert!(Angle::new(0.0, 1.6).is_err());
    }

    #[test]
    fn elevation_mirror_is_bitwise_identical() {
        let cfg = UpaConfig::new(4, 4, 0.5).unwrap();
        let a = steering_vector(&cfg, &Angle::from_degrees(12.5, 7.5).unwrap());
        let b = steering_vector(&cfg, &Angle::from_degrees(12.5, -7.5).unwrap());
        assert_eq!(a, b);
    }
}
