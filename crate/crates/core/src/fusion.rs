//! BS-local point extraction and registration into the global frame.
//!
//! A BS pose maps local coordinates to global ones, `p_glo = R p_loc + t`.
//! The global cloud is the plain union of all registered local clouds; each
//! point keeps the radial velocity measured by its own BS.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::angle::Detection;
use crate::array_geometry::angle_to_unit_vector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub bs_id: usize,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl BsPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, bs_id: usize) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
            bs_id,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity(bs_id: usize) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            bs_id,
        }
    }

    /// Pose from yaw (about z), pitch (about y) and roll (about x) in
    /// degrees, applied as `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_yaw_pitch_roll_deg(
        yaw: f64,
        pitch: f64,
        roll: f64,
        translation: Vector3<f64>,
        bs_id: usize,
    ) -> Result<Self> {
        let r = Rotation3::from_euler_angles(roll.to_radians(), pitch.to_radians(), yaw.to_radians());
        Self::new(r.into_inner(), translation, bs_id)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if r.iter().chain(self.translation.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidPose {
                bs_id: self.bs_id,
                reason: "non-finite entries".into(),
            });
        }
        let gram_err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if gram_err > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose {
                bs_id: self.bs_id,
                reason: format!("rotation not orthonormal (|R^T R - I| = {gram_err:e})"),
            });
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose {
                bs_id: self.bs_id,
                reason: format!("rotation determinant {det} != +1"),
            });
        }
        Ok(())
    }

    pub fn to_global(&self, p_loc: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_loc + self.translation
    }

    pub fn to_local(&self, p_glo: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_glo - self.translation)
    }

    /// Rotate a direction (e.g. a velocity) into the local frame.
    pub fn vector_to_local(&self, v_glo: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * v_glo
    }
}

/// `to_global` with pose validation.
pub fn to_global(p_loc: &Vector3<f64>, pose: &BsPose) -> Result<Vector3<f64>> {
    pose.validate()?;
    Ok(pose.to_global(p_loc))
}

/// `range * angle_to_unit_vector(angle)` in the BS-local frame.
pub fn detection_to_local_point(det: &Detection) -> Vector3<f64> {
    det.peak.range_m * angle_to_unit_vector(&det.angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CloudPoint {
    pub position: [f64; 3],
    pub radial_velocity_mps: f64,
    pub power: f64,
    pub bs_id: usize,
}

impl CloudPoint {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PointCloud4D {
    pub points: Vec<CloudPoint>,
}

impl PointCloud4D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(CloudPoint::position).collect()
    }
}

/// Detections of one BS as a cloud in its own local frame.
pub fn local_cloud(detections: &[Detection], bs_id: usize) -> PointCloud4D {
    PointCloud4D {
        points: detections
            .iter()
            .map(|d| CloudPoint {
                position: detection_to_local_point(d).into(),
                radial_velocity_mps: d.peak.velocity_mps,
                power: d.power,
                bs_id,
            })
            .collect(),
    }
}

/// Register every BS's detections and take the union, in input order.
pub fn fuse(clouds: &[(BsPose, Vec<Detection>)]) -> Result<PointCloud4D> {
    for (pose, _) in clouds {
        pose.validate()?;
    }
    let per_bs: Vec<Vec<CloudPoint>> = clouds
        .par_iter()
        .map(|(pose, dets)| {
            dets.iter()
                .map(|d| CloudPoint {
                    position: pose.to_global(&detection_to_local_point(d)).into(),
                    radial_velocity_mps: d.peak.velocity_mps,
                    power: d.power,
                    bs_id: pose.bs_id,
                })
                .collect()
        })
        .collect();
    Ok(PointCloud4D {
        points: per_bs.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::Angle;
    use crate::range_doppler::RdPeak;
    use std::f64::consts::FRAC_PI_2;

    fn det(range_m: f64, theta: f64, phi: f64) -> Detection {
        Detection {
            peak: RdPeak {
                m: 0,
                n: 0,
                power: 1.0,
                range_m,
                velocity_mps: 2.5,
            },
            angle: Angle::new(theta, phi).unwrap(),
            power: 1.0,
        }
    }

    #[test]
    fn local_points() {
        assert!((detection_to_local_point(&det(10.0, 0.0, 0.0)) - Vector3::new(10.0, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(detection_to_local_point(&det(0.0, 1.0, 0.3)), Vector3::zeros());
        assert!((detection_to_local_point(&det(5.0, FRAC_PI_2, 0.0)) - Vector3::new(0.0, 5.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rigid_transforms() {
        let p = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(to_global(&p, &BsPose::identity(0)).unwrap(), p);
        let rz = BsPose::from_yaw_pitch_roll_deg(90.0, 0.0, 0.0, Vector3::zeros(), 1).unwrap();
        assert!((rz.to_global(&p) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let t = BsPose::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0), 2).unwrap();
        assert_eq!(t.to_global(&Vector3::zeros()), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn invalid_rotations() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.1;
        assert!(BsPose::new(m, Vector3::zeros(), 0).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            BsPose::new(reflect, Vector3::zeros(), 3),
            Err(Error::InvalidPose { bs_id: 3, .. })
        ));
        let bad = BsPose {
            rotation: m,
            translation: Vector3::zeros(),
            bs_id: 0,
        };
        assert!(to_global(&Vector3::zeros(), &bad).is_err());
    }

    #[test]
    fn ypr_composition_order() {
        // pitch 90 maps local x to global -z; yaw then has no effect on it
        let pose = BsPose::from_yaw_pitch_roll_deg(30.0, 90.0, 0.0, Vector3::zeros(), 0).unwrap();
        let g = pose.to_global(&Vector3::new(1.0, 0.0, 0.0));
        assert!((g - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn fuse_union() {
        let dets = vec![det(10.0, 0.1, -0.2), det(20.0, -0.3, -0.1)];
        let single = fuse(&[(BsPose::identity(0), dets.clone())]).unwrap();
        assert_eq!(single, local_cloud(&dets, 0));

        let p1 = BsPose::from_yaw_pitch_roll_deg(45.0, 0.0, 0.0, Vector3::new(5.0, 0.0, 3.0), 1).unwrap();
        let both = fuse(&[(BsPose::identity(0), dets.clone()), (p1, dets.clone())]).unwrap();
        assert_eq!(both.len(), 4);
        assert_eq!(both.points.iter().filter(|p| p.bs_id == 1).count(), 2);
        assert!(both.points.iter().all(|p| p.radial_velocity_mps == 2.5));
    }
}
