use num_complex::Complex64;
use rayon::prelude::*;

use crate::array_geometry::{effective_steering_into, Angle, UpaConfig};
use crate::error::{Error, Result};

/// Rectangular azimuth x elevation grid, values in degrees.
///
/// Lattice grids hold exact integer multiples of the step so that a zoom
/// window and a global grid with the same step produce bit-identical atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    pub step_deg: (f64, f64),
}

fn lattice_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn min_gap(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

impl AngularGrid {
    /// Multiples of `step_deg` inside `[lo, hi]` on each axis.
    pub fn lattice(
        theta_range_deg: (f64, f64),
        phi_range_deg: (f64, f64),
        step_deg: (f64, f64),
    ) -> Result<Self> {
        if !(step_deg.0 > 0.0 && step_deg.1 > 0.0) {
            return Err(Error::Solver(format!("grid step must be positive, got {step_deg:?}")));
        }
        let grid = Self {
            theta_deg: lattice_axis(theta_range_deg.0, theta_range_deg.1, step_deg.0),
            phi_deg: lattice_axis(phi_range_deg.0, phi_range_deg.1, step_deg.1),
            step_deg,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid from explicit value lists; the step is the smallest spacing.
    pub fn from_values(theta_deg: Vec<f64>, phi_deg: Vec<f64>) -> Result<Self> {
        let step_deg = (min_gap(&theta_deg), min_gap(&phi_deg));
        let grid = Self {
            theta_deg,
            phi_deg,
            step_deg,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_deg.is_empty() || self.phi_deg.is_empty() {
            return Err(Error::Solver("angular grid is empty".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.theta_deg) || !increasing(&self.phi_deg) {
            return Err(Error::Solver("grid values must be strictly increasing".into()));
        }
        let bad_t = self.theta_deg.iter().any(|t| !(t.abs() <= 180.0));
        let bad_p = self.phi_deg.iter().any(|p| !(p.abs() <= 90.0));
        if bad_t || bad_p {
            return Err(Error::Solver("grid values outside angle bounds".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.theta_deg.len() * self.phi_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point `g` in row-major order (azimuth outer, elevation inner).
    pub fn point_deg(&self, g: usize) -> (f64, f64) {
        let n_phi = self.phi_deg.len();
        (self.theta_deg[g / n_phi], self.phi_deg[g % n_phi])
    }

    pub fn angle(&self, g: usize) -> Angle {
        let (t, p) = self.point_deg(g);
        Angle {
            theta_rad: t.to_radians(),
            phi_rad: p.to_radians(),
        }
    }

    /// Index of the exact grid point, if present.
    pub fn index_of(&self, theta_deg: f64, phi_deg: f64) -> Option<usize> {
        let ti = self.theta_deg.iter().position(|&t| t == theta_deg)?;
        let pi = self.phi_deg.iter().position(|&p| p == phi_deg)?;
        Some(ti * self.phi_deg.len() + pi)
    }
}

/// Column-stacked effective steering vectors for every grid point.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub grid: AngularGrid,
    /// Atom length (`PQ`).
    pub rows: usize,
    /// `G` columns of length `rows`, stored contiguously.
    pub atoms: Vec<Complex64>,
    pub norms: Vec<f64>,
}

/// Columns whose norm falls below this are treated as precoder nulls.
pub const MIN_ATOM_NORM: f64 = 1e-12;

impl Dictionary {
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn column(&self, g: usize) -> &[Complex64] {
        &self.atoms[g * self.rows..(g + 1) * self.rows]
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Fill `out` with the atoms of `grid` and return their norms.
pub(crate) fn fill_atoms(
    cfg: &UpaConfig,
    w: &[Complex64],
    grid: &AngularGrid,
    out: &mut Vec<Complex64>,
) -> Result<Vec<f64>> {
    let rows = cfg.len();
    out.clear();
    out.resize(grid.len() * rows, Complex64::new(0.0, 0.0));
    let atom = |(g, col): (usize, &mut [Complex64])| {
        effective_steering_into(cfg, &grid.angle(g), w, col)?;
        let n = norm(col);
        if n < MIN_ATOM_NORM {
            return Err(Error::DegenerateDictionary { column: g, norm: n });
        }
        Ok(n)
    };
    if grid.len() < PARALLEL_MIN_ATOMS {
        out.chunks_mut(rows).enumerate().map(atom).collect()
    } else {
        out.par_chunks_mut(rows).enumerate().map(atom).collect()
    }
}

/// Grids smaller than this are filled on the calling thread.
const PARALLEL_MIN_ATOMS: usize = 4096;

pub fn build_dictionary(cfg: &UpaConfig, w: &[Complex64], grid: &AngularGrid) -> Result<Dictionary> {
    cfg.validate()?;
    grid.validate()?;
    let mut atoms = Vec::new();
    let norms = fill_atoms(cfg, w, grid, &mut atoms)?;
    Ok(Dictionary {
        grid: grid.clone(),
        rows: cfg.len(),
        atoms,
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::{effective_steering, matched_precoder, Precoder};

    #[test]
    fn lattice_values_are_exact_multiples() {
        let g = AngularGrid::lattice((-60.0, 60.0), (-30.0, 30.0), (5.0, 5.0)).unwrap();
        assert_eq!(g.theta_deg.len(), 25);
        assert_eq!(g.phi_deg.len(), 13);
        assert_eq!(g.len(), 325);
        assert_eq!(g.theta_deg[0], -60.0);
        let f = AngularGrid::lattice((-2.3, 2.3), (0.0, 1.0), (0.5, 0.5)).unwrap();
        assert_eq!(f.theta_deg, vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(f.phi_deg, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn row_major_order() {
        let g = AngularGrid::from_values(vec![0.0, 10.0], vec![-5.0, 0.0, 5.0]).unwrap();
        assert_eq!(g.point_deg(0), (0.0, -5.0));
        assert_eq!(g.point_deg(4), (10.0, 0.0));
        assert_eq!(g.index_of(10.0, 5.0), Some(5));
        assert!(AngularGrid::from_values(vec![1.0, 0.0], vec![0.0]).is_err());
        assert!(AngularGrid::from_values(vec![], vec![0.0]).is_err());
    }

    #[test]
    fn dictionary_columns_and_sizes() {
        let cfg = UpaConfig::new(4, 4, 0.5).unwrap();
        let w = Precoder::SingleElement.vector(&cfg).unwrap();
        let one = AngularGrid::from_values(vec![12.0], vec![-7.0]).unwrap();
        let d = build_dictionary(&cfg, &w, &one).unwrap();
        assert_eq!(d.len(), 1);
        let b = effective_steering(&cfg, &one.angle(0), &w).unwrap();
        assert_eq!(d.column(0), &b[..]);

        let g = AngularGrid::from_values(
            (0..10).map(|i| i as f64 * 3.0).collect(),
            (0..5).map(|i| -(i as f64) * 4.0).rev().collect(),
        )
        .unwrap();
        assert_eq!(build_dictionary(&cfg, &w, &g).unwrap().len(), 50);
    }

    #[test]
    fn matched_boresight_column_norm() {
        let cfg = UpaConfig::new(4, 4, 0.5).unwrap();
        let bore = Angle::new(0.0, 0.0).unwrap();
        let w = matched_precoder(&cfg, &bore);
        let g = AngularGrid::from_values(vec![0.0], vec![0.0]).unwrap();
        let d = build_dictionary(&cfg, &w, &g).unwrap();
        assert!((d.norms[0] - cfg.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn precoder_null_is_rejected() {
        // Matched endfire beam on a 4x4 array has an exact null at theta = 30 deg.
        let cfg = UpaConfig::new(4, 4, 0.5).unwrap();
        let w = matched_precoder(&cfg, &Angle::new(0.0, 0.0).unwrap());
        let g = AngularGrid::from_values(vec![0.0, 30.0], vec![0.0]).unwrap();
        assert!(matches!(
            build_dictionary(&cfg, &w, &g),
            Err(Error::DegenerateDictionary { column: 1, .. })
        ));
    }
}
