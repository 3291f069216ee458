//! Orthogonal matching pursuit over angular dictionaries.
//!
//! Both solvers share the projection step: selected atoms are kept in an
//! incrementally updated QR factorization (modified Gram-Schmidt with one
//! re-orthogonalization pass), the residual is `h - Q Q^H h` and the
//! coefficients solve `R x = Q^H h`. Selection uses the normalized
//! correlation `|b^H r| / ||b||`; ties go to the lowest index.

use num_complex::Complex64;
use serde::Serialize;

use super::grid::{fill_atoms, norm, AngularGrid, Dictionary};
use crate::array_geometry::{Angle, UpaConfig};
use crate::error::{Error, Result};

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub residual_norm: f64,
    /// `||Psi_t^H r_t||` evaluated with the raw atoms.
    pub orthogonality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub support: Vec<Angle>,
    /// Support in grid degrees, same order as `support`.
    pub support_deg: Vec<(f64, f64)>,
    pub coefficients: Vec<Complex64>,
    /// Norms of the selected atoms.
    pub atom_norms: Vec<f64>,
    pub residual_norm: f64,
    /// Number of atom correlations evaluated.
    pub correlation_count: u64,
    pub trace: Vec<IterationStats>,
    /// Zoom only: coarse-stage pick of every iteration.
    pub coarse_picks_deg: Vec<(f64, f64)>,
}

fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(a, b)| a.conj() * b).sum()
}

struct Projection<'a> {
    h: &'a [Complex64],
    atoms: Vec<Vec<Complex64>>,
    basis: Vec<Vec<Complex64>>,
    /// Upper-triangular R, column `j` holds `R[0..=j, j]`.
    r_cols: Vec<Vec<Complex64>>,
    residual: Vec<Complex64>,
    coefficients: Vec<Complex64>,
}

impl<'a> Projection<'a> {
    fn new(h: &'a [Complex64]) -> Self {
        Self {
            h,
            atoms: Vec::new(),
            basis: Vec::new(),
            r_cols: Vec::new(),
            residual: h.to_vec(),
            coefficients: Vec::new(),
        }
    }

    fn push(&mut self, atom: &[Complex64], iteration: usize) -> Result<IterationStats> {
        let t = self.basis.len();
        let mut v = atom.to_vec();
        let mut r = vec![Complex64::new(0.0, 0.0); t + 1];
        for _pass in 0..2 {
            for (i, q) in self.basis.iter().enumerate() {
                let c = dot_h(q, &v);
                r[i] += c;
                v.iter_mut().zip(q).for_each(|(v, q)| *v -= c * q);
            }
        }
        let vn = norm(&v);
        if !(vn > 1e-10 * norm(atom)) {
            return Err(Error::IllConditionedSupport { iteration });
        }
        v.iter_mut().for_each(|x| *x /= vn);
        r[t] = Complex64::new(vn, 0.0);
        self.basis.push(v);
        self.r_cols.push(r);
        self.atoms.push(atom.to_vec());

        let z: Vec<Complex64> = self.basis.iter().map(|q| dot_h(q, self.h)).collect();
        let mut res = self.h.to_vec();
        for (q, zi) in self.basis.iter().zip(&z) {
            res.iter_mut().zip(q).for_each(|(r, q)| *r -= zi * q);
        }
        // second pass keeps the residual orthogonal to working precision
        for q in &self.basis {
            let c = dot_h(q, &res);
            res.iter_mut().zip(q).for_each(|(r, q)| *r -= c * q);
        }
        self.residual = res;

        let n = self.basis.len();
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in i + 1..n {
                acc -= self.r_cols[j][i] * x[j];
            }
            x[i] = acc / self.r_cols[i][i];
        }
        self.coefficients = x;

        let orthogonality = self
            .atoms
            .iter()
            .map(|a| dot_h(a, &self.residual).norm_sqr())
            .sum::<f64>()
            .sqrt();
        Ok(IterationStats {
            residual_norm: norm(&self.residual),
            orthogonality,
        })
    }
}

/// Index of the largest normalized correlation, skipping `exclude`.
/// Strict comparison keeps the lowest index on ties.
fn best_atom(
    atoms: &[Complex64],
    norms: &[f64],
    rows: usize,
    residual: &[Complex64],
    exclude: impl Fn(usize) -> bool,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, col) in atoms.chunks_exact(rows).enumerate() {
        if exclude(g) {
            continue;
        }
        let score = dot_h(col, residual).norm() / norms[g];
        match best {
            Some((_, s)) if !(score > s) => {}
            _ => best = Some((g, score)),
        }
    }
    best.map(|(g, _)| g)
}

fn check_inputs(h: &[Complex64], rows: usize, n_target: usize) -> Result<()> {
    if h.len() != rows {
        return Err(Error::DimensionMismatch {
            what: "spatial vector length",
            expected: rows,
            got: h.len(),
        });
    }
    if n_target == 0 || n_target > rows {
        return Err(Error::Solver(format!(
            "n_target must be in 1..={rows}, got {n_target}"
        )));
    }
    Ok(())
}

/// Classic OMP over every column of `dict`.
pub fn omp_full(h: &[Complex64], dict: &Dictionary, n_target: usize) -> Result<SparseSolution> {
    check_inputs(h, dict.rows, n_target)?;
    if n_target > dict.len() {
        return Err(Error::Solver(format!(
            "n_target {n_target} exceeds dictionary size {}",
            dict.len()
        )));
    }
    let mut proj = Projection::new(h);
    let mut chosen: Vec<usize> = Vec::with_capacity(n_target);
    let mut trace = Vec::with_capacity(n_target);
    let mut count = 0u64;
    for it in 0..n_target {
        count += dict.len() as u64;
        let g = best_atom(&dict.atoms, &dict.norms, dict.rows, &proj.residual, |g| {
            chosen.contains(&g)
        })
        .expect("dictionary larger than support");
        trace.push(proj.push(dict.column(g), it)?);
        chosen.push(g);
    }
    Ok(SparseSolution {
        support: chosen.iter().map(|&g| dict.grid.angle(g)).collect(),
        support_deg: chosen.iter().map(|&g| dict.grid.point_deg(g)).collect(),
        coefficients: proj.coefficients,
        atom_norms: chosen.iter().map(|&g| dict.norms[g]).collect(),
        residual_norm: norm(&proj.residual),
        correlation_count: count,
        trace,
        coarse_picks_deg: Vec::new(),
    })
}

/// Coarse-to-fine OMP: a global search on a coarse dictionary, then a fine
/// lattice search inside a window around the coarse pick.
#[derive(Debug, Clone)]
pub struct ZoomOmp {
    pub cfg: UpaConfig,
    pub precoder: Vec<Complex64>,
    pub coarse: Dictionary,
    pub fine_step_deg: (f64, f64),
    pub halfwidth_deg: (f64, f64),
}

impl ZoomOmp {
    pub fn new(
        cfg: UpaConfig,
        precoder: Vec<Complex64>,
        coarse: &AngularGrid,
        fine_step_deg: (f64, f64),
        halfwidth_deg: (f64, f64),
    ) -> Result<Self> {
        let coarse = super::grid::build_dictionary(&cfg, &precoder, coarse)?;
        Self::with_dictionary(cfg, precoder, coarse, fine_step_deg, halfwidth_deg)
    }

    pub fn with_dictionary(
        cfg: UpaConfig,
        precoder: Vec<Complex64>,
        coarse: Dictionary,
        fine_step_deg: (f64, f64),
        halfwidth_deg: (f64, f64),
    ) -> Result<Self> {
        let (cs_t, cs_p) = coarse.grid.step_deg;
        let (fs_t, fs_p) = fine_step_deg;
        if !(fs_t > 0.0 && fs_p > 0.0) {
            return Err(Error::Solver("fine step must be positive".into()));
        }
        // a single-valued coarse axis has an infinite step
        if !(fs_t < cs_t && fs_p < cs_p) {
            return Err(Error::Solver(format!(
                "fine step {fine_step_deg:?} must be smaller than coarse step {:?}",
                coarse.grid.step_deg
            )));
        }
        let (hw_t, hw_p) = halfwidth_deg;
        let wide_t = cs_t.is_infinite() || 2.0 * hw_t >= cs_t;
        let wide_p = cs_p.is_infinite() || 2.0 * hw_p >= cs_p;
        if !(hw_t >= 0.0 && hw_p >= 0.0 && wide_t && wide_p) {
            return Err(Error::Solver(format!(
                "zoom window {halfwidth_deg:?} narrower than one coarse step"
            )));
        }
        Ok(Self {
            cfg,
            precoder,
            coarse,
            fine_step_deg,
            halfwidth_deg,
        })
    }

    /// Fine lattice around a coarse pick, clipped to the angle bounds. A
    /// window that reaches an elevation pole spans the whole coarse azimuth
    /// range, since every azimuth meets there.
    pub fn fine_grid(&self, center_deg: (f64, f64)) -> Result<AngularGrid> {
        let (t, p) = center_deg;
        let (hw_t, hw_p) = self.halfwidth_deg;
        let phi = ((p - hw_p).max(-90.0), (p + hw_p).min(90.0));
        let theta = if phi.0 <= -90.0 || phi.1 >= 90.0 {
            let axis = &self.coarse.grid.theta_deg;
            (axis[0].min(t - hw_t).max(-180.0), axis[axis.len() - 1].max(t + hw_t).min(180.0))
        } else {
            ((t - hw_t).max(-180.0), (t + hw_t).min(180.0))
        };
        AngularGrid::lattice(theta, phi, self.fine_step_deg)
        .map_err(|_| Error::Solver(format!("empty zoom window around {center_deg:?}")))
    }

    pub fn solve(&self, h: &[Complex64], n_target: usize) -> Result<SparseSolution> {
        check_inputs(h, self.cfg.len(), n_target)?;
        let rows = self.cfg.len();
        let mut proj = Projection::new(h);
        let mut support_deg: Vec<(f64, f64)> = Vec::with_capacity(n_target);
        let mut atom_norms = Vec::with_capacity(n_target);
        let mut coarse_picks = Vec::with_capacity(n_target);
        let mut trace = Vec::with_capacity(n_target);
        let mut count = 0u64;
        let mut fine_atoms = Vec::new();
        for it in 0..n_target {
            count += self.coarse.len() as u64;
            let c = best_atom(
                &self.coarse.atoms,
                &self.coarse.norms,
                rows,
                &proj.residual,
                |_| false,
            )
            .expect("coarse dictionary is non-empty");
            let center = self.coarse.grid.point_deg(c);
            coarse_picks.push(center);

            let fine = self.fine_grid(center)?;
            let norms = fill_atoms(&self.cfg, &self.precoder, &fine, &mut fine_atoms)?;
            count += fine.len() as u64;
            let f = best_atom(&fine_atoms, &norms, rows, &proj.residual, |g| {
                support_deg.contains(&fine.point_deg(g))
            })
            .ok_or_else(|| Error::Solver("zoom window exhausted by support".into()))?;
            trace.push(proj.push(&fine_atoms[f * rows..(f + 1) * rows], it)?);
            support_deg.push(fine.point_deg(f));
            atom_norms.push(norms[f]);
        }
        Ok(SparseSolution {
            support: support_deg
                .iter()
                .map(|&(t, p)| Angle {
                    theta_rad: t.to_radians(),
                    phi_rad: p.to_radians(),
                })
                .collect(),
            support_deg,
            coefficients: proj.coefficients,
            atom_norms,
            residual_norm: norm(&proj.residual),
            correlation_count: count,
            trace,
            coarse_picks_deg: coarse_picks,
        })
    }
}

/// One-shot Zoom-OMP: builds the coarse dictionary and solves.
#[allow(clippy::too_many_arguments)]
pub fn zoom_omp(
    h: &[Complex64],
    coarse: &AngularGrid,
    fine_step_deg: (f64, f64),
    halfwidth_deg: (f64, f64),
    cfg: &UpaConfig,
    w: &[Complex64],
    n_target: usize,
) -> Result<SparseSolution> {
    ZoomOmp::new(*cfg, w.to_vec(), coarse, fine_step_deg, halfwidth_deg)?.solve(h, n_target)
}
