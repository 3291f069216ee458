//! Per-peak azimuth/elevation estimation by sparse recovery.

mod grid;
mod omp;

pub use grid::{build_dictionary, AngularGrid, Dictionary, MIN_ATOM_NORM};
pub use omp::{omp_full, zoom_omp, IterationStats, SparseSolution, ZoomOmp};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_geometry::Angle;
use crate::error::Result;
use crate::range_doppler::{extract_spatial_vector, RangeDopplerMap, RdPeak};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Zoom,
    Full,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Zoom => "zoom",
            SolverKind::Full => "full",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "zoom" | "zoom_omp" => Ok(SolverKind::Zoom),
            "full" | "omp_full" => Ok(SolverKind::Full),
            other => Err(format!("unknown solver `{other}` (expected zoom or full)")),
        }
    }
}

/// A ready-to-run angle solver; dictionaries are built once and shared
/// read-only across peaks.
#[derive(Debug, Clone)]
pub enum AngleSolver {
    Zoom(ZoomOmp),
    Full(Dictionary),
}

impl AngleSolver {
    pub fn kind(&self) -> SolverKind {
        match self {
            AngleSolver::Zoom(_) => SolverKind::Zoom,
            AngleSolver::Full(_) => SolverKind::Full,
        }
    }

    pub fn solve(&self, h: &[Complex64], n_target: usize) -> Result<SparseSolution> {
        match self {
            AngleSolver::Zoom(z) => z.solve(h, n_target),
            AngleSolver::Full(d) => omp_full(h, d, n_target),
        }
    }
}

/// One 4D detection in the BS-local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub peak: RdPeak,
    pub angle: Angle,
    /// Energy of the recovered atom, `|x|^2 ||b||^2`.
    pub power: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AngleEstimates {
    pub detections: Vec<Detection>,
    pub correlation_count: u64,
    /// Zoom only: coarse picks per peak (for localization diagnostics).
    pub coarse_picks_deg: Vec<Vec<(f64, f64)>>,
}

/// Run the solver on every peak; one detection per recovered atom.
pub fn estimate_angles(
    map: &RangeDopplerMap,
    peaks: &[RdPeak],
    solver: &AngleSolver,
    n_target: usize,
) -> Result<AngleEstimates> {
    let solved: Result<Vec<(RdPeak, SparseSolution)>> = peaks
        .par_iter()
        .map(|peak| {
            let h = extract_spatial_vector(map, peak)?;
            Ok((*peak, solver.solve(&h, n_target)?))
        })
        .collect();
    let mut out = AngleEstimates::default();
    for (peak, sol) in solved? {
        out.correlation_count += sol.correlation_count;
        for ((angle, x), b) in sol.support.iter().zip(&sol.coefficients).zip(&sol.atom_norms) {
            out.detections.push(Detection {
                peak,
                angle: *angle,
                power: x.norm_sqr() * b * b,
            });
        }
        out.coarse_picks_deg.push(sol.coarse_picks_deg);
    }
    Ok(out)
}
