//! Two-dimensional ordered-statistics CFAR over the integrated map.
//!
//! For a cell under test the training cells are those inside the
//! `(guard + training)` rectangle but outside the guard rectangle, with
//! toroidal wrap on both axes. The cell is declared a detection when its
//! power exceeds `scale_factor` times the `k`-th smallest training value,
//! `k = ceil(os_rank_fraction * N_train)`.
//!
//! For i.i.d. exponential (square-law) noise the false-alarm probability is
//! `prod_{i=0}^{k-1} (N - i) / (N - i + T)`, which [`os_cfar_scale_for_pfa`]
//! inverts for `T`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RangeDopplerMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    /// Guard cells per side, (range, doppler).
    pub guard_cells: (usize, usize),
    /// Training cells per side beyond the guard band, (range, doppler).
    pub training_cells: (usize, usize),
    pub os_rank_fraction: f64,
    pub scale_factor: f64,
    /// Peaks within this Chebyshev distance (bins) of a stronger peak are dropped.
    pub min_peak_separation: usize,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self::for_false_alarm_rate((2, 2), (8, 4), 0.75, 1e-4, 2)
            .expect("default CFAR parameters are valid")
    }
}

impl CfarConfig {
    /// Configuration whose scale factor realizes the design false-alarm rate.
    pub fn for_false_alarm_rate(
        guard_cells: (usize, usize),
        training_cells: (usize, usize),
        os_rank_fraction: f64,
        design_pfa: f64,
        min_peak_separation: usize,
    ) -> Result<Self> {
        let mut cfg = Self {
            guard_cells,
            training_cells,
            os_rank_fraction,
            scale_factor: 1.0,
            min_peak_separation,
        };
        cfg.validate()?;
        cfg.scale_factor = os_cfar_scale_for_pfa(cfg.training_count(), cfg.rank(), design_pfa)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_cells.0 == 0 || self.training_cells.1 == 0 {
            return Err(Error::Cfar("training cells must be positive".into()));
        }
        if !(self.os_rank_fraction > 0.0 && self.os_rank_fraction <= 1.0) {
            return Err(Error::Cfar(format!(
                "os_rank_fraction must be in (0, 1], got {}",
                self.os_rank_fraction
            )));
        }
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return Err(Error::Cfar(format!(
                "scale_factor must be positive, got {}",
                self.scale_factor
            )));
        }
        Ok(())
    }

    /// Full window extent (range, doppler).
    pub fn window(&self) -> (usize, usize) {
        (
            2 * (self.guard_cells.0 + self.training_cells.0) + 1,
            2 * (self.guard_cells.1 + self.training_cells.1) + 1,
        )
    }

    pub fn training_count(&self) -> usize {
        let (wr, wd) = self.window();
        let gr = 2 * self.guard_cells.0 + 1;
        let gd = 2 * self.guard_cells.1 + 1;
        wr * wd - gr * gd
    }

    /// 1-based rank of the ordered statistic.
    pub fn rank(&self) -> usize {
        let n = self.training_count();
        ((self.os_rank_fraction * n as f64).ceil() as usize).clamp(1, n)
    }

    /// Training-cell offsets relative to the cell under test.
    fn offsets(&self) -> Vec<(isize, isize)> {
        let (gr, gd) = (self.guard_cells.0 as isize, self.guard_cells.1 as isize);
        let rr = gr + self.training_cells.0 as isize;
        let rd = gd + self.training_cells.1 as isize;
        let mut out = Vec::with_capacity(self.training_count());
        for dm in -rr..=rr {
            for dn in -rd..=rd {
                if dm.abs() <= gr && dn.abs() <= gd {
                    continue;
                }
                out.push((dm, dn));
            }
        }
        out
    }
}

/// False-alarm probability of OS-CFAR with `n` training cells, rank `k`
/// and scale `t` on exponential noise.
pub fn os_cfar_false_alarm_rate(n: usize, k: usize, t: f64) -> f64 {
    (0..k)
        .map(|i| {
            let a = (n - i) as f64;
            (a / (a + t)).ln()
        })
        .sum::<f64>()
        .exp()
}

/// Scale factor that yields `pfa`, found by bisection (the rate is strictly
/// decreasing in the scale).
pub fn os_cfar_scale_for_pfa(n: usize, k: usize, pfa: f64) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Cfar(format!("design P_fa must be in (0, 1), got {pfa}")));
    }
    if k == 0 || k > n {
        return Err(Error::Cfar(format!("rank {k} outside 1..={n}")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while os_cfar_false_alarm_rate(n, k, hi) > pfa {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Cfar(format!("P_fa {pfa} unreachable with N={n}, k={k}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if os_cfar_false_alarm_rate(n, k, mid) > pfa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

fn check_window(cfg: &CfarConfig, n_r: usize, n_d: usize) -> Result<()> {
    cfg.validate()?;
    let (wr, wd) = cfg.window();
    if wr > n_r || wd > n_d {
        return Err(Error::Cfar(format!(
            "window {wr}x{wd} does not fit map {n_r}x{n_d}"
        )));
    }
    Ok(())
}

fn cell_detects(
    power: &Array2<f64>,
    offsets: &[(isize, isize)],
    k: usize,
    scale: f64,
    m: usize,
    n: usize,
) -> bool {
    let (n_r, n_d) = power.dim();
    let level = power[[m, n]] / scale;
    if !(level > 0.0) {
        return false;
    }
    // k-th smallest < level  <=>  at least k values below level
    let mut below = 0usize;
    for &(dm, dn) in offsets {
        let mi = (m as isize + dm).rem_euclid(n_r as isize) as usize;
        let ni = (n as isize + dn).rem_euclid(n_d as isize) as usize;
        if power[[mi, ni]] < level {
            below += 1;
            if below >= k {
                return true;
            }
        }
    }
    false
}

/// Raw per-cell CFAR decisions before peak grouping.
pub fn cfar_mask(power: &Array2<f64>, cfg: &CfarConfig) -> Result<Array2<bool>> {
    let (n_r, n_d) = power.dim();
    check_window(cfg, n_r, n_d)?;
    let offsets = cfg.offsets();
    let k = cfg.rank();
    let rows: Vec<Vec<bool>> = (0..n_r)
        .into_par_iter()
        .map(|m| {
            (0..n_d)
                .map(|n| cell_detects(power, &offsets, k, cfg.scale_factor, m, n))
                .collect()
        })
        .collect();
    Ok(Array2::from_shape_fn((n_r, n_d), |(m, n)| rows[m][n]))
}

/// One detected range-Doppler peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPeak {
    pub m: usize,
    /// Signed Doppler bin.
    pub n: i64,
    pub power: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
}

fn toroidal_distance(a: usize, b: usize, len: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(len - d)
}

/// Cells this far below the map maximum hold only FFT roundoff.
pub const ROUNDOFF_FLOOR: f64 = 1e-20;

/// OS-CFAR detection followed by 8-neighbourhood local-maximum grouping and
/// minimum-separation suppression. Peaks are returned strongest first.
/// Cells below [`ROUNDOFF_FLOOR`] times the map maximum are never detected.
pub fn oscfar_detect(map: &RangeDopplerMap, cfg: &CfarConfig) -> Result<Vec<RdPeak>> {
    let power = &map.integrated;
    let (n_r, n_d) = power.dim();
    check_window(cfg, n_r, n_d)?;
    let offsets = cfg.offsets();
    let k = cfg.rank();
    let floor = power.iter().fold(0.0f64, |a, &b| a.max(b)) * ROUNDOFF_FLOOR;

    let is_local_max = |m: usize, n: usize| {
        let p = power[[m, n]];
        if !(p > floor) {
            return false;
        }
        let me = m * n_d + n;
        for dm in -1isize..=1 {
            for dn in -1isize..=1 {
                if dm == 0 && dn == 0 {
                    continue;
                }
                let mi = (m as isize + dm).rem_euclid(n_r as isize) as usize;
                let ni = (n as isize + dn).rem_euclid(n_d as isize) as usize;
                let q = power[[mi, ni]];
                if q > p || (q == p && mi * n_d + ni < me) {
                    return false;
                }
            }
        }
        true
    };
    let mut local_max: Vec<(usize, usize)> = (0..n_r)
        .into_par_iter()
        .flat_map_iter(|m| {
            let offsets = &offsets;
            (0..n_d).filter_map(move |n| {
                (is_local_max(m, n) && cell_detects(power, offsets, k, cfg.scale_factor, m, n))
                    .then_some((m, n))
            })
        })
        .collect();

    local_max.sort_by(|a, b| {
        power[[b.0, b.1]]
            .total_cmp(&power[[a.0, a.1]])
            .then_with(|| a.cmp(b))
    });
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for cand in local_max {
        let close = kept.iter().any(|k| {
            toroidal_distance(k.0, cand.0, n_r).max(toroidal_distance(k.1, cand.1, n_d))
                <= cfg.min_peak_separation
        });
        if !close {
            kept.push(cand);
        }
    }

    Ok(kept
        .into_iter()
        .map(|(m, n)| {
            let n_signed = map.signed_doppler(n);
            RdPeak {
                m,
                n: n_signed,
                power: power[[m, n]],
                range_m: map.range_of_bin(m),
                velocity_mps: map.velocity_of_bin(n_signed),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nr_grid::{make_grid_dims, make_numerology, CpMode};
    use crate::range_doppler::AntennaMaps;

    fn map_from(power: Array2<f64>, n_rb: usize) -> RangeDopplerMap {
        let dims =
            make_grid_dims(make_numerology(3, CpMode::Normal).unwrap(), n_rb, 1, 26e9).unwrap();
        let (n_r, n_d) = power.dim();
        RangeDopplerMap {
            dims,
            per_antenna: AntennaMaps::Dense(vec![]),
            integrated: power,
            n_r,
            n_d,
        }
    }

    #[test]
    fn default_window_sizes() {
        let c = CfarConfig::default();
        assert_eq!(c.window(), (21, 13));
        assert_eq!(c.training_count(), 21 * 13 - 25);
        assert_eq!(c.rank(), 186);
        let pfa = os_cfar_false_alarm_rate(c.training_count(), c.rank(), c.scale_factor);
        assert!((pfa / 1e-4 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pfa_formula_matches_small_case_by_hand() {
        // N = 2, k = 1: P_fa = 2 / (2 + T)
        assert!((os_cfar_false_alarm_rate(2, 1, 2.0) - 0.5).abs() < 1e-15);
        // N = 2, k = 2: 2/(2+T) * 1/(1+T)
        assert!((os_cfar_false_alarm_rate(2, 2, 1.0) - 2.0 / 3.0 * 0.5).abs() < 1e-15);
        let t = os_cfar_scale_for_pfa(2, 1, 0.25).unwrap();
        assert!((t - 6.0).abs() < 1e-9);
        assert!(os_cfar_scale_for_pfa(10, 11, 0.1).is_err());
        assert!(os_cfar_scale_for_pfa(10, 5, 0.0).is_err());
    }

    #[test]
    fn all_zero_map_has_no_detections() {
        let map = map_from(Array2::zeros((64, 32)), 1);
        assert!(oscfar_detect(&map, &CfarConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn single_spike_on_flat_map() {
        let mut p = Array2::from_elem((64, 32), 1.0);
        p[[10, 30]] = 100.0;
        let cfg = CfarConfig::default();
        // Threshold on a flat map is scale_factor * 1, and 1 < T < 100.
        assert!(cfg.scale_factor > 1.0 && cfg.scale_factor < 100.0);
        let mask = cfar_mask(&p, &cfg).unwrap();
        assert_eq!(mask.iter().filter(|&&b| b).count(), 1);
        let map = map_from(p, 1);
        let peaks = oscfar_detect(&map, &cfg).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].m, 10);
        assert_eq!(peaks[0].n, 30 - 32);
        assert_eq!(peaks[0].power, 100.0);
        assert!((peaks[0].range_m - 10.0 * map.range_bin_m()).abs() < 1e-12);
        assert!(peaks[0].velocity_mps < 0.0);
    }

    #[test]
    fn bin_to_range_example() {
        let dims = make_grid_dims(make_numerology(3, CpMode::Normal).unwrap(), 264, 2, 26e9)
            .unwrap();
        let per_bin = 299_792_458.0 / (2.0 * 4096.0 * 120_000.0);
        assert!((dims.range_bin_m(4096) - per_bin).abs() < 1e-15);
        assert!((per_bin - 0.3050).abs() < 1e-4);
    }

    #[test]
    fn window_must_fit() {
        let p = Array2::from_elem((16, 8), 1.0);
        assert!(cfar_mask(&p, &CfarConfig::default()).is_err());
    }

    #[test]
    fn nearby_weaker_peak_is_suppressed() {
        let mut p = Array2::from_elem((64, 32), 1.0);
        p[[20, 5]] = 1000.0;
        p[[22, 5]] = 500.0;
        p[[40, 5]] = 800.0;
        let map = map_from(p, 1);
        let peaks = oscfar_detect(&map, &CfarConfig::default()).unwrap();
        let cells: Vec<_> = peaks.iter().map(|p| (p.m, p.n)).collect();
        assert_eq!(cells, vec![(20, 5), (40, 5)]);
    }

    #[test]
    fn roundoff_below_the_floor_is_ignored() {
        let mut p = Array2::zeros((64, 32));
        for m in 0..64 {
            p[[m, 7]] = 1e-12 * (1.0 + (m % 5) as f64);
        }
        p[[30, 7]] = 1e10;
        let peaks = oscfar_detect(&map_from(p, 1), &CfarConfig::default()).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].m, peaks[0].n), (30, 7));
    }
}
