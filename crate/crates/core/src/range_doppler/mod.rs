//! Channel estimation, range-Doppler maps and peak extraction.
//!
//! Transforms are unnormalized, exactly
//!
//! ```text
//! P_pq[m, n] = sum_k sum_l H_pq[k, l] exp(+j 2 pi m k / N_R) exp(-j 2 pi n l / N_D)
//! ```
//!
//! over the zero-padded `N_R x N_D` grid, so `sum |P|^2 = N_R N_D sum |H|^2`.

mod cfar;
mod dump;

pub use cfar::{
    cfar_mask, os_cfar_false_alarm_rate, os_cfar_scale_for_pfa, oscfar_detect, CfarConfig,
    RdPeak,
};
pub use dump::{read_rdm_dump, write_rdm_dump};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nr_grid::{GridDims, ResourceGrid};
use crate::scene::ReceivedGrid;

/// Per-antenna channel estimates `H_pq = Y_pq / S` (each K x L).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub dims: GridDims,
    pub per_antenna: Vec<Array2<Complex64>>,
}

fn check_symbols(tx: &ResourceGrid) -> Result<()> {
    for ((k, l), s) in tx.symbols.indexed_iter() {
        if s.norm_sqr() == 0.0 {
            return Err(Error::ZeroSymbol { k, l });
        }
    }
    Ok(())
}

fn check_shape(y: &Array2<Complex64>, tx: &ResourceGrid) -> Result<()> {
    let (k, l) = tx.symbols.dim();
    if y.nrows() != k {
        return Err(Error::DimensionMismatch {
            what: "received subcarriers",
            expected: k,
            got: y.nrows(),
        });
    }
    if y.ncols() != l {
        return Err(Error::DimensionMismatch {
            what: "received symbols",
            expected: l,
            got: y.ncols(),
        });
    }
    Ok(())
}

/// Element-wise division by the known transmit symbols.
pub fn estimate_channel(rx: &ReceivedGrid, tx: &ResourceGrid) -> Result<ChannelEstimate> {
    estimate_channel_owned(rx.clone(), tx)
}

/// Same as [`estimate_channel`] but divides the received grids in place.
pub fn estimate_channel_owned(rx: ReceivedGrid, tx: &ResourceGrid) -> Result<ChannelEstimate> {
    check_symbols(tx)?;
    let mut per_antenna = rx.per_antenna;
    for y in &per_antenna {
        check_shape(y, tx)?;
    }
    per_antenna.par_iter_mut().for_each(|y| {
        y.zip_mut_with(&tx.symbols, |y, s| *y /= s);
    });
    Ok(ChannelEstimate {
        dims: tx.dims,
        per_antenna,
    })
}

/// Where the per-antenna map values come from.
#[derive(Debug, Clone)]
pub enum AntennaMaps {
    /// Every `P_pq` kept as a full `N_R x N_D` matrix.
    Dense(Vec<Array2<Complex64>>),
    /// Only the channel estimate is kept; `P_pq[m, n]` is evaluated on demand.
    OnDemand(Arc<ChannelEstimate>),
}

#[derive(Debug, Clone)]
pub struct RangeDopplerMap {
    pub dims: GridDims,
    pub per_antenna: AntennaMaps,
    /// `|sum_pq P_pq|^2`.
    pub integrated: Array2<f64>,
    pub n_r: usize,
    pub n_d: usize,
}

impl RangeDopplerMap {
    pub fn antenna_count(&self) -> usize {
        match &self.per_antenna {
            AntennaMaps::Dense(m) => m.len(),
            AntennaMaps::OnDemand(est) => est.per_antenna.len(),
        }
    }

    pub fn range_bin_m(&self) -> f64 {
        self.dims.range_bin_m(self.n_r)
    }

    pub fn velocity_bin_mps(&self) -> f64 {
        self.dims.velocity_bin_mps(self.n_d)
    }

    /// Range for bin `m`.
    pub fn range_of_bin(&self, m: usize) -> f64 {
        m as f64 * self.range_bin_m()
    }

    /// Signed Doppler index: bins above `N_D / 2` wrap to negative.
    pub fn signed_doppler(&self, n: usize) -> i64 {
        if n > self.n_d / 2 {
            n as i64 - self.n_d as i64
        } else {
            n as i64
        }
    }

    pub fn velocity_of_bin(&self, n_signed: i64) -> f64 {
        n_signed as f64 * self.velocity_bin_mps()
    }
}

/// Smallest power of two that is at least `2 * len`.
pub fn default_padding(len: usize) -> usize {
    (2 * len.max(1)).next_power_of_two()
}

struct Plans {
    range: Arc<dyn Fft<f64>>,
    doppler: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n_r: usize, n_d: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            range: planner.plan_fft_inverse(n_r),
            doppler: planner.plan_fft_forward(n_d),
        }
    }

    /// Zero-pad `h` to `n_r x n_d`, inverse transform over subcarriers, forward
    /// over symbols.
    fn transform(&self, h: &Array2<Complex64>, n_r: usize, n_d: usize) -> Array2<Complex64> {
        let (k, l) = h.dim();
        let mut out = Array2::<Complex64>::zeros((n_r, n_d));
        let mut col = vec![Complex64::new(0.0, 0.0); n_r];
        for li in 0..l {
            col[..k].iter_mut().zip(h.column(li)).for_each(|(c, v)| *c = *v);
            col[k..].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            self.range.process(&mut col);
            out.column_mut(li).iter_mut().zip(&col).for_each(|(o, c)| *o = *c);
        }
        for mut row in out.rows_mut() {
            let slice = row.as_slice_mut().expect("standard layout row");
            self.doppler.process(slice);
        }
        out
    }
}

fn check_padding(est: &ChannelEstimate, n_r: usize, n_d: usize) -> Result<()> {
    let (k, l) = (est.dims.k, est.dims.l);
    if n_r < k {
        return Err(Error::PaddingTooSmall {
            axis: "range",
            padded: n_r,
            data: k,
        });
    }
    if n_d < l {
        return Err(Error::PaddingTooSmall {
            axis: "doppler",
            padded: n_d,
            data: l,
        });
    }
    if est.per_antenna.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "antenna count",
            expected: 1,
            got: 0,
        });
    }
    for h in &est.per_antenna {
        if h.dim() != (k, l) {
            return Err(Error::DimensionMismatch {
                what: "channel estimate shape",
                expected: k * l,
                got: h.len(),
            });
        }
    }
    Ok(())
}

/// Per-antenna maps plus the coherently integrated power map.
pub fn compute_rdm(est: &ChannelEstimate, n_r: usize, n_d: usize) -> Result<RangeDopplerMap> {
    check_padding(est, n_r, n_d)?;
    let plans = Plans::new(n_r, n_d);
    let maps: Vec<Array2<Complex64>> = est
        .per_antenna
        .par_iter()
        .map(|h| plans.transform(h, n_r, n_d))
        .collect();
    let mut sum = Array2::<Complex64>::zeros((n_r, n_d));
    for m in &maps {
        sum += m;
    }
    Ok(RangeDopplerMap {
        dims: est.dims,
        per_antenna: AntennaMaps::Dense(maps),
        integrated: sum.mapv(|v| v.norm_sqr()),
        n_r,
        n_d,
    })
}

/// Memory-light variant: integrates the channel estimates first (the
/// transform is linear) and evaluates per-antenna values only at requested
/// bins.
pub fn compute_rdm_lean(
    est: Arc<ChannelEstimate>,
    n_r: usize,
    n_d: usize,
) -> Result<RangeDopplerMap> {
    check_padding(&est, n_r, n_d)?;
    let mut sum = Array2::<Complex64>::zeros((est.dims.k, est.dims.l));
    for h in &est.per_antenna {
        sum += h;
    }
    let integrated = Plans::new(n_r, n_d)
        .transform(&sum, n_r, n_d)
        .mapv(|v| v.norm_sqr());
    Ok(RangeDopplerMap {
        dims: est.dims,
        per_antenna: AntennaMaps::OnDemand(est),
        integrated,
        n_r,
        n_d,
    })
}

/// Bytes needed to hold every per-antenna map densely.
pub fn dense_map_bytes(antennas: usize, n_r: usize, n_d: usize) -> usize {
    antennas * n_r * n_d * std::mem::size_of::<Complex64>()
}

/// Direct evaluation of one bin of the transform.
fn dft_bin(h: &Array2<Complex64>, m: usize, n: usize, n_r: usize, n_d: usize) -> Complex64 {
    let (k, l) = h.dim();
    let range_tw: Vec<Complex64> = (0..k)
        .map(|ki| Complex64::cis(2.0 * PI * ((m * ki) % n_r) as f64 / n_r as f64))
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for li in 0..l {
        let inner: Complex64 = h.column(li).iter().zip(&range_tw).map(|(x, t)| x * t).sum();
        acc += inner * Complex64::cis(-2.0 * PI * ((n * li) % n_d) as f64 / n_d as f64);
    }
    acc
}

/// Values `P_pq[m, n]` across all antennas, vertical-major order.
pub fn extract_spatial_vector(map: &RangeDopplerMap, peak: &RdPeak) -> Result<Vec<Complex64>> {
    let n_bin = peak.n.rem_euclid(map.n_d as i64) as usize;
    extract_at_bin(map, peak.m, n_bin)
}

/// Same as [`extract_spatial_vector`] addressed by raw (unsigned) bins.
pub fn extract_at_bin(map: &RangeDopplerMap, m: usize, n: usize) -> Result<Vec<Complex64>> {
    if m >= map.n_r || n >= map.n_d {
        return Err(Error::BinOutOfBounds {
            m,
            n,
            n_r: map.n_r,
            n_d: map.n_d,
        });
    }
    Ok(match &map.per_antenna {
        AntennaMaps::Dense(maps) => maps.iter().map(|p| p[[m, n]]).collect(),
        AntennaMaps::OnDemand(est) => est
            .per_antenna
            .iter()
            .map(|h| dft_bin(h, m, n, map.n_r, map.n_d))
            .collect(),
    })
}
