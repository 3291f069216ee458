//! 5G NR numerology, frame timing and the transmitted resource grid.
//!
//! The grid is modelled purely in the frequency domain: `K = 12 * n_rb`
//! subcarriers by `L` OFDM symbols, every resource element carrying a known
//! unit-magnitude QPSK symbol. The symbol duration `T_s` uses one uniform
//! cyclic-prefix fraction so the Doppler phase stays linear in the symbol
//! index.

use log::warn;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{
    EXTENDED_CP_FRACTION, NORMAL_CP_FRACTION, SPEED_OF_LIGHT, SUBCARRIERS_PER_RB,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CpMode {
    #[default]
    Normal,
    Extended,
}

impl CpMode {
    pub fn symbols_per_slot(self) -> usize {
        match self {
            CpMode::Normal => 14,
            CpMode::Extended => 12,
        }
    }

    /// CP length as a fraction of the useful symbol duration.
    pub fn cp_fraction(self) -> f64 {
        match self {
            CpMode::Normal => NORMAL_CP_FRACTION,
            CpMode::Extended => EXTENDED_CP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerology {
    pub mu: u32,
    pub scs_hz: f64,
    pub slots_per_subframe: usize,
    pub symbols_per_slot: usize,
    pub cp_mode: CpMode,
}

/// Build the numerology for index `mu` (0..=6).
pub fn make_numerology(mu: i64, cp_mode: CpMode) -> Result<Numerology> {
    if !(0..=6).contains(&mu) {
        return Err(Error::InvalidNumerology(mu));
    }
    let mu = mu as u32;
    Ok(Numerology {
        mu,
        scs_hz: f64::from(1u32 << mu) * 15_000.0,
        slots_per_subframe: 1usize << mu,
        symbols_per_slot: cp_mode.symbols_per_slot(),
        cp_mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDims {
    pub numerology: Numerology,
    pub n_rb: usize,
    pub n_subframes: usize,
    /// Number of subcarriers `K`.
    pub k: usize,
    /// Number of OFDM symbols `L`.
    pub l: usize,
    pub bandwidth_hz: f64,
    /// OFDM symbol duration including the cyclic prefix.
    pub symbol_duration_s: f64,
    pub carrier_hz: f64,
    pub wavelength_m: f64,
}

impl GridDims {
    pub fn scs_hz(&self) -> f64 {
        self.numerology.scs_hz
    }

    /// Range covered by one bin of an `n_r`-point delay transform.
    pub fn range_bin_m(&self, n_r: usize) -> f64 {
        SPEED_OF_LIGHT / (2.0 * n_r as f64 * self.scs_hz())
    }

    /// Velocity covered by one bin of an `n_d`-point Doppler transform.
    pub fn velocity_bin_mps(&self, n_d: usize) -> f64 {
        self.wavelength_m / (2.0 * n_d as f64 * self.symbol_duration_s)
    }

    /// Largest radial speed whose Doppler phase step stays below pi.
    pub fn max_unambiguous_velocity_mps(&self) -> f64 {
        self.wavelength_m / (4.0 * self.symbol_duration_s)
    }

    /// Human-readable reason when the configuration falls outside both
    /// frequency-range envelopes.
    pub fn frequency_range_violation(&self) -> Option<String> {
        let mu = self.numerology.mu;
        let bw = self.bandwidth_hz;
        let fc = self.carrier_hz;
        let fr1 = fc <= 7.125e9 && mu <= 2 && bw <= 100e6;
        let fr2 = (24.25e9..=71.0e9).contains(&fc) && (2..=4).contains(&mu) && bw <= 400e6;
        if fr1 || fr2 {
            None
        } else {
            Some(format!(
                "carrier {:.3} GHz, mu={}, bandwidth {:.2} MHz fits neither FR1 nor FR2",
                fc / 1e9,
                mu,
                bw / 1e6
            ))
        }
    }
}

pub fn make_grid_dims(
    num: Numerology,
    n_rb: usize,
    n_subframes: usize,
    carrier_hz: f64,
) -> Result<GridDims> {
    if n_rb == 0 {
        return Err(Error::InvalidDims("n_rb must be >= 1".into()));
    }
    if n_subframes == 0 {
        return Err(Error::InvalidDims("n_subframes must be >= 1".into()));
    }
    if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
        return Err(Error::InvalidDims(format!(
            "carrier_hz must be positive, got {carrier_hz}"
        )));
    }
    let k = SUBCARRIERS_PER_RB * n_rb;
    let l = n_subframes * num.slots_per_subframe * num.symbols_per_slot;
    let dims = GridDims {
        numerology: num,
        n_rb,
        n_subframes,
        k,
        l,
        bandwidth_hz: k as f64 * num.scs_hz,
        symbol_duration_s: (1.0 + num.cp_mode.cp_fraction()) / num.scs_hz,
        carrier_hz,
        wavelength_m: SPEED_OF_LIGHT / carrier_hz,
    };
    if let Some(reason) = dims.frequency_range_violation() {
        warn!("{reason}");
    }
    Ok(dims)
}

/// Transmitted frequency-domain grid `S` (K x L).
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub dims: GridDims,
    pub symbols: Array2<Complex64>,
}

/// Populate every resource element with a seeded QPSK symbol `(+-1 +- j)/sqrt 2`.
pub fn fill_grid(dims: &GridDims, seed: u64) -> ResourceGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let symbols = Array2::from_shape_simple_fn((dims.k, dims.l), || {
        let bits: u8 = rng.random_range(0..4);
        let re = if bits & 1 == 0 { a } else { -a };
        let im = if bits & 2 == 0 { a } else { -a };
        Complex64::new(re, im)
    });
    ResourceGrid {
        dims: *dims,
        symbols,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerology_mu3() {
        let n = make_numerology(3, CpMode::Normal).unwrap();
        assert_eq!(n.scs_hz, 120_000.0);
        assert_eq!(n.slots_per_subframe, 8);
        assert_eq!(n.symbols_per_slot, 14);
    }

    #[test]
    fn numerology_mu0_and_bounds() {
        let n = make_numerology(0, CpMode::Normal).unwrap();
        assert_eq!(n.scs_hz, 15_000.0);
        assert_eq!(n.slots_per_subframe, 1);
        assert!(matches!(
            make_numerology(7, CpMode::Normal),
            Err(Error::InvalidNumerology(7))
        ));
        assert!(make_numerology(-1, CpMode::Normal).is_err());
        assert_eq!(
            make_numerology(2, CpMode::Extended).unwrap().symbols_per_slot,
            12
        );
    }

    #[test]
    fn table1_dims() {
        let n = make_numerology(3, CpMode::Normal).unwrap();
        let d = make_grid_dims(n, 264, 2, 26e9).unwrap();
        assert_eq!(d.k, 3168);
        assert_eq!(d.l, 224);
        assert_eq!(d.bandwidth_hz, 380.16e6);
        // (1 + 144/2048) / 120 kHz, evaluated by hand: 2192 / 2048 / 120000
        let hand = 2192.0 / 2048.0 / 120_000.0;
        assert!((d.symbol_duration_s - hand).abs() < 1e-18);
        assert!((d.symbol_duration_s - 8.919e-6).abs() < 1e-9);
        assert!(d.frequency_range_violation().is_none());
    }

    #[test]
    fn minimal_grid() {
        let n = make_numerology(0, CpMode::Normal).unwrap();
        let d = make_grid_dims(n, 1, 1, 3e9).unwrap();
        assert_eq!((d.k, d.l), (12, 14));
        assert!(d.symbol_duration_s > 1.0 / d.scs_hz());
    }

    #[test]
    fn invalid_dims() {
        let n = make_numerology(3, CpMode::Normal).unwrap();
        assert!(make_grid_dims(n, 0, 1, 26e9).is_err());
        assert!(make_grid_dims(n, 1, 0, 26e9).is_err());
        assert!(make_grid_dims(n, 1, 1, 0.0).is_err());
        assert!(make_grid_dims(n, 1, 1, f64::NAN).is_err());
    }

    #[test]
    fn fr_envelope_flags_mismatch() {
        let n = make_numerology(3, CpMode::Normal).unwrap();
        let d = make_grid_dims(n, 264, 1, 3.5e9).unwrap();
        assert!(d.frequency_range_violation().is_some());
    }

    #[test]
    fn fill_grid_is_deterministic_qpsk() {
        let n = make_numerology(0, CpMode::Normal).unwrap();
        let d = make_grid_dims(n, 1, 1, 3e9).unwrap();
        let g1 = fill_grid(&d, 1);
        let g2 = fill_grid(&d, 1);
        assert_eq!(g1, g2);
        assert_eq!(g1.symbols.len(), 168);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let constellation = [
            Complex64::new(a, a),
            Complex64::new(a, -a),
            Complex64::new(-a, a),
            Complex64::new(-a, -a),
        ];
        for s in g1.symbols.iter() {
            assert!(constellation.contains(s));
            assert!((s.norm() - 1.0).abs() < 1e-15);
        }
        assert_ne!(g1, fill_grid(&d, 2));
    }
}
