//! 4D (position + radial velocity) point-cloud imaging from 5G NR downlink
//! OFDM echoes.
//!
//! The processing chain mirrors a monostatic ISAC base station:
//!
//! 1. [`nr_grid`] builds the numerology and a fully occupied QPSK resource grid.
//! 2. [`scene`] synthesizes the per-antenna frequency-domain echo of a
//!    scatterer scene.
//! 3. [`range_doppler`] divides out the known symbols, forms the coherently
//!    integrated range-Doppler map and runs OS-CFAR.
//! 4. [`angle`] estimates azimuth/elevation per peak with Zoom-OMP
//!    (coarse-to-fine) or a full-grid OMP baseline.
//! 5. [`fusion`] maps per-BS detections into a common global frame.
//! 6. [`metrics`] scores the fused cloud with Chamfer distance and F-score.
//!
//! [`pipeline`] wires the stages together from a scenario configuration.

pub mod angle;
pub mod array_geometry;
pub mod constants;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod nr_grid;
pub mod pipeline;
pub mod range_doppler;
pub mod scene;

pub use error::{Error, Result};
pub use num_complex::Complex64;
