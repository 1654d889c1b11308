//! Two-element drift-scan interferometer pulse-pair search.
//!
//! The crate is `no_std` with `alloc`; everything that touches files, the
//! command line or threads lives in the companion `pulsepair` crate.
//!
//! Processing chain, by module:
//!
//! - [`geometry`]: hour angle, geometric delay, expected east-west phase,
//!   fringe period, alias offset, RA binning and sidereal tracking.
//! - [`sim`]: seeded synthesis of trigger frames (AWGN, injected pulse-pair
//!   transmitters, RFI bursts, Sun broadband power).
//! - [`first_level`]: dual-element threshold detection, Δt=0 pairing,
//!   SNR likelihoods, FX visibility and associated measurements.
//! - [`rfi`]: 954 Hz segment concentration tagging with look-forward,
//!   spectral margin filtering and Sun-transit excision.
//! - [`stats`]: exposure model, RA-bin phase hypotheses, the sorted heap,
//!   per-event Cohen's d and direction-of-interest detection.
//! - [`diagnostics`]: phase-noise, τ_INT override and modified-filter
//!   variants, and the high-visibility scan.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod diagnostics;
pub mod first_level;
pub mod geometry;
pub mod math;
pub mod rfi;
pub mod sim;
pub mod stats;

pub use geometry::{InstrumentConfig, LstReference, PhaseModel};

/// Complex sample type used for all spectra.
pub type Complex = num_complex::Complex<f64>;
