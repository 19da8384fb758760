//! Simulation and analysis of a photon-counting SiPM receiver for on-off
//! keyed optical links.
//!
//! The crate is organised along the signal path:
//!
//! * [`theory`]: Poisson error probability, optimal thresholds, power penalty.
//! * [`photon`]: detected-photon event streams.
//! * [`frontend`]: microcell dead time and analog pulse synthesis.
//! * [`analog`]: amplifier, filters, noise, hysteresis comparator.
//! * [`receiver`]: PRBS, interleaved counters, decisions, BER.
//! * [`experiments`]: end-to-end link simulation and parameter sweeps.

pub mod analog;
pub mod error;
pub mod experiments;
pub mod frontend;
pub mod photon;
pub mod receiver;
pub mod rng;
pub mod theory;
pub mod waveform;

pub use error::{Error, Result};
pub use rng::RngSeed;
pub use waveform::Waveform;
