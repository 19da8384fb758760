//! End-to-end link simulation and the parameter sweeps built on it.
//!
//! Every experiment is a pure function of its configuration and master
//! seed. Sweep point `k` runs on `master_seed.child(k)`, so the tables are
//! byte-identical however the points are scheduled across threads.

mod ber;
mod dynamic;
mod gbp;
mod link;
mod penalty;
mod pipeline;
mod sweep;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analog::{AmplifierConfig, ComparatorConfig, NoiseConfig, DEFAULT_MIN_WIDTH};
use crate::error::{invalid, Result};
use crate::frontend::{check_resolution, SiPMParams};
use crate::receiver::LfsrConfig;
use crate::rng::RngSeed;
use crate::theory::{dbm_to_watts, LinkParams};

pub use ber::{run_ber_vs_power, write_ber_power_csv, BerPowerRow, BerSweep};
pub use dynamic::{
    run_dynamic_range, run_threshold_sweep, write_dynamic_range_csv, write_threshold_csv, DynamicRangeRow,
};
pub use gbp::{
    reference_gbp_configs, run_gbp_study, write_gbp_counts_csv, write_gbp_pulse_csv, write_gbp_required_csv, GbpCountRow,
    GbpRequiredRow, GbpSpec, GbpTables, PulseStatRow,
};
pub use link::{ideal_counts, simulate_link, trace_link, LinkOutcome};
pub use penalty::{run_power_penalty, write_penalty_csv, write_required_power_csv, PenaltySpec, RequiredPowerRow};
pub use pipeline::{ChainSettings, PulseSource};
pub use sweep::{run_sweep, SweepSpec, SweepTable, SweepVariable};

/// How per-bit counts are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Per-bit Poisson counts drawn straight from the photon budget.
    Ideal,
    /// Photon events through the SiPM, the analog chain and the counters.
    Waveform,
}

impl std::str::FromStr for SimMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" | "ideal-counts" | "ideal_counts" => Ok(SimMode::Ideal),
            "waveform" | "full-waveform" | "full_waveform" => Ok(SimMode::Waveform),
            other => Err(invalid(format!("unknown mode {other:?} (expected ideal or waveform)"))),
        }
    }
}

/// Complete description of one simulated link.
///
/// The defaults describe the real-time receiver: 1 Mbps PRBS-15 at
/// −74.98 dBm average power, 35 kcps dark rate, an equivalent single
/// amplifier stage of gain 170 and 400 MHz bandwidth, AC coupling at
/// 100 kHz and an 18 mV comparator with 5 mV hysteresis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub link: LinkParams,
    pub sipm: SiPMParams,
    pub amp: AmplifierConfig,
    /// Only `input_psd` is read; the noise generator is keyed by
    /// `master_seed`.
    pub noise: NoiseConfig,
    pub comparator: ComparatorConfig,
    /// High-pass corner of the AC coupling after the amplifier, Hz.
    /// `null` for a DC-coupled chain.
    pub dc_block_hz: Option<f64>,
    /// Narrowest pulse the digital input registers, seconds.
    pub min_width: f64,
    pub prbs: LfsrConfig,
    pub n_bits: usize,
    /// Waveform sample rate, Hz.
    pub sample_rate: f64,
    pub master_seed: RngSeed,
    pub mode: SimMode,
    /// Fixed digital threshold; `null` picks the bathtub minimum.
    pub n_t: Option<u32>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            link: LinkParams {
                dark_count_rate: 35e3,
                avg_optical_power: dbm_to_watts(-74.98),
                ..LinkParams::default()
            },
            sipm: SiPMParams::default(),
            amp: AmplifierConfig { gain: 170.0, bandwidth: 400e6 },
            noise: NoiseConfig::default(),
            comparator: ComparatorConfig { v_th: 18e-3, hysteresis: 5e-3 },
            dc_block_hz: Some(100e3),
            min_width: DEFAULT_MIN_WIDTH,
            prbs: LfsrConfig::default(),
            n_bits: 1_000_000,
            sample_rate: 1e9,
            master_seed: RngSeed::default(),
            mode: SimMode::Waveform,
            n_t: None,
        }
    }
}

impl LinkConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: LinkConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.prbs.validate()?;
        if self.n_bits == 0 {
            return Err(invalid("n_bits must be >= 1"));
        }
        if self.mode == SimMode::Waveform {
            self.sipm.validate()?;
            check_resolution(&self.sipm.template()?, self.sample_rate)?;
            self.chain()?.validate(self.sample_rate)?;
        }
        Ok(())
    }

    /// The analog chain with the configured comparator.
    pub fn chain(&self) -> Result<ChainSettings> {
        let comparator = ComparatorConfig::new(self.comparator.v_th, self.comparator.hysteresis)?;
        Ok(ChainSettings {
            amp: self.amp,
            input_psd: self.noise.input_psd,
            dc_block_hz: self.dc_block_hz,
            comparators: vec![comparator],
            min_width: self.min_width,
        })
    }

    /// Number of bits a collection time of `seconds` covers at this data
    /// rate, at least one.
    pub fn bits_for_collection_time(&self, seconds: f64) -> usize {
        ((seconds * self.link.data_rate).round() as usize).max(1)
    }
}

pub(crate) fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} grid must not be empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{name} grid must be finite")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid(format!("{name} grid must be sorted ascending")));
    }
    Ok(())
}

/// Shortest round-trip formatting; `nan` for missing values.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:e}")
    }
}

pub(crate) fn write_rows<W: Write, R>(mut out: W, header: &str, rows: &[R], line: impl Fn(&R) -> String) -> Result<()> {
    writeln!(out, "{header}")?;
    for r in rows {
        writeln!(out, "{}", line(r))?;
    }
    Ok(())
}
