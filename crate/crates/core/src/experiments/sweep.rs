//! One-dimensional sweeps over a single configuration variable.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ber::{run_ber_vs_power, write_ber_power_csv, BerPowerRow, BerSweep};
use super::dynamic::{detected_rate, measure_rates, point_duration, run_dynamic_range, run_threshold_sweep};
use super::dynamic::{write_dynamic_range_csv, write_threshold_csv, DynamicRangeRow};
use super::gbp::{write_gbp_counts_csv, GbpCountRow};
use super::link::link_counts;
use super::{check_grid, LinkConfig, SimMode};
use crate::analog::{AmplifierConfig, HysteresisRule, ThresholdRow};
use crate::error::{invalid, Result};
use crate::receiver::{bathtub, write_ber_csv, BerReport};
use crate::theory::watts_to_dbm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Constant illumination, watts: count rate versus power.
    OpticalPower,
    /// Comparator threshold, volts: count rate versus threshold.
    VTh,
    /// Digital threshold: bathtub of one simulated link.
    NT,
    /// Bits per second: BER at the configured average power.
    DataRate,
    /// Gain-bandwidth product, Hz, at the configured gain: count rate at
    /// the configured average power.
    Gbp,
}

impl std::str::FromStr for SweepVariable {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optical_power" | "power" => Ok(Self::OpticalPower),
            "v_th" => Ok(Self::VTh),
            "n_t" => Ok(Self::NT),
            "data_rate" => Ok(Self::DataRate),
            "gbp" => Ok(Self::Gbp),
            other => Err(invalid(format!(
                "unknown sweep variable {other:?} (expected optical_power, v_th, n_t, data_rate or gbp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    /// Hysteresis for `v_th` sweeps.
    pub hysteresis: HysteresisRule,
    /// Simulated seconds for `v_th` sweeps.
    pub duration: f64,
    /// Constant optical power for `v_th` sweeps, watts.
    pub power_w: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            variable: SweepVariable::VTh,
            grid: (6..=29).map(|mv| mv as f64 / 1e3).collect(),
            hysteresis: HysteresisRule::Fixed(5e-3),
            duration: 0.1,
            power_w: 0.0,
        }
    }
}

impl SweepSpec {
    /// Default grid for `variable`.
    pub fn for_variable(variable: SweepVariable) -> Self {
        let grid = match variable {
            SweepVariable::OpticalPower => (0..=16).map(|k| 1e-13 * 10f64.powf(0.5 * k as f64)).collect(),
            SweepVariable::VTh => SweepSpec::default().grid,
            SweepVariable::NT => (0..=15).map(f64::from).collect(),
            SweepVariable::DataRate => vec![10e3, 100e3, 1e6],
            SweepVariable::Gbp => vec![2e9, 5e9, 10e9, 20e9, 68e9],
        };
        Self { variable, grid, ..SweepSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_grid("sweep", &self.grid)?;
        if self.variable == SweepVariable::NT
            && self.grid.iter().any(|&v| v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64)
        {
            return Err(invalid("n_t grid must hold non-negative integers"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepTable {
    DynamicRange(Vec<DynamicRangeRow>),
    Threshold(Vec<ThresholdRow>),
    Bathtub(Vec<BerReport>),
    BerVsRate(Vec<BerPowerRow>),
    Gbp(Vec<GbpCountRow>),
}

impl SweepTable {
    /// Suggested CSV file name.
    pub fn file_name(&self) -> &'static str {
        match self {
            SweepTable::DynamicRange(_) => "dynamic_range.csv",
            SweepTable::Threshold(_) => "threshold_sweep.csv",
            SweepTable::Bathtub(_) => "bathtub.csv",
            SweepTable::BerVsRate(_) => "ber_vs_rate.csv",
            SweepTable::Gbp(_) => "gbp_sweep.csv",
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        match self {
            SweepTable::DynamicRange(r) => write_dynamic_range_csv(out, r),
            SweepTable::Threshold(r) => write_threshold_csv(out, r),
            SweepTable::Bathtub(r) => write_ber_csv(out, r),
            SweepTable::BerVsRate(r) => write_ber_power_csv(out, r),
            SweepTable::Gbp(r) => write_gbp_counts_csv(out, r),
        }
    }
}

pub fn run_sweep(cfg: &LinkConfig, spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    match spec.variable {
        SweepVariable::OpticalPower => Ok(SweepTable::DynamicRange(run_dynamic_range(cfg, &spec.grid)?)),
        SweepVariable::VTh => Ok(SweepTable::Threshold(run_threshold_sweep(
            cfg,
            &spec.grid,
            spec.hysteresis,
            spec.power_w,
            spec.duration,
        )?)),
        SweepVariable::NT => {
            let (tx, counts, _) = link_counts(cfg)?;
            let grid: Vec<u32> = spec.grid.iter().map(|&v| v as u32).collect();
            Ok(SweepTable::Bathtub(bathtub(&counts, &tx, &grid)?.rows))
        }
        SweepVariable::DataRate => {
            let sweep = BerSweep {
                data_rates: spec.grid.clone(),
                power_dbm: vec![watts_to_dbm(cfg.link.avg_optical_power)],
                collection_time: None,
            };
            Ok(SweepTable::BerVsRate(run_ber_vs_power(cfg, &sweep)?))
        }
        SweepVariable::Gbp => {
            let mut c = cfg.clone();
            c.mode = SimMode::Waveform;
            c.validate()?;
            let power = cfg.link.avg_optical_power;
            let theory = detected_rate(&c, power)? + c.link.dark_count_rate;
            let rows = spec
                .grid
                .par_iter()
                .enumerate()
                .map(|(k, &gbp)| {
                    let amp = AmplifierConfig::from_gbp(gbp, cfg.amp.gain)?;
                    let mut chain = c.chain()?;
                    chain.amp = amp;
                    let rate = measure_rates(
                        &c,
                        &chain,
                        c.sample_rate,
                        power,
                        point_duration(theory),
                        c.master_seed.child(k as u64),
                    )?;
                    Ok(GbpCountRow {
                        label: format!("gbp{}mhz", gbp / 1e6),
                        gain: amp.gain,
                        bandwidth_hz: amp.bandwidth,
                        avg_power_w: power,
                        counts_per_second: rate[0],
                        theory_counts_per_second: theory,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepTable::Gbp(rows))
        }
    }
}
