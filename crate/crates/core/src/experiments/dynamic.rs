//! Unmodulated-light experiments: count rate versus optical power and
//! versus comparator threshold.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{run_chain, sipm_events, ChainSettings, PulseSource};
use super::{check_grid, fmt_f64, write_rows, LinkConfig};
use crate::analog::{HysteresisRule, ThresholdRow};
use crate::error::{invalid, Result};
use crate::photon::homogeneous_poisson;
use crate::rng::{stream, RngSeed};
use crate::theory::lambda_s;

/// Expected events per dynamic-range point before clipping the duration.
const TARGET_EVENTS: f64 = 2e5;
const MIN_DURATION: f64 = 100e-6;
const MAX_DURATION: f64 = 50e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicRangeRow {
    pub avg_power_w: f64,
    pub counts_per_second: f64,
    /// Detected photon rate plus dark rate.
    pub theory_counts_per_second: f64,
}

/// Detected photon rate under constant illumination.
pub(crate) fn detected_rate(cfg: &LinkConfig, power_w: f64) -> Result<f64> {
    lambda_s(power_w, 1.0, cfg.link.wavelength, cfg.link.pde)
}

/// Lead-in discarded before counting, long enough for the AC coupling to
/// settle on the mean level.
fn settle_time(chain: &ChainSettings, support: f64) -> f64 {
    let hp = chain.dc_block_hz.map_or(0.0, |fc| 5.0 / (2.0 * std::f64::consts::PI * fc));
    let lp = 5.0 / (2.0 * std::f64::consts::PI * chain.amp.bandwidth);
    hp + lp + support
}

/// Count rate behind each comparator of `chain` under constant power.
pub(crate) fn measure_rates(
    cfg: &LinkConfig,
    chain: &ChainSettings,
    sample_rate: f64,
    power_w: f64,
    duration: f64,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    let template = cfg.sipm.template()?;
    let settle = settle_time(chain, template.support());
    let n_samples = ((settle + duration) * sample_rate).round() as u64;
    let total = n_samples as f64 / sample_rate;
    let signal = homogeneous_poisson(detected_rate(cfg, power_w)?, total, seed, stream::SIGNAL)?;
    let (events, amps) = sipm_events(&signal, cfg.link.dark_count_rate, &cfg.sipm, seed)?;
    let src = PulseSource { times: &events.times, amplitudes: &amps, template };
    let trains = run_chain(&src, chain, sample_rate, n_samples, seed)?;
    let window = total - settle;
    Ok(trains.iter().map(|t| t.rises.iter().filter(|&&r| r >= settle).count() as f64 / window).collect())
}

/// Measurement time giving about 2e5 expected events, within
/// [100 µs, 50 ms].
pub(crate) fn point_duration(expected_rate: f64) -> f64 {
    if expected_rate <= 0.0 {
        return MAX_DURATION;
    }
    (TARGET_EVENTS / expected_rate).clamp(MIN_DURATION, MAX_DURATION)
}

/// Counts per second through the configured chain for each constant
/// optical power in `power_grid` (watts).
pub fn run_dynamic_range(cfg: &LinkConfig, power_grid: &[f64]) -> Result<Vec<DynamicRangeRow>> {
    check_grid("power", power_grid)?;
    if power_grid[0] < 0.0 {
        return Err(invalid("optical power must be >= 0"));
    }
    let mut cfg = cfg.clone();
    cfg.mode = super::SimMode::Waveform;
    cfg.validate()?;
    let chain = cfg.chain()?;
    power_grid
        .par_iter()
        .enumerate()
        .map(|(k, &p)| {
            let theory = detected_rate(&cfg, p)? + cfg.link.dark_count_rate;
            let rate = measure_rates(
                &cfg,
                &chain,
                cfg.sample_rate,
                p,
                point_duration(theory),
                cfg.master_seed.child(k as u64),
            )?;
            Ok(DynamicRangeRow { avg_power_w: p, counts_per_second: rate[0], theory_counts_per_second: theory })
        })
        .collect()
}

/// Count rate versus comparator threshold under constant power (0 for
/// dark counts only). All thresholds observe the same simulated trace.
pub fn run_threshold_sweep(
    cfg: &LinkConfig,
    v_th_grid: &[f64],
    rule: HysteresisRule,
    power_w: f64,
    duration: f64,
) -> Result<Vec<ThresholdRow>> {
    check_grid("v_th", v_th_grid)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid("duration must be > 0"));
    }
    let mut cfg = cfg.clone();
    cfg.mode = super::SimMode::Waveform;
    cfg.validate()?;
    let mut chain = cfg.chain()?;
    chain.comparators = v_th_grid.iter().map(|&v| rule.comparator(v)).collect::<Result<_>>()?;
    let rates = measure_rates(&cfg, &chain, cfg.sample_rate, power_w, duration, cfg.master_seed)?;
    Ok(v_th_grid.iter().zip(rates).map(|(&v_th, counts_per_second)| ThresholdRow { v_th, counts_per_second }).collect())
}

pub fn write_dynamic_range_csv<W: Write>(out: W, rows: &[DynamicRangeRow]) -> Result<()> {
    write_rows(out, "avg_power_w,counts_per_second,theory_counts_per_second", rows, |r| {
        format!("{},{},{}", fmt_f64(r.avg_power_w), fmt_f64(r.counts_per_second), fmt_f64(r.theory_counts_per_second))
    })
}

/// Header `v_th_volts,counts_per_second`.
pub fn write_threshold_csv<W: Write>(out: W, rows: &[ThresholdRow]) -> Result<()> {
    write_rows(out, "v_th_volts,counts_per_second", rows, |r| {
        format!("{},{}", fmt_f64(r.v_th), fmt_f64(r.counts_per_second))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> LinkConfig {
        let mut cfg = LinkConfig::default();
        cfg.link.dark_count_rate = 30e3;
        cfg
    }

    #[test]
    fn duration_rule() {
        assert_eq!(point_duration(0.0), MAX_DURATION);
        assert_eq!(point_duration(1e3), MAX_DURATION);
        assert_eq!(point_duration(4e9), MIN_DURATION);
        assert!((point_duration(1e7) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn low_power_tracks_theory() {
        let cfg = short();
        let rows = run_dynamic_range(&cfg, &[1e-12, 4e-12]).unwrap();
        for r in &rows {
            let rel = (r.counts_per_second - r.theory_counts_per_second).abs() / r.theory_counts_per_second;
            assert!(rel < 0.05, "{r:?}");
        }
        assert!(run_dynamic_range(&cfg, &[]).is_err());
        assert!(run_dynamic_range(&cfg, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn threshold_sweep_dark_plateau() {
        let cfg = short();
        let grid: Vec<f64> = (6..=29).step_by(4).map(|mv| mv as f64 * 1e-3).collect();
        let rows = run_threshold_sweep(&cfg, &grid, HysteresisRule::Fixed(5e-3), 0.0, 20e-3).unwrap();
        // 600 expected dark pulses, each far above every threshold
        for r in &rows {
            assert!((r.counts_per_second - 30e3).abs() < 4.0 * (30e3f64 / 20e-3).sqrt(), "{r:?}");
        }
        let mut csv = Vec::new();
        write_threshold_csv(&mut csv, &rows).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("v_th_volts,counts_per_second\n6e-3,"));
    }
}
