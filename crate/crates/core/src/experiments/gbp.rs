//! Gain-bandwidth product study: how a single-pole amplifier stage shapes
//! single-photon pulses, the count rate, and the power a link needs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dynamic::{detected_rate, measure_rates, point_duration};
use super::pipeline::{run_chain_with, ChainSettings, PulseSource, CHUNK_SAMPLES};
use super::{check_grid, fmt_f64, write_rows, LinkConfig};
use crate::analog::{AmplifierConfig, ComparatorConfig, MIN_COMPARATOR_THRESHOLD};
use crate::error::{invalid, Result};
use crate::frontend::draw_amplitudes;
use crate::rng::{stream, RngSeed};
use crate::theory::{optimal_threshold_auto, required_avg_power, watts_to_dbm, PhotonBudget};

/// The nine gain/bandwidth splits of the 500, 120 and 80 MHz products.
pub fn reference_gbp_configs() -> Vec<AmplifierConfig> {
    [
        (1.0, 500e6),
        (10.0, 50e6),
        (500.0, 1e6),
        (1.0, 120e6),
        (20.0, 6e6),
        (120.0, 1e6),
        (1.0, 80e6),
        (40.0, 2e6),
        (80.0, 1e6),
    ]
    .iter()
    .map(|&(gain, bandwidth)| AmplifierConfig { gain, bandwidth })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbpSpec {
    pub configs: Vec<AmplifierConfig>,
    /// Comparator threshold, volts.
    pub v_th: f64,
    /// Hysteresis as a fraction of `v_th`.
    pub hysteresis_fraction: f64,
    /// Isolated single-photon pulses per configuration.
    pub pulses: usize,
    pub pulse_sample_rate: f64,
    pub count_sample_rate: f64,
    /// Constant optical powers for the count-rate table, watts, all > 0.
    /// A dark-only point is always added.
    pub power_w: Vec<f64>,
    pub data_rates: Vec<f64>,
    pub target_pe: f64,
}

impl Default for GbpSpec {
    fn default() -> Self {
        Self {
            configs: reference_gbp_configs(),
            v_th: MIN_COMPARATOR_THRESHOLD,
            hysteresis_fraction: 0.25,
            pulses: 1000,
            pulse_sample_rate: 10e9,
            count_sample_rate: 2e9,
            power_w: (0..=8).map(|k| 1e-13 * 10f64.powf(0.5 * k as f64)).collect(),
            data_rates: vec![10e3, 100e3, 1e6],
            target_pe: 1e-3,
        }
    }
}

impl GbpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() {
            return Err(invalid("at least one gain/bandwidth pair is required"));
        }
        for c in &self.configs {
            c.validate()?;
        }
        ComparatorConfig::new(self.v_th, self.v_th * self.hysteresis_fraction)?;
        if self.pulses == 0 {
            return Err(invalid("pulses must be >= 1"));
        }
        check_grid("power", &self.power_w)?;
        if self.power_w[0] <= 0.0 {
            return Err(invalid("powers must be > 0; the dark point is added automatically"));
        }
        check_grid("data rate", &self.data_rates)?;
        if self.data_rates[0] <= 0.0 {
            return Err(invalid("data rates must be > 0"));
        }
        if !(self.target_pe > 0.0 && self.target_pe < 0.5) {
            return Err(invalid("target_pe must lie in (0, 0.5)"));
        }
        Ok(())
    }

    fn chain(&self, cfg: &LinkConfig, amp: AmplifierConfig) -> Result<ChainSettings> {
        Ok(ChainSettings {
            amp,
            input_psd: cfg.noise.input_psd,
            dc_block_hz: None,
            comparators: vec![ComparatorConfig::new(self.v_th, self.v_th * self.hysteresis_fraction)?],
            min_width: cfg.min_width,
        })
    }
}

fn label(amp: &AmplifierConfig) -> String {
    format!("g{}_bw{}mhz", amp.gain, amp.bandwidth / 1e6)
}

/// Output amplitude statistics of isolated single-photon pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseStatRow {
    pub label: String,
    pub gain: f64,
    pub bandwidth_hz: f64,
    pub pulses: usize,
    /// Pulses registered by the comparator and width filter.
    pub counted: usize,
    pub peak_mean_v: f64,
    pub peak_sigma_v: f64,
    pub noise_rms_v: f64,
}

impl PulseStatRow {
    pub fn fraction_counted(&self) -> f64 {
        self.counted as f64 / self.pulses as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbpCountRow {
    pub label: String,
    pub gain: f64,
    pub bandwidth_hz: f64,
    pub avg_power_w: f64,
    pub counts_per_second: f64,
    pub theory_counts_per_second: f64,
}

/// Average power for the target error probability; `NaN` when the
/// measured count curve never reaches it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbpRequiredRow {
    pub label: String,
    pub gain: f64,
    pub bandwidth_hz: f64,
    pub data_rate: f64,
    pub required_avg_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbpTables {
    pub pulse_stats: Vec<PulseStatRow>,
    pub counts: Vec<GbpCountRow>,
    /// Ends with the Poisson-limit rows, labelled `poisson_limit`.
    pub required_power: Vec<GbpRequiredRow>,
}

/// Isolated pulses spaced far enough apart for the filter and the
/// template to settle.
pub(crate) fn pulse_statistics(
    cfg: &LinkConfig,
    spec: &GbpSpec,
    amp: AmplifierConfig,
    seed: RngSeed,
) -> Result<PulseStatRow> {
    let template = cfg.sipm.template()?;
    let chain = spec.chain(cfg, amp)?;
    let fs = spec.pulse_sample_rate;
    let tau_lp = 1.0 / (2.0 * std::f64::consts::PI * amp.bandwidth);
    let spacing = (12.0 * tau_lp + template.support()).max(1e-6);
    let stride = (spacing * fs).ceil() as u64;
    let lead = (10e-9 * fs).ceil() as u64;
    let times: Vec<f64> = (0..spec.pulses as u64).map(|k| (k * stride + lead) as f64 / fs).collect();
    let amps = draw_amplitudes(spec.pulses, cfg.sipm.amplitude_spread, seed, stream::AMPLITUDE)?;
    let src = PulseSource { times: &times, amplitudes: &amps, template };
    let mut peaks = vec![f64::NEG_INFINITY; spec.pulses];
    let n_samples = stride * spec.pulses as u64;
    let trains = run_chain_with(&src, &chain, fs, n_samples, seed, CHUNK_SAMPLES, |i, v| {
        let k = (i / stride) as usize;
        if v > peaks[k] {
            peaks[k] = v;
        }
    })?;
    let n = peaks.len() as f64;
    let mean = peaks.iter().sum::<f64>() / n;
    let var = if peaks.len() > 1 { peaks.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(PulseStatRow {
        label: label(&amp),
        gain: amp.gain,
        bandwidth_hz: amp.bandwidth,
        pulses: spec.pulses,
        counted: trains[0].len(),
        peak_mean_v: mean,
        peak_sigma_v: var.sqrt(),
        noise_rms_v: chain.noise_rms(),
    })
}

/// Count rate under constant power with the GBP comparator settings.
pub(crate) fn gbp_count_rate(
    cfg: &LinkConfig,
    spec: &GbpSpec,
    amp: AmplifierConfig,
    power_w: f64,
    seed: RngSeed,
) -> Result<f64> {
    let chain = spec.chain(cfg, amp)?;
    let theory = detected_rate(cfg, power_w)? + cfg.link.dark_count_rate;
    Ok(measure_rates(cfg, &chain, spec.count_sample_rate, power_w, point_duration(theory), seed)?[0])
}

/// Piecewise-linear interpolation in log power; `powers[0]` is 0 and is
/// only used as the dark level.
fn interp_counts(powers: &[f64], counts: &[f64], p: f64) -> Option<f64> {
    let k = powers[1..].windows(2).position(|w| p >= w[0] && p <= w[1])? + 1;
    let (p0, p1) = (powers[k].ln(), powers[k + 1].ln());
    let f = (p.ln() - p0) / (p1 - p0);
    Some(counts[k] + f * (counts[k + 1] - counts[k]))
}

/// Smallest average power whose measured photon budget reaches
/// `target_pe`, scanning 400 log-spaced points where `C(2p)` is known.
fn required_from_counts(powers: &[f64], counts: &[f64], data_rate: f64, target_pe: f64) -> Result<f64> {
    let dark = counts[0];
    let lambda_b = dark / data_rate;
    let pe_at = |p: f64| -> Result<Option<f64>> {
        let Some(c) = interp_counts(powers, counts, 2.0 * p) else {
            return Ok(None);
        };
        let budget = PhotonBudget::new(((c - dark) / data_rate).max(0.0), lambda_b)?;
        Ok(Some(optimal_threshold_auto(&budget).pe))
    };
    if powers.len() < 3 {
        return Ok(f64::NAN);
    }
    let lo = powers[1] / 2.0;
    let hi = powers[powers.len() - 1] / 2.0;
    let steps = 400;
    let mut prev = lo;
    for s in 0..=steps {
        let p = lo * (hi / lo).powf(s as f64 / steps as f64);
        if let Some(pe) = pe_at(p)? {
            if pe <= target_pe {
                if s == 0 {
                    return Ok(p);
                }
                let (mut a, mut b) = (prev, p);
                for _ in 0..60 {
                    let m = (a * b).sqrt();
                    match pe_at(m)? {
                        Some(v) if v <= target_pe => b = m,
                        _ => a = m,
                    }
                }
                return Ok(b);
            }
        }
        prev = p;
    }
    Ok(f64::NAN)
}

pub fn run_gbp_study(cfg: &LinkConfig, spec: &GbpSpec) -> Result<GbpTables> {
    spec.validate()?;
    cfg.sipm.validate()?;
    let n_cfg = spec.configs.len();
    let pulse_stats = spec
        .configs
        .par_iter()
        .enumerate()
        .map(|(j, &amp)| pulse_statistics(cfg, spec, amp, cfg.master_seed.child(j as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut powers = vec![0.0];
    powers.extend_from_slice(&spec.power_w);
    let points: Vec<(usize, usize)> = (0..n_cfg).flat_map(|j| (0..powers.len()).map(move |k| (j, k))).collect();
    let counts = points
        .par_iter()
        .enumerate()
        .map(|(idx, &(j, k))| {
            let amp = spec.configs[j];
            let seed = cfg.master_seed.child((n_cfg + idx) as u64);
            Ok(GbpCountRow {
                label: label(&amp),
                gain: amp.gain,
                bandwidth_hz: amp.bandwidth,
                avg_power_w: powers[k],
                counts_per_second: gbp_count_rate(cfg, spec, amp, powers[k], seed)?,
                theory_counts_per_second: detected_rate(cfg, powers[k])? + cfg.link.dark_count_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut required_power = Vec::new();
    for (j, amp) in spec.configs.iter().enumerate() {
        let c: Vec<f64> =
            counts[j * powers.len()..(j + 1) * powers.len()].iter().map(|r| r.counts_per_second).collect();
        for &rate in &spec.data_rates {
            required_power.push(GbpRequiredRow {
                label: label(amp),
                gain: amp.gain,
                bandwidth_hz: amp.bandwidth,
                data_rate: rate,
                required_avg_power_w: required_from_counts(&powers, &c, rate, spec.target_pe)?,
            });
        }
    }
    for &rate in &spec.data_rates {
        required_power.push(GbpRequiredRow {
            label: "poisson_limit".into(),
            gain: f64::NAN,
            bandwidth_hz: f64::NAN,
            data_rate: rate,
            required_avg_power_w: required_avg_power(
                cfg.link.dark_count_rate,
                rate,
                spec.target_pe,
                cfg.link.pde,
                cfg.link.wavelength,
            )?,
        });
    }
    Ok(GbpTables { pulse_stats, counts, required_power })
}

pub fn write_gbp_pulse_csv<W: Write>(out: W, rows: &[PulseStatRow]) -> Result<()> {
    write_rows(
        out,
        "label,gain,bandwidth_hz,gbp_hz,pulses,counted,fraction_counted,peak_mean_v,peak_sigma_v,noise_rms_v",
        rows,
        |r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                fmt_f64(r.gain),
                fmt_f64(r.bandwidth_hz),
                fmt_f64(r.gain * r.bandwidth_hz),
                r.pulses,
                r.counted,
                fmt_f64(r.fraction_counted()),
                fmt_f64(r.peak_mean_v),
                fmt_f64(r.peak_sigma_v),
                fmt_f64(r.noise_rms_v)
            )
        },
    )
}

pub fn write_gbp_counts_csv<W: Write>(out: W, rows: &[GbpCountRow]) -> Result<()> {
    write_rows(
        out,
        "label,gain,bandwidth_hz,gbp_hz,avg_power_w,counts_per_second,theory_counts_per_second",
        rows,
        |r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.label,
                fmt_f64(r.gain),
                fmt_f64(r.bandwidth_hz),
                fmt_f64(r.gain * r.bandwidth_hz),
                fmt_f64(r.avg_power_w),
                fmt_f64(r.counts_per_second),
                fmt_f64(r.theory_counts_per_second)
            )
        },
    )
}

pub fn write_gbp_required_csv<W: Write>(out: W, rows: &[GbpRequiredRow]) -> Result<()> {
    write_rows(
        out,
        "label,gain,bandwidth_hz,gbp_hz,data_rate_bps,required_avg_power_w,required_avg_power_dbm",
        rows,
        |r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.label,
                fmt_f64(r.gain),
                fmt_f64(r.bandwidth_hz),
                fmt_f64(r.gain * r.bandwidth_hz),
                fmt_f64(r.data_rate),
                fmt_f64(r.required_avg_power_w),
                fmt_f64(watts_to_dbm(r.required_avg_power_w))
            )
        },
    )
}
