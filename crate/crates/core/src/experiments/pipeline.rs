//! Streaming waveform pipeline.
//!
//! The analog trace is never held in full: pulses are rendered into a
//! fixed-size block, pushed sample by sample through gain, filters, noise
//! and comparators, and the block is reused. Every stage keeps its state
//! across blocks and sample `i` is always stamped `i / sample_rate`, so the
//! output does not depend on the block size.

use serde::{Deserialize, Serialize};

use crate::analog::{
    min_width_filter, AmplifierConfig, Comparator, ComparatorConfig, DigitalPulseTrain, NoiseConfig, NoiseSource,
    OnePole,
};
use crate::error::{invalid, Result};
use crate::frontend::{
    accumulate_pulses, check_resolution, draw_amplitudes, microcell_filter, PulseTemplate, SiPMParams,
};
use crate::photon::{homogeneous_poisson, merge, EventTimes};
use crate::rng::{stream, RngSeed};

pub(crate) const CHUNK_SAMPLES: usize = 1 << 20;

/// Avalanche times with their gain factors.
#[derive(Debug, Clone, Copy)]
pub struct PulseSource<'a> {
    pub times: &'a [f64],
    pub amplitudes: &'a [f64],
    pub template: PulseTemplate,
}

/// Everything between the SiPM output and the counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub amp: AmplifierConfig,
    /// V/√Hz at the amplifier input.
    pub input_psd: f64,
    pub dc_block_hz: Option<f64>,
    /// One output train per comparator; all see the same analog trace.
    pub comparators: Vec<ComparatorConfig>,
    pub min_width: f64,
}

impl ChainSettings {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        self.amp.validate()?;
        self.amp.check_sample_rate(sample_rate)?;
        if let Some(fc) = self.dc_block_hz {
            if !(fc > 0.0 && fc < sample_rate / 2.0) {
                return Err(invalid(format!("dc_block_hz {fc} must lie in (0, {})", sample_rate / 2.0)));
            }
        }
        if !(self.input_psd.is_finite() && self.input_psd >= 0.0) {
            return Err(invalid("input_psd must be >= 0"));
        }
        if !(self.min_width.is_finite() && self.min_width >= 0.0) {
            return Err(invalid("min_width must be >= 0"));
        }
        if self.comparators.is_empty() {
            return Err(invalid("at least one comparator is required"));
        }
        Ok(())
    }

    /// RMS of the white noise added after the filter.
    pub fn noise_rms(&self) -> f64 {
        self.input_psd * self.amp.bandwidth.sqrt() * self.amp.gain
    }
}

/// Signal events merged with dark counts, thinned by microcell dead time,
/// with one gain factor per surviving avalanche.
pub(crate) fn sipm_events(
    signal: &EventTimes,
    dark_rate: f64,
    sipm: &SiPMParams,
    seed: RngSeed,
) -> Result<(EventTimes, Vec<f64>)> {
    let dark = homogeneous_poisson(dark_rate, signal.duration, seed, stream::DARK)?;
    let all = merge(signal, &dark);
    let fired = microcell_filter(&all, sipm, seed, stream::MICROCELL)?;
    let amps = draw_amplitudes(fired.len(), sipm.amplitude_spread, seed, stream::AMPLITUDE)?;
    Ok((fired, amps))
}

/// Runs `n_samples` samples through the chain and returns one
/// width-filtered train per comparator.
pub fn run_chain(
    src: &PulseSource,
    chain: &ChainSettings,
    sample_rate: f64,
    n_samples: u64,
    seed: RngSeed,
) -> Result<Vec<DigitalPulseTrain>> {
    run_chain_with(src, chain, sample_rate, n_samples, seed, CHUNK_SAMPLES, |_, _| {})
}

/// As [`run_chain`], with an explicit block size and a probe that sees
/// every comparator input sample.
pub(crate) fn run_chain_with(
    src: &PulseSource,
    chain: &ChainSettings,
    sample_rate: f64,
    n_samples: u64,
    seed: RngSeed,
    chunk: usize,
    mut probe: impl FnMut(u64, f64),
) -> Result<Vec<DigitalPulseTrain>> {
    chain.validate(sample_rate)?;
    check_resolution(&src.template, sample_rate)?;
    if src.times.len() != src.amplitudes.len() {
        return Err(invalid("one amplitude per event required"));
    }
    if chunk == 0 {
        return Err(invalid("chunk must be >= 1"));
    }
    let fs = sample_rate;
    let gain = chain.amp.gain;
    let mut lpf = OnePole::new(chain.amp.bandwidth, fs)?;
    let mut hpf = chain.dc_block_hz.map(|fc| OnePole::new(fc, fs)).transpose()?;
    let noise_cfg = NoiseConfig { input_psd: chain.input_psd, seed };
    let mut noise = NoiseSource::new(&noise_cfg, chain.noise_rms());
    let mut comparators: Vec<Comparator> = chain.comparators.iter().map(|&c| Comparator::new(c)).collect();
    let mut trains = vec![DigitalPulseTrain::default(); comparators.len()];

    let support = src.template.support();
    let times = src.times;
    let mut buf = vec![0.0; chunk.min(n_samples as usize).max(1)];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut start = 0u64;
    while start < n_samples {
        let len = (buf.len() as u64).min(n_samples - start) as usize;
        let end = start + len as u64;
        let block = &mut buf[..len];
        block.fill(0.0);
        // same index arithmetic as accumulate_pulses, so no event is missed
        while lo < times.len() && ((times[lo] + support) * fs).ceil() <= start as f64 {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < times.len() && (times[hi] * fs).ceil() < end as f64 {
            hi += 1;
        }
        accumulate_pulses(block, start, fs, &times[lo..hi], Some(&src.amplitudes[lo..hi]), &src.template);
        for (j, &x) in block.iter().enumerate() {
            let i = start + j as u64;
            let mut v = lpf.low(gain * x);
            if let Some(h) = hpf.as_mut() {
                v = h.high(v);
            }
            v = noise.add(v);
            probe(i, v);
            let t = i as f64 / fs;
            for (c, out) in comparators.iter_mut().zip(trains.iter_mut()) {
                c.step(v, t, out);
            }
        }
        start = end;
    }
    Ok(trains.iter().map(|t| min_width_filter(t, chain.min_width)).collect())
}
