//! Analog read-out chain: gain, single-pole bandwidth limit, electronic
//! noise, AC coupling, hysteresis comparator and the digital interface's
//! minimum pulse width.
//!
//! The chain order is fixed: gain, low-pass, optional AC coupling, then
//! noise referred to the filter output.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{stream, RngSeed};
use crate::waveform::Waveform;

/// Input-referred white noise density, V/√Hz.
///
/// Calibrated so that a 1 mV comparator threshold separates the three
/// gain/bandwidth regimes of a 120 MHz GBP budget (see the README).
pub const DEFAULT_INPUT_PSD: f64 = 1.0e-10;

/// Smallest threshold a commodity comparator resolves, volts.
pub const MIN_COMPARATOR_THRESHOLD: f64 = 1e-3;

/// Digital interface minimum detectable pulse width, seconds.
pub const DEFAULT_MIN_WIDTH: f64 = 5e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifierConfig {
    /// Linear voltage gain.
    pub gain: f64,
    /// -3 dB bandwidth, Hz.
    pub bandwidth: f64,
}

impl AmplifierConfig {
    pub fn new(gain: f64, bandwidth: f64) -> Result<Self> {
        let cfg = Self { gain, bandwidth };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Splits a gain-bandwidth product at the given gain.
    pub fn from_gbp(gbp: f64, gain: f64) -> Result<Self> {
        Self::new(gain, gbp / gain)
    }

    pub fn gbp(&self) -> f64 {
        self.gain * self.bandwidth
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(invalid(format!("gain must be > 0, got {}", self.gain)));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(invalid(format!("bandwidth must be > 0, got {}", self.bandwidth)));
        }
        Ok(())
    }

    pub fn check_sample_rate(&self, sample_rate: f64) -> Result<()> {
        if self.bandwidth >= sample_rate / 2.0 {
            return Err(invalid(format!(
                "bandwidth {} Hz must be below half the {} Hz sample rate",
                self.bandwidth, sample_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// V/√Hz, referred to the amplifier input.
    pub input_psd: f64,
    pub seed: RngSeed,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { input_psd: DEFAULT_INPUT_PSD, seed: RngSeed::default() }
    }
}

impl NoiseConfig {
    /// RMS noise at the output of a stage with the given gain and bandwidth.
    pub fn rms(&self, gain: f64, bandwidth: f64) -> f64 {
        self.input_psd * bandwidth.sqrt() * gain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparatorConfig {
    /// Upper threshold, volts.
    pub v_th: f64,
    /// Upper minus lower threshold, volts.
    pub hysteresis: f64,
}

impl ComparatorConfig {
    pub fn new(v_th: f64, hysteresis: f64) -> Result<Self> {
        if !(hysteresis >= 0.0 && v_th > hysteresis && v_th.is_finite()) {
            return Err(invalid(format!("need v_th > hysteresis >= 0, got v_th={v_th}, hysteresis={hysteresis}")));
        }
        Ok(Self { v_th, hysteresis })
    }

    pub fn lower(&self) -> f64 {
        self.v_th - self.hysteresis
    }
}

/// How the hysteresis follows the threshold in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HysteresisRule {
    /// Fixed width in volts.
    Fixed(f64),
    /// Fraction of the threshold.
    Fraction(f64),
}

impl HysteresisRule {
    pub fn comparator(&self, v_th: f64) -> Result<ComparatorConfig> {
        match *self {
            HysteresisRule::Fixed(h) => ComparatorConfig::new(v_th, h),
            HysteresisRule::Fraction(f) => ComparatorConfig::new(v_th, f * v_th),
        }
    }
}

/// Comparator output as edge timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DigitalPulseTrain {
    pub rises: Vec<f64>,
    pub falls: Vec<f64>,
}

impl DigitalPulseTrain {
    pub fn len(&self) -> usize {
        self.rises.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rises.is_empty()
    }

    /// Alternation invariant: rise, fall, rise, ... with at most one
    /// trailing unmatched rise.
    pub fn is_well_formed(&self) -> bool {
        let extra = self.rises.len().wrapping_sub(self.falls.len());
        if extra > 1 {
            return false;
        }
        let paired = self.rises.iter().zip(&self.falls).all(|(r, f)| r <= f);
        let ordered = self.falls.iter().zip(self.rises.iter().skip(1)).all(|(f, r)| f <= r);
        paired && ordered
    }
}

/// One-pole low-pass state, `y += α(x − y)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OnePole {
    alpha: f64,
    state: f64,
}

impl OnePole {
    pub(crate) fn new(fc: f64, sample_rate: f64) -> Result<Self> {
        if !(fc > 0.0 && fc < sample_rate / 2.0) {
            return Err(invalid(format!("cutoff {fc} Hz must lie in (0, {}) Hz", sample_rate / 2.0)));
        }
        let alpha = 1.0 - (-2.0 * std::f64::consts::PI * fc / sample_rate).exp();
        Ok(Self { alpha, state: 0.0 })
    }

    #[inline]
    pub(crate) fn low(&mut self, x: f64) -> f64 {
        self.state += self.alpha * (x - self.state);
        self.state
    }

    #[inline]
    pub(crate) fn high(&mut self, x: f64) -> f64 {
        x - self.low(x)
    }
}

/// Continuing white Gaussian noise source.
pub(crate) struct NoiseSource {
    rng: ChaCha8Rng,
    sigma: f64,
}

impl NoiseSource {
    pub(crate) fn new(cfg: &NoiseConfig, sigma: f64) -> Self {
        Self { rng: cfg.seed.rng(stream::NOISE), sigma }
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) -> f64 {
        if self.sigma == 0.0 {
            return x;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        x + self.sigma * z
    }
}

/// Two-state hysteresis comparator that can be fed in consecutive blocks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Comparator {
    cfg: ComparatorConfig,
    high: bool,
}

impl Comparator {
    pub(crate) fn new(cfg: ComparatorConfig) -> Self {
        Self { cfg, high: false }
    }

    #[inline]
    pub(crate) fn step(&mut self, v: f64, t: f64, out: &mut DigitalPulseTrain) {
        if self.high {
            if v < self.cfg.lower() {
                self.high = false;
                out.falls.push(t);
            }
        } else if v > self.cfg.v_th {
            self.high = true;
            out.rises.push(t);
        }
    }
}

pub fn first_order_lpf(w: &Waveform, fc: f64) -> Result<Waveform> {
    let mut pole = OnePole::new(fc, w.sample_rate)?;
    let samples = w.samples.iter().map(|&x| pole.low(x)).collect();
    Ok(Waveform { sample_rate: w.sample_rate, t0: w.t0, samples })
}

/// AC coupling: the complement of [`first_order_lpf`].
pub fn dc_block(w: &Waveform, fc_hp: f64) -> Result<Waveform> {
    let mut pole = OnePole::new(fc_hp, w.sample_rate)?;
    let samples = w.samples.iter().map(|&x| pole.high(x)).collect();
    Ok(Waveform { sample_rate: w.sample_rate, t0: w.t0, samples })
}

pub fn apply_gain(w: &Waveform, gain: f64) -> Result<Waveform> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(invalid(format!("gain must be > 0, got {gain}")));
    }
    let samples = w.samples.iter().map(|&x| x * gain).collect();
    Ok(Waveform { sample_rate: w.sample_rate, t0: w.t0, samples })
}

/// Adds white noise of RMS `input_psd·√bandwidth·gain`.
pub fn add_noise(w: &Waveform, cfg: &NoiseConfig, effective_bandwidth: f64, gain: f64) -> Result<Waveform> {
    if !(effective_bandwidth > 0.0) {
        return Err(invalid("effective_bandwidth must be > 0"));
    }
    if !(cfg.input_psd >= 0.0) {
        return Err(invalid("input_psd must be >= 0"));
    }
    let mut src = NoiseSource::new(cfg, cfg.rms(gain, effective_bandwidth));
    let samples = w.samples.iter().map(|&x| src.add(x)).collect();
    Ok(Waveform { sample_rate: w.sample_rate, t0: w.t0, samples })
}

/// Gain, then the amplifier's single pole, then output-referred noise.
pub fn gbp_chain(w: &Waveform, amp: &AmplifierConfig, noise: &NoiseConfig) -> Result<Waveform> {
    amp.validate()?;
    amp.check_sample_rate(w.sample_rate)?;
    let gained = apply_gain(w, amp.gain)?;
    let filtered = first_order_lpf(&gained, amp.bandwidth)?;
    add_noise(&filtered, noise, amp.bandwidth, amp.gain)
}

/// Edges are stamped at the sample that crosses; the comparator starts low.
pub fn comparator(w: &Waveform, cfg: &ComparatorConfig) -> DigitalPulseTrain {
    let mut cmp = Comparator::new(*cfg);
    let mut out = DigitalPulseTrain::default();
    for (i, &v) in w.samples.iter().enumerate() {
        cmp.step(v, w.time(i), &mut out);
    }
    out
}

/// Drops pulses narrower than `min_width`. A trailing pulse without a
/// falling edge is kept.
pub fn min_width_filter(train: &DigitalPulseTrain, min_width: f64) -> DigitalPulseTrain {
    // edge stamps come from i/fs, so allow for one rounding step
    let limit = min_width * (1.0 - 1e-9);
    let mut out = DigitalPulseTrain::default();
    for (k, &r) in train.rises.iter().enumerate() {
        match train.falls.get(k) {
            Some(&f) => {
                if f - r >= limit {
                    out.rises.push(r);
                    out.falls.push(f);
                }
            }
            None => out.rises.push(r),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub v_th: f64,
    pub counts_per_second: f64,
}

/// Count rate versus comparator threshold.
pub fn threshold_sweep(
    w: &Waveform,
    v_th_grid: &[f64],
    rule: HysteresisRule,
    min_width: f64,
) -> Result<Vec<ThresholdRow>> {
    if v_th_grid.windows(2).any(|p| p[1] < p[0]) {
        return Err(invalid("threshold grid must be sorted ascending"));
    }
    let duration = w.duration();
    v_th_grid
        .iter()
        .map(|&v_th| {
            let cfg = rule.comparator(v_th)?;
            let train = min_width_filter(&comparator(w, &cfg), min_width);
            Ok(ThresholdRow { v_th, counts_per_second: train.len() as f64 / duration })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{measure_fwhm, synth_waveform, SiPMParams};
    use crate::photon::EventTimes;
    use proptest::prelude::*;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(1e9, 0.0, samples).unwrap()
    }

    #[test]
    fn lpf_unity_dc_gain() {
        let fs = 1e9;
        let fc = 10e6;
        let tau_samples = fs / (2.0 * std::f64::consts::PI * fc);
        let n = (5.0 * tau_samples).ceil() as usize + 1;
        let out = first_order_lpf(&Waveform::new(fs, 0.0, vec![2.5; n]).unwrap(), fc).unwrap();
        assert!((out.samples[n - 1] - 2.5).abs() / 2.5 < 0.01);
        let long = first_order_lpf(&Waveform::new(fs, 0.0, vec![2.5; 10 * n]).unwrap(), fc).unwrap();
        assert!((long.samples[10 * n - 1] - 2.5).abs() / 2.5 < 0.001);
        assert!(first_order_lpf(&long, 0.6e9).is_err());
        assert!(first_order_lpf(&long, 0.0).is_err());
    }

    #[test]
    fn lpf_minus_3db_at_cutoff() {
        for &(fs, fc) in &[(10e9, 500e6), (1e9, 6e6), (1e9, 2e6)] {
            let n = (200.0 * fs / fc) as usize;
            let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * fc * i as f64 / fs).sin()).collect();
            let y = first_order_lpf(&Waveform::new(fs, 0.0, x).unwrap(), fc).unwrap();
            let tail = &y.samples[n / 2..];
            let amp = tail.iter().fold(0f64, |m, v| m.max(v.abs()));
            let db = 20.0 * amp.log10();
            assert!((db + 3.0103).abs() < 0.5, "fs={fs} fc={fc}: {db} dB");
        }
    }

    #[test]
    fn wideband_filter_keeps_pulse_width() {
        let t = SiPMParams::default().template().unwrap();
        let ev = EventTimes { times: vec![10e-9], duration: 300e-9 };
        let w = synth_waveform(&ev, &t, 10e9, 300e-9).unwrap();
        let before = measure_fwhm(&w).unwrap();
        let after = measure_fwhm(&first_order_lpf(&w, 500e6).unwrap()).unwrap();
        assert!((after - before).abs() / before < 0.05, "{before} -> {after}");
    }

    #[test]
    fn gain_is_linear() {
        let w = wave(vec![0.1, -0.2, 0.3]);
        assert_eq!(apply_gain(&w, 1.0).unwrap(), w);
        let pulse = wave(vec![0.0, 0.66e-3, 0.0]);
        assert!((apply_gain(&pulse, 20.0).unwrap().max() - 13.2e-3).abs() < 1e-15);
        let ab = apply_gain(&apply_gain(&w, 4.0).unwrap(), 0.5).unwrap();
        assert_eq!(ab, apply_gain(&w, 2.0).unwrap());
        assert!(apply_gain(&w, 0.0).is_err());
    }

    fn std_dev(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
    }

    #[test]
    fn noise_levels() {
        let w = Waveform::zeros(1e9, 1_000_000);
        let silent = NoiseConfig { input_psd: 0.0, seed: RngSeed(1) };
        assert_eq!(add_noise(&w, &silent, 500e6, 1.0).unwrap(), w);
        let psd = 0.2e-3 / 500e6f64.sqrt();
        let cfg = NoiseConfig { input_psd: psd, seed: RngSeed(1) };
        let s = std_dev(&add_noise(&w, &cfg, 500e6, 1.0).unwrap().samples);
        assert!((s - 0.2e-3).abs() / 0.2e-3 < 0.02, "{s}");
        let half = std_dev(&add_noise(&w, &cfg, 250e6, 1.0).unwrap().samples);
        let ratio = s / half;
        assert!((ratio - 2f64.sqrt()).abs() / 2f64.sqrt() < 0.03, "{ratio}");
        assert_eq!(add_noise(&w, &cfg, 1e6, 3.0).unwrap(), add_noise(&w, &cfg, 1e6, 3.0).unwrap());
    }

    #[test]
    fn comparator_basic() {
        let cfg = ComparatorConfig::new(1.0, 0.25).unwrap();
        let t = comparator(&wave(vec![0.0, 0.5, 1.5, 2.0, 1.2, 0.5, 0.0]), &cfg);
        assert_eq!(t.rises, vec![2e-9]);
        assert_eq!(t.falls, vec![5e-9]);
        assert!(comparator(&wave(vec![0.0, 0.9, 0.0]), &cfg).is_empty());
        assert!(ComparatorConfig::new(1.0, 1.0).is_err());
        assert!(ComparatorConfig::new(1.0, -0.1).is_err());
    }

    #[test]
    fn hysteresis_ignores_ringing_tail() {
        // tail wobbles between the lower and upper thresholds
        let cfg = ComparatorConfig::new(18e-3, 5e-3).unwrap();
        let mut s = vec![0.0, 10e-3, 40e-3, 30e-3];
        for k in 0..20 {
            s.push(if k % 2 == 0 { 14e-3 } else { 19e-3 });
        }
        s.extend([5e-3, 0.0]);
        let t = comparator(&wave(s.clone()), &cfg);
        assert_eq!(t.len(), 1);
        assert_eq!(t.falls.len(), 1);
        // a plain threshold at the same level retriggers
        let naive = comparator(&wave(s), &ComparatorConfig::new(18e-3, 0.0).unwrap());
        assert!(naive.len() > 5);
    }

    #[test]
    fn min_width_behaviour() {
        let train = DigitalPulseTrain { rises: vec![0.0, 10e-9, 30e-9, 50e-9], falls: vec![4e-9, 16e-9, 35e-9] };
        assert_eq!(min_width_filter(&train, 0.0), train);
        let kept = min_width_filter(&train, DEFAULT_MIN_WIDTH);
        assert_eq!(kept.rises, vec![10e-9, 30e-9, 50e-9]);
        assert!(kept.is_well_formed());
    }

    #[test]
    fn min_width_on_sampled_pulses() {
        let cfg = ComparatorConfig::new(0.5, 0.1).unwrap();
        let mut s = vec![0.0; 40];
        s[5..9].iter_mut().for_each(|v| *v = 1.0); // 4 ns
        s[20..26].iter_mut().for_each(|v| *v = 1.0); // 6 ns
        let t = min_width_filter(&comparator(&wave(s), &cfg), DEFAULT_MIN_WIDTH);
        assert_eq!(t.rises, vec![20e-9]);
    }

    #[test]
    fn dc_block_behaviour() {
        let fs = 1e9;
        let w = Waveform::new(fs, 0.0, vec![1.0; 200_000]).unwrap();
        let y = dc_block(&w, 1e6).unwrap();
        assert!(y.samples.last().unwrap().abs() < 1e-6);
        // isolated pulse, corner far below 1/FWHM
        let t = SiPMParams::default().template().unwrap();
        let ev = EventTimes { times: vec![50e-9], duration: 1e-6 };
        let p = synth_waveform(&ev, &t, fs, 1e-6).unwrap();
        let q = dc_block(&p, 100e3).unwrap();
        assert!((q.max() - p.max()).abs() / p.max() < 0.05);
        assert!(dc_block(&w, 0.0).is_err());
    }

    #[test]
    fn sweep_above_max_counts_nothing() {
        let w = wave(vec![0.0, 1.0, 0.0, 2.0, 0.0]);
        let rows = threshold_sweep(&w, &[3.0, 4.0], HysteresisRule::Fraction(0.25), 0.0).unwrap();
        assert!(rows.iter().all(|r| r.counts_per_second == 0.0));
        let rows = threshold_sweep(&w, &[0.5, 1.5], HysteresisRule::Fixed(0.1), 0.0).unwrap();
        assert_eq!(rows[0].counts_per_second, 2.0 / 5e-9);
        assert_eq!(rows[1].counts_per_second, 1.0 / 5e-9);
        assert!(threshold_sweep(&w, &[2.0, 1.0], HysteresisRule::Fixed(0.1), 0.0).is_err());
    }

    #[test]
    fn gbp_chain_matches_composition() {
        let t = SiPMParams::default().template().unwrap();
        let ev = EventTimes { times: vec![20e-9, 300e-9], duration: 2e-6 };
        let w = synth_waveform(&ev, &t, 1e9, 2e-6).unwrap();
        let amp = AmplifierConfig::new(20.0, 6e6).unwrap();
        let noise = NoiseConfig::default();
        let chained = gbp_chain(&w, &amp, &noise).unwrap();
        let manual =
            add_noise(&first_order_lpf(&apply_gain(&w, 20.0).unwrap(), 6e6).unwrap(), &noise, 6e6, 20.0).unwrap();
        assert_eq!(chained, manual);
        assert!((AmplifierConfig::from_gbp(120e6, 20.0).unwrap().gbp() - 120e6).abs() / 120e6 < 1e-9);
        assert!(gbp_chain(&w, &AmplifierConfig::new(1.0, 500e6).unwrap(), &noise).is_err());
    }

    proptest! {
        #[test]
        fn comparator_output_alternates(samples in prop::collection::vec(-1.0f64..1.0, 1..400), v_th in 0.05f64..0.8, frac in 0.0f64..0.9) {
            let cfg = ComparatorConfig::new(v_th, v_th * frac).unwrap();
            let t = comparator(&wave(samples), &cfg);
            prop_assert!(t.is_well_formed());
            prop_assert!(min_width_filter(&t, 3e-9).is_well_formed());
        }

        #[test]
        fn zero_hysteresis_is_plain_threshold(samples in prop::collection::vec(-1.0f64..1.0, 1..400), v_th in 0.0f64..0.8) {
            let w = wave(samples.clone());
            let t = comparator(&w, &ComparatorConfig::new(v_th, 0.0).unwrap());
            let mut rises = Vec::new();
            let mut falls = Vec::new();
            let mut prev = false;
            for (i, &v) in samples.iter().enumerate() {
                let above = v > v_th;
                if above && !prev { rises.push(w.time(i)); }
                if !above && prev && v < v_th { falls.push(w.time(i)); }
                prev = if above { true } else if v < v_th { false } else { prev };
            }
            prop_assert_eq!(t.rises, rises);
            prop_assert_eq!(t.falls, falls);
        }

        #[test]
        fn sweep_counts_drop_with_threshold(heights in prop::collection::vec(0.0f64..1.0, 1..60), noise in prop::collection::vec(-0.02f64..0.02, 600)) {
            // separated unipolar pulses on a small noise floor
            let mut s = Vec::new();
            for (k, h) in heights.iter().enumerate() {
                for j in 0..10 {
                    s.push(noise[(10 * k + j) % noise.len()]);
                }
                s.extend([0.5 * h, *h, 0.7 * h, 0.3 * h]);
            }
            let w = wave(s);
            let grid: Vec<f64> = (2..20).map(|k| 0.05 * k as f64).collect();
            let rows = threshold_sweep(&w, &grid, HysteresisRule::Fraction(0.25), 0.0).unwrap();
            for p in rows.windows(2) {
                prop_assert!(p[1].counts_per_second <= p[0].counts_per_second);
            }
        }
    }
}
