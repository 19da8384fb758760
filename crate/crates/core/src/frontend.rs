//! SiPM front end: microcell dead time and single-photon pulse synthesis.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::photon::EventTimes;
use crate::rng::RngSeed;
use crate::waveform::Waveform;

/// Pulses are truncated this many fall constants after onset.
const SUPPORT_FALL_CONSTANTS: f64 = 20.0;

/// Above this many cells the last-fire table is kept sparse.
const DENSE_CELL_LIMIT: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiPMParams {
    pub n_microcells: u64,
    /// Seconds a microcell stays blind after firing.
    pub recovery_time: f64,
    /// Single-photon peak at the SiPM output, volts.
    pub single_pe_amplitude: f64,
    /// Relative sigma of the per-avalanche amplitude.
    pub amplitude_spread: f64,
    pub tau_rise: f64,
    /// Starting value; replaced by calibration when `target_fwhm` is set.
    pub tau_fall: f64,
    /// Calibrate `tau_fall` to this FWHM (seconds).
    pub target_fwhm: Option<f64>,
}

impl Default for SiPMParams {
    fn default() -> Self {
        Self {
            n_microcells: 2880,
            recovery_time: 30e-9,
            single_pe_amplitude: 0.24e-3,
            amplitude_spread: 0.05,
            tau_rise: 1e-9,
            tau_fall: 10e-9,
            target_fwhm: Some(8e-9),
        }
    }
}

impl SiPMParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_microcells == 0 {
            return Err(invalid("n_microcells must be >= 1"));
        }
        if !(self.recovery_time.is_finite() && self.recovery_time > 0.0) {
            return Err(invalid("recovery_time must be > 0"));
        }
        if !(self.single_pe_amplitude.is_finite() && self.single_pe_amplitude >= 0.0) {
            return Err(invalid("single_pe_amplitude must be >= 0"));
        }
        if !(self.amplitude_spread.is_finite() && self.amplitude_spread >= 0.0) {
            return Err(invalid("amplitude_spread must be >= 0"));
        }
        if !(self.tau_rise > 0.0 && self.tau_fall > self.tau_rise) {
            return Err(invalid("need tau_fall > tau_rise > 0"));
        }
        Ok(())
    }

    pub fn template(&self) -> Result<PulseTemplate> {
        self.validate()?;
        match self.target_fwhm {
            Some(fwhm) => PulseTemplate::calibrated(self.single_pe_amplitude, self.tau_rise, fwhm),
            None => PulseTemplate::new(self.single_pe_amplitude, self.tau_rise, self.tau_fall),
        }
    }

    /// Count rate ceiling when every cell fires once per recovery time.
    pub fn max_count_rate(&self) -> f64 {
        self.n_microcells as f64 / self.recovery_time
    }
}

/// Double-exponential single-photon pulse normalised to a peak of
/// `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTemplate {
    pub amplitude: f64,
    pub tau_rise: f64,
    pub tau_fall: f64,
    peak_norm: f64,
}

impl PulseTemplate {
    pub fn new(amplitude: f64, tau_rise: f64, tau_fall: f64) -> Result<Self> {
        if !(tau_rise > 0.0 && tau_fall > tau_rise && tau_fall.is_finite()) {
            return Err(invalid("need tau_fall > tau_rise > 0"));
        }
        let t_peak = Self::peak_time_of(tau_rise, tau_fall);
        let peak_norm = (-t_peak / tau_fall).exp() - (-t_peak / tau_rise).exp();
        Ok(Self { amplitude, tau_rise, tau_fall, peak_norm })
    }

    /// Template whose fall constant is bisected until the FWHM hits
    /// `target_fwhm` within 0.1 ps.
    pub fn calibrated(amplitude: f64, tau_rise: f64, target_fwhm: f64) -> Result<Self> {
        let mut lo = tau_rise * 1.0001;
        let mut hi = tau_rise.max(target_fwhm) * 100.0;
        let fwhm_at = |tf: f64| PulseTemplate::new(1.0, tau_rise, tf).map(|t| t.fwhm());
        if fwhm_at(lo)? > target_fwhm || fwhm_at(hi)? < target_fwhm {
            return Err(invalid(format!("FWHM {target_fwhm} s unreachable with tau_rise {tau_rise} s")));
        }
        while hi - lo > 1e-16 {
            let mid = 0.5 * (lo + hi);
            if fwhm_at(mid)? < target_fwhm {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::new(amplitude, tau_rise, 0.5 * (lo + hi))
    }

    fn peak_time_of(tau_rise: f64, tau_fall: f64) -> f64 {
        (tau_fall / tau_rise).ln() * tau_rise * tau_fall / (tau_fall - tau_rise)
    }

    pub fn peak_time(&self) -> f64 {
        Self::peak_time_of(self.tau_rise, self.tau_fall)
    }

    /// Pulse duration after which the template is treated as zero.
    pub fn support(&self) -> f64 {
        SUPPORT_FALL_CONSTANTS * self.tau_fall
    }

    pub fn shape(&self, t: f64) -> f64 {
        if !(0.0..self.support()).contains(&t) {
            return 0.0;
        }
        self.amplitude * ((-t / self.tau_fall).exp() - (-t / self.tau_rise).exp()) / self.peak_norm
    }

    /// Continuous-time FWHM.
    pub fn fwhm(&self) -> f64 {
        let unit = |t: f64| ((-t / self.tau_fall).exp() - (-t / self.tau_rise).exp()) / self.peak_norm;
        let tp = self.peak_time();
        let bisect = |mut a: f64, mut b: f64, rising: bool| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (unit(m) < 0.5) == rising {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let left = bisect(0.0, tp, true);
        let right = bisect(tp, self.support(), false);
        right - left
    }

    /// Integral of the pulse, volt-seconds.
    pub fn area(&self) -> f64 {
        self.amplitude * (self.tau_fall - self.tau_rise) / self.peak_norm
    }
}

/// Non-paralyzable per-cell dead time.
///
/// Each event lands on a uniformly random microcell and is dropped if that
/// cell fired less than `recovery_time` earlier. Dropped events do not
/// restart the dead window.
pub fn microcell_filter(events: &EventTimes, params: &SiPMParams, seed: RngSeed, stream: u64) -> Result<EventTimes> {
    params.validate()?;
    if !events.is_sorted() {
        return Err(invalid("events must be sorted"));
    }
    let mut rng = seed.rng(stream);
    let n = params.n_microcells;
    let tau = params.recovery_time;
    let mut out = EventTimes { times: Vec::with_capacity(events.len()), duration: events.duration };
    if n <= DENSE_CELL_LIMIT {
        let mut last = vec![f64::NEG_INFINITY; n as usize];
        for &t in &events.times {
            let cell = rng.random_range(0..n) as usize;
            if t - last[cell] >= tau {
                last[cell] = t;
                out.times.push(t);
            }
        }
    } else {
        let mut last: HashMap<u64, f64> = HashMap::new();
        for &t in &events.times {
            let cell = rng.random_range(0..n);
            let prev = last.entry(cell).or_insert(f64::NEG_INFINITY);
            if t - *prev >= tau {
                *prev = t;
                out.times.push(t);
            }
        }
    }
    Ok(out)
}

/// Per-avalanche gain factors, `Normal(1, spread)` clipped at zero.
pub fn draw_amplitudes(n: usize, spread: f64, seed: RngSeed, stream: u64) -> Result<Vec<f64>> {
    if spread == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let dist = Normal::new(1.0, spread).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seed.rng(stream);
    Ok((0..n).map(|_| dist.sample(&mut rng).max(0.0)).collect())
}

pub(crate) fn check_resolution(template: &PulseTemplate, sample_rate: f64) -> Result<()> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(invalid("sample_rate must be > 0"));
    }
    if sample_rate * template.tau_rise < 1.0 - 1e-9 {
        return Err(invalid(format!("sample rate {sample_rate} Hz cannot resolve a {} s rise", template.tau_rise)));
    }
    Ok(())
}

/// Adds pulses into `buf`, whose first element is global sample
/// `start_index`. Sample `i` sits at time `i / sample_rate`.
pub(crate) fn accumulate_pulses(
    buf: &mut [f64],
    start_index: u64,
    sample_rate: f64,
    times: &[f64],
    amplitudes: Option<&[f64]>,
    template: &PulseTemplate,
) {
    let end_index = start_index + buf.len() as u64;
    let support = template.support();
    for (k, &te) in times.iter().enumerate() {
        let scale = amplitudes.map_or(1.0, |a| a[k]);
        let first = ((te * sample_rate).ceil().max(0.0) as u64).max(start_index);
        let last = (((te + support) * sample_rate).ceil().max(0.0) as u64).min(end_index);
        for i in first..last {
            let dt = i as f64 / sample_rate - te;
            buf[(i - start_index) as usize] += scale * template.shape(dt);
        }
    }
}

/// Linear superposition of one template per event.
pub fn synth_waveform(
    events: &EventTimes,
    template: &PulseTemplate,
    sample_rate: f64,
    duration: f64,
) -> Result<Waveform> {
    synth_waveform_scaled(events, None, template, sample_rate, duration)
}

/// As [`synth_waveform`] with a per-event amplitude factor.
pub fn synth_waveform_scaled(
    events: &EventTimes,
    amplitudes: Option<&[f64]>,
    template: &PulseTemplate,
    sample_rate: f64,
    duration: f64,
) -> Result<Waveform> {
    check_resolution(template, sample_rate)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid("duration must be > 0"));
    }
    if let Some(a) = amplitudes {
        if a.len() != events.len() {
            return Err(invalid("one amplitude per event required"));
        }
    }
    let len = (duration * sample_rate).round() as usize;
    let mut samples = vec![0.0; len];
    accumulate_pulses(&mut samples, 0, sample_rate, &events.times, amplitudes, template);
    Ok(Waveform { sample_rate, t0: 0.0, samples })
}

/// Width at half of the global maximum, linearly interpolated between
/// samples.
pub fn measure_fwhm(w: &Waveform) -> Result<f64> {
    let s = &w.samples;
    let (peak_idx, peak) =
        s.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let floor = s.iter().copied().fold(f64::INFINITY, f64::min);
    if s.is_empty() || peak <= 0.0 || peak == floor {
        return Err(Error::Measurement("flat waveform".into()));
    }
    let half = peak / 2.0;
    let mut l = peak_idx;
    while l > 0 && s[l - 1] >= half {
        l -= 1;
    }
    let mut r = peak_idx;
    while r + 1 < s.len() && s[r + 1] >= half {
        r += 1;
    }
    if l == 0 || r + 1 == s.len() {
        return Err(Error::Measurement("pulse not contained in the window".into()));
    }
    if s[..l].iter().chain(&s[r + 1..]).any(|&v| v >= half) {
        return Err(Error::Measurement("more than one pulse above half maximum".into()));
    }
    let left = (l - 1) as f64 + (half - s[l - 1]) / (s[l] - s[l - 1]);
    let right = r as f64 + (s[r] - half) / (s[r] - s[r + 1]);
    Ok((right - left) / w.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon::homogeneous_poisson;

    fn template() -> PulseTemplate {
        SiPMParams::default().template().unwrap()
    }

    #[test]
    fn calibration_hits_target_fwhm() {
        let t = template();
        assert!((t.fwhm() - 8e-9).abs() < 0.1e-9, "{}", t.fwhm());
        assert!(t.tau_fall > t.tau_rise);
        assert!((t.shape(t.peak_time()) - t.amplitude).abs() < 1e-15);
        assert_eq!(t.shape(-1e-12), 0.0);
    }

    #[test]
    fn single_pulse_peak_and_width() {
        let t = template();
        let ev = EventTimes { times: vec![20e-9], duration: 400e-9 };
        let w = synth_waveform(&ev, &t, 1e9, 400e-9).unwrap();
        assert!((w.max() - t.amplitude).abs() / t.amplitude < 0.02);
        let fwhm = measure_fwhm(&w).unwrap();
        assert!((fwhm - 8e-9).abs() < 0.5e-9, "{fwhm}");
    }

    #[test]
    fn coincident_pulses_add() {
        let t = template();
        let one = synth_waveform(&EventTimes { times: vec![10e-9], duration: 200e-9 }, &t, 10e9, 200e-9).unwrap();
        let two =
            synth_waveform(&EventTimes { times: vec![10e-9, 10e-9], duration: 200e-9 }, &t, 10e9, 200e-9).unwrap();
        assert!((two.max() / one.max() - 2.0).abs() < 0.02);
        let none = synth_waveform(&EventTimes::empty(1e-6), &t, 1e9, 1e-6).unwrap();
        assert!(none.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resolution_guard() {
        let t = template();
        let ev = EventTimes::empty(1e-6);
        assert!(synth_waveform(&ev, &t, 0.5e9, 1e-6).is_err());
        assert!(synth_waveform(&ev, &t, 1e9, 1e-6).is_ok());
    }

    #[test]
    fn fwhm_of_rectangle_and_errors() {
        let mut s = vec![0.0; 50];
        s[10..22].iter_mut().for_each(|v| *v = 1.0);
        let w = Waveform::new(1e9, 0.0, s.clone()).unwrap();
        assert!((measure_fwhm(&w).unwrap() - 12e-9).abs() <= 1e-9);
        s[40] = 0.9;
        let w = Waveform::new(1e9, 0.0, s).unwrap();
        assert!(matches!(measure_fwhm(&w), Err(Error::Measurement(_))));
        let flat = Waveform::new(1e9, 0.0, vec![0.3; 20]).unwrap();
        assert!(measure_fwhm(&flat).is_err());
    }

    #[test]
    fn fwhm_grows_with_fall_constant() {
        let t = template();
        let doubled = PulseTemplate::new(t.amplitude, t.tau_rise, 2.0 * t.tau_fall).unwrap();
        let ev = EventTimes { times: vec![5e-9], duration: 1e-6 };
        let a = measure_fwhm(&synth_waveform(&ev, &t, 10e9, 1e-6).unwrap()).unwrap();
        let b = measure_fwhm(&synth_waveform(&ev, &doubled, 10e9, 1e-6).unwrap()).unwrap();
        let ratio = b / a;
        assert!(ratio > 1.5 && ratio < 2.2, "{ratio}");
    }

    #[test]
    fn synth_is_additive() {
        let t = template();
        let a = homogeneous_poisson(5e6, 10e-6, RngSeed(1), 1).unwrap();
        let b = homogeneous_poisson(5e6, 10e-6, RngSeed(2), 1).unwrap();
        let both = crate::photon::merge(&a, &b);
        let wa = synth_waveform(&a, &t, 1e9, 10e-6).unwrap();
        let wb = synth_waveform(&b, &t, 1e9, 10e-6).unwrap();
        let wab = synth_waveform(&both, &t, 1e9, 10e-6).unwrap();
        for i in 0..wab.len() {
            let sum = wa.samples[i] + wb.samples[i];
            assert!((wab.samples[i] - sum).abs() <= 1e-15 * sum.abs().max(t.amplitude), "sample {i}");
        }
    }

    #[test]
    fn dead_time_window_semantics() {
        let p = SiPMParams { n_microcells: 1, ..SiPMParams::default() };
        let tau = p.recovery_time;
        let single = EventTimes { times: vec![1e-6], duration: 1e-5 };
        assert_eq!(microcell_filter(&single, &p, RngSeed(0), 3).unwrap().len(), 1);
        let close = EventTimes { times: vec![1e-6, 1e-6 + tau / 2.0], duration: 1e-5 };
        assert_eq!(microcell_filter(&close, &p, RngSeed(0), 3).unwrap().times, vec![1e-6]);
        let far = EventTimes { times: vec![1e-6, 1e-6 + 2.0 * tau], duration: 1e-5 };
        assert_eq!(microcell_filter(&far, &p, RngSeed(0), 3).unwrap().len(), 2);
        // non-paralyzable: the dropped middle event does not extend the window
        let chain = EventTimes { times: vec![0.0, 0.6 * tau, 1.2 * tau], duration: 1e-5 };
        assert_eq!(microcell_filter(&chain, &p, RngSeed(0), 3).unwrap().times, vec![0.0, 1.2 * tau]);
    }

    #[test]
    fn huge_array_is_identity() {
        let p = SiPMParams { n_microcells: 1_000_000_000, ..SiPMParams::default() };
        let ev = homogeneous_poisson(1e10, 10e-9, RngSeed(5), 1).unwrap();
        assert!(ev.len() >= 50);
        let out = microcell_filter(&ev, &p, RngSeed(5), 3).unwrap();
        assert_eq!(out, ev);
    }

    #[test]
    fn unsorted_input_rejected() {
        let ev = EventTimes { times: vec![2.0, 1.0], duration: 3.0 };
        assert!(microcell_filter(&ev, &SiPMParams::default(), RngSeed(0), 3).is_err());
    }
}
