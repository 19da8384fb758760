//! Detected-photon event streams.
//!
//! Events are generated directly at the detected rate (incident rate × PDE);
//! thinning a Poisson process by an independent coin gives another Poisson
//! process, so no incident photons are ever materialised.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngSeed;

/// Sorted event timestamps (seconds) on `[0, duration)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventTimes {
    pub times: Vec<f64>,
    pub duration: f64,
}

impl EventTimes {
    pub fn empty(duration: f64) -> Self {
        Self { times: Vec::new(), duration }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.times.windows(2).all(|w| w[0] <= w[1])
    }

    /// Number of events in each of `n` consecutive windows of width `width`.
    pub fn counts_per_window(&self, width: f64, n: usize) -> Vec<u32> {
        let mut counts = vec![0u32; n];
        for &t in &self.times {
            let k = (t / width) as usize;
            if k < n {
                counts[k] += 1;
            }
        }
        counts
    }
}

/// OOK symbol sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub bit_time: f64,
}

impl BitStream {
    pub fn new(bits: Vec<u8>, bit_time: f64) -> Result<Self> {
        if bits.is_empty() {
            return Err(invalid("bit stream must not be empty"));
        }
        if !(bit_time.is_finite() && bit_time > 0.0) {
            return Err(invalid("bit_time must be > 0"));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("bits must be 0 or 1"));
        }
        Ok(Self { bits, bit_time })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.bits.len() as f64 * self.bit_time
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// Constant-rate Poisson arrivals with exponential gaps.
pub fn homogeneous_poisson(rate: f64, duration: f64, seed: RngSeed, stream: u64) -> Result<EventTimes> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(invalid(format!("rate must be finite and >= 0, got {rate}")));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid(format!("duration must be > 0, got {duration}")));
    }
    let mut out = EventTimes::empty(duration);
    if rate == 0.0 {
        return Ok(out);
    }
    let gap = Exp::new(rate).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seed.rng(stream);
    out.times.reserve((rate * duration * 1.05) as usize + 16);
    let mut t = gap.sample(&mut rng);
    while t < duration {
        out.times.push(t);
        t += gap.sample(&mut rng);
    }
    Ok(out)
}

/// Piecewise-constant Poisson arrivals: `detected_rate_peak` inside 1-bits,
/// nothing inside 0-bits.
///
/// Each 1-bit window receives a `Poisson(rate·bit_time)` count placed
/// uniformly in the window, which is the same law as exponential gaps.
pub fn ook_signal_events(bits: &BitStream, detected_rate_peak: f64, seed: RngSeed, stream: u64) -> Result<EventTimes> {
    if !(detected_rate_peak.is_finite() && detected_rate_peak >= 0.0) {
        return Err(invalid("detected_rate_peak must be finite and >= 0"));
    }
    let duration = bits.duration();
    let mut out = EventTimes::empty(duration);
    let mean = detected_rate_peak * bits.bit_time;
    if mean == 0.0 {
        return Ok(out);
    }
    let count = Poisson::new(mean).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seed.rng(stream);
    let mut window = Vec::new();
    for (k, &b) in bits.bits.iter().enumerate() {
        if b == 0 {
            continue;
        }
        let start = k as f64 * bits.bit_time;
        let end = (k + 1) as f64 * bits.bit_time;
        let n = count.sample(&mut rng) as usize;
        window.clear();
        for _ in 0..n {
            let t = start + rng.random::<f64>() * bits.bit_time;
            // rounding can land exactly on the next boundary
            window.push(if t < end { t } else { start });
        }
        window.sort_by(f64::total_cmp);
        out.times.extend_from_slice(&window);
    }
    Ok(out)
}

/// Sorted union of two streams over the same window.
pub fn merge(a: &EventTimes, b: &EventTimes) -> EventTimes {
    let mut times = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.times.len() && j < b.times.len() {
        if a.times[i] <= b.times[j] {
            times.push(a.times[i]);
            i += 1;
        } else {
            times.push(b.times[j]);
            j += 1;
        }
    }
    times.extend_from_slice(&a.times[i..]);
    times.extend_from_slice(&b.times[j..]);
    EventTimes { times, duration: a.duration.max(b.duration) }
}
