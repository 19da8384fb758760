//! Receiver logic: PRBS source, clockless per-bit pulse counting, integer
//! threshold decisions and error counting.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analog::DigitalPulseTrain;
use crate::error::{invalid, Result};
use crate::photon::BitStream;

/// Fibonacci LFSR. Taps are 1-based register positions; position 1 holds
/// the newest bit and the output is taken from position `width`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LfsrConfig {
    pub width: u32,
    pub taps: Vec<u32>,
    pub seed: u64,
}

impl Default for LfsrConfig {
    /// PRBS-15, x^15 + x^14 + 1.
    fn default() -> Self {
        Self { width: 15, taps: vec![15, 14], seed: 1 }
    }
}

impl LfsrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=63).contains(&self.width) {
            return Err(invalid(format!("LFSR width must lie in 2..=63, got {}", self.width)));
        }
        if self.seed == 0 || self.seed >> self.width != 0 {
            return Err(invalid(format!("LFSR seed must be nonzero and below 2^{}", self.width)));
        }
        if self.taps.is_empty() || self.taps.iter().any(|&t| t == 0 || t > self.width) {
            return Err(invalid("LFSR taps must lie in 1..=width"));
        }
        Ok(())
    }
}

pub fn lfsr_prbs(cfg: &LfsrConfig, n_bits: usize, bit_time: f64) -> Result<BitStream> {
    cfg.validate()?;
    let mask = (1u64 << cfg.width) - 1;
    let mut state = cfg.seed;
    let mut bits = Vec::with_capacity(n_bits);
    for _ in 0..n_bits {
        bits.push(((state >> (cfg.width - 1)) & 1) as u8);
        let feedback = cfg.taps.iter().fold(0, |acc, &t| acc ^ ((state >> (t - 1)) & 1));
        state = ((state << 1) | feedback) & mask;
    }
    BitStream::new(bits, bit_time)
}

/// Pulse count latched for each bit slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitWindowCounts {
    pub counts: Vec<u32>,
    pub bit_time: f64,
}

impl BitWindowCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Two ping-pong counters driven by rising edges.
///
/// The active counter increments on every rising edge. At each bit
/// boundary the counters swap roles: the retiring one is latched into the
/// output and cleared. An edge exactly on a boundary belongs to the later
/// bit.
pub fn interleaved_count(train: &DigitalPulseTrain, bit_time: f64, n_bits: usize) -> Result<BitWindowCounts> {
    if !(bit_time.is_finite() && bit_time > 0.0) {
        return Err(invalid("bit_time must be > 0"));
    }
    let end = n_bits as f64 * bit_time;
    if let Some(&t) = train.rises.iter().find(|&&t| !(0.0..end).contains(&t)) {
        return Err(invalid(format!("rising edge at {t} s outside [0, {end}) s")));
    }
    let mut counters = [0u32; 2];
    let mut active = 0usize;
    let mut slot = 0usize;
    let mut counts = Vec::with_capacity(n_bits);
    let mut boundary = bit_time;
    let mut edges = train.rises.iter().peekable();
    while slot < n_bits {
        while let Some(&&t) = edges.peek() {
            if t >= boundary {
                break;
            }
            counters[active] += 1;
            edges.next();
        }
        // swap, latch and clear the retiring counter
        let retiring = active;
        active ^= 1;
        counts.push(counters[retiring]);
        counters[retiring] = 0;
        slot += 1;
        boundary = (slot + 1) as f64 * bit_time;
    }
    Ok(BitWindowCounts { counts, bit_time })
}

/// Bit is 1 iff the count exceeds `n_t`.
pub fn decide(counts: &BitWindowCounts, n_t: u32) -> BitStream {
    BitStream { bits: counts.counts.iter().map(|&c| u8::from(c > n_t)).collect(), bit_time: counts.bit_time }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub n_bits: u64,
    pub n_errors: u64,
    pub ber: f64,
    pub n_t: u32,
}

impl BerReport {
    pub fn from_counts(n_bits: u64, n_errors: u64, n_t: u32) -> Self {
        let ber = if n_bits == 0 { 0.0 } else { n_errors as f64 / n_bits as f64 };
        Self { n_bits, n_errors, ber, n_t }
    }

    /// Binomial standard deviation of the BER estimate around `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_bits as f64).sqrt()
    }
}

fn hamming(tx: &[u8], rx: &[u8]) -> u64 {
    tx.iter().zip(rx).filter(|(a, b)| a != b).count() as u64
}

/// XOR comparison of transmitted and received bits. `n_t` is left at 0.
pub fn ber_measure(tx: &BitStream, rx: &BitStream) -> Result<BerReport> {
    if tx.len() != rx.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", tx.len(), rx.len())));
    }
    Ok(BerReport::from_counts(tx.len() as u64, hamming(&tx.bits, &rx.bits), 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bathtub {
    pub rows: Vec<BerReport>,
    pub best: BerReport,
}

/// Default digital threshold range.
pub const BATHTUB_MAX_N_T: u32 = 15;

/// BER at each threshold in `n_t_grid`; `best` is the first minimum.
pub fn bathtub(counts: &BitWindowCounts, tx: &BitStream, n_t_grid: &[u32]) -> Result<Bathtub> {
    if counts.counts.len() != tx.len() {
        return Err(invalid(format!("{} count slots for {} bits", counts.counts.len(), tx.len())));
    }
    if n_t_grid.is_empty() {
        return Err(invalid("threshold grid must not be empty"));
    }
    let n = tx.len() as u64;
    let rows: Vec<BerReport> = n_t_grid
        .iter()
        .map(|&n_t| {
            let errors = counts.counts.iter().zip(&tx.bits).filter(|(&c, &b)| u8::from(c > n_t) != b).count() as u64;
            BerReport::from_counts(n, errors, n_t)
        })
        .collect();
    let best = rows.iter().copied().fold(rows[0], |acc, r| if r.n_errors < acc.n_errors { r } else { acc });
    Ok(Bathtub { rows, best })
}

pub fn default_n_t_grid() -> Vec<u32> {
    (0..=BATHTUB_MAX_N_T).collect()
}

/// CSV with header `n_t,bits,errors,ber`.
pub fn write_ber_csv<W: Write>(mut out: W, rows: &[BerReport]) -> Result<()> {
    writeln!(out, "n_t,bits,errors,ber")?;
    for r in rows {
        writeln!(out, "{},{},{},{:e}", r.n_t, r.n_bits, r.n_errors, r.ber)?;
    }
    Ok(())
}
