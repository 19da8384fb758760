//! Uniformly sampled voltage traces and their file formats.
//!
//! CSV: header `time_s,volts`, one row per sample.
//!
//! Binary frame, little-endian:
//!
//! | offset | type      | field         |
//! |--------|-----------|---------------|
//! | 0      | f64       | sample rate   |
//! | 8      | u64       | sample count  |
//! | 16     | f32 × n   | samples       |
//!
//! The binary frame carries no start time; decoded waveforms start at 0.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    /// Hz.
    pub sample_rate: f64,
    /// Time of the first sample, seconds.
    pub t0: f64,
    /// Volts.
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(sample_rate: f64, t0: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid(format!("sample_rate must be > 0, got {sample_rate}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("waveform samples must be finite"));
        }
        Ok(Self { sample_rate, t0, samples })
    }

    pub fn zeros(sample_rate: f64, len: usize) -> Self {
        Self { sample_rate, t0: 0.0, samples: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time_s,volts")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{:e},{:e}", self.time(i), v)?;
        }
        Ok(())
    }

    /// Reads the CSV layout written by [`Waveform::write_csv`]; the sample
    /// rate is recovered from the first two timestamps.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty waveform CSV".into()))??;
        if header.trim() != "time_s,volts" {
            return Err(Error::Parse(format!("unexpected waveform header {header:?}")));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut field = |name: &str| -> Result<f64> {
                cols.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: missing {name}", n + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))
            };
            times.push(field("time_s")?);
            samples.push(field("volts")?);
        }
        if times.len() < 2 {
            return Err(Error::Parse("need at least two samples to infer the sample rate".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        Waveform::new(1.0 / dt, times[0], samples)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.sample_rate.to_le_bytes())?;
        out.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for &v in &self.samples {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let sample_rate = f64::from_le_bytes(word);
        input.read_exact(&mut word)?;
        let count = u64::from_le_bytes(word);
        let count = usize::try_from(count).map_err(|_| Error::Parse("sample count overflows usize".into()))?;
        let mut raw = vec![0u8; count.checked_mul(4).ok_or_else(|| Error::Parse("frame too large".into()))?];
        input.read_exact(&mut raw)?;
        let samples = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Waveform::new(sample_rate, 0.0, samples)
    }
}
