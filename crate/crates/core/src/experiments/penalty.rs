//! Closed-form power-penalty tables; no Monte Carlo.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{check_grid, fmt_f64, write_rows};
use crate::error::{invalid, Result};
use crate::theory::{power_penalty_curve, required_avg_power, required_lambda_s, watts_to_dbm, PenaltyRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequiredPowerRow {
    pub dark_rate: f64,
    pub data_rate: f64,
    pub lambda_b: f64,
    pub lambda_s: f64,
    pub required_avg_power_w: f64,
    pub required_avg_power_dbm: f64,
}

/// Grids for the closed-form tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySpec {
    /// Background photons per bit.
    pub lambda_b: Vec<f64>,
    /// Counts per second.
    pub dark_rates: Vec<f64>,
    /// Bits per second.
    pub data_rates: Vec<f64>,
    pub target_pe: f64,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self {
            lambda_b: (0..=40).map(|k| 1e-3 * 10f64.powf(k as f64 / 10.0)).collect(),
            dark_rates: vec![10e3, 30e3, 48e3, 100e3, 1e6],
            data_rates: vec![10e3, 100e3, 1e6, 10e6],
            target_pe: 1e-3,
        }
    }
}

/// Required `λs` across background levels, and required average power
/// for each (dark rate, data rate) pair.
pub fn run_power_penalty(
    lambda_b_grid: &[f64],
    dark_rates: &[f64],
    data_rates: &[f64],
    target_pe: f64,
    pde: f64,
    wavelength: f64,
) -> Result<(Vec<PenaltyRow>, Vec<RequiredPowerRow>)> {
    check_grid("lambda_b", lambda_b_grid)?;
    check_grid("dark rate", dark_rates)?;
    check_grid("data rate", data_rates)?;
    if data_rates[0] <= 0.0 {
        return Err(invalid("data rates must be > 0"));
    }
    let outer = power_penalty_curve(lambda_b_grid, target_pe)?;
    let mut inset = Vec::with_capacity(dark_rates.len() * data_rates.len());
    for &dark in dark_rates {
        for &rate in data_rates {
            let lambda_b = dark / rate;
            let p = required_avg_power(dark, rate, target_pe, pde, wavelength)?;
            inset.push(RequiredPowerRow {
                dark_rate: dark,
                data_rate: rate,
                lambda_b,
                lambda_s: required_lambda_s(lambda_b, target_pe)?,
                required_avg_power_w: p,
                required_avg_power_dbm: watts_to_dbm(p),
            });
        }
    }
    Ok((outer, inset))
}

/// Header `lambda_b,lambda_s,n_t,penalty_db`; the penalty is relative to
/// the background-free requirement.
pub fn write_penalty_csv<W: Write>(out: W, rows: &[PenaltyRow], target_pe: f64) -> Result<()> {
    let base = required_lambda_s(0.0, target_pe)?;
    write_rows(out, "lambda_b,lambda_s,n_t,penalty_db", rows, |r| {
        format!(
            "{},{},{},{}",
            fmt_f64(r.lambda_b),
            fmt_f64(r.lambda_s),
            r.n_t,
            fmt_f64(10.0 * (r.lambda_s / base).log10())
        )
    })
}

pub fn write_required_power_csv<W: Write>(out: W, rows: &[RequiredPowerRow]) -> Result<()> {
    write_rows(
        out,
        "dark_rate_cps,data_rate_bps,lambda_b,lambda_s,required_avg_power_w,required_avg_power_dbm",
        rows,
        |r| {
            format!(
                "{},{},{},{},{},{}",
                fmt_f64(r.dark_rate),
                fmt_f64(r.data_rate),
                fmt_f64(r.lambda_b),
                fmt_f64(r.lambda_s),
                fmt_f64(r.required_avg_power_w),
                fmt_f64(r.required_avg_power_dbm)
            )
        },
    )
}
