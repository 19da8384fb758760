//! BER versus average optical power at several data rates.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::link::simulate_link;
use super::{check_grid, fmt_f64, write_rows, LinkConfig};
use crate::error::{invalid, Result};
use crate::theory::dbm_to_watts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerSweep {
    pub data_rates: Vec<f64>,
    /// Average optical power grid, dBm.
    pub power_dbm: Vec<f64>,
    /// Seconds of simulated link time per point; the bit count becomes
    /// `data_rate × collection_time`. `null` uses the config's `n_bits`.
    pub collection_time: Option<f64>,
}

impl Default for BerSweep {
    fn default() -> Self {
        Self {
            data_rates: vec![10e3, 100e3, 1e6],
            power_dbm: (0..=8).map(|k| -92.0 + 2.5 * k as f64).collect(),
            collection_time: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPowerRow {
    pub data_rate: f64,
    pub avg_power_dbm: f64,
    pub avg_power_w: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub ber: f64,
    /// Bathtub-optimal digital threshold.
    pub n_t: u32,
    /// Poisson-limit error probability at the same budget.
    pub theory_pe: f64,
    pub theory_n_t: u32,
}

pub fn run_ber_vs_power(cfg: &LinkConfig, sweep: &BerSweep) -> Result<Vec<BerPowerRow>> {
    check_grid("data rate", &sweep.data_rates)?;
    check_grid("power", &sweep.power_dbm)?;
    if let Some(t) = sweep.collection_time {
        if !(t.is_finite() && t > 0.0) {
            return Err(invalid("collection_time must be > 0"));
        }
    }
    let points: Vec<(f64, f64)> =
        sweep.data_rates.iter().flat_map(|&r| sweep.power_dbm.iter().map(move |&p| (r, p))).collect();
    points
        .par_iter()
        .enumerate()
        .map(|(k, &(rate, dbm))| {
            let mut c = cfg.clone();
            c.link.data_rate = rate;
            c.link.avg_optical_power = dbm_to_watts(dbm);
            if let Some(t) = sweep.collection_time {
                c.n_bits = c.bits_for_collection_time(t);
            }
            c.master_seed = cfg.master_seed.child(k as u64);
            let out = simulate_link(&c)?;
            Ok(BerPowerRow {
                data_rate: rate,
                avg_power_dbm: dbm,
                avg_power_w: c.link.avg_optical_power,
                n_bits: out.report.n_bits,
                n_errors: out.report.n_errors,
                ber: out.report.ber,
                n_t: out.report.n_t,
                theory_pe: out.theory.pe,
                theory_n_t: out.theory.n_t,
            })
        })
        .collect()
}

pub fn write_ber_power_csv<W: Write>(out: W, rows: &[BerPowerRow]) -> Result<()> {
    write_rows(out, "data_rate_bps,avg_power_dbm,avg_power_w,bits,errors,ber,n_t,theory_pe,theory_n_t", rows, |r| {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.data_rate),
            fmt_f64(r.avg_power_dbm),
            fmt_f64(r.avg_power_w),
            r.n_bits,
            r.n_errors,
            fmt_f64(r.ber),
            r.n_t,
            fmt_f64(r.theory_pe),
            r.theory_n_t
        )
    })
}
