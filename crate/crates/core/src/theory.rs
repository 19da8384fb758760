//! Closed-form photon-counting statistics for an OOK link.
//!
//! A 1-bit produces `Poisson(λs + λb)` detected counts and a 0-bit
//! `Poisson(λb)`; the receiver decides 1 when the per-bit count is strictly
//! greater than an integer threshold `n_t`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Planck constant (exact SI value), J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Above this mean the Poisson distribution is replaced by a continuity
/// corrected normal approximation.
const NORMAL_APPROX_LAMBDA: f64 = 5000.0;

/// Default upper bound for the threshold search.
pub const DEFAULT_N_MAX: u32 = 100;

/// Photon detection efficiency factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeModel {
    /// Quantum efficiency of the junction at the operating wavelength.
    pub quantum_efficiency: f64,
    /// Probability that a photo-generated carrier triggers an avalanche.
    pub avalanche_init_prob: f64,
    /// Active-area fraction.
    pub fill_factor: f64,
}

impl PdeModel {
    pub fn new(quantum_efficiency: f64, avalanche_init_prob: f64, fill_factor: f64) -> Result<Self> {
        for (name, v) in [
            ("quantum_efficiency", quantum_efficiency),
            ("avalanche_init_prob", avalanche_init_prob),
            ("fill_factor", fill_factor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { quantum_efficiency, avalanche_init_prob, fill_factor })
    }
}

pub fn effective_pde(model: &PdeModel) -> f64 {
    model.quantum_efficiency * model.avalanche_init_prob * model.fill_factor
}

/// Expected detected counts per bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonBudget {
    pub lambda_s: f64,
    pub lambda_b: f64,
}

impl PhotonBudget {
    pub fn new(lambda_s: f64, lambda_b: f64) -> Result<Self> {
        if !(lambda_s.is_finite() && lambda_s >= 0.0) {
            return Err(invalid(format!("lambda_s must be finite and >= 0, got {lambda_s}")));
        }
        if !(lambda_b.is_finite() && lambda_b >= 0.0) {
            return Err(invalid(format!("lambda_b must be finite and >= 0, got {lambda_b}")));
        }
        Ok(Self { lambda_s, lambda_b })
    }
}

/// Optical link operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkParams {
    /// Meters.
    pub wavelength: f64,
    /// Effective photon detection efficiency.
    pub pde: f64,
    /// Bits per second.
    pub data_rate: f64,
    /// Background (dark + stray light) detections per second.
    pub dark_count_rate: f64,
    /// Time-averaged incident optical power, watts.
    pub avg_optical_power: f64,
    /// Fraction of time the source is on; 0.5 for equiprobable OOK.
    pub ook_duty: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            wavelength: 620e-9,
            pde: 0.036,
            data_rate: 1e6,
            dark_count_rate: 30e3,
            avg_optical_power: 0.0,
            ook_duty: 0.5,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(invalid("wavelength must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.pde) {
            return Err(invalid("pde must lie in [0, 1]"));
        }
        if !(self.data_rate.is_finite() && self.data_rate > 0.0) {
            return Err(invalid("data_rate must be > 0"));
        }
        if !(self.dark_count_rate.is_finite() && self.dark_count_rate >= 0.0) {
            return Err(invalid("dark_count_rate must be >= 0"));
        }
        if !(self.avg_optical_power.is_finite() && self.avg_optical_power >= 0.0) {
            return Err(invalid("avg_optical_power must be >= 0"));
        }
        if !(self.ook_duty > 0.0 && self.ook_duty <= 1.0) {
            return Err(invalid("ook_duty must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn bit_time(&self) -> f64 {
        1.0 / self.data_rate
    }

    /// Optical power while a 1-bit is on.
    pub fn peak_power(&self) -> f64 {
        self.avg_optical_power / self.ook_duty
    }

    pub fn budget(&self) -> Result<PhotonBudget> {
        self.validate()?;
        let ls = lambda_s(self.peak_power(), self.bit_time(), self.wavelength, self.pde)?;
        PhotonBudget::new(ls, self.dark_count_rate * self.bit_time())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub n_t: u32,
    pub pe: f64,
}

/// Energy of one photon, `h·c/λ`.
pub fn photon_energy(wavelength: f64) -> Result<f64> {
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(invalid(format!("wavelength must be finite and > 0, got {wavelength}")));
    }
    Ok(PLANCK * SPEED_OF_LIGHT / wavelength)
}

/// Detected signal photons per bit for a given on-state optical power.
pub fn lambda_s(peak_power: f64, bit_time: f64, wavelength: f64, pde: f64) -> Result<f64> {
    for (name, v) in [("peak_power", peak_power), ("bit_time", bit_time), ("pde", pde)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let e_photon = photon_energy(wavelength)?;
    Ok(peak_power * bit_time / e_photon * pde)
}

/// Converts a detected-photon count into the on-state optical power that
/// produces it within `bit_time`.
pub fn peak_power_for(lambda_s: f64, bit_time: f64, wavelength: f64, pde: f64) -> Result<f64> {
    if !(pde > 0.0 && bit_time > 0.0) {
        return Err(invalid("pde and bit_time must be > 0"));
    }
    Ok(lambda_s * photon_energy(wavelength)? / (pde * bit_time))
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// `P[X <= n]` and `P[X > n]` for `n = 0..=n_max`, `X ~ Poisson(lambda)`.
///
/// The pmf comes from an upward recursion in the log domain; the CDF is a
/// forward sum and the survival function a backward sum from far in the
/// tail, so both stay accurate where they are small.
fn poisson_cdf_sf(lambda: f64, n_max: u32) -> (Vec<f64>, Vec<f64>) {
    let len = n_max as usize + 1;
    if lambda == 0.0 {
        let mut sf = vec![0.0; len];
        sf.iter_mut().for_each(|s| *s = 0.0);
        return (vec![1.0; len], sf);
    }
    if lambda > NORMAL_APPROX_LAMBDA {
        let sd = lambda.sqrt();
        let mut cdf = Vec::with_capacity(len);
        let mut sf = Vec::with_capacity(len);
        for n in 0..len {
            let z = (n as f64 + 0.5 - lambda) / sd;
            cdf.push(0.5 * erfc(-z / std::f64::consts::SQRT_2));
            sf.push(0.5 * erfc(z / std::f64::consts::SQRT_2));
        }
        return (cdf, sf);
    }
    let tail = (lambda + 40.0 * lambda.sqrt() + 40.0).ceil() as usize;
    let k_max = tail.max(len);
    let ln_lambda = lambda.ln();
    let mut pmf = Vec::with_capacity(k_max + 1);
    let mut lp = -lambda;
    pmf.push(lp.exp());
    for k in 1..=k_max {
        lp += ln_lambda - (k as f64).ln();
        pmf.push(lp.exp());
    }
    let mut cdf = Vec::with_capacity(len);
    let mut acc = 0.0;
    for p in pmf.iter().take(len) {
        acc += p;
        cdf.push(acc.min(1.0));
    }
    let mut sf = vec![0.0; len];
    let mut tail_sum = 0.0;
    for k in (1..=k_max).rev() {
        tail_sum += pmf[k];
        if k - 1 < len {
            sf[k - 1] = tail_sum.min(1.0);
        }
    }
    (cdf, sf)
}

/// Complementary error function, fractional error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Error probability for every threshold `0..=n_max`.
pub fn pe_curve(budget: &PhotonBudget, n_max: u32) -> Vec<f64> {
    let (cdf_on, _) = poisson_cdf_sf(budget.lambda_s + budget.lambda_b, n_max);
    let (_, sf_off) = poisson_cdf_sf(budget.lambda_b, n_max);
    cdf_on.iter().zip(&sf_off).map(|(miss, false_alarm)| 0.5 * miss + 0.5 * false_alarm).collect()
}

/// Probability of error for equiprobable bits and threshold `n_t`
/// (decide 1 iff count > n_t).
pub fn pe(budget: &PhotonBudget, n_t: u32) -> f64 {
    pe_curve(budget, n_t)[n_t as usize]
}

/// Threshold in `0..=n_max` minimising the error probability; ties go to the
/// smaller threshold.
pub fn optimal_threshold(budget: &PhotonBudget, n_max: u32) -> ThresholdDecision {
    let curve = pe_curve(budget, n_max);
    let mut best = ThresholdDecision { n_t: 0, pe: curve[0] };
    for (n, &p) in curve.iter().enumerate().skip(1) {
        if p < best.pe {
            best = ThresholdDecision { n_t: n as u32, pe: p };
        }
    }
    best
}

/// Search bound wide enough to contain the optimum for any budget.
pub fn search_bound(budget: &PhotonBudget) -> u32 {
    let total = budget.lambda_s + budget.lambda_b;
    let wide = (total + 10.0 * total.sqrt() + 10.0).ceil();
    (wide.min(u32::MAX as f64 / 2.0) as u32).max(DEFAULT_N_MAX)
}

pub fn optimal_threshold_auto(budget: &PhotonBudget) -> ThresholdDecision {
    optimal_threshold(budget, search_bound(budget))
}

const LAMBDA_TOL: f64 = 1e-7;
const LAMBDA_CAP: f64 = 1e7;

/// Smallest `λs` whose optimal-threshold error probability reaches
/// `target_pe`, by bisection.
pub fn required_lambda_s(lambda_b: f64, target_pe: f64) -> Result<f64> {
    if !(target_pe > 0.0 && target_pe < 0.5) {
        return Err(invalid(format!("target_pe must lie in (0, 0.5), got {target_pe}")));
    }
    if !(lambda_b.is_finite() && lambda_b >= 0.0) {
        return Err(invalid(format!("lambda_b must be finite and >= 0, got {lambda_b}")));
    }
    let best_pe = |ls: f64| optimal_threshold_auto(&PhotonBudget { lambda_s: ls, lambda_b }).pe;

    let mut lo = 0.0;
    let mut hi = 1.0;
    while best_pe(hi) > target_pe {
        lo = hi;
        hi *= 2.0;
        if hi > LAMBDA_CAP {
            return Err(Error::Convergence(format!(
                "pe {target_pe} unreachable below lambda_s = {LAMBDA_CAP} (lambda_b = {lambda_b})"
            )));
        }
    }
    for _ in 0..200 {
        if hi - lo <= LAMBDA_TOL {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        if best_pe(mid) <= target_pe {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Convergence(format!("bisection stalled at [{lo}, {hi}]")))
}

/// Average optical power needed for `target_pe` at the given dark rate and
/// data rate.
pub fn required_avg_power(dark_rate: f64, data_rate: f64, target_pe: f64, pde: f64, wavelength: f64) -> Result<f64> {
    if !(dark_rate.is_finite() && dark_rate >= 0.0) {
        return Err(invalid("dark_rate must be >= 0"));
    }
    if !(data_rate.is_finite() && data_rate > 0.0) {
        return Err(invalid("data_rate must be > 0"));
    }
    if !(pde > 0.0 && pde <= 1.0) {
        return Err(invalid("pde must lie in (0, 1]"));
    }
    let bit_time = 1.0 / data_rate;
    let ls = required_lambda_s(dark_rate * bit_time, target_pe)?;
    let peak = peak_power_for(ls, bit_time, wavelength, pde)?;
    Ok(peak * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRow {
    pub lambda_b: f64,
    pub lambda_s: f64,
    pub n_t: u32,
}

/// Required `λs` and its threshold along a grid of background levels.
pub fn power_penalty_curve(lambda_b_grid: &[f64], target_pe: f64) -> Result<Vec<PenaltyRow>> {
    if lambda_b_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("lambda_b grid must be sorted ascending"));
    }
    lambda_b_grid
        .iter()
        .map(|&lb| {
            let ls = required_lambda_s(lb, target_pe)?;
            let n_t = optimal_threshold_auto(&PhotonBudget { lambda_s: ls, lambda_b: lb }).n_t;
            Ok(PenaltyRow { lambda_b: lb, lambda_s: ls, n_t })
        })
        .collect()
}
