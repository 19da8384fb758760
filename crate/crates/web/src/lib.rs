//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each operation has a plain Rust entry point (tested natively) and a thin
//! `#[wasm_bindgen]` wrapper that turns errors into JS exceptions.

use sipm_link::analog::{comparator, gbp_chain, min_width_filter, AmplifierConfig, ComparatorConfig, NoiseConfig};
use sipm_link::analog::{DEFAULT_MIN_WIDTH, MIN_COMPARATOR_THRESHOLD};
use sipm_link::experiments::ideal_counts;
use sipm_link::frontend::{synth_waveform, SiPMParams};
use sipm_link::photon::EventTimes;
use sipm_link::receiver::{bathtub, lfsr_prbs, LfsrConfig};
use sipm_link::theory::{
    optimal_threshold_auto, pe_curve, power_penalty_curve, required_avg_power, required_lambda_s, watts_to_dbm,
    PhotonBudget,
};
use sipm_link::{Error, RngSeed};
use wasm_bindgen::prelude::*;

type Result<T> = sipm_link::Result<T>;

/// Keeps a single click responsive.
pub const MAX_BITS: u32 = 2_000_000;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Closed-form PE and a Monte Carlo BER for each threshold `0..=n_max`.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct BathtubView {
    pe: Vec<f64>,
    ber: Vec<f64>,
    best_n_t: u32,
    best_pe: f64,
    n_bits: u32,
}

#[wasm_bindgen]
impl BathtubView {
    #[wasm_bindgen(getter)]
    pub fn pe(&self) -> Vec<f64> {
        self.pe.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ber(&self) -> Vec<f64> {
        self.ber.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn best_n_t(&self) -> u32 {
        self.best_n_t
    }

    #[wasm_bindgen(getter)]
    pub fn best_pe(&self) -> f64 {
        self.best_pe
    }

    #[wasm_bindgen(getter)]
    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }
}

pub fn bathtub_view(lambda_s: f64, lambda_b: f64, n_max: u32, n_bits: u32, seed: u64) -> Result<BathtubView> {
    let budget = PhotonBudget::new(lambda_s, lambda_b)?;
    if n_bits == 0 || n_bits > MAX_BITS {
        return Err(Error::InvalidArgument(format!("bits must be in 1..={MAX_BITS}")));
    }
    let tx = lfsr_prbs(&LfsrConfig::default(), n_bits as usize, 1e-6)?;
    let counts = ideal_counts(&tx, &budget, RngSeed(seed))?;
    let grid: Vec<u32> = (0..=n_max).collect();
    let tub = bathtub(&counts, &tx, &grid)?;
    let best = optimal_threshold_auto(&budget);
    Ok(BathtubView {
        pe: pe_curve(&budget, n_max),
        ber: tub.rows.iter().map(|r| r.ber).collect(),
        best_n_t: best.n_t,
        best_pe: best.pe,
        n_bits,
    })
}

#[wasm_bindgen]
pub fn bathtub_demo(
    lambda_s: f64,
    lambda_b: f64,
    n_max: u32,
    n_bits: u32,
    seed: u64,
) -> std::result::Result<BathtubView, JsError> {
    bathtub_view(lambda_s, lambda_b, n_max, n_bits, seed).map_err(js)
}

/// Required signal for a target PE at one operating point, plus the power
/// penalty curve it sits on.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetView {
    lambda_b: f64,
    lambda_s: f64,
    n_t: u32,
    required_dbm: f64,
    curve_lambda_b: Vec<f64>,
    curve_penalty_db: Vec<f64>,
}

#[wasm_bindgen]
impl BudgetView {
    #[wasm_bindgen(getter)]
    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }

    #[wasm_bindgen(getter)]
    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }

    #[wasm_bindgen(getter)]
    pub fn n_t(&self) -> u32 {
        self.n_t
    }

    #[wasm_bindgen(getter)]
    pub fn required_dbm(&self) -> f64 {
        self.required_dbm
    }

    #[wasm_bindgen(getter)]
    pub fn curve_lambda_b(&self) -> Vec<f64> {
        self.curve_lambda_b.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn curve_penalty_db(&self) -> Vec<f64> {
        self.curve_penalty_db.clone()
    }
}

pub fn budget_view(dark_rate: f64, data_rate: f64, target_pe: f64, pde: f64, wavelength_nm: f64) -> Result<BudgetView> {
    if !(data_rate > 0.0) {
        return Err(Error::InvalidArgument("data rate must be > 0".into()));
    }
    let wavelength = wavelength_nm * 1e-9;
    let lambda_b = dark_rate / data_rate;
    let power = required_avg_power(dark_rate, data_rate, target_pe, pde, wavelength)?;
    let lambda_s = required_lambda_s(lambda_b, target_pe)?;
    let n_t = optimal_threshold_auto(&PhotonBudget::new(lambda_s, lambda_b)?).n_t;
    let grid: Vec<f64> = (0..=50).map(|k| 1e-3 * 10f64.powf(k as f64 * 0.08)).collect();
    let base = required_lambda_s(0.0, target_pe)?;
    let curve = power_penalty_curve(&grid, target_pe)?;
    Ok(BudgetView {
        lambda_b,
        lambda_s,
        n_t,
        required_dbm: watts_to_dbm(power),
        curve_lambda_b: grid,
        curve_penalty_db: curve.iter().map(|r| 10.0 * (r.lambda_s / base).log10()).collect(),
    })
}

#[wasm_bindgen]
pub fn budget_demo(
    dark_rate: f64,
    data_rate: f64,
    target_pe: f64,
    pde: f64,
    wavelength_nm: f64,
) -> std::result::Result<BudgetView, JsError> {
    budget_view(dark_rate, data_rate, target_pe, pde, wavelength_nm).map_err(js)
}

/// One single-photon pulse through a gain/bandwidth stage.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct PulseView {
    time_ns: Vec<f64>,
    clean_mv: Vec<f64>,
    noisy_mv: Vec<f64>,
    peak_mv: f64,
    noise_rms_mv: f64,
    counted: bool,
}

#[wasm_bindgen]
impl PulseView {
    #[wasm_bindgen(getter)]
    pub fn time_ns(&self) -> Vec<f64> {
        self.time_ns.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn clean_mv(&self) -> Vec<f64> {
        self.clean_mv.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn noisy_mv(&self) -> Vec<f64> {
        self.noisy_mv.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn peak_mv(&self) -> f64 {
        self.peak_mv
    }

    #[wasm_bindgen(getter)]
    pub fn noise_rms_mv(&self) -> f64 {
        self.noise_rms_mv
    }

    /// Whether a comparator at the requested threshold (25% hysteresis,
    /// 5 ns minimum width) registers the noisy pulse.
    #[wasm_bindgen(getter)]
    pub fn counted(&self) -> bool {
        self.counted
    }
}

const PULSE_RATE: f64 = 10e9;
const PULSE_START: f64 = 20e-9;

pub fn pulse_view(gain: f64, bandwidth_hz: f64, v_th_mv: f64, seed: u64) -> Result<PulseView> {
    let amp = AmplifierConfig::new(gain, bandwidth_hz)?;
    let v_th = (v_th_mv * 1e-3).max(MIN_COMPARATOR_THRESHOLD);
    let cmp = ComparatorConfig::new(v_th, 0.25 * v_th)?;
    let template = SiPMParams::default().template()?;
    let tau_lp = 1.0 / (2.0 * std::f64::consts::PI * bandwidth_hz);
    let duration = (PULSE_START + template.support() + 6.0 * tau_lp).min(5e-6);
    let events = EventTimes { times: vec![PULSE_START], duration };
    let input = synth_waveform(&events, &template, PULSE_RATE, duration)?;
    let quiet = NoiseConfig { input_psd: 0.0, ..NoiseConfig::default() };
    let noise = NoiseConfig { seed: RngSeed(seed), ..NoiseConfig::default() };
    let clean = gbp_chain(&input, &amp, &quiet)?;
    let noisy = gbp_chain(&input, &amp, &noise)?;
    let train = min_width_filter(&comparator(&noisy, &cmp), DEFAULT_MIN_WIDTH);
    let mv = |v: &[f64]| v.iter().map(|x| x * 1e3).collect::<Vec<_>>();
    Ok(PulseView {
        time_ns: (0..clean.len()).map(|i| clean.time(i) * 1e9).collect(),
        clean_mv: mv(&clean.samples),
        noisy_mv: mv(&noisy.samples),
        peak_mv: clean.max() * 1e3,
        noise_rms_mv: noise.rms(gain, bandwidth_hz) * 1e3,
        counted: !train.is_empty(),
    })
}

#[wasm_bindgen]
pub fn pulse_demo(gain: f64, bandwidth_hz: f64, v_th_mv: f64, seed: u64) -> std::result::Result<PulseView, JsError> {
    pulse_view(gain, bandwidth_hz, v_th_mv, seed).map_err(js)
}
