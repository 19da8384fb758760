//! Acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits nonzero if any fails.
//!
//! `cargo test -p sipm-link --test acceptance`

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sipm_link::analog::{AmplifierConfig, DigitalPulseTrain};
use sipm_link::experiments::{
    ideal_counts, run_ber_vs_power, run_dynamic_range, run_gbp_study, simulate_link, write_ber_power_csv,
    write_dynamic_range_csv, write_gbp_counts_csv, BerSweep, GbpSpec, LinkConfig, SimMode,
};
use sipm_link::frontend::{measure_fwhm, synth_waveform, SiPMParams};
use sipm_link::photon::EventTimes;
use sipm_link::receiver::{ber_measure, decide, interleaved_count, lfsr_prbs, LfsrConfig};
use sipm_link::theory::{optimal_threshold_auto, required_avg_power, required_lambda_s, watts_to_dbm, PhotonBudget};
use sipm_link::RngSeed;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Poisson pmf by explicit products, kept separate from the library's
/// log-domain recursion.
fn oracle_pmf(lambda: f64, k: u32) -> f64 {
    let mut p = (-lambda).exp();
    for i in 1..=k {
        p *= lambda / i as f64;
    }
    p
}

fn oracle_pe(ls: f64, lb: f64, n_t: u32) -> f64 {
    let miss: f64 = (0..=n_t).map(|k| oracle_pmf(ls + lb, k)).sum();
    let hold: f64 = (0..=n_t).map(|k| oracle_pmf(lb, k)).sum();
    0.5 * miss + 0.5 * (1.0 - hold)
}

fn oracle_best(ls: f64, lb: f64) -> (u32, f64) {
    (0..80u32).map(|n| (n, oracle_pe(ls, lb, n))).fold((0, 1.0), |a, b| if b.1 < a.1 { b } else { a })
}

fn oracle_required(lb: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if oracle_best(mid, lb).1 <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> (Verdict, Duration) {
    let start = Instant::now();
    let mut v = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            v.pass = false;
            v.detail.push_str(&format!("; over the {:.0?} budget", limit));
        }
    }
    (v, elapsed)
}

fn c1() -> Verdict {
    let ls = required_lambda_s(0.0, 1e-3).unwrap();
    let oracle = oracle_required(0.0, 1e-3);
    verdict(
        (ls - 6.2146).abs() <= 1e-3 && (ls - oracle).abs() < 1e-4,
        format!("lambda_s = {ls:.5} (oracle {oracle:.5}, target 6.2146 +/- 0.001)"),
    )
}

fn c2() -> Verdict {
    let ls = required_lambda_s(0.048, 1e-3).unwrap();
    let n_t = optimal_threshold_auto(&PhotonBudget::new(ls, 0.048).unwrap()).n_t;
    let (oracle_n, _) = oracle_best(ls, 0.048);
    verdict(
        (9.27..=9.37).contains(&ls) && n_t == 1 && oracle_n == 1,
        format!("lambda_s = {ls:.4} in [9.27, 9.37], n_t = {n_t} (oracle n_t {oracle_n})"),
    )
}

fn c3() -> Verdict {
    let p = required_avg_power(48e3, 1e6, 1e-3, 0.036, 620e-9).unwrap();
    let dbm = watts_to_dbm(p);
    // oracle: photons from the independent bisection, peak = 2 x average
    let photon = 6.626_070_15e-34 * 299_792_458.0 / 620e-9;
    let oracle = watts_to_dbm(0.5 * oracle_required(0.048, 1e-3) * photon / (0.036 * 1e-6));
    verdict(
        (dbm + 74.0).abs() <= 1.0 && (dbm - oracle).abs() < 1e-3,
        format!("{dbm:.3} dBm (oracle {oracle:.3} dBm, target -74 +/- 1 dB)"),
    )
}

fn c4() -> Verdict {
    let n = 1_000_000;
    let tx = lfsr_prbs(&LfsrConfig::default(), n, 1e-6).unwrap();
    let counts = ideal_counts(&tx, &PhotonBudget::new(9.32, 0.048).unwrap(), RngSeed(2024)).unwrap();
    let rep = ber_measure(&tx, &decide(&counts, 1)).unwrap();
    let sigma = (1e-3f64 * (1.0 - 1e-3) / n as f64).sqrt();
    let z = (rep.ber - 1e-3) / sigma;
    verdict(
        z.abs() <= 3.0,
        format!(
            "ber = {:.4e} ({} errors / {n}), {z:+.2} sigma from 1e-3 (oracle pe {:.4e})",
            rep.ber,
            rep.n_errors,
            oracle_pe(9.32, 0.048, 1)
        ),
    )
}

fn c5() -> Verdict {
    let cfg = LinkConfig::default();
    let out = simulate_link(&cfg).unwrap();
    let ber = out.report.ber;
    verdict(
        (1e-3..=5e-3).contains(&ber),
        format!(
            "ber = {ber:.3e} at n_t = {} over {} bits, lambda_s = {:.2}, lambda_b = {:.3} (Poisson limit {:.3e})",
            out.report.n_t, out.report.n_bits, out.budget.lambda_s, out.budget.lambda_b, out.theory.pe
        ),
    )
}

fn c6() -> Verdict {
    let mut cfg = LinkConfig::default();
    cfg.link.dark_count_rate = 30e3;
    cfg.link.avg_optical_power = 0.0;
    cfg.n_bits = 1_000_000;
    let out = simulate_link(&cfg).unwrap();
    let counts = out.total_counts;
    verdict((counts as f64 - 30_000.0).abs() <= 520.0, format!("{counts} counts in 1 s (30000 +/- 520)"))
}

fn c7() -> Verdict {
    let t = SiPMParams::default().template().unwrap();
    let mut worst = 0f64;
    let mut widths = Vec::new();
    for fs in [10e9, 20e9] {
        let ev = EventTimes { times: vec![20e-9], duration: 400e-9 };
        let fwhm = measure_fwhm(&synth_waveform(&ev, &t, fs, 400e-9).unwrap()).unwrap();
        worst = worst.max((fwhm - 8e-9).abs());
        widths.push(format!("{:.3} ns at {} GS/s", fwhm * 1e9, fs / 1e9));
    }
    verdict(worst <= 0.5e-9, format!("{} (8.0 +/- 0.5 ns)", widths.join(", ")))
}

fn c8() -> Verdict {
    let amps = [(1.0, 500e6), (10.0, 50e6), (20.0, 6e6), (40.0, 2e6)]
        .map(|(gain, bandwidth)| AmplifierConfig { gain, bandwidth });
    // about 2e5 detected photons per second: well inside the linear region
    let p_lin = 2e5 / (0.036 / (6.626_070_15e-34 * 299_792_458.0 / 620e-9));
    let spec = GbpSpec { configs: amps.to_vec(), power_w: vec![p_lin], data_rates: vec![1e6], ..GbpSpec::default() };
    let mut cfg = LinkConfig::default();
    cfg.link.dark_count_rate = 30e3;
    let t = run_gbp_study(&cfg, &spec).unwrap();
    let rate = |j: usize| t.counts[j * 2 + 1].counts_per_second;
    let g1_zero = t.pulse_stats[0].counted == 0 && t.counts[0].counts_per_second == 0.0 && rate(0) == 0.0;
    let kept = rate(2) / rate(1);
    let lost = 1.0 - t.pulse_stats[3].fraction_counted();
    verdict(
        g1_zero && kept >= 0.9 && lost >= 0.5,
        format!(
            "G1/500MHz counts {} pulses and {:.0} cps; G20/6MHz keeps {:.1}% of G10/50MHz ({:.0} vs {:.0} cps); \
             G40/2MHz loses {:.1}% of pulses",
            t.pulse_stats[0].counted,
            rate(0),
            100.0 * kept,
            rate(2),
            rate(1),
            100.0 * lost
        ),
    )
}

fn c9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = 0;
    let mut total = 0u64;
    for _ in 0..10_000 {
        let n_bits = rng.random_range(1..200usize);
        let bit_time = 1e-6;
        let n_edges = rng.random_range(0..400usize);
        let mut rises: Vec<f64> = (0..n_edges).map(|_| rng.random::<f64>() * n_bits as f64 * bit_time).collect();
        // some edges exactly on bit boundaries
        for _ in 0..rng.random_range(0..5) {
            rises.push(rng.random_range(0..n_bits) as f64 * bit_time);
        }
        rises.sort_by(f64::total_cmp);
        let falls = rises.iter().map(|r| r + 1e-9).collect();
        let c = interleaved_count(&DigitalPulseTrain { rises: rises.clone(), falls }, bit_time, n_bits).unwrap();
        total += rises.len() as u64;
        if c.total() != rises.len() as u64 {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("{bad} of 10000 trains lost or gained edges ({total} edges)"))
}

fn c10() -> Verdict {
    let period = 32_767;
    let bits = lfsr_prbs(&LfsrConfig::default(), 2 * period, 1.0).unwrap().bits;
    let repeats = bits[..period] == bits[period..];
    let shorter = [7usize, 31, 151, 217, 1057, 4681].iter().any(|&p| bits[..period] == bits[p..p + period]);
    let ones = bits[..period].iter().filter(|&&b| b == 1).count();
    verdict(
        repeats && !shorter && ones == 16_384,
        format!(
            "period 32767 (repeats: {repeats}, shorter divisor period: {shorter}), ones/zeros = {ones}/{}",
            period - ones
        ),
    )
}

fn c11() -> Verdict {
    let mut cfg = LinkConfig::default();
    cfg.link.dark_count_rate = 30e3;
    cfg.master_seed = RngSeed(11);
    let per_watt = 0.036 / (6.626_070_15e-34 * 299_792_458.0 / 620e-9);
    let linear = [2e5, 5e5, 1e6, 2e6];
    let saturated = [1.25e8, 4e8, 1.25e9, 4e9];
    let grid: Vec<f64> = linear.iter().chain(&saturated).map(|r| r / per_watt).collect();
    let rows = run_dynamic_range(&cfg, &grid).unwrap();
    let ceiling = cfg.sipm.max_count_rate();
    let rel = |r: &sipm_link::experiments::DynamicRangeRow| {
        (r.counts_per_second - r.theory_counts_per_second).abs() / r.theory_counts_per_second
    };
    let lin_worst = rows[..4].iter().map(rel).fold(0.0, f64::max);
    let sat_least = rows[4..].iter().map(rel).fold(f64::INFINITY, f64::min);
    let sat: Vec<f64> = rows[4..].iter().map(|r| r.counts_per_second).collect();
    let spread = sat.iter().cloned().fold(0.0, f64::max) / sat.iter().cloned().fold(f64::INFINITY, f64::min);
    let theory_span = rows[7].theory_counts_per_second / rows[4].theory_counts_per_second;
    let below = sat.iter().all(|&c| c < ceiling);
    verdict(
        lin_worst <= 0.05 && sat_least > 0.10 && spread < 2.0 && theory_span >= 10.0 && below,
        format!(
            "linear max deviation {:.2}%; saturated min deviation {:.1}%; plateau {:.3e}..{:.3e} cps (x{spread:.2}) \
             while theory spans x{theory_span:.0}",
            100.0 * lin_worst,
            100.0 * sat_least,
            sat.iter().cloned().fold(f64::INFINITY, f64::min),
            sat.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn c12() -> Verdict {
    let run = || {
        let mut bytes = Vec::new();
        let ideal =
            LinkConfig { mode: SimMode::Ideal, n_bits: 50_000, master_seed: RngSeed(77), ..LinkConfig::default() };
        let sweep = BerSweep { data_rates: vec![1e5, 1e6], power_dbm: vec![-80.0, -76.0], collection_time: None };
        write_ber_power_csv(&mut bytes, &run_ber_vs_power(&ideal, &sweep).unwrap()).unwrap();
        let wave = LinkConfig { master_seed: RngSeed(77), ..LinkConfig::default() };
        write_dynamic_range_csv(&mut bytes, &run_dynamic_range(&wave, &[1e-12, 1e-10]).unwrap()).unwrap();
        let spec = GbpSpec {
            configs: vec![AmplifierConfig { gain: 20.0, bandwidth: 6e6 }],
            pulses: 100,
            power_w: vec![1e-12],
            data_rates: vec![1e6],
            count_sample_rate: 1e9,
            ..GbpSpec::default()
        };
        write_gbp_counts_csv(&mut bytes, &run_gbp_study(&wave, &spec).unwrap().counts).unwrap();
        bytes
    };
    let a = run();
    let b = run();
    verdict(a == b && !a.is_empty(), format!("{} CSV bytes, identical across runs: {}", a.len(), a == b))
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Verdict); 12] = [
        ("required_lambda_s(0, 1e-3)", Some(Duration::from_secs(1)), c1),
        ("required_lambda_s(0.048, 1e-3) and n_t", Some(Duration::from_secs(1)), c2),
        ("required_avg_power at 48 kcps, 1 Mbps", Some(Duration::from_secs(1)), c3),
        ("ideal-counts Monte Carlo vs theory", Some(Duration::from_secs(10)), c4),
        ("full-waveform experimental regime", Some(Duration::from_secs(300)), c5),
        ("dark count rate over 1 s", Some(Duration::from_secs(30)), c6),
        ("calibrated pulse FWHM", None, c7),
        ("GBP regimes", Some(Duration::from_secs(300)), c8),
        ("interleaved counters have no dead time", None, c9),
        ("PRBS-15 period and balance", None, c10),
        ("dynamic range and saturation", Some(Duration::from_secs(120)), c11),
        ("determinism", None, c12),
    ];
    let mut failed = 0;
    for (k, (name, limit, f)) in criteria.iter().enumerate() {
        let (v, t) = timed(*limit, f);
        if !v.pass {
            failed += 1;
        }
        println!("{} {:>2}. {name}: {} [{:.2?}]", if v.pass { "PASS" } else { "FAIL" }, k + 1, v.detail, t);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
