use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::pipeline::{run_chain, run_chain_with, sipm_events, PulseSource, CHUNK_SAMPLES};
use super::{LinkConfig, SimMode};
use crate::error::{invalid, Result};
use crate::photon::{ook_signal_events, BitStream};
use crate::receiver::{bathtub, default_n_t_grid, interleaved_count, lfsr_prbs, Bathtub, BerReport, BitWindowCounts};
use crate::rng::{stream, RngSeed};
use crate::theory::{optimal_threshold_auto, PhotonBudget, ThresholdDecision};
use crate::waveform::Waveform;

/// Result of one link simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcome {
    /// At the configured `n_t`, or the bathtub minimum.
    pub report: BerReport,
    pub bathtub: Bathtub,
    pub budget: PhotonBudget,
    /// Closed-form optimum for `budget`.
    pub theory: ThresholdDecision,
    /// Pulses registered by the counters over the whole run.
    pub total_counts: u64,
}

/// Per-bit counts drawn from `Poisson(λs·bit + λb)`.
pub fn ideal_counts(tx: &BitStream, budget: &PhotonBudget, seed: RngSeed) -> Result<BitWindowCounts> {
    let draw = |mean: f64| -> Result<Option<Poisson<f64>>> {
        if mean == 0.0 {
            Ok(None)
        } else {
            Poisson::new(mean).map(Some).map_err(|e| invalid(e.to_string()))
        }
    };
    let off = draw(budget.lambda_b)?;
    let on = draw(budget.lambda_s + budget.lambda_b)?;
    let mut rng = seed.rng(stream::COUNTS);
    let counts = tx
        .bits
        .iter()
        .map(|&b| {
            let dist = if b == 1 { &on } else { &off };
            dist.as_ref().map_or(0, |d| d.sample(&mut rng) as u32)
        })
        .collect();
    Ok(BitWindowCounts { counts, bit_time: tx.bit_time })
}

fn waveform_counts(cfg: &LinkConfig, tx: &BitStream, budget: &PhotonBudget) -> Result<BitWindowCounts> {
    let seed = cfg.master_seed;
    let signal = ook_signal_events(tx, budget.lambda_s / tx.bit_time, seed, stream::SIGNAL)?;
    let (events, amps) = sipm_events(&signal, cfg.link.dark_count_rate, &cfg.sipm, seed)?;
    let src = PulseSource { times: &events.times, amplitudes: &amps, template: cfg.sipm.template()? };
    let n_samples = (tx.duration() * cfg.sample_rate).round() as u64;
    let train = run_chain(&src, &cfg.chain()?, cfg.sample_rate, n_samples, seed)?.remove(0);
    interleaved_count(&train, tx.bit_time, tx.len())
}

/// Comparator-input voltage of a `n_bits` waveform-mode run of `cfg`,
/// sampled at the configured rate.
pub fn trace_link(cfg: &LinkConfig, n_bits: usize) -> Result<Waveform> {
    let cfg = LinkConfig { n_bits, mode: SimMode::Waveform, ..cfg.clone() };
    cfg.validate()?;
    let tx = lfsr_prbs(&cfg.prbs, n_bits, cfg.link.bit_time())?;
    let budget = cfg.link.budget()?;
    let seed = cfg.master_seed;
    let signal = ook_signal_events(&tx, budget.lambda_s / tx.bit_time, seed, stream::SIGNAL)?;
    let (events, amps) = sipm_events(&signal, cfg.link.dark_count_rate, &cfg.sipm, seed)?;
    let src = PulseSource { times: &events.times, amplitudes: &amps, template: cfg.sipm.template()? };
    let n_samples = (tx.duration() * cfg.sample_rate).round() as u64;
    let mut samples = Vec::with_capacity(n_samples as usize);
    run_chain_with(&src, &cfg.chain()?, cfg.sample_rate, n_samples, seed, CHUNK_SAMPLES, |_, v| samples.push(v))?;
    Waveform::new(cfg.sample_rate, 0.0, samples)
}

/// Transmitted bits, the per-bit counts they produced and the budget.
pub(crate) fn link_counts(cfg: &LinkConfig) -> Result<(BitStream, BitWindowCounts, PhotonBudget)> {
    cfg.validate()?;
    let tx = lfsr_prbs(&cfg.prbs, cfg.n_bits, cfg.link.bit_time())?;
    let budget = cfg.link.budget()?;
    let counts = match cfg.mode {
        SimMode::Ideal => ideal_counts(&tx, &budget, cfg.master_seed)?,
        SimMode::Waveform => waveform_counts(cfg, &tx, &budget)?,
    };
    Ok((tx, counts, budget))
}

/// Transmits `n_bits` of PRBS over the configured link and counts errors.
pub fn simulate_link(cfg: &LinkConfig) -> Result<LinkOutcome> {
    let (tx, counts, budget) = link_counts(cfg)?;
    let mut grid = default_n_t_grid();
    if let Some(n_t) = cfg.n_t {
        if !grid.contains(&n_t) {
            grid.push(n_t);
        }
    }
    let tub = bathtub(&counts, &tx, &grid)?;
    let report = match cfg.n_t {
        Some(n_t) => *tub.rows.iter().find(|r| r.n_t == n_t).expect("n_t is in the grid"),
        None => tub.best,
    };
    Ok(LinkOutcome {
        report,
        bathtub: tub,
        budget,
        theory: optimal_threshold_auto(&budget),
        total_counts: counts.total(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{pe, watts_to_dbm};

    fn ideal(n_bits: usize) -> LinkConfig {
        LinkConfig { mode: SimMode::Ideal, n_bits, ..LinkConfig::default() }
    }

    #[test]
    fn dark_only_ideal_link_is_a_coin_flip() {
        let mut cfg = ideal(100_000);
        cfg.link.avg_optical_power = 0.0;
        let out = simulate_link(&cfg).unwrap();
        let sigma = (0.25f64 / 1e5).sqrt();
        assert!((out.report.ber - 0.5).abs() < 3.0 * sigma, "{}", out.report.ber);
    }

    #[test]
    fn ideal_link_matches_closed_form() {
        let cfg = ideal(400_000);
        let out = simulate_link(&cfg).unwrap();
        assert_eq!(out.report.n_bits, 400_000);
        let n_t = out.report.n_t;
        let p = pe(&out.budget, n_t);
        let sigma = (p * (1.0 - p) / 4e5).sqrt();
        assert!((out.report.ber - p).abs() < 4.0 * sigma, "ber {} vs pe {p}", out.report.ber);
        assert!(out.theory.n_t == 1, "{:?}", out.theory);
    }

    #[test]
    fn fixed_threshold_override() {
        let mut cfg = ideal(20_000);
        cfg.n_t = Some(40);
        let out = simulate_link(&cfg).unwrap();
        assert_eq!(out.report.n_t, 40);
        assert_eq!(out.bathtub.rows.len(), 17);
        // nothing exceeds 40 counts at this budget, so every 1 is missed
        let ones = lfsr_prbs(&cfg.prbs, 20_000, 1e-6).unwrap().ones() as u64;
        assert_eq!(out.report.n_errors, ones);
    }

    #[test]
    fn ideal_counts_mean() {
        let tx = BitStream::new(vec![1, 0].repeat(50_000), 1e-6).unwrap();
        let c = ideal_counts(&tx, &PhotonBudget { lambda_s: 4.0, lambda_b: 0.5 }, RngSeed(3)).unwrap();
        let on: u64 = c.counts.iter().step_by(2).map(|&v| v as u64).sum();
        let off: u64 = c.counts.iter().skip(1).step_by(2).map(|&v| v as u64).sum();
        assert!((on as f64 / 5e4 - 4.5).abs() < 0.05);
        assert!((off as f64 / 5e4 - 0.5).abs() < 0.02);
        let none = ideal_counts(&tx, &PhotonBudget { lambda_s: 0.0, lambda_b: 0.0 }, RngSeed(3)).unwrap();
        assert_eq!(none.total(), 0);
    }

    #[test]
    fn trace_covers_the_run() {
        let cfg = LinkConfig::default();
        let w = trace_link(&cfg, 20).unwrap();
        assert_eq!(w.len(), 20_000);
        // a few pulses at tens of mV above a sub-mV noise floor
        assert!(w.max() > cfg.comparator.v_th, "{}", w.max());
        assert_eq!(trace_link(&cfg, 20).unwrap(), w);
    }

    #[test]
    fn waveform_link_short_run() {
        let cfg = LinkConfig { n_bits: 20_000, ..LinkConfig::default() };
        assert!((watts_to_dbm(cfg.link.avg_optical_power) + 74.98).abs() < 1e-9);
        let out = simulate_link(&cfg).unwrap();
        // photon budget ~7.2 per 1-bit plus dark
        let expected = out.budget.lambda_s * 10_000.0 + out.budget.lambda_b * 20_000.0;
        let ratio = out.total_counts as f64 / expected;
        assert!(ratio > 0.85 && ratio < 1.02, "{ratio}");
        assert!(out.report.ber < 0.02, "{}", out.report.ber);
        let again = simulate_link(&cfg).unwrap();
        assert_eq!(again, out);
    }
}
