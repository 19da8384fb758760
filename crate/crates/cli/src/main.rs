mod config;
mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sipm_link::analog::ThresholdRow;
use sipm_link::experiments::{
    run_ber_vs_power, run_gbp_study, run_power_penalty, run_sweep, simulate_link, trace_link, write_ber_power_csv,
    write_gbp_counts_csv, write_gbp_pulse_csv, write_gbp_required_csv, write_penalty_csv, write_required_power_csv,
    BerPowerRow, DynamicRangeRow, GbpCountRow, SimMode, SweepSpec, SweepTable, SweepVariable,
};
use sipm_link::receiver::{write_ber_csv, BerReport};
use sipm_link::theory::{pe_curve, required_lambda_s};

use config::RunConfig;
use plot::{Figure, Scale, Series};

/// Monte Carlo and closed-form analysis of a SiPM photon-counting OOK link.
#[derive(Parser, Debug)]
#[command(name = "sipm-link", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON link configuration; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Per-bit counts from the photon budget (ideal) or the full pulse chain.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<SimMode>,
    /// Also write an SVG plot per table.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form tables: PE versus n_t, required photons and power.
    Theory,
    /// One link run: BER at the chosen n_t plus its bathtub.
    Simulate {
        /// Also dump the comparator-input waveform of the first N bits
        /// (trace.csv and trace.bin).
        #[arg(long, value_name = "N")]
        trace_bits: Option<usize>,
    },
    /// Sweep one variable: optical_power, v_th, n_t, data_rate or gbp.
    Sweep {
        /// Overrides the variable of the config's `sweep` section and
        /// selects its default grid.
        #[arg(long)]
        variable: Option<String>,
    },
    /// BER versus average power for several data rates.
    Ber {
        /// Seconds of link time per point (bits = rate × seconds).
        #[arg(long)]
        collection_time: Option<f64>,
    },
    /// Gain-bandwidth study: pulse statistics, counts and required power.
    Gbp,
    /// Print the full configuration, defaults filled in, as JSON.
    Config,
}

fn parse_mode(s: &str) -> Result<SimMode, String> {
    s.parse().map_err(|e: sipm_link::Error| e.to_string())
}

struct Output<'a> {
    dir: &'a Path,
    plot: bool,
    written: Vec<PathBuf>,
}

impl Output<'_> {
    fn csv(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> sipm_link::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        write(&mut f).with_context(|| format!("writing {}", path.display()))?;
        f.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn figure(&mut self, name: &str, fig: Figure, series: &[Series]) -> Result<()> {
        if !self.plot {
            return Ok(());
        }
        let path = self.dir.join(name);
        if fig.write(&path, series)? {
            self.written.push(path);
        }
        Ok(())
    }
}

fn bathtub_series(rows: &[BerReport]) -> Vec<Series> {
    vec![Series::new("measured", rows.iter().map(|r| (r.n_t as f64, r.ber)))]
}

fn bathtub_figure(title: &str) -> Figure<'_> {
    Figure { title, x_label: "n_t", y_label: "BER", x_scale: Scale::Linear, y_scale: Scale::Log }
}

fn theory(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = &cfg.theory;
    let link = &cfg.link.link;
    let (penalty, required) = run_power_penalty(
        &spec.lambda_b,
        &spec.dark_rates,
        &spec.data_rates,
        spec.target_pe,
        link.pde,
        link.wavelength,
    )?;
    out.csv("power_penalty.csv", |f| write_penalty_csv(f, &penalty, spec.target_pe))?;
    out.csv("required_power.csv", |f| write_required_power_csv(f, &required))?;
    let budget = link.budget()?;
    let curve = pe_curve(&budget, 30);
    out.csv("pe_vs_n_t.csv", |f| {
        writeln!(f, "n_t,pe")?;
        for (n, p) in curve.iter().enumerate() {
            writeln!(f, "{n},{p:e}")?;
        }
        Ok(())
    })?;
    let base = required_lambda_s(0.0, spec.target_pe)?;
    out.figure(
        "power_penalty.svg",
        Figure {
            title: "Power penalty from background",
            x_label: "lambda_b (photons/bit)",
            y_label: "penalty (dB)",
            x_scale: Scale::Log,
            y_scale: Scale::Linear,
        },
        &[Series::new("penalty", penalty.iter().map(|r| (r.lambda_b, 10.0 * (r.lambda_s / base).log10())))],
    )?;
    let per_dark: Vec<Series> = spec
        .dark_rates
        .iter()
        .map(|&d| {
            let pts = required.iter().filter(|r| r.dark_rate == d).map(|r| (r.data_rate, r.required_avg_power_dbm));
            Series::new(format!("dark {d:e} cps"), pts)
        })
        .collect();
    out.figure(
        "required_power.svg",
        Figure {
            title: "Required average power",
            x_label: "data rate (bps)",
            y_label: "power (dBm)",
            x_scale: Scale::Log,
            y_scale: Scale::Linear,
        },
        &per_dark,
    )?;
    out.figure(
        "pe_vs_n_t.svg",
        Figure { title: "Closed-form PE", x_label: "n_t", y_label: "PE", x_scale: Scale::Linear, y_scale: Scale::Log },
        &[Series::new("PE", curve.iter().enumerate().map(|(n, &p)| (n as f64, p)))],
    )?;
    println!(
        "lambda_s {:.4}, lambda_b {:.4}: optimal n_t {} with PE {:.4e}",
        budget.lambda_s,
        budget.lambda_b,
        sipm_link::theory::optimal_threshold_auto(&budget).n_t,
        sipm_link::theory::optimal_threshold_auto(&budget).pe
    );
    Ok(())
}

fn simulate(cfg: &RunConfig, trace_bits: Option<usize>, out: &mut Output) -> Result<()> {
    let res = simulate_link(&cfg.link)?;
    out.csv("ber.csv", |f| write_ber_csv(f, &[res.report]))?;
    out.csv("bathtub.csv", |f| write_ber_csv(f, &res.bathtub.rows))?;
    out.figure("bathtub.svg", bathtub_figure("Bathtub"), &bathtub_series(&res.bathtub.rows))?;
    if let Some(n) = trace_bits {
        let w = trace_link(&cfg.link, n)?;
        out.csv("trace.csv", |f| w.write_csv(f))?;
        out.csv("trace.bin", |f| w.write_binary(f))?;
        out.figure(
            "trace.svg",
            Figure {
                title: "Comparator input",
                x_label: "time (s)",
                y_label: "volts",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
            },
            &[Series::new("v", w.samples.iter().enumerate().map(|(i, &v)| (w.time(i), v)))],
        )?;
    }
    let r = res.report;
    println!(
        "{:?} mode: {} bits, {} errors, BER {:.4e} at n_t {} (lambda_s {:.4}, lambda_b {:.4}; closed form {:.4e} at n_t {})",
        cfg.link.mode,
        r.n_bits,
        r.n_errors,
        r.ber,
        r.n_t,
        res.budget.lambda_s,
        res.budget.lambda_b,
        res.theory.pe,
        res.theory.n_t
    );
    Ok(())
}

fn sweep(cfg: &RunConfig, variable: Option<&str>, out: &mut Output) -> Result<()> {
    let spec = match variable {
        Some(v) => SweepSpec::for_variable(v.parse::<SweepVariable>()?),
        None => cfg.sweep.clone().unwrap_or_default(),
    };
    let table = run_sweep(&cfg.link, &spec)?;
    let name = table.file_name();
    out.csv(name, |f| table.write_csv(f))?;
    let svg = name.replace(".csv", ".svg");
    match &table {
        SweepTable::DynamicRange(rows) => out.figure(
            &svg,
            Figure {
                title: "Count rate versus optical power",
                x_label: "average power (W)",
                y_label: "counts/s",
                x_scale: Scale::Log,
                y_scale: Scale::Log,
            },
            &dynamic_series(rows),
        )?,
        SweepTable::Threshold(rows) => out.figure(
            &svg,
            Figure {
                title: "Count rate versus threshold",
                x_label: "v_th (V)",
                y_label: "counts/s",
                x_scale: Scale::Linear,
                y_scale: Scale::Log,
            },
            &[threshold_series(rows)],
        )?,
        SweepTable::Bathtub(rows) => out.figure(&svg, bathtub_figure("Bathtub"), &bathtub_series(rows))?,
        SweepTable::BerVsRate(rows) => out.figure(
            &svg,
            Figure {
                title: "BER versus data rate",
                x_label: "data rate (bps)",
                y_label: "BER",
                x_scale: Scale::Log,
                y_scale: Scale::Log,
            },
            &[
                Series::new("measured", rows.iter().map(|r| (r.data_rate, r.ber))),
                Series::new("Poisson limit", rows.iter().map(|r| (r.data_rate, r.theory_pe))),
            ],
        )?,
        SweepTable::Gbp(rows) => out.figure(
            &svg,
            Figure {
                title: "Count rate versus gain-bandwidth product",
                x_label: "GBP (Hz)",
                y_label: "counts/s",
                x_scale: Scale::Log,
                y_scale: Scale::Log,
            },
            &[
                Series::new("measured", rows.iter().map(|r| (r.gain * r.bandwidth_hz, r.counts_per_second))),
                Series::new("theory", rows.iter().map(|r| (r.gain * r.bandwidth_hz, r.theory_counts_per_second))),
            ],
        )?,
    }
    println!("{:?} sweep over {} points", spec.variable, spec.grid.len());
    Ok(())
}

fn dynamic_series(rows: &[DynamicRangeRow]) -> Vec<Series> {
    vec![
        Series::new("measured", rows.iter().map(|r| (r.avg_power_w, r.counts_per_second))),
        Series::new("theory", rows.iter().map(|r| (r.avg_power_w, r.theory_counts_per_second))),
    ]
}

fn threshold_series(rows: &[ThresholdRow]) -> Series {
    Series::new("counts", rows.iter().map(|r| (r.v_th, r.counts_per_second)))
}

fn rates_of<'a, T>(rows: &'a [T], rate: impl Fn(&T) -> f64 + 'a) -> Vec<f64> {
    let mut v: Vec<f64> = rows.iter().map(&rate).collect();
    v.dedup();
    v
}

fn ber(cfg: &RunConfig, collection_time: Option<f64>, out: &mut Output) -> Result<()> {
    let mut sweep = cfg.ber.clone();
    if collection_time.is_some() {
        sweep.collection_time = collection_time;
    }
    let rows = run_ber_vs_power(&cfg.link, &sweep)?;
    out.csv("ber_vs_power.csv", |f| write_ber_power_csv(f, &rows))?;
    let mut series = Vec::new();
    for rate in rates_of(&rows, |r: &BerPowerRow| r.data_rate) {
        let sel = || rows.iter().filter(move |r| r.data_rate == rate);
        series.push(Series::new(format!("{rate:e} bps"), sel().map(|r| (r.avg_power_dbm, r.ber))));
        series.push(Series::new(format!("{rate:e} bps limit"), sel().map(|r| (r.avg_power_dbm, r.theory_pe))));
    }
    out.figure(
        "ber_vs_power.svg",
        Figure {
            title: "BER versus average power",
            x_label: "average power (dBm)",
            y_label: "BER",
            x_scale: Scale::Linear,
            y_scale: Scale::Log,
        },
        &series,
    )?;
    println!("{} BER points", rows.len());
    Ok(())
}

fn gbp(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let t = run_gbp_study(&cfg.link, &cfg.gbp)?;
    out.csv("gbp_pulse_stats.csv", |f| write_gbp_pulse_csv(f, &t.pulse_stats))?;
    out.csv("gbp_counts.csv", |f| write_gbp_counts_csv(f, &t.counts))?;
    out.csv("gbp_required_power.csv", |f| write_gbp_required_csv(f, &t.required_power))?;
    let labels = {
        let mut l: Vec<&str> = t.counts.iter().map(|r| r.label.as_str()).collect();
        l.dedup();
        l
    };
    let by_label = |label: &str| -> Vec<&GbpCountRow> { t.counts.iter().filter(|r| r.label == label).collect() };
    let mut series: Vec<Series> = labels
        .iter()
        .map(|&l| Series::new(l, by_label(l).into_iter().map(|r| (r.avg_power_w, r.counts_per_second))))
        .collect();
    if let Some(&first) = labels.first() {
        let pts = by_label(first).into_iter().map(|r| (r.avg_power_w, r.theory_counts_per_second));
        series.push(Series::new("theory", pts));
    }
    out.figure(
        "gbp_counts.svg",
        Figure {
            title: "Counts versus power per amplifier",
            x_label: "average power (W)",
            y_label: "counts/s",
            x_scale: Scale::Log,
            y_scale: Scale::Log,
        },
        &series,
    )?;
    let series: Vec<Series> = rates_of(&t.required_power, |r| r.data_rate)
        .into_iter()
        .map(|rate| {
            let pts = t
                .required_power
                .iter()
                .filter(|r| r.data_rate == rate && r.gain.is_finite())
                .map(|r| (r.gain * r.bandwidth_hz, r.required_avg_power_w));
            Series::new(format!("{rate:e} bps"), pts)
        })
        .collect();
    out.figure(
        "gbp_required_power.svg",
        Figure {
            title: "Required power versus GBP",
            x_label: "GBP (Hz)",
            y_label: "average power (W)",
            x_scale: Scale::Log,
            y_scale: Scale::Log,
        },
        &series,
    )?;
    for r in &t.pulse_stats {
        println!(
            "{:>14}: peak {:.3e} ± {:.2e} V, {:.1}% of pulses counted",
            r.label,
            r.peak_mean_v,
            r.peak_sigma_v,
            100.0 * r.fraction_counted()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let cfg = RunConfig::load(c.config.as_deref())?.override_with(c.seed, c.mode)?;
    if let Command::Config = cli.command {
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    std::fs::create_dir_all(&c.out).with_context(|| format!("cannot create {}", c.out.display()))?;
    let mut out = Output { dir: &c.out, plot: c.plot, written: Vec::new() };
    match &cli.command {
        Command::Theory => theory(&cfg, &mut out)?,
        Command::Simulate { trace_bits } => simulate(&cfg, *trace_bits, &mut out)?,
        Command::Sweep { variable } => sweep(&cfg, variable.as_deref(), &mut out)?,
        Command::Ber { collection_time } => ber(&cfg, *collection_time, &mut out)?,
        Command::Gbp => gbp(&cfg, &mut out)?,
        Command::Config => unreachable!(),
    }
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
