use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fbtrade::analytic::{
    bopt_bruteforce, bopt_stationary, db_to_linear, rate_approx_terms, scaling_study, ApproxModelInput, ScalingRow,
};
use fbtrade::presets::{run_preset, PresetOutput, PRESET_NAMES, PURC_SEARCH_EXTRA_BITS};
use fbtrade::simulator::{
    empirical_bopt, optimize_purc, results_csv, results_json, run_with, sweep, write_csv, EmpiricalBopt,
    ExperimentConfig, RunOptions, Sweep, SweepAxis, DEFAULT_TRIALS,
};
use fbtrade::{Error, Scheme};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 64;
const DEFAULT_SNR_DB: f64 = 10.0;

#[derive(Parser)]
#[command(
    name = "fbtrade",
    version,
    about = "Feedback bits vs. number of users in MIMO broadcast channels",
    after_help = "The worker thread count defaults to the FBTRADE_WORKERS environment variable."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sum rate of one configuration.
    Simulate(RunArgs),
    /// One simulation per value of a swept parameter.
    Sweep(SweepArgs),
    /// Sweep B and report the empirical optimum with its one-stderr band.
    BoptEmpirical(RunArgs),
    /// Optimal bits per user from the approximate rate model.
    BoptAnalytic(RunArgs),
    /// Evaluate the approximate rate model at one point.
    Approx(RunArgs),
    /// Analytic optimum over a grid of M, SNR and T.
    Scaling(ScalingArgs),
    /// Run a named experiment table.
    Preset(PresetArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment config; inline flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Transmit antennas.
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Total feedback bits.
    #[arg(long = "T")]
    t: Option<u32>,
    /// Feedback bits per user.
    #[arg(long = "B")]
    b: Option<u32>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct OutputArgs {
    /// Output file (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Swept parameter: B, T or P_dB.
    #[arg(long)]
    axis: Option<SweepAxis>,
    /// Comma-separated values, or an inclusive integer range `lo:hi`.
    #[arg(long, allow_hyphen_values = true)]
    values: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long = "M", value_delimiter = ',', default_values_t = [4usize])]
    m: Vec<usize>,
    #[arg(long = "snr-db", value_delimiter = ',', allow_negative_numbers = true, default_values_t = [DEFAULT_SNR_DB])]
    snr_db: Vec<f64>,
    #[arg(long = "T", value_delimiter = ',', required = true)]
    t: Vec<u32>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PresetArgs {
    /// One of fig-m4-sweep, fig-m6-sweep, fig-large-T, fig-bopt-vs-T, fig-bopt-vs-snr.
    name: String,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct AnalyticRow {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "P_dB")]
    p_db: f64,
    #[serde(rename = "T")]
    t: u32,
    #[serde(rename = "B_hat")]
    b_hat: f64,
    boundary: bool,
    #[serde(rename = "B_brute")]
    b_brute: u32,
}

#[derive(Serialize)]
struct ApproxRow {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "P_dB")]
    p_db: f64,
    #[serde(rename = "T")]
    t: u32,
    #[serde(rename = "B")]
    b: u32,
    #[serde(rename = "K")]
    k: u32,
    diversity: f64,
    loss: f64,
    rate_approx: f64,
}

#[derive(Serialize)]
struct BoptRow {
    scheme: &'static str,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "P_dB")]
    p_db: f64,
    #[serde(rename = "T")]
    t: u32,
    trials: u64,
    seed: u64,
    #[serde(rename = "B_opt")]
    b_opt: u32,
    band_min: u32,
    band_max: u32,
    band_size: usize,
    mean_rate: f64,
    stderr: f64,
}

impl BoptRow {
    fn new(e: &EmpiricalBopt) -> Self {
        let best = e
            .results
            .iter()
            .find(|r| r.config.b == Some(e.argmax))
            .expect("argmax is a sweep point");
        let c = &best.config;
        BoptRow {
            scheme: c.scheme.name(),
            m: c.m,
            p_db: c.snr_db,
            t: c.t,
            trials: c.trials,
            seed: c.seed,
            b_opt: e.argmax,
            band_min: e.band.iter().copied().min().unwrap_or(e.argmax),
            band_max: e.band.iter().copied().max().unwrap_or(e.argmax),
            band_size: e.band.len(),
            mean_rate: best.mean_rate,
            stderr: best.stderr,
        }
    }
}

/// Merge the config file (if any) with inline flags.
fn experiment(args: &ConfigArgs) -> fbtrade::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => {
            let m = args
                .m
                .ok_or_else(|| Error::config("M", "missing (pass --M or --config)"))?;
            let t = args
                .t
                .ok_or_else(|| Error::config("T", "missing (pass --T or --config)"))?;
            ExperimentConfig::new(Scheme::ZfRvq, m, DEFAULT_SNR_DB, t, None)
        }
    };
    if let Some(s) = args.scheme {
        cfg.scheme = s;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(p) = args.snr_db {
        cfg.snr_db = p;
    }
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if args.b.is_some() {
        cfg.b = args.b;
    }
    if let Some(n) = args.trials {
        cfg.trials = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_values(s: &str) -> fbtrade::Result<Vec<f64>> {
    if let Some((lo, hi)) = s.split_once(':') {
        let bound = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::config("sweep.values", format!("`{v}` is not an integer range bound")))
        };
        let (lo, hi) = (bound(lo)?, bound(hi)?);
        if lo > hi {
            return Err(Error::config("sweep.values", format!("empty range {lo}:{hi}")));
        }
        return Ok((lo..=hi).map(f64::from).collect());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::config("sweep.values", format!("`{v}` is not a number")))
        })
        .collect()
}

fn emit(out: &OutputArgs, body: &str) -> fbtrade::Result<()> {
    match &out.out {
        Some(path) => write_file(path, body),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, body: &str) -> fbtrade::Result<()> {
    fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn csv_string<S: Serialize>(rows: &[S]) -> fbtrade::Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn json_string<S: Serialize + ?Sized>(value: &S) -> fbtrade::Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

fn tabular<S: Serialize>(out: &OutputArgs, rows: &[S]) -> fbtrade::Result<()> {
    let body = if out.json {
        json_string(rows)?
    } else {
        csv_string(rows)?
    };
    emit(out, &body)
}

fn simulations(out: &OutputArgs, results: &[fbtrade::SimulationResult]) -> fbtrade::Result<()> {
    let body = if out.json {
        results_json(results)? + "\n"
    } else {
        results_csv(results)?
    };
    emit(out, &body)
}

fn dispatch(command: Command, opts: RunOptions) -> fbtrade::Result<()> {
    match command {
        Command::Simulate(a) => {
            let cfg = experiment(&a.config)?;
            simulations(&a.output, &[run_with(&cfg, opts)?])
        }
        Command::Sweep(a) => {
            let mut cfg = experiment(&a.config)?;
            match (a.axis, &a.values) {
                (Some(axis), Some(values)) => {
                    cfg.sweep = Some(Sweep {
                        axis,
                        values: parse_values(values)?,
                    })
                }
                (None, None) => {}
                (Some(_), None) => return Err(Error::config("sweep.values", "--axis needs --values")),
                (None, Some(_)) => return Err(Error::config("sweep.axis", "--values needs --axis")),
            }
            simulations(&a.output, &sweep(&cfg, opts)?)
        }
        Command::BoptEmpirical(a) => {
            let cfg = experiment(&a.config)?;
            let e = match cfg.scheme {
                Scheme::ZfRvq => empirical_bopt(&cfg, opts)?,
                Scheme::Purc => optimize_purc(&cfg, PURC_SEARCH_EXTRA_BITS, opts)?,
                other => {
                    return Err(Error::config(
                        "scheme",
                        format!("bits per user are fixed for {}; use zf-rvq or purc", other.name()),
                    ))
                }
            };
            if a.output.json {
                emit(&a.output, &json_string(&e)?)
            } else {
                tabular(&a.output, &[BoptRow::new(&e)])
            }
        }
        Command::BoptAnalytic(a) => {
            let cfg = experiment(&a.config)?;
            let p = db_to_linear(cfg.snr_db);
            let st = bopt_stationary(p, cfg.m, cfg.t)?;
            let row = AnalyticRow {
                m: cfg.m,
                p_db: cfg.snr_db,
                t: cfg.t,
                b_hat: st.b,
                boundary: st.boundary,
                b_brute: bopt_bruteforce(p, cfg.m, cfg.t)?,
            };
            tabular(&a.output, &[row])
        }
        Command::Approx(a) => {
            let cfg = experiment(&a.config)?;
            let b = cfg
                .b
                .ok_or_else(|| Error::config("B", "missing (pass --B or set it in --config)"))?;
            let terms = rate_approx_terms(&ApproxModelInput::new(
                db_to_linear(cfg.snr_db),
                cfg.m,
                f64::from(cfg.t),
                f64::from(b),
            ))?;
            let row = ApproxRow {
                m: cfg.m,
                p_db: cfg.snr_db,
                t: cfg.t,
                b,
                k: cfg.t / b,
                diversity: terms.diversity,
                loss: terms.loss,
                rate_approx: terms.total(),
            };
            tabular(&a.output, &[row])
        }
        Command::Scaling(a) => {
            let rows: Vec<ScalingRow> = scaling_study(&a.snr_db, &a.m, &a.t)?;
            tabular(&a.output, &rows)
        }
        Command::Preset(a) => {
            if !PRESET_NAMES.contains(&a.name.as_str()) {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{}` (one of {})", a.name, PRESET_NAMES.join(", ")),
                ));
            }
            match run_preset(&a.name, a.trials, a.seed, opts)? {
                PresetOutput::Simulation(results) => simulations(&a.output, &results),
                PresetOutput::Scaling(rows) => tabular(&a.output, &rows),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command, RunOptions::from_env()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => EXIT_IO,
                _ => EXIT_VALIDATION,
            })
        }
    }
}
