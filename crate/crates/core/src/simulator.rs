//! Monte Carlo harness: experiment configs, runs, sweeps and output tables.
//!
//! A run averages the per-frame sum rate over `trials` independent frames.
//! Each frame draws its randomness from substreams keyed by the master seed,
//! a fingerprint of the experiment point and the trial index, and per-trial
//! rates are reduced in trial order, so results do not depend on the number
//! of worker threads.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{db_to_linear, feasible_bits};
use crate::channel::{draw_channel, fingerprint, SeedPolicy, StreamLabel};
use crate::error::{Error, Result};
use crate::quantizer::{index_bits, RvqMode};
use crate::schemes::{frame_rate, Scheme, SystemParams, MAX_PURC_EXTRA_BITS};

pub const DEFAULT_TRIALS: u64 = 10_000;
/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "FBTRADE_WORKERS";

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    B,
    T,
    #[serde(rename = "P_dB")]
    PDb,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" | "b" => Ok(SweepAxis::B),
            "T" | "t" => Ok(SweepAxis::T),
            "P_dB" | "p_db" | "snr-db" | "snr_db" => Ok(SweepAxis::PDb),
            other => Err(Error::config(
                "sweep.axis",
                format!("unknown axis `{other}` (B, T or P_dB)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    #[serde(rename = "M")]
    pub m: usize,
    pub snr_db: f64,
    #[serde(rename = "T")]
    pub t: u32,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<u32>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rvq_mode: RvqMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

impl ExperimentConfig {
    pub fn new(scheme: Scheme, m: usize, snr_db: f64, t: u32, b: Option<u32>) -> Self {
        ExperimentConfig {
            scheme,
            m,
            snr_db,
            t,
            b,
            trials: DEFAULT_TRIALS,
            seed: 0,
            rvq_mode: RvqMode::default(),
            sweep: None,
        }
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Check every constraint and resolve the system parameters.
    pub fn validate(&self) -> Result<SystemParams> {
        if self.trials == 0 {
            return Err(Error::config("trials", "need at least one trial"));
        }
        if self.trials > 1 << 32 {
            return Err(Error::config("trials", "at most 2^32 trials"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db", "SNR must be finite"));
        }
        if let RvqMode::Auto { max_explicit_bits } = self.rvq_mode {
            if max_explicit_bits > crate::quantizer::MAX_EXPLICIT_BITS {
                return Err(Error::config("rvq_mode", "max_explicit_bits above 30"));
            }
        }
        let params = SystemParams::new(self.scheme, self.m, db_to_linear(self.snr_db), self.t, self.b)?;
        if self.scheme == Scheme::ZfRvq && params.b > self.rvq_mode.max_bits() {
            return Err(Error::config(
                "B",
                format!("B above {} in explicit RVQ mode", self.rvq_mode.max_bits()),
            ));
        }
        Ok(params)
    }

    /// The config with defaults filled in and the sweep removed.
    pub fn resolved(&self) -> Result<ExperimentConfig> {
        let params = self.validate()?;
        Ok(ExperimentConfig {
            b: Some(params.b),
            sweep: None,
            ..self.clone()
        })
    }

    /// Config of one sweep point.
    pub fn at(&self, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig {
            sweep: None,
            ..self.clone()
        };
        let as_int = |field: &'static str| -> Result<u32> {
            if value.fract() != 0.0 || value < 0.0 || value > u32::MAX as f64 {
                return Err(Error::config(
                    field,
                    format!("sweep value {value} is not a non-negative integer"),
                ));
            }
            Ok(value as u32)
        };
        match axis {
            SweepAxis::B => c.b = Some(as_int("B")?),
            SweepAxis::T => c.t = as_int("T")?,
            SweepAxis::PDb => c.snr_db = value,
        }
        Ok(c)
    }

    fn point_key(&self, params: &SystemParams) -> u64 {
        let mode = match self.rvq_mode {
            RvqMode::Explicit => 1,
            RvqMode::Statistical => 2,
            RvqMode::Auto { max_explicit_bits } => 3 | u64::from(max_explicit_bits) << 8,
        };
        fingerprint(&[
            params.scheme.code(),
            params.m as u64,
            self.snr_db.to_bits(),
            u64::from(params.t),
            u64::from(params.b),
            mode,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    /// Fully resolved config (B filled in, no sweep).
    pub config: ExperimentConfig,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean_rate: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Not written to output files, which must be byte-reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SimulationResult {
    pub fn row(&self) -> CsvRow {
        CsvRow {
            scheme: self.config.scheme.name(),
            m: self.config.m,
            p_db: self.config.snr_db,
            t: self.config.t,
            b: self.config.b.unwrap_or_default(),
            k: self.k,
            trials: self.trials,
            mean_rate: self.mean_rate,
            stderr: self.stderr,
            seed: self.config.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub scheme: &'static str,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "P_dB")]
    pub p_db: f64,
    #[serde(rename = "T")]
    pub t: u32,
    #[serde(rename = "B")]
    pub b: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: u64,
    pub mean_rate: f64,
    pub stderr: f64,
    pub seed: u64,
}

/// Execution knobs that never change results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl RunOptions {
    pub fn from_env() -> Self {
        RunOptions {
            workers: std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
                .filter(|&n| n > 0),
        }
    }
}

fn with_pool<T: Send>(opts: RunOptions, f: impl FnOnce() -> T + Send) -> Result<T> {
    match opts.workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Io(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Mean and standard error (sample std / √n; zero for a single sample).
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-frame sum rates of one experiment point, in trial order.
pub fn frame_rates(config: &ExperimentConfig, opts: RunOptions) -> Result<Vec<f64>> {
    let params = config.validate()?;
    let policy = SeedPolicy::new(config.seed, config.point_key(&params));
    let mode = config.rvq_mode;
    with_pool(opts, || {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let streams = policy.trial(trial);
                let ch = draw_channel(params.k, params.m, trial, &mut streams.get(StreamLabel::Channel));
                frame_rate(&ch, &params, mode, &streams)
            })
            .collect::<Result<Vec<f64>>>()
    })?
}

pub fn run(config: &ExperimentConfig) -> Result<SimulationResult> {
    run_with(config, RunOptions::default())
}

pub fn run_with(config: &ExperimentConfig, opts: RunOptions) -> Result<SimulationResult> {
    let start = Instant::now();
    let resolved = config.resolved()?;
    let params = config.validate()?;
    let rates = frame_rates(&resolved, opts)?;
    let (mean_rate, stderr) = mean_stderr(&rates);
    Ok(SimulationResult {
        config: resolved,
        k: params.k,
        mean_rate,
        stderr,
        trials: config.trials,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// One run per sweep value.
pub fn sweep(config: &ExperimentConfig, opts: RunOptions) -> Result<Vec<SimulationResult>> {
    let sw = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "no sweep axis configured"))?;
    if sw.values.is_empty() {
        return Err(Error::config("sweep.values", "empty value list"));
    }
    sw.values
        .iter()
        .map(|&v| config.at(sw.axis, v).and_then(|c| run_with(&c, opts)))
        .collect()
}

/// Empirical optimum of a B-sweep with its one-standard-error band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalBopt {
    pub argmax: u32,
    /// Every B whose mean lies within one standard error (of the best point) of the maximum.
    pub band: Vec<u32>,
    pub results: Vec<SimulationResult>,
}

impl EmpiricalBopt {
    pub fn from_results(results: Vec<SimulationResult>) -> Result<Self> {
        let best = results
            .iter()
            .fold(None::<&SimulationResult>, |acc, r| match acc {
                Some(a) if a.mean_rate >= r.mean_rate => Some(a),
                _ => Some(r),
            })
            .ok_or_else(|| Error::EmptyRange("no sweep points".into()))?;
        let argmax = best.config.b.unwrap_or_default();
        let floor = best.mean_rate - best.stderr;
        let band = results
            .iter()
            .filter(|r| r.mean_rate >= floor)
            .map(|r| r.config.b.unwrap_or_default())
            .collect();
        Ok(EmpiricalBopt { argmax, band, results })
    }

    pub fn band_contains_any(&self, lo: u32, hi: u32) -> bool {
        self.band.iter().any(|b| (lo..=hi).contains(b))
    }
}

/// Sweep B over the feasible ZF-RVQ range `[⌈1+log₂M⌉, ⌊T/M⌋]` and return the argmax.
pub fn empirical_bopt(base: &ExperimentConfig, opts: RunOptions) -> Result<EmpiricalBopt> {
    let range = feasible_bits(base.m, base.t)?;
    let cfg = ExperimentConfig {
        scheme: Scheme::ZfRvq,
        sweep: Some(Sweep {
            axis: SweepAxis::B,
            values: range.map(f64::from).collect(),
        }),
        ..base.clone()
    };
    EmpiricalBopt::from_results(sweep(&cfg, opts)?)
}

/// Best PU²RC point over `B ∈ [⌈log₂M⌉, min(⌈log₂M⌉ + max_extra_bits, T)]`.
pub fn optimize_purc(base: &ExperimentConfig, max_extra_bits: u32, opts: RunOptions) -> Result<EmpiricalBopt> {
    let lo = index_bits(base.m);
    let hi = (lo + max_extra_bits.min(MAX_PURC_EXTRA_BITS)).min(base.t);
    let cfg = ExperimentConfig {
        scheme: Scheme::Purc,
        sweep: Some(Sweep {
            axis: SweepAxis::B,
            values: (lo..=hi).map(f64::from).collect(),
        }),
        ..base.clone()
    };
    EmpiricalBopt::from_results(sweep(&cfg, opts)?)
}

/// Serialize rows as CSV with a header line.
pub fn write_csv<W: Write, S: Serialize>(out: W, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn results_csv(results: &[SimulationResult]) -> Result<String> {
    let rows: Vec<CsvRow> = results.iter().map(SimulationResult::row).collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn results_json(results: &[SimulationResult]) -> Result<String> {
    serde_json::to_string_pretty(results).map_err(|e| Error::Io(e.to_string()))
}
