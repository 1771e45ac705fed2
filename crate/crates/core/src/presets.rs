//! Named experiment tables behind the standard result figures.
//!
//! Plotting is left to external tools; each preset yields one CSV table.

use crate::analytic::{bopt_bruteforce, db_to_linear, scaling_study, ScalingRow};
use crate::error::{Error, Result};
use crate::schemes::Scheme;
use crate::simulator::{optimize_purc, run_with, ExperimentConfig, RunOptions, SimulationResult};

pub const PRESET_NAMES: [&str; 5] = [
    "fig-m4-sweep",
    "fig-m6-sweep",
    "fig-large-T",
    "fig-bopt-vs-T",
    "fig-bopt-vs-snr",
];

/// PU²RC is optimized over at most this many bits beyond the beam index.
pub const PURC_SEARCH_EXTRA_BITS: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum PresetOutput {
    Simulation(Vec<SimulationResult>),
    Scaling(Vec<ScalingRow>),
}

/// Rate vs. T for several fixed B, plus RBF, at 10 dB.
fn rate_vs_t(m: usize, bits: &[u32], ts: &[u32], trials: u64, seed: u64) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for &t in ts {
        for &b in bits {
            let c = ExperimentConfig::new(Scheme::ZfRvq, m, 10.0, t, Some(b))
                .with_trials(trials)
                .with_seed(seed);
            if c.validate().is_ok() {
                out.push(c);
            }
        }
        let rbf = ExperimentConfig::new(Scheme::Rbf, m, 10.0, t, None)
            .with_trials(trials)
            .with_seed(seed);
        if rbf.validate().is_ok() {
            out.push(rbf);
        }
    }
    out
}

pub fn run_preset(name: &str, trials: u64, seed: u64, opts: RunOptions) -> Result<PresetOutput> {
    let runs = |cfgs: Vec<ExperimentConfig>| -> Result<PresetOutput> {
        cfgs.iter()
            .map(|c| run_with(c, opts))
            .collect::<Result<Vec<_>>>()
            .map(PresetOutput::Simulation)
    };
    match name {
        "fig-m4-sweep" => runs(rate_vs_t(
            4,
            &[5, 10, 15, 20, 25, 30],
            &[50, 100, 200, 500, 1000, 2000, 5000],
            trials,
            seed,
        )),
        "fig-m6-sweep" => runs(rate_vs_t(
            6,
            &[10, 20, 30, 35, 40, 50],
            &[100, 200, 500, 1000, 2000, 5000],
            trials,
            seed,
        )),
        "fig-large-T" => {
            let mut out = Vec::new();
            for t in [1000u32, 2000, 5000, 10000] {
                let base = ExperimentConfig::new(Scheme::ZfRvq, 4, 10.0, t, None)
                    .with_trials(trials)
                    .with_seed(seed);
                let b = bopt_bruteforce(db_to_linear(10.0), 4, t)?;
                out.push(run_with(
                    &ExperimentConfig {
                        b: Some(b),
                        ..base.clone()
                    },
                    opts,
                )?);
                let purc = optimize_purc(&base, PURC_SEARCH_EXTRA_BITS, opts)?;
                let best = purc
                    .results
                    .into_iter()
                    .find(|r| r.config.b == Some(purc.argmax))
                    .expect("argmax is one of the results");
                out.push(best);
                out.push(run_with(
                    &ExperimentConfig {
                        scheme: Scheme::Rbf,
                        b: None,
                        ..base.clone()
                    },
                    opts,
                )?);
                out.push(run_with(
                    &ExperimentConfig {
                        scheme: Scheme::ZfPerfect,
                        b: Some(1),
                        ..base
                    },
                    opts,
                )?);
            }
            Ok(PresetOutput::Simulation(out))
        }
        "fig-bopt-vs-T" => Ok(PresetOutput::Scaling(scaling_study(
            &[10.0],
            &[4],
            &[50, 100, 150, 200, 300, 500, 1000, 2000, 5000, 10000],
        )?)),
        "fig-bopt-vs-snr" => Ok(PresetOutput::Scaling(scaling_study(
            &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            &[2, 4, 6, 8],
            &[1000],
        )?)),
        other => Err(Error::config(
            "preset",
            format!("unknown preset `{other}` (one of {})", PRESET_NAMES.join(", ")),
        )),
    }
}
