//! Coupling from the past: perfect samples of the stationary regime.
//!
//! Because all rain and marks are pure functions of (seed, structural key),
//! the execution launched from -2T restricted to [-T, 0] sees exactly the
//! same randomness as the one launched from -T. Running the two coupled
//! forward from -T (the longer history carried as zombies) detects when the
//! time-0 state has stopped depending on the start. The certificate is
//! global: agreement on the whole torus, which implies agreement on every
//! sub-window.

use std::io::Write as IoWrite;

use serde::Serialize;

use crate::analysis::rank_sum_test;
use crate::config::SimParams;
use crate::coupling::{advance_coupled_with, CoupledState};
use crate::dynamics::{simulate, Configuration};
use crate::error::{Error, Result};

/// Sidecar record for one CFTP attempt. `coincidence_time` is the elapsed
/// time from the start of the deciding coupled comparison until the two
/// executions agree forever (0 when they never differ); infinity, rendered
/// as JSON null, when coalescence was not reached within budget.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CftpResult {
    pub seed: u64,
    pub horizon_used: f64,
    pub coalesced: bool,
    pub coincidence_time: f64,
}

/// A CFTP attempt together with its time-0 configuration. When
/// `result.coalesced` is false the sample is the best available long-run
/// approximation, not an exact draw.
#[derive(Clone, Debug)]
pub struct CftpOutcome {
    pub result: CftpResult,
    pub sample: Configuration,
    pub diagnostic: Option<String>,
    /// (event time, special count) at every change, for the deciding run.
    pub history: Vec<(f64, usize)>,
}

/// End state of one coupled horizon comparison.
#[derive(Clone, Debug)]
pub struct HorizonRun {
    pub state: CoupledState,
    /// Time of the last event at which any special point existed.
    pub last_special_time: Option<f64>,
    pub history: Vec<(f64, usize)>,
}

/// Run the executions from -t_short and -t_long coupled over [-t_short, 0].
///
/// The longer execution's state at -t_short (obtained by a plain forward run
/// over [-t_long, -t_short]) enters as the second process, so every one of
/// its points starts as a zombie relative to the empty-start process.
pub fn coupled_horizon_run(p: &SimParams, t_short: f64, t_long: f64) -> Result<HorizonRun> {
    if !(t_short > 0.0) || t_long < t_short {
        return Err(Error::contract(format!(
            "need 0 < t_short <= t_long, got {t_short}, {t_long}"
        )));
    }
    let w = p.window();
    let (_, mid) = simulate(p, Configuration::new(w), -t_long, -t_short, false)?;
    let mut short = Configuration::new(w);
    short.now = -t_short;
    let mut s = CoupledState::new(short, mid)?;
    let mut history = Vec::new();
    let (_, a0, z0) = s.counts();
    let mut n_special = a0 + z0;
    history.push((-t_short, n_special));
    let mut last_special_time = if n_special > 0 { Some(-t_short) } else { None };
    advance_coupled_with(&mut s, p, 0.0, |state, e, _| {
        let (_, a, z) = state.counts();
        if a + z != n_special {
            n_special = a + z;
            history.push((e.t, n_special));
        }
        if a + z > 0 {
            last_special_time = Some(e.t);
        }
    })?;
    Ok(HorizonRun { state: s, last_special_time, history })
}

/// Draw one stationary sample by horizon doubling: T, 2T, 4T, ... until the
/// -T and -2T executions produce identical time-0 states, or the past-time
/// budget `t_max` is exhausted.
pub fn sample_stationary(p: &SimParams, t_init: f64, t_max: f64) -> Result<CftpOutcome> {
    p.validate()?;
    if !(t_init > 0.0) || t_max < t_init {
        return Err(Error::InvalidParams(format!(
            "need 0 < t_init <= t_max, got {t_init}, {t_max}"
        )));
    }
    if p.rho == 0.0 {
        // at rho = 0 an established point is never killed, so the initial
        // discrepancy can only grow; no horizon ever coalesces
        let (_, sample) = simulate(p, Configuration::new(p.window()), -t_init, 0.0, false)?;
        return Ok(CftpOutcome {
            result: CftpResult {
                seed: p.seed,
                horizon_used: t_init,
                coalesced: false,
                coincidence_time: f64::INFINITY,
            },
            sample,
            diagnostic: Some(
                "rho = 0: points never die, so specials persist and CFTP cannot coalesce"
                    .to_string(),
            ),
            history: Vec::new(),
        });
    }
    let mut t = t_init;
    loop {
        let run = coupled_horizon_run(p, t, 2.0 * t)?;
        if run.state.coalesced() {
            let coincidence_time = run.last_special_time.map_or(0.0, |ts| ts + t);
            return Ok(CftpOutcome {
                result: CftpResult {
                    seed: p.seed,
                    horizon_used: t,
                    coalesced: true,
                    coincidence_time,
                },
                sample: run.state.proc1,
                diagnostic: None,
                history: run.history,
            });
        }
        if 2.0 * t >= t_max {
            return Ok(CftpOutcome {
                result: CftpResult {
                    seed: p.seed,
                    horizon_used: t,
                    coalesced: false,
                    coincidence_time: f64::INFINITY,
                },
                sample: run.state.proc2,
                diagnostic: Some(format!("no coalescence within t_max = {t_max}")),
                history: run.history,
            });
        }
        t *= 2.0;
    }
}

/// Elapsed time from -horizon_a until the two executions agree forever;
/// +inf if they still differ at time 0.
pub fn coincidence_time(p: &SimParams, horizon_a: f64, horizon_b: f64) -> Result<f64> {
    if horizon_a > horizon_b {
        return Err(Error::contract(format!(
            "horizon_a = {horizon_a} must be <= horizon_b = {horizon_b}"
        )));
    }
    if horizon_a == horizon_b {
        return Ok(0.0);
    }
    let run = coupled_horizon_run(p, horizon_a, horizon_b)?;
    if !run.state.coalesced() {
        return Ok(f64::INFINITY);
    }
    Ok(run.last_special_time.map_or(0.0, |ts| ts + horizon_a))
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub counts_t0: Vec<usize>,
    pub counts_evolved: Vec<usize>,
    pub p_value: Option<f64>,
    pub conclusive: bool,
}

const MIN_EXACT_SAMPLES: usize = 10;

/// Two-sample check that CFTP output is time-invariant: one batch of exact
/// samples at time 0 against an independent batch evolved 5 extra units.
/// Under stationarity the count-in-window distributions match.
pub fn stationarity_check(
    p: &SimParams,
    n_samples: usize,
    t_init: f64,
    t_max: f64,
) -> Result<StationarityReport> {
    let mut counts_t0 = Vec::new();
    for i in 0..n_samples {
        let pi = p.replica(i as u64);
        let out = sample_stationary(&pi, t_init, t_max)?;
        if out.result.coalesced {
            counts_t0.push(out.sample.len());
        }
    }
    let mut counts_evolved = Vec::new();
    for i in 0..n_samples {
        let pi = p.replica((n_samples + i) as u64);
        let out = sample_stationary(&pi, t_init, t_max)?;
        if out.result.coalesced {
            let (_, evolved) = simulate(&pi, out.sample, 0.0, 5.0, false)?;
            counts_evolved.push(evolved.len());
        }
    }
    if counts_t0.len() < MIN_EXACT_SAMPLES || counts_evolved.len() < MIN_EXACT_SAMPLES {
        return Ok(StationarityReport {
            counts_t0,
            counts_evolved,
            p_value: None,
            conclusive: false,
        });
    }
    let a: Vec<f64> = counts_t0.iter().map(|&c| c as f64).collect();
    let b: Vec<f64> = counts_evolved.iter().map(|&c| c as f64).collect();
    let p_value = rank_sum_test(&a, &b)?;
    Ok(StationarityReport {
        counts_t0,
        counts_evolved,
        p_value: Some(p_value),
        conclusive: true,
    })
}

pub fn write_sidecar<W: IoWrite>(r: &CftpResult, out: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, r).map_err(std::io::Error::other)?;
    writeln!(out)?;
    Ok(())
}
