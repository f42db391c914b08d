//! Monte Carlo experiment driver: risk/cost estimation for both protocols
//! with per-trial substreams, order-insensitive aggregation, and CSV/JSON
//! reporting.

use crate::adaptive::{
    adaptive_total_cost, encode_machine_adaptive, estimate_adaptive, jhat_of, AdaptiveConfig,
};
use crate::besov::{self, BesovParams, CoeffSeq};
use crate::error::{Error, Result};
use crate::minimax::{self, Plan};
use crate::simmodel::{derive_seed, dwt_forward, sample_observations, FunctionSpec, Wavelet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Minimax,
    Adaptive,
}

/// Signal source for each trial. The function signals and file signals are
/// fixed across trials; `RandomBall` redraws a ball member per trial, and
/// `BoundaryBall` fixes a single boundary member drawn from its own seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    RandomBall,
    BoundaryBall { draw_seed: u64 },
    F1,
    F2,
    F3,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub m: usize,
    pub sigma: f64,
    /// Expected total communication budget; minimax only.
    pub budget: Option<f64>,
    pub besov: BesovParams,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub j_total: usize,
    pub trials: usize,
    pub seed: u64,
    pub signal: Signal,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::ConfigError("trials must be >= 1".into()));
        }
        if self.m < 1 {
            return Err(Error::ConfigError("m must be >= 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::ConfigError(format!(
                "sigma = {} must be > 0",
                self.sigma
            )));
        }
        if self.j_total > 24 {
            return Err(Error::ConfigError(format!(
                "levels = {} is too deep (max 24)",
                self.j_total
            )));
        }
        self.besov
            .validate()
            .map_err(|e| Error::ConfigError(e.to_string()))?;
        match self.protocol {
            Protocol::Minimax => {
                if self.budget.is_none() {
                    return Err(Error::ConfigError(
                        "--budget is required for the minimax protocol".into(),
                    ));
                }
            }
            Protocol::Adaptive => {
                self.adaptive_config()
                    .validate()
                    .map_err(|e| Error::ConfigError(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn adaptive_config(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            m: self.m,
            sigma: self.sigma,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            j_total: self.j_total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub mse: f64,
    pub bits: usize,
    /// Minimax: the plan's maximal level. Adaptive: number of kept levels.
    pub jmax_or_levels: i64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub bits_mean: f64,
    pub bits_stderr: f64,
    pub bits_max: usize,
    pub per_trial: Vec<TrialRecord>,
    pub config: ExperimentConfig,
    pub wall_time_secs: f64,
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

enum ResolvedSignal {
    Fixed(CoeffSeq),
    PerTrialBall,
}

fn resolve_signal(cfg: &ExperimentConfig) -> Result<ResolvedSignal> {
    let fixed = match &cfg.signal {
        Signal::RandomBall => return Ok(ResolvedSignal::PerTrialBall),
        Signal::BoundaryBall { draw_seed } => {
            besov::random_member_boundary(&cfg.besov, cfg.j_total, *draw_seed)
        }
        Signal::F1 => dwt_forward(&FunctionSpec::f1(cfg.j_total), Wavelet::Haar)?,
        Signal::F2 => dwt_forward(&FunctionSpec::f2(cfg.j_total), Wavelet::Haar)?,
        Signal::F3 => dwt_forward(&FunctionSpec::f3(cfg.j_total), Wavelet::Haar)?,
        Signal::File(path) => {
            let text = std::fs::read_to_string(path)?;
            let theta = CoeffSeq::from_csv(&text)
                .map_err(|e| Error::ConfigError(format!("signal file {path:?}: {e}")))?;
            if theta.j_total() != cfg.j_total {
                return Err(Error::ConfigError(format!(
                    "signal file has {} levels but --levels is {}",
                    theta.j_total(),
                    cfg.j_total
                )));
            }
            theta
        }
    };
    Ok(ResolvedSignal::Fixed(fixed))
}

fn trial_theta<'a>(
    resolved: &'a ResolvedSignal,
    cfg: &ExperimentConfig,
    trial_seed: u64,
) -> std::borrow::Cow<'a, CoeffSeq> {
    match resolved {
        ResolvedSignal::Fixed(theta) => std::borrow::Cow::Borrowed(theta),
        ResolvedSignal::PerTrialBall => std::borrow::Cow::Owned(besov::random_member(
            &cfg.besov,
            cfg.j_total,
            derive_seed(trial_seed, 1),
        )),
    }
}

fn run_minimax_trial(
    cfg: &ExperimentConfig,
    plan: &Plan,
    theta: &CoeffSeq,
    trial_seed: u64,
) -> Result<(f64, usize)> {
    // machines beyond the active pool are silent whatever their data
    let talking = if plan.j_max < 0 { 0 } else { plan.u.min(cfg.m) };
    let obs = sample_observations(theta, cfg.sigma, talking, trial_seed);
    let transcripts: Vec<minimax::Transcript> = obs
        .iter()
        .map(|o| minimax::encode_machine(plan, o.machine_id, &o.data))
        .collect();
    let bits = minimax::total_cost(&transcripts);
    let estimate = if talking == 0 {
        CoeffSeq::zeros(cfg.j_total)
    } else {
        minimax::estimate(plan, &transcripts, cfg.j_total)?
    };
    // support rule: nothing above the plan's maximal level
    for j in 0..=estimate.j_total() {
        if (j as i32) > plan.j_max && estimate.level(j).iter().any(|&v| v != 0.0) {
            return Err(Error::RoleMismatch(format!(
                "estimator support violated at level {j} (j_max = {})",
                plan.j_max
            )));
        }
    }
    Ok((estimate.mse(theta), bits))
}

fn run_adaptive_trial(
    cfg: &ExperimentConfig,
    acfg: &AdaptiveConfig,
    theta: &CoeffSeq,
    trial_seed: u64,
) -> Result<(f64, usize, usize)> {
    let obs = sample_observations(theta, cfg.sigma, cfg.m, trial_seed);
    let transcripts: Vec<_> = obs
        .iter()
        .map(|o| encode_machine_adaptive(o.machine_id, &o.data, acfg))
        .collect();
    let bits = adaptive_total_cost(&transcripts);
    let jhat = jhat_of(&transcripts, cfg.m);
    let estimate = estimate_adaptive(&transcripts, acfg)?;
    for j in 0..=estimate.j_total() {
        if !jhat.contains(j) && estimate.level(j).iter().any(|&v| v != 0.0) {
            return Err(Error::RoleMismatch(format!(
                "estimator support violated at unselected level {j}"
            )));
        }
    }
    Ok((estimate.mse(theta), bits, jhat.len()))
}

fn run_inner(cfg: &ExperimentConfig) -> Result<RiskReport> {
    cfg.validate()?;
    let start = Instant::now();
    let resolved = resolve_signal(cfg)?;
    let plan = match cfg.protocol {
        Protocol::Minimax => Some(minimax::plan(
            cfg.budget.expect("validated"),
            &cfg.besov,
            cfg.sigma,
            cfg.m,
            cfg.lambda0,
        )?),
        Protocol::Adaptive => None,
    };
    let acfg = cfg.adaptive_config();

    let per_trial: Result<Vec<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_seed(cfg.seed, trial as u64);
            let theta = trial_theta(&resolved, cfg, trial_seed);
            let (mse, bits, jmax_or_levels) = match cfg.protocol {
                Protocol::Minimax => {
                    let plan = plan.as_ref().expect("planned");
                    let (mse, bits) = run_minimax_trial(cfg, plan, &theta, trial_seed)?;
                    (mse, bits, plan.j_max as i64)
                }
                Protocol::Adaptive => {
                    let (mse, bits, levels) = run_adaptive_trial(cfg, &acfg, &theta, trial_seed)?;
                    (mse, bits, levels as i64)
                }
            };
            Ok(TrialRecord {
                trial: trial + 1,
                mse,
                bits,
                jmax_or_levels,
                seed: trial_seed,
            })
        })
        .collect();
    let per_trial = per_trial?;

    let n = per_trial.len();
    let (mse_mean, mse_stderr) = mean_and_stderr(per_trial.iter().map(|t| t.mse), n);
    let (bits_mean, bits_stderr) = mean_and_stderr(per_trial.iter().map(|t| t.bits as f64), n);
    let bits_max = per_trial.iter().map(|t| t.bits).max().unwrap_or(0);

    Ok(RiskReport {
        mse_mean,
        mse_stderr,
        bits_mean,
        bits_stderr,
        bits_max,
        per_trial,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs the configured experiment. Trials execute in parallel with
/// trial-indexed substreams, so the report does not depend on the thread
/// count; `MODGAME_THREADS` caps parallelism.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RiskReport> {
    let threads = std::env::var("MODGAME_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0);
    run_experiment_with_threads(cfg, threads)
}

/// As `run_experiment` with an explicit thread cap (None uses the global
/// pool).
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<RiskReport> {
    match threads {
        None => run_inner(cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))?
            .install(|| run_inner(cfg)),
    }
}

/// Per-trial rows in the fixed column order.
pub fn report_to_csv(report: &RiskReport) -> String {
    let mut out = String::from("trial,mse,bits,jmax_or_levels,seed\n");
    for t in &report.per_trial {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.trial, t.mse, t.bits, t.jmax_or_levels, t.seed
        ));
    }
    out
}

/// One row of a rate-curve table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub x: f64,
    pub empirical: f64,
    pub theoretical: f64,
}

/// Sweeps the grid (budgets for minimax, machine counts for adaptive) and
/// emits (x, empirical, theoretical) rows for log-log comparison: observed
/// risk against the minimax rate, or observed bits against the adaptive cost
/// envelope.
pub fn rate_curve(base: &ExperimentConfig, grid: &[f64]) -> Result<Vec<RatePoint>> {
    if grid.is_empty() {
        return Err(Error::ConfigError("rate grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &x in grid {
        let mut cfg = base.clone();
        let (empirical, theoretical) = match base.protocol {
            Protocol::Minimax => {
                cfg.budget = Some(x);
                let report = run_experiment(&cfg)?;
                (
                    report.mse_mean,
                    besov::rate_minimax(x, &base.besov, base.m, base.sigma)?,
                )
            }
            Protocol::Adaptive => {
                let m = x.round() as usize;
                cfg.m = m;
                let report = run_experiment(&cfg)?;
                (
                    report.bits_mean,
                    besov::rate_adaptive_cost(&base.besov, m, base.sigma)?,
                )
            }
        };
        rows.push(RatePoint {
            x,
            empirical,
            theoretical,
        });
    }
    Ok(rows)
}

pub fn rate_table_to_csv(rows: &[RatePoint]) -> String {
    let mut out = String::from("x,empirical,theoretical\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.x, r.empirical, r.theoretical));
    }
    out
}

/// Least-squares slope of log(y) against log(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
