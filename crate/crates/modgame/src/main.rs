use clap::{Args, Parser, Subcommand};
use modgame::besov::BesovParams;
use modgame::bitcodec::{decode_g, encode_g};
use modgame::error::{Error, Result};
use modgame::harness::{
    rate_curve, rate_table_to_csv, report_to_csv, run_experiment, ExperimentConfig, Protocol,
    Signal,
};
use modgame::minimax::lambda0_strict;
use modgame::simmodel::{dwt_forward, dwt_inverse, FunctionSpec, Wavelet};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "modgame",
    about = "Distributed Gaussian sequence estimation under communication budgets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the budgeted minimax protocol and report risk and exact bits.
    Minimax(RunArgs),
    /// Run the adaptive local-thresholding protocol.
    Adaptive(RunArgs),
    /// Sweep a grid and tabulate empirical values against the rate oracles.
    Rates(RatesArgs),
    /// Exhaustive integer-codec checks.
    #[command(name = "codec-selftest")]
    CodecSelftest,
    /// Wavelet transform isometry and round-trip checks.
    #[command(name = "dwt-selftest")]
    DwtSelftest,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Number of local machines.
    #[arg(long)]
    m: Option<usize>,
    /// Noise level of the sequence model.
    #[arg(long)]
    sigma: Option<f64>,
    /// Expected total communication budget (minimax only).
    #[arg(long)]
    budget: Option<f64>,
    /// Smoothness parameter of the target class.
    #[arg(long)]
    alpha: Option<f64>,
    /// First shape index of the class ("inf" accepted).
    #[arg(long, value_parser = parse_extended)]
    p: Option<f64>,
    /// Second shape index of the class ("inf" accepted).
    #[arg(long, value_parser = parse_extended)]
    q: Option<f64>,
    /// Class radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Budget-split tuning constant (floored at 4 unless strict).
    #[arg(long)]
    lambda0: Option<f64>,
    /// Level-selection margin for the adaptive protocol (> 10).
    #[arg(long)]
    lambda1: Option<f64>,
    /// Final energy-threshold constant for the adaptive protocol.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Truncation depth: levels 0..=levels are simulated.
    #[arg(long)]
    levels: Option<usize>,
    /// Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Root seed; trial i uses a substream derived from (seed, i).
    #[arg(long)]
    seed: Option<u64>,
    /// Signal: random-ball, f1, f2, f3, or file=PATH (coefficient CSV).
    #[arg(long)]
    signal: Option<String>,
    /// Write per-trial CSV rows to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the full report as JSON on stdout.
    #[arg(long)]
    json: bool,
    /// Enforce the budget analysis' tuning constant for lambda0.
    #[arg(long = "strict-lambda0")]
    strict_lambda0: bool,
    /// Load defaults from a JSON config file (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    /// Which protocol to sweep.
    #[arg(long, default_value = "minimax")]
    protocol: String,
    /// Comma-separated grid: budgets for minimax, machine counts for adaptive.
    #[arg(long)]
    grid: String,
    #[command(flatten)]
    run: RunArgs,
}

fn parse_extended(s: &str) -> std::result::Result<f64, String> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        Ok(f64::INFINITY)
    } else {
        s.parse::<f64>().map_err(|e| e.to_string())
    }
}

/// File-loadable mirror of the command-line flags.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    m: Option<usize>,
    sigma: Option<f64>,
    budget: Option<f64>,
    alpha: Option<f64>,
    p: Option<f64>,
    q: Option<f64>,
    radius: Option<f64>,
    lambda0: Option<f64>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    levels: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    signal: Option<String>,
}

fn parse_signal(spec: &str) -> Result<Signal> {
    match spec {
        "random-ball" => Ok(Signal::RandomBall),
        "f1" => Ok(Signal::F1),
        "f2" => Ok(Signal::F2),
        "f3" => Ok(Signal::F3),
        other => match other.strip_prefix("file=") {
            Some(path) if !path.is_empty() => Ok(Signal::File(PathBuf::from(path))),
            _ => Err(Error::ConfigError(format!(
                "unknown signal {other:?}; expected random-ball, f1, f2, f3, or file=PATH"
            ))),
        },
    }
}

fn build_config(args: &RunArgs, protocol: Protocol) -> Result<ExperimentConfig> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::ConfigError(format!("config file {path:?}: {e}")))?
        }
        None => FileConfig::default(),
    };
    let alpha = args.alpha.or(file.alpha).unwrap_or(1.0);
    let p = args.p.or(file.p).unwrap_or(2.0);
    let q = args.q.or(file.q).unwrap_or(2.0);
    let radius = args.radius.or(file.radius).unwrap_or(1.0);
    let besov =
        BesovParams::new(alpha, p, q, radius).map_err(|e| Error::ConfigError(e.to_string()))?;

    // floor at 4 by default; the strict flag enforces the analysis constant
    let requested = args.lambda0.or(file.lambda0).unwrap_or(4.0);
    let strict = lambda0_strict(alpha);
    let lambda0 = if args.strict_lambda0 {
        requested.max(strict)
    } else {
        let floored = requested.max(4.0);
        if protocol == Protocol::Minimax && floored < strict {
            eprintln!(
                "warning: lambda0 = {floored} is below the analysis constant {strict:.1}; \
                 the expected-cost guarantee needs --strict-lambda0"
            );
        }
        floored
    };

    let signal = match args.signal.as_deref().or(file.signal.as_deref()) {
        Some(spec) => parse_signal(spec)?,
        None => Signal::RandomBall,
    };

    Ok(ExperimentConfig {
        protocol,
        m: args.m.or(file.m).unwrap_or(100),
        sigma: args.sigma.or(file.sigma).unwrap_or(0.0625),
        budget: args.budget.or(file.budget),
        besov,
        lambda0,
        lambda1: args.lambda1.or(file.lambda1).unwrap_or(30.0),
        lambda2: args.lambda2.or(file.lambda2).unwrap_or(30.0),
        j_total: args.levels.or(file.levels).unwrap_or(10),
        trials: args.trials.or(file.trials).unwrap_or(100),
        seed: args.seed.or(file.seed).unwrap_or(1),
        signal,
    })
}

fn run_protocol(args: &RunArgs, protocol: Protocol) -> Result<()> {
    let cfg = build_config(args, protocol)?;
    let report = run_experiment(&cfg)?;
    if let Some(path) = &args.out {
        std::fs::write(path, report_to_csv(&report))?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(io_err)?);
    } else {
        println!(
            "trials: {}  mse: {:.6e} (se {:.2e})  bits: {:.1} (se {:.2}, max {})  wall: {:.2}s",
            report.per_trial.len(),
            report.mse_mean,
            report.mse_stderr,
            report.bits_mean,
            report.bits_stderr,
            report.bits_max,
            report.wall_time_secs
        );
    }
    Ok(())
}

fn run_rates(args: &RatesArgs) -> Result<()> {
    let protocol = match args.protocol.as_str() {
        "minimax" => Protocol::Minimax,
        "adaptive" => Protocol::Adaptive,
        other => {
            return Err(Error::ConfigError(format!(
                "unknown protocol {other:?}; expected minimax or adaptive"
            )))
        }
    };
    let grid: Result<Vec<f64>> = args
        .grid
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::ConfigError(format!("bad grid value {tok:?}: {e}")))
        })
        .collect();
    let grid = grid?;
    let mut cfg = build_config(&args.run, protocol)?;
    if protocol == Protocol::Minimax && cfg.budget.is_none() {
        cfg.budget = Some(grid[0]);
    }
    let rows = rate_curve(&cfg, &grid)?;
    let table = rate_table_to_csv(&rows);
    match &args.run.out {
        Some(path) => std::fs::write(path, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

fn codec_selftest() -> Result<()> {
    let mut round_trips = 0usize;
    let mut words: Vec<String> = Vec::new();
    for x in -4096i64..=4096 {
        let code = encode_g(x);
        let (y, used) = decode_g(&code)?;
        if y != x || used != code.len() {
            return Err(Error::MalformedCode(format!("round trip failed at {x}")));
        }
        let bound = 2.0 * ((x.unsigned_abs() as f64) + 1.0).log2() + 3.0;
        if code.len() as f64 > bound + 1e-9 {
            return Err(Error::OutOfRange(format!("length bound violated at {x}")));
        }
        words.push(code.to_ascii());
        round_trips += 1;
    }
    words.sort();
    let mut prefix_checks = 0usize;
    for pair in words.windows(2) {
        if pair[1].starts_with(&pair[0]) {
            return Err(Error::MalformedCode(format!(
                "{} is a prefix of {}",
                pair[0], pair[1]
            )));
        }
        prefix_checks += 1;
    }
    println!("codec selftest: {round_trips} round trips, {prefix_checks} prefix checks, length bound held");
    Ok(())
}

fn dwt_selftest() -> Result<()> {
    let mut checks = 0usize;
    for (name, f) in [
        ("f1", FunctionSpec::f1(10)),
        ("f2", FunctionSpec::f2(10)),
        ("f3", FunctionSpec::f3(10)),
    ] {
        let theta = dwt_forward(&f, Wavelet::Haar)?;
        let energy: f64 = f.samples.iter().map(|x| x * x).sum::<f64>() / f.samples.len() as f64;
        let coeff_energy = theta.sum_sq();
        if (energy - coeff_energy).abs() > 1e-9 * energy {
            return Err(Error::ShapeError(format!(
                "{name}: isometry violated ({energy} vs {coeff_energy})"
            )));
        }
        let back = dwt_inverse(&theta, Wavelet::Haar)?;
        let worst = f
            .samples
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if worst > 1e-9 * energy.sqrt() {
            return Err(Error::ShapeError(format!(
                "{name}: round trip off by {worst}"
            )));
        }
        checks += 1;
        println!("dwt selftest {name}: isometry {energy:.9} == {coeff_energy:.9}, round trip max err {worst:.2e}");
    }
    println!("dwt selftest: {checks} signals passed");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Minimax(args) => run_protocol(&args, Protocol::Minimax),
        Command::Adaptive(args) => run_protocol(&args, Protocol::Adaptive),
        Command::Rates(args) => run_rates(&args),
        Command::CodecSelftest => codec_selftest(),
        Command::DwtSelftest => dwt_selftest(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are successes; everything else is a
            // configuration problem
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::ConfigError(_) | Error::DomainError(_) | Error::Parse(_) | Error::Io(_) => 1,
                // decode failures and invariant violations are internal
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
