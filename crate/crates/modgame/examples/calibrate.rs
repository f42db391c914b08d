// Calibration sweep for the acceptance-suite parameters: rate-shape grid,
// saturated-budget ratios, the adaptive reference-signal study, and the
// adaptive cost envelope.
use modgame::besov::{rate_adaptive_cost, rate_minimax, BesovParams};
use modgame::harness::{log_log_slope, run_experiment, ExperimentConfig, Protocol, Signal};

fn base(m: usize, sigma: f64, radius: f64, alpha: f64) -> ExperimentConfig {
    ExperimentConfig {
        protocol: Protocol::Minimax,
        m,
        sigma,
        budget: None,
        besov: BesovParams::new(alpha, 2.0, 2.0, radius).unwrap(),
        lambda0: 1.0,
        lambda1: 12.0,
        lambda2: 20.0,
        j_total: 10,
        trials: 500,
        seed: 1234,
        signal: Signal::BoundaryBall { draw_seed: 42 },
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();

    if which.is_empty() || which == "slope" {
        // criterion 4: alpha = 1, radius/sigma = 16, m = 64, J = 10
        let sigma = 1.0;
        let mut cfg = base(64, sigma, 16.0, 1.0);
        let b_lo = 16f64.powf(2.0 / 3.0);
        let b_hi = b_lo * 64f64.powf(4.0 / 3.0);
        println!("refinement regime: [{b_lo:.2}, {b_hi:.2}]");
        let grid: Vec<f64> = (0..6)
            .map(|i| 27.5 * (1109.0f64 / 27.5).powf(i as f64 / 5.0))
            .collect();
        let mut pts = Vec::new();
        for &b in &grid {
            cfg.budget = Some(b);
            let r = run_experiment(&cfg).unwrap();
            let rate = rate_minimax(b, &cfg.besov, cfg.m, sigma).unwrap();
            println!(
                "B={b:8.1} mse={:9.4} (se {:.4}) bits={:9.1} rate={rate:8.4} mse/rate={:6.2}",
                r.mse_mean,
                r.mse_stderr,
                r.bits_mean,
                r.mse_mean / rate
            );
            pts.push((b, r.mse_mean));
        }
        println!(
            "fitted slope: {:.4} (want -0.5 +- 0.15)",
            log_log_slope(&pts)
        );

        // flattening beyond saturation
        let mut flat_pts = Vec::new();
        for &b in &[4.0 * b_hi, 8.0 * b_hi, 16.0 * b_hi] {
            cfg.budget = Some(b);
            let r = run_experiment(&cfg).unwrap();
            println!("B={b:9.1} mse={:9.4} bits={:9.1}", r.mse_mean, r.bits_mean);
            flat_pts.push((b, r.mse_mean));
        }
        println!(
            "flat slope: {:.4} (want |.| < 0.1)",
            log_log_slope(&flat_pts)
        );
    }

    if which.is_empty() || which == "ratio" {
        // criterion 5: saturated budget across m
        let sigma = 1.0;
        for &m in &[16usize, 64, 256] {
            let mut cfg = base(m, sigma, 16.0, 1.0);
            let b_sat = 16f64.powf(2.0 / 3.0) * (m as f64).powf(4.0 / 3.0);
            cfg.budget = Some(10.0 * b_sat);
            cfg.trials = 300;
            let r = run_experiment(&cfg).unwrap();
            let rate = rate_minimax(10.0 * b_sat, &cfg.besov, m, sigma).unwrap();
            println!(
                "m={m:4}: mse={:9.4} rate={rate:8.4} ratio={:6.2} bits={:9.1}",
                r.mse_mean,
                r.mse_mean / rate,
                r.bits_mean
            );
        }
    }

    if which.is_empty() || which == "figure2" {
        // criterion 6: adaptive on f1/f2/f3 at m = 100, sigma = 1/16
        for (lambda1, lambda2) in [
            (12.0, 20.0),
            (12.0, 30.0),
            (30.0, 20.0),
            (30.0, 30.0),
            (50.0, 20.0),
        ] {
            println!("--- lambda1={lambda1} lambda2={lambda2}");
            for (name, signal) in [("f1", Signal::F1), ("f2", Signal::F2), ("f3", Signal::F3)] {
                let cfg = ExperimentConfig {
                    protocol: Protocol::Adaptive,
                    m: 100,
                    sigma: 0.0625,
                    budget: None,
                    besov: BesovParams::new(1.0, 2.0, 2.0, 1.0).unwrap(),
                    lambda0: 4.0,
                    lambda1,
                    lambda2,
                    j_total: 10,
                    trials: 300,
                    seed: 7,
                    signal,
                };
                let r = run_experiment(&cfg).unwrap();
                let sigma2 = cfg.sigma * cfg.sigma;
                println!(
                    "{name}: EL={:8.1} (se {:5.1})  MSE={:.6e} = {:6.3} sigma^2 (se {:.3})  levels~{}",
                    r.bits_mean,
                    r.bits_stderr,
                    r.mse_mean,
                    r.mse_mean / sigma2,
                    r.mse_stderr / sigma2,
                    r.per_trial[0].jmax_or_levels,
                );
            }
        }
    }

    if which.is_empty() || which == "envelope" {
        // criterion 7: adaptive cost envelope across alpha and m
        for &alpha in &[0.5, 1.0, 2.0] {
            for &m in &[32usize, 100] {
                let cfg = ExperimentConfig {
                    protocol: Protocol::Adaptive,
                    m,
                    sigma: 1.0,
                    budget: None,
                    besov: BesovParams::new(alpha, 2.0, 2.0, 16.0).unwrap(),
                    lambda0: 4.0,
                    lambda1: 30.0,
                    lambda2: 30.0,
                    j_total: 10,
                    trials: 100,
                    seed: 31,
                    signal: Signal::RandomBall,
                };
                let r = run_experiment(&cfg).unwrap();
                let envelope = rate_adaptive_cost(&cfg.besov, m, cfg.sigma).unwrap();
                println!(
                    "alpha={alpha} m={m:4}: bits={:10.1} envelope={envelope:12.1} C={:.4}",
                    r.bits_mean,
                    r.bits_mean / envelope
                );
            }
        }
        // null-signal floor
        for &m in &[32usize, 100] {
            let cfg = ExperimentConfig {
                protocol: Protocol::Adaptive,
                m,
                sigma: 1.0,
                budget: None,
                besov: BesovParams::new(1.0, 2.0, 2.0, 0.0).unwrap(),
                lambda0: 4.0,
                lambda1: 30.0,
                lambda2: 30.0,
                j_total: 10,
                trials: 100,
                seed: 77,
                signal: Signal::RandomBall,
            };
            let r = run_experiment(&cfg).unwrap();
            let floor = modgame::adaptive::expected_null_cost(&cfg.adaptive_config(), 1);
            println!(
                "null m={m:4}: bits={:10.1} floor={floor:10.1} ratio={:.3}",
                r.bits_mean,
                r.bits_mean / floor
            );
        }
    }
}
