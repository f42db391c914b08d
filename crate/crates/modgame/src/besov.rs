//! Besov sequence-class parameters, the level-weighted seminorm, ball
//! membership, random generation of class members, and the closed-form
//! minimax / adaptive-cost rate oracles.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Smoothness-class parameters (alpha, p, q, radius). `p` and `q` may be
/// `f64::INFINITY`. The derived index `s = alpha + 1/2 - 1/p` must be
/// positive for the class to be well-formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub radius: f64,
}

impl BesovParams {
    pub fn new(alpha: f64, p: f64, q: f64, radius: f64) -> Result<Self> {
        let params = BesovParams {
            alpha,
            p,
            q,
            radius,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::DomainError(format!(
                "alpha = {} must be > 0",
                self.alpha
            )));
        }
        if !(self.p >= 1.0) {
            return Err(Error::DomainError(format!("p = {} must be >= 1", self.p)));
        }
        if !(self.q > 0.0) {
            return Err(Error::DomainError(format!("q = {} must be > 0", self.q)));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::DomainError(format!(
                "radius = {} must be >= 0",
                self.radius
            )));
        }
        if !(self.s() > 0.0) {
            return Err(Error::DomainError(format!(
                "s = alpha + 1/2 - 1/p = {} must be > 0",
                self.s()
            )));
        }
        Ok(())
    }

    /// s = alpha + 1/2 - 1/p (with 1/inf = 0).
    pub fn s(&self) -> f64 {
        let inv_p = if self.p.is_infinite() {
            0.0
        } else {
            1.0 / self.p
        };
        self.alpha + 0.5 - inv_p
    }
}

/// Dyadic coefficient array: level j holds `2^j` entries for j >= 1. Level 0
/// holds one entry for sequences built directly in coefficient space, or two
/// when the array carries a wavelet transform (the coarsest scaling
/// coefficient joins the level-0 detail as an augmented pair; see the
/// transform module). Entries above the stored depth are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSeq {
    levels: Vec<Vec<f64>>,
}

impl CoeffSeq {
    /// Zero sequence with levels 0..=j_total, one entry at level 0.
    pub fn zeros(j_total: usize) -> Self {
        Self::zeros_with_level0(j_total, 1)
    }

    /// Zero sequence whose level 0 holds `level0_len` entries (1 or 2).
    pub fn zeros_with_level0(j_total: usize, level0_len: usize) -> Self {
        assert!(level0_len == 1 || level0_len == 2);
        let levels = (0..=j_total)
            .map(|j| vec![0.0; if j == 0 { level0_len } else { 1 << j }])
            .collect();
        CoeffSeq { levels }
    }

    pub fn from_levels(levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::ShapeError("coefficient array has no levels".into()));
        }
        for (j, level) in levels.iter().enumerate() {
            let ok = if j == 0 {
                level.len() == 1 || level.len() == 2
            } else {
                level.len() == 1 << j
            };
            if !ok {
                return Err(Error::ShapeError(format!(
                    "level {j} has {} entries, expected {}",
                    level.len(),
                    if j == 0 {
                        "1 or 2".to_string()
                    } else {
                        (1usize << j).to_string()
                    }
                )));
            }
        }
        Ok(CoeffSeq { levels })
    }

    pub fn j_total(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.levels[j]
    }

    pub fn level_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.levels[j]
    }

    /// Number of entries stored at level j (0 above the stored depth).
    pub fn width(&self, j: usize) -> usize {
        self.levels.get(j).map_or(0, Vec::len)
    }

    /// Entry (j, k) with zero-based k; zero outside the stored array.
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.levels
            .get(j)
            .and_then(|l| l.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, j: usize, k: usize, value: f64) {
        self.levels[j][k] = value;
    }

    pub fn total_len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(j, level)| level.iter().enumerate().map(move |(k, &v)| (j, k, v)))
    }

    pub fn sum_sq(&self) -> f64 {
        self.iter().map(|(_, _, v)| v * v).sum()
    }

    /// Sum of squared differences over the union of both shapes (missing
    /// entries are zero).
    pub fn mse(&self, other: &CoeffSeq) -> f64 {
        let depth = self.j_total().max(other.j_total());
        let mut total = 0.0;
        for j in 0..=depth {
            let width = self.width(j).max(other.width(j));
            for k in 0..width {
                let d = self.get(j, k) - other.get(j, k);
                total += d * d;
            }
        }
        total
    }

    pub fn scale(&mut self, c: f64) {
        for level in &mut self.levels {
            for v in level {
                *v *= c;
            }
        }
    }

    /// Flat CSV layout: one row per level, entries in k order.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for level in &self.levels {
            let row: Vec<String> = level.iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut levels = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Result<Vec<f64>> = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad coefficient {tok:?}: {e}")))
                })
                .collect();
            levels.push(row?);
        }
        CoeffSeq::from_levels(levels)
    }
}

/// lp norm of a slice computed in scaled form so that very large finite
/// exponents behave like the sup norm instead of overflowing.
fn lp_norm(values: &[f64], p: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v.abs() / max).powf(p)).sum();
    max * sum.powf(1.0 / p)
}

/// The Besov sequence seminorm: the lq norm over levels of
/// `2^{j s} * lp-norm(level j)`.
pub fn seminorm(theta: &CoeffSeq, params: &BesovParams) -> f64 {
    let s = params.s();
    let terms: Vec<f64> = (0..=theta.j_total())
        .map(|j| 2f64.powf(j as f64 * s) * lp_norm(theta.level(j), params.p))
        .collect();
    lp_norm(&terms, params.q)
}

/// Membership in the ball of radius `params.radius`.
pub fn in_ball(theta: &CoeffSeq, params: &BesovParams) -> bool {
    seminorm(theta, params) <= params.radius
}

fn draw_gaussian_levels(params: &BesovParams, j_total: usize, seed: u64) -> CoeffSeq {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut theta = CoeffSeq::zeros(j_total);
    for j in 0..=j_total {
        // level-j scale ~ 2^{-j(alpha+1)} keeps every level active while the
        // seminorm stays O(radius)
        let sd = params.radius * 2f64.powf(-(j as f64) * (params.alpha + 1.0));
        for k in 0..theta.width(j) {
            let z: f64 = StandardNormal.sample(&mut rng);
            theta.set(j, k, sd * z);
        }
    }
    theta
}

/// Deterministic random member of the ball. The draw is rescaled into the
/// ball when it lands outside; rescaling preserves membership by homogeneity.
pub fn random_member(params: &BesovParams, j_total: usize, seed: u64) -> CoeffSeq {
    if params.radius == 0.0 {
        return CoeffSeq::zeros(j_total);
    }
    let mut theta = draw_gaussian_levels(params, j_total, seed);
    let norm = seminorm(&theta, params);
    if norm > params.radius {
        // one-ulp shrink so the rescaled norm cannot round above the radius
        theta.scale(params.radius / norm * (1.0 - 1e-12));
    }
    theta
}

/// Deterministic member scaled onto the ball boundary (seminorm = radius up
/// to rounding; a one-ulp shrink keeps `in_ball` true).
pub fn random_member_boundary(params: &BesovParams, j_total: usize, seed: u64) -> CoeffSeq {
    if params.radius == 0.0 {
        return CoeffSeq::zeros(j_total);
    }
    let mut theta = draw_gaussian_levels(params, j_total, seed);
    let norm = seminorm(&theta, params);
    if norm > 0.0 {
        theta.scale(params.radius / norm * (1.0 - 1e-12));
    }
    theta
}

/// Three-regime minimax risk for budget `b`, machine count `m`, and noise
/// `sigma`, without the unspecified multiplicative constant.
pub fn rate_minimax(b: f64, params: &BesovParams, m: usize, sigma: f64) -> Result<f64> {
    if !(b > 0.0) || !(sigma > 0.0) || m < 1 {
        return Err(Error::DomainError(format!(
            "rate_minimax needs b > 0, sigma > 0, m >= 1 (got b = {b}, sigma = {sigma}, m = {m})"
        )));
    }
    params.validate()?;
    let alpha = params.alpha;
    let radius = params.radius;
    let m = m as f64;
    let snr = radius / sigma;
    let b_localization = snr.powf(2.0 / (2.0 * alpha + 1.0));
    let b_saturation = b_localization * m.powf((2.0 * alpha + 2.0) / (2.0 * alpha + 1.0));
    let rate = if b < b_localization {
        radius.powi(2) * b.powf(-2.0 * alpha)
    } else if b < b_saturation {
        radius.powf(2.0 / (alpha + 1.0)) * (sigma * sigma / b).powf(alpha / (alpha + 1.0))
    } else {
        radius.powf(2.0 / (2.0 * alpha + 1.0))
            * (sigma * sigma / m).powf(2.0 * alpha / (2.0 * alpha + 1.0))
    };
    Ok(rate)
}

/// Adaptive-estimation communication envelope:
/// `m^3 + (radius/sigma)^{2/(2 alpha + 1)} m^{(2 alpha + 2)/(2 alpha + 1)}`.
pub fn rate_adaptive_cost(params: &BesovParams, m: usize, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || m < 1 {
        return Err(Error::DomainError(format!(
            "rate_adaptive_cost needs sigma > 0, m >= 1 (got sigma = {sigma}, m = {m})"
        )));
    }
    params.validate()?;
    let alpha = params.alpha;
    let m = m as f64;
    let snr = params.radius / sigma;
    Ok(m.powi(3)
        + snr.powf(2.0 / (2.0 * alpha + 1.0)) * m.powf((2.0 * alpha + 2.0) / (2.0 * alpha + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(alpha: f64, p: f64, q: f64, radius: f64) -> BesovParams {
        BesovParams::new(alpha, p, q, radius).unwrap()
    }

    #[test]
    fn seminorm_zero_sequence() {
        let theta = CoeffSeq::zeros(6);
        assert_eq!(seminorm(&theta, &params(1.0, 2.0, 2.0, 1.0)), 0.0);
    }

    #[test]
    fn seminorm_single_coarse_entry() {
        for &(alpha, p, q) in &[
            (0.5, 2.0, 2.0),
            (1.0, 4.0, 1.5),
            (2.0, f64::INFINITY, f64::INFINITY),
        ] {
            let mut theta = CoeffSeq::zeros(5);
            theta.set(0, 0, 0.37);
            let norm = seminorm(&theta, &params(alpha, p, q, 1.0));
            assert!((norm - 0.37).abs() < 1e-14, "norm = {norm}");
        }
    }

    #[test]
    fn seminorm_constant_level() {
        // level j constant t: lp norm = 2^{j/p} t, so the term is 2^{j(alpha+1/2)} t
        let alpha = 0.8;
        let p = 3.0;
        let q = 2.5;
        let j = 4;
        let t = 0.21;
        let mut theta = CoeffSeq::zeros(6);
        for k in 0..theta.width(j) {
            theta.set(j, k, t);
        }
        let expect = 2f64.powf(j as f64 * (alpha + 0.5)) * t;
        let norm = seminorm(&theta, &params(alpha, p, q, 1.0));
        assert!(
            (norm - expect).abs() < 1e-12 * expect,
            "norm = {norm}, expect = {expect}"
        );
    }

    #[test]
    fn in_ball_boundary() {
        let pr = params(1.0, 2.0, 2.0, 0.9);
        let mut theta = CoeffSeq::zeros(3);
        theta.set(0, 0, 0.9);
        assert!(in_ball(&theta, &pr));
        theta.set(0, 0, 0.9 * (1.0 + 1e-6));
        assert!(!in_ball(&theta, &pr));
        assert!(in_ball(&CoeffSeq::zeros(3), &pr));
    }

    // Sign-vector family used in the adaptation cost argument: u entries of
    // height lambda*sigma/sqrt(m) over levels 0..floor(log2 u)+1. The level
    // sums telescope into the closed-form bound
    //   lambda * (2^{q(alpha+1/2)} / (1 - 2^{-q(alpha+1/2)}))^{1/q} * u^{alpha+1/2} * sigma/sqrt(m),
    // and any radius at least that bound contains the vector.
    #[test]
    fn sign_vector_membership_chain() {
        let alpha = 1.0;
        let (p, q) = (2.0, 2.0);
        let m = 100.0f64;
        let sigma = 1.0;
        let lambda = 32.0; // max(10, 32 sqrt(C)) with C = 1
        let u: usize = 216;
        let height = lambda * sigma / m.sqrt();

        let j_total = 9;
        let mut theta = CoeffSeq::zeros(j_total);
        let mut placed = 0;
        'outer: for j in 0..=j_total {
            for k in 0..theta.width(j) {
                if placed == u {
                    break 'outer;
                }
                let sign = if placed % 2 == 0 { 1.0 } else { -1.0 };
                theta.set(j, k, sign * height);
                placed += 1;
            }
        }
        assert_eq!(placed, u);

        let a = q * (alpha + 0.5);
        let kappa = (2f64.powf(a) / (1.0 - 2f64.powf(-a))).powf(1.0 / q);
        let bound = lambda * kappa * (u as f64).powf(alpha + 0.5) * sigma / m.sqrt();

        let partial: f64 = {
            // middle link of the chain: sum over levels 0..floor(log2 u)+1 of
            // (2^{j(alpha+1/2)})^q times height^q, all levels fully occupied
            let jmax = (u as f64).log2().floor() as usize + 1;
            let sum: f64 = (0..=jmax)
                .map(|j| 2f64.powf(q * j as f64 * (alpha + 0.5)))
                .sum();
            sum.powf(1.0 / q) * height
        };

        let norm = seminorm(&theta, &params(alpha, p, q, bound));
        assert!(
            norm <= partial + 1e-9,
            "norm {norm} > partial bound {partial}"
        );
        assert!(
            partial <= bound + 1e-9,
            "partial {partial} > closed form {bound}"
        );
        assert!(in_ball(&theta, &params(alpha, p, q, bound)));
    }

    #[test]
    fn random_member_deterministic_and_in_ball() {
        let pr = params(0.7, 2.0, 2.0, 3.0);
        let a = random_member(&pr, 8, 42);
        let b = random_member(&pr, 8, 42);
        assert_eq!(a, b);
        let c = random_member(&pr, 8, 43);
        assert_ne!(a, c);
        for seed in 0..1000 {
            let theta = random_member(&pr, 6, seed);
            assert!(in_ball(&theta, &pr), "seed {seed} escaped the ball");
        }
    }

    #[test]
    fn random_member_zero_radius() {
        let pr = params(1.0, 2.0, 2.0, 0.0);
        assert_eq!(random_member(&pr, 5, 7), CoeffSeq::zeros(5));
    }

    #[test]
    fn boundary_member_sits_on_the_sphere() {
        let pr = params(1.2, 2.0, 2.0, 5.0);
        for seed in 0..50 {
            let theta = random_member_boundary(&pr, 7, seed);
            let norm = seminorm(&theta, &pr);
            assert!(in_ball(&theta, &pr));
            assert!((norm - pr.radius).abs() < 1e-9 * pr.radius, "norm = {norm}");
        }
    }

    #[test]
    fn rate_minimax_unit_radius_saturated() {
        // radius = sigma = 1 at saturated budget: (1/m)^{2 alpha/(2 alpha+1)}
        for &(alpha, m) in &[(0.5, 10usize), (1.0, 64), (2.0, 100)] {
            let pr = params(alpha, 2.0, 2.0, 1.0);
            let b = (m as f64).powf((2.0 * alpha + 2.0) / (2.0 * alpha + 1.0)) * 2.0;
            let rate = rate_minimax(b, &pr, m, 1.0).unwrap();
            let expect = (1.0 / m as f64).powf(2.0 * alpha / (2.0 * alpha + 1.0));
            assert!((rate - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn rate_minimax_continuous_at_regime_boundaries() {
        for &alpha in &[0.5, 1.0, 1.7, 3.0] {
            for &snr in &[2.0, 16.0, 100.0] {
                for &m in &[8usize, 64, 512] {
                    let pr = params(alpha, 2.0, 2.0, snr);
                    let sigma = 1.0;
                    let b1 = snr.powf(2.0 / (2.0 * alpha + 1.0));
                    let b2 = b1 * (m as f64).powf((2.0 * alpha + 2.0) / (2.0 * alpha + 1.0));
                    for &b in &[b1, b2] {
                        let left = rate_minimax(b * (1.0 - 1e-9), &pr, m, sigma).unwrap();
                        let right = rate_minimax(b * (1.0 + 1e-9), &pr, m, sigma).unwrap();
                        let ratio = left / right;
                        assert!(
                            (0.25..=4.0).contains(&ratio),
                            "alpha {alpha} snr {snr} m {m} boundary {b}: ratio {ratio}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn rate_minimax_refinement_slope() {
        // log-rate slope vs log B in the middle regime is -alpha/(alpha+1)
        let alpha = 0.9;
        let pr = params(alpha, 2.0, 2.0, 50.0);
        let m = 10_000;
        let b = 1e4;
        let h = 1e-6;
        let f = |b: f64| rate_minimax(b, &pr, m, 1.0).unwrap().ln();
        let slope = (f(b * (1.0 + h)) - f(b * (1.0 - h))) / ((1.0 + h) / (1.0 - h)).ln();
        let expect = -alpha / (alpha + 1.0);
        assert!((slope - expect).abs() < 1e-6, "slope {slope} vs {expect}");
    }

    #[test]
    fn rate_adaptive_cost_values() {
        // radius = sigma, m = 1: 1 + 1
        let pr = params(1.0, 2.0, 2.0, 1.0);
        assert!((rate_adaptive_cost(&pr, 1, 1.0).unwrap() - 2.0).abs() < 1e-12);

        // alpha -> infinity limit with radius = sigma: exponents 0 and 1
        let pr = params(1e9, 2.0, 2.0, 1.0);
        let m = 37;
        let expect = (m as f64).powi(3) + m as f64;
        let got = rate_adaptive_cost(&pr, m, 1.0).unwrap();
        assert!((got - expect).abs() < 1e-3 * expect);

        // m = 100, radius/sigma = 16, alpha = 1/2: 10^6 + 16 * 100^{3/2}
        let pr = params(0.5, 2.0, 2.0, 16.0);
        let got = rate_adaptive_cost(&pr, 100, 1.0).unwrap();
        assert!((got - 1_016_000.0).abs() < 1e-6 * got, "got {got}");
    }

    #[test]
    fn rate_domain_errors() {
        let pr = params(1.0, 2.0, 2.0, 1.0);
        assert!(rate_minimax(0.0, &pr, 10, 1.0).is_err());
        assert!(rate_minimax(10.0, &pr, 0, 1.0).is_err());
        assert!(rate_minimax(10.0, &pr, 10, 0.0).is_err());
        assert!(rate_adaptive_cost(&pr, 10, -1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let pr = params(1.0, 2.0, 2.0, 2.0);
        let theta = random_member(&pr, 5, 99);
        let back = CoeffSeq::from_csv(&theta.to_csv()).unwrap();
        assert_eq!(theta.j_total(), back.j_total());
        for (j, k, v) in theta.iter() {
            assert!((v - back.get(j, k)).abs() < 1e-12 * v.abs().max(1e-300));
        }
    }

    #[test]
    fn large_p_matches_sup() {
        let pr_large = params(1.0, 1e6, 2.0, 1.0);
        let pr_inf = params(1.0, f64::INFINITY, 2.0, 1.0);
        for seed in 0..20 {
            let theta = random_member(&params(1.0, 2.0, 2.0, 1.0), 6, seed);
            let a = seminorm(&theta, &pr_large);
            let b = seminorm(&theta, &pr_inf);
            assert!(
                (a - b).abs() <= 0.01 * b.max(1e-300),
                "p=1e6 {a} vs inf {b}"
            );
        }
    }

    proptest! {
        #[test]
        fn homogeneity(seed in 0u64..1000, c in -100.0f64..100.0) {
            let pr = params(0.9, 2.0, 2.0, 2.0);
            let mut theta = random_member(&pr, 5, seed);
            let before = seminorm(&theta, &pr);
            theta.scale(c);
            let after = seminorm(&theta, &pr);
            prop_assert!((after - c.abs() * before).abs() <= 1e-9 * (1.0 + after.abs()));
        }

        #[test]
        fn triangle_inequality(seed1 in 0u64..500, seed2 in 500u64..1000,
                               pq in prop_oneof![Just((1.0, 1.0)), Just((2.0, 2.0)), Just((3.0, 1.5)), Just((f64::INFINITY, 2.0))]) {
            let (p, q) = pq;
            let pr = params(0.8, p, q, 2.0);
            let a = random_member(&pr, 5, seed1);
            let b = random_member(&pr, 5, seed2);
            let mut sum = a.clone();
            for j in 0..=sum.j_total() {
                for k in 0..sum.width(j) {
                    let v = sum.get(j, k) + b.get(j, k);
                    sum.set(j, k, v);
                }
            }
            let lhs = seminorm(&sum, &pr);
            let rhs = seminorm(&a, &pr) + seminorm(&b, &pr);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
        }

        #[test]
        fn monotone_in_radius(seed in 0u64..1000, m1 in 0.1f64..10.0, extra in 0.0f64..10.0) {
            let pr1 = params(1.0, 2.0, 2.0, m1);
            let pr2 = params(1.0, 2.0, 2.0, m1 + extra);
            let theta = random_member(&pr1, 5, seed);
            prop_assert!(in_ball(&theta, &pr1));
            prop_assert!(in_ball(&theta, &pr2));
        }

        #[test]
        fn rate_minimax_nonincreasing(alpha in 0.3f64..3.0, b in 1.0f64..1e6, m in 1usize..1000) {
            let pr = params(alpha, 2.0, 2.0, 8.0);
            let r1 = rate_minimax(b, &pr, m, 1.0).unwrap();
            let r2 = rate_minimax(b * 2.0, &pr, m, 1.0).unwrap();
            let r3 = rate_minimax(b, &pr, m * 2, 1.0).unwrap();
            prop_assert!(r2 <= r1 * (1.0 + 1e-12));
            prop_assert!(r3 <= r1 * (1.0 + 1e-12));
        }
    }
}
