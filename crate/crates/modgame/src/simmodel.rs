//! Distributed observation sampling for the Gaussian sequence model, and the
//! sampled-function <-> coefficient bridge via an orthonormal periodic
//! discrete wavelet transform.
//!
//! Coefficients are calibrated so that `sum(samples^2) * dt == sum(coeffs^2)`
//! (dt = 1/n): squared error in coefficient space equals integrated squared
//! error of the reconstructed functions.

use crate::besov::CoeffSeq;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One machine's noisy view of the coefficient array.
#[derive(Debug, Clone)]
pub struct Observation {
    pub machine_id: usize,
    pub data: CoeffSeq,
}

/// Stable mix of a root seed and a stream index (SplitMix64 finalizer), used
/// to key per-trial substreams so results do not depend on scheduling.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-machine noise stream keyed on (seed, machine_id): machine i's data
/// never depends on how many other machines are generated or in what order.
pub fn observation_for_machine(
    theta: &CoeffSeq,
    sigma: f64,
    machine_id: usize,
    seed: u64,
) -> Observation {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(machine_id as u64);
    let mut data = theta.clone();
    for j in 0..=data.j_total() {
        for k in 0..data.width(j) {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = data.get(j, k) + sigma * z;
            data.set(j, k, v);
        }
    }
    Observation { machine_id, data }
}

/// Observations for machines 1..=m under `X = theta + sigma z`.
pub fn sample_observations(theta: &CoeffSeq, sigma: f64, m: usize, seed: u64) -> Vec<Observation> {
    (1..=m)
        .map(|i| observation_for_machine(theta, sigma, i, seed))
        .collect()
}

/// Wavelet family selector. Haar is exactly orthonormal and boundary-free
/// under periodization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Wavelet {
    #[default]
    Haar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalId {
    F1,
    F2,
    F3,
    Custom,
}

/// A function sampled on the midpoint grid t_i = (i + 1/2)/n of [0, 1].
#[derive(Debug, Clone)]
pub struct FunctionSpec {
    pub id: SignalId,
    pub samples: Vec<f64>,
}

fn sample_on_grid(id: SignalId, j_total: usize, f: impl Fn(f64) -> f64) -> FunctionSpec {
    let n = 1usize << (j_total + 1);
    let samples = (0..n).map(|i| f((i as f64 + 0.5) / n as f64)).collect();
    FunctionSpec { id, samples }
}

impl FunctionSpec {
    /// 1.5 sin(4 pi t) — the smoothest of the test signals.
    pub fn f1(j_total: usize) -> Self {
        sample_on_grid(SignalId::F1, j_total, |t| 1.5 * (4.0 * PI * t).sin())
    }

    /// sin(4 pi t) + 0.7 cos(18 pi t).
    pub fn f2(j_total: usize) -> Self {
        sample_on_grid(SignalId::F2, j_total, |t| {
            (4.0 * PI * t).sin() + 0.7 * (18.0 * PI * t).cos()
        })
    }

    /// 0.8 sin(4 pi t) + 0.5 cos(18 pi t) + 0.5 cos(44 pi t) — the most wiggly.
    pub fn f3(j_total: usize) -> Self {
        sample_on_grid(SignalId::F3, j_total, |t| {
            0.8 * (4.0 * PI * t).sin() + 0.5 * (18.0 * PI * t).cos() + 0.5 * (44.0 * PI * t).cos()
        })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || !samples.len().is_power_of_two() {
            return Err(Error::ShapeError(format!(
                "sample count {} is not a positive power of two",
                samples.len()
            )));
        }
        Ok(FunctionSpec {
            id: SignalId::Custom,
            samples,
        })
    }
}

/// Forward transform of 2^{J+1} samples into levels 0..=J. The single
/// coarsest scaling coefficient is stored next to the level-0 detail, so
/// level 0 carries two entries and every other level j carries 2^j.
pub fn dwt_forward(f: &FunctionSpec, wavelet: Wavelet) -> Result<CoeffSeq> {
    let Wavelet::Haar = wavelet;
    let n = f.samples.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::ShapeError(format!(
            "sample count {n} is not a power of two >= 2"
        )));
    }
    let j_total = n.trailing_zeros() as usize - 1;
    let root_n = (n as f64).sqrt();
    let mut work: Vec<f64> = f.samples.iter().map(|x| x / root_n).collect();
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); j_total + 1];
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        let mut approx = Vec::with_capacity(half);
        let mut detail = Vec::with_capacity(half);
        for t in 0..half {
            let a = work[2 * t];
            let b = work[2 * t + 1];
            approx.push((a + b) / sqrt2);
            detail.push((a - b) / sqrt2);
        }
        let j = half.trailing_zeros() as usize; // 2^j details at this pass
        levels[j] = detail;
        work.truncate(half);
        work.copy_from_slice(&approx);
        len = half;
    }
    // augmented coarse level: [scaling, level-0 detail]
    let detail0 = levels[0][0];
    levels[0] = vec![work[0], detail0];
    CoeffSeq::from_levels(levels)
}

/// Exact inverse of `dwt_forward` on its range. Accepts a one-entry level 0
/// (scaling only) by treating the missing detail as zero.
pub fn dwt_inverse(theta: &CoeffSeq, wavelet: Wavelet) -> Result<Vec<f64>> {
    let Wavelet::Haar = wavelet;
    let j_total = theta.j_total();
    for j in 1..=j_total {
        if theta.width(j) != 1 << j {
            return Err(Error::ShapeError(format!(
                "level {j} has {} entries, expected {}",
                theta.width(j),
                1 << j
            )));
        }
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let scaling = theta.get(0, 0);
    let mut work = vec![scaling];
    for j in 0..=j_total {
        let mut next = Vec::with_capacity(work.len() * 2);
        for (t, &a) in work.iter().enumerate() {
            let d = if j == 0 {
                theta.get(0, 1)
            } else {
                theta.get(j, t)
            };
            next.push((a + d) / sqrt2);
            next.push((a - d) / sqrt2);
        }
        work = next;
    }
    let root_n = (work.len() as f64).sqrt();
    for v in &mut work {
        *v *= root_n;
    }
    Ok(work)
}
