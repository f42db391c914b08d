//! The budget-driven minimax protocol: planning (case split, precision, and
//! active-machine count), per-machine transcript generation, central
//! estimation, and exact bit accounting.

use crate::besov::{BesovParams, CoeffSeq};
use crate::bitcodec::{decode_fixed3_from, decode_g, encode_fixed3, encode_g, BitString};
use crate::decoder::{decode_coord_ml_bounded, role_split, window_width, CoordTranscripts};
use crate::error::{Error, Result};
use crate::simmodel::{derive_seed, observation_for_machine};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanCase {
    /// A single machine quantizes with step `delta`.
    Quantize,
    /// Crude / finer / refinement roles across `u` machines at step `sigma`.
    ThreeStage,
}

/// Resolved protocol parameters for one budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub case: PlanCase,
    /// Quantization step in signal units.
    pub delta: f64,
    /// Number of talking machines.
    pub u: usize,
    /// Maximal resolution level; -1 when even level 0 is too fine for the
    /// budget and the estimator is identically zero.
    pub j_max: i32,
    pub sigma: f64,
    /// The parameter class the plan was built for.
    pub class: BesovParams,
}

impl Plan {
    /// Largest coordinate magnitude (in noise units) the class permits at
    /// level j; the estimator never needs to search beyond it.
    pub fn coord_bound(&self, j: usize) -> f64 {
        self.class.radius / self.sigma * 2f64.powf(-(j as f64) * self.class.s())
    }

    /// Levels the protocol touches, clipped to a data depth.
    pub fn active_levels(&self, j_total: usize) -> Option<std::ops::RangeInclusive<usize>> {
        if self.j_max < 0 {
            None
        } else {
            Some(0..=(self.j_max as usize).min(j_total))
        }
    }

    pub fn window(&self) -> u32 {
        window_width(self.u)
    }

    /// (finer, refinement) head-counts for the three-stage case.
    pub fn roles(&self) -> (usize, usize) {
        role_split(self.u)
    }
}

/// Tuning constant floor from the budget analysis; plans built with at least
/// this value keep the expected transcript length within the budget.
pub fn lambda0_strict(alpha: f64) -> f64 {
    (24.0 * alpha + 64.0).powf(alpha + 0.5)
}

/// Largest j with `radius * 2^{-j(alpha+1/2)} >= delta`, or -1 if none. The
/// comparison carries a one-ulp tolerance so that exact ties (which occur at
/// power-of-two parameter combinations) resolve toward inclusion on every
/// platform.
fn max_level(radius: f64, alpha: f64, delta: f64) -> i32 {
    if delta > radius {
        return -1;
    }
    let mut j = 0i32;
    while radius * 2f64.powf(-((j + 1) as f64) * (alpha + 0.5)) >= delta * (1.0 - 1e-12) && j < 200
    {
        j += 1;
    }
    j
}

/// Splits the budget into the quantize / three-stage case and derives the
/// precision `delta`, active-machine count `u`, and maximal level.
pub fn plan(b: f64, params: &BesovParams, sigma: f64, m: usize, lambda0: f64) -> Result<Plan> {
    if !(b > 0.0) || !(sigma > 0.0) || m < 1 || !(lambda0 > 0.0) {
        return Err(Error::DomainError(format!(
            "plan needs b > 0, sigma > 0, m >= 1, lambda0 > 0 (got b = {b}, sigma = {sigma}, m = {m}, lambda0 = {lambda0})"
        )));
    }
    params.validate()?;
    let alpha = params.alpha;
    let radius = params.radius;
    let threshold = (lambda0 * radius / sigma).powf(2.0 / (2.0 * alpha + 1.0));
    let (case, delta, u) = if b < threshold {
        (
            PlanCase::Quantize,
            lambda0 * radius * b.powf(-(alpha + 0.5)),
            1,
        )
    } else {
        let u_real = (lambda0 * radius / sigma).powf(-1.0 / (alpha + 1.0))
            * b.powf((2.0 * alpha + 1.0) / (2.0 * alpha + 2.0));
        let u = (u_real.floor() as usize).clamp(1, m);
        if u == 1 {
            // a single talking machine degenerates to quantization at the
            // noise scale
            (PlanCase::Quantize, sigma, 1)
        } else {
            (PlanCase::ThreeStage, sigma / (u as f64).sqrt(), u)
        }
    };
    Ok(Plan {
        case,
        delta,
        u,
        j_max: max_level(radius, alpha, delta),
        sigma,
        class: *params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Crude,
    Finer,
    Refinement,
    Silent,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::Crude => "crude",
            Role::Finer => "finer",
            Role::Refinement => "refinement",
            Role::Silent => "silent",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crude" => Ok(Role::Crude),
            "finer" => Ok(Role::Finer),
            "refinement" => Ok(Role::Refinement),
            "silent" => Ok(Role::Silent),
            other => Err(Error::Parse(format!("unknown role {other:?}"))),
        }
    }
}

/// One machine's transcript: per-coordinate words for every level up to the
/// plan's maximal level, plus the exact bit count.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub machine_id: usize,
    pub role: Role,
    /// words[j][k] for j <= j_max; empty for silent machines.
    pub words: Vec<Vec<BitString>>,
    pub total_bits: usize,
}

impl Transcript {
    fn silent(machine_id: usize) -> Self {
        Transcript {
            machine_id,
            role: Role::Silent,
            words: Vec::new(),
            total_bits: 0,
        }
    }

    fn from_words(machine_id: usize, role: Role, words: Vec<Vec<BitString>>) -> Self {
        let total_bits = words.iter().flatten().map(BitString::len).sum();
        Transcript {
            machine_id,
            role,
            words,
            total_bits,
        }
    }

    fn j_max(&self) -> i32 {
        self.words.len() as i32 - 1
    }
}

/// Role of machine `i` (1-based) under the plan. An empty plan (no level
/// clears the precision) silences everyone.
pub fn machine_role(plan: &Plan, i: usize) -> Role {
    if i > plan.u || plan.j_max < 0 {
        return Role::Silent;
    }
    match plan.case {
        PlanCase::Quantize => {
            if i == 1 {
                Role::Crude
            } else {
                Role::Silent
            }
        }
        PlanCase::ThreeStage => {
            let (finer, _) = plan.roles();
            if i == 1 {
                Role::Crude
            } else if i <= 1 + finer {
                Role::Finer
            } else {
                Role::Refinement
            }
        }
    }
}

/// Encodes machine `i`'s data into its transcript.
pub fn encode_machine(plan: &Plan, i: usize, data: &CoeffSeq) -> Transcript {
    let role = machine_role(plan, i);
    let levels = match plan.active_levels(data.j_total()) {
        Some(levels) if role != Role::Silent => levels,
        _ => return Transcript::silent(i),
    };
    let w = plan.window() as i64;
    let words: Vec<Vec<BitString>> = levels
        .map(|j| {
            (0..data.width(j))
                .map(|k| {
                    let x = data.get(j, k);
                    match role {
                        Role::Crude => {
                            let step = match plan.case {
                                PlanCase::Quantize => plan.delta,
                                PlanCase::ThreeStage => plan.sigma,
                            };
                            encode_g((x / step).floor() as i64)
                        }
                        Role::Finer => {
                            let q = (x / plan.sigma).floor() as i64;
                            encode_g(q.rem_euclid(w))
                        }
                        Role::Refinement => {
                            let q = (x / plan.sigma).floor() as i64;
                            encode_fixed3(q.rem_euclid(8) as u8).expect("residue in range")
                        }
                        Role::Silent => unreachable!(),
                    }
                })
                .collect()
        })
        .collect();
    Transcript::from_words(i, role, words)
}

fn word(t: &Transcript, j: usize, k: usize) -> Result<&BitString> {
    t.words
        .get(j)
        .and_then(|level| level.get(k))
        .ok_or_else(|| {
            Error::RoleMismatch(format!(
                "machine {} transcript missing word ({j},{k})",
                t.machine_id
            ))
        })
}

/// Rebuilds the estimate from the transcripts. Levels above the plan's
/// maximal level (up to `j_total`) are zero.
pub fn estimate(plan: &Plan, transcripts: &[Transcript], j_total: usize) -> Result<CoeffSeq> {
    for t in transcripts {
        let expected = machine_role(plan, t.machine_id);
        if t.role != expected {
            return Err(Error::RoleMismatch(format!(
                "machine {} has role {} but the plan assigns {}",
                t.machine_id, t.role, expected
            )));
        }
    }
    let levels = match plan.active_levels(j_total) {
        None => return Ok(CoeffSeq::zeros(j_total)),
        Some(levels) => levels,
    };
    let crude = transcripts
        .iter()
        .find(|t| t.role == Role::Crude)
        .ok_or_else(|| Error::RoleMismatch("no crude transcript".into()))?;
    let level0_len = crude.words.first().map_or(1, Vec::len);
    let mut theta = CoeffSeq::zeros_with_level0(j_total, level0_len);

    match plan.case {
        PlanCase::Quantize => {
            for j in levels {
                for k in 0..theta.width(j) {
                    let (x, _) = decode_g(word(crude, j, k)?)?;
                    theta.set(j, k, x as f64 * plan.delta);
                }
            }
        }
        PlanCase::ThreeStage => {
            let w = plan.window();
            let finer: Vec<&Transcript> = transcripts
                .iter()
                .filter(|t| t.role == Role::Finer)
                .collect();
            let refinement: Vec<&Transcript> = transcripts
                .iter()
                .filter(|t| t.role == Role::Refinement)
                .collect();
            let (want_finer, want_refinement) = plan.roles();
            if finer.len() != want_finer || refinement.len() != want_refinement {
                return Err(Error::RoleMismatch(format!(
                    "expected {want_finer} finer and {want_refinement} refinement transcripts, got {} and {}",
                    finer.len(),
                    refinement.len()
                )));
            }
            for j in levels {
                for k in 0..theta.width(j) {
                    let (crude_int, _) = decode_g(word(crude, j, k)?)?;
                    let mut ct = CoordTranscripts {
                        crude: crude_int,
                        finer: Vec::with_capacity(finer.len()),
                        refinement: Vec::with_capacity(refinement.len()),
                    };
                    for t in &finer {
                        let (r, _) = decode_g(word(t, j, k)?)?;
                        if r < 0 || r >= w as i64 {
                            return Err(Error::MalformedCode(format!(
                                "finer residue {r} outside [0, {w})"
                            )));
                        }
                        ct.finer.push(r as u32);
                    }
                    for t in &refinement {
                        ct.refinement
                            .push(decode_fixed3_from(&mut word(t, j, k)?.reader())?);
                    }
                    theta.set(
                        j,
                        k,
                        decode_coord_ml_bounded(&ct, w, plan.sigma, plan.coord_bound(j))?,
                    );
                }
            }
        }
    }
    Ok(theta)
}

/// Exact total communication cost of a transcript set, in bits.
pub fn total_cost(transcripts: &[Transcript]) -> usize {
    transcripts.iter().map(|t| t.total_bits).sum()
}

/// Runs the protocol `trials` times on a fixed signal and reports the
/// empirical frequency of the total cost reaching `2b`.
pub fn check_budget(plan: &Plan, theta: &CoeffSeq, b: f64, trials: usize, seed: u64) -> f64 {
    let mut exceed = 0usize;
    for trial in 0..trials {
        let trial_seed = derive_seed(seed, trial as u64);
        let bits: usize = (1..=plan.u)
            .map(|i| {
                let obs = observation_for_machine(theta, plan.sigma, i, trial_seed);
                encode_machine(plan, i, &obs.data).total_bits
            })
            .sum();
        if bits as f64 >= 2.0 * b {
            exceed += 1;
        }
    }
    exceed as f64 / trials as f64
}

/// Framed text form: a literal `machine,role,jmax` header, one values line,
/// then one ASCII word per line in (level, position) order.
pub fn transcript_to_text(t: &Transcript) -> String {
    let mut out = String::from("machine,role,jmax\n");
    out.push_str(&format!("{},{},{}\n", t.machine_id, t.role, t.j_max()));
    for level in &t.words {
        for word in level {
            out.push_str(&word.to_ascii());
            out.push('\n');
        }
    }
    out
}

pub fn transcripts_to_text(transcripts: &[Transcript]) -> String {
    transcripts.iter().map(transcript_to_text).collect()
}

/// Parses one or more framed transcripts.
pub fn transcripts_from_text(text: &str) -> Result<Vec<Transcript>> {
    let mut lines = text.lines().peekable();
    let mut out = Vec::new();
    while let Some(header) = lines.next() {
        let header = header.trim();
        if header.is_empty() {
            continue;
        }
        if header != "machine,role,jmax" {
            return Err(Error::Parse(format!(
                "expected transcript header, found {header:?}"
            )));
        }
        let values = lines
            .next()
            .ok_or_else(|| Error::Parse("missing transcript values line".into()))?;
        let fields: Vec<&str> = values.trim().split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "bad transcript values line {values:?}"
            )));
        }
        let machine_id: usize = fields[0]
            .parse()
            .map_err(|e| Error::Parse(format!("bad machine id {:?}: {e}", fields[0])))?;
        let role: Role = fields[1].parse()?;
        let j_max: i32 = fields[2]
            .parse()
            .map_err(|e| Error::Parse(format!("bad jmax {:?}: {e}", fields[2])))?;
        let mut words = Vec::new();
        if j_max >= 0 {
            // levels 1.. have 2^j words; level 0 is sized by what remains
            let mut flat = Vec::new();
            let expected_min: usize = 1 + (1..=j_max as usize).map(|j| 1usize << j).sum::<usize>();
            while flat.len() < expected_min + 1 {
                match lines.peek() {
                    Some(line) if !line.trim().is_empty() && line.trim() != "machine,role,jmax" => {
                        flat.push(BitString::from_ascii(lines.next().unwrap().trim())?);
                    }
                    _ => break,
                }
            }
            let tail: usize = (1..=j_max as usize).map(|j| 1usize << j).sum();
            let level0_len = flat.len().checked_sub(tail).filter(|&l| l == 1 || l == 2);
            let level0_len = level0_len.ok_or_else(|| {
                Error::Parse(format!(
                    "machine {machine_id}: {} words do not fit levels 0..={j_max}",
                    flat.len()
                ))
            })?;
            let mut iter = flat.into_iter();
            for j in 0..=j_max as usize {
                let width = if j == 0 { level0_len } else { 1 << j };
                words.push(iter.by_ref().take(width).collect());
            }
        }
        out.push(Transcript::from_words(machine_id, role, words));
    }
    Ok(out)
}
