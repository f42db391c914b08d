//! The adaptive local-thresholding protocol: per-machine significant-level
//! selection by an energy test, role-based transcripts, majority aggregation
//! of the selected level sets, shared three-stage decoding per level, and a
//! final energy threshold on the always-transmitted levels.

use crate::besov::CoeffSeq;
use crate::bitcodec::{decode_fixed3_from, decode_g, encode_fixed3, encode_g, BitString};
use crate::decoder::{decode_coord_ml, role_split, window_width, CoordTranscripts};
use crate::error::{Error, Result};
use crate::minimax::Role;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub m: usize,
    pub sigma: f64,
    /// Energy-test margin: level j is significant when the coordinate sum of
    /// squares reaches `n_j sigma^2 (1 + lambda1/m)`.
    pub lambda1: f64,
    /// Final keep/zero threshold `lambda2 n_j sigma^2 / m` on the always
    /// transmitted levels.
    pub lambda2: f64,
    pub j_total: usize,
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::DomainError(format!("m = {} must be >= 2", self.m)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::DomainError(format!(
                "sigma = {} must be > 0",
                self.sigma
            )));
        }
        if !(self.lambda1 > 10.0) {
            return Err(Error::DomainError(format!(
                "lambda1 = {} must be > 10",
                self.lambda1
            )));
        }
        if !(self.lambda2 >= 0.0) {
            return Err(Error::DomainError(format!(
                "lambda2 = {} must be >= 0",
                self.lambda2
            )));
        }
        if self.j_total >= 64 {
            return Err(Error::DomainError(format!(
                "j_total = {} exceeds the level-set capacity",
                self.j_total
            )));
        }
        Ok(())
    }

    /// Levels 0..=prefix are always transmitted. The published rule takes
    /// 2 log m with a decimal log; the binary reading would make every level
    /// of a desk-scale run mandatory and inflate the cost by two orders of
    /// magnitude relative to the reference simulation.
    pub fn mandatory_prefix(&self) -> usize {
        (2.0 * (self.m as f64).log10()).floor() as usize
    }

    pub fn window(&self) -> u32 {
        window_width(self.m)
    }

    /// (finer, refinement) head-counts over the full machine pool.
    pub fn roles(&self) -> (usize, usize) {
        role_split(self.m)
    }

    /// Bits spent per machine announcing which optional levels it selected.
    pub fn side_channel_bits(&self) -> usize {
        self.j_total.saturating_sub(self.mandatory_prefix())
    }
}

/// Set of resolution levels, stored as a bitmask (levels 0..=63).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LevelSet(u64);

impl LevelSet {
    pub fn new() -> Self {
        LevelSet(0)
    }

    pub fn insert(&mut self, j: usize) {
        debug_assert!(j < 64);
        self.0 |= 1 << j;
    }

    pub fn contains(&self, j: usize) -> bool {
        j < 64 && self.0 >> j & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(move |&j| self.contains(j))
    }

    /// '0'/'1' map over levels 0..=j_total.
    pub fn to_bitmap(&self, j_total: usize) -> String {
        (0..=j_total)
            .map(|j| if self.contains(j) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bitmap(s: &str) -> Result<Self> {
        let mut set = LevelSet::new();
        for (j, c) in s.chars().enumerate() {
            match c {
                '1' => set.insert(j),
                '0' => {}
                _ => return Err(Error::Parse(format!("invalid bitmap character {c:?}"))),
            }
        }
        Ok(set)
    }
}

/// The per-level energy test against `n_j sigma^2 (1 + lambda1/m)`.
pub fn level_is_significant(sum_sq: f64, n_j: usize, sigma: f64, lambda1: f64, m: usize) -> bool {
    sum_sq >= n_j as f64 * sigma * sigma * (1.0 + lambda1 / m as f64)
}

/// Levels machine `i` transmits: the mandatory prefix plus every higher
/// level that passes the energy test.
pub fn significant_levels(data: &CoeffSeq, cfg: &AdaptiveConfig) -> LevelSet {
    let mut set = LevelSet::new();
    let prefix = cfg.mandatory_prefix().min(cfg.j_total);
    for j in 0..=prefix.min(data.j_total()) {
        set.insert(j);
    }
    for j in (prefix + 1)..=cfg.j_total.min(data.j_total()) {
        let sum_sq: f64 = data.level(j).iter().map(|v| v * v).sum();
        if level_is_significant(sum_sq, data.width(j), cfg.sigma, cfg.lambda1, cfg.m) {
            set.insert(j);
        }
    }
    set
}

/// One machine's adaptive transcript: words for each selected level plus the
/// level-selection side channel, all charged to `total_bits`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveTranscript {
    pub machine_id: usize,
    pub role: Role,
    pub levels: LevelSet,
    pub words: BTreeMap<usize, Vec<BitString>>,
    pub total_bits: usize,
}

/// Role of machine `i` (1-based): one crude machine, then the finer pool,
/// then refinement.
pub fn machine_role_adaptive(cfg: &AdaptiveConfig, i: usize) -> Role {
    let (finer, _) = cfg.roles();
    if i == 1 {
        Role::Crude
    } else if i <= 1 + finer {
        Role::Finer
    } else {
        Role::Refinement
    }
}

pub fn encode_machine_adaptive(
    i: usize,
    data: &CoeffSeq,
    cfg: &AdaptiveConfig,
) -> AdaptiveTranscript {
    let role = machine_role_adaptive(cfg, i);
    let levels = significant_levels(data, cfg);
    let w = cfg.window() as i64;
    let mut words = BTreeMap::new();
    let mut total_bits = cfg.side_channel_bits();
    for j in levels.iter() {
        let level_words: Vec<BitString> = (0..data.width(j))
            .map(|k| {
                let q = (data.get(j, k) / cfg.sigma).floor() as i64;
                match role {
                    Role::Crude => encode_g(q),
                    Role::Finer => encode_g(q.rem_euclid(w)),
                    Role::Refinement => {
                        encode_fixed3(q.rem_euclid(8) as u8).expect("residue in range")
                    }
                    Role::Silent => unreachable!("every machine talks"),
                }
            })
            .collect();
        total_bits += level_words.iter().map(BitString::len).sum::<usize>();
        words.insert(j, level_words);
    }
    AdaptiveTranscript {
        machine_id: i,
        role,
        levels,
        words,
        total_bits,
    }
}

/// Majority aggregation: a level is kept when machine 1 selected it and at
/// least half of the finer pool and half of the refinement pool did too
/// (inclusive comparisons against the possibly fractional half-counts).
pub fn aggregate_jhat(j_sets: &[LevelSet], m: usize) -> LevelSet {
    assert_eq!(j_sets.len(), m, "need one level set per machine");
    let (finer, refinement) = role_split(m);
    let mut jhat = LevelSet::new();
    for j in 0..64 {
        if !j_sets[0].contains(j) {
            continue;
        }
        let finer_votes = (2..=1 + finer)
            .filter(|&i| j_sets[i - 1].contains(j))
            .count();
        let refinement_votes = (2 + finer..=m)
            .filter(|&i| j_sets[i - 1].contains(j))
            .count();
        if finer_votes as f64 >= finer as f64 / 2.0
            && refinement_votes as f64 >= refinement as f64 / 2.0
        {
            jhat.insert(j);
        }
    }
    jhat
}

fn level_word(t: &AdaptiveTranscript, j: usize, k: usize) -> Result<&BitString> {
    t.words
        .get(&j)
        .and_then(|level| level.get(k))
        .ok_or_else(|| {
            Error::RoleMismatch(format!(
                "machine {} transcript missing word ({j},{k})",
                t.machine_id
            ))
        })
}

/// Decodes one level with the shared three-stage decoder over the
/// participating machine set.
fn decode_level(
    transcripts: &[AdaptiveTranscript],
    participants: &[usize],
    j: usize,
    width: usize,
    cfg: &AdaptiveConfig,
) -> Result<Vec<f64>> {
    let (finer_count, _) = cfg.roles();
    let w = cfg.window();
    let finer: Vec<usize> = participants
        .iter()
        .copied()
        .filter(|&i| (2..=1 + finer_count).contains(&i))
        .collect();
    let refinement: Vec<usize> = participants
        .iter()
        .copied()
        .filter(|&i| i >= 2 + finer_count)
        .collect();
    if refinement.is_empty() {
        return Err(Error::EmptyTranscript(format!(
            "no refinement machines selected level {j}"
        )));
    }
    if w >= 2 && finer.is_empty() {
        return Err(Error::EmptyTranscript(format!(
            "no finer-localization machines selected level {j}"
        )));
    }
    let mut values = Vec::with_capacity(width);
    for k in 0..width {
        let (crude, _) = decode_g(level_word(&transcripts[0], j, k)?)?;
        let mut ct = CoordTranscripts {
            crude,
            finer: Vec::with_capacity(finer.len()),
            refinement: Vec::with_capacity(refinement.len()),
        };
        for &i in &finer {
            let (r, _) = decode_g(level_word(&transcripts[i - 1], j, k)?)?;
            if r < 0 || r >= w as i64 {
                return Err(Error::MalformedCode(format!(
                    "finer residue {r} outside [0, {w})"
                )));
            }
            ct.finer.push(r as u32);
        }
        for &i in &refinement {
            ct.refinement.push(decode_fixed3_from(
                &mut level_word(&transcripts[i - 1], j, k)?.reader(),
            )?);
        }
        values.push(decode_coord_ml(&ct, w, cfg.sigma)?);
    }
    Ok(values)
}

/// Central estimation: aggregate the level sets, decode each kept level with
/// the machines that selected it, and apply the final energy threshold to
/// the mandatory prefix. Every level outside the aggregated set is exactly
/// zero.
pub fn estimate_adaptive(
    transcripts: &[AdaptiveTranscript],
    cfg: &AdaptiveConfig,
) -> Result<CoeffSeq> {
    cfg.validate()?;
    if transcripts.len() != cfg.m {
        return Err(Error::RoleMismatch(format!(
            "expected {} transcripts, got {}",
            cfg.m,
            transcripts.len()
        )));
    }
    for (idx, t) in transcripts.iter().enumerate() {
        if t.machine_id != idx + 1 {
            return Err(Error::RoleMismatch(format!(
                "transcript {idx} has machine id {}, expected {}",
                t.machine_id,
                idx + 1
            )));
        }
        let expected = machine_role_adaptive(cfg, t.machine_id);
        if t.role != expected {
            return Err(Error::RoleMismatch(format!(
                "machine {} has role {} but the configuration assigns {}",
                t.machine_id, t.role, expected
            )));
        }
    }

    let j_sets: Vec<LevelSet> = transcripts.iter().map(|t| t.levels).collect();
    let jhat = aggregate_jhat(&j_sets, cfg.m);
    let prefix = cfg.mandatory_prefix().min(cfg.j_total);

    let level0_len = transcripts[0].words.get(&0).map_or(1, Vec::len);
    let mut theta = CoeffSeq::zeros_with_level0(cfg.j_total, level0_len);
    for j in 0..=cfg.j_total {
        if !jhat.contains(j) {
            continue;
        }
        let width = theta.width(j);
        let participants: Vec<usize> = if j <= prefix {
            (1..=cfg.m).collect()
        } else {
            (1..=cfg.m).filter(|&i| j_sets[i - 1].contains(j)).collect()
        };
        let values = decode_level(transcripts, &participants, j, width, cfg)?;
        if j <= prefix {
            let energy: f64 = values.iter().map(|v| v * v).sum();
            let cutoff = cfg.lambda2 * width as f64 * cfg.sigma * cfg.sigma / cfg.m as f64;
            if energy < cutoff {
                continue;
            }
        }
        for (k, v) in values.into_iter().enumerate() {
            theta.set(j, k, v);
        }
    }
    Ok(theta)
}

/// The aggregated level set the estimator would keep, for reporting.
pub fn jhat_of(transcripts: &[AdaptiveTranscript], m: usize) -> LevelSet {
    let j_sets: Vec<LevelSet> = transcripts.iter().map(|t| t.levels).collect();
    aggregate_jhat(&j_sets, m)
}

pub fn adaptive_total_cost(transcripts: &[AdaptiveTranscript]) -> usize {
    transcripts.iter().map(|t| t.total_bits).sum()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Expected word length of each role's code for a pure-noise coordinate
/// (integer part of a standard normal).
fn null_word_bits(role: Role, w: i64) -> f64 {
    let mut expect = 0.0;
    for t in -12i64..=12 {
        let p = std_normal_cdf((t + 1) as f64) - std_normal_cdf(t as f64);
        let len = match role {
            Role::Crude => encode_g(t).len(),
            Role::Finer => encode_g(t.rem_euclid(w)).len(),
            Role::Refinement => 3,
            Role::Silent => 0,
        };
        expect += p * len as f64;
    }
    expect
}

/// Closed-form expected cost of the protocol on the zero signal: the
/// mandatory prefix plus the side channel, which is the signal-independent
/// overhead every adaptive run pays. False level inclusions add on top of
/// this floor.
pub fn expected_null_cost(cfg: &AdaptiveConfig, level0_len: usize) -> f64 {
    let prefix = cfg.mandatory_prefix().min(cfg.j_total);
    let coords: f64 = (0..=prefix)
        .map(|j| {
            if j == 0 {
                level0_len as f64
            } else {
                (1usize << j) as f64
            }
        })
        .sum();
    let (finer, refinement) = cfg.roles();
    let w = cfg.window() as i64;
    let per_coord = null_word_bits(Role::Crude, w)
        + finer as f64 * null_word_bits(Role::Finer, w)
        + refinement as f64 * null_word_bits(Role::Refinement, w);
    coords * per_coord + (cfg.m * cfg.side_channel_bits()) as f64
}

/// Framed text form, one block per machine: a literal `machine,role,levels`
/// header, a values line whose last field is the level bitmap, then one
/// ASCII word per line for the selected levels in (level, position) order.
pub fn adaptive_transcript_to_text(t: &AdaptiveTranscript, j_total: usize) -> String {
    let mut out = String::from("machine,role,levels\n");
    out.push_str(&format!(
        "{},{},{}\n",
        t.machine_id,
        t.role,
        t.levels.to_bitmap(j_total)
    ));
    for level in t.words.values() {
        for word in level {
            out.push_str(&word.to_ascii());
            out.push('\n');
        }
    }
    out
}

pub fn adaptive_transcripts_to_text(transcripts: &[AdaptiveTranscript], j_total: usize) -> String {
    transcripts
        .iter()
        .map(|t| adaptive_transcript_to_text(t, j_total))
        .collect()
}

pub fn adaptive_transcripts_from_text(
    text: &str,
    cfg: &AdaptiveConfig,
) -> Result<Vec<AdaptiveTranscript>> {
    let mut lines = text.lines().peekable();
    let mut out = Vec::new();
    while let Some(header) = lines.next() {
        let header = header.trim();
        if header.is_empty() {
            continue;
        }
        if header != "machine,role,levels" {
            return Err(Error::Parse(format!(
                "expected adaptive transcript header, found {header:?}"
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
        let levels = LevelSet::from_bitmap(fields[2])?;

        let mut flat = Vec::new();
        while let Some(line) = lines.peek() {
            let line = line.trim();
            if line.is_empty() || line == "machine,role,levels" {
                break;
            }
            flat.push(BitString::from_ascii(lines.next().unwrap().trim())?);
        }
        // level 0 absorbs whatever the fixed-width levels leave over
        let fixed: usize = levels.iter().filter(|&j| j >= 1).map(|j| 1usize << j).sum();
        let level0_len = if levels.contains(0) {
            flat.len()
                .checked_sub(fixed)
                .filter(|&l| l == 1 || l == 2)
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "machine {machine_id}: {} words do not fit the level bitmap",
                        flat.len()
                    ))
                })?
        } else {
            if flat.len() != fixed {
                return Err(Error::Parse(format!(
                    "machine {machine_id}: {} words do not fit the level bitmap",
                    flat.len()
                )));
            }
            0
        };
        let mut iter = flat.into_iter();
        let mut words = BTreeMap::new();
        for j in levels.iter() {
            let width = if j == 0 { level0_len } else { 1 << j };
            words.insert(j, iter.by_ref().take(width).collect::<Vec<_>>());
        }
        let total_bits =
            words.values().flatten().map(BitString::len).sum::<usize>() + cfg.side_channel_bits();
        out.push(AdaptiveTranscript {
            machine_id,
            role,
            levels,
            words,
            total_bits,
        });
    }
    Ok(out)
}
