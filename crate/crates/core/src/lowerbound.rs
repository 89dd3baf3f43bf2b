//! Hard instances for round-bounded coverage protocols.
//!
//! Two pieces live here. `rnd_construct` builds randomly nearly disjoint
//! families: equal-size subsets whose pairwise intersections stay small.
//! `sample_hard_instance` draws from a recursive distribution. Level 0 is one
//! player with either a full set of `base` elements (Yes) or an empty set
//! (No). Level `l` splits the players into groups. Each group gets `w` slots
//! holding level `l-1` instances: one slot holds a shared planted instance
//! and the others hold decoys drawn from per-player marginals. Slot `j` is
//! packed onto the family member `A_j`, and a random permutation relabels
//! everything so the planted blocks of different groups stay disjoint.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bitset::ElementSet;
use crate::coverage::{brute_force_opt, greedy_cover, CoverageOracle, SetSystem, DEFAULT_ENUM_BUDGET};
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::PartitionedInstance;
use crate::stats::{chi_square_independence, ChiSquare};

pub const DEFAULT_RETRY_BUDGET: usize = 100;
/// Cap on `m·base` element slots of a generated instance.
pub const DEFAULT_SLOT_BUDGET: u128 = 100_000_000;

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or_else(|| Error::input(format!("{base}^{exp} overflows")))
}

/// Size parameters of the level-`rounds` instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequences {
    pub k: usize,
    pub players: usize,
    pub elements: usize,
    pub sets: usize,
    pub width: usize,
    pub groups: usize,
}

pub fn sequences(base: usize, width_exp: usize, rounds: usize) -> Result<Sequences> {
    let groups = base * base - base;
    let width = checked_pow(base, width_exp)?;
    let k = checked_pow(groups, rounds)?;
    Ok(Sequences {
        k,
        players: k,
        elements: checked_pow(base, 2 * rounds + 1)?,
        sets: checked_pow(
            width
                .checked_mul(groups)
                .ok_or_else(|| Error::input("set count overflows"))?,
            rounds,
        )?,
        width,
        groups,
    })
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RndFamily {
    pub base: usize,
    pub level: usize,
    pub width_exp: usize,
    pub universe: usize,
    /// Sorted member sets.
    pub sets: Vec<Vec<usize>>,
    /// Pairwise intersection cap the family was verified against.
    pub pair_cap: f64,
    pub max_pair: usize,
    pub attempts: usize,
}

pub fn rnd_pair_cap(base: usize, level: usize, width_exp: usize) -> f64 {
    if level >= 2 {
        2.0 * (base as f64).powi(2 * level as i32 - 2)
    } else {
        2.0 * width_exp as f64 * (base as f64).log2()
    }
}

fn max_pairwise(sets: &[ElementSet]) -> (usize, usize, usize) {
    let mut worst = (0, 0, 0);
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            let x = sets[a].count_intersection(&sets[b]);
            if x > worst.0 {
                worst = (x, a, b);
            }
        }
    }
    worst
}

/// Samples `base^width_exp` uniform subsets of size `base^{2l-1}` from
/// `[base^{2l}]` until every pair meets the intersection cap.
pub fn rnd_construct(
    base: usize,
    level: usize,
    width_exp: usize,
    seed: u64,
    retry_budget: usize,
) -> Result<RndFamily> {
    if level < 1 {
        return Err(Error::input("RND level must be at least 1"));
    }
    if base < width_exp.max(1) {
        return Err(Error::input(format!("RND needs base >= width exponent ({base} < {width_exp})")));
    }
    let universe = checked_pow(base, 2 * level)?;
    let size = checked_pow(base, 2 * level - 1)?;
    let count = checked_pow(base, width_exp)?;
    let cap = rnd_pair_cap(base, level, width_exp);
    let mut worst_seen = (0, 0, 0);
    for attempt in 0..retry_budget.max(1) {
        let mut r = rng::rng(seed, &[0x7e4d, attempt as u64]);
        let sets: Vec<Vec<usize>> = (0..count)
            .map(|_| {
                let mut v = index::sample(&mut r, universe, size).into_vec();
                v.sort_unstable();
                v
            })
            .collect();
        let bits: Vec<ElementSet> = sets
            .iter()
            .map(|s| ElementSet::from_elements(universe, s.iter().copied()))
            .collect();
        let worst = max_pairwise(&bits);
        if (worst.0 as f64) <= cap {
            return Ok(RndFamily {
                base,
                level,
                width_exp,
                universe,
                sets,
                pair_cap: cap,
                max_pair: worst.0,
                attempts: attempt + 1,
            });
        }
        if worst.0 > worst_seen.0 {
            worst_seen = worst;
        }
    }
    Err(Error::Construction {
        attempts: retry_budget.max(1),
        detail: format!(
            "worst pair ({}, {}) intersects in {} > cap {cap}",
            worst_seen.1, worst_seen.2, worst_seen.0
        ),
    })
}

impl RndFamily {
    /// Exhaustive recheck of sizes and pairwise intersections.
    pub fn verify(&self) -> Result<usize> {
        let size = checked_pow(self.base, 2 * self.level - 1)?;
        let bits: Vec<ElementSet> = self
            .sets
            .iter()
            .map(|s| ElementSet::from_elements(self.universe, s.iter().copied()))
            .collect();
        for (i, b) in bits.iter().enumerate() {
            if b.count() != size {
                return Err(Error::PropertyViolation(format!("member {i} has size {}", b.count())));
            }
        }
        let worst = max_pairwise(&bits);
        if worst.0 as f64 > self.pair_cap {
            return Err(Error::PropertyViolation(format!(
                "members {} and {} intersect in {}",
                worst.1, worst.2, worst.0
            )));
        }
        Ok(worst.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RndSubsetReport {
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    pub bound: f64,
}

/// Draws pairs `B != A` and uniform `base`-subsets `S ⊆ A`, counting
/// `|S ∩ B| >= 2c·l·log2(base)`.
pub fn rnd_check_random_subsets(family: &RndFamily, trials: usize, seed: u64) -> RndSubsetReport {
    let bound = 2.0 * family.width_exp as f64 * family.level as f64 * (family.base as f64).log2();
    let bits: Vec<ElementSet> = family
        .sets
        .iter()
        .map(|s| ElementSet::from_elements(family.universe, s.iter().copied()))
        .collect();
    let mut r = rng::rng(seed, &[0x5b5e]);
    let count = family.sets.len();
    let mut violations = 0;
    if count >= 2 {
        for _ in 0..trials {
            let b = r.gen_range(0..count);
            let mut a = r.gen_range(0..count - 1);
            if a >= b {
                a += 1;
            }
            let pick = family.base.min(family.sets[a].len());
            let hits = index::sample(&mut r, family.sets[a].len(), pick)
                .iter()
                .filter(|&i| bits[b].contains(family.sets[a][i]))
                .count();
            if hits as f64 >= bound {
                violations += 1;
            }
        }
    }
    RndSubsetReport {
        trials,
        violations,
        rate: if trials == 0 { 0.0 } else { violations as f64 / trials as f64 },
        bound,
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMethod {
    Certificate,
    GreedyProbe,
    BruteForce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelProvenance {
    pub level: usize,
    /// Planted slot of each group.
    pub planted_slot: Vec<usize>,
    pub perm_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base: usize,
    pub width_exp: usize,
    pub rounds: usize,
    pub seed: u64,
    pub label: Label,
    pub degraded: bool,
    /// Planted chain, top level first.
    pub levels: Vec<LevelProvenance>,
    /// Final set indices descending from the level-0 root set.
    pub certificate: Vec<usize>,
}

impl Provenance {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug)]
pub struct HardInstance {
    pub instance: PartitionedInstance,
    pub k: usize,
    pub label: Label,
    pub seqs: Sequences,
    pub provenance: Provenance,
}

impl HardInstance {
    pub fn system(&self) -> &SetSystem {
        self.instance.system()
    }
}

#[derive(Clone, Debug)]
struct SetRec {
    elems: Vec<usize>,
    root: bool,
}

struct Sub {
    players: Vec<Vec<SetRec>>,
    label: Label,
    chain: Vec<LevelProvenance>,
}

/// Top-level intermediate data kept for verification.
#[derive(Clone, Debug)]
pub struct TopTrace {
    pub planted_slot: Vec<usize>,
    pub perm: Vec<usize>,
    /// `[player][slot][set]` inputs before packing and labeling.
    pub sub_inputs: Vec<Vec<Vec<Vec<usize>>>>,
}

struct Sampler {
    base: usize,
    width_exp: usize,
    families: Vec<RndFamily>,
}

/// Where each element of a group's packed universe lands.
pub fn group_map(family: &RndFamily, planted: usize, group: usize, perm: &[usize]) -> Vec<usize> {
    let slot_size = family.sets[planted].len();
    let mut special = vec![false; family.universe];
    for &x in &family.sets[planted] {
        special[x] = true;
    }
    let mut out = vec![0; family.universe];
    let (mut shared_rank, mut special_rank) = (0, 0);
    for x in 0..family.universe {
        let pos = if special[x] {
            special_rank += 1;
            family.universe + group * slot_size + special_rank - 1
        } else {
            shared_rank += 1;
            shared_rank - 1
        };
        out[x] = perm[pos];
    }
    out
}

/// A player's final sets from its per-slot inputs and the two gadgets.
pub fn replay_player(
    family: &RndFamily,
    sub_inputs: &[Vec<Vec<usize>>],
    planted: usize,
    group: usize,
    perm: &[usize],
) -> Vec<Vec<usize>> {
    let gm = group_map(family, planted, group, perm);
    let mut out = Vec::new();
    for (slot, sets) in sub_inputs.iter().enumerate() {
        for s in sets {
            let mut v: Vec<usize> = s.iter().map(|&e| gm[family.sets[slot][e]]).collect();
            v.sort_unstable();
            out.push(v);
        }
    }
    out
}

impl Sampler {
    fn new(base: usize, width_exp: usize, rounds: usize) -> Result<Self> {
        let families = (1..=rounds)
            .map(|l| {
                let design = rng::derive(0x9ac4, &[base as u64, width_exp as u64, l as u64]);
                rnd_construct(base, l, width_exp, design, DEFAULT_RETRY_BUDGET)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sampler {
            base,
            width_exp,
            families,
        })
    }

    fn sample(&self, level: usize, seed: u64, trace: Option<&mut TopTrace>) -> Result<Sub> {
        if level == 0 {
            let mut r = rng::rng(seed, &[0]);
            let yes = r.gen_bool(0.5);
            let elems = if yes { (0..self.base).collect() } else { Vec::new() };
            return Ok(Sub {
                players: vec![vec![SetRec { elems, root: true }]],
                label: if yes { Label::Yes } else { Label::No },
                chain: Vec::new(),
            });
        }
        let seqs = sequences(self.base, self.width_exp, level)?;
        let below = sequences(self.base, self.width_exp, level - 1)?;
        let family = &self.families[level - 1];
        let star = self.sample(level - 1, rng::derive(seed, &[1]), None)?;

        let mut r = rng::rng(seed, &[3]);
        let planted: Vec<usize> = (0..seqs.groups).map(|_| r.gen_range(0..seqs.width)).collect();
        let perm_seed = rng::derive(seed, &[4]);
        let mut perm: Vec<usize> = (0..seqs.elements).collect();
        perm.shuffle(&mut rng::rng(perm_seed, &[]));

        let mut players = Vec::with_capacity(seqs.players);
        let mut sub_inputs = Vec::new();
        for (group, &pj) in planted.iter().enumerate() {
            let gm = group_map(family, pj, group, &perm);
            for q in 0..below.players {
                let mut sets = Vec::new();
                let mut per_slot = Vec::with_capacity(seqs.width);
                for slot in 0..seqs.width {
                    let local: Vec<SetRec> = if slot == pj {
                        star.players[q].clone()
                    } else {
                        let s = rng::derive(seed, &[2, group as u64, slot as u64, q as u64]);
                        let mut fresh = self.sample(level - 1, s, None)?;
                        std::mem::take(&mut fresh.players[q])
                            .into_iter()
                            .map(|x| SetRec { root: false, ..x })
                            .collect()
                    };
                    if trace.is_some() {
                        per_slot.push(local.iter().map(|x| x.elems.clone()).collect());
                    }
                    for x in local {
                        let mut elems: Vec<usize> =
                            x.elems.iter().map(|&e| gm[family.sets[slot][e]]).collect();
                        elems.sort_unstable();
                        sets.push(SetRec { elems, root: x.root });
                    }
                }
                players.push(sets);
                sub_inputs.push(per_slot);
            }
        }
        let mut chain = vec![LevelProvenance {
            level,
            planted_slot: planted.clone(),
            perm_seed,
        }];
        chain.extend(star.chain);
        if let Some(t) = trace {
            *t = TopTrace {
                planted_slot: planted,
                perm,
                sub_inputs,
            };
        }
        Ok(Sub {
            players,
            label: star.label,
            chain,
        })
    }
}

fn validate_hard_params(base: usize, width_exp: usize, rounds: usize) -> Result<Sequences> {
    if rounds < 1 || rounds > width_exp {
        return Err(Error::input(format!("need 1 <= r <= c, got r={rounds}, c={width_exp}")));
    }
    if base < 2 || base < width_exp {
        return Err(Error::input(format!("need N >= max(2, c), got N={base}")));
    }
    let seqs = sequences(base, width_exp, rounds)?;
    let slots = seqs.sets as u128 * base as u128;
    if slots > DEFAULT_SLOT_BUDGET {
        return Err(Error::Budget {
            what: "hard instance element slots",
            needed: slots,
            budget: DEFAULT_SLOT_BUDGET,
        });
    }
    Ok(seqs)
}

/// True when `base < 12c²`, below the size the gap analysis assumes.
pub fn is_degraded(base: usize, width_exp: usize) -> bool {
    base < 12 * width_exp * width_exp
}

pub fn sample_hard_instance(base: usize, width_exp: usize, rounds: usize, seed: u64) -> Result<HardInstance> {
    sample_hard_instance_traced(base, width_exp, rounds, seed).map(|(h, _)| h)
}

/// Also returns the top-level gadget inputs for replay checks.
pub fn sample_hard_instance_traced(
    base: usize,
    width_exp: usize,
    rounds: usize,
    seed: u64,
) -> Result<(HardInstance, TopTrace)> {
    let seqs = validate_hard_params(base, width_exp, rounds)?;
    let sampler = Sampler::new(base, width_exp, rounds)?;
    let mut trace = TopTrace {
        planted_slot: Vec::new(),
        perm: Vec::new(),
        sub_inputs: Vec::new(),
    };
    let sub = sampler.sample(rounds, seed, Some(&mut trace))?;

    let mut sets = Vec::with_capacity(seqs.sets);
    let mut owner = Vec::with_capacity(seqs.sets);
    let mut certificate = Vec::new();
    for (player, list) in sub.players.into_iter().enumerate() {
        for s in list {
            if s.root {
                certificate.push(sets.len());
            }
            sets.push(s.elems);
            owner.push(player);
        }
    }
    let system = SetSystem::new(seqs.elements, sets)?;
    let instance = PartitionedInstance::new(system, owner, seqs.players)?;
    let provenance = Provenance {
        base,
        width_exp,
        rounds,
        seed,
        label: sub.label,
        degraded: is_degraded(base, width_exp),
        levels: sub.chain,
        certificate,
    };
    Ok((
        HardInstance {
            instance,
            k: seqs.k,
            label: sub.label,
            seqs,
            provenance,
        },
        trace,
    ))
}

/// Thresholds of the decision problem: Yes means opt >= `yes`, No means
/// opt <= `no`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub yes: f64,
    pub no: f64,
}

pub fn thresholds(base: usize, width_exp: usize, rounds: usize, k: usize, log_base: f64) -> Thresholds {
    let log = (base as f64).powi(2 * rounds as i32).ln() / log_base.ln();
    Thresholds {
        yes: (k * base) as f64,
        no: k as f64 * 2.0 * width_exp as f64 * log,
    }
}

/// Labels an arbitrary system against the given thresholds.
pub fn decide_label(
    system: &SetSystem,
    k: usize,
    th: Thresholds,
    certificate: Option<&[usize]>,
    method: LabelMethod,
) -> Result<Decision> {
    match method {
        LabelMethod::Certificate => {
            let Some(cert) = certificate else {
                return Ok(Decision::Unknown);
            };
            let value = system.union_of(cert).count() as f64;
            Ok(if cert.len() <= k && value >= th.yes {
                Decision::Yes
            } else {
                Decision::Unknown
            })
        }
        LabelMethod::GreedyProbe => {
            let g = system.union_of(&greedy_cover(&CoverageOracle::new(system), k)).count() as f64;
            let upper = g / (1.0 - (-1.0f64).exp());
            // opt >= g and opt <= g/(1-1/e)
            let rules_out_no = g > th.no;
            let rules_out_yes = upper < th.yes;
            Ok(match (rules_out_no, rules_out_yes) {
                (true, false) => Decision::Yes,
                (false, true) => Decision::No,
                _ => Decision::Unknown,
            })
        }
        LabelMethod::BruteForce => {
            let opt = brute_force_opt(system, k, DEFAULT_ENUM_BUDGET)?.value as f64;
            Ok(if opt >= th.yes {
                Decision::Yes
            } else if opt <= th.no {
                Decision::No
            } else {
                Decision::Unknown
            })
        }
    }
}

pub fn decide_coverage_label(inst: &HardInstance, method: LabelMethod) -> Result<Decision> {
    let p = &inst.provenance;
    let th = thresholds(p.base, p.width_exp, p.rounds, inst.k, 2.0);
    decide_label(inst.system(), inst.k, th, Some(&p.certificate), method)
}

/// Images of the planted blocks are pairwise disjoint and every group map
/// is injective.
pub fn check_special_blocks(inst: &HardInstance, trace: &TopTrace) -> Result<()> {
    let p = &inst.provenance;
    let sampler_family = family_for(p.base, p.width_exp, p.rounds)?;
    let mut seen = HashSet::new();
    for (group, &pj) in trace.planted_slot.iter().enumerate() {
        let gm = group_map(&sampler_family, pj, group, &trace.perm);
        let distinct: HashSet<usize> = gm.iter().copied().collect();
        if distinct.len() != gm.len() {
            return Err(Error::PropertyViolation(format!("group {group} map is not injective")));
        }
        for &x in &sampler_family.sets[pj] {
            if !seen.insert(gm[x]) {
                return Err(Error::PropertyViolation(format!(
                    "planted block of group {group} overlaps another"
                )));
            }
        }
    }
    Ok(())
}

/// Rebuilds every player's input from its slot inputs and compares.
pub fn check_replay(inst: &HardInstance, trace: &TopTrace) -> Result<()> {
    let p = &inst.provenance;
    let family = family_for(p.base, p.width_exp, p.rounds)?;
    let below = sequences(p.base, p.width_exp, p.rounds - 1)?.players;
    let system = inst.system();
    let locals = inst.instance.locals();
    for (player, local) in locals.iter().enumerate() {
        let group = player / below;
        let want = replay_player(
            &family,
            &trace.sub_inputs[player],
            trace.planted_slot[group],
            group,
            &trace.perm,
        );
        let got: Vec<Vec<usize>> = local.iter().map(|&i| system.set(i).to_vec()).collect();
        if got != want {
            return Err(Error::PropertyViolation(format!("player {player} replay differs")));
        }
    }
    Ok(())
}

fn family_for(base: usize, width_exp: usize, level: usize) -> Result<RndFamily> {
    let design = rng::derive(0x9ac4, &[base as u64, width_exp as u64, level as u64]);
    rnd_construct(base, level, width_exp, design, DEFAULT_RETRY_BUDGET)
}

#[derive(Clone, Debug, Serialize)]
pub struct GadgetReport {
    pub samples: usize,
    pub degraded: bool,
    pub yes_samples: usize,
    pub yes_preserved: usize,
    pub no_samples: usize,
    pub no_preserved: usize,
    pub no_unknown: usize,
    pub preservation_rate: f64,
    pub disjoint_ok: usize,
    pub replay_ok: usize,
    /// Image bucket of a fixed element of group 0 against the planted slot.
    pub oblivious: ChiSquare,
    /// Set sizes of player 0's planted vs decoy slots.
    pub marginal: ChiSquare,
}

impl GadgetReport {
    pub fn yes_rate(&self) -> f64 {
        if self.yes_samples == 0 {
            1.0
        } else {
            self.yes_preserved as f64 / self.yes_samples as f64
        }
    }
}

const BUCKETS: usize = 4;

pub fn verify_gadget_properties(
    base: usize,
    width_exp: usize,
    rounds: usize,
    trials: usize,
    seed: u64,
) -> Result<GadgetReport> {
    let mut rep = GadgetReport {
        samples: trials,
        degraded: is_degraded(base, width_exp),
        yes_samples: 0,
        yes_preserved: 0,
        no_samples: 0,
        no_preserved: 0,
        no_unknown: 0,
        preservation_rate: 0.0,
        disjoint_ok: 0,
        replay_ok: 0,
        oblivious: chi_square_independence(&[]),
        marginal: chi_square_independence(&[]),
    };
    let family = family_for(base, width_exp, rounds)?;
    let mut image_table = vec![vec![0u64; BUCKETS]; BUCKETS];
    // rows planted/decoy, columns empty/non-empty
    let mut size_table = vec![vec![0u64; 2]; 2];
    let mut matched = 0;
    for t in 0..trials {
        let (inst, trace) = sample_hard_instance_traced(base, width_exp, rounds, rng::derive(seed, &[t as u64]))?;
        match inst.label {
            Label::Yes => {
                rep.yes_samples += 1;
                if decide_coverage_label(&inst, LabelMethod::Certificate)? == Decision::Yes {
                    rep.yes_preserved += 1;
                    matched += 1;
                }
            }
            Label::No => {
                rep.no_samples += 1;
                match decide_coverage_label(&inst, LabelMethod::GreedyProbe)? {
                    Decision::No => {
                        rep.no_preserved += 1;
                        matched += 1;
                    }
                    Decision::Unknown => rep.no_unknown += 1,
                    Decision::Yes => {}
                }
            }
        }
        if check_special_blocks(&inst, &trace).is_ok() {
            rep.disjoint_ok += 1;
        }
        if check_replay(&inst, &trace).is_ok() {
            rep.replay_ok += 1;
        }
        let pj = trace.planted_slot[0];
        let gm = group_map(&family, pj, 0, &trace.perm);
        let bucket = gm[0] * BUCKETS / inst.seqs.elements;
        image_table[bucket][pj % BUCKETS] += 1;
        for (slot, sets) in trace.sub_inputs[0].iter().enumerate() {
            let row = usize::from(slot != pj);
            for s in sets {
                size_table[row][usize::from(!s.is_empty())] += 1;
            }
        }
    }
    rep.preservation_rate = if trials == 0 { 1.0 } else { matched as f64 / trials as f64 };
    rep.oblivious = chi_square_independence(&image_table);
    rep.marginal = chi_square_independence(&size_table);
    Ok(rep)
}
