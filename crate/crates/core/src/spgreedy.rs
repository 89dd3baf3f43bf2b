//! Sample-and-prune threshold greedy for monotone submodular maximization
//! under a cardinality constraint, run in the coordinator model.
//!
//! The run has `ℓ = ⌈log_{1+ε}(2e)⌉` iterations of `s = ⌈r/ℓ⌉` steps. In
//! iteration `j` the threshold is `τ_j = (opt~/k)·(1+ε)^{-(j-1)}`. In step
//! `t` each machine computes its candidates (items whose marginal gain
//! against the current solution is at least `τ_j`), samples each with
//! probability `q_t`, and ships the sample; the coordinator adds received
//! items in arrival order whenever they still clear `τ_j`. The final step of
//! every iteration has `q_s = 1`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bitset::ElementSet;
use crate::coverage::{Cover, CoverageOracle, SetSystem, SubmodularOracle};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::sim::{
    run_protocol, Blackboard, MachineCtx, PartitionedInstance, Protocol, RunOptions, Step,
    Transcript, Wire, WireSize,
};

/// Constant in front of the universe sampling rate `k·log2 m / (ε²·opt)`.
pub const SUBSAMPLE_CONSTANT: f64 = 33.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpGreedyParams {
    pub k: usize,
    pub eps: f64,
    pub rounds: usize,
    /// A value in `[opt, 2·opt]`; `None` lets the wrapper sweep guesses.
    pub opt_guess: Option<f64>,
}

impl SpGreedyParams {
    pub fn new(k: usize, eps: f64, rounds: usize) -> Self {
        SpGreedyParams {
            k,
            eps,
            rounds,
            opt_guess: None,
        }
    }

    pub fn with_guess(mut self, g: f64) -> Self {
        self.opt_guess = Some(g);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::input(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if self.rounds < 1 {
            return Err(Error::input("round budget r must be at least 1"));
        }
        if let Some(g) = self.opt_guess {
            if !(g > 0.0) {
                return Err(Error::input("opt guess must be positive"));
            }
        }
        Ok(())
    }

    /// Number of threshold levels `ℓ = ⌈log_{1+ε}(2e)⌉`.
    pub fn iterations(&self) -> usize {
        iterations_for(self.eps)
    }

    /// Steps per iteration `s = ⌈r/ℓ⌉`.
    pub fn steps(&self) -> usize {
        self.rounds.div_ceil(self.iterations()).max(1)
    }

    /// Threshold of 1-based iteration `j` for the given `k`.
    pub fn tau(&self, opt_guess: f64, k: usize, j: usize) -> f64 {
        opt_guess / k as f64 * (1.0 + self.eps).powi(-(j as i32 - 1))
    }

    /// Sampling rate of 1-based step `t`.
    pub fn q(&self, k: usize, m: usize, t: usize) -> f64 {
        sample_rate(k, m, t, self.steps())
    }
}

pub fn iterations_for(eps: f64) -> usize {
    let raw = (2.0 * std::f64::consts::E).ln() / (1.0 + eps).ln();
    // guard against 9.000000001 style rounding on exact powers
    let r = raw.round();
    if (raw - r).abs() < 1e-9 {
        r as usize
    } else {
        raw.ceil() as usize
    }
}

/// `q_t = min(1, 4k·log2 m / m^{1−t/s})` for `t < s`, and `q_s = 1`.
pub fn sample_rate(k: usize, m: usize, t: usize, s: usize) -> f64 {
    if t >= s {
        return 1.0;
    }
    if m <= 1 {
        return 1.0;
    }
    let m = m as f64;
    let q = 4.0 * k as f64 * m.log2() / m.powf(1.0 - t as f64 / s as f64);
    q.min(1.0)
}

/// One accepted item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddRecord {
    pub item: usize,
    /// 1-based iteration and step.
    pub iteration: usize,
    pub step: usize,
    pub marginal: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialSolution {
    pub items: Vec<usize>,
    pub records: Vec<AddRecord>,
}

/// Coordinator-side view of one step, kept for invariant checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub iteration: usize,
    pub step: usize,
    pub tau: f64,
    pub q: f64,
    /// Every ground item clearing `τ_j` at the start of the step.
    pub candidates: Vec<usize>,
    /// Items received, in processing order.
    pub received: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SpGreedyRun {
    pub solution: PartialSolution,
    pub value: f64,
    pub opt_guess: f64,
    pub trace: Vec<StepTrace>,
    pub transcript: Transcript,
}

/// How a machine turns its candidate list into the sample it ships.
pub trait StepSampler: Sync {
    /// `candidates` are the machine's candidates in local input order; the
    /// returned items must be a subset, in the order they will be shipped.
    fn sample(
        &self,
        machine: usize,
        iteration: usize,
        step: usize,
        candidates: &[usize],
        q: f64,
        rng: &mut Rng,
    ) -> Vec<usize>;
}

/// Independent coin flips with probability `q`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bernoulli;

impl StepSampler for Bernoulli {
    fn sample(&self, _: usize, _: usize, _: usize, candidates: &[usize], q: f64, rng: &mut Rng) -> Vec<usize> {
        if q >= 1.0 {
            return candidates.to_vec();
        }
        candidates.iter().copied().filter(|_| rng.gen_bool(q)).collect()
    }
}

/// Replays a fixed list of samples per `(iteration, step)`; items that are not
/// current candidates of the machine are dropped.
#[derive(Clone, Debug, Default)]
pub struct Scripted {
    pub steps: HashMap<(usize, usize), Vec<usize>>,
}

impl StepSampler for Scripted {
    fn sample(&self, _: usize, iteration: usize, step: usize, candidates: &[usize], _: f64, _: &mut Rng) -> Vec<usize> {
        let Some(script) = self.steps.get(&(iteration, step)) else {
            return Vec::new();
        };
        script
            .iter()
            .copied()
            .filter(|i| candidates.binary_search(i).is_ok() || candidates.contains(i))
            .collect()
    }
}

/// Items shipped by a machine.
#[derive(Clone, Debug, Default)]
pub struct ItemBatch {
    pub items: Vec<usize>,
    pub wire: WireSize,
}

impl Wire for ItemBatch {
    fn wire_size(&self) -> WireSize {
        self.wire
    }
}

/// The coordinator's current solution; only newly added items are costed.
#[derive(Clone, Debug, Default)]
pub struct SolutionBroadcast {
    pub items: Vec<usize>,
    pub wire: WireSize,
}

impl Wire for SolutionBroadcast {
    fn wire_size(&self) -> WireSize {
        self.wire
    }
}

fn batch<O: SubmodularOracle + ?Sized>(oracle: &O, items: Vec<usize>) -> ItemBatch {
    let mut wire = WireSize::default();
    for &i in &items {
        wire.add(WireSize::item(oracle.payload_len(i)));
    }
    ItemBatch { items, wire }
}

fn candidates<O: SubmodularOracle + ?Sized>(
    oracle: &O,
    state: &O::State,
    pool: impl Iterator<Item = usize>,
    tau: f64,
) -> Vec<usize> {
    pool.filter(|&a| oracle.marginal(state, a) >= tau).collect()
}

struct SpProtocol<'a, O: SubmodularOracle, S: StepSampler> {
    oracle: &'a O,
    sampler: &'a S,
    params: &'a SpGreedyParams,
    opt_guess: f64,
    k: usize,
    ell: usize,
    s: usize,
    m: usize,
    // coordinator state
    state: O::State,
    solution: PartialSolution,
    trace: Vec<StepTrace>,
}

impl<O: SubmodularOracle, S: StepSampler> SpProtocol<'_, O, S> {
    fn position(&self, round: usize) -> (usize, usize) {
        (round / self.s + 1, round % self.s + 1)
    }
}

impl<O: SubmodularOracle, S: StepSampler> Protocol for SpProtocol<'_, O, S> {
    type MachineState = ();
    type Message = ItemBatch;
    type Broadcast = SolutionBroadcast;
    type Answer = ();

    fn round_budget(&self) -> usize {
        self.ell * self.s
    }

    fn id_bits(&self) -> u32 {
        self.oracle.id_bits()
    }

    fn init_machine(&self, _: usize, _: &[usize]) {}

    fn machine_step(
        &self,
        ctx: &MachineCtx<'_, ItemBatch, SolutionBroadcast>,
        _: &mut (),
        rng: &mut Rng,
    ) -> ItemBatch {
        let (j, t) = self.position(ctx.round);
        let x = ctx.board.last_broadcast().map_or(&[][..], |b| &b.items[..]);
        let state = self.oracle.state_of(x);
        let tau = self.params.tau(self.opt_guess, self.k, j);
        let cand = candidates(self.oracle, &state, ctx.local.iter().copied(), tau);
        let q = sample_rate(self.k, self.m, t, self.s);
        let picked = self.sampler.sample(ctx.machine, j, t, &cand, q, rng);
        batch(self.oracle, picked)
    }

    fn coordinator_step(
        &mut self,
        round: usize,
        board: &Blackboard<ItemBatch, SolutionBroadcast>,
    ) -> Step<SolutionBroadcast, ()> {
        let (j, t) = self.position(round);
        let tau = self.params.tau(self.opt_guess, self.k, j);
        let cand = candidates(self.oracle, &self.state, 0..self.m, tau);
        let received: Vec<usize> = board.messages[round]
            .iter()
            .flat_map(|b| b.items.iter().copied())
            .collect();
        let before = self.solution.items.len();
        for &a in &received {
            if self.solution.items.len() >= self.k {
                break;
            }
            let gain = self.oracle.marginal(&self.state, a);
            if gain >= tau {
                self.oracle.insert(&mut self.state, a);
                self.solution.items.push(a);
                self.solution.records.push(AddRecord {
                    item: a,
                    iteration: j,
                    step: t,
                    marginal: gain,
                });
            }
        }
        self.trace.push(StepTrace {
            iteration: j,
            step: t,
            tau,
            q: sample_rate(self.k, self.m, t, self.s),
            candidates: cand,
            received,
        });
        if self.solution.items.len() >= self.k || round + 1 == self.ell * self.s {
            return Step::Finish(());
        }
        let mut wire = WireSize::default();
        for &a in &self.solution.items[before..] {
            wire.add(WireSize::item(self.oracle.payload_len(a)));
        }
        Step::Continue(SolutionBroadcast {
            items: self.solution.items.clone(),
            wire,
        })
    }
}

/// Runs one instance of the protocol with a fixed `opt_guess`.
pub fn sp_greedy_with<O: SubmodularOracle, S: StepSampler>(
    instance: &PartitionedInstance,
    oracle: &O,
    params: &SpGreedyParams,
    sampler: &S,
    seed: u64,
    opts: RunOptions,
) -> Result<SpGreedyRun> {
    params.validate()?;
    let opt_guess = params
        .opt_guess
        .ok_or_else(|| Error::input("sp_greedy needs an opt guess; use sp_greedy_auto"))?;
    if oracle.ground_size() != instance.system().m() {
        return Err(Error::input("oracle ground set differs from partitioned item count"));
    }
    let mut proto = SpProtocol {
        oracle,
        sampler,
        params,
        opt_guess,
        k: params.k,
        ell: params.iterations(),
        s: params.steps(),
        m: oracle.ground_size(),
        state: oracle.empty_state(),
        solution: PartialSolution::default(),
        trace: Vec::new(),
    };
    if params.k == 0 {
        return Ok(SpGreedyRun {
            solution: PartialSolution::default(),
            value: 0.0,
            opt_guess,
            trace: Vec::new(),
            transcript: Transcript::new(instance.p(), opts.charge_broadcasts),
        });
    }
    let ((), transcript) = run_protocol(instance, &mut proto, seed, opts)?;
    let value = oracle.state_value(&proto.state);
    Ok(SpGreedyRun {
        solution: proto.solution,
        value,
        opt_guess,
        trace: proto.trace,
        transcript,
    })
}

pub fn sp_greedy<O: SubmodularOracle>(
    instance: &PartitionedInstance,
    oracle: &O,
    params: &SpGreedyParams,
    seed: u64,
) -> Result<SpGreedyRun> {
    sp_greedy_with(instance, oracle, params, &Bernoulli, seed, RunOptions::default())
}

/// Powers of two `lo, 2lo, 4lo, …` up to the first value `>= hi`.
pub fn guess_schedule(lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo >= 1.0) || !(hi >= lo) {
        return Err(Error::input(format!("empty guess range ({lo}, {hi})")));
    }
    let mut g = lo;
    let mut out = vec![g];
    while g < hi {
        g *= 2.0;
        out.push(g);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GuessSweep<R> {
    pub guesses: Vec<f64>,
    pub results: Vec<R>,
    pub values: Vec<f64>,
    /// Index of the best result (first on ties).
    pub best: usize,
}

impl<R> GuessSweep<R> {
    pub fn best(&self) -> &R {
        &self.results[self.best]
    }

    pub fn into_best(mut self) -> R {
        self.results.swap_remove(self.best)
    }
}

/// Runs `run` for every guess in the schedule and keeps the one with the
/// largest value.
pub fn guess_opt<R>(
    lo: f64,
    hi: f64,
    mut run: impl FnMut(f64) -> Result<(R, f64)>,
) -> Result<GuessSweep<R>> {
    let guesses = guess_schedule(lo, hi)?;
    let mut results = Vec::with_capacity(guesses.len());
    let mut values = Vec::with_capacity(guesses.len());
    for &g in &guesses {
        let (r, v) = run(g)?;
        results.push(r);
        values.push(v);
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok(GuessSweep {
        guesses,
        results,
        values,
        best,
    })
}

/// SPGreedy with the guess swept over `[Δ, k·Δ]` where `Δ` is the best single
/// item value. The returned transcript sums all guesses.
pub fn sp_greedy_auto<O: SubmodularOracle>(
    instance: &PartitionedInstance,
    oracle: &O,
    params: &SpGreedyParams,
    seed: u64,
) -> Result<(SpGreedyRun, Transcript)> {
    params.validate()?;
    let empty = oracle.empty_state();
    let delta = (0..oracle.ground_size())
        .map(|a| oracle.marginal(&empty, a))
        .fold(0.0, f64::max);
    if delta <= 0.0 || params.k == 0 {
        let run = sp_greedy(instance, oracle, &params.clone().with_guess(1.0), seed)?;
        let t = run.transcript.clone();
        return Ok((run, t));
    }
    let sweep = guess_opt(delta, params.k as f64 * delta, |g| {
        let run = sp_greedy(instance, oracle, &params.clone().with_guess(g), seed)?;
        let v = run.value;
        Ok((run, v))
    })?;
    let total = Transcript::sum(sweep.results.iter().map(|r| &r.transcript));
    Ok((sweep.into_best(), total))
}

/// Result of sampling the universe.
#[derive(Clone, Debug)]
pub struct Subsampled {
    pub system: SetSystem,
    pub kept: ElementSet,
    /// Sampling probability; values are scaled by `q` relative to the input.
    pub q: f64,
    /// True when `q >= 1` and the input was returned unchanged.
    pub identity: bool,
}

/// Keeps each element independently with probability
/// `q = 33·k·log2 m / (ε²·opt_guess)` and intersects every set with the sample.
pub fn subsample_universe(
    system: &SetSystem,
    k: usize,
    eps: f64,
    opt_guess: f64,
    seed: u64,
) -> Result<Subsampled> {
    if !(opt_guess > 0.0) {
        return Err(Error::input("opt guess must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::input(format!("eps must lie in (0,1), got {eps}")));
    }
    let logm = (system.m().max(2) as f64).log2();
    let q = SUBSAMPLE_CONSTANT * k as f64 * logm / (eps * eps * opt_guess);
    if q >= 1.0 {
        return Ok(Subsampled {
            system: system.clone(),
            kept: ElementSet::full(system.n()),
            q: 1.0,
            identity: true,
        });
    }
    let mut r = rng::rng(seed, &[0x55]);
    let kept = ElementSet::from_elements(system.n(), (0..system.n()).filter(|_| r.gen_bool(q)));
    Ok(Subsampled {
        system: system.restrict(&kept),
        kept,
        q,
        identity: false,
    })
}

// ---------------------------------------------------------------------------
// Coverage variant with side samples: each step takes two rounds. In the
// first, machines offer a few uniformly chosen candidates; the coordinator
// keeps `⌈ε·k/2r⌉` of them in a side collection Y and broadcasts c(Y). In the
// second, machines ship their sample with c(Y) stripped, and the coordinator
// runs the usual threshold add loop for `k' = ⌊(1−ε)k⌋` on the residual
// universe. The answer is Y ∪ X.

#[derive(Clone, Debug)]
pub struct LowCommRun {
    pub cover: Cover,
    pub side: Vec<usize>,
    pub solution: PartialSolution,
    /// Side samples accepted per step.
    pub side_per_step: Vec<usize>,
    pub k_prime: usize,
    pub trace: Vec<StepTrace>,
    pub transcript: Transcript,
}

#[derive(Clone, Debug, Default)]
pub struct Offer {
    /// Uniform random subset of the machine's sample, in shuffled order.
    pub items: Vec<usize>,
    /// Size of the machine's full sample.
    pub sample_size: usize,
}

#[derive(Clone, Debug)]
pub enum LowCommMessage {
    Offer(Offer, WireSize),
    Batch(ItemBatch),
}

impl Wire for LowCommMessage {
    fn wire_size(&self) -> WireSize {
        match self {
            LowCommMessage::Offer(_, w) => *w,
            LowCommMessage::Batch(b) => b.wire,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LowCommBroadcast {
    pub solution: Vec<usize>,
    pub side: Vec<usize>,
    pub wire: WireSize,
}

impl Wire for LowCommBroadcast {
    fn wire_size(&self) -> WireSize {
        self.wire
    }
}

struct LowCommProtocol<'a, S: StepSampler> {
    system: &'a SetSystem,
    sampler: &'a S,
    params: &'a SpGreedyParams,
    opt_guess: f64,
    seed: u64,
    k_prime: usize,
    side_budget: usize,
    per_step_side: usize,
    ell: usize,
    s: usize,
    // coordinator
    side: Vec<usize>,
    side_cover: ElementSet,
    solution: PartialSolution,
    covered: ElementSet,
    side_per_step: Vec<usize>,
    trace: Vec<StepTrace>,
}

impl<S: StepSampler> LowCommProtocol<'_, S> {
    fn position(&self, round: usize) -> (usize, usize, bool) {
        let step = round / 2;
        (step / self.s + 1, step % self.s + 1, round % 2 == 0)
    }

    fn residual_len(&self, item: usize, cov: &ElementSet) -> usize {
        self.system.set(item).count_difference(cov)
    }
}

/// Per-machine memory between the two rounds of a step.
#[derive(Default)]
pub struct PendingSample(Vec<usize>);

impl<S: StepSampler> Protocol for LowCommProtocol<'_, S> {
    type MachineState = PendingSample;
    type Message = LowCommMessage;
    type Broadcast = LowCommBroadcast;
    type Answer = ();

    fn round_budget(&self) -> usize {
        2 * self.ell * self.s
    }

    fn id_bits(&self) -> u32 {
        crate::coverage::id_bits(self.system.n())
    }

    fn init_machine(&self, _: usize, _: &[usize]) -> PendingSample {
        PendingSample::default()
    }

    fn machine_step(
        &self,
        ctx: &MachineCtx<'_, LowCommMessage, LowCommBroadcast>,
        pending: &mut PendingSample,
        rng: &mut Rng,
    ) -> LowCommMessage {
        let (j, t, offer_phase) = self.position(ctx.round);
        let last = ctx.board.last_broadcast();
        let mut covered = ElementSet::empty(self.system.n());
        if let Some(b) = last {
            for &i in b.solution.iter().chain(&b.side) {
                covered.union_with(self.system.set(i));
            }
        }
        if offer_phase {
            let tau = self.params.tau(self.opt_guess, self.k_prime, j);
            let cand: Vec<usize> = ctx
                .local
                .iter()
                .copied()
                .filter(|&a| self.residual_len(a, &covered) as f64 >= tau)
                .collect();
            let q = sample_rate(self.k_prime, self.system.m(), t, self.s);
            pending.0 = self.sampler.sample(ctx.machine, j, t, &cand, q, rng);
            let mut offer = pending.0.clone();
            offer.shuffle(rng);
            offer.truncate(self.per_step_side);
            let mut wire = WireSize::elements(1);
            for &a in &offer {
                wire.add(WireSize::item(Some(self.residual_len(a, &covered))));
            }
            LowCommMessage::Offer(
                Offer {
                    items: offer,
                    sample_size: pending.0.len(),
                },
                wire,
            )
        } else {
            let items = std::mem::take(&mut pending.0);
            let mut wire = WireSize::default();
            for &a in &items {
                wire.add(WireSize::item(Some(self.residual_len(a, &covered))));
            }
            LowCommMessage::Batch(ItemBatch { items, wire })
        }
    }

    fn coordinator_step(
        &mut self,
        round: usize,
        board: &Blackboard<LowCommMessage, LowCommBroadcast>,
    ) -> Step<LowCommBroadcast, ()> {
        let (j, t, offer_phase) = self.position(round);
        let tau = self.params.tau(self.opt_guess, self.k_prime, j);
        let mut wire = WireSize::default();

        if offer_phase {
            let offers: Vec<&Offer> = board.messages[round]
                .iter()
                .map(|m| match m {
                    LowCommMessage::Offer(o, _) => o,
                    LowCommMessage::Batch(_) => unreachable!("offer round"),
                })
                .collect();
            // Uniform draw without replacement from the union of all samples:
            // pick a machine with probability proportional to its remaining
            // sample, then take its next offered item.
            let mut remaining: Vec<usize> = offers.iter().map(|o| o.sample_size).collect();
            let mut cursor = vec![0usize; offers.len()];
            let want = self
                .per_step_side
                .min(self.side_budget - self.side.len());
            let mut r = rng::rng(self.seed, &[0x10c, round as u64]);
            let mut taken = 0;
            while taken < want {
                let total: usize = remaining.iter().sum();
                if total == 0 {
                    break;
                }
                let mut pick = r.gen_range(0..total);
                let mut mi = 0;
                while pick >= remaining[mi] {
                    pick -= remaining[mi];
                    mi += 1;
                }
                let item = offers[mi].items[cursor[mi]];
                cursor[mi] += 1;
                remaining[mi] -= 1;
                wire.add(WireSize::elements(self.residual_len(item, &self.side_cover)));
                self.side_cover.union_with(self.system.set(item));
                self.side.push(item);
                taken += 1;
            }
            self.side_per_step.push(taken);
            self.covered.union_with(&self.side_cover);
            return Step::Continue(LowCommBroadcast {
                solution: self.solution.items.clone(),
                side: self.side.clone(),
                wire,
            });
        }

        let oracle = CoverageOracle::residual(self.system, self.side_cover.clone());
        let mut state = self.covered.clone();
        let cand = (0..self.system.m())
            .filter(|&a| oracle.marginal(&state, a) >= tau)
            .collect();
        let received: Vec<usize> = board.messages[round]
            .iter()
            .flat_map(|m| match m {
                LowCommMessage::Batch(b) => b.items.iter().copied(),
                LowCommMessage::Offer(..) => unreachable!("batch round"),
            })
            .collect();
        let before = self.solution.items.len();
        for &a in &received {
            if self.solution.items.len() >= self.k_prime {
                break;
            }
            let gain = oracle.marginal(&state, a);
            if gain >= tau {
                oracle.insert(&mut state, a);
                self.solution.items.push(a);
                self.solution.records.push(AddRecord {
                    item: a,
                    iteration: j,
                    step: t,
                    marginal: gain,
                });
            }
        }
        self.covered = state;
        self.trace.push(StepTrace {
            iteration: j,
            step: t,
            tau,
            q: sample_rate(self.k_prime, self.system.m(), t, self.s),
            candidates: cand,
            received,
        });
        if self.solution.items.len() >= self.k_prime || round + 1 == 2 * self.ell * self.s {
            return Step::Finish(());
        }
        for &a in &self.solution.items[before..] {
            wire.add(WireSize::item(Some(self.residual_len(a, &self.side_cover))));
        }
        Step::Continue(LowCommBroadcast {
            solution: self.solution.items.clone(),
            side: self.side.clone(),
            wire,
        })
    }
}

/// Number of side samples per step, `⌈ε·k/2r⌉`.
pub fn side_samples_per_step(k: usize, eps: f64, rounds: usize) -> usize {
    (eps * k as f64 / (2.0 * rounds as f64)).ceil() as usize
}

pub fn sp_greedy_lowcomm_with<S: StepSampler>(
    instance: &PartitionedInstance,
    params: &SpGreedyParams,
    sampler: &S,
    seed: u64,
    opts: RunOptions,
) -> Result<LowCommRun> {
    params.validate()?;
    let opt_guess = params
        .opt_guess
        .ok_or_else(|| Error::input("sp_greedy_lowcomm needs an opt guess"))?;
    let system = instance.system();
    let k_prime = (((1.0 - params.eps) * params.k as f64).floor() as usize).max(1).min(params.k);
    let mut proto = LowCommProtocol {
        system,
        sampler,
        params,
        opt_guess,
        seed,
        k_prime,
        side_budget: params.k - k_prime,
        per_step_side: side_samples_per_step(params.k, params.eps, params.rounds),
        ell: params.iterations(),
        s: params.steps(),
        side: Vec::new(),
        side_cover: ElementSet::empty(system.n()),
        solution: PartialSolution::default(),
        covered: ElementSet::empty(system.n()),
        side_per_step: Vec::new(),
        trace: Vec::new(),
    };
    if params.k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    let ((), transcript) = run_protocol(instance, &mut proto, seed, opts)?;
    let mut indices = proto.side.clone();
    indices.extend(&proto.solution.items);
    let cover = Cover::new(system, indices)?;
    Ok(LowCommRun {
        cover,
        side: proto.side,
        solution: proto.solution,
        side_per_step: proto.side_per_step,
        k_prime,
        trace: proto.trace,
        transcript,
    })
}

pub fn sp_greedy_lowcomm(
    instance: &PartitionedInstance,
    params: &SpGreedyParams,
    seed: u64,
) -> Result<LowCommRun> {
    sp_greedy_lowcomm_with(instance, params, &Bernoulli, seed, RunOptions::default())
}

/// Low-communication variant with the guess swept over `[Δ, k·Δ]`.
pub fn sp_greedy_lowcomm_auto(
    instance: &PartitionedInstance,
    params: &SpGreedyParams,
    seed: u64,
) -> Result<(LowCommRun, Transcript)> {
    params.validate()?;
    let delta = instance.system().max_set_size() as f64;
    if delta == 0.0 {
        let run = sp_greedy_lowcomm(instance, &params.clone().with_guess(1.0), seed)?;
        let t = run.transcript.clone();
        return Ok((run, t));
    }
    let sweep = guess_opt(delta, params.k as f64 * delta, |g| {
        let run = sp_greedy_lowcomm(instance, &params.clone().with_guess(g), seed)?;
        let v = run.cover.value as f64;
        Ok((run, v))
    })?;
    let total = Transcript::sum(sweep.results.iter().map(|r| &r.transcript));
    Ok((sweep.into_best(), total))
}
