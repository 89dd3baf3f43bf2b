//! Synchronous coordinator-model simulator.
//!
//! `p` machines each hold a share of the input. In every round all machines
//! write a message to a shared blackboard at once, reading only their own
//! state and what the blackboard held before the round started. The
//! coordinator then reads the round's messages and either broadcasts back
//! or outputs the answer. Every message is costed in items and bits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{greedy_cover, Cover, CoverageOracle, SetSystem};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionMode {
    RoundRobin,
    Random(u64),
    /// Every set on machine 0.
    AdversarialSingle,
}

/// A set system whose sets are split among `p` machines.
#[derive(Clone, Debug)]
pub struct PartitionedInstance {
    system: SetSystem,
    owner: Vec<usize>,
    p: usize,
}

impl PartitionedInstance {
    pub fn new(system: SetSystem, owner: Vec<usize>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::input("machine count p must be at least 1"));
        }
        if owner.len() != system.m() {
            return Err(Error::input(format!(
                "owner list has {} entries for {} sets",
                owner.len(),
                system.m()
            )));
        }
        if let Some(&bad) = owner.iter().find(|&&o| o >= p) {
            return Err(Error::input(format!("owner {bad} not below p = {p}")));
        }
        Ok(PartitionedInstance { system, owner, p })
    }

    pub fn system(&self) -> &SetSystem {
        &self.system
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// Set indices held by `machine`, in input order.
    pub fn local(&self, machine: usize) -> Vec<usize> {
        (0..self.owner.len())
            .filter(|&i| self.owner[i] == machine)
            .collect()
    }

    pub fn locals(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.p];
        for (i, &o) in self.owner.iter().enumerate() {
            out[o].push(i);
        }
        out
    }
}

pub fn partition(system: SetSystem, p: usize, mode: PartitionMode) -> Result<PartitionedInstance> {
    if p == 0 {
        return Err(Error::input("machine count p must be at least 1"));
    }
    let m = system.m();
    let owner = match mode {
        PartitionMode::RoundRobin => (0..m).map(|i| i % p).collect(),
        PartitionMode::AdversarialSingle => vec![0; m],
        PartitionMode::Random(seed) => {
            use rand::Rng as _;
            let mut r = rng::rng(seed, &[0x9a, p as u64]);
            (0..m).map(|_| r.gen_range(0..p)).collect()
        }
    };
    PartitionedInstance::new(system, owner, p)
}

/// Size of one message on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSize {
    /// Ground-set items carried (sets, for coverage).
    pub items: u64,
    /// Bare ids (element or item ids).
    pub ids: u64,
    /// Number of set payloads; each costs one size header.
    pub set_payloads: u64,
    /// Total elements across set payloads.
    pub payload_elements: u64,
}

impl WireSize {
    /// `t·w + Σ_S (|S|·w + w)` with `w = id_bits`.
    pub fn bits(&self, id_bits: u32) -> u64 {
        (self.ids + self.payload_elements + self.set_payloads) * id_bits as u64
    }

    pub fn add(&mut self, other: WireSize) {
        self.items += other.items;
        self.ids += other.ids;
        self.set_payloads += other.set_payloads;
        self.payload_elements += other.payload_elements;
    }

    /// One item shipped either as a bare id or as a set payload of `len`.
    pub fn item(payload: Option<usize>) -> WireSize {
        match payload {
            Some(len) => WireSize {
                items: 1,
                ids: 0,
                set_payloads: 1,
                payload_elements: len as u64,
            },
            None => WireSize {
                items: 1,
                ids: 1,
                ..WireSize::default()
            },
        }
    }

    /// A bare set of `len` element ids (no item, no header).
    pub fn elements(len: usize) -> WireSize {
        WireSize {
            ids: len as u64,
            ..WireSize::default()
        }
    }
}

pub trait Wire {
    fn wire_size(&self) -> WireSize;
}

impl Wire for () {
    fn wire_size(&self) -> WireSize {
        WireSize::default()
    }
}

/// Everything written so far: `messages[r][i]` is machine `i`'s message in
/// round `r`, `broadcasts[r]` the coordinator's reply to round `r`.
#[derive(Debug)]
pub struct Blackboard<M, B> {
    pub messages: Vec<Vec<M>>,
    pub broadcasts: Vec<B>,
}

impl<M, B> Blackboard<M, B> {
    pub fn last_broadcast(&self) -> Option<&B> {
        self.broadcasts.last()
    }
}

/// What a machine can see when composing its message.
pub struct MachineCtx<'a, M, B> {
    pub machine: usize,
    pub round: usize,
    pub local: &'a [usize],
    pub board: &'a Blackboard<M, B>,
    /// Shared seed every machine and the coordinator know.
    pub public_seed: u64,
}

pub enum Step<B, A> {
    Continue(B),
    Finish(A),
}

/// A protocol in the coordinator model. Machine steps take `&self` and only
/// their own state, so one machine can never influence another machine's
/// message within a round.
pub trait Protocol: Sync {
    type MachineState: Send;
    type Message: Wire + Send + Sync;
    type Broadcast: Wire + Send + Sync;
    type Answer;

    fn round_budget(&self) -> usize;

    /// Bit width of one id on the wire.
    fn id_bits(&self) -> u32;

    fn init_machine(&self, machine: usize, local: &[usize]) -> Self::MachineState;

    fn machine_step(
        &self,
        ctx: &MachineCtx<'_, Self::Message, Self::Broadcast>,
        state: &mut Self::MachineState,
        rng: &mut Rng,
    ) -> Self::Message;

    /// Reads round `round` (already on the board) and decides what to do next.
    fn coordinator_step(
        &mut self,
        round: usize,
        board: &Blackboard<Self::Message, Self::Broadcast>,
    ) -> Step<Self::Broadcast, Self::Answer>;
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub machine_items: Vec<u64>,
    pub machine_bits: Vec<u64>,
    pub broadcast_items: u64,
    pub broadcast_bits: u64,
}

/// Message log of one run with its cost totals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub rounds: Vec<RoundRecord>,
    pub per_machine_bits: Vec<u64>,
    pub per_machine_items: Vec<u64>,
    pub total_bits: u64,
    pub total_items: u64,
    pub rounds_used: usize,
    /// Whether coordinator broadcasts count toward the totals.
    pub broadcasts_charged: bool,
}

impl Transcript {
    pub fn new(p: usize, broadcasts_charged: bool) -> Self {
        Transcript {
            per_machine_bits: vec![0; p],
            per_machine_items: vec![0; p],
            broadcasts_charged,
            ..Transcript::default()
        }
    }

    fn push(&mut self, record: RoundRecord) {
        for (i, (&b, &it)) in record
            .machine_bits
            .iter()
            .zip(&record.machine_items)
            .enumerate()
        {
            self.per_machine_bits[i] += b;
            self.per_machine_items[i] += it;
            self.total_bits += b;
            self.total_items += it;
        }
        self.rounds.push(record);
        self.rounds_used = self.rounds.len();
    }

    fn set_broadcast(&mut self, items: u64, bits: u64) {
        let rec = self.rounds.last_mut().expect("broadcast follows a round");
        rec.broadcast_items = items;
        rec.broadcast_bits = bits;
        if self.broadcasts_charged {
            self.total_bits += bits;
            self.total_items += items;
        }
    }

    /// Largest cumulative cost of any single machine.
    pub fn per_player_bits(&self) -> u64 {
        self.per_machine_bits.iter().copied().max().unwrap_or(0)
    }

    /// Recomputes every total from the round records.
    pub fn check_consistency(&self) -> Result<()> {
        let p = self.per_machine_bits.len();
        let mut bits = vec![0u64; p];
        let mut items = vec![0u64; p];
        let (mut tb, mut ti) = (0u64, 0u64);
        for r in &self.rounds {
            if r.machine_bits.len() != p || r.machine_items.len() != p {
                return Err(Error::PropertyViolation("round record width differs from p".into()));
            }
            for i in 0..p {
                bits[i] += r.machine_bits[i];
                items[i] += r.machine_items[i];
            }
            tb += r.machine_bits.iter().sum::<u64>();
            ti += r.machine_items.iter().sum::<u64>();
            if self.broadcasts_charged {
                tb += r.broadcast_bits;
                ti += r.broadcast_items;
            }
        }
        if bits != self.per_machine_bits
            || items != self.per_machine_items
            || tb != self.total_bits
            || ti != self.total_items
            || self.rounds_used != self.rounds.len()
        {
            return Err(Error::PropertyViolation("transcript totals disagree with rounds".into()));
        }
        Ok(())
    }

    /// Costs of several runs that share rounds: per-round records are added
    /// position-wise and the round count is the longest run.
    pub fn sum<'a, I: IntoIterator<Item = &'a Transcript>>(parts: I) -> Transcript {
        let mut out: Option<Transcript> = None;
        for t in parts {
            let acc = out.get_or_insert_with(|| {
                Transcript::new(t.per_machine_bits.len(), t.broadcasts_charged)
            });
            for (idx, r) in t.rounds.iter().enumerate() {
                if acc.rounds.len() <= idx {
                    acc.rounds.push(RoundRecord {
                        machine_items: vec![0; r.machine_items.len()],
                        machine_bits: vec![0; r.machine_bits.len()],
                        ..RoundRecord::default()
                    });
                }
                let a = &mut acc.rounds[idx];
                for i in 0..r.machine_bits.len() {
                    a.machine_bits[i] += r.machine_bits[i];
                    a.machine_items[i] += r.machine_items[i];
                }
                a.broadcast_bits += r.broadcast_bits;
                a.broadcast_items += r.broadcast_items;
            }
            for i in 0..t.per_machine_bits.len() {
                acc.per_machine_bits[i] += t.per_machine_bits[i];
                acc.per_machine_items[i] += t.per_machine_items[i];
            }
            acc.total_bits += t.total_bits;
            acc.total_items += t.total_items;
            acc.rounds_used = acc.rounds.len();
        }
        out.unwrap_or_default()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Transcript> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Charge coordinator broadcasts to the totals.
    pub charge_broadcasts: bool,
}

/// Private randomness of `machine` in `round`.
pub fn machine_rng(seed: u64, machine: usize, round: usize) -> Rng {
    rng::rng(seed, &[0x6d, machine as u64, round as u64])
}

/// Runs `protocol` to completion on `instance`.
pub fn run_protocol<P: Protocol>(
    instance: &PartitionedInstance,
    protocol: &mut P,
    seed: u64,
    opts: RunOptions,
) -> Result<(P::Answer, Transcript)> {
    let budget = protocol.round_budget();
    if budget == 0 {
        return Err(Error::input("protocol round budget must be at least 1"));
    }
    let p = instance.p();
    let locals = instance.locals();
    let id_bits = protocol.id_bits();
    let mut states: Vec<P::MachineState> = locals
        .iter()
        .enumerate()
        .map(|(i, l)| protocol.init_machine(i, l))
        .collect();
    let mut board = Blackboard {
        messages: Vec::new(),
        broadcasts: Vec::new(),
    };
    let mut transcript = Transcript::new(p, opts.charge_broadcasts);

    for round in 0..budget {
        let messages: Vec<P::Message> = {
            let proto: &P = protocol;
            let board_ref = &board;
            states
                .par_iter_mut()
                .enumerate()
                .map(|(machine, state)| {
                    let ctx = MachineCtx {
                        machine,
                        round,
                        local: &locals[machine],
                        board: board_ref,
                        public_seed: seed,
                    };
                    let mut r = machine_rng(seed, machine, round);
                    proto.machine_step(&ctx, state, &mut r)
                })
                .collect()
        };
        let sizes: Vec<WireSize> = messages.iter().map(Wire::wire_size).collect();
        transcript.push(RoundRecord {
            machine_items: sizes.iter().map(|s| s.items).collect(),
            machine_bits: sizes.iter().map(|s| s.bits(id_bits)).collect(),
            broadcast_items: 0,
            broadcast_bits: 0,
        });
        board.messages.push(messages);

        match protocol.coordinator_step(round, &board) {
            Step::Finish(answer) => return Ok((answer, transcript)),
            Step::Continue(b) => {
                let w = b.wire_size();
                transcript.set_broadcast(w.items, w.bits(id_bits));
                board.broadcasts.push(b);
            }
        }
    }
    Err(Error::RoundBudget {
        budget,
        partial: Box::new(transcript),
    })
}

/// A list of sets shipped whole, with their indices.
#[derive(Clone, Debug, Default)]
pub struct SetBatch {
    pub indices: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl Wire for SetBatch {
    fn wire_size(&self) -> WireSize {
        let mut w = WireSize::default();
        for &s in &self.sizes {
            w.add(WireSize::item(Some(s)));
        }
        w
    }
}

/// Baseline: every machine ships its whole input in round one and the
/// coordinator runs centralized greedy.
pub struct SendAll<'a> {
    pub system: &'a SetSystem,
    pub k: usize,
}

impl Protocol for SendAll<'_> {
    type MachineState = ();
    type Message = SetBatch;
    type Broadcast = ();
    type Answer = Cover;

    fn round_budget(&self) -> usize {
        1
    }

    fn id_bits(&self) -> u32 {
        crate::coverage::id_bits(self.system.n())
    }

    fn init_machine(&self, _machine: usize, _local: &[usize]) {}

    fn machine_step(&self, ctx: &MachineCtx<'_, SetBatch, ()>, _: &mut (), _: &mut Rng) -> SetBatch {
        SetBatch {
            indices: ctx.local.to_vec(),
            sizes: ctx.local.iter().map(|&i| self.system.set(i).count()).collect(),
        }
    }

    fn coordinator_step(&mut self, round: usize, board: &Blackboard<SetBatch, ()>) -> Step<(), Cover> {
        let mut received: Vec<usize> = board.messages[round]
            .iter()
            .flat_map(|b| b.indices.iter().copied())
            .collect();
        received.sort_unstable();
        let sub = SetSystem::from_sets(
            self.system.n(),
            received.iter().map(|&i| self.system.set(i).clone()).collect(),
        )
        .expect("same universe");
        let picked: Vec<usize> = greedy_cover(&CoverageOracle::new(&sub), self.k)
            .into_iter()
            .map(|j| received[j])
            .collect();
        let value = self.system.union_of(&picked).count();
        Step::Finish(Cover {
            indices: picked,
            value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::random_system;

    #[test]
    fn partition_modes() {
        let s = random_system(10, 10, 0.3, 1);
        let rr = partition(s.clone(), 3, PartitionMode::RoundRobin).unwrap();
        assert_eq!(rr.owner(), &[0, 1, 2, 0, 1, 2, 0, 1, 2, 0]);
        for mode in [
            PartitionMode::RoundRobin,
            PartitionMode::Random(5),
            PartitionMode::AdversarialSingle,
        ] {
            let one = partition(s.clone(), 1, mode).unwrap();
            assert!(one.owner().iter().all(|&o| o == 0));
        }
        let adv = partition(s.clone(), 4, PartitionMode::AdversarialSingle).unwrap();
        assert_eq!(adv.local(0).len(), 10);
        assert!(partition(s, 0, PartitionMode::RoundRobin).is_err());
    }

    #[test]
    fn locals_cover_every_set_once() {
        let s = random_system(10, 37, 0.3, 2);
        let inst = partition(s, 5, PartitionMode::Random(9)).unwrap();
        let mut all: Vec<usize> = inst.locals().concat();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn random_partition_concentrates() {
        // m = 100, p = 4: each machine's load is Binomial(100, 1/4), sd = 4.33.
        let s = random_system(5, 100, 0.3, 3);
        let sd = (100.0f64 * 0.25 * 0.75).sqrt();
        for seed in 0..100 {
            let inst = partition(s.clone(), 4, PartitionMode::Random(seed)).unwrap();
            for l in inst.locals() {
                assert!((l.len() as f64 - 25.0).abs() <= 3.0 * sd, "seed {seed}: {}", l.len());
            }
        }
    }

    #[test]
    fn send_all_matches_centralized_greedy() {
        let s = random_system(30, 20, 0.15, 4);
        let inst = partition(s.clone(), 3, PartitionMode::Random(1)).unwrap();
        let mut proto = SendAll { system: &s, k: 4 };
        let (ans, t) = run_protocol(&inst, &mut proto, 7, RunOptions::default()).unwrap();
        let central = greedy_cover(&CoverageOracle::new(&s), 4);
        assert_eq!(ans.indices, central);
        assert_eq!(t.rounds_used, 1);
        assert_eq!(t.total_items, 20);
        let w = crate::coverage::id_bits(30) as u64;
        let expect: u64 = (0..20).map(|i| (s.set(i).count() as u64 + 1) * w).sum();
        assert_eq!(t.total_bits, expect);
        t.check_consistency().unwrap();
    }

    struct Forever;

    impl Protocol for Forever {
        type MachineState = ();
        type Message = ();
        type Broadcast = ();
        type Answer = ();
        fn round_budget(&self) -> usize {
            3
        }
        fn id_bits(&self) -> u32 {
            1
        }
        fn init_machine(&self, _: usize, _: &[usize]) {}
        fn machine_step(&self, _: &MachineCtx<'_, (), ()>, _: &mut (), _: &mut Rng) {}
        fn coordinator_step(&mut self, _: usize, _: &Blackboard<(), ()>) -> Step<(), ()> {
            Step::Continue(())
        }
    }

    #[test]
    fn exceeding_round_budget_returns_partial_transcript() {
        let s = random_system(4, 4, 0.5, 0);
        let inst = partition(s, 2, PartitionMode::RoundRobin).unwrap();
        match run_protocol(&inst, &mut Forever, 0, RunOptions::default()) {
            Err(Error::RoundBudget { budget, partial }) => {
                assert_eq!(budget, 3);
                assert_eq!(partial.rounds_used, 3);
            }
            other => panic!("expected budget error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn transcript_json_fields() {
        let s = random_system(8, 6, 0.3, 2);
        let inst = partition(s.clone(), 2, PartitionMode::RoundRobin).unwrap();
        let (_, t) = run_protocol(&inst, &mut SendAll { system: &s, k: 2 }, 1, RunOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        for key in ["rounds", "per_machine_bits", "total_bits", "total_items", "rounds_used"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(Transcript::from_json(&t.to_json().unwrap()).unwrap(), t);
    }

    #[test]
    fn sum_adds_positionwise() {
        let mut a = Transcript::new(2, false);
        a.push(RoundRecord {
            machine_items: vec![1, 2],
            machine_bits: vec![10, 20],
            ..Default::default()
        });
        let mut b = a.clone();
        b.push(RoundRecord {
            machine_items: vec![0, 1],
            machine_bits: vec![0, 5],
            ..Default::default()
        });
        let s = Transcript::sum([&a, &b]);
        assert_eq!(s.rounds_used, 2);
        assert_eq!(s.total_items, 3 + 4);
        assert_eq!(s.per_machine_bits, vec![20, 45]);
        s.check_consistency().unwrap();
    }
}
