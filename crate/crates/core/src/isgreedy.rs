//! Iterative sketching greedy for maximum coverage.
//!
//! Each round, every machine greedily sketches its sets against its current
//! target universe: a set contributes its new elements when at least `τ` of
//! them are still uncovered by the sketch. The coordinator folds the
//! residuals into a growing collection X, accepting a residual when at least
//! a `1/k^{1/(r+1)}` fraction of it is new, and sends back c(X). Machines
//! shrink their universe to what their sketch covered minus c(X). The answer
//! is a greedy k-cover over every residual received.

use serde::Serialize;

use crate::bitset::ElementSet;
use crate::coverage::{greedy_cover, id_bits, Cover, CoverageOracle, SetSystem};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sim::{
    run_protocol, Blackboard, MachineCtx, PartitionedInstance, Protocol, RunOptions, Step,
    Transcript, Wire, WireSize,
};
use crate::spgreedy::guess_opt;

/// Residual contributions of one machine in one round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sketch {
    pub residuals: Vec<ElementSet>,
    /// Originating set index of each residual.
    pub source: Vec<usize>,
}

impl Sketch {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// c(C): union of all residuals.
    pub fn covered(&self, n: usize) -> ElementSet {
        let mut c = ElementSet::empty(n);
        for r in &self.residuals {
            c.union_with(r);
        }
        c
    }

    pub fn mass(&self) -> usize {
        self.residuals.iter().map(ElementSet::count).sum()
    }

    /// Pairwise disjoint, each residual at least `tau`, all inside `universe`.
    pub fn check(&self, universe: &ElementSet, tau: f64) -> Result<()> {
        let mut seen = ElementSet::empty(universe.universe());
        for (r, &src) in self.residuals.iter().zip(&self.source) {
            if (r.count() as f64) < tau {
                return Err(Error::PropertyViolation(format!(
                    "residual of set {src} has {} < tau {tau}",
                    r.count()
                )));
            }
            if !r.is_subset(universe) {
                return Err(Error::PropertyViolation(format!("residual of set {src} leaves U")));
            }
            if !r.is_disjoint(&seen) {
                return Err(Error::PropertyViolation(format!("residual of set {src} overlaps")));
            }
            seen.union_with(r);
        }
        Ok(())
    }
}

/// One pass over `local` in order, keeping `(S ∩ U) \ c(C)` when it has at
/// least `tau` elements.
pub fn greedy_sketch(universe: &ElementSet, system: &SetSystem, local: &[usize], tau: f64) -> Sketch {
    let mut covered = ElementSet::empty(universe.universe());
    let mut sketch = Sketch::default();
    for &i in local {
        let s = system.set(i);
        if (s.count_within_minus(universe, &covered) as f64) < tau {
            continue;
        }
        let mut r = s.intersection(universe);
        r.difference_with(&covered);
        covered.union_with(&r);
        sketch.residuals.push(r);
        sketch.source.push(i);
    }
    sketch
}

/// Coordinator-side record: accepted residuals, their union and the pool.
#[derive(Clone, Debug)]
pub struct CoordinatorState {
    /// Indices into `pool` of accepted residuals, in acceptance order.
    pub accepted: Vec<usize>,
    pub covered: ElementSet,
    pub pool: Vec<ElementSet>,
    pub pool_source: Vec<usize>,
}

impl CoordinatorState {
    fn new(n: usize) -> Self {
        CoordinatorState {
            accepted: Vec::new(),
            covered: ElementSet::empty(n),
            pool: Vec::new(),
            pool_source: Vec::new(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let mut u = ElementSet::empty(self.covered.universe());
        for &a in &self.accepted {
            let Some(r) = self.pool.get(a) else {
                return Err(Error::PropertyViolation("accepted residual missing from pool".into()));
            };
            u.union_with(r);
        }
        if u != self.covered {
            return Err(Error::PropertyViolation("c(X) differs from union of X".into()));
        }
        Ok(())
    }
}

/// Per machine, per round sizes used by the nesting and shrinkage checks.
#[derive(Clone, Debug, Serialize)]
pub struct MachineRound {
    pub machine: usize,
    pub universe_before: usize,
    pub sketch_sets: usize,
    pub sketch_cover: usize,
    pub universe_after: usize,
    /// c(C) ⊆ U before and U after ⊆ c(C).
    pub nested: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundDiag {
    pub round: usize,
    pub machines: Vec<MachineRound>,
    /// Machine processing order used by the coordinator.
    pub order: Vec<usize>,
    pub accepted_after: usize,
}

#[derive(Clone, Debug)]
pub struct IsGreedyRun {
    pub k: usize,
    pub cover: Cover,
    /// Pool indices chosen by the final greedy.
    pub residual_choice: Vec<usize>,
    pub residual_value: usize,
    pub tau: f64,
    pub fraction: f64,
    pub state: CoordinatorState,
    pub rounds: Vec<RoundDiag>,
    pub transcript: Transcript,
}

impl IsGreedyRun {
    /// Checks nesting, shrinkage and the coordinator state on every round.
    pub fn check_invariants(&self) -> Result<()> {
        self.state.check()?;
        for rd in &self.rounds {
            for mr in &rd.machines {
                if !mr.nested {
                    return Err(Error::PropertyViolation(format!(
                        "nesting broken at round {} machine {}",
                        rd.round, mr.machine
                    )));
                }
                if mr.universe_after as f64 > mr.sketch_cover as f64 * self.fraction + 1e-9 {
                    return Err(Error::PropertyViolation(format!(
                        "no shrinkage at round {} machine {}: {} > {}·{}",
                        rd.round, mr.machine, mr.universe_after, self.fraction, mr.sketch_cover
                    )));
                }
            }
        }
        // The first machine processed in a round has all residuals inside
        // the uncovered part, so a sketch of k or more residuals pushes X to k.
        for rd in &self.rounds {
            if let Some(&first) = rd.order.first() {
                if rd.machines[first].sketch_sets >= self.k && rd.accepted_after < self.k {
                    return Err(Error::PropertyViolation(format!(
                        "large sketch at round {} left |X| = {}",
                        rd.round, rd.accepted_after
                    )));
                }
            }
        }
        if self.state.accepted.len() >= self.k {
            let first: usize = {
                let mut u = ElementSet::empty(self.state.covered.universe());
                for &a in self.state.accepted.iter().take(self.k) {
                    u.union_with(&self.state.pool[a]);
                }
                u.count()
            };
            let need = self.k as f64 * self.tau * self.fraction;
            if (first as f64) + 1e-9 < need {
                return Err(Error::PropertyViolation(format!(
                    "first k accepted residuals cover {first} < {need}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SketchMessage {
    pub residuals: Vec<(usize, ElementSet)>,
    pub wire: WireSize,
}

impl Wire for SketchMessage {
    fn wire_size(&self) -> WireSize {
        self.wire
    }
}

#[derive(Clone, Debug)]
pub struct CoveredBroadcast {
    pub covered: ElementSet,
    pub wire: WireSize,
}

impl Wire for CoveredBroadcast {
    fn wire_size(&self) -> WireSize {
        self.wire
    }
}

pub struct MachineView {
    universe: ElementSet,
    last_cover: Option<ElementSet>,
}

struct IsProtocol<'a> {
    system: &'a SetSystem,
    rounds: usize,
    tau: f64,
    fraction: f64,
    state: CoordinatorState,
    universes: Vec<ElementSet>,
    diags: Vec<RoundDiag>,
}

impl Protocol for IsProtocol<'_> {
    type MachineState = MachineView;
    type Message = SketchMessage;
    type Broadcast = CoveredBroadcast;
    type Answer = ();

    fn round_budget(&self) -> usize {
        self.rounds
    }

    fn id_bits(&self) -> u32 {
        id_bits(self.system.n())
    }

    fn init_machine(&self, _: usize, _: &[usize]) -> MachineView {
        MachineView {
            universe: ElementSet::full(self.system.n()),
            last_cover: None,
        }
    }

    fn machine_step(
        &self,
        ctx: &MachineCtx<'_, SketchMessage, CoveredBroadcast>,
        view: &mut MachineView,
        _: &mut Rng,
    ) -> SketchMessage {
        if let (Some(c), Some(b)) = (view.last_cover.take(), ctx.board.last_broadcast()) {
            view.universe = c.difference(&b.covered);
        }
        let sketch = greedy_sketch(&view.universe, self.system, ctx.local, self.tau);
        view.last_cover = Some(sketch.covered(self.system.n()));
        let mut wire = WireSize::default();
        for r in &sketch.residuals {
            wire.add(WireSize::item(Some(r.count())));
        }
        SketchMessage {
            residuals: sketch.source.into_iter().zip(sketch.residuals).collect(),
            wire,
        }
    }

    fn coordinator_step(
        &mut self,
        round: usize,
        board: &Blackboard<SketchMessage, CoveredBroadcast>,
    ) -> Step<CoveredBroadcast, ()> {
        let n = self.system.n();
        let msgs = &board.messages[round];
        let covers: Vec<ElementSet> = msgs
            .iter()
            .map(|m| {
                let mut c = ElementSet::empty(n);
                for (_, r) in &m.residuals {
                    c.union_with(r);
                }
                c
            })
            .collect();
        let mut order: Vec<usize> = (0..msgs.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(covers[i].count()), i));

        let before = self.state.covered.clone();
        for &i in &order {
            for (src, r) in &msgs[i].residuals {
                let idx = self.state.pool.len();
                self.state.pool.push(r.clone());
                self.state.pool_source.push(*src);
                let fresh = r.count_difference(&self.state.covered);
                if fresh as f64 >= self.fraction * r.count() as f64 {
                    self.state.covered.union_with(r);
                    self.state.accepted.push(idx);
                }
            }
        }

        let mut machines = Vec::with_capacity(msgs.len());
        for (i, c) in covers.iter().enumerate() {
            let after = c.difference(&self.state.covered);
            let nested = c.is_subset(&self.universes[i]) && after.is_subset(c);
            machines.push(MachineRound {
                machine: i,
                universe_before: self.universes[i].count(),
                sketch_sets: msgs[i].residuals.len(),
                sketch_cover: c.count(),
                universe_after: after.count(),
                nested,
            });
            self.universes[i] = after;
        }
        self.diags.push(RoundDiag {
            round,
            machines,
            order,
            accepted_after: self.state.accepted.len(),
        });

        if round + 1 == self.rounds {
            return Step::Finish(());
        }
        let delta = self.state.covered.count_difference(&before);
        Step::Continue(CoveredBroadcast {
            covered: self.state.covered.clone(),
            wire: WireSize::elements(delta),
        })
    }
}

/// `1/k^{1/(r+1)}`.
pub fn acceptance_fraction(k: usize, rounds: usize) -> f64 {
    (k as f64).powf(-1.0 / (rounds as f64 + 1.0))
}

/// `max(1, opt~/(4r·k))`.
pub fn sketch_threshold(opt_guess: f64, k: usize, rounds: usize) -> f64 {
    (opt_guess / (4.0 * rounds as f64 * k as f64)).max(1.0)
}

pub fn is_greedy(
    instance: &PartitionedInstance,
    k: usize,
    rounds: usize,
    opt_guess: f64,
    seed: u64,
) -> Result<IsGreedyRun> {
    is_greedy_with(instance, k, rounds, opt_guess, seed, RunOptions::default())
}

pub fn is_greedy_with(
    instance: &PartitionedInstance,
    k: usize,
    rounds: usize,
    opt_guess: f64,
    seed: u64,
    opts: RunOptions,
) -> Result<IsGreedyRun> {
    if rounds < 1 {
        return Err(Error::input("round budget r must be at least 1"));
    }
    if k < 1 {
        return Err(Error::input("k must be at least 1"));
    }
    if !(opt_guess > 0.0) {
        return Err(Error::input("opt guess must be positive"));
    }
    let system = instance.system();
    let n = system.n();
    let tau = sketch_threshold(opt_guess, k, rounds);
    let fraction = acceptance_fraction(k, rounds);
    let mut proto = IsProtocol {
        system,
        rounds,
        tau,
        fraction,
        state: CoordinatorState::new(n),
        universes: vec![ElementSet::full(n); instance.p()],
        diags: Vec::new(),
    };
    let ((), transcript) = run_protocol(instance, &mut proto, seed, opts)?;

    let state = proto.state;
    let pool = SetSystem::from_sets(n, state.pool.clone())?;
    let residual_choice = greedy_cover(&CoverageOracle::new(&pool), k);
    let residual_value = pool.union_of(&residual_choice).count();
    let mut indices: Vec<usize> = Vec::new();
    for &c in &residual_choice {
        let src = state.pool_source[c];
        if !indices.contains(&src) {
            indices.push(src);
        }
    }
    let cover = Cover::new(system, indices)?;
    Ok(IsGreedyRun {
        cover,
        residual_choice,
        residual_value,
        tau,
        fraction,
        state,
        rounds: proto.diags,
        transcript,
        k,
    })
}

/// Sweeps `opt~` over powers of two from 1 up to `n` and keeps the best
/// cover. The transcript sums all guesses.
pub fn isgreedy_with_guess(
    instance: &PartitionedInstance,
    k: usize,
    rounds: usize,
    seed: u64,
) -> Result<(IsGreedyRun, Transcript)> {
    let n = instance.system().n().max(1) as f64;
    let sweep = guess_opt(1.0, n, |g| {
        let run = is_greedy(instance, k, rounds, g, seed)?;
        let v = run.cover.value as f64;
        Ok((run, v))
    })?;
    let total = Transcript::sum(sweep.results.iter().map(|r| &r.transcript));
    Ok((sweep.into_best(), total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::random_system;
    use crate::sim::{partition, PartitionMode};

    fn reference_sketch(universe: &[usize], sets: &[Vec<usize>], tau: usize) -> Vec<Vec<usize>> {
        let mut taken: Vec<usize> = Vec::new();
        let mut out = Vec::new();
        for s in sets {
            let fresh: Vec<usize> = s
                .iter()
                .copied()
                .filter(|e| universe.contains(e) && !taken.contains(e))
                .collect();
            if fresh.len() >= tau {
                taken.extend(&fresh);
                out.push(fresh);
            }
        }
        out
    }

    #[test]
    fn sketch_order_examples() {
        let a: Vec<usize> = (0..10).collect();
        let b: Vec<usize> = (5..15).collect();
        let sys = SetSystem::new(15, vec![a.clone(), b.clone()]).unwrap();
        let u = ElementSet::full(15);
        let fwd = greedy_sketch(&u, &sys, &[0, 1], 5.0);
        let got: Vec<Vec<usize>> = fwd.residuals.iter().map(|r| r.to_vec()).collect();
        assert_eq!(got, vec![(0..10).collect::<Vec<_>>(), (10..15).collect()]);
        assert_eq!(got, reference_sketch(&(0..15).collect::<Vec<_>>(), &[a.clone(), b.clone()], 5));
        let rev = greedy_sketch(&u, &sys, &[1, 0], 5.0);
        let got: Vec<Vec<usize>> = rev.residuals.iter().map(|r| r.to_vec()).collect();
        assert_eq!(got, vec![(5..15).collect::<Vec<_>>(), (0..5).collect()]);
        assert_eq!(rev.source, vec![1, 0]);
    }

    #[test]
    fn sketch_trivial_cases() {
        let sys = SetSystem::new(8, vec![vec![1, 2, 3, 4]]).unwrap();
        let u = ElementSet::full(8);
        let s = greedy_sketch(&u, &sys, &[0], 3.0);
        assert_eq!(s.residuals[0].to_vec(), vec![1, 2, 3, 4]);
        assert!(greedy_sketch(&u, &sys, &[0], 9.0).is_empty());
    }

    #[test]
    fn sketch_matches_reference_on_random_inputs() {
        for seed in 0..40 {
            let sys = random_system(30, 12, 0.3, seed);
            let mut r = crate::rng::rng(seed, &[9]);
            use rand::Rng as _;
            let uni: Vec<usize> = (0..30).filter(|_| r.gen_bool(0.6)).collect();
            let u = ElementSet::from_elements(30, uni.iter().copied());
            let tau = 1 + (seed as usize % 4);
            let sets: Vec<Vec<usize>> = sys.sets().iter().map(|s| s.to_vec()).collect();
            let got = greedy_sketch(&u, &sys, &(0..12).collect::<Vec<_>>(), tau as f64);
            got.check(&u, tau as f64).unwrap();
            assert!(got.mass() <= u.count());
            let want = reference_sketch(&uni, &sets, tau);
            let got: Vec<Vec<usize>> = got.residuals.iter().map(|r| r.to_vec()).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn exponent_arithmetic() {
        assert!((acceptance_fraction(16, 1) - 0.25).abs() < 1e-12);
        assert_eq!(sketch_threshold(0.5, 3, 2), 1.0);
        assert_eq!(sketch_threshold(96.0, 3, 2), 4.0);
    }

    #[test]
    fn disjoint_sets_single_round() {
        let sets: Vec<Vec<usize>> = (0..4).map(|i| (i * 5..i * 5 + 5).collect()).collect();
        let sys = SetSystem::new(20, sets).unwrap();
        let inst = partition(sys, 1, PartitionMode::RoundRobin).unwrap();
        let run = is_greedy(&inst, 4, 1, 20.0, 0).unwrap();
        assert_eq!(run.cover.value, 20);
        run.check_invariants().unwrap();
    }

    #[test]
    fn errors() {
        let sys = random_system(10, 4, 0.4, 1);
        let inst = partition(sys, 2, PartitionMode::RoundRobin).unwrap();
        assert!(matches!(is_greedy(&inst, 0, 1, 4.0, 0), Err(Error::Input(_))));
        assert!(matches!(is_greedy(&inst, 2, 0, 4.0, 0), Err(Error::Input(_))));
    }

    #[test]
    fn invariants_on_random_runs() {
        for seed in 0..20 {
            let sys = random_system(50, 30, 0.15, seed);
            let inst = partition(sys, 3, PartitionMode::Random(seed)).unwrap();
            for r in 1..=3 {
                let run = is_greedy(&inst, 4, r, 20.0, seed).unwrap();
                run.check_invariants().unwrap();
                assert_eq!(run.transcript.rounds_used, r);
                assert!(run.cover.indices.len() <= 4);
            }
        }
    }
}
