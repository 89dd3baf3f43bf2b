//! Set systems, coverage evaluation, and the exact and greedy baselines
//! that the protocols are measured against.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bitset::ElementSet;
use crate::error::{Error, Result};
use crate::rng;

/// Default cap on the number of `k`-subsets `brute_force_opt` may enumerate.
pub const DEFAULT_ENUM_BUDGET: u128 = 10_000_000;

/// A collection of `m` sets over the universe `0..n`. Set order is the
/// input order; duplicates are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetSystem {
    n: usize,
    sets: Vec<ElementSet>,
    labels: Option<Vec<String>>,
}

impl SetSystem {
    /// Builds a system from element lists, rejecting ids `>= n`.
    pub fn new(n: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        let sets = sets
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if let Some(&bad) = s.iter().find(|&&e| e >= n) {
                    return Err(Error::input(format!(
                        "set {i} contains element {bad} outside universe of size {n}"
                    )));
                }
                Ok(ElementSet::from_elements(n, s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SetSystem {
            n,
            sets,
            labels: None,
        })
    }

    pub fn from_sets(n: usize, sets: Vec<ElementSet>) -> Result<Self> {
        if let Some(i) = sets.iter().position(|s| s.universe() != n) {
            return Err(Error::input(format!(
                "set {i} has universe {} but system has {n}",
                sets[i].universe()
            )));
        }
        Ok(SetSystem {
            n,
            sets,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.sets.len() {
            return Err(Error::input("label count differs from set count"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.sets.len()
    }

    #[inline]
    pub fn set(&self, i: usize) -> &ElementSet {
        &self.sets[i]
    }

    pub fn sets(&self) -> &[ElementSet] {
        &self.sets
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn max_set_size(&self) -> usize {
        self.sets.iter().map(ElementSet::count).max().unwrap_or(0)
    }

    /// Union of every set in the system.
    pub fn covered(&self) -> ElementSet {
        let mut u = ElementSet::empty(self.n);
        for s in &self.sets {
            u.union_with(s);
        }
        u
    }

    /// Same sets intersected with `keep`; universe size is unchanged.
    pub fn restrict(&self, keep: &ElementSet) -> SetSystem {
        SetSystem {
            n: self.n,
            sets: self.sets.iter().map(|s| s.intersection(keep)).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn check_indices(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.m()) {
            Some(&i) => Err(Error::input(format!(
                "set index {i} out of range for m = {}",
                self.m()
            ))),
            None => Ok(()),
        }
    }

    /// Union of the referenced sets. Indices must be in range.
    pub fn union_of(&self, indices: &[usize]) -> ElementSet {
        let mut u = ElementSet::empty(self.n);
        for &i in indices {
            u.union_with(&self.sets[i]);
        }
        u
    }

    /// Serializes in the text instance format: a header line `n m k`, then
    /// one line per set with its sorted element ids separated by spaces.
    pub fn to_instance_string(&self, k: usize) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.n, self.m(), k).unwrap();
        for s in &self.sets {
            write_elements(&mut out, s.iter());
            out.push('\n');
        }
        out
    }

    /// Parses the text instance format; returns the system and `k`.
    pub fn parse_instance(text: &str) -> Result<(SetSystem, usize)> {
        let mut lines = text.split_terminator('\n');
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let nums = parse_ids(header, 1)?;
        let [n, m, k] = nums[..] else {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header needs `n m k`, got {header:?}"),
            });
        };
        let mut sets = Vec::with_capacity(m);
        for (idx, line) in lines.by_ref().take(m).enumerate() {
            let lineno = idx + 2;
            let elems = parse_ids(line, lineno)?;
            check_sorted(&elems, n, lineno)?;
            sets.push(ElementSet::from_elements(n, elems));
        }
        if sets.len() != m {
            return Err(Error::Parse {
                line: sets.len() + 2,
                msg: format!("expected {m} set lines, found {}", sets.len()),
            });
        }
        if lines.next().is_some() {
            return Err(Error::Parse {
                line: m + 2,
                msg: "trailing content after last set".into(),
            });
        }
        Ok((SetSystem::from_sets(n, sets)?, k))
    }
}

pub(crate) fn write_elements<I: Iterator<Item = usize>>(out: &mut String, elems: I) {
    for (j, e) in elems.enumerate() {
        if j > 0 {
            out.push(' ');
        }
        write!(out, "{e}").unwrap();
    }
}

pub(crate) fn parse_ids(line: &str, lineno: usize) -> Result<Vec<usize>> {
    if line.is_empty() {
        return Ok(Vec::new());
    }
    line.split(' ')
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad integer {tok:?}"),
            })
        })
        .collect()
}

pub(crate) fn check_sorted(elems: &[usize], n: usize, lineno: usize) -> Result<()> {
    if elems.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parse {
            line: lineno,
            msg: "element ids must be strictly increasing".into(),
        });
    }
    if let Some(&e) = elems.last() {
        if e >= n {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("element {e} outside universe of size {n}"),
            });
        }
    }
    Ok(())
}

/// At most `k` distinct set indices with their cached union size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cover {
    pub indices: Vec<usize>,
    pub value: usize,
}

impl Cover {
    pub fn new(system: &SetSystem, indices: Vec<usize>) -> Result<Self> {
        let value = coverage_value(system, &indices)?;
        Ok(Cover { indices, value })
    }

    /// Checks distinctness, range and that `value` matches a recomputation.
    pub fn validate(&self, system: &SetSystem) -> Result<()> {
        system.check_indices(&self.indices)?;
        let mut sorted = self.indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::PropertyViolation("cover repeats an index".into()));
        }
        let v = system.union_of(&self.indices).count();
        if v != self.value {
            return Err(Error::PropertyViolation(format!(
                "cached cover value {} differs from recomputed {v}",
                self.value
            )));
        }
        Ok(())
    }
}

/// `|∪_{i ∈ indices} S_i|`.
pub fn coverage_value(system: &SetSystem, indices: &[usize]) -> Result<usize> {
    system.check_indices(indices)?;
    Ok(system.union_of(indices).count())
}

/// Exact binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact maximum `k`-cover by enumeration of all `C(m, min(k, m))` index
/// tuples in lexicographic order; the first maximizer wins ties.
pub fn brute_force_opt(system: &SetSystem, k: usize, budget: u128) -> Result<Cover> {
    let m = system.m();
    let k = k.min(m);
    let needed = binomial(m, k);
    if needed > budget {
        return Err(Error::Budget {
            what: "k-subset enumeration",
            needed,
            budget,
        });
    }
    if k == 0 {
        return Ok(Cover {
            indices: Vec::new(),
            value: 0,
        });
    }

    let n = system.n();
    // prefix[d] = union of the first d chosen sets
    let mut prefix: Vec<ElementSet> = (0..=k).map(|_| ElementSet::empty(n)).collect();
    let mut chosen = vec![0usize; k];
    let mut best_val = 0usize;
    let mut best: Option<Vec<usize>> = None;

    // iterative DFS over increasing index tuples
    let mut depth = 0usize;
    let mut next = 0usize;
    loop {
        if depth == k {
            let v = prefix[k].count();
            if best.is_none() || v > best_val {
                best_val = v;
                best = Some(chosen.clone());
            }
            depth -= 1;
            next = chosen[depth] + 1;
            continue;
        }
        if next + (k - depth) > m {
            if depth == 0 {
                break;
            }
            depth -= 1;
            next = chosen[depth] + 1;
            continue;
        }
        chosen[depth] = next;
        let (lo, hi) = prefix.split_at_mut(depth + 1);
        hi[0].clone_from(&lo[depth]);
        hi[0].union_with(system.set(next));
        depth += 1;
        next += 1;
    }

    Ok(Cover {
        indices: best.expect("k >= 1 and m >= k yields at least one tuple"),
        value: best_val,
    })
}

/// A monotone submodular set function over the ground set `0..ground_size`,
/// evaluated incrementally through an opaque state.
pub trait SubmodularOracle: Sync {
    type State: Clone + Send + Sync;

    fn ground_size(&self) -> usize;

    fn empty_state(&self) -> Self::State;

    fn state_value(&self, state: &Self::State) -> f64;

    /// `f(A ∪ {item}) − f(A)` where `A` is the set folded into `state`.
    fn marginal(&self, state: &Self::State, item: usize) -> f64;

    fn insert(&self, state: &mut Self::State, item: usize);

    /// Size of the item's payload when shipped between machines, in
    /// universe element ids. `None` means the item travels as a bare id.
    fn payload_len(&self, _item: usize) -> Option<usize> {
        None
    }

    /// Bit width of one element id in this oracle's universe.
    fn id_bits(&self) -> u32 {
        id_bits(self.ground_size())
    }

    fn state_of(&self, items: &[usize]) -> Self::State {
        let mut st = self.empty_state();
        for &i in items {
            self.insert(&mut st, i);
        }
        st
    }

    fn value(&self, items: &[usize]) -> f64 {
        self.state_value(&self.state_of(items))
    }
}

/// `⌈log2 n⌉`, at least 1.
pub fn id_bits(n: usize) -> u32 {
    if n <= 2 {
        1
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Coverage `f(A) = |∪_{i∈A} S_i \ base|` over a set system.
#[derive(Clone, Debug)]
pub struct CoverageOracle<'a> {
    system: &'a SetSystem,
    base: Option<ElementSet>,
}

impl<'a> CoverageOracle<'a> {
    pub fn new(system: &'a SetSystem) -> Self {
        CoverageOracle { system, base: None }
    }

    /// Coverage of elements not already in `covered`.
    pub fn residual(system: &'a SetSystem, covered: ElementSet) -> Self {
        CoverageOracle {
            system,
            base: Some(covered),
        }
    }

    pub fn system(&self) -> &'a SetSystem {
        self.system
    }
}

impl SubmodularOracle for CoverageOracle<'_> {
    type State = ElementSet;

    fn ground_size(&self) -> usize {
        self.system.m()
    }

    fn empty_state(&self) -> ElementSet {
        self.base
            .clone()
            .unwrap_or_else(|| ElementSet::empty(self.system.n()))
    }

    fn state_value(&self, state: &ElementSet) -> f64 {
        let base = self.base.as_ref().map_or(0, ElementSet::count);
        (state.count() - base) as f64
    }

    fn marginal(&self, state: &ElementSet, item: usize) -> f64 {
        self.system.set(item).count_difference(state) as f64
    }

    fn insert(&self, state: &mut ElementSet, item: usize) {
        state.union_with(self.system.set(item));
    }

    fn payload_len(&self, item: usize) -> Option<usize> {
        Some(self.system.set(item).count())
    }

    fn id_bits(&self) -> u32 {
        id_bits(self.system.n())
    }
}

/// Classic greedy: repeatedly take the item of largest marginal value
/// (smallest index on ties) until `k` items are chosen or nothing adds value.
pub fn greedy_cover<O: SubmodularOracle + ?Sized>(oracle: &O, k: usize) -> Vec<usize> {
    let mut state = oracle.empty_state();
    let mut picked = Vec::with_capacity(k);
    let mut taken = vec![false; oracle.ground_size()];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (i, _) in taken.iter().enumerate().filter(|(_, &t)| !t) {
            let g = oracle.marginal(&state, i);
            if best.map_or(true, |(_, bg)| g > bg) {
                best = Some((i, g));
            }
        }
        match best {
            Some((i, g)) if g > 0.0 => {
                oracle.insert(&mut state, i);
                taken[i] = true;
                picked.push(i);
            }
            _ => break,
        }
    }
    picked
}

/// One failed check from [`oracle_sanity`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub property: &'static str,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub item: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SanityReport {
    pub trials: usize,
    pub violations: Vec<Violation>,
}

impl SanityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<SanityReport> {
        match self.violations.first() {
            None => Ok(self),
            Some(v) => Err(Error::PropertyViolation(format!(
                "{} fails: lhs {} > rhs {} (A={:?}, B={:?}, item={:?})",
                v.property, v.lhs, v.rhs, v.a, v.b, v.item
            ))),
        }
    }
}

const SANITY_TOL: f64 = 1e-9;

/// Randomized check of `f(∅) = 0`, monotonicity, diminishing returns, and the
/// two standard inequalities for monotone submodular functions:
/// `f(B) ≤ f(A) + Σ_{b∈B\A} f_A(b)` and `f_A(B ∪ C) ≤ f_A(B) + f_A(C)`.
pub fn oracle_sanity<O: SubmodularOracle + ?Sized>(
    oracle: &O,
    trials: usize,
    seed: u64,
) -> SanityReport {
    let m = oracle.ground_size();
    let mut rng = rng::rng(seed, &[0x5a]);
    let mut violations = Vec::new();
    let mut check = |property, a: &[usize], b: &[usize], item, lhs: f64, rhs: f64| {
        if lhs > rhs + SANITY_TOL {
            violations.push(Violation {
                property,
                a: a.to_vec(),
                b: b.to_vec(),
                item,
                lhs,
                rhs,
            });
        }
    };

    let empty = oracle.value(&[]);
    check("f(empty) = 0", &[], &[], None, empty.abs(), 0.0);
    if m == 0 {
        return SanityReport { trials, violations };
    }

    let mut ground: Vec<usize> = (0..m).collect();
    for _ in 0..trials {
        ground.shuffle(&mut rng);
        // A ⊆ B: B is a random prefix of a shuffle, A a prefix of B
        let b_len = rng.gen_range(0..=m);
        let a_len = rng.gen_range(0..=b_len);
        let b: Vec<usize> = ground[..b_len].to_vec();
        let a: Vec<usize> = ground[..a_len].to_vec();
        let item = rng.gen_range(0..m);

        let sa = oracle.state_of(&a);
        let sb = oracle.state_of(&b);
        let fa = oracle.state_value(&sa);
        let fb = oracle.state_value(&sb);
        check("monotone", &a, &b, None, fa, fb);
        check(
            "submodular",
            &a,
            &b,
            Some(item),
            oracle.marginal(&sb, item),
            oracle.marginal(&sa, item),
        );

        // independent A', B' for the sum inequality
        let a2: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.3)).collect();
        let b2: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.3)).collect();
        let sa2 = oracle.state_of(&a2);
        let fa2 = oracle.state_value(&sa2);
        let fb2 = oracle.value(&b2);
        let gain_sum: f64 = b2
            .iter()
            .filter(|x| !a2.contains(x))
            .map(|&x| oracle.marginal(&sa2, x))
            .sum();
        check("marginal sum bound", &a2, &b2, None, fb2, fa2 + gain_sum);

        // subadditivity of f_A on B2 ∪ C
        let c: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.3)).collect();
        let mut bc = b2.clone();
        bc.extend(c.iter().copied().filter(|x| !b2.contains(x)));
        let gain = |items: &[usize]| {
            let mut all = a2.clone();
            all.extend_from_slice(items);
            oracle.value(&all) - fa2
        };
        check(
            "marginal subadditive",
            &a2,
            &bc,
            None,
            gain(&bc),
            gain(&b2) + gain(&c),
        );
    }
    SanityReport { trials, violations }
}

/// Uniform random system: each element joins each set independently with
/// probability `density`.
pub fn random_system(n: usize, m: usize, density: f64, seed: u64) -> SetSystem {
    let mut rng = rng::rng(seed, &[0x51]);
    let sets = (0..m)
        .map(|_| ElementSet::from_elements(n, (0..n).filter(|_| rng.gen_bool(density))))
        .collect();
    SetSystem::from_sets(n, sets).expect("generated within universe")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> SetSystem {
        SetSystem::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap()
    }

    #[test]
    fn coverage_examples() {
        let s = small();
        assert_eq!(coverage_value(&s, &[]).unwrap(), 0);
        assert_eq!(coverage_value(&s, &[0, 1]).unwrap(), 3);
        assert!(matches!(coverage_value(&s, &[2]), Err(Error::Input(_))));
    }

    #[test]
    fn coverage_matches_membership_scan() {
        let s = random_system(8, 6, 0.4, 11);
        let idx = [0, 3, 5];
        let scan = (0..8)
            .filter(|&e| idx.iter().any(|&i| s.set(i).contains(e)))
            .count();
        assert_eq!(coverage_value(&s, &idx).unwrap(), scan);
    }

    #[test]
    fn new_rejects_out_of_universe() {
        assert!(SetSystem::new(3, vec![vec![3]]).is_err());
    }

    #[test]
    fn brute_force_trivial_cases() {
        let one = SetSystem::new(4, vec![vec![1, 2]]).unwrap();
        let c = brute_force_opt(&one, 1, DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(c.indices, vec![0]);
        assert_eq!(c.value, 2);

        let s = random_system(10, 5, 0.3, 4);
        let c = brute_force_opt(&s, 9, DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(c.indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.value, s.covered().count());
    }

    #[test]
    fn brute_force_ties_take_lexicographic_first() {
        let s = SetSystem::new(4, vec![vec![0], vec![1], vec![0], vec![1]]).unwrap();
        let c = brute_force_opt(&s, 2, DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(c.indices, vec![0, 1]);
    }

    #[test]
    fn brute_force_refuses_over_budget() {
        let s = random_system(10, 30, 0.2, 1);
        let err = brute_force_opt(&s, 15, 1000).unwrap_err();
        assert!(matches!(err, Error::Budget { needed: 155_117_520, .. }));
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(8, 3), 56);
        assert_eq!(binomial(40, 5), 658_008);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(0, 0), 1);
    }

    #[test]
    fn greedy_examples() {
        let s = SetSystem::new(
            9,
            vec![vec![8], (0..5).collect(), vec![5, 6, 7]],
        )
        .unwrap();
        let o = CoverageOracle::new(&s);
        assert!(greedy_cover(&o, 0).is_empty());
        assert_eq!(greedy_cover(&o, 2), vec![1, 2]);
    }

    #[test]
    fn residual_oracle_ignores_base() {
        let s = small();
        let base = ElementSet::from_elements(3, [1]);
        let o = CoverageOracle::residual(&s, base);
        assert_eq!(o.value(&[]), 0.0);
        assert_eq!(o.value(&[0]), 1.0);
        assert_eq!(o.value(&[0, 1]), 2.0);
    }

    #[test]
    fn instance_format_layout() {
        let s = SetSystem::new(5, vec![vec![0, 4], vec![], vec![2]]).unwrap();
        let text = s.to_instance_string(2);
        assert_eq!(text, "5 3 2\n0 4\n\n2\n");
        let (back, k) = SetSystem::parse_instance(&text).unwrap();
        assert_eq!(k, 2);
        assert_eq!(back, s);
    }

    #[test]
    fn instance_parse_errors() {
        assert!(SetSystem::parse_instance("").is_err());
        assert!(SetSystem::parse_instance("3 1 1\n2 1\n").is_err());
        assert!(SetSystem::parse_instance("3 1 1\n3\n").is_err());
        assert!(SetSystem::parse_instance("3 2 1\n0\n").is_err());
        assert!(SetSystem::parse_instance("3 1 1\n0\n1\n").is_err());
    }

    #[test]
    fn cover_validate_catches_stale_value() {
        let s = small();
        let mut c = Cover::new(&s, vec![0]).unwrap();
        assert!(c.validate(&s).is_ok());
        c.value = 3;
        assert!(c.validate(&s).is_err());
    }

    struct SquareOracle(usize);

    impl SubmodularOracle for SquareOracle {
        type State = usize;
        fn ground_size(&self) -> usize {
            self.0
        }
        fn empty_state(&self) -> usize {
            0
        }
        fn state_value(&self, s: &usize) -> f64 {
            (*s * *s) as f64
        }
        fn marginal(&self, s: &usize, _item: usize) -> f64 {
            ((s + 1) * (s + 1) - s * s) as f64
        }
        fn insert(&self, s: &mut usize, _item: usize) {
            *s += 1;
        }
    }

    #[test]
    fn sanity_flags_supermodular_fixture() {
        let report = oracle_sanity(&SquareOracle(8), 200, 3);
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .any(|v| v.property == "submodular"));
        assert!(report.into_result().is_err());
    }

    #[test]
    fn sanity_passes_on_coverage() {
        let s = random_system(20, 12, 0.25, 9);
        let report = oracle_sanity(&CoverageOracle::new(&s), 1000, 5);
        assert!(report.passed(), "{:?}", report.violations.first());
    }

    fn arb_system() -> impl Strategy<Value = SetSystem> {
        (1usize..12, 1usize..8).prop_flat_map(|(n, m)| {
            proptest::collection::vec(proptest::collection::btree_set(0..n, 0..=n), m)
                .prop_map(move |sets| {
                    SetSystem::new(n, sets.into_iter().map(|s| s.into_iter().collect()).collect())
                        .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn subadditive_and_permutation_invariant(s in arb_system(), seed in any::<u64>()) {
            let mut r = rng::rng(seed, &[]);
            let i: Vec<usize> = (0..s.m()).filter(|_| r.gen_bool(0.5)).collect();
            let j: Vec<usize> = (0..s.m()).filter(|_| r.gen_bool(0.5)).collect();
            let mut ij = i.clone();
            ij.extend(&j);
            let vij = coverage_value(&s, &ij).unwrap();
            prop_assert!(vij <= coverage_value(&s, &i).unwrap() + coverage_value(&s, &j).unwrap());
            let mut rev = ij.clone();
            rev.reverse();
            prop_assert_eq!(coverage_value(&s, &rev).unwrap(), vij);
        }

        #[test]
        fn greedy_sandwiched_and_prefix_stable(s in arb_system(), k in 1usize..5) {
            let o = CoverageOracle::new(&s);
            let g = greedy_cover(&o, k);
            let gv = coverage_value(&s, &g).unwrap() as f64;
            let opt = brute_force_opt(&s, k, DEFAULT_ENUM_BUDGET).unwrap().value as f64;
            prop_assert!(gv <= opt);
            prop_assert!(gv >= (1.0 - (-1.0f64).exp()) * opt - 1e-9);
            if !g.is_empty() {
                let shorter = greedy_cover(&o, g.len() - 1);
                prop_assert_eq!(&shorter[..], &g[..g.len() - 1]);
            }
        }

        #[test]
        fn instance_round_trip(s in arb_system(), k in 0usize..10) {
            let text = s.to_instance_string(k);
            let (back, k2) = SetSystem::parse_instance(&text).unwrap();
            prop_assert_eq!(k2, k);
            prop_assert_eq!(back.to_instance_string(k2), text);
        }
    }
}
