//! Reference implementations used as test oracles. They work on plain
//! `u128` masks and share no code with the library.
#![allow(dead_code)]

use dcover::coverage::SetSystem;

pub fn masks(system: &SetSystem) -> Vec<u128> {
    assert!(system.n() <= 128);
    system
        .sets()
        .iter()
        .map(|s| s.iter().fold(0u128, |m, e| m | 1u128 << e))
        .collect()
}

/// Exact max k-cover by depth-first enumeration.
pub fn max_cover(sets: &[u128], k: usize) -> u32 {
    fn go(sets: &[u128], start: usize, left: usize, acc: u128, best: &mut u32) {
        *best = (*best).max(acc.count_ones());
        if left == 0 {
            return;
        }
        for i in start..sets.len() {
            go(sets, i + 1, left - 1, acc | sets[i], best);
        }
    }
    let mut best = 0;
    go(sets, 0, k.min(sets.len()), 0, &mut best);
    best
}

/// Plain greedy, lowest index on ties.
pub fn greedy(sets: &[u128], k: usize) -> u32 {
    let mut acc = 0u128;
    for _ in 0..k {
        let best = sets.iter().map(|s| (s & !acc).count_ones()).enumerate().max_by_key(|&(i, g)| (g, std::cmp::Reverse(i)));
        match best {
            Some((i, g)) if g > 0 => acc |= sets[i],
            _ => break,
        }
    }
    acc.count_ones()
}

/// Smallest number of sets whose union is `[n]`, by subset enumeration.
pub fn min_set_cover(sets: &[u128], n: usize) -> Option<usize> {
    let full = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
    assert!(sets.len() <= 20);
    (0u32..1 << sets.len())
        .filter(|sel| {
            let u = (0..sets.len()).filter(|i| sel >> i & 1 == 1).fold(0u128, |a, i| a | sets[i]);
            u == full
        })
        .map(|sel| sel.count_ones() as usize)
        .min()
}

pub fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Smallest `l` with `(1+eps)^l >= 2e`.
pub fn levels(eps: f64) -> usize {
    let mut l = 0;
    let mut x = 1.0f64;
    while x < 2.0 * std::f64::consts::E - 1e-12 {
        x *= 1.0 + eps;
        l += 1;
    }
    l
}
