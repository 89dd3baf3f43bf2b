//! Fixed-width element sets backed by `u64` words.

use std::fmt;

const WORD: usize = 64;

/// A subset of a universe `0..len`, stored as a packed bit vector.
///
/// Two sets are only comparable (union, intersection, ...) when they were
/// built over the same universe size.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ElementSet {
    len: usize,
    words: Vec<u64>,
}

impl ElementSet {
    pub fn empty(len: usize) -> Self {
        ElementSet {
            len,
            words: vec![0; len.div_ceil(WORD)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut s = Self::empty(len);
        for w in s.words.iter_mut() {
            *w = !0;
        }
        s.trim();
        s
    }

    /// Builds a set from element ids. Panics if an id is `>= len`.
    pub fn from_elements<I: IntoIterator<Item = usize>>(len: usize, elems: I) -> Self {
        let mut s = Self::empty(len);
        for e in elems {
            s.insert(e);
        }
        s
    }

    fn trim(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Universe size this set lives in.
    #[inline]
    pub fn universe(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn insert(&mut self, e: usize) -> bool {
        assert!(e < self.len, "element {e} outside universe of size {}", self.len);
        let (w, b) = (e / WORD, e % WORD);
        let was = self.words[w] >> b & 1 == 1;
        self.words[w] |= 1 << b;
        !was
    }

    #[inline]
    pub fn remove(&mut self, e: usize) -> bool {
        if e >= self.len {
            return false;
        }
        let (w, b) = (e / WORD, e % WORD);
        let was = self.words[w] >> b & 1 == 1;
        self.words[w] &= !(1 << b);
        was
    }

    #[inline]
    pub fn contains(&self, e: usize) -> bool {
        e < self.len && self.words[e / WORD] >> (e % WORD) & 1 == 1
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn union_with(&mut self, other: &ElementSet) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    pub fn intersect_with(&mut self, other: &ElementSet) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= *b;
        }
    }

    pub fn difference_with(&mut self, other: &ElementSet) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !*b;
        }
    }

    /// `|self \ other|` without allocating.
    #[inline]
    pub fn count_difference(&self, other: &ElementSet) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    /// `|self ∩ other|` without allocating.
    #[inline]
    pub fn count_intersection(&self, other: &ElementSet) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// `|(self ∩ within) \ minus|` without allocating.
    #[inline]
    pub fn count_within_minus(&self, within: &ElementSet, minus: &ElementSet) -> usize {
        self.words
            .iter()
            .zip(&within.words)
            .zip(&minus.words)
            .map(|((a, u), m)| (a & u & !m).count_ones() as usize)
            .sum()
    }

    pub fn is_subset(&self, other: &ElementSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &ElementSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn union(&self, other: &ElementSet) -> ElementSet {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersection(&self, other: &ElementSet) -> ElementSet {
        let mut s = self.clone();
        s.intersect_with(other);
        s
    }

    pub fn difference(&self, other: &ElementSet) -> ElementSet {
        let mut s = self.clone();
        s.difference_with(other);
        s
    }

    /// Iterates element ids in ascending order.
    pub fn iter(&self) -> Iter<'_> {
        Iter {
            words: &self.words,
            idx: 0,
            cur: self.words.first().copied().unwrap_or(0),
        }
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for ElementSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

pub struct Iter<'a> {
    words: &'a [u64],
    idx: usize,
    cur: u64,
}

impl Iterator for Iter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.cur != 0 {
                let tz = self.cur.trailing_zeros() as usize;
                self.cur &= self.cur - 1;
                return Some(self.idx * WORD + tz);
            }
            self.idx += 1;
            if self.idx >= self.words.len() {
                return None;
            }
            self.cur = self.words[self.idx];
        }
    }
}

impl<'a> IntoIterator for &'a ElementSet {
    type Item = usize;
    type IntoIter = Iter<'a>;

    fn into_iter(self) -> Iter<'a> {
        self.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn full_respects_universe_edge() {
        for n in [0, 1, 63, 64, 65, 130] {
            let s = ElementSet::full(n);
            assert_eq!(s.count(), n);
            assert_eq!(s.to_vec(), (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    #[should_panic]
    fn insert_out_of_range_panics() {
        ElementSet::empty(10).insert(10);
    }

    proptest! {
        #[test]
        fn ops_match_btreeset(a in proptest::collection::btree_set(0usize..150, 0..60),
                              b in proptest::collection::btree_set(0usize..150, 0..60)) {
            let sa = ElementSet::from_elements(150, a.iter().copied());
            let sb = ElementSet::from_elements(150, b.iter().copied());
            let u: BTreeSet<_> = a.union(&b).copied().collect();
            let i: BTreeSet<_> = a.intersection(&b).copied().collect();
            let d: BTreeSet<_> = a.difference(&b).copied().collect();
            prop_assert_eq!(sa.union(&sb).to_vec(), u.into_iter().collect::<Vec<_>>());
            prop_assert_eq!(sa.intersection(&sb).to_vec(), i.iter().copied().collect::<Vec<_>>());
            prop_assert_eq!(sa.count_intersection(&sb), i.len());
            prop_assert_eq!(sa.count_difference(&sb), d.len());
            prop_assert_eq!(sa.is_subset(&sb), a.is_subset(&b));
            prop_assert_eq!(sa.is_disjoint(&sb), a.is_disjoint(&b));
        }
    }
}
