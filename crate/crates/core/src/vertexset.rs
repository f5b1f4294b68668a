//! Eventually periodic vertex sets and the two-sorted sets used by lifted
//! graphs.
//!
//! A [`VertexSet`] describes a subset of the positive indices `1, 2, 3, …`
//! in a normal form with three parts: a finite explicit part below a
//! threshold, a repeating bit pattern from the threshold on, and a flag for
//! primed (copied) vertices. The normal form is unique: two sets have equal
//! membership if and only if their normal forms are identical, which is what
//! makes `==` trustworthy everywhere downstream.

use std::collections::BTreeSet;
use std::fmt;

use num_integer::Integer;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetError {
    #[error("vertex indices are positive; 0 is not a vertex")]
    ZeroIndex,
    #[error("pattern must be nonempty")]
    EmptyPattern,
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("cannot combine a primed set with an unprimed set")]
    MixedPriming,
    #[error("expected an unprimed set")]
    ExpectedUnprimed,
    #[error("expected a primed set")]
    ExpectedPrimed,
}

/// Eventually periodic set over positive indices, in unique normal form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct VertexSet {
    explicit: BTreeSet<u64>,
    threshold: u64,
    pattern: Vec<bool>,
    primed: bool,
}

impl VertexSet {
    /// Build a set from the three raw parts. Membership is the union of the
    /// explicit indices and the pattern tail: `j` is a member when
    /// `j ∈ explicit`, or when `j ≥ threshold` and the pattern bit at
    /// `(j - threshold) mod pattern.len()` is set. Explicit indices at or
    /// above the threshold are allowed on input and are folded into the
    /// normal form.
    pub fn canonicalize(
        explicit: impl IntoIterator<Item = u64>,
        threshold: u64,
        pattern: Vec<bool>,
        primed: bool,
    ) -> Result<Self, SetError> {
        if threshold == 0 {
            return Err(SetError::ZeroThreshold);
        }
        if pattern.is_empty() {
            return Err(SetError::EmptyPattern);
        }
        let explicit: BTreeSet<u64> = explicit.into_iter().collect();
        if explicit.contains(&0) {
            return Err(SetError::ZeroIndex);
        }
        let p = pattern.len() as u64;
        let member = |j: u64| -> bool {
            explicit.contains(&j) || (j >= threshold && pattern[((j - threshold) % p) as usize])
        };
        // Anchor above every explicit index, so the tail is purely periodic.
        let anchor = explicit
            .iter()
            .next_back()
            .map(|m| m + 1)
            .unwrap_or(1)
            .max(threshold);
        let bits: Vec<bool> = (0..p).map(|k| member(anchor + k)).collect();
        let below: BTreeSet<u64> = (1..anchor).filter(|&j| member(j)).collect();
        Ok(Self::from_parts(below, anchor, bits, primed))
    }

    /// Assemble the unique normal form from membership data that is already
    /// consistent: `explicit ⊂ [1, threshold)` and the pattern describes all
    /// indices from `threshold` on.
    fn from_parts(
        mut explicit: BTreeSet<u64>,
        mut threshold: u64,
        mut pattern: Vec<bool>,
        primed: bool,
    ) -> Self {
        // Minimal period.
        let p = pattern.len();
        for d in 1..=p {
            if p.is_multiple_of(d) && (0..p).all(|i| pattern[i] == pattern[i % d]) {
                pattern.truncate(d);
                break;
            }
        }
        // Minimal threshold: keep extending the periodic tail downward while
        // the explicit membership just below the threshold matches the
        // rotated pattern.
        while threshold > 1 {
            let want = *pattern.last().unwrap();
            let have = explicit.contains(&(threshold - 1));
            if have != want {
                break;
            }
            if want {
                explicit.remove(&(threshold - 1));
            }
            pattern.rotate_right(1);
            threshold -= 1;
        }
        if pattern.iter().all(|&b| !b) {
            pattern = vec![false];
        }
        VertexSet {
            explicit,
            threshold,
            pattern,
            primed,
        }
    }

    pub fn empty() -> Self {
        VertexSet {
            explicit: BTreeSet::new(),
            threshold: 1,
            pattern: vec![false],
            primed: false,
        }
    }

    pub fn finite(items: impl IntoIterator<Item = u64>) -> Result<Self, SetError> {
        Self::canonicalize(items, 1, vec![false], false)
    }

    pub fn singleton(v: u64) -> Result<Self, SetError> {
        Self::finite([v])
    }

    /// All indices `j ≥ start`.
    pub fn tail(start: u64) -> Result<Self, SetError> {
        Self::canonicalize([], start.max(1), vec![true], false)
    }

    /// Indices `j ≥ start` whose pattern bit at `(j - start) mod bits.len()`
    /// is set.
    pub fn tail_pattern(start: u64, bits: Vec<bool>) -> Result<Self, SetError> {
        Self::canonicalize([], start.max(1), bits, false)
    }

    /// The arithmetic progression `start, start+step, start+2·step, …`.
    pub fn progression(start: u64, step: u64) -> Result<Self, SetError> {
        let mut bits = vec![false; step.max(1) as usize];
        bits[0] = true;
        Self::tail_pattern(start, bits)
    }

    pub fn is_primed(&self) -> bool {
        self.primed
    }

    /// The same membership over the primed copy of the index set.
    pub fn primed(mut self) -> Self {
        self.primed = true;
        self
    }

    pub fn unprimed(mut self) -> Self {
        self.primed = false;
        self
    }

    pub fn member(&self, j: u64) -> bool {
        if j == 0 {
            return false;
        }
        if j < self.threshold {
            self.explicit.contains(&j)
        } else {
            let p = self.pattern.len() as u64;
            self.pattern[((j - self.threshold) % p) as usize]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pattern.iter().all(|&b| !b)
    }

    pub fn is_empty(&self) -> bool {
        self.is_finite() && self.explicit.is_empty()
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn pattern(&self) -> &[bool] {
        &self.pattern
    }

    pub fn explicit_part(&self) -> &BTreeSet<u64> {
        &self.explicit
    }

    /// Number of members when finite.
    pub fn finite_len(&self) -> Option<usize> {
        self.is_finite().then_some(self.explicit.len())
    }

    pub fn min_member(&self) -> Option<u64> {
        if let Some(&m) = self.explicit.iter().next() {
            return Some(m);
        }
        (0..self.pattern.len() as u64)
            .find(|&k| self.pattern[k as usize])
            .map(|k| self.threshold + k)
    }

    /// Members `≤ bound`, ascending.
    pub fn enumerate_up_to(&self, bound: u64) -> Vec<u64> {
        (1..=bound).filter(|&j| self.member(j)).collect()
    }

    /// Is there a member strictly above `bound`?
    pub fn has_member_beyond(&self, bound: u64) -> bool {
        if !self.is_finite() {
            return true;
        }
        self.explicit.iter().next_back().is_some_and(|&m| m > bound)
    }

    /// The infinite part as arithmetic progressions, one per live pattern
    /// bit: `threshold + k` stepping by the period.
    pub fn tail_classes(&self) -> Vec<crate::interval::IndexClass> {
        let p = self.pattern.len() as u64;
        (0..p)
            .filter(|&k| self.pattern[k as usize])
            .map(|k| crate::interval::IndexClass::new(self.threshold + k, p))
            .collect()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self, SetError> {
        if self.primed != other.primed {
            return Err(SetError::MixedPriming);
        }
        let t = self.threshold.max(other.threshold);
        let p = self.pattern.len().lcm(&other.pattern.len()) as u64;
        let bits: Vec<bool> = (0..p).map(|k| f(self.member(t + k), other.member(t + k))).collect();
        let explicit: BTreeSet<u64> = (1..t).filter(|&j| f(self.member(j), other.member(j))).collect();
        Ok(Self::from_parts(explicit, t, bits, self.primed))
    }

    pub fn union(&self, other: &Self) -> Result<Self, SetError> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersect(&self, other: &Self) -> Result<Self, SetError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self, SetError> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// `{ j ≥ 1 : j + d is a member }`, the index preimage under a shift.
    pub fn shifted_query(&self, d: i64) -> Self {
        let t_i = self.threshold as i64 - d;
        let t = t_i.max(1) as u64;
        let p = self.pattern.len() as u64;
        let mem_at = |j: u64| -> bool {
            let v = j as i64 + d;
            v >= 1 && self.member(v as u64)
        };
        let bits: Vec<bool> = (0..p).map(|k| mem_at(t + k)).collect();
        let explicit: BTreeSet<u64> = (1..t).filter(|&j| mem_at(j)).collect();
        Self::from_parts(explicit, t, bits, self.primed)
    }

    pub fn expect_unprimed(&self) -> Result<(), SetError> {
        if self.primed {
            Err(SetError::ExpectedUnprimed)
        } else {
            Ok(())
        }
    }

    pub fn expect_primed(&self) -> Result<(), SetError> {
        if self.primed {
            Ok(())
        } else {
            Err(SetError::ExpectedPrimed)
        }
    }
}

impl fmt::Display for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.primed {
            let inner = self.clone().unprimed();
            return write!(f, "primed({inner})");
        }
        let mut parts: Vec<String> = Vec::new();
        if !self.explicit.is_empty() || self.is_empty() {
            let items: Vec<String> = self.explicit.iter().map(|j| j.to_string()).collect();
            parts.push(format!("{{{}}}", items.join(",")));
        }
        if !self.is_finite() {
            if self.pattern.iter().all(|&b| b) {
                parts.push(format!("tail({})", self.threshold));
            } else {
                let bits: String = self
                    .pattern
                    .iter()
                    .map(|&b| if b { '1' } else { '0' })
                    .collect();
                parts.push(format!(
                    "tail({};period={},bits={})",
                    self.threshold,
                    self.pattern.len(),
                    bits
                ));
            }
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// A subset of a lifted vertex space: an unprimed part and a primed part,
/// kept separately because the two sorts never mix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EXSet {
    unprimed: VertexSet,
    primed: VertexSet,
}

impl EXSet {
    pub fn new(unprimed: VertexSet, primed: VertexSet) -> Result<Self, SetError> {
        unprimed.expect_unprimed()?;
        primed.expect_primed()?;
        Ok(EXSet { unprimed, primed })
    }

    pub fn from_unprimed(unprimed: VertexSet) -> Result<Self, SetError> {
        unprimed.expect_unprimed()?;
        Ok(EXSet {
            unprimed,
            primed: VertexSet::empty().primed(),
        })
    }

    pub fn from_primed(primed: VertexSet) -> Result<Self, SetError> {
        primed.expect_primed()?;
        Ok(EXSet {
            unprimed: VertexSet::empty(),
            primed,
        })
    }

    pub fn empty() -> Self {
        EXSet {
            unprimed: VertexSet::empty(),
            primed: VertexSet::empty().primed(),
        }
    }

    pub fn unprimed_part(&self) -> &VertexSet {
        &self.unprimed
    }

    pub fn primed_part(&self) -> &VertexSet {
        &self.primed
    }

    pub fn is_empty(&self) -> bool {
        self.unprimed.is_empty() && self.primed.is_empty()
    }

    pub fn union(&self, other: &Self) -> Self {
        EXSet {
            unprimed: self.unprimed.union(&other.unprimed).unwrap(),
            primed: self.primed.union(&other.primed).unwrap(),
        }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        EXSet {
            unprimed: self.unprimed.intersect(&other.unprimed).unwrap(),
            primed: self.primed.intersect(&other.primed).unwrap(),
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        EXSet {
            unprimed: self.unprimed.difference(&other.unprimed).unwrap(),
            primed: self.primed.difference(&other.primed).unwrap(),
        }
    }
}

impl fmt::Display for EXSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.unprimed.is_empty(), self.primed.is_empty()) {
            (true, true) => write!(f, "{{}}"),
            (false, true) => write!(f, "{}", self.unprimed),
            (true, false) => write!(f, "{}", self.primed),
            (false, false) => write!(f, "{} + {}", self.unprimed, self.primed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(explicit: &[u64], t: u64, bits: &[bool]) -> VertexSet {
        VertexSet::canonicalize(explicit.iter().copied(), t, bits.to_vec(), false).unwrap()
    }

    /// Oracle used throughout: compare membership by bounded enumeration.
    fn same_membership(a: &VertexSet, b: &VertexSet, bound: u64) -> bool {
        (1..=bound).all(|j| a.member(j) == b.member(j))
    }

    #[test]
    fn absorbs_explicit_indices_covered_by_the_tail() {
        let s = vs(&[5], 3, &[true]);
        assert_eq!(s, VertexSet::tail(3).unwrap());
        assert!(s.explicit_part().is_empty());
        assert_eq!(s.threshold(), 3);
    }

    #[test]
    fn canonical_form_of_an_even_tail_with_a_stray_point() {
        let even_from_4_plus_2 = vs(&[2], 4, &[true, false]);
        let expected: Vec<u64> = (1..=50).filter(|j| *j >= 2 && j % 2 == 0).collect();
        assert_eq!(even_from_4_plus_2.enumerate_up_to(50), expected);
        // Same membership written at a different anchor lands on the same
        // normal form.
        let other = vs(&[2, 4, 6], 7, &[false, true]);
        assert_eq!(even_from_4_plus_2, other);
    }

    #[test]
    fn finite_sets_keep_their_elements_explicit() {
        let s = vs(&[1, 2], 3, &[false]);
        assert!(s.is_finite());
        assert_eq!(s.enumerate_up_to(10), vec![1, 2]);
        assert_eq!(s, VertexSet::finite([1, 2]).unwrap());
    }

    #[test]
    fn canonicalize_is_idempotent_and_reduces_periods() {
        let s = vs(&[7], 2, &[true, false, true, false]);
        assert_eq!(s.pattern().len(), 2);
        let again = VertexSet::canonicalize(
            s.explicit_part().iter().copied(),
            s.threshold(),
            s.pattern().to_vec(),
            false,
        )
        .unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn set_algebra_matches_bounded_enumeration() {
        let evens = VertexSet::progression(2, 2).unwrap();
        let tail3 = VertexSet::tail(3).unwrap();
        let u = evens.union(&tail3).unwrap();
        let i = evens.intersect(&tail3).unwrap();
        let d = tail3.difference(&evens).unwrap();
        for j in 1..=60 {
            assert_eq!(u.member(j), evens.member(j) || tail3.member(j));
            assert_eq!(i.member(j), evens.member(j) && tail3.member(j));
            assert_eq!(d.member(j), tail3.member(j) && !evens.member(j));
        }
        assert_eq!(u, VertexSet::tail(2).unwrap());
    }

    #[test]
    fn intersection_of_tails_is_a_tail() {
        let a = VertexSet::tail(2).unwrap();
        let b = VertexSet::tail(5).unwrap();
        assert_eq!(a.intersect(&b).unwrap(), VertexSet::tail(5).unwrap());
    }

    #[test]
    fn enumerate_up_to_even_tail() {
        let evens = VertexSet::progression(2, 2).unwrap();
        assert_eq!(evens.enumerate_up_to(7), vec![2, 4, 6]);
    }

    #[test]
    fn odd_tail_via_pattern_bits() {
        let odds = VertexSet::tail_pattern(1, vec![true, false]).unwrap();
        assert_eq!(odds.enumerate_up_to(8), vec![1, 3, 5, 7]);
        assert!(!odds.is_finite());
        assert_eq!(odds.to_string(), "tail(1;period=2,bits=10)");
    }

    #[test]
    fn empty_and_finiteness_flags() {
        assert!(VertexSet::empty().is_empty());
        assert!(VertexSet::finite([4]).unwrap().is_finite());
        assert!(!VertexSet::tail(9).unwrap().is_finite());
        assert_eq!(VertexSet::tail(9).unwrap().min_member(), Some(9));
    }

    #[test]
    fn mixing_primed_and_unprimed_is_rejected() {
        let a = VertexSet::tail(1).unwrap();
        let b = VertexSet::tail(1).unwrap().primed();
        assert_eq!(a.union(&b), Err(SetError::MixedPriming));
    }

    #[test]
    fn shifted_query_moves_the_anchor() {
        let tail3 = VertexSet::tail(3).unwrap();
        // j such that j+1 >= 3, i.e. the tail from 2.
        assert_eq!(tail3.shifted_query(1), VertexSet::tail(2).unwrap());
        // j such that j-1 >= 3.
        assert_eq!(tail3.shifted_query(-1), VertexSet::tail(4).unwrap());
        let evens = VertexSet::progression(2, 2).unwrap();
        assert_eq!(evens.shifted_query(1), VertexSet::progression(1, 2).unwrap());
    }

    #[test]
    fn display_round_trips_through_the_obvious_forms() {
        assert_eq!(VertexSet::empty().to_string(), "{}");
        assert_eq!(VertexSet::finite([1, 2]).unwrap().to_string(), "{1,2}");
        assert_eq!(VertexSet::tail(2).unwrap().to_string(), "tail(2)");
        // {1} with the evens from 4 on; the threshold settles at 3.
        let mixed = VertexSet::canonicalize([1], 4, vec![true, false], false).unwrap();
        assert_eq!(mixed.to_string(), "{1} + tail(3;period=2,bits=01)");
        assert_eq!(
            VertexSet::singleton(3).unwrap().primed().to_string(),
            "primed({3})"
        );
    }

    #[test]
    fn exset_componentwise_algebra() {
        let a = EXSet::new(
            VertexSet::finite([1, 2]).unwrap(),
            VertexSet::singleton(1).unwrap().primed(),
        )
        .unwrap();
        let b = EXSet::new(
            VertexSet::singleton(2).unwrap(),
            VertexSet::singleton(2).unwrap().primed(),
        )
        .unwrap();
        let u = a.union(&b);
        assert_eq!(u.unprimed_part(), &VertexSet::finite([1, 2]).unwrap());
        assert_eq!(
            u.primed_part(),
            &VertexSet::finite([1, 2]).unwrap().primed()
        );
        let i = a.intersect(&b);
        assert_eq!(i.unprimed_part(), &VertexSet::singleton(2).unwrap());
        assert!(i.primed_part().is_empty());
    }

    #[test]
    fn exset_constructor_checks_sorts() {
        let plain = VertexSet::singleton(1).unwrap();
        assert!(EXSet::new(plain.clone(), plain.clone()).is_err());
        assert!(EXSet::from_primed(plain).is_err());
    }

    #[test]
    fn uniqueness_of_normal_forms_under_random_presentations() {
        // Deterministic pseudo-random probe: present the same membership in
        // many redundant ways and demand the identical normal form.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let t = 1 + next() % 6;
            let p = 1 + (next() % 4) as usize;
            let bits: Vec<bool> = (0..p).map(|_| next() % 2 == 0).collect();
            let explicit: Vec<u64> = (0..(next() % 4)).map(|_| 1 + next() % 8).collect();
            let s = VertexSet::canonicalize(explicit.clone(), t, bits.clone(), false).unwrap();
            // Re-present with doubled period and a shifted anchor.
            // The sampled window must clear every explicit member, since
            // membership is only periodic beyond them.
            let clear = explicit.iter().copied().max().map_or(0, |m| m + 1);
            let anchor = (t + next() % 5).max(clear);
            let anchored_bits: Vec<bool> =
                (0..2 * bits.len() as u64).map(|k| s.member(anchor + k)).collect();
            let extra: Vec<u64> = (1..anchor).filter(|&j| s.member(j)).collect();
            let s2 = VertexSet::canonicalize(extra.clone(), anchor, anchored_bits.clone(), false)
                .unwrap();
            assert!(
                same_membership(&s, &s2, 100),
                "presentation: explicit={explicit:?} t={t} bits={bits:?} | \
                 extra={extra:?} anchor={anchor} bits2={anchored_bits:?} | s={s:?} s2={s2:?}"
            );
            assert_eq!(s, s2, "normal forms must coincide for equal membership");
        }
    }
}
