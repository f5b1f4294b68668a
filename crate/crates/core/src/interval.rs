//! Exact rational intervals, affine maps, and index-parameterized endpoint
//! expressions.
//!
//! Interval partitions carry a tail family whose endpoints depend on the
//! interval index `n`, either affinely (`c0 + c1·n`) or geometrically
//! (`limit + coef·ratio^(n-base)`). [`NExpr`] is that expression type, with
//! just enough decision procedures (sign over a whole index class, equation
//! solving, shift matching) for the validators to reason about every index
//! at once instead of up to a horizon.

use std::fmt;

use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormError {
    #[error("incompatible index expressions (mixed arithmetic and geometric forms)")]
    MixedForms,
    #[error("geometric forms disagree on ratio or base index")]
    GeoMismatch,
}

/// Affine map `x ↦ slope·x + offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Affine<S> {
    pub slope: S,
    pub offset: S,
}

impl<S: Scalar> Affine<S> {
    pub fn new(slope: S, offset: S) -> Self {
        Affine { slope, offset }
    }

    pub fn identity() -> Self {
        Affine {
            slope: S::one(),
            offset: S::zero(),
        }
    }

    pub fn apply(&self, x: &S) -> S {
        self.slope.clone() * x.clone() + self.offset.clone()
    }

    /// Inverse map; `None` for constant maps.
    pub fn inverse(&self) -> Option<Affine<S>> {
        if self.slope.is_zero() {
            return None;
        }
        let inv_slope = S::one() / self.slope.clone();
        let offset = -self.offset.clone() / self.slope.clone();
        Some(Affine {
            slope: inv_slope,
            offset,
        })
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Affine<S>) -> Affine<S> {
        Affine {
            slope: self.slope.clone() * other.slope.clone(),
            offset: self.slope.clone() * other.offset.clone() + self.offset.clone(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.slope.is_one() && self.offset.is_zero()
    }

    /// Fixed point of a non-identity map, when one exists.
    pub fn fixed_point(&self) -> Option<S> {
        if self.slope.is_one() {
            return None;
        }
        Some(self.offset.clone() / (S::one() - self.slope.clone()))
    }
}

impl<S: Scalar> fmt::Display for Affine<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.slope.is_zero() {
            return write!(f, "{}", self.offset.ratio_string());
        }
        if self.slope.is_one() {
            write!(f, "x")?;
        } else if self.slope == -S::one() {
            write!(f, "-x")?;
        } else {
            write!(f, "{}x", self.slope.ratio_string())?;
        }
        if self.offset > S::zero() {
            write!(f, " + {}", self.offset.ratio_string())?;
        } else if self.offset < S::zero() {
            write!(f, " - {}", (-self.offset.clone()).ratio_string())?;
        }
        Ok(())
    }
}

/// Nonempty rational interval with open or closed bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval<S> {
    pub lo: S,
    pub hi: S,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl<S: Scalar> Interval<S> {
    /// `None` when the described set is empty.
    pub fn new(lo: S, lo_closed: bool, hi: S, hi_closed: bool) -> Option<Self> {
        if lo < hi || (lo == hi && lo_closed && hi_closed) {
            Some(Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            })
        } else {
            None
        }
    }

    pub fn closed(lo: S, hi: S) -> Option<Self> {
        Self::new(lo, true, hi, true)
    }

    pub fn open(lo: S, hi: S) -> Option<Self> {
        Self::new(lo, false, hi, false)
    }

    pub fn point(x: S) -> Self {
        Interval {
            lo: x.clone(),
            hi: x,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &S) -> bool {
        let above = match x.cmp(&self.lo) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => self.lo_closed,
            std::cmp::Ordering::Less => false,
        };
        let below = match x.cmp(&self.hi) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => self.hi_closed,
            std::cmp::Ordering::Greater => false,
        };
        above && below
    }

    pub fn interior(&self) -> Option<Interval<S>> {
        Interval::new(self.lo.clone(), false, self.hi.clone(), false)
    }

    pub fn closure(&self) -> Interval<S> {
        Interval {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn intersect(&self, other: &Interval<S>) -> Option<Interval<S>> {
        let (lo, lo_closed) = match self.lo.cmp(&other.lo) {
            std::cmp::Ordering::Greater => (self.lo.clone(), self.lo_closed),
            std::cmp::Ordering::Less => (other.lo.clone(), other.lo_closed),
            std::cmp::Ordering::Equal => (self.lo.clone(), self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.cmp(&other.hi) {
            std::cmp::Ordering::Less => (self.hi.clone(), self.hi_closed),
            std::cmp::Ordering::Greater => (other.hi.clone(), other.hi_closed),
            std::cmp::Ordering::Equal => (self.hi.clone(), self.hi_closed && other.hi_closed),
        };
        Interval::new(lo, lo_closed, hi, hi_closed)
    }

    pub fn is_disjoint(&self, other: &Interval<S>) -> bool {
        self.intersect(other).is_none()
    }

    pub fn contains_interval(&self, other: &Interval<S>) -> bool {
        let lo_ok = match self.lo.cmp(&other.lo) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => self.lo_closed || !other.lo_closed,
            std::cmp::Ordering::Greater => false,
        };
        let hi_ok = match self.hi.cmp(&other.hi) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => self.hi_closed || !other.hi_closed,
            std::cmp::Ordering::Less => false,
        };
        lo_ok && hi_ok
    }

    /// Image under an affine map with nonzero slope.
    pub fn affine_image(&self, map: &Affine<S>) -> Interval<S> {
        let a = map.apply(&self.lo);
        let b = map.apply(&self.hi);
        if map.slope > S::zero() {
            Interval {
                lo: a,
                hi: b,
                lo_closed: self.lo_closed,
                hi_closed: self.hi_closed,
            }
        } else {
            Interval {
                lo: b,
                hi: a,
                lo_closed: self.hi_closed,
                hi_closed: self.lo_closed,
            }
        }
    }
}

/// How an image interval meets a closed partition interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Overlap<S> {
    Empty,
    SinglePoint(S),
    Whole,
    Partial(S),
}

impl<S: Scalar> Interval<S> {
    /// Classify `self ∩ target` for a closed target interval: empty, one
    /// point, all of `target`, or a proper partial overlap (with a witness
    /// point strictly inside the uncovered part of `target`).
    pub fn classify_against_closed(&self, target: &Interval<S>) -> Overlap<S> {
        match self.intersect(target) {
            None => Overlap::Empty,
            Some(meet) if meet.is_point() => Overlap::SinglePoint(meet.lo),
            Some(meet) => {
                if self.contains_interval(target) {
                    Overlap::Whole
                } else {
                    // Witness the uncovered side.
                    let witness = if meet.lo > target.lo || (!meet.lo_closed && target.lo_closed) {
                        meet.lo
                    } else {
                        meet.hi
                    };
                    Overlap::Partial(witness)
                }
            }
        }
    }
}

impl<S: Scalar> fmt::Display for Interval<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo.ratio_string(),
            self.hi.ratio_string(),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

pub fn pow<S: Scalar>(r: &S, k: u64) -> S {
    let mut acc = S::one();
    let mut base = r.clone();
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            acc = acc * base.clone();
        }
        base = base.clone() * base;
        k >>= 1;
    }
    acc
}

/// Endpoint expression parameterized by an interval index `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NExpr<S> {
    /// `c0 + c1·n`
    Affine { c0: S, c1: S },
    /// `limit + coef·ratio^(n - base)` with `0 < ratio < 1`
    Geo { limit: S, coef: S, ratio: S, base: u64 },
}

/// Indices `n ≥ start` with `n ≡ start (mod step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexClass {
    pub start: u64,
    pub step: u64,
}

impl IndexClass {
    pub fn new(start: u64, step: u64) -> Self {
        IndexClass {
            start,
            step: step.max(1),
        }
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= self.start && (n - self.start).is_multiple_of(self.step)
    }

    pub fn iter_up_to(&self, bound: u64) -> impl Iterator<Item = u64> + '_ {
        (self.start..=bound.max(self.start))
            .step_by(self.step as usize)
            .filter(move |&n| n <= bound)
    }

    /// Smallest class member `≥ n`.
    pub fn first_at_or_after(&self, n: u64) -> u64 {
        if n <= self.start {
            self.start
        } else {
            self.start + (n - self.start).div_ceil(self.step) * self.step
        }
    }

    /// Largest class member `≤ n`, if any.
    pub fn last_at_or_before(&self, n: u64) -> Option<u64> {
        if n < self.start {
            None
        } else {
            Some(self.start + (n - self.start) / self.step * self.step)
        }
    }
}

/// Solution set of an equation or inequality over an index class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassSolutions {
    None,
    All,
    /// Class members `≤ n`.
    UpTo(u64),
    /// Class members `≥ n`.
    From(u64),
    One(u64),
    /// Class members in `[lo, hi]`.
    Within(u64, u64),
}

impl ClassSolutions {
    pub fn is_empty(&self) -> bool {
        matches!(self, ClassSolutions::None)
    }

    pub fn contains(&self, class: &IndexClass, n: u64) -> bool {
        if !class.contains(n) {
            return false;
        }
        match self {
            ClassSolutions::None => false,
            ClassSolutions::All => true,
            ClassSolutions::UpTo(b) => n <= *b,
            ClassSolutions::From(b) => n >= *b,
            ClassSolutions::One(b) => n == *b,
            ClassSolutions::Within(a, b) => n >= *a && n <= *b,
        }
    }

    pub fn iter_up_to<'a>(
        &'a self,
        class: &'a IndexClass,
        bound: u64,
    ) -> impl Iterator<Item = u64> + 'a {
        class
            .iter_up_to(bound)
            .filter(move |&n| self.contains(class, n))
    }

    /// Does any solution exceed the bound?
    pub fn extends_beyond(&self, class: &IndexClass, bound: u64) -> bool {
        match self {
            ClassSolutions::None => false,
            ClassSolutions::All | ClassSolutions::From(_) => true,
            ClassSolutions::UpTo(b) | ClassSolutions::One(b) => *b > bound && class.contains(*b),
            ClassSolutions::Within(a, b) => {
                let first = class.first_at_or_after((*a).max(bound + 1));
                first <= *b
            }
        }
    }

    /// Bounds `(lo, hi)` describing the solutions as class members in
    /// `[lo, hi]`, with `hi = None` meaning unbounded. `None` overall means
    /// no solutions.
    fn bounds(&self, class: &IndexClass) -> Option<(u64, Option<u64>)> {
        match self {
            ClassSolutions::None => None,
            ClassSolutions::All => Some((class.start, None)),
            ClassSolutions::UpTo(b) => Some((class.start, Some(*b))),
            ClassSolutions::From(b) => Some((*b, None)),
            ClassSolutions::One(b) => Some((*b, Some(*b))),
            ClassSolutions::Within(a, b) => Some((*a, Some(*b))),
        }
    }

    /// Canonical form of "class members in `[lo, hi]`".
    fn canonical(class: &IndexClass, lo: u64, hi: Option<u64>) -> ClassSolutions {
        let first = class.first_at_or_after(lo);
        match hi {
            None => {
                if first <= class.start {
                    ClassSolutions::All
                } else {
                    ClassSolutions::From(first)
                }
            }
            Some(hi) => {
                if first > hi {
                    ClassSolutions::None
                } else {
                    let last = class.last_at_or_before(hi).unwrap();
                    if first == last {
                        ClassSolutions::One(first)
                    } else if first <= class.start {
                        ClassSolutions::UpTo(last)
                    } else {
                        ClassSolutions::Within(first, last)
                    }
                }
            }
        }
    }

    /// Intersection of two solution sets over the same class.
    pub fn meet(&self, other: &ClassSolutions, class: &IndexClass) -> ClassSolutions {
        let (alo, ahi) = match self.bounds(class) {
            Some(b) => b,
            None => return ClassSolutions::None,
        };
        let (blo, bhi) = match other.bounds(class) {
            Some(b) => b,
            None => return ClassSolutions::None,
        };
        let lo = alo.max(blo);
        let hi = match (ahi, bhi) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a),
            (Some(a), Some(b)) => Some(a.min(b)),
        };
        ClassSolutions::canonical(class, lo, hi)
    }

    /// Smallest class member in the solution set.
    pub fn first_member(&self, class: &IndexClass) -> Option<u64> {
        let (lo, hi) = self.bounds(class)?;
        let first = class.first_at_or_after(lo);
        match hi {
            Some(hi) if first > hi => None,
            _ => Some(first),
        }
    }

    /// Smallest member strictly greater than `bound`, if any.
    pub fn first_member_beyond(&self, class: &IndexClass, bound: u64) -> Option<u64> {
        let (lo, hi) = self.bounds(class)?;
        let first = class.first_at_or_after(lo.max(bound + 1));
        match hi {
            Some(hi) if first > hi => None,
            _ => Some(first),
        }
    }
}

impl<S: Scalar> NExpr<S> {
    pub fn constant(c: S) -> Self {
        NExpr::Affine {
            c0: c,
            c1: S::zero(),
        }
    }

    pub fn affine(c0: S, c1: S) -> Self {
        NExpr::Affine { c0, c1 }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            NExpr::Affine { c1, .. } => c1.is_zero(),
            NExpr::Geo { coef, .. } => coef.is_zero(),
        }
    }

    pub fn as_constant(&self) -> Option<S> {
        match self {
            NExpr::Affine { c0, c1 } if c1.is_zero() => Some(c0.clone()),
            NExpr::Geo { limit, coef, .. } if coef.is_zero() => Some(limit.clone()),
            _ => None,
        }
    }

    pub fn eval(&self, n: u64) -> S {
        match self {
            NExpr::Affine { c0, c1 } => c0.clone() + c1.clone() * S::from_int(n as i64),
            NExpr::Geo {
                limit,
                coef,
                ratio,
                base,
            } => {
                assert!(n >= *base, "geometric form evaluated below its base index");
                limit.clone() + coef.clone() * pow(ratio, n - base)
            }
        }
    }

    /// `q·self + other`.
    pub fn scale_add(&self, q: &S, other: &NExpr<S>) -> Result<NExpr<S>, FormError> {
        match (self, other) {
            (NExpr::Affine { c0, c1 }, NExpr::Affine { c0: d0, c1: d1 }) => Ok(NExpr::Affine {
                c0: q.clone() * c0.clone() + d0.clone(),
                c1: q.clone() * c1.clone() + d1.clone(),
            }),
            (
                NExpr::Geo {
                    limit,
                    coef,
                    ratio,
                    base,
                },
                NExpr::Geo {
                    limit: l2,
                    coef: c2,
                    ratio: r2,
                    base: b2,
                },
            ) if !c2.is_zero() => {
                if ratio != r2 {
                    return Err(FormError::GeoMismatch);
                }
                // Rebase both to the smaller base index before combining.
                let b = (*base).min(*b2);
                let a1 = coef.clone() / pow(ratio, base - b);
                let a2 = c2.clone() / pow(ratio, b2 - b);
                Ok(NExpr::Geo {
                    limit: q.clone() * limit.clone() + l2.clone(),
                    coef: q.clone() * a1 + a2,
                    ratio: ratio.clone(),
                    base: b,
                })
            }
            (
                NExpr::Geo {
                    limit,
                    coef,
                    ratio,
                    base,
                },
                other,
            ) => {
                let d0 = other.as_constant().ok_or(FormError::MixedForms)?;
                Ok(NExpr::Geo {
                    limit: q.clone() * limit.clone() + d0,
                    coef: q.clone() * coef.clone(),
                    ratio: ratio.clone(),
                    base: *base,
                })
            }
            (NExpr::Affine { c0, c1 }, NExpr::Geo { .. }) => {
                if c1.is_zero() {
                    // q·const + geo
                    other.scale_add(&S::one(), &NExpr::constant(q.clone() * c0.clone()))
                } else {
                    Err(FormError::MixedForms)
                }
            }
        }
    }

    pub fn sub(&self, other: &NExpr<S>) -> Result<NExpr<S>, FormError> {
        other.scale_add(&(-S::one()), self)
    }

    /// Decide `self(n) ≥ 0` for every `n` in the class. The class is
    /// understood to be infinite.
    pub fn ge0_all(&self, class: &IndexClass) -> bool {
        match self {
            NExpr::Affine { c0, c1 } => {
                let v0 = self.eval(class.start);
                match c1.cmp(&S::zero()) {
                    std::cmp::Ordering::Equal => *c0 >= S::zero(),
                    std::cmp::Ordering::Greater => v0 >= S::zero(),
                    std::cmp::Ordering::Less => false,
                }
            }
            NExpr::Geo { limit, .. } => {
                let v0 = self.eval(class.start.max(self.geo_base()));
                v0 >= S::zero() && *limit >= S::zero()
            }
        }
    }

    /// Decide `self(n) > 0` for every `n` in the class.
    pub fn gt0_all(&self, class: &IndexClass) -> bool {
        match self {
            NExpr::Affine { c0, c1 } => {
                let v0 = self.eval(class.start);
                match c1.cmp(&S::zero()) {
                    std::cmp::Ordering::Equal => *c0 > S::zero(),
                    std::cmp::Ordering::Greater => v0 > S::zero(),
                    std::cmp::Ordering::Less => false,
                }
            }
            NExpr::Geo { limit, .. } => {
                let v0 = self.eval(class.start.max(self.geo_base()));
                v0 > S::zero() && *limit >= S::zero()
            }
        }
    }

    fn geo_base(&self) -> u64 {
        match self {
            NExpr::Geo { base, .. } => *base,
            NExpr::Affine { .. } => 0,
        }
    }

    /// All `n` in the class with `self(n) == c`.
    pub fn solve_eq(&self, c: &S, class: &IndexClass) -> ClassSolutions {
        match self {
            NExpr::Affine { c0, c1 } => {
                if c1.is_zero() {
                    return if c0 == c {
                        ClassSolutions::All
                    } else {
                        ClassSolutions::None
                    };
                }
                let n = (c.clone() - c0.clone()) / c1.clone();
                match scalar_to_index(&n) {
                    Some(n) if class.contains(n) => ClassSolutions::One(n),
                    _ => ClassSolutions::None,
                }
            }
            NExpr::Geo {
                limit,
                coef,
                ratio,
                base,
            } => {
                if coef.is_zero() {
                    return if limit == c {
                        ClassSolutions::All
                    } else {
                        ClassSolutions::None
                    };
                }
                let want = c.clone() - limit.clone();
                if want.is_zero() {
                    return ClassSolutions::None;
                }
                // coef·ratio^k decreases in magnitude; scan until below |want|.
                let mut k = class.start.max(*base) - base;
                let mut cur = coef.clone() * pow(ratio, k);
                while cur.abs() >= want.abs() {
                    if cur == want && class.contains(base + k) {
                        return ClassSolutions::One(base + k);
                    }
                    k += 1;
                    cur = cur * ratio.clone();
                }
                ClassSolutions::None
            }
        }
    }

    /// All `n` in the class with `self(n) ≤ c` (or `< c` when `strict`).
    pub fn solve_le(&self, c: &S, strict: bool, class: &IndexClass) -> ClassSolutions {
        let ok = |v: &S| if strict { v < c } else { v <= c };
        match self {
            NExpr::Affine { c0: _, c1 } => match c1.cmp(&S::zero()) {
                std::cmp::Ordering::Equal => {
                    if ok(&self.eval(class.start)) {
                        ClassSolutions::All
                    } else {
                        ClassSolutions::None
                    }
                }
                std::cmp::Ordering::Greater => {
                    // Increasing: solutions form a prefix.
                    let mut best: Option<u64> = None;
                    let mut n = class.start;
                    loop {
                        if ok(&self.eval(n)) {
                            best = Some(n);
                            n += class.step;
                        } else {
                            break;
                        }
                    }
                    match best {
                        None => ClassSolutions::None,
                        Some(b) => ClassSolutions::UpTo(b),
                    }
                }
                std::cmp::Ordering::Less => {
                    // Decreasing: solutions form a suffix.
                    let mut n = class.start;
                    while !ok(&self.eval(n)) {
                        n += class.step;
                    }
                    ClassSolutions::From(n)
                }
            },
            NExpr::Geo { limit, coef, .. } => {
                let start = class.start.max(self.geo_base());
                match coef.cmp(&S::zero()) {
                    std::cmp::Ordering::Equal => {
                        if ok(limit) {
                            ClassSolutions::All
                        } else {
                            ClassSolutions::None
                        }
                    }
                    std::cmp::Ordering::Less => {
                        // Values increase toward the limit, never reaching it.
                        if limit <= c {
                            return ClassSolutions::All;
                        }
                        let mut best: Option<u64> = None;
                        let mut n = start;
                        while ok(&self.eval(n)) {
                            best = Some(n);
                            n += class.step;
                        }
                        match best {
                            None => ClassSolutions::None,
                            Some(b) => ClassSolutions::UpTo(b),
                        }
                    }
                    std::cmp::Ordering::Greater => {
                        // Values decrease toward the limit, staying above it.
                        if ok(&self.eval(start)) {
                            return ClassSolutions::All;
                        }
                        if limit >= c {
                            return ClassSolutions::None;
                        }
                        let mut n = start;
                        loop {
                            if ok(&self.eval(n)) {
                                return ClassSolutions::From(n);
                            }
                            n += class.step;
                        }
                    }
                }
            }
        }
    }

    /// All `n` in the class with `self(n) ≥ c` (or `> c` when `strict`).
    pub fn solve_ge(&self, c: &S, strict: bool, class: &IndexClass) -> ClassSolutions {
        let negated = match self {
            NExpr::Affine { c0, c1 } => NExpr::Affine {
                c0: -c0.clone(),
                c1: -c1.clone(),
            },
            NExpr::Geo {
                limit,
                coef,
                ratio,
                base,
            } => NExpr::Geo {
                limit: -limit.clone(),
                coef: -coef.clone(),
                ratio: ratio.clone(),
                base: *base,
            },
        };
        negated.solve_le(&-c.clone(), strict, class)
    }

    /// Reindex by `d`: the returned expression sends `n` to `self(n + d)`.
    pub fn shift(&self, d: i64) -> NExpr<S> {
        match self {
            NExpr::Affine { c0, c1 } => NExpr::Affine {
                c0: c0.clone() + c1.clone() * S::from_int(d),
                c1: c1.clone(),
            },
            NExpr::Geo {
                limit,
                coef,
                ratio,
                base,
            } => {
                let factor = if d >= 0 {
                    pow(ratio, d as u64)
                } else {
                    S::one() / pow(ratio, (-d) as u64)
                };
                NExpr::Geo {
                    limit: limit.clone(),
                    coef: coef.clone() * factor,
                    ratio: ratio.clone(),
                    base: *base,
                }
            }
        }
    }

    /// Find an integer shift `d` with `self(n) == other(n + d)` for all `n`,
    /// together with validity: the caller must still check that `n + d` lies
    /// in the other family's index range.
    pub fn match_shift(&self, other: &NExpr<S>) -> Option<i64> {
        match (self, other) {
            (NExpr::Affine { c0, c1 }, NExpr::Affine { c0: d0, c1: d1 }) => {
                if c1 != d1 {
                    return None;
                }
                if c1.is_zero() {
                    return if c0 == d0 { Some(0) } else { None };
                }
                // c0 + c1 n == d0 + d1 (n+d)  =>  d = (c0 - d0) / d1
                let d = (c0.clone() - d0.clone()) / d1.clone();
                scalar_to_int(&d)
            }
            (
                NExpr::Geo {
                    limit,
                    coef,
                    ratio,
                    base,
                },
                NExpr::Geo {
                    limit: l2,
                    coef: c2,
                    ratio: r2,
                    base: b2,
                },
            ) => {
                if ratio != r2 || limit != l2 {
                    return None;
                }
                if coef.is_zero() || c2.is_zero() {
                    return (coef == c2).then_some(0);
                }
                // coef·ratio^(n-base) == c2·ratio^(n+d-b2): find integer e
                // with coef == c2·ratio^e, then d = e + b2 - base.
                let mut e: i64 = 0;
                let mut probe = c2.clone();
                // Scale down while |probe| > |coef|.
                while probe.abs() > coef.abs() {
                    probe = probe * ratio.clone();
                    e += 1;
                }
                // Scale up while |probe| < |coef|.
                while probe.abs() < coef.abs() {
                    probe = probe / ratio.clone();
                    e -= 1;
                }
                if probe == *coef {
                    Some(e + *b2 as i64 - *base as i64)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

fn scalar_to_int<S: Scalar>(x: &S) -> Option<i64> {
    // Small search: endpoint index shifts are tiny in practice.
    (-1024i64..=1024).find(|&k| *x == S::from_int(k))
}

fn scalar_to_index<S: Scalar>(x: &S) -> Option<u64> {
    if *x < S::zero() {
        return None;
    }
    scalar_to_int(x).and_then(|k| u64::try_from(k).ok())
}

/// Interval whose endpoints depend on the family index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymInterval<S> {
    pub lo: NExpr<S>,
    pub hi: NExpr<S>,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl<S: Scalar> SymInterval<S> {
    pub fn at(&self, n: u64) -> Option<Interval<S>> {
        Interval::new(self.lo.eval(n), self.lo_closed, self.hi.eval(n), self.hi_closed)
    }

    pub fn affine_image(&self, slope: &S, intercept: &NExpr<S>) -> Result<SymInterval<S>, FormError> {
        let a = self.lo.scale_add(slope, intercept)?;
        let b = self.hi.scale_add(slope, intercept)?;
        if *slope > S::zero() {
            Ok(SymInterval {
                lo: a,
                hi: b,
                lo_closed: self.lo_closed,
                hi_closed: self.hi_closed,
            })
        } else {
            Ok(SymInterval {
                lo: b,
                hi: a,
                lo_closed: self.hi_closed,
                hi_closed: self.lo_closed,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};
    use crate::Q;

    #[test]
    fn interval_construction_rejects_empty_sets() {
        assert!(Interval::<Q>::open(int(1), int(1)).is_none());
        assert!(Interval::<Q>::new(int(2), true, int(1), true).is_none());
        assert!(Interval::<Q>::closed(int(1), int(1)).is_some());
    }

    #[test]
    fn affine_images_swap_bounds_on_negative_slope() {
        let i = Interval::<Q>::new(int(0), true, int(1), false).unwrap();
        let m = Affine::new(int::<Q>(-2), int(4));
        let img = i.affine_image(&m);
        assert_eq!(img, Interval::new(int(2), false, int(4), true).unwrap());
    }

    #[test]
    fn overlap_classification() {
        let target = Interval::<Q>::closed(int(2), int(3)).unwrap();
        let whole = Interval::<Q>::open(int(1), int(4)).unwrap();
        assert_eq!(whole.classify_against_closed(&target), Overlap::Whole);
        let outside = Interval::<Q>::closed(int(0), int(1)).unwrap();
        assert_eq!(outside.classify_against_closed(&target), Overlap::Empty);
        let touch = Interval::<Q>::closed(int(0), int(2)).unwrap();
        assert_eq!(
            touch.classify_against_closed(&target),
            Overlap::SinglePoint(int(2))
        );
        let partial = Interval::<Q>::closed(int(0), ratio(5, 2)).unwrap();
        assert!(matches!(
            partial.classify_against_closed(&target),
            Overlap::Partial(_)
        ));
    }

    #[test]
    fn affine_nexpr_solving() {
        // 2n - 2 over n >= 2
        let f = NExpr::<Q>::affine(int(-2), int(2));
        let class = IndexClass::new(2, 1);
        assert_eq!(f.eval(3), int(4));
        assert_eq!(f.solve_eq(&int(6), &class), ClassSolutions::One(4));
        assert_eq!(f.solve_eq(&int(5), &class), ClassSolutions::None);
        assert_eq!(f.solve_le(&int(7), false, &class), ClassSolutions::UpTo(4));
        assert_eq!(f.solve_ge(&int(7), true, &class), ClassSolutions::From(5));
        assert!(f.ge0_all(&class));
        assert!(!f.gt0_all(&IndexClass::new(1, 1)));
    }

    #[test]
    fn geometric_nexpr_solving() {
        // 3 - 2^(2-n) = 3 + (-1)·(1/2)^(n-2) over n >= 2
        let f = NExpr::<Q>::Geo {
            limit: int(3),
            coef: int(-1),
            ratio: ratio(1, 2),
            base: 2,
        };
        let class = IndexClass::new(2, 1);
        assert_eq!(f.eval(2), int(2));
        assert_eq!(f.eval(3), ratio(5, 2));
        assert_eq!(f.solve_eq(&ratio(11, 4), &class), ClassSolutions::One(4));
        assert_eq!(f.solve_eq(&int(3), &class), ClassSolutions::None);
        // All values < 3.
        assert_eq!(f.solve_le(&int(3), true, &class), ClassSolutions::All);
        // Values >= 5/2 from n = 3 on.
        assert_eq!(f.solve_ge(&ratio(5, 2), false, &class), ClassSolutions::From(3));
        // Positivity for all n.
        assert!(f.gt0_all(&class));
    }

    #[test]
    fn shift_matching_finds_index_offsets() {
        // lo(n) = 2n - 2; the same family one step down: f(n) = lo(n - 1) = 2n - 4.
        let lo = NExpr::<Q>::affine(int(-2), int(2));
        let img = NExpr::<Q>::affine(int(-4), int(2));
        assert_eq!(img.match_shift(&lo), Some(-1));
        let geo = |coef: Q, base: u64| NExpr::<Q>::Geo {
            limit: int(3),
            coef,
            ratio: ratio(1, 2),
            base,
        };
        // 2x - 3 applied to geo endpoints shifts the exponent by one.
        let f = geo(int(-2), 2);
        let g = geo(int(-1), 2);
        assert_eq!(f.match_shift(&g), Some(-1));
    }

    #[test]
    fn scale_add_keeps_forms_closed() {
        let lo = NExpr::<Q>::affine(int(1), int(1)); // n + 1
        let intercept = NExpr::<Q>::affine(int(-3), int(-2)); // -2n - 3
        let img = lo.scale_add(&int(3), &intercept).unwrap(); // 3(n+1) - 2n - 3 = n
        assert_eq!(img, NExpr::affine(int(0), int(1)));
        let geo = NExpr::<Q>::Geo {
            limit: int(3),
            coef: int(-1),
            ratio: ratio(1, 2),
            base: 2,
        };
        let img = geo.scale_add(&int(2), &NExpr::constant(int(-3))).unwrap();
        assert_eq!(
            img,
            NExpr::Geo {
                limit: int(3),
                coef: int(-2),
                ratio: ratio(1, 2),
                base: 2
            }
        );
    }

    #[test]
    fn solution_sets_meet_and_enumerate() {
        use ClassSolutions as CS;
        let class = IndexClass::new(3, 2); // 3, 5, 7, ...
        assert_eq!(CS::UpTo(9).meet(&CS::From(5), &class), CS::Within(5, 9));
        assert_eq!(CS::UpTo(9).meet(&CS::From(10), &class), CS::None);
        assert_eq!(CS::All.meet(&CS::UpTo(4), &class), CS::One(3));
        assert_eq!(CS::From(4).meet(&CS::All, &class), CS::From(5));
        assert_eq!(CS::Within(5, 11).meet(&CS::UpTo(7), &class), CS::Within(5, 7));
        assert_eq!(CS::Within(4, 20).first_member(&class), Some(5));
        assert!(CS::Within(4, 20).extends_beyond(&class, 18));
        assert!(!CS::Within(4, 20).extends_beyond(&class, 19));
        assert_eq!(
            CS::Within(4, 12).iter_up_to(&class, 30).collect::<Vec<_>>(),
            vec![5, 7, 9, 11]
        );
        assert_eq!(class.first_at_or_after(6), 7);
        assert_eq!(class.last_at_or_before(6), Some(5));
        assert_eq!(class.last_at_or_before(2), None);
    }
}
