//! Piecewise affine interval maps with countable ordered partitions.
//!
//! A map is described by two ingredients: an [`IntervalPartition`] of the
//! ambient interval into ordered closed intervals (finitely many explicit
//! ones, optionally followed by an indexed family), and a
//! [`PiecewiseAffineMap`] giving an affine rule on each piece of each
//! interval, with optional single-point overrides. [`MarkovMap::certify`]
//! checks the combinatorial conditions, every image either misses,
//! touches at a boundary point, or wholly covers each interval, and the
//! resulting certificate unlocks the derived machinery: the 0-1 transition
//! structure, the induced ultragraph, escape data for points that leave
//! the domain through a gap, and exact backward orbits.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::interval::{
    Affine, ClassSolutions, FormError, IndexClass, Interval, NExpr, Overlap, SymInterval,
};
use crate::report::{CheckRecord, Report};
use crate::ultragraph::{classes_meet, Edge, EdgeFamily, GraphError, Ultragraph};
use crate::vertexset::{SetError, VertexSet};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarkovError {
    #[error("a partition needs at least one interval")]
    EmptyPartition,
    #[error("partition interval {0} is not closed")]
    NotClosed(u64),
    #[error("family starts at {family} but the explicit intervals end at {explicit}")]
    FamilyStart { family: u64, explicit: u64 },
    #[error("family endpoints use a geometric base past the family start")]
    GeoBase,
    #[error("piece {piece} on {interval} has slope zero")]
    ZeroSlope { interval: String, piece: usize },
    #[error("piece {piece} on {interval} has an empty or single-point domain")]
    DegeneratePiece { interval: String, piece: usize },
    #[error("two overrides at point {0}")]
    DuplicateOverride(String),
    #[error("family rules for {0} and {1} overlap")]
    OverlappingRules(String, String),
    #[error("point {0} is outside the map's domain")]
    NotInDomain(String),
    #[error("point {0} left the domain outside every gap")]
    EscapeOutsideGaps(String),
    #[error("backward orbit reached partition boundary point {0}")]
    OrbitBoundaryPoint(String),
    #[error("transition rows are not expressible through shifted index sets: {0}")]
    UnrepresentableRows(String),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Closed intervals `[lo(n), hi(n)]` for every index `n >= start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionFamily<S> {
    pub start: u64,
    pub lo: NExpr<S>,
    pub hi: NExpr<S>,
}

impl<S: Scalar> PartitionFamily<S> {
    pub fn class(&self) -> IndexClass {
        IndexClass::new(self.start, 1)
    }

    pub fn interval(&self) -> SymInterval<S> {
        SymInterval {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            lo_closed: true,
            hi_closed: true,
        }
    }
}

/// Ordered partition of the domain: explicit closed intervals `I_1..I_k`,
/// optionally followed by a family `I_n` for `n >= k+1`, inside the ambient
/// interval starting at `ambient_lo`. With a family the ambient interval is
/// half-open at the top (the intervals accumulate at the sup without
/// reaching it); without one it is closed and ends at the last interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalPartition<S> {
    explicit: Vec<Interval<S>>,
    family: Option<PartitionFamily<S>>,
    ambient_lo: S,
    ambient_hi: Option<S>,
}

impl<S: Scalar> IntervalPartition<S> {
    pub fn new(
        explicit: Vec<Interval<S>>,
        family: Option<PartitionFamily<S>>,
        ambient_lo: S,
        ambient_hi: Option<S>,
    ) -> Result<Self, MarkovError> {
        if explicit.is_empty() && family.is_none() {
            return Err(MarkovError::EmptyPartition);
        }
        for (i, iv) in explicit.iter().enumerate() {
            if !(iv.lo_closed && iv.hi_closed) {
                return Err(MarkovError::NotClosed(i as u64 + 1));
            }
        }
        if let Some(f) = &family {
            if f.start != explicit.len() as u64 + 1 {
                return Err(MarkovError::FamilyStart {
                    family: f.start,
                    explicit: explicit.len() as u64,
                });
            }
            for e in [&f.lo, &f.hi] {
                if let NExpr::Geo { base, .. } = e {
                    if *base > f.start {
                        return Err(MarkovError::GeoBase);
                    }
                }
            }
        }
        Ok(IntervalPartition {
            explicit,
            family,
            ambient_lo,
            ambient_hi,
        })
    }

    pub fn explicit_intervals(&self) -> &[Interval<S>] {
        &self.explicit
    }

    pub fn family(&self) -> Option<&PartitionFamily<S>> {
        self.family.as_ref()
    }

    pub fn ambient(&self) -> (&S, Option<&S>) {
        (&self.ambient_lo, self.ambient_hi.as_ref())
    }

    /// All interval indices as a vertex set.
    pub fn index_set(&self) -> VertexSet {
        match &self.family {
            Some(_) => VertexSet::tail(1).expect("index tails are well-formed"),
            None => VertexSet::finite(1..=self.explicit.len() as u64)
                .expect("index ranges are well-formed"),
        }
    }

    pub fn interval_at(&self, n: u64) -> Option<Interval<S>> {
        if n == 0 {
            return None;
        }
        if n <= self.explicit.len() as u64 {
            return Some(self.explicit[(n - 1) as usize].clone());
        }
        let f = self.family.as_ref()?;
        if n >= f.start {
            f.interval().at(n)
        } else {
            None
        }
    }

    /// The open gap between interval `j` and interval `j+1`; `None` when
    /// the two touch or `j+1` does not exist.
    pub fn escape_gap(&self, j: u64) -> Option<Interval<S>> {
        let a = self.interval_at(j)?;
        let b = self.interval_at(j + 1)?;
        Interval::new(a.hi, false, b.lo, false)
    }

    fn family_members_containing(&self, x: &S) -> Vec<u64> {
        let Some(f) = &self.family else {
            return Vec::new();
        };
        let class = f.class();
        let sols = f
            .lo
            .solve_le(x, false, &class)
            .meet(&f.hi.solve_ge(x, false, &class), &class);
        let Some(first) = sols.first_member(&class) else {
            return Vec::new();
        };
        sols.iter_up_to(&class, first + 2 * class.step)
            .take(3)
            .collect()
    }

    /// Indices of the intervals containing `x` (two at a shared endpoint).
    pub fn containing_indices(&self, x: &S) -> Vec<u64> {
        let mut out: Vec<u64> = self
            .explicit
            .iter()
            .enumerate()
            .filter(|(_, iv)| iv.contains(x))
            .map(|(i, _)| i as u64 + 1)
            .collect();
        out.extend(self.family_members_containing(x));
        out
    }

    pub fn in_domain(&self, x: &S) -> bool {
        !self.containing_indices(x).is_empty()
    }

    /// The unique interval whose interior contains `x`, if any.
    pub fn interior_index_of(&self, x: &S) -> Option<u64> {
        for (i, iv) in self.explicit.iter().enumerate() {
            if *x > iv.lo && *x < iv.hi {
                return Some(i as u64 + 1);
            }
        }
        for n in self.family_members_containing(x) {
            let iv = self.interval_at(n).expect("containing members exist");
            if *x > iv.lo && *x < iv.hi {
                return Some(n);
            }
        }
        None
    }

    /// Membership in the boundary set (the interval endpoints).
    pub fn in_gamma(&self, x: &S) -> bool {
        if self.explicit.iter().any(|iv| iv.lo == *x || iv.hi == *x) {
            return true;
        }
        if let Some(f) = &self.family {
            let class = f.class();
            !f.lo.solve_eq(x, &class).is_empty() || !f.hi.solve_eq(x, &class).is_empty()
        } else {
            false
        }
    }

    /// For `x` outside the domain: the index `j` with `x` in the open gap
    /// between intervals `j` and `j+1`.
    pub fn escape_index_of(&self, x: &S) -> Option<u64> {
        if self.in_domain(x) {
            return None;
        }
        let mut below: Option<u64> = None;
        for (i, iv) in self.explicit.iter().enumerate() {
            if iv.hi < *x {
                below = Some(i as u64 + 1);
            }
        }
        if let Some(f) = &self.family {
            let class = f.class();
            match f.hi.solve_le(x, true, &class) {
                ClassSolutions::None => {}
                ClassSolutions::All | ClassSolutions::From(_) => return None,
                ClassSolutions::UpTo(b) | ClassSolutions::One(b) | ClassSolutions::Within(_, b) => {
                    below = Some(below.map_or(b, |p| p.max(b)));
                }
            }
        }
        let j = below?;
        let next = self.interval_at(j + 1)?;
        (next.lo > *x).then_some(j)
    }
}

/// One affine branch on a concrete sub-interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece<S> {
    pub domain: Interval<S>,
    pub map: Affine<S>,
}

/// One affine branch on an index-dependent sub-interval: the map is
/// `x -> slope·x + intercept(n)` on interval `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymPiece<S> {
    pub domain: SymInterval<S>,
    pub slope: S,
    pub intercept: NExpr<S>,
}

impl<S: Scalar> SymPiece<S> {
    pub fn map_at(&self, n: u64) -> Affine<S> {
        Affine::new(self.slope.clone(), self.intercept.eval(n))
    }

    pub fn image(&self) -> Result<SymInterval<S>, FormError> {
        self.domain.affine_image(&self.slope, &self.intercept)
    }
}

/// The branch list shared by every interval index in `class`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyRule<S> {
    pub class: IndexClass,
    pub pieces: Vec<SymPiece<S>>,
}

/// The map data: per-interval branch lists for the explicit intervals,
/// per-class branch lists for the family, and single-point overrides that
/// replace the branch value wherever they sit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseAffineMap<S> {
    explicit: Vec<Vec<Piece<S>>>,
    rules: Vec<FamilyRule<S>>,
    overrides: Vec<(S, S)>,
}

impl<S: Scalar> PiecewiseAffineMap<S> {
    pub fn new(
        explicit: Vec<Vec<Piece<S>>>,
        rules: Vec<FamilyRule<S>>,
        overrides: Vec<(S, S)>,
    ) -> Result<Self, MarkovError> {
        for (i, pieces) in explicit.iter().enumerate() {
            let label = interval_label(i as u64 + 1);
            for (j, pc) in pieces.iter().enumerate() {
                if pc.map.slope.is_zero() {
                    return Err(MarkovError::ZeroSlope {
                        interval: label.clone(),
                        piece: j,
                    });
                }
                if pc.domain.is_point() {
                    return Err(MarkovError::DegeneratePiece {
                        interval: label.clone(),
                        piece: j,
                    });
                }
            }
        }
        for (r, rule) in rules.iter().enumerate() {
            let label = class_label(&rule.class);
            for (j, sp) in rule.pieces.iter().enumerate() {
                if sp.slope.is_zero() {
                    return Err(MarkovError::ZeroSlope {
                        interval: label.clone(),
                        piece: j,
                    });
                }
                let width = sp.domain.hi.sub(&sp.domain.lo)?;
                if !width.gt0_all(&rule.class) {
                    return Err(MarkovError::DegeneratePiece {
                        interval: label.clone(),
                        piece: j,
                    });
                }
            }
            for other in &rules[..r] {
                if classes_meet(&other.class, &rule.class) {
                    return Err(MarkovError::OverlappingRules(
                        class_label(&other.class),
                        class_label(&rule.class),
                    ));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (p, _) in &overrides {
            if !seen.insert(p.clone()) {
                return Err(MarkovError::DuplicateOverride(pt(p)));
            }
        }
        Ok(PiecewiseAffineMap {
            explicit,
            rules,
            overrides,
        })
    }

    pub fn explicit_pieces(&self) -> &[Vec<Piece<S>>] {
        &self.explicit
    }

    pub fn rules(&self) -> &[FamilyRule<S>] {
        &self.rules
    }

    pub fn overrides(&self) -> &[(S, S)] {
        &self.overrides
    }

    pub fn rule_for(&self, n: u64) -> Option<&FamilyRule<S>> {
        self.rules.iter().find(|r| r.class.contains(n))
    }

    pub fn override_value(&self, x: &S) -> Option<&S> {
        self.overrides
            .iter()
            .find(|(p, _)| p == x)
            .map(|(_, v)| v)
    }

    /// The concrete branch list on interval `n`.
    pub fn pieces_at(&self, n: u64) -> Option<Vec<Piece<S>>> {
        if n == 0 {
            return None;
        }
        if n <= self.explicit.len() as u64 {
            return Some(self.explicit[(n - 1) as usize].clone());
        }
        let rule = self.rule_for(n)?;
        Some(instantiate_rule(rule, n))
    }

    /// Value at `x`: the override if one sits there, otherwise the lowest
    /// branch whose domain contains `x`.
    pub fn value_at(&self, x: &S) -> Option<S> {
        if let Some(v) = self.override_value(x) {
            return Some(v.clone());
        }
        for pieces in &self.explicit {
            for pc in pieces {
                if pc.domain.contains(x) {
                    return Some(pc.map.apply(x));
                }
            }
        }
        for rule in &self.rules {
            for sp in &rule.pieces {
                let sols = sp
                    .domain
                    .lo
                    .solve_le(x, !sp.domain.lo_closed, &rule.class)
                    .meet(
                        &sp.domain.hi.solve_ge(x, !sp.domain.hi_closed, &rule.class),
                        &rule.class,
                    );
                if let Some(n) = sols.first_member(&rule.class) {
                    return Some(sp.map_at(n).apply(x));
                }
            }
        }
        None
    }
}

fn instantiate_rule<S: Scalar>(rule: &FamilyRule<S>, n: u64) -> Vec<Piece<S>> {
    rule.pieces
        .iter()
        .map(|sp| Piece {
            domain: sp.domain.at(n).expect("family piece domains are nonempty"),
            map: sp.map_at(n),
        })
        .collect()
}

/// A certified interval map; constructing one runs the full validation.
#[derive(Debug, Clone)]
pub struct MarkovMap<S> {
    partition: IntervalPartition<S>,
    map: PiecewiseAffineMap<S>,
    horizon: u64,
    certificate: Report,
}

/// 0-1 transition structure: row `i` lists the intervals wholly covered by
/// the image of interval `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    pub explicit_rows: Vec<VertexSet>,
    pub family_rows: Vec<FamilyRow>,
}

/// Uniform row pattern for the interval indices in `class`: row `n` is
/// `{n + d : d in offsets, n + d >= 1}` together with `extra`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyRow {
    pub class: IndexClass,
    pub offsets: Vec<i64>,
    pub extra: VertexSet,
}

impl TransitionMatrix {
    pub fn row(&self, n: u64) -> Option<VertexSet> {
        if n == 0 {
            return None;
        }
        if n <= self.explicit_rows.len() as u64 {
            return Some(self.explicit_rows[(n - 1) as usize].clone());
        }
        self.family_rows
            .iter()
            .find(|fr| fr.class.contains(n))
            .map(|fr| row_from(&fr.offsets, &fr.extra, n))
    }

    pub fn entry(&self, i: u64, j: u64) -> Option<bool> {
        self.row(i).map(|r| r.member(j))
    }
}

impl fmt::Display for TransitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.explicit_rows.iter().enumerate() {
            writeln!(f, "row {}: {}", i + 1, row)?;
        }
        for fr in &self.family_rows {
            let terms: Vec<String> = fr.offsets.iter().map(|&d| offset_term(d)).collect();
            let mut rhs = format!("{{{}}}", terms.join(", "));
            if fr.offsets.is_empty() {
                rhs = String::from("{}");
            }
            if !fr.extra.is_empty() {
                rhs.push_str(&format!(" u {}", fr.extra));
            }
            writeln!(f, "rows {}: {}", class_label(&fr.class), rhs)?;
        }
        Ok(())
    }
}

fn offset_term(d: i64) -> String {
    match d.cmp(&0) {
        std::cmp::Ordering::Less => format!("n-{}", -d),
        std::cmp::Ordering::Equal => String::from("n"),
        std::cmp::Ordering::Greater => format!("n+{d}"),
    }
}

fn row_from(offsets: &[i64], extra: &VertexSet, n: u64) -> VertexSet {
    let fam = EdgeFamily {
        prefix: String::new(),
        class: IndexClass::new(1, 1),
        offsets: offsets.to_vec(),
        extra: extra.clone(),
    };
    fam.range_at(n)
}

/// How a point leaves the domain, when it does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EscapeOutcome<S> {
    Escaped(EscapeData<S>),
    NotEscaping { steps: u64 },
}

/// Forward orbit data for a point that reaches a gap: `tau` applications
/// land `x` on `target` inside the open gap after interval `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscapeData<S> {
    pub x: S,
    pub tau: u64,
    pub j: u64,
    pub target: S,
    pub iterates: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreimageHit<S> {
    pub interval: u64,
    pub point: S,
}

/// A preimage that exists beyond the enumeration horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverflowNote<S> {
    pub depth: u32,
    pub interval: u64,
    pub point: S,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreimageSet<S> {
    pub hits: Vec<PreimageHit<S>>,
    pub overflows: Vec<OverflowNote<S>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitNode<S> {
    pub point: S,
    pub depth: u32,
    pub interval: u64,
}

/// A point reached again at a deeper level of the backward orbit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recurrence<S> {
    pub point: S,
    pub first_depth: u32,
    pub revisit_depth: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitTree<S> {
    pub target: S,
    pub depth: u32,
    pub horizon: u64,
    pub nodes: Vec<OrbitNode<S>>,
    pub recurrences: Vec<Recurrence<S>>,
    pub overflows: Vec<OverflowNote<S>>,
}

impl<S: Scalar> OrbitTree<S> {
    pub fn points_in(&self, interval: u64) -> Vec<&S> {
        self.nodes
            .iter()
            .filter(|nd| nd.interval == interval)
            .map(|nd| &nd.point)
            .collect()
    }

    pub fn depth_of(&self, point: &S) -> Option<u32> {
        self.nodes
            .iter()
            .find(|nd| nd.point == *point)
            .map(|nd| nd.depth)
    }
}

impl<S: Scalar> MarkovMap<S> {
    pub fn certify(
        partition: IntervalPartition<S>,
        map: PiecewiseAffineMap<S>,
        horizon: u64,
    ) -> Result<MarkovMap<S>, Box<Report>> {
        let certificate = validate_markov(&partition, &map, horizon);
        if certificate.all_pass() {
            Ok(MarkovMap {
                partition,
                map,
                horizon,
                certificate,
            })
        } else {
            Err(Box::new(certificate))
        }
    }

    pub fn partition(&self) -> &IntervalPartition<S> {
        &self.partition
    }

    pub fn map(&self) -> &PiecewiseAffineMap<S> {
        &self.map
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn certificate(&self) -> &Report {
        &self.certificate
    }

    pub fn eval(&self, x: &S) -> Option<S> {
        self.map.value_at(x)
    }

    /// Value of the branch attached to interval `i` at `x`.
    pub fn branch_value(&self, i: u64, x: &S) -> Option<S> {
        let interval = self.partition.interval_at(i)?;
        if !interval.contains(x) {
            return None;
        }
        if let Some(v) = self.map.override_value(x) {
            return Some(v.clone());
        }
        let pieces = self.map.pieces_at(i)?;
        pieces
            .iter()
            .find(|pc| pc.domain.contains(x))
            .map(|pc| pc.map.apply(x))
    }

    /// All preimages of `y` under the branch attached to interval `i`.
    pub fn branch_preimages(&self, i: u64, y: &S) -> Vec<S> {
        let mut out = Vec::new();
        if let Some(pieces) = self.map.pieces_at(i) {
            for pc in &pieces {
                let inv = pc.map.inverse().expect("branch slopes are nonzero");
                let x = inv.apply(y);
                if pc.domain.contains(&x) && self.map.override_value(&x).is_none() {
                    out.push(x);
                }
            }
        }
        if let Some(interval) = self.partition.interval_at(i) {
            for (p, v) in &self.map.overrides {
                if v == y && interval.contains(p) {
                    out.push(p.clone());
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn transition_matrix(&self) -> Result<TransitionMatrix, MarkovError> {
        let analysis = analyze_rows(&self.partition, &self.map);
        if !analysis.representable {
            let witness = analysis
                .report
                .failures()
                .next()
                .map(|r| r.witness.clone().unwrap_or_else(|| r.item.clone()))
                .unwrap_or_default();
            return Err(MarkovError::UnrepresentableRows(witness));
        }
        Ok(TransitionMatrix {
            explicit_rows: analysis.explicit_rows,
            family_rows: analysis.family_rows,
        })
    }

    /// The ultragraph with one vertex per interval and one edge per
    /// interval, ranging over the transition row.
    pub fn induced_ultragraph(&self) -> Result<Ultragraph, MarkovError> {
        let tm = self.transition_matrix()?;
        let vertices = self.partition.index_set();
        let edges: Vec<Edge> = tm
            .explicit_rows
            .iter()
            .enumerate()
            .map(|(i, row)| Edge {
                id: format!("e{}", i + 1),
                source: i as u64 + 1,
                range: row.clone(),
            })
            .collect();
        let mut families = Vec::new();
        if !tm.family_rows.is_empty() {
            let all_same = tm
                .family_rows
                .windows(2)
                .all(|w| w[0].offsets == w[1].offsets && w[0].extra == w[1].extra);
            if all_same {
                let f = self.partition.family().expect("family rows imply a family");
                families.push(EdgeFamily {
                    prefix: String::from("e"),
                    class: f.class(),
                    offsets: tm.family_rows[0].offsets.clone(),
                    extra: tm.family_rows[0].extra.clone(),
                });
            } else {
                for fr in &tm.family_rows {
                    families.push(EdgeFamily {
                        prefix: String::from("e"),
                        class: fr.class,
                        offsets: fr.offsets.clone(),
                        extra: fr.extra.clone(),
                    });
                }
            }
        }
        Ok(Ultragraph::new(vertices, edges, families)?)
    }

    /// Iterate `x` forward until it leaves the domain or `bound` steps
    /// pass; a revisited point short-circuits to `NotEscaping`.
    pub fn escape_data(&self, x: &S, bound: u64) -> Result<EscapeOutcome<S>, MarkovError> {
        if !self.partition.in_domain(x) {
            return Err(MarkovError::NotInDomain(pt(x)));
        }
        let mut iterates = vec![x.clone()];
        let mut seen: BTreeSet<S> = iterates.iter().cloned().collect();
        let mut cur = x.clone();
        for step in 1..=bound {
            cur = self
                .eval(&cur)
                .expect("iterates stay in the domain until they escape");
            iterates.push(cur.clone());
            if !self.partition.in_domain(&cur) {
                let j = self
                    .partition
                    .escape_index_of(&cur)
                    .ok_or_else(|| MarkovError::EscapeOutsideGaps(pt(&cur)))?;
                return Ok(EscapeOutcome::Escaped(EscapeData {
                    x: x.clone(),
                    tau: step,
                    j,
                    target: cur,
                    iterates,
                }));
            }
            if !seen.insert(cur.clone()) {
                return Ok(EscapeOutcome::NotEscaping { steps: step });
            }
        }
        Ok(EscapeOutcome::NotEscaping { steps: bound })
    }

    /// All branch preimages of `t`, enumerating family branches up to
    /// `horizon` and noting the first preimage beyond it.
    pub fn preimages_of_point(&self, t: &S, horizon: u64) -> Result<PreimageSet<S>, MarkovError> {
        let mut hits = Vec::new();
        let mut overflows = Vec::new();
        for (i, pieces) in self.map.explicit.iter().enumerate() {
            for pc in pieces {
                let inv = pc.map.inverse().expect("branch slopes are nonzero");
                let x = inv.apply(t);
                if pc.domain.contains(&x) && self.map.override_value(&x).is_none() {
                    hits.push(PreimageHit {
                        interval: i as u64 + 1,
                        point: x,
                    });
                }
            }
        }
        for rule in &self.map.rules {
            let class = &rule.class;
            for sp in &rule.pieces {
                let inv_slope = S::one() / sp.slope.clone();
                let diff = NExpr::constant(t.clone()).sub(&sp.intercept)?;
                let x_expr = diff.scale_add(&inv_slope, &NExpr::constant(S::zero()))?;
                let lo_ok = sp.domain.lo.sub(&x_expr)?.solve_le(
                    &S::zero(),
                    !sp.domain.lo_closed,
                    class,
                );
                let hi_ok = sp.domain.hi.sub(&x_expr)?.solve_ge(
                    &S::zero(),
                    !sp.domain.hi_closed,
                    class,
                );
                let sols = lo_ok.meet(&hi_ok, class);
                for n in sols.iter_up_to(class, horizon) {
                    let x = x_expr.eval(n);
                    if self.map.override_value(&x).is_none() {
                        hits.push(PreimageHit {
                            interval: n,
                            point: x,
                        });
                    }
                }
                if let Some(beyond) = sols.first_member_beyond(class, horizon) {
                    overflows.push(OverflowNote {
                        depth: 1,
                        interval: beyond,
                        point: x_expr.eval(beyond),
                    });
                }
            }
        }
        for (p, v) in &self.map.overrides {
            if v == t {
                if let Some(i) = self.partition.containing_indices(p).first() {
                    hits.push(PreimageHit {
                        interval: *i,
                        point: p.clone(),
                    });
                }
            }
        }
        hits.sort_by(|a, b| (a.interval, &a.point).cmp(&(b.interval, &b.point)));
        hits.dedup();
        Ok(PreimageSet { hits, overflows })
    }

    /// Breadth-first backward orbit of `target`: every node is a preimage
    /// chain endpoint, recorded at its first depth; points reached again
    /// become recurrences. Every node must land in an interval's interior.
    pub fn backward_orbit(
        &self,
        target: &S,
        depth: u32,
        horizon: u64,
    ) -> Result<OrbitTree<S>, MarkovError> {
        let mut nodes: Vec<OrbitNode<S>> = Vec::new();
        let mut recurrences = Vec::new();
        let mut overflows = Vec::new();
        let mut first_seen: std::collections::BTreeMap<S, u32> = Default::default();
        let mut frontier = vec![target.clone()];
        for d in 1..=depth {
            let mut next = Vec::new();
            for y in &frontier {
                let pre = self.preimages_of_point(y, horizon)?;
                for note in pre.overflows {
                    overflows.push(OverflowNote { depth: d, ..note });
                }
                for hit in pre.hits {
                    if let Some(&first) = first_seen.get(&hit.point) {
                        recurrences.push(Recurrence {
                            point: hit.point,
                            first_depth: first,
                            revisit_depth: d,
                        });
                        continue;
                    }
                    if self.partition.interior_index_of(&hit.point) != Some(hit.interval) {
                        return Err(MarkovError::OrbitBoundaryPoint(pt(&hit.point)));
                    }
                    first_seen.insert(hit.point.clone(), d);
                    nodes.push(OrbitNode {
                        point: hit.point.clone(),
                        depth: d,
                        interval: hit.interval,
                    });
                    next.push(hit.point);
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        nodes.sort_by(|a, b| (a.depth, &a.point).cmp(&(b.depth, &b.point)));
        Ok(OrbitTree {
            target: target.clone(),
            depth,
            horizon,
            nodes,
            recurrences,
            overflows,
        })
    }

    /// Check that the interiors of the intervals indexed by `x_set` avoid
    /// the preimage of the escape gap: one record per concrete index and
    /// per symbolic index class.
    pub fn x_hypothesis_check(
        &self,
        escape: &EscapeData<S>,
        x_set: &VertexSet,
        horizon: u64,
    ) -> Result<Report, MarkovError> {
        x_set.expect_unprimed()?;
        let gap = self
            .partition
            .escape_gap(escape.j)
            .ok_or_else(|| MarkovError::EscapeOutsideGaps(pt(&escape.target)))?;
        let check = "escape-preimage-clear";
        let mut rep = Report::new();
        for (p, v) in &self.map.overrides {
            if gap.contains(v) {
                if let Some(i) = self.partition.interior_index_of(p) {
                    if x_set.member(i) {
                        rep.push(CheckRecord::fail(check, format!("v{i}"), pt(p)));
                    }
                }
            }
        }
        let family_start = self.partition.family().map(|f| f.start);
        let mut members: BTreeSet<u64> = x_set.explicit_part().clone();
        match family_start {
            Some(start) => {
                for c in x_set.tail_classes() {
                    for n in c.iter_up_to(start.saturating_sub(1)) {
                        members.insert(n);
                    }
                    for n in c.iter_up_to(horizon.min(start + 4 * c.step)) {
                        if n >= start {
                            members.insert(n);
                        }
                    }
                }
            }
            None => {
                members.extend(x_set.enumerate_up_to(horizon));
            }
        }
        for &i in &members {
            match self.member_gap_pullback(&gap, i) {
                None => rep.push(CheckRecord::pass(check, format!("v{i}"))),
                Some(w) => rep.push(CheckRecord::fail(check, format!("v{i}"), pt(&w))),
            }
        }
        if self.partition.family().is_some() {
            for xc in x_set.tail_classes() {
                let mut worst: Option<(u64, S)> = None;
                for rule in &self.map.rules {
                    for sp in &rule.pieces {
                        if let Some((n, w)) =
                            self.sym_gap_pullback_hit(&gap, sp, &rule.class, &xc)?
                        {
                            if worst.as_ref().is_none_or(|(m, _)| n < *m) {
                                worst = Some((n, w));
                            }
                        }
                    }
                }
                let item = format!("v_n for {}", class_label(&xc));
                match worst {
                    None => rep.push(CheckRecord::pass(check, item)),
                    Some((n, w)) => {
                        rep.push(CheckRecord::fail(check, item, format!("n={}: {}", n, pt(&w))))
                    }
                }
            }
        }
        Ok(rep.sorted())
    }

    /// A point of interval `i`'s interior that the branch sends into
    /// `gap`, if one exists.
    fn member_gap_pullback(&self, gap: &Interval<S>, i: u64) -> Option<S> {
        let interval = self.partition.interval_at(i)?;
        let interior = interval.interior()?;
        let pieces = self.map.pieces_at(i)?;
        for pc in &pieces {
            let inv = pc.map.inverse().expect("branch slopes are nonzero");
            let pullback = gap.affine_image(&inv);
            if let Some(hit) = pullback
                .intersect(&pc.domain)
                .and_then(|h| h.intersect(&interior))
            {
                let mut w = midpoint(&hit.lo, &hit.hi);
                while self.map.override_value(&w).is_some() {
                    w = midpoint(&hit.lo, &w);
                }
                return Some(w);
            }
        }
        None
    }

    /// First member of `xc` (also in `rc`) whose piece pulls the gap back
    /// into its domain, with a concrete witness point.
    fn sym_gap_pullback_hit(
        &self,
        gap: &Interval<S>,
        sp: &SymPiece<S>,
        rc: &IndexClass,
        xc: &IndexClass,
    ) -> Result<Option<(u64, S)>, MarkovError> {
        let inv_slope = S::one() / sp.slope.clone();
        let zero = NExpr::constant(S::zero());
        let a = NExpr::constant(gap.lo.clone())
            .sub(&sp.intercept)?
            .scale_add(&inv_slope, &zero)?;
        let b = NExpr::constant(gap.hi.clone())
            .sub(&sp.intercept)?
            .scale_add(&inv_slope, &zero)?;
        let (pb_lo, pb_hi) = if sp.slope > S::zero() { (a, b) } else { (b, a) };
        let above = pb_hi.sub(&sp.domain.lo)?.solve_ge(&S::zero(), true, rc);
        let below = sp.domain.hi.sub(&pb_lo)?.solve_ge(&S::zero(), true, rc);
        let sols = above.meet(&below, rc);
        let Some(n) = first_common(&sols, rc, xc) else {
            return Ok(None);
        };
        let w = self
            .member_gap_pullback(gap, n)
            .expect("solved members have a concrete pullback witness");
        Ok(Some((n, w)))
    }
}

/// Full validation: every record carries the check name, the item it
/// applies to, and a witness when it fails.
pub fn validate_markov<S: Scalar>(
    partition: &IntervalPartition<S>,
    map: &PiecewiseAffineMap<S>,
    horizon: u64,
) -> Report {
    let mut rep = partition_records(partition);
    let shapes_align = shape_records(partition, map, &mut rep);
    if !shapes_align {
        return rep.sorted();
    }
    rules_tile_records(partition, map, &mut rep);
    pieces_records(partition, map, &mut rep);
    let analysis = analyze_rows(partition, map);
    rep.extend(analysis.report.clone());
    sweep_records(partition, map, horizon, &analysis, &mut rep);
    rep.sorted()
}

struct RowAnalysis {
    report: Report,
    explicit_rows: Vec<VertexSet>,
    family_rows: Vec<FamilyRow>,
    representable: bool,
}

fn pt<S: Scalar>(x: &S) -> String {
    x.ratio_string()
}

fn midpoint<S: Scalar>(a: &S, b: &S) -> S {
    (a.clone() + b.clone()) / S::from_int(2)
}

fn class_label(c: &IndexClass) -> String {
    if c.step == 1 {
        format!("n>={}", c.start)
    } else {
        format!("n>={} step {}", c.start, c.step)
    }
}

fn interval_label(n: u64) -> String {
    format!("I{n}")
}

fn nexpr_eq<S: Scalar>(a: &NExpr<S>, b: &NExpr<S>) -> bool {
    match a.sub(b) {
        Ok(d) => d.as_constant().is_some_and(|c| c.is_zero()),
        Err(_) => false,
    }
}

/// First index in both `sols` (over `rc`) and the progression `xc`.
fn first_common(sols: &ClassSolutions, rc: &IndexClass, xc: &IndexClass) -> Option<u64> {
    let first = sols.first_member(rc)?;
    let mut n = rc.first_at_or_after(first.max(xc.start));
    let window = num_integer::lcm(rc.step, xc.step);
    let end = n.saturating_add(window);
    while n <= end {
        if !sols.contains(rc, n) {
            return None;
        }
        if xc.contains(n) {
            return Some(n);
        }
        n += rc.step;
    }
    None
}

fn sols_to_set(sols: &ClassSolutions, class: &IndexClass) -> VertexSet {
    match sols {
        ClassSolutions::None => VertexSet::empty(),
        ClassSolutions::All => VertexSet::progression(class.start, class.step)
            .expect("progressions over positive indices are well-formed"),
        ClassSolutions::From(b) => {
            VertexSet::progression(class.first_at_or_after(*b), class.step)
                .expect("progressions over positive indices are well-formed")
        }
        ClassSolutions::One(b) => {
            VertexSet::singleton(*b).expect("solution members are positive")
        }
        ClassSolutions::UpTo(b) | ClassSolutions::Within(_, b) => {
            VertexSet::finite(sols.iter_up_to(class, *b)).expect("finite index sets are well-formed")
        }
    }
}

fn partition_records<S: Scalar>(p: &IntervalPartition<S>) -> Report {
    let mut rep = Report::new();
    let k = p.explicit.len();
    let first_lo = match p.explicit.first() {
        Some(iv) => iv.lo.clone(),
        None => p
            .family
            .as_ref()
            .expect("partitions are nonempty")
            .lo
            .eval(1),
    };
    if first_lo == p.ambient_lo {
        rep.push(CheckRecord::pass("partition-start", "I1"));
    } else {
        rep.push(CheckRecord::fail("partition-start", "I1", pt(&first_lo)));
    }
    for (i, iv) in p.explicit.iter().enumerate() {
        let item = interval_label(i as u64 + 1);
        if iv.is_point() {
            rep.push(CheckRecord::fail("partition-nondegenerate", item, pt(&iv.lo)));
        } else {
            rep.push(CheckRecord::pass("partition-nondegenerate", item));
        }
    }
    for i in 0..k.saturating_sub(1) {
        let item = format!("I{}/I{}", i + 1, i + 2);
        if p.explicit[i].hi <= p.explicit[i + 1].lo {
            rep.push(CheckRecord::pass("partition-order", item));
        } else {
            rep.push(CheckRecord::fail(
                "partition-order",
                item,
                pt(&p.explicit[i + 1].lo),
            ));
        }
    }
    if let Some(f) = &p.family {
        let class = f.class();
        if k > 0 {
            let junction = f.lo.eval(f.start);
            let item = format!("I{}/I{}", k, f.start);
            if p.explicit[k - 1].hi <= junction {
                rep.push(CheckRecord::pass("partition-order", item));
            } else {
                rep.push(CheckRecord::fail("partition-order", item, pt(&junction)));
            }
        }
        let item = class_label(&class);
        match f.lo.shift(1).sub(&f.hi) {
            Ok(d) => {
                if d.ge0_all(&class) {
                    rep.push(CheckRecord::pass("partition-order", item.clone()));
                } else {
                    let n = d
                        .solve_le(&S::zero(), true, &class)
                        .first_member(&class)
                        .unwrap_or(class.start);
                    rep.push(CheckRecord::fail(
                        "partition-order",
                        item.clone(),
                        format!("n={n}"),
                    ));
                }
            }
            Err(e) => rep.push(CheckRecord::error(
                "partition-order",
                item.clone(),
                e.to_string(),
            )),
        }
        match f.hi.sub(&f.lo) {
            Ok(d) => {
                if d.gt0_all(&class) {
                    rep.push(CheckRecord::pass("partition-nondegenerate", item.clone()));
                } else {
                    let n = d
                        .solve_le(&S::zero(), false, &class)
                        .first_member(&class)
                        .unwrap_or(class.start);
                    rep.push(CheckRecord::fail(
                        "partition-nondegenerate",
                        item.clone(),
                        format!("n={n}"),
                    ));
                }
            }
            Err(e) => rep.push(CheckRecord::error(
                "partition-nondegenerate",
                item,
                e.to_string(),
            )),
        }
    }
    let check = "partition-sup";
    match &p.family {
        None => {
            let top = &p.explicit[k - 1].hi;
            match &p.ambient_hi {
                Some(b) if b == top => rep.push(CheckRecord::pass(check, "sup")),
                Some(_) => rep.push(CheckRecord::fail(check, "sup", pt(top))),
                None => rep.push(CheckRecord::fail(
                    check,
                    "sup",
                    "a finite partition needs a bounded ambient interval",
                )),
            }
        }
        Some(f) => match &f.hi {
            NExpr::Affine { c1, .. } => {
                if *c1 > S::zero() && p.ambient_hi.is_none() {
                    rep.push(CheckRecord::pass(check, "sup"));
                } else if *c1 <= S::zero() {
                    rep.push(CheckRecord::fail(
                        check,
                        "sup",
                        "the family tops do not increase to the ambient sup",
                    ));
                } else {
                    rep.push(CheckRecord::fail(
                        check,
                        "sup",
                        "a bounded ambient interval caps an unbounded family",
                    ));
                }
            }
            NExpr::Geo {
                limit,
                coef,
                ratio,
                ..
            } => {
                let increasing =
                    *coef < S::zero() && *ratio > S::zero() && *ratio < S::one();
                if increasing && p.ambient_hi.as_ref() == Some(limit) {
                    rep.push(CheckRecord::pass(check, "sup"));
                } else {
                    rep.push(CheckRecord::fail(check, "sup", pt(limit)));
                }
            }
        },
    }
    rep
}

/// Structural alignment between partition and map; mismatches end the
/// validation early since nothing downstream is meaningful.
fn shape_records<S: Scalar>(
    p: &IntervalPartition<S>,
    m: &PiecewiseAffineMap<S>,
    rep: &mut Report,
) -> bool {
    if m.explicit.len() != p.explicit.len() {
        rep.push(CheckRecord::error(
            "map-shape",
            "explicit intervals",
            format!(
                "{} intervals but {} branch lists",
                p.explicit.len(),
                m.explicit.len()
            ),
        ));
        return false;
    }
    match (&p.family, m.rules.is_empty()) {
        (Some(_), true) => {
            rep.push(CheckRecord::error(
                "map-shape",
                "family",
                "the family intervals have no branch rules",
            ));
            false
        }
        (None, false) => {
            rep.push(CheckRecord::error(
                "map-shape",
                "family",
                "branch rules without family intervals",
            ));
            false
        }
        _ => {
            rep.push(CheckRecord::pass("map-shape", "all"));
            true
        }
    }
}

/// The rule classes must tile the family indices: every `n >= start` is
/// covered by exactly one rule.
fn rules_tile_records<S: Scalar>(
    p: &IntervalPartition<S>,
    m: &PiecewiseAffineMap<S>,
    rep: &mut Report,
) {
    let Some(f) = &p.family else {
        return;
    };
    let check = "rules-tile";
    let item = class_label(&f.class());
    let mut l: u64 = 1;
    for rule in &m.rules {
        if rule.class.start < f.start {
            rep.push(CheckRecord::fail(
                check,
                item.clone(),
                format!("a rule starts at {} before the family", rule.class.start),
            ));
            return;
        }
        l = num_integer::lcm(l, rule.class.step);
        if l > 1024 {
            rep.push(CheckRecord::error(
                check,
                item.clone(),
                "rule periods too large to sweep",
            ));
            return;
        }
    }
    let sweep_to = f.start + l + m.rules.iter().map(|r| r.class.start).max().unwrap_or(0);
    for n in f.start..=sweep_to {
        let count = m.rules.iter().filter(|r| r.class.contains(n)).count();
        if count != 1 {
            rep.push(CheckRecord::fail(
                check,
                item.clone(),
                format!("index {n} is covered by {count} rules"),
            ));
            return;
        }
    }
    rep.push(CheckRecord::pass(check, item));
}

fn pieces_records<S: Scalar>(
    p: &IntervalPartition<S>,
    m: &PiecewiseAffineMap<S>,
    rep: &mut Report,
) {
    let override_points: BTreeSet<S> = m.overrides.iter().map(|(q, _)| q.clone()).collect();
    for (q, v) in &m.overrides {
        if p.in_domain(q) {
            rep.push(CheckRecord::pass("override-points", pt(q)));
        } else {
            rep.push(CheckRecord::fail("override-points", pt(q), pt(q)));
        }
        if !p.in_gamma(v) {
            rep.push(CheckRecord::fail(
                "gamma-invariant",
                format!("override at {}", pt(q)),
                pt(v),
            ));
        } else {
            rep.push(CheckRecord::pass(
                "gamma-invariant",
                format!("override at {}", pt(q)),
            ));
        }
        ambient_value_record(p, &format!("override at {}", pt(q)), v, rep);
    }
    for (idx, pieces) in m.explicit.iter().enumerate() {
        let i = idx as u64 + 1;
        let interval = &p.explicit[idx];
        let item = interval_label(i);
        let mut within = true;
        for pc in pieces {
            if !interval.contains_interval(&pc.domain) {
                rep.push(CheckRecord::fail(
                    "pieces-within",
                    item.clone(),
                    pt(&pc.domain.lo),
                ));
                within = false;
            }
        }
        if within {
            rep.push(CheckRecord::pass("pieces-within", item.clone()));
        }
        cover_walk_concrete(interval, pieces, &override_points, &item, rep);
        injectivity_concrete(interval, pieces, m, &item, rep);
        for pc in pieces {
            for (endpoint, closed) in [
                (&pc.domain.lo, pc.domain.lo_closed),
                (&pc.domain.hi, pc.domain.hi_closed),
            ] {
                if !closed || override_points.contains(endpoint) {
                    continue;
                }
                let v = pc.map.apply(endpoint);
                if p.in_gamma(&v) {
                    rep.push(CheckRecord::pass(
                        "gamma-invariant",
                        format!("{item} at {}", pt(endpoint)),
                    ));
                } else {
                    rep.push(CheckRecord::fail(
                        "gamma-invariant",
                        format!("{item} at {}", pt(endpoint)),
                        pt(&v),
                    ));
                }
            }
            let img = pc.domain.affine_image(&pc.map);
            ambient_interval_record(p, &item, &img, rep);
        }
    }
    if let Some(f) = &p.family {
        for rule in &m.rules {
            family_pieces_records(p, f, rule, &override_points, rep);
        }
    }
}

/// Left-to-right sweep: the branch domains must cover the interval exactly,
/// with single missing points allowed only where an override sits.
fn cover_walk_concrete<S: Scalar>(
    interval: &Interval<S>,
    pieces: &[Piece<S>],
    overrides: &BTreeSet<S>,
    item: &str,
    rep: &mut Report,
) {
    let mut sorted: Vec<&Piece<S>> = pieces.iter().collect();
    sorted.sort_by(|a, b| {
        a.domain
            .lo
            .cmp(&b.domain.lo)
            .then(b.domain.lo_closed.cmp(&a.domain.lo_closed))
    });
    let mut pos = interval.lo.clone();
    let mut claimed = false;
    for pc in sorted {
        let d = &pc.domain;
        if d.lo < pos {
            rep.push(CheckRecord::fail("pieces-disjoint", item, pt(&d.lo)));
            return;
        }
        if d.lo > pos {
            rep.push(CheckRecord::fail(
                "pieces-cover",
                item,
                pt(&midpoint(&pos, &d.lo)),
            ));
            return;
        }
        if d.lo_closed {
            if claimed {
                rep.push(CheckRecord::fail("pieces-disjoint", item, pt(&pos)));
                return;
            }
        } else if !claimed && !overrides.contains(&pos) {
            rep.push(CheckRecord::fail("pieces-cover", item, pt(&pos)));
            return;
        }
        pos = d.hi.clone();
        claimed = d.hi_closed;
    }
    if pos < interval.hi {
        rep.push(CheckRecord::fail(
            "pieces-cover",
            item,
            pt(&midpoint(&pos, &interval.hi)),
        ));
        return;
    }
    if pos == interval.hi && !claimed && !overrides.contains(&pos) {
        rep.push(CheckRecord::fail("pieces-cover", item, pt(&pos)));
        return;
    }
    rep.push(CheckRecord::pass("pieces-cover", item));
    rep.push(CheckRecord::pass("pieces-disjoint", item));
}

/// Distinct interior points must have distinct values: branch images
/// clipped to the interior are pairwise disjoint, and interior overrides
/// stay off every other attained value.
fn injectivity_concrete<S: Scalar>(
    interval: &Interval<S>,
    pieces: &[Piece<S>],
    m: &PiecewiseAffineMap<S>,
    item: &str,
    rep: &mut Report,
) {
    let Some(interior) = interval.interior() else {
        return;
    };
    let clipped: Vec<(Interval<S>, &Piece<S>)> = pieces
        .iter()
        .filter_map(|pc| pc.domain.intersect(&interior).map(|d| (d, pc)))
        .collect();
    let images: Vec<Interval<S>> = clipped
        .iter()
        .map(|(d, pc)| d.affine_image(&pc.map))
        .collect();
    for a in 0..images.len() {
        for b in a + 1..images.len() {
            if let Some(meet) = images[a].intersect(&images[b]) {
                let w = if meet.lo_closed {
                    meet.lo.clone()
                } else if meet.hi_closed {
                    meet.hi.clone()
                } else {
                    midpoint(&meet.lo, &meet.hi)
                };
                rep.push(CheckRecord::fail("injective-interior", item, pt(&w)));
                return;
            }
        }
    }
    let interior_overrides: Vec<&(S, S)> = m
        .overrides
        .iter()
        .filter(|(q, _)| interior.contains(q))
        .collect();
    for a in 0..interior_overrides.len() {
        for b in a + 1..interior_overrides.len() {
            if interior_overrides[a].1 == interior_overrides[b].1 {
                rep.push(CheckRecord::fail(
                    "injective-interior",
                    item,
                    pt(&interior_overrides[a].1),
                ));
                return;
            }
        }
    }
    for (q, v) in &interior_overrides {
        for ((d, pc), img) in clipped.iter().zip(&images) {
            if !img.contains(v) {
                continue;
            }
            let inv = pc.map.inverse().expect("branch slopes are nonzero");
            let preimage = inv.apply(v);
            if d.contains(&preimage) && preimage != *q {
                rep.push(CheckRecord::fail("injective-interior", item, pt(v)));
                return;
            }
        }
    }
    rep.push(CheckRecord::pass("injective-interior", item));
}

/// A single value against the ambient interval; the ambient top is
/// attained only for finite partitions.
fn ambient_value_record<S: Scalar>(
    p: &IntervalPartition<S>,
    item: &str,
    v: &S,
    rep: &mut Report,
) {
    let top_closed = p.family.is_none();
    let mut ok = *v >= p.ambient_lo;
    if let Some(b) = &p.ambient_hi {
        ok = ok && if top_closed { v <= b } else { v < b };
    }
    if ok {
        rep.push(CheckRecord::pass("image-in-ambient", item));
    } else {
        rep.push(CheckRecord::fail("image-in-ambient", item, pt(v)));
    }
}

fn ambient_interval_record<S: Scalar>(
    p: &IntervalPartition<S>,
    item: &str,
    img: &Interval<S>,
    rep: &mut Report,
) {
    let top_closed = p.family.is_none();
    if img.lo < p.ambient_lo {
        rep.push(CheckRecord::fail("image-in-ambient", item, pt(&img.lo)));
        return;
    }
    if let Some(b) = &p.ambient_hi {
        let top_ok = if img.hi_closed && !top_closed {
            img.hi < *b
        } else {
            img.hi <= *b
        };
        if !top_ok {
            rep.push(CheckRecord::fail("image-in-ambient", item, pt(&img.hi)));
            return;
        }
    }
    rep.push(CheckRecord::pass("image-in-ambient", item));
}

fn family_pieces_records<S: Scalar>(
    p: &IntervalPartition<S>,
    f: &PartitionFamily<S>,
    rule: &FamilyRule<S>,
    override_points: &BTreeSet<S>,
    rep: &mut Report,
) {
    let class = &rule.class;
    let item = class_label(class);
    let mut within = true;
    for sp in &rule.pieces {
        for (diff, label) in [
            (sp.domain.lo.sub(&f.lo), "lo"),
            (f.hi.sub(&sp.domain.hi), "hi"),
        ] {
            match diff {
                Ok(d) => {
                    if !d.ge0_all(class) {
                        let n = d
                            .solve_le(&S::zero(), true, class)
                            .first_member(class)
                            .unwrap_or(class.start);
                        rep.push(CheckRecord::fail(
                            "pieces-within",
                            item.clone(),
                            format!("n={n} ({label})"),
                        ));
                        within = false;
                    }
                }
                Err(e) => {
                    rep.push(CheckRecord::error(
                        "pieces-within",
                        item.clone(),
                        e.to_string(),
                    ));
                    within = false;
                }
            }
        }
    }
    if within {
        rep.push(CheckRecord::pass("pieces-within", item.clone()));
    }
    cover_walk_symbolic(f, rule, override_points, &item, rep);
    injectivity_symbolic(f, rule, &item, rep);
    for sp in &rule.pieces {
        for (endpoint, closed) in [
            (&sp.domain.lo, sp.domain.lo_closed),
            (&sp.domain.hi, sp.domain.hi_closed),
        ] {
            if !closed {
                continue;
            }
            let excluded = override_members(endpoint, override_points, class);
            match endpoint.scale_add(&sp.slope, &sp.intercept) {
                Ok(value) => gamma_expr_record(p, f, class, &item, &value, &excluded, rep),
                Err(e) => rep.push(CheckRecord::error(
                    "gamma-invariant",
                    item.clone(),
                    e.to_string(),
                )),
            }
        }
        match sp.image() {
            Ok(img) => ambient_sym_record(p, class, &item, &img, rep),
            Err(e) => rep.push(CheckRecord::error(
                "image-in-ambient",
                item.clone(),
                e.to_string(),
            )),
        }
    }
}

/// Members of `class` whose instance of `endpoint` is an override point.
fn override_members<S: Scalar>(
    endpoint: &NExpr<S>,
    override_points: &BTreeSet<S>,
    class: &IndexClass,
) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for q in override_points {
        let sols = endpoint.solve_eq(q, class);
        if let Some(first) = sols.first_member(class) {
            for n in sols.iter_up_to(class, first + 2 * class.step) {
                out.insert(n);
            }
        }
    }
    out
}

/// Symbolic version of the cover walk: compares cursor and domain bounds
/// as index expressions.
fn cover_walk_symbolic<S: Scalar>(
    f: &PartitionFamily<S>,
    rule: &FamilyRule<S>,
    overrides: &BTreeSet<S>,
    item: &str,
    rep: &mut Report,
) {
    let class = &rule.class;
    let n0 = class.start;
    let mut sorted: Vec<&SymPiece<S>> = rule.pieces.iter().collect();
    sorted.sort_by(|a, b| {
        a.domain
            .lo
            .eval(n0)
            .cmp(&b.domain.lo.eval(n0))
            .then(b.domain.lo_closed.cmp(&a.domain.lo_closed))
    });
    let mut pos = f.lo.clone();
    let mut claimed = false;
    for sp in sorted {
        let d = &sp.domain;
        if !nexpr_eq(&d.lo, &pos) {
            let gap_ok = match d.lo.sub(&pos) {
                Ok(diff) => diff.ge0_all(class),
                Err(_) => false,
            };
            let witness = pt(&midpoint(&pos.eval(n0), &d.lo.eval(n0)));
            let check = if gap_ok { "pieces-cover" } else { "pieces-disjoint" };
            rep.push(CheckRecord::fail(check, item, format!("n={n0}: {witness}")));
            return;
        }
        let here = pos.eval(n0);
        if d.lo_closed {
            if claimed {
                rep.push(CheckRecord::fail(
                    "pieces-disjoint",
                    item,
                    format!("n={n0}: {}", pt(&here)),
                ));
                return;
            }
        } else if !claimed && !overrides.contains(&here) {
            rep.push(CheckRecord::fail(
                "pieces-cover",
                item,
                format!("n={n0}: {}", pt(&here)),
            ));
            return;
        }
        pos = d.hi.clone();
        claimed = d.hi_closed;
    }
    if !nexpr_eq(&pos, &f.hi) {
        rep.push(CheckRecord::fail(
            "pieces-cover",
            item,
            format!("n={n0}: {}", pt(&midpoint(&pos.eval(n0), &f.hi.eval(n0)))),
        ));
        return;
    }
    if !claimed && !overrides.contains(&pos.eval(n0)) {
        rep.push(CheckRecord::fail(
            "pieces-cover",
            item,
            format!("n={n0}: {}", pt(&pos.eval(n0))),
        ));
        return;
    }
    rep.push(CheckRecord::pass("pieces-cover", item));
    rep.push(CheckRecord::pass("pieces-disjoint", item));
}

/// Pairwise disjointness of interior-clipped branch images, decided per
/// index through the solution sets of the boundary comparisons.
fn injectivity_symbolic<S: Scalar>(
    f: &PartitionFamily<S>,
    rule: &FamilyRule<S>,
    item: &str,
    rep: &mut Report,
) {
    let class = &rule.class;
    let mut images: Vec<SymInterval<S>> = Vec::new();
    for sp in &rule.pieces {
        let mut clipped = sp.domain.clone();
        if nexpr_eq(&clipped.lo, &f.lo) {
            clipped.lo_closed = false;
        }
        if nexpr_eq(&clipped.hi, &f.hi) {
            clipped.hi_closed = false;
        }
        match clipped.affine_image(&sp.slope, &sp.intercept) {
            Ok(img) => images.push(img),
            Err(e) => {
                rep.push(CheckRecord::error(
                    "injective-interior",
                    item,
                    e.to_string(),
                ));
                return;
            }
        }
    }
    for a in 0..images.len() {
        for b in a + 1..images.len() {
            match sym_conflict(&images[a], &images[b], class) {
                Ok(None) => {}
                Ok(Some(n)) => {
                    let w = midpoint(&images[a].lo.eval(n), &images[a].hi.eval(n));
                    rep.push(CheckRecord::fail(
                        "injective-interior",
                        item,
                        format!("n={n}: {}", pt(&w)),
                    ));
                    return;
                }
                Err(e) => {
                    rep.push(CheckRecord::error(
                        "injective-interior",
                        item,
                        e.to_string(),
                    ));
                    return;
                }
            }
        }
    }
    rep.push(CheckRecord::pass("injective-interior", item));
}

/// First index where the two interval expressions intersect, if any.
fn sym_conflict<S: Scalar>(
    a: &SymInterval<S>,
    b: &SymInterval<S>,
    class: &IndexClass,
) -> Result<Option<u64>, FormError> {
    let lo_ok = b
        .hi
        .sub(&a.lo)?
        .solve_ge(&S::zero(), !(a.lo_closed && b.hi_closed), class);
    let hi_ok = a
        .hi
        .sub(&b.lo)?
        .solve_ge(&S::zero(), !(b.lo_closed && a.hi_closed), class);
    Ok(lo_ok.meet(&hi_ok, class).first_member(class))
}

/// Decide whether `value(n)` always lands on an interval endpoint. The
/// constant case is a point query; otherwise the expression must track one
/// of the family endpoint sequences up to a shift, with the finitely many
/// members shifted below the family checked concretely.
fn gamma_expr_record<S: Scalar>(
    p: &IntervalPartition<S>,
    f: &PartitionFamily<S>,
    class: &IndexClass,
    item: &str,
    value: &NExpr<S>,
    excluded: &BTreeSet<u64>,
    rep: &mut Report,
) {
    let check = "gamma-invariant";
    if let Some(c) = value.as_constant() {
        if p.in_gamma(&c) {
            rep.push(CheckRecord::pass(check, format!("{item} value {}", pt(&c))));
        } else {
            rep.push(CheckRecord::fail(
                check,
                format!("{item} value {}", pt(&c)),
                pt(&c),
            ));
        }
        return;
    }
    let shift = value
        .match_shift(&f.lo)
        .or_else(|| value.match_shift(&f.hi));
    match shift {
        Some(d) => {
            let safe_from = (f.start as i64 - d).max(class.start as i64) as u64;
            for n in class.iter_up_to(class.first_at_or_after(safe_from).saturating_sub(1)) {
                if excluded.contains(&n) {
                    continue;
                }
                let v = value.eval(n);
                if !p.in_gamma(&v) {
                    rep.push(CheckRecord::fail(check, item, format!("n={n}: {}", pt(&v))));
                    return;
                }
            }
            rep.push(CheckRecord::pass(check, format!("{item} value tracks d={d}")));
        }
        None => {
            let mut n = class.start;
            for _ in 0..64 {
                if !excluded.contains(&n) {
                    let v = value.eval(n);
                    if !p.in_gamma(&v) {
                        rep.push(CheckRecord::fail(check, item, format!("n={n}: {}", pt(&v))));
                        return;
                    }
                }
                n += class.step;
            }
            rep.push(CheckRecord::error(
                check,
                item,
                "endpoint values do not track the family; scan stayed on the boundary set",
            ));
        }
    }
}

fn ambient_sym_record<S: Scalar>(
    p: &IntervalPartition<S>,
    class: &IndexClass,
    item: &str,
    img: &SymInterval<S>,
    rep: &mut Report,
) {
    let check = "image-in-ambient";
    let low_bad = img.lo.solve_le(&p.ambient_lo, true, class);
    if let Some(n) = low_bad.first_member(class) {
        rep.push(CheckRecord::fail(
            check,
            item,
            format!("n={n}: {}", pt(&img.lo.eval(n))),
        ));
        return;
    }
    if let Some(b) = &p.ambient_hi {
        let top_closed = p.family.is_none();
        let strict_bad = !(img.hi_closed && !top_closed);
        let hi_bad = img.hi.solve_ge(b, strict_bad, class);
        if let Some(n) = hi_bad.first_member(class) {
            rep.push(CheckRecord::fail(
                check,
                item,
                format!("n={n}: {}", pt(&img.hi.eval(n))),
            ));
            return;
        }
    }
    rep.push(CheckRecord::pass(check, item));
}

/// Split a branch domain at the override points inside it, so images of
/// the remaining open parts reflect the attained values exactly.
fn split_domain<S: Scalar>(domain: &Interval<S>, overrides: &[(S, S)]) -> Vec<Interval<S>> {
    let mut cuts: Vec<&S> = overrides
        .iter()
        .map(|(q, _)| q)
        .filter(|q| domain.contains(q))
        .collect();
    cuts.sort();
    let mut parts = vec![domain.clone()];
    for q in cuts {
        let cur = parts.pop().expect("split keeps at least one part");
        if !cur.contains(q) {
            parts.push(cur);
            continue;
        }
        if let Some(left) = Interval::new(cur.lo.clone(), cur.lo_closed, q.clone(), false) {
            parts.push(left);
        }
        if let Some(right) = Interval::new(q.clone(), false, cur.hi.clone(), cur.hi_closed) {
            parts.push(right);
        }
    }
    parts
}

/// Merge image components, letting attained override values close open
/// endpoints and plug single-point pinholes; returns the merged intervals
/// and the attained values isolated outside all of them.
fn merge_components<S: Scalar>(
    mut comps: Vec<Interval<S>>,
    attained: &BTreeSet<S>,
) -> (Vec<Interval<S>>, Vec<S>) {
    for c in &mut comps {
        if !c.lo_closed && attained.contains(&c.lo) {
            c.lo_closed = true;
        }
        if !c.hi_closed && attained.contains(&c.hi) {
            c.hi_closed = true;
        }
    }
    comps.sort_by(|a, b| {
        a.lo.cmp(&b.lo)
            .then(b.lo_closed.cmp(&a.lo_closed))
            .then(a.hi.cmp(&b.hi))
    });
    let mut out: Vec<Interval<S>> = Vec::new();
    for c in comps {
        if let Some(last) = out.last_mut() {
            let touches = c.lo < last.hi || (c.lo == last.hi && (last.hi_closed || c.lo_closed));
            if touches {
                if c.hi > last.hi || (c.hi == last.hi && c.hi_closed) {
                    last.hi = c.hi;
                    last.hi_closed = c.hi_closed;
                }
                continue;
            }
        }
        out.push(c);
    }
    let isolated = attained
        .iter()
        .filter(|v| !out.iter().any(|c| c.contains(v)))
        .cloned()
        .collect();
    (out, isolated)
}

struct ConcreteRow<S> {
    row: VertexSet,
    partials: Vec<String>,
    point_misses: Vec<S>,
}

/// Classify the image of one interval against the whole partition: which
/// intervals it covers, where it only partially overlaps, and which single
/// touched points fall outside every covered interval.
fn concrete_row<S: Scalar>(
    p: &IntervalPartition<S>,
    m: &PiecewiseAffineMap<S>,
    pieces: &[Piece<S>],
    interval: &Interval<S>,
) -> ConcreteRow<S> {
    let attained: BTreeSet<S> = m
        .overrides
        .iter()
        .filter(|(q, _)| interval.contains(q))
        .map(|(_, v)| v.clone())
        .collect();
    let mut comps = Vec::new();
    for pc in pieces {
        for part in split_domain(&pc.domain, &m.overrides) {
            comps.push(part.affine_image(&pc.map));
        }
    }
    let (merged, isolated) = merge_components(comps, &attained);
    let mut row = VertexSet::empty();
    let mut partials = Vec::new();
    let mut pts: Vec<S> = isolated;
    for comp in &merged {
        for (j, target) in p.explicit.iter().enumerate() {
            match comp.classify_against_closed(target) {
                Overlap::Whole => {
                    row = row
                        .union(&VertexSet::singleton(j as u64 + 1).expect("indices are positive"))
                        .expect("rows are unprimed");
                }
                Overlap::SinglePoint(q) => pts.push(q),
                Overlap::Partial(w) => partials.push(pt(&w)),
                Overlap::Empty => {}
            }
        }
        if let Some(f) = &p.family {
            let class = f.class();
            let contained = f
                .lo
                .solve_ge(&comp.lo, !comp.lo_closed, &class)
                .meet(&f.hi.solve_le(&comp.hi, !comp.hi_closed, &class), &class);
            row = row
                .union(&sols_to_set(&contained, &class))
                .expect("rows are unprimed");
            let viol_lo = f
                .lo
                .solve_le(&comp.lo, comp.lo_closed, &class)
                .meet(&f.hi.solve_ge(&comp.lo, true, &class), &class);
            if !viol_lo.is_empty() {
                partials.push(pt(&comp.lo));
            }
            let viol_hi = f
                .hi
                .solve_ge(&comp.hi, comp.hi_closed, &class)
                .meet(&f.lo.solve_le(&comp.hi, true, &class), &class);
            if !viol_hi.is_empty() {
                partials.push(pt(&comp.hi));
            }
            if comp.hi_closed && !f.lo.solve_eq(&comp.hi, &class).is_empty() {
                pts.push(comp.hi.clone());
            }
            if comp.lo_closed && !f.hi.solve_eq(&comp.lo, &class).is_empty() {
                pts.push(comp.lo.clone());
            }
        }
    }
    let mut point_misses = Vec::new();
    for q in pts {
        let covered = p
            .containing_indices(&q)
            .iter()
            .any(|&j| row.member(j));
        if !covered {
            point_misses.push(q);
        }
    }
    ConcreteRow {
        row,
        partials,
        point_misses,
    }
}

enum AnchorKind {
    AtLo(i64),
    AtHi(i64),
}

fn anchor_lo<S: Scalar>(e: &NExpr<S>, f: &PartitionFamily<S>) -> Option<AnchorKind> {
    if let Some(d) = e.match_shift(&f.lo) {
        return Some(AnchorKind::AtLo(d));
    }
    e.match_shift(&f.hi).map(AnchorKind::AtHi)
}

fn anchor_hi<S: Scalar>(e: &NExpr<S>, f: &PartitionFamily<S>) -> Option<AnchorKind> {
    if let Some(d) = e.match_shift(&f.hi) {
        return Some(AnchorKind::AtHi(d));
    }
    e.match_shift(&f.lo).map(AnchorKind::AtLo)
}

struct SymCoverage {
    offsets: Vec<i64>,
    hits: Vec<AnchorKind>,
    misses: Vec<(i64, bool)>,
    d_min: i64,
}

/// Express a symbolic image component through family endpoints: the
/// covered offset span, boundary touches to verify, and open endpoints
/// that break whole coverage.
fn classify_sym_comp<S: Scalar>(
    comp: &SymInterval<S>,
    f: &PartitionFamily<S>,
) -> Option<SymCoverage> {
    let a = anchor_lo(&comp.lo, f)?;
    let b = anchor_hi(&comp.hi, f)?;
    let mut hits = Vec::new();
    let mut misses = Vec::new();
    let (start, d_lo) = match a {
        AnchorKind::AtLo(d) => {
            if !comp.lo_closed {
                misses.push((d, true));
            }
            (d, d)
        }
        AnchorKind::AtHi(d) => {
            if comp.lo_closed {
                hits.push(AnchorKind::AtHi(d));
            }
            (d + 1, d)
        }
    };
    let (end, d_hi) = match b {
        AnchorKind::AtHi(d) => {
            if !comp.hi_closed {
                misses.push((d, false));
            }
            (d, d)
        }
        AnchorKind::AtLo(d) => {
            if comp.hi_closed {
                hits.push(AnchorKind::AtLo(d));
            }
            (d - 1, d)
        }
    };
    if start > end + 1 {
        return None;
    }
    Some(SymCoverage {
        offsets: (start..=end).collect(),
        hits,
        misses,
        d_min: d_lo.min(d_hi),
    })
}

fn analyze_rows<S: Scalar>(p: &IntervalPartition<S>, m: &PiecewiseAffineMap<S>) -> RowAnalysis {
    let mut report = Report::new();
    let mut explicit_rows = Vec::new();
    let mut family_rows = Vec::new();
    let mut representable = true;
    let check = "image-whole-intervals";
    for (idx, pieces) in m.explicit.iter().enumerate() {
        let i = idx as u64 + 1;
        let item = interval_label(i);
        let interval = &p.explicit[idx];
        let cr = concrete_row(p, m, pieces, interval);
        let mut clean = true;
        for w in &cr.partials {
            report.push(CheckRecord::fail(check, item.clone(), w.clone()));
            clean = false;
        }
        for q in &cr.point_misses {
            report.push(CheckRecord::fail(
                check,
                item.clone(),
                format!("isolated point {}", pt(q)),
            ));
            clean = false;
        }
        if clean {
            report.push(CheckRecord::pass(check, item.clone()));
        }
        if cr.row.is_empty() {
            report.push(CheckRecord::fail(
                "image-nonempty",
                item,
                "no interval is wholly covered",
            ));
        } else {
            report.push(CheckRecord::pass("image-nonempty", item));
        }
        explicit_rows.push(cr.row);
    }
    let Some(f) = &p.family else {
        return RowAnalysis {
            report,
            explicit_rows,
            family_rows,
            representable,
        };
    };
    let touching = nexpr_eq(&f.lo.shift(1), &f.hi);
    for rule in &m.rules {
        let class = &rule.class;
        let item = class_label(class);
        let mut clean = true;
        let mut sym_comps: Vec<SymInterval<S>> = Vec::new();
        let mut const_comps: Vec<Interval<S>> = Vec::new();
        let mut residual: BTreeSet<u64> = BTreeSet::new();
        for sp in &rule.pieces {
            for (q, _) in &m.overrides {
                let sols = sp
                    .domain
                    .lo
                    .solve_le(q, !sp.domain.lo_closed, class)
                    .meet(&sp.domain.hi.solve_ge(q, !sp.domain.hi_closed, class), class);
                if let Some(first) = sols.first_member(class) {
                    let bound = first + 4 * class.step;
                    for n in sols.iter_up_to(class, bound) {
                        residual.insert(n);
                    }
                    if sols.extends_beyond(class, bound) {
                        report.push(CheckRecord::error(
                            check,
                            item.clone(),
                            format!("override {} meets unboundedly many branches", pt(q)),
                        ));
                        representable = false;
                        clean = false;
                    }
                }
            }
            match sp.image() {
                Err(e) => {
                    report.push(CheckRecord::error(check, item.clone(), e.to_string()));
                    representable = false;
                    clean = false;
                }
                Ok(img) => match (img.lo.as_constant(), img.hi.as_constant()) {
                    (Some(l), Some(h)) => const_comps.push(Interval {
                        lo: l,
                        hi: h,
                        lo_closed: img.lo_closed,
                        hi_closed: img.hi_closed,
                    }),
                    _ => sym_comps.push(img),
                },
            }
        }
        merge_symbolic(&mut sym_comps);
        let mut offsets: BTreeSet<i64> = BTreeSet::new();
        let mut pending: Vec<AnchorKind> = Vec::new();
        let mut d_min: Option<i64> = None;
        for comp in &sym_comps {
            match classify_sym_comp(comp, f) {
                None => {
                    report.push(CheckRecord::error(
                        check,
                        item.clone(),
                        "image endpoints do not track the family",
                    ));
                    representable = false;
                    clean = false;
                }
                Some(cov) => {
                    for (d, lo_side) in &cov.misses {
                        let n0 = class.first_at_or_after(
                            ((f.start as i64 - d).max(class.start as i64)) as u64,
                        );
                        let endpoint = if *lo_side { &f.lo } else { &f.hi };
                        let shifted_index = (n0 as i64 + d) as u64;
                        report.push(CheckRecord::fail(
                            check,
                            item.clone(),
                            format!("n={n0}: {}", pt(&endpoint.eval(shifted_index))),
                        ));
                        clean = false;
                    }
                    offsets.extend(cov.offsets.iter().copied());
                    pending.extend(cov.hits);
                    d_min = Some(d_min.map_or(cov.d_min, |m: i64| m.min(cov.d_min)));
                }
            }
        }
        let mut extra = VertexSet::empty();
        for c in &const_comps {
            let (part_row, part_partials, part_pts) = classify_const_comp(p, c);
            extra = extra.union(&part_row).expect("rows are unprimed");
            for w in part_partials {
                report.push(CheckRecord::fail(check, item.clone(), w));
                clean = false;
            }
            for q in part_pts {
                let covered = p.containing_indices(&q).iter().any(|&j| extra.member(j));
                if !covered {
                    report.push(CheckRecord::fail(
                        check,
                        item.clone(),
                        format!("isolated point {}", pt(&q)),
                    ));
                    clean = false;
                }
            }
        }
        for hit in &pending {
            let (d, neighbor) = match hit {
                AnchorKind::AtLo(d) => (*d, *d - 1),
                AnchorKind::AtHi(d) => (*d, *d + 1),
            };
            let ok = offsets.contains(&d) || (touching && offsets.contains(&neighbor));
            if !ok {
                let n0 = class
                    .first_at_or_after(((f.start as i64 - d).max(class.start as i64)) as u64);
                let endpoint = match hit {
                    AnchorKind::AtLo(_) => &f.lo,
                    AnchorKind::AtHi(_) => &f.hi,
                };
                report.push(CheckRecord::fail(
                    check,
                    item.clone(),
                    format!(
                        "isolated point {} at n={n0}",
                        pt(&endpoint.eval((n0 as i64 + d) as u64))
                    ),
                ));
                clean = false;
            }
        }
        if let Some(dm) = d_min {
            let below = f.start as i64 - dm;
            if below > class.start as i64 {
                for n in class.iter_up_to((below - 1).max(0) as u64) {
                    residual.insert(n);
                }
            }
        }
        let offsets: Vec<i64> = offsets.into_iter().collect();
        if offsets.is_empty() && extra.is_empty() {
            report.push(CheckRecord::fail(
                "image-nonempty",
                item.clone(),
                "no interval is wholly covered",
            ));
        } else {
            report.push(CheckRecord::pass("image-nonempty", item.clone()));
        }
        for &n in &residual {
            let interval = p.interval_at(n).expect("residual members have intervals");
            let pieces = instantiate_rule(rule, n);
            let cr = concrete_row(p, m, &pieces, &interval);
            let sub_item = interval_label(n);
            for w in &cr.partials {
                report.push(CheckRecord::fail(check, sub_item.clone(), w.clone()));
                clean = false;
            }
            for q in &cr.point_misses {
                report.push(CheckRecord::fail(
                    check,
                    sub_item.clone(),
                    format!("isolated point {}", pt(q)),
                ));
                clean = false;
            }
            let predicted = row_from(&offsets, &extra, n);
            if cr.row != predicted {
                report.push(CheckRecord::error(
                    "rows-representable",
                    sub_item,
                    format!("row {} differs from the family pattern {}", cr.row, predicted),
                ));
                representable = false;
                clean = false;
            }
        }
        if clean {
            report.push(CheckRecord::pass(check, item.clone()));
        }
        family_rows.push(FamilyRow {
            class: *class,
            offsets,
            extra,
        });
    }
    RowAnalysis {
        report,
        explicit_rows,
        family_rows,
        representable,
    }
}

/// Classification of a constant image component against the partition,
/// without override bookkeeping (constants come from family branches).
fn classify_const_comp<S: Scalar>(
    p: &IntervalPartition<S>,
    comp: &Interval<S>,
) -> (VertexSet, Vec<String>, Vec<S>) {
    let mut row = VertexSet::empty();
    let mut partials = Vec::new();
    let mut pts = Vec::new();
    for (j, target) in p.explicit.iter().enumerate() {
        match comp.classify_against_closed(target) {
            Overlap::Whole => {
                row = row
                    .union(&VertexSet::singleton(j as u64 + 1).expect("indices are positive"))
                    .expect("rows are unprimed");
            }
            Overlap::SinglePoint(q) => pts.push(q),
            Overlap::Partial(w) => partials.push(pt(&w)),
            Overlap::Empty => {}
        }
    }
    if let Some(f) = &p.family {
        let class = f.class();
        let contained = f
            .lo
            .solve_ge(&comp.lo, !comp.lo_closed, &class)
            .meet(&f.hi.solve_le(&comp.hi, !comp.hi_closed, &class), &class);
        row = row
            .union(&sols_to_set(&contained, &class))
            .expect("rows are unprimed");
        let viol_lo = f
            .lo
            .solve_le(&comp.lo, comp.lo_closed, &class)
            .meet(&f.hi.solve_ge(&comp.lo, true, &class), &class);
        if !viol_lo.is_empty() {
            partials.push(pt(&comp.lo));
        }
        let viol_hi = f
            .hi
            .solve_ge(&comp.hi, comp.hi_closed, &class)
            .meet(&f.lo.solve_le(&comp.hi, true, &class), &class);
        if !viol_hi.is_empty() {
            partials.push(pt(&comp.hi));
        }
        if comp.hi_closed && !f.lo.solve_eq(&comp.hi, &class).is_empty() {
            pts.push(comp.hi.clone());
        }
        if comp.lo_closed && !f.hi.solve_eq(&comp.lo, &class).is_empty() {
            pts.push(comp.lo.clone());
        }
    }
    (row, partials, pts)
}

/// Merge touching symbolic components (equality of endpoint expressions
/// with at least one closed side).
fn merge_symbolic<S: Scalar>(comps: &mut Vec<SymInterval<S>>) {
    let mut merged = true;
    while merged {
        merged = false;
        'outer: for i in 0..comps.len() {
            for j in 0..comps.len() {
                if i == j {
                    continue;
                }
                if nexpr_eq(&comps[i].hi, &comps[j].lo)
                    && (comps[i].hi_closed || comps[j].lo_closed)
                {
                    comps[i].hi = comps[j].hi.clone();
                    comps[i].hi_closed = comps[j].hi_closed;
                    comps.remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
    }
}

/// Concrete re-derivation of every row up to the horizon: the empty-or-all
/// shape holds member by member, and family members must reproduce the
/// symbolic row pattern exactly.
fn sweep_records<S: Scalar>(
    p: &IntervalPartition<S>,
    m: &PiecewiseAffineMap<S>,
    horizon: u64,
    analysis: &RowAnalysis,
    rep: &mut Report,
) {
    let hmax = horizon.max(p.explicit.len() as u64 + 2);
    for n in 1..=hmax {
        let Some(interval) = p.interval_at(n) else {
            break;
        };
        let Some(pieces) = m.pieces_at(n) else {
            continue;
        };
        let cr = concrete_row(p, m, &pieces, &interval);
        let item = interval_label(n);
        if cr.partials.is_empty() && cr.point_misses.is_empty() {
            rep.push(CheckRecord::pass("empty-or-all", item.clone()));
        } else {
            let w = cr
                .partials
                .first()
                .cloned()
                .unwrap_or_else(|| pt(&cr.point_misses[0]));
            rep.push(CheckRecord::fail("empty-or-all", item.clone(), w));
        }
        if n > p.explicit.len() as u64 {
            let expected = analysis
                .family_rows
                .iter()
                .find(|fr| fr.class.contains(n))
                .map(|fr| row_from(&fr.offsets, &fr.extra, n));
            if let Some(exp) = expected {
                if exp == cr.row {
                    rep.push(CheckRecord::pass("row-agreement", item));
                } else {
                    rep.push(CheckRecord::fail(
                        "row-agreement",
                        item,
                        format!("concrete {} vs pattern {}", cr.row, exp),
                    ));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{accumulation_map, alternating_map, swap_map, tripling_map};
    use crate::num::{int, ratio};
    use crate::Q;

    fn closed(lo: i64, hi: i64) -> Interval<Q> {
        Interval::closed(int(lo), int(hi)).unwrap()
    }

    #[test]
    fn tripling_map_certifies_with_shift_rows() {
        let m = tripling_map();
        assert!(m.certificate().all_pass());
        let tm = m.transition_matrix().unwrap();
        assert_eq!(
            tm.explicit_rows,
            vec![VertexSet::finite([1, 2]).unwrap()]
        );
        assert_eq!(tm.family_rows.len(), 1);
        assert_eq!(tm.family_rows[0].class, IndexClass::new(2, 1));
        assert_eq!(tm.family_rows[0].offsets, vec![-1]);
        assert!(tm.family_rows[0].extra.is_empty());
        assert_eq!(tm.row(2), Some(VertexSet::singleton(1).unwrap()));
        assert_eq!(tm.row(5), Some(VertexSet::singleton(4).unwrap()));
        assert_eq!(tm.entry(1, 2), Some(true));
        assert_eq!(tm.entry(1, 3), Some(false));
        let g = m.induced_ultragraph().unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.families.len(), 1);
        assert_eq!(g.families[0].offsets, vec![-1]);
    }

    #[test]
    fn tripling_map_escape_data() {
        let m = tripling_map();
        let out = m.escape_data(&ratio(1, 2), 8).unwrap();
        match out {
            EscapeOutcome::Escaped(ed) => {
                assert_eq!(ed.tau, 1);
                assert_eq!(ed.j, 1);
                assert_eq!(ed.target, ratio::<Q>(3, 2));
                assert_eq!(ed.iterates, vec![ratio::<Q>(1, 2), ratio(3, 2)]);
            }
            other => panic!("expected an escape, got {other:?}"),
        }
        assert_eq!(
            m.escape_data(&int(0), 8).unwrap(),
            EscapeOutcome::NotEscaping { steps: 1 }
        );
        assert_eq!(
            m.escape_data(&int(1), 8).unwrap(),
            EscapeOutcome::NotEscaping { steps: 2 }
        );
        assert!(matches!(
            m.escape_data(&ratio(7, 2), 8),
            Err(MarkovError::NotInDomain(_))
        ));
    }

    #[test]
    fn tripling_map_backward_orbit() {
        let m = tripling_map();
        let tree = m.backward_orbit(&ratio(3, 2), 3, 12).unwrap();
        let got: Vec<(Q, u32, u64)> = tree
            .nodes
            .iter()
            .map(|nd| (nd.point.clone(), nd.depth, nd.interval))
            .collect();
        assert_eq!(
            got,
            vec![
                (ratio(1, 2), 1, 1),
                (ratio(1, 6), 2, 1),
                (ratio(5, 2), 2, 2),
                (ratio(1, 18), 3, 1),
                (ratio(5, 6), 3, 1),
                (ratio(13, 6), 3, 2),
                (ratio(9, 2), 3, 3),
            ]
        );
        assert!(tree.recurrences.is_empty());
        assert!(tree.overflows.is_empty());
        assert_eq!(tree.points_in(2).len(), 2);
    }

    #[test]
    fn tripling_map_preimage_overflow() {
        let m = tripling_map();
        let pre = m.preimages_of_point(&ratio(1, 2), 1).unwrap();
        assert_eq!(
            pre.hits,
            vec![PreimageHit {
                interval: 1,
                point: ratio(1, 6)
            }]
        );
        assert_eq!(
            pre.overflows,
            vec![OverflowNote {
                depth: 1,
                interval: 2,
                point: ratio(5, 2)
            }]
        );
    }

    #[test]
    fn tripling_map_escape_preimage_hypothesis() {
        let m = tripling_map();
        let EscapeOutcome::Escaped(ed) = m.escape_data(&ratio(1, 2), 8).unwrap() else {
            panic!("expected an escape");
        };
        let good = m
            .x_hypothesis_check(&ed, &VertexSet::tail(2).unwrap(), 12)
            .unwrap();
        assert!(good.all_pass(), "{}", good.record_lines());
        let bad = m
            .x_hypothesis_check(&ed, &VertexSet::tail(1).unwrap(), 12)
            .unwrap();
        assert!(!bad.all_pass());
        let v1 = bad
            .failures()
            .find(|r| r.item == "v1")
            .expect("v1 must fail");
        assert_eq!(v1.witness.as_deref(), Some("1/2"));
    }

    #[test]
    fn accumulation_map_certifies_with_touching_intervals() {
        let m = accumulation_map();
        assert!(m.certificate().all_pass());
        let tm = m.transition_matrix().unwrap();
        assert_eq!(tm.row(1), Some(VertexSet::tail(2).unwrap()));
        assert_eq!(tm.row(2), Some(VertexSet::singleton(1).unwrap()));
        assert_eq!(tm.family_rows.len(), 1);
        assert_eq!(tm.family_rows[0].offsets, vec![-1]);
        assert!(tm.family_rows[0].extra.is_empty());
        assert_eq!(tm.row(3), Some(VertexSet::singleton(2).unwrap()));
        assert!(m.partition().in_gamma(&ratio(11, 4)));
        assert!(!m.partition().in_gamma(&int(3)));
        assert_eq!(m.eval(&ratio(5, 2)), Some(int(1)));
        assert_eq!(m.eval(&int(0)), Some(int(2)));
    }

    #[test]
    fn accumulation_map_escape_and_hypothesis() {
        let m = accumulation_map();
        let out = m.escape_data(&ratio(17, 8), 8).unwrap();
        let EscapeOutcome::Escaped(ed) = out else {
            panic!("expected an escape");
        };
        assert_eq!(ed.tau, 2);
        assert_eq!(ed.j, 1);
        assert_eq!(ed.target, ratio::<Q>(3, 2));
        assert_eq!(
            ed.iterates,
            vec![ratio::<Q>(17, 8), ratio(1, 4), ratio(3, 2)]
        );
        let good = m
            .x_hypothesis_check(&ed, &VertexSet::tail(2).unwrap(), 12)
            .unwrap();
        assert!(good.all_pass(), "{}", good.record_lines());
        let bad = m
            .x_hypothesis_check(&ed, &VertexSet::tail(1).unwrap(), 12)
            .unwrap();
        let v1 = bad
            .failures()
            .find(|r| r.item == "v1")
            .expect("v1 must fail");
        assert_eq!(v1.witness.as_deref(), Some("1/4"));
    }

    #[test]
    fn alternating_map_certifies_with_merged_family() {
        let m = alternating_map();
        assert!(m.certificate().all_pass());
        let tm = m.transition_matrix().unwrap();
        assert_eq!(tm.row(1), Some(VertexSet::singleton(2).unwrap()));
        assert_eq!(tm.row(2), Some(VertexSet::finite([1, 3]).unwrap()));
        assert_eq!(tm.row(3), Some(VertexSet::finite([2, 4]).unwrap()));
        assert_eq!(tm.row(4), Some(VertexSet::finite([3, 5]).unwrap()));
        assert_eq!(tm.row(7), Some(VertexSet::finite([6, 8]).unwrap()));
        let g = m.induced_ultragraph().unwrap();
        assert_eq!(g.families.len(), 1);
        assert_eq!(g.families[0].class, IndexClass::new(4, 1));
        assert_eq!(g.families[0].offsets, vec![-1, 1]);
    }

    #[test]
    fn alternating_map_escape_and_parity_hypothesis() {
        let m = alternating_map();
        let EscapeOutcome::Escaped(ed) = m.escape_data(&ratio(5, 2), 8).unwrap() else {
            panic!("expected an escape");
        };
        assert_eq!(ed.tau, 1);
        assert_eq!(ed.j, 2);
        assert_eq!(ed.target, ratio::<Q>(7, 2));
        let odds = VertexSet::tail_pattern(1, vec![true, false]).unwrap();
        let good = m.x_hypothesis_check(&ed, &odds, 16).unwrap();
        assert!(good.all_pass(), "{}", good.record_lines());
        let evens = VertexSet::tail_pattern(2, vec![true, false]).unwrap();
        let bad = m.x_hypothesis_check(&ed, &evens, 16).unwrap();
        assert!(!bad.all_pass());
        let v2 = bad
            .failures()
            .find(|r| r.item == "v2")
            .expect("v2 must fail");
        assert_eq!(v2.witness.as_deref(), Some("5/2"));
    }

    #[test]
    fn swap_map_recurs_and_rejects_boundary_orbits() {
        let m = swap_map();
        assert!(m.certificate().all_pass());
        assert_eq!(
            m.escape_data(&ratio(1, 2), 16).unwrap(),
            EscapeOutcome::NotEscaping { steps: 2 }
        );
        let tree = m.backward_orbit(&ratio(1, 2), 3, 8).unwrap();
        let got: Vec<(Q, u32, u64)> = tree
            .nodes
            .iter()
            .map(|nd| (nd.point.clone(), nd.depth, nd.interval))
            .collect();
        assert_eq!(got, vec![(ratio(5, 2), 1, 2), (ratio(1, 2), 2, 1)]);
        assert_eq!(
            tree.recurrences,
            vec![Recurrence {
                point: ratio(5, 2),
                first_depth: 1,
                revisit_depth: 3
            }]
        );
        assert!(matches!(
            m.backward_orbit(&int(3), 2, 8),
            Err(MarkovError::OrbitBoundaryPoint(_))
        ));
    }

    #[test]
    fn rejects_partial_interval_coverage() {
        let partition = IntervalPartition::new(
            vec![closed(0, 1)],
            Some(PartitionFamily {
                start: 2,
                lo: NExpr::affine(int(-2), int(2)),
                hi: NExpr::affine(int(-1), int(2)),
            }),
            int(0),
            None,
        )
        .unwrap();
        let map = PiecewiseAffineMap::new(
            vec![vec![Piece {
                domain: closed(0, 1),
                map: Affine::new(ratio(5, 2), int(0)),
            }]],
            vec![FamilyRule {
                class: IndexClass::new(2, 1),
                pieces: vec![SymPiece {
                    domain: SymInterval {
                        lo: NExpr::affine(int(-2), int(2)),
                        hi: NExpr::affine(int(-1), int(2)),
                        lo_closed: true,
                        hi_closed: true,
                    },
                    slope: int(1),
                    intercept: NExpr::constant(int(-2)),
                }],
            }],
            vec![],
        )
        .unwrap();
        let report = MarkovMap::certify(partition, map, 12).unwrap_err();
        let partial = report
            .failures()
            .find(|r| r.check == "image-whole-intervals" && r.item == "I1")
            .expect("the stretched image must fail whole coverage");
        assert_eq!(partial.witness.as_deref(), Some("5/2"));
    }

    #[test]
    fn rejects_boundary_value_outside_gamma() {
        let partition = IntervalPartition::new(
            vec![closed(0, 1)],
            Some(PartitionFamily {
                start: 2,
                lo: NExpr::affine(int(-2), int(2)),
                hi: NExpr::affine(int(-1), int(2)),
            }),
            int(0),
            None,
        )
        .unwrap();
        let map = PiecewiseAffineMap::new(
            vec![vec![Piece {
                domain: closed(0, 1),
                map: Affine::new(int(3), int(0)),
            }]],
            vec![FamilyRule {
                class: IndexClass::new(2, 1),
                pieces: vec![SymPiece {
                    domain: SymInterval {
                        lo: NExpr::affine(int(-2), int(2)),
                        hi: NExpr::affine(int(-1), int(2)),
                        lo_closed: true,
                        hi_closed: true,
                    },
                    slope: int(1),
                    intercept: NExpr::constant(int(-2)),
                }],
            }],
            vec![(int(1), ratio(3, 2))],
        )
        .unwrap();
        let report = MarkovMap::certify(partition, map, 12).unwrap_err();
        assert!(report
            .failures()
            .any(|r| r.check == "gamma-invariant" && r.witness.as_deref() == Some("3/2")));
        assert!(report
            .failures()
            .any(|r| r.check == "image-whole-intervals" && r.witness.as_deref() == Some("3")));
    }

    #[test]
    fn rejects_structural_misuse() {
        assert!(matches!(
            IntervalPartition::<Q>::new(
                vec![Interval::new(int(0), true, int(1), false).unwrap()],
                None,
                int(0),
                Some(int(1)),
            ),
            Err(MarkovError::NotClosed(1))
        ));
        assert!(matches!(
            IntervalPartition::<Q>::new(
                vec![closed(0, 1)],
                Some(PartitionFamily {
                    start: 3,
                    lo: NExpr::affine(int(-2), int(2)),
                    hi: NExpr::affine(int(-1), int(2)),
                }),
                int(0),
                None,
            ),
            Err(MarkovError::FamilyStart {
                family: 3,
                explicit: 1
            })
        ));
        assert!(matches!(
            PiecewiseAffineMap::<Q>::new(
                vec![vec![Piece {
                    domain: closed(0, 1),
                    map: Affine::new(int(0), int(2)),
                }]],
                vec![],
                vec![],
            ),
            Err(MarkovError::ZeroSlope { .. })
        ));
        assert!(matches!(
            PiecewiseAffineMap::<Q>::new(
                vec![],
                vec![
                    FamilyRule {
                        class: IndexClass::new(1, 2),
                        pieces: vec![],
                    },
                    FamilyRule {
                        class: IndexClass::new(3, 2),
                        pieces: vec![],
                    },
                ],
                vec![],
            ),
            Err(MarkovError::OverlappingRules(_, _))
        ));
        assert!(matches!(
            PiecewiseAffineMap::<Q>::new(
                vec![],
                vec![],
                vec![(int(0), int(1)), (int(0), int(2))],
            ),
            Err(MarkovError::DuplicateOverride(_))
        ));
    }
}
