//! Ultragraphs with set-valued edge ranges, possibly infinite via indexed
//! edge families, and the sink-extended lift used by relative algebras.
//!
//! Vertices are positive integers. An explicit edge has a name, a source
//! vertex, and a range [`VertexSet`]. An edge family contributes one edge
//! `e_n` per index `n` in its class, sourced at `v_n`, with range
//! `{n + d : d in offsets, n + d >= 1} ∪ extra`. Every vertex emits finitely
//! many edges under this representation, so the regular vertices are exactly
//! the sources.
//!
//! Given a relative vertex set `X` inside the regular vertices, the lift
//! adjoins a primed sink `w'` for each `w` in `Y` (regular vertices outside
//! `X`) and a primed edge `e'` for each edge whose range meets `Y`, with
//! `s(e') = s(e)` and `r(e') = (r(e) ∩ Y)'`. Cycles are unchanged by the
//! lift; exits are not, and the exit checkers here enumerate the lifted
//! structure directly rather than assuming any shortcut formula.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::interval::IndexClass;
use crate::vertexset::{EXSet, SetError, VertexSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdgeId(String),
    #[error("edge `{0}` has an empty range")]
    EmptyRange(String),
    #[error("edge `{id}` uses vertex {vertex} outside the vertex set")]
    VertexOutsideGraph { id: String, vertex: u64 },
    #[error("edge family `{0}` has indices outside the vertex set")]
    FamilyOutsideGraph(String),
    #[error("relative set contains non-regular vertex {0}")]
    NotRegular(u64),
    #[error("primed part of the set is not contained in Y")]
    PrimedPartOutsideY,
    #[error("unprimed part meets Y in an infinite set; the translation needs a finite sum")]
    InfiniteTranslationSum,
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Explicitly named edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub source: u64,
    pub range: VertexSet,
}

/// One edge `e_n` per index `n` in `class`, sourced at `v_n`, with range
/// `{n + d : d in offsets, n + d >= 1} ∪ extra`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeFamily {
    pub prefix: String,
    pub class: IndexClass,
    pub offsets: Vec<i64>,
    pub extra: VertexSet,
}

impl EdgeFamily {
    pub fn class_set(&self) -> VertexSet {
        VertexSet::progression(self.class.start, self.class.step)
            .expect("progressions over positive indices are well-formed")
    }

    pub fn range_at(&self, n: u64) -> VertexSet {
        let mut members = BTreeSet::new();
        for &d in &self.offsets {
            let shifted = n as i64 + d;
            if shifted >= 1 {
                members.insert(shifted as u64);
            }
        }
        VertexSet::finite(members)
            .expect("offset ranges keep positive indices")
            .union(&self.extra)
            .expect("family ranges are unprimed")
    }

    /// Indices `n` in the class whose range meets `targets`.
    pub fn indices_with_range_meeting(&self, targets: &VertexSet) -> VertexSet {
        let class_set = self.class_set();
        if !self
            .extra
            .intersect(targets)
            .expect("family ranges are unprimed")
            .is_empty()
        {
            return class_set;
        }
        let mut hits = VertexSet::empty();
        for &d in &self.offsets {
            let valid_from = VertexSet::tail((1 - d).max(1) as u64)
                .expect("tails over positive indices are well-formed");
            let hit = targets
                .shifted_query(d)
                .intersect(&valid_from)
                .and_then(|s| s.intersect(&class_set))
                .expect("family index sets are unprimed");
            hits = hits.union(&hit).expect("family index sets are unprimed");
        }
        hits
    }
}

/// Edge identifier: a named explicit edge or a family member `(prefix, n)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKey {
    Named(String),
    Indexed(String, u64),
}

impl EdgeKey {
    pub fn id(&self) -> String {
        match self {
            EdgeKey::Named(s) => s.clone(),
            EdgeKey::Indexed(prefix, n) => format!("{prefix}{n}"),
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Edge of a lifted graph: a base edge or its primed copy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeRef {
    pub key: EdgeKey,
    pub primed: bool,
}

impl EdgeRef {
    pub fn plain(key: EdgeKey) -> Self {
        EdgeRef { key, primed: false }
    }

    pub fn primed(key: EdgeKey) -> Self {
        EdgeRef { key, primed: true }
    }
}

impl fmt::Display for EdgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.key, if self.primed { "'" } else { "" })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ultragraph {
    pub vertices: VertexSet,
    pub edges: Vec<Edge>,
    pub families: Vec<EdgeFamily>,
}

impl Ultragraph {
    pub fn new(
        vertices: VertexSet,
        edges: Vec<Edge>,
        families: Vec<EdgeFamily>,
    ) -> Result<Self, GraphError> {
        let g = Ultragraph {
            vertices,
            edges,
            families,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), GraphError> {
        self.vertices.expect_unprimed()?;
        let mut seen_ids = BTreeSet::new();
        for e in &self.edges {
            e.range.expect_unprimed()?;
            if !seen_ids.insert(e.id.clone()) {
                return Err(GraphError::DuplicateEdgeId(e.id.clone()));
            }
            if !self.vertices.member(e.source) {
                return Err(GraphError::VertexOutsideGraph {
                    id: e.id.clone(),
                    vertex: e.source,
                });
            }
            if e.range.is_empty() {
                return Err(GraphError::EmptyRange(e.id.clone()));
            }
            let outside = e.range.difference(&self.vertices)?;
            if let Some(v) = outside.min_member() {
                return Err(GraphError::VertexOutsideGraph {
                    id: e.id.clone(),
                    vertex: v,
                });
            }
        }
        for (i, fam) in self.families.iter().enumerate() {
            fam.extra.expect_unprimed()?;
            for other in &self.families[..i] {
                if other.prefix == fam.prefix && classes_meet(&other.class, &fam.class) {
                    return Err(GraphError::DuplicateEdgeId(fam.prefix.clone()));
                }
            }
            if fam.class.start == 0 {
                return Err(GraphError::FamilyOutsideGraph(fam.prefix.clone()));
            }
            let class_set = fam.class_set();
            if !class_set.difference(&self.vertices)?.is_empty() {
                return Err(GraphError::FamilyOutsideGraph(fam.prefix.clone()));
            }
            if fam.range_at(fam.class.start).is_empty() {
                return Err(GraphError::EmptyRange(format!(
                    "{}{}",
                    fam.prefix, fam.class.start
                )));
            }
            for &d in &fam.offsets {
                let valid_from = VertexSet::tail((1 - d).max(1) as u64)?;
                let reachable = class_set.intersect(&valid_from)?;
                let bad = reachable.difference(&self.vertices.shifted_query(d))?;
                if !bad.is_empty() {
                    return Err(GraphError::FamilyOutsideGraph(fam.prefix.clone()));
                }
            }
            let outside = fam.extra.difference(&self.vertices)?;
            if !outside.is_empty() {
                return Err(GraphError::FamilyOutsideGraph(fam.prefix.clone()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, id: &str) -> Option<EdgeKey> {
        if self.edges.iter().any(|e| e.id == id) {
            return Some(EdgeKey::Named(id.to_string()));
        }
        for fam in &self.families {
            if let Some(rest) = id.strip_prefix(&fam.prefix) {
                if let Ok(n) = rest.parse::<u64>() {
                    if fam.class.contains(n) {
                        return Some(EdgeKey::Indexed(fam.prefix.clone(), n));
                    }
                }
            }
        }
        None
    }

    fn family_at(&self, prefix: &str, n: u64) -> Option<&EdgeFamily> {
        self.families
            .iter()
            .find(|f| f.prefix == prefix && f.class.contains(n))
    }

    pub fn edge_source(&self, key: &EdgeKey) -> Result<u64, GraphError> {
        match key {
            EdgeKey::Named(id) => self
                .edges
                .iter()
                .find(|e| &e.id == id)
                .map(|e| e.source)
                .ok_or_else(|| GraphError::UnknownEdge(id.clone())),
            EdgeKey::Indexed(prefix, n) => {
                if self.family_at(prefix, *n).is_some() {
                    Ok(*n)
                } else {
                    Err(GraphError::UnknownEdge(key.id()))
                }
            }
        }
    }

    pub fn edge_range(&self, key: &EdgeKey) -> Result<VertexSet, GraphError> {
        match key {
            EdgeKey::Named(id) => self
                .edges
                .iter()
                .find(|e| &e.id == id)
                .map(|e| e.range.clone())
                .ok_or_else(|| GraphError::UnknownEdge(id.clone())),
            EdgeKey::Indexed(prefix, n) => self
                .family_at(prefix, *n)
                .map(|f| f.range_at(*n))
                .ok_or_else(|| GraphError::UnknownEdge(key.id())),
        }
    }

    pub fn out_edges(&self, v: u64) -> Vec<EdgeKey> {
        let mut out: Vec<EdgeKey> = self
            .edges
            .iter()
            .filter(|e| e.source == v)
            .map(|e| EdgeKey::Named(e.id.clone()))
            .collect();
        for fam in &self.families {
            if fam.class.contains(v) {
                out.push(EdgeKey::Indexed(fam.prefix.clone(), v));
            }
        }
        out.sort();
        out
    }

    /// Vertices with at least one outgoing edge. Out-degrees are finite
    /// throughout this representation, so these are the regular vertices.
    pub fn sources(&self) -> VertexSet {
        let mut s = VertexSet::finite(self.edges.iter().map(|e| e.source))
            .expect("edge sources are positive indices");
        for fam in &self.families {
            s = s.union(&fam.class_set()).expect("sources are unprimed");
        }
        s
    }

    pub fn regular_vertices(&self) -> VertexSet {
        self.sources()
    }

    pub fn sinks(&self) -> VertexSet {
        self.vertices
            .difference(&self.sources())
            .expect("vertex sets are unprimed")
    }

    /// All edges whose source index is at most `max_index`.
    pub fn edges_up_to(&self, max_index: u64) -> Vec<EdgeKey> {
        let mut out: Vec<EdgeKey> = self
            .edges
            .iter()
            .map(|e| EdgeKey::Named(e.id.clone()))
            .collect();
        for fam in &self.families {
            for n in fam.class.iter_up_to(max_index) {
                out.push(EdgeKey::Indexed(fam.prefix.clone(), n));
            }
        }
        out.sort();
        out
    }

    /// Edges sourced inside `set`, truncating infinite source sets at
    /// `max_index`. The second component reports whether the truncation cut
    /// anything off.
    pub fn edges_from_set(&self, set: &VertexSet, max_index: u64) -> (Vec<EdgeKey>, bool) {
        let mut out = Vec::new();
        let mut truncated = false;
        for e in &self.edges {
            if set.member(e.source) {
                out.push(EdgeKey::Named(e.id.clone()));
            }
        }
        for fam in &self.families {
            let hits = fam
                .class_set()
                .intersect(set)
                .expect("source sets are unprimed");
            for n in hits.enumerate_up_to(max_index) {
                out.push(EdgeKey::Indexed(fam.prefix.clone(), n));
            }
            truncated |= hits.has_member_beyond(max_index);
        }
        out.sort();
        (out, truncated)
    }

    /// Closed paths up to `max_len` whose edges all have source at most
    /// `max_index`, deduplicated by rotation. Exhaustive for the subgraph on
    /// vertices `<= max_index`; families may of course continue beyond.
    pub fn cycles(&self, max_index: u64, max_len: usize) -> Vec<Cycle> {
        let mut found: BTreeSet<Vec<EdgeKey>> = BTreeSet::new();
        let starts: Vec<u64> = self
            .sources()
            .enumerate_up_to(max_index)
            .into_iter()
            .collect();
        for v in starts {
            let mut stack: Vec<EdgeKey> = Vec::new();
            self.cycle_dfs(v, v, max_index, max_len, &mut stack, &mut found);
        }
        found.into_iter().map(|edges| Cycle { edges }).collect()
    }

    fn cycle_dfs(
        &self,
        base: u64,
        at: u64,
        max_index: u64,
        max_len: usize,
        stack: &mut Vec<EdgeKey>,
        found: &mut BTreeSet<Vec<EdgeKey>>,
    ) {
        if stack.len() >= max_len {
            return;
        }
        for key in self.out_edges(at) {
            let range = self.edge_range(&key).expect("edge from out_edges");
            stack.push(key);
            if range.member(base) {
                found.insert(canonical_rotation(stack));
            }
            for next in range.enumerate_up_to(max_index) {
                self.cycle_dfs(base, next, max_index, max_len, stack, found);
            }
            stack.pop();
        }
    }

    /// Exit of a closed path: another edge leaving some range along the
    /// cycle, or a sink inside one.
    pub fn cycle_exit(&self, cycle: &Cycle, max_index: u64) -> Option<ExitWitness> {
        let k = cycle.edges.len();
        let sinks = self.sinks();
        for (i, key) in cycle.edges.iter().enumerate() {
            let range = self.edge_range(key).expect("cycle edge");
            let next = &cycle.edges[(i + 1) % k];
            if let Some(w) = range
                .intersect(&sinks)
                .expect("ranges are unprimed")
                .min_member()
            {
                return Some(ExitWitness::Sink(w));
            }
            let (candidates, _) = self.edges_from_set(&range, max_index);
            if let Some(f) = candidates.into_iter().find(|f| f != next) {
                return Some(ExitWitness::Edge(EdgeRef::plain(f)));
            }
        }
        None
    }

    /// Every cycle inside the bound has an exit.
    pub fn condition_l(&self, max_index: u64, max_len: usize) -> ConditionL {
        let cycles = self.cycles(max_index, max_len);
        let mut checked = 0;
        for c in &cycles {
            if !c.is_primitive() {
                continue;
            }
            checked += 1;
            if self.cycle_exit(c, max_index).is_none() {
                return ConditionL {
                    holds: false,
                    cycles_checked: checked,
                    witness: Some(c.clone()),
                };
            }
        }
        ConditionL {
            holds: true,
            cycles_checked: checked,
            witness: None,
        }
    }

    /// Every edge range meets `targets` in a finite set; returns an
    /// offending edge description otherwise.
    pub fn ranges_meet_finitely(&self, targets: &VertexSet) -> Result<(), String> {
        for e in &self.edges {
            let meet = e
                .range
                .intersect(targets)
                .expect("ranges are unprimed");
            if !meet.is_finite() {
                return Err(e.id.clone());
            }
        }
        for fam in &self.families {
            let meet = fam
                .extra
                .intersect(targets)
                .expect("ranges are unprimed");
            if !meet.is_finite() {
                return Err(format!("{}n", fam.prefix));
            }
        }
        Ok(())
    }
}

/// Two index classes share a member iff their starts agree modulo the gcd
/// of their steps; arithmetic progressions always meet beyond both starts
/// when the congruence is solvable.
pub(crate) fn classes_meet(a: &IndexClass, b: &IndexClass) -> bool {
    let g = num_integer::gcd(a.step, b.step);
    (a.start as i128 - b.start as i128).rem_euclid(g as i128) == 0
}

fn canonical_rotation(edges: &[EdgeKey]) -> Vec<EdgeKey> {
    let k = edges.len();
    let mut best: Option<Vec<EdgeKey>> = None;
    for r in 0..k {
        let rotated: Vec<EdgeKey> = (0..k).map(|i| edges[(r + i) % k].clone()).collect();
        if best.as_ref().is_none_or(|b| &rotated < b) {
            best = Some(rotated);
        }
    }
    best.expect("cycles are nonempty")
}

/// Closed path, stored in its lexicographically least rotation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cycle {
    pub edges: Vec<EdgeKey>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Not a repetition of a shorter closed path.
    pub fn is_primitive(&self) -> bool {
        let k = self.edges.len();
        for d in 1..k {
            if k.is_multiple_of(d) && (0..k).all(|i| self.edges[i] == self.edges[i % d]) {
                return false;
            }
        }
        true
    }

    /// All edge sources distinct.
    pub fn is_simple(&self, g: &Ultragraph) -> bool {
        let mut seen = BTreeSet::new();
        self.edges
            .iter()
            .all(|k| seen.insert(g.edge_source(k).expect("cycle edge")))
    }

    pub fn base(&self, g: &Ultragraph) -> u64 {
        g.edge_source(&self.edges[0]).expect("cycle edge")
    }
}

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.edges.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitWitness {
    Sink(u64),
    Edge(EdgeRef),
}

impl fmt::Display for ExitWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExitWitness::Sink(v) => write!(f, "sink v{v}"),
            ExitWitness::Edge(e) => write!(f, "edge {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionL {
    pub holds: bool,
    pub cycles_checked: usize,
    pub witness: Option<Cycle>,
}

/// Ultragraph together with a relative vertex set `X` inside its regular
/// vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelativeUltragraph {
    pub graph: Ultragraph,
    pub x: VertexSet,
    pub y: VertexSet,
}

impl RelativeUltragraph {
    pub fn new(graph: Ultragraph, x: VertexSet) -> Result<Self, GraphError> {
        let reg = graph.regular_vertices();
        let stray = x.difference(&reg)?;
        if let Some(v) = stray.min_member() {
            return Err(GraphError::NotRegular(v));
        }
        let y = reg.difference(&x)?;
        Ok(RelativeUltragraph { graph, x, y })
    }

    /// Adjoin a primed sink for each vertex of `Y` and a primed edge for
    /// each edge whose range meets `Y`.
    pub fn lift(&self) -> LiftedUltragraph {
        let explicit_primed = self
            .graph
            .edges
            .iter()
            .map(|e| {
                !e.range
                    .intersect(&self.y)
                    .expect("ranges are unprimed")
                    .is_empty()
            })
            .collect();
        let family_primed = self
            .graph
            .families
            .iter()
            .map(|fam| fam.indices_with_range_meeting(&self.y))
            .collect();
        LiftedUltragraph {
            base: self.clone(),
            explicit_primed,
            family_primed,
        }
    }

    /// Every cycle inside the bound without an exit passes through an edge
    /// whose range meets `Y`.
    pub fn relative_condition_l(&self, max_index: u64, max_len: usize) -> ConditionL {
        let cycles = self.graph.cycles(max_index, max_len);
        let mut checked = 0;
        for c in &cycles {
            if !c.is_primitive() {
                continue;
            }
            checked += 1;
            if self.graph.cycle_exit(c, max_index).is_some() {
                continue;
            }
            let some_range_meets_y = c.edges.iter().any(|k| {
                !self
                    .graph
                    .edge_range(k)
                    .expect("cycle edge")
                    .intersect(&self.y)
                    .expect("ranges are unprimed")
                    .is_empty()
            });
            if !some_range_meets_y {
                return ConditionL {
                    holds: false,
                    cycles_checked: checked,
                    witness: Some(c.clone()),
                };
            }
        }
        ConditionL {
            holds: true,
            cycles_checked: checked,
            witness: None,
        }
    }
}

/// The lifted graph: base vertices plus primed sinks `Y'`, base edges plus
/// primed copies of edges whose range meets `Y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedUltragraph {
    pub base: RelativeUltragraph,
    explicit_primed: Vec<bool>,
    family_primed: Vec<VertexSet>,
}

impl LiftedUltragraph {
    pub fn graph(&self) -> &Ultragraph {
        &self.base.graph
    }

    pub fn y(&self) -> &VertexSet {
        &self.base.y
    }

    pub fn vertices(&self) -> EXSet {
        EXSet::new(
            self.base.graph.vertices.clone(),
            self.base.y.clone().primed(),
        )
        .expect("vertex components carry matching flags")
    }

    /// Does the primed copy `e'` exist?
    pub fn has_primed(&self, key: &EdgeKey) -> bool {
        match key {
            EdgeKey::Named(id) => self
                .base
                .graph
                .edges
                .iter()
                .position(|e| &e.id == id)
                .map(|i| self.explicit_primed[i])
                .unwrap_or(false),
            EdgeKey::Indexed(prefix, n) => self
                .base
                .graph
                .families
                .iter()
                .position(|f| &f.prefix == prefix && f.class.contains(*n))
                .map(|i| self.family_primed[i].member(*n))
                .unwrap_or(false),
        }
    }

    pub fn edge_source(&self, e: &EdgeRef) -> Result<u64, GraphError> {
        self.base.graph.edge_source(&e.key)
    }

    /// Range in the lifted graph: unprimed edges keep their range; primed
    /// edges range over `(r(e) ∩ Y)'`.
    pub fn edge_range(&self, e: &EdgeRef) -> Result<EXSet, GraphError> {
        let base_range = self.base.graph.edge_range(&e.key)?;
        if e.primed {
            if !self.has_primed(&e.key) {
                return Err(GraphError::UnknownEdge(format!("{e}")));
            }
            let meet = base_range.intersect(&self.base.y)?;
            Ok(EXSet::from_primed(meet.primed())?)
        } else {
            Ok(EXSet::from_unprimed(base_range)?)
        }
    }

    /// Out-edges of an unprimed vertex; primed vertices are sinks.
    pub fn out_edges(&self, v: u64) -> Vec<EdgeRef> {
        let mut out = Vec::new();
        for key in self.base.graph.out_edges(v) {
            if self.has_primed(&key) {
                out.push(EdgeRef::primed(key.clone()));
            }
            out.push(EdgeRef::plain(key));
        }
        out.sort();
        out
    }

    /// Primed edges sourced inside `set`, truncated at `max_index`.
    fn primed_edges_from_set(&self, set: &VertexSet, max_index: u64) -> Vec<EdgeRef> {
        let mut out = Vec::new();
        for (i, e) in self.base.graph.edges.iter().enumerate() {
            if self.explicit_primed[i] && set.member(e.source) {
                out.push(EdgeRef::primed(EdgeKey::Named(e.id.clone())));
            }
        }
        for (i, fam) in self.base.graph.families.iter().enumerate() {
            let hits = self.family_primed[i]
                .intersect(set)
                .expect("source sets are unprimed");
            for n in hits.enumerate_up_to(max_index) {
                out.push(EdgeRef::primed(EdgeKey::Indexed(fam.prefix.clone(), n)));
            }
        }
        out
    }

    /// Cycles are the base graph's cycles: primed vertices have no
    /// out-edges and primed edges end in them.
    pub fn cycles(&self, max_index: u64, max_len: usize) -> Vec<Cycle> {
        self.base.graph.cycles(max_index, max_len)
    }

    /// Exit of a cycle inside the lifted graph, enumerated from the lifted
    /// structure: base exits still count, and so does any primed edge
    /// sourced along the cycle.
    pub fn cycle_exit(&self, cycle: &Cycle, max_index: u64) -> Option<ExitWitness> {
        if let Some(w) = self.base.graph.cycle_exit(cycle, max_index) {
            return Some(w);
        }
        for key in &cycle.edges {
            let range = self.base.graph.edge_range(key).expect("cycle edge");
            if let Some(f) = self.primed_edges_from_set(&range, max_index).into_iter().next() {
                return Some(ExitWitness::Edge(f));
            }
        }
        None
    }

    pub fn condition_l(&self, max_index: u64, max_len: usize) -> ConditionL {
        let cycles = self.cycles(max_index, max_len);
        let mut checked = 0;
        for c in &cycles {
            if !c.is_primitive() {
                continue;
            }
            checked += 1;
            if self.cycle_exit(c, max_index).is_none() {
                return ConditionL {
                    holds: false,
                    cycles_checked: checked,
                    witness: Some(c.clone()),
                };
            }
        }
        ConditionL {
            holds: true,
            cycles_checked: checked,
            witness: None,
        }
    }

    /// Split a lifted vertex set as `Z = A ∪ (B ∩ Y)'`: the unprimed part
    /// and the unprimed content of the primed part, which must sit inside
    /// `Y`.
    pub fn decompose(&self, z: &EXSet) -> Result<(VertexSet, VertexSet), GraphError> {
        let a = z.unprimed_part().clone();
        let b = z.primed_part().clone().unprimed();
        if !b.difference(&self.base.y)?.is_empty() {
            return Err(GraphError::PrimedPartOutsideY);
        }
        Ok((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vertexset::VertexSet;

    fn loop_with_tail() -> Ultragraph {
        // v1 -e1-> {v1, v2}, v2 -e2-> {v2}
        Ultragraph::new(
            VertexSet::finite([1, 2]).unwrap(),
            vec![
                Edge {
                    id: "e1".into(),
                    source: 1,
                    range: VertexSet::finite([1, 2]).unwrap(),
                },
                Edge {
                    id: "e2".into(),
                    source: 2,
                    range: VertexSet::singleton(2).unwrap(),
                },
            ],
            vec![],
        )
        .unwrap()
    }

    fn ladder() -> Ultragraph {
        // f1: v1 -> {v2}; e_n: v_n -> {v_{n-1}, v_{n+1}} for n >= 2
        Ultragraph::new(
            VertexSet::tail(1).unwrap(),
            vec![Edge {
                id: "f1".into(),
                source: 1,
                range: VertexSet::singleton(2).unwrap(),
            }],
            vec![EdgeFamily {
                prefix: "e".into(),
                class: IndexClass::new(2, 1),
                offsets: vec![-1, 1],
                extra: VertexSet::empty(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn sources_and_sinks() {
        let g = loop_with_tail();
        assert_eq!(g.sources(), VertexSet::finite([1, 2]).unwrap());
        assert!(g.sinks().is_empty());
        let ladder = ladder();
        assert_eq!(ladder.sources(), VertexSet::tail(1).unwrap());
        assert!(ladder.sinks().is_empty());
    }

    #[test]
    fn edge_resolution_round_trips() {
        let g = ladder();
        assert_eq!(g.resolve("f1"), Some(EdgeKey::Named("f1".into())));
        assert_eq!(g.resolve("e7"), Some(EdgeKey::Indexed("e".into(), 7)));
        assert_eq!(g.resolve("e1"), None);
        assert_eq!(g.resolve("zzz"), None);
        let key = g.resolve("e7").unwrap();
        assert_eq!(g.edge_source(&key).unwrap(), 7);
        assert_eq!(g.edge_range(&key).unwrap(), VertexSet::finite([6, 8]).unwrap());
    }

    #[test]
    fn cycle_enumeration_with_rotation_dedup() {
        let g = loop_with_tail();
        let cycles = g.cycles(2, 3);
        // (e1), (e2), and no rotations counted twice; (e1 e1) etc. appear as
        // non-primitive repetitions.
        let primitive: Vec<_> = cycles.iter().filter(|c| c.is_primitive()).collect();
        assert_eq!(primitive.len(), 2);
        let ladder = ladder();
        let cycles = ladder.cycles(6, 2);
        let two_cycles: Vec<_> = cycles
            .iter()
            .filter(|c| c.len() == 2 && c.is_primitive())
            .collect();
        // (f1 e2) plus (e_n e_{n+1}) for n = 2..5 within the bound.
        assert_eq!(two_cycles.len(), 5);
        assert!(two_cycles.iter().all(|c| c.is_simple(&ladder)));
        assert!(two_cycles.contains(&&Cycle {
            edges: vec![EdgeKey::Named("f1".into()), EdgeKey::Indexed("e".into(), 2)],
        }));
    }

    #[test]
    fn exits_and_condition_l() {
        let g = loop_with_tail();
        let cycles = g.cycles(2, 1);
        let self_loop_1 = cycles
            .iter()
            .find(|c| c.edges == vec![EdgeKey::Named("e1".into())])
            .unwrap();
        let self_loop_2 = cycles
            .iter()
            .find(|c| c.edges == vec![EdgeKey::Named("e2".into())])
            .unwrap();
        assert!(g.cycle_exit(self_loop_1, 2).is_some());
        assert!(g.cycle_exit(self_loop_2, 2).is_none());
        let report = g.condition_l(2, 2);
        assert!(!report.holds);
        assert_eq!(report.witness.as_ref().unwrap(), self_loop_2);
        let ladder = ladder();
        assert!(ladder.condition_l(8, 4).holds);
    }

    #[test]
    fn lift_adds_primed_sinks_and_edges() {
        let g = loop_with_tail();
        // X = {1}: Y = {2}.
        let rel = RelativeUltragraph::new(g, VertexSet::singleton(1).unwrap()).unwrap();
        assert_eq!(rel.y, VertexSet::singleton(2).unwrap());
        let lift = rel.lift();
        assert!(lift.has_primed(&EdgeKey::Named("e1".into())));
        assert!(lift.has_primed(&EdgeKey::Named("e2".into())));
        let primed = EdgeRef::primed(EdgeKey::Named("e1".into()));
        let range = lift.edge_range(&primed).unwrap();
        assert!(range.unprimed_part().is_empty());
        assert_eq!(
            range.primed_part(),
            &VertexSet::singleton(2).unwrap().primed()
        );
        assert_eq!(lift.out_edges(1).len(), 2);
        assert_eq!(lift.out_edges(2).len(), 2);
    }

    #[test]
    fn lifted_exits_follow_the_primed_structure() {
        let g = loop_with_tail();
        // Exitless loop (e2) at v2; r(e2) = {2}.
        // With X = {1}: Y = {2}, e2 gains a primed copy, which is an exit.
        let rel = RelativeUltragraph::new(g.clone(), VertexSet::singleton(1).unwrap()).unwrap();
        let lift = rel.lift();
        let loop2 = Cycle {
            edges: vec![EdgeKey::Named("e2".into())],
        };
        assert!(g.cycle_exit(&loop2, 2).is_none());
        assert_eq!(
            lift.cycle_exit(&loop2, 2),
            Some(ExitWitness::Edge(EdgeRef::primed(EdgeKey::Named(
                "e2".into()
            ))))
        );
        assert!(lift.condition_l(2, 2).holds);
        assert!(rel.relative_condition_l(2, 2).holds);
        // With X = Reg: Y = {}, nothing is primed, the loop stays exitless.
        let rel_full = RelativeUltragraph::new(g, VertexSet::finite([1, 2]).unwrap()).unwrap();
        let lift_full = rel_full.lift();
        assert!(lift_full.cycle_exit(&loop2, 2).is_none());
        assert!(!lift_full.condition_l(2, 2).holds);
        assert!(!rel_full.relative_condition_l(2, 2).holds);
    }

    #[test]
    fn exitless_in_lift_needs_ranges_clear_of_y() {
        // For every cycle in bounds: exitless in the lift iff exitless in
        // the base and no range along the cycle meets Y.
        let g = ladder();
        for x in [
            VertexSet::tail(1).unwrap(),
            VertexSet::tail_pattern(1, vec![true, false]).unwrap(),
            VertexSet::finite([1, 2, 3])
                .unwrap()
                .union(&VertexSet::tail(5).unwrap())
                .unwrap(),
        ] {
            let rel = RelativeUltragraph::new(g.clone(), x).unwrap();
            let lift = rel.lift();
            for c in lift.cycles(6, 3) {
                let lhs = lift.cycle_exit(&c, 12).is_none();
                let base_exitless = g.cycle_exit(&c, 12).is_none();
                let clear = c.edges.iter().all(|k| {
                    g.edge_range(k)
                        .unwrap()
                        .intersect(&rel.y)
                        .unwrap()
                        .is_empty()
                });
                assert_eq!(lhs, base_exitless && clear, "cycle {c}");
            }
        }
    }

    #[test]
    fn relative_set_must_be_regular() {
        let g = loop_with_tail();
        let err = RelativeUltragraph::new(g, VertexSet::finite([1, 3]).unwrap()).unwrap_err();
        assert_eq!(err, GraphError::NotRegular(3));
    }

    #[test]
    fn family_lift_uses_shifted_membership() {
        let g = ladder();
        // X = odd vertices: Y = evens. r(e_n) = {n-1, n+1} meets the evens
        // exactly when n is odd; r(f1) = {2} always does.
        let odds = VertexSet::tail_pattern(1, vec![true, false]).unwrap();
        let rel = RelativeUltragraph::new(g, odds).unwrap();
        let lift = rel.lift();
        assert!(lift.has_primed(&EdgeKey::Named("f1".into())));
        assert!(lift.has_primed(&EdgeKey::Indexed("e".into(), 3)));
        assert!(!lift.has_primed(&EdgeKey::Indexed("e".into(), 4)));
        assert!(lift.has_primed(&EdgeKey::Indexed("e".into(), 101)));
    }

    #[test]
    fn decompose_splits_and_validates() {
        let g = ladder();
        let odds = VertexSet::tail_pattern(1, vec![true, false]).unwrap();
        let rel = RelativeUltragraph::new(g, odds).unwrap();
        let lift = rel.lift();
        let z = EXSet::new(
            VertexSet::finite([1, 4]).unwrap(),
            VertexSet::finite([2, 6]).unwrap().primed(),
        )
        .unwrap();
        let (a, b) = lift.decompose(&z).unwrap();
        assert_eq!(a, VertexSet::finite([1, 4]).unwrap());
        assert_eq!(b, VertexSet::finite([2, 6]).unwrap());
        let bad = EXSet::new(
            VertexSet::empty(),
            VertexSet::finite([3]).unwrap().primed(),
        )
        .unwrap();
        assert_eq!(
            lift.decompose(&bad).unwrap_err(),
            GraphError::PrimedPartOutsideY
        );
    }

    #[test]
    fn range_meet_finiteness_reports_offenders() {
        let big_range = Ultragraph::new(
            VertexSet::tail(1).unwrap(),
            vec![Edge {
                id: "e1".into(),
                source: 1,
                range: VertexSet::tail(2).unwrap(),
            }],
            vec![],
        )
        .unwrap();
        let evens = VertexSet::tail_pattern(2, vec![true, false]).unwrap();
        assert_eq!(
            big_range.ranges_meet_finitely(&evens),
            Err("e1".to_string())
        );
        let ok = ladder();
        assert_eq!(ok.ranges_meet_finitely(&evens), Ok(()));
    }
}
