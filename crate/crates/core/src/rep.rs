//! Finite branching systems over ultragraphs, their sink-extended
//! lifts, matrix models built from them, and the injectivity and
//! counting-measure certificates for interval maps.
//!
//! A [`BranchingSystem`] is a finite family of labelled points, each
//! owned by a vertex, together with one pairing per edge: the pairing
//! for `e` matches a point of `D_{r(e)}` with the point it is carried
//! to inside `I_{s(e)}`. Backward orbits of certified interval maps
//! produce such systems, with the pairing for `e_i` acting as the
//! inverse branch at interval `i`. All checks run on the truncated
//! point space; guard bands excuse exactly what the depth cut removes,
//! and anything truncation cannot decide is reported as undetermined
//! rather than silently passed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::interval::{Affine, Interval};
use crate::markov::{EscapeData, MarkovError, MarkovMap, OrbitTree, Piece};
use crate::num::Scalar;
use crate::relations::{
    evaluate, psi_image, Algebra, Evaluation, GenSym, MatrixRep, Owner, RelError, RelationScope,
    StarPolynomial,
};
use crate::report::{CheckRecord, Report};
use crate::sparse::PartialInjection;
use crate::ultragraph::{Cycle, EdgeKey, EdgeRef, GraphError, RelativeUltragraph, Ultragraph};
use crate::vertexset::{EXSet, SetError, VertexSet};

#[derive(Debug, Error)]
pub enum RepError {
    #[error("the escape hypothesis fails at {item}: {witness}")]
    Hypothesis { item: String, witness: String },
    #[error("the backward orbit of {target} is empty at depth {depth}")]
    EmptyOrbit { target: String, depth: u32 },
    #[error("an edge range meets Y infinitely: {0}")]
    InfiniteMeet(String),
    #[error("no escape gap opens after interval {0}")]
    NoGap(u64),
    #[error("malformed branching system: {0}")]
    BadSystem(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sets(#[from] SetError),
}

/// One labelled point of a branching system: its exact coordinate, the
/// orbit depth it was found at, and the vertex owning it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemPoint<S> {
    pub point: S,
    pub depth: u32,
    pub owner: u64,
}

/// Finite point model of a branching system over an ultragraph. Points
/// are kept sorted by depth and then by coordinate; `D_v` collects the
/// points owned by `v`, and the pairing for an edge `e` sends points of
/// `D_{r(e)}` injectively into `D_{s(e)}`, its image standing for
/// `R_e`.
#[derive(Debug, Clone)]
pub struct BranchingSystem<S> {
    graph: Ultragraph,
    points: Vec<SystemPoint<S>>,
    index: BTreeMap<S, usize>,
    pairings: BTreeMap<EdgeKey, BTreeMap<usize, usize>>,
    depth_bound: u32,
}

impl<S: Scalar> BranchingSystem<S> {
    /// Assemble a system from raw parts. Points may arrive in any
    /// order; pairings are given by point values. Rejects owners
    /// outside the vertex set, duplicate points, pairings on unknown
    /// edges or unknown points, and non-injective pairings.
    pub fn new(
        graph: Ultragraph,
        mut points: Vec<SystemPoint<S>>,
        pairs: BTreeMap<EdgeKey, Vec<(S, S)>>,
    ) -> Result<Self, RepError> {
        points.sort_by(|a, b| (a.depth, &a.point).cmp(&(b.depth, &b.point)));
        let mut index = BTreeMap::new();
        for (i, sp) in points.iter().enumerate() {
            if !graph.vertices.member(sp.owner) {
                return Err(RepError::BadSystem(format!(
                    "owner v{} of point {} is not a vertex",
                    sp.owner,
                    sp.point.ratio_string()
                )));
            }
            if index.insert(sp.point.clone(), i).is_some() {
                return Err(RepError::BadSystem(format!(
                    "duplicate point {}",
                    sp.point.ratio_string()
                )));
            }
        }
        let mut pairings = BTreeMap::new();
        for (key, list) in pairs {
            graph.edge_source(&key)?;
            let mut map = BTreeMap::new();
            let mut hit = BTreeSet::new();
            for (a, b) in list {
                let ai = *index.get(&a).ok_or_else(|| {
                    RepError::BadSystem(format!(
                        "pairing for {key} uses unknown point {}",
                        a.ratio_string()
                    ))
                })?;
                let bi = *index.get(&b).ok_or_else(|| {
                    RepError::BadSystem(format!(
                        "pairing for {key} uses unknown point {}",
                        b.ratio_string()
                    ))
                })?;
                if map.insert(ai, bi).is_some() {
                    return Err(RepError::BadSystem(format!(
                        "point {} is paired twice under {key}",
                        a.ratio_string()
                    )));
                }
                if !hit.insert(bi) {
                    return Err(RepError::BadSystem(format!(
                        "point {} is hit twice under {key}",
                        b.ratio_string()
                    )));
                }
            }
            pairings.insert(key, map);
        }
        let depth_bound = points.iter().map(|sp| sp.depth).max().unwrap_or(0);
        Ok(BranchingSystem {
            graph,
            points,
            index,
            pairings,
            depth_bound,
        })
    }

    pub fn graph(&self) -> &Ultragraph {
        &self.graph
    }

    pub fn points(&self) -> &[SystemPoint<S>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest depth the enumeration explored; guard bands measure
    /// from here.
    pub fn depth_bound(&self) -> u32 {
        self.depth_bound
    }

    pub fn index_of(&self, point: &S) -> Option<usize> {
        self.index.get(point).copied()
    }

    pub fn point_label(&self, i: usize) -> String {
        self.points[i].point.ratio_string()
    }

    pub fn edge_keys(&self) -> Vec<EdgeKey> {
        self.pairings.keys().cloned().collect()
    }

    pub fn pairing(&self, key: &EdgeKey) -> Option<&BTreeMap<usize, usize>> {
        self.pairings.get(key)
    }

    /// Indices of the points in `D_v`.
    pub fn d_vertex(&self, v: u64) -> BTreeSet<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, sp)| sp.owner == v)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of the points in `D_A`; membership tests keep this
    /// finite even for infinite `A`.
    pub fn d_of(&self, set: &VertexSet) -> BTreeSet<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, sp)| set.member(sp.owner))
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of the points in `R_e`: the image of the pairing.
    pub fn r_of(&self, key: &EdgeKey) -> BTreeSet<usize> {
        self.pairings
            .get(key)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default()
    }

    /// The pairing for `key` as a partial injection on the point basis.
    pub fn injection(&self, key: &EdgeKey) -> PartialInjection {
        let mut image = vec![None; self.points.len()];
        if let Some(pairs) = self.pairings.get(key) {
            for (&a, &b) in pairs {
                image[a] = Some(b);
            }
        }
        PartialInjection::new(image).expect("pairings are injective")
    }

    /// Pairing images grouped by edge source: `v` maps to the union of
    /// `R_e` over edges `e` with `s(e) = v`.
    fn source_images(&self) -> Result<BTreeMap<u64, BTreeSet<usize>>, RepError> {
        let mut out: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
        for (key, pairs) in &self.pairings {
            let src = self.graph.edge_source(key)?;
            out.entry(src).or_default().extend(pairs.values().copied());
        }
        Ok(out)
    }

    fn defect_vertex(
        &self,
        v: u64,
        src_images: &BTreeMap<u64, BTreeSet<usize>>,
    ) -> BTreeSet<usize> {
        let empty = BTreeSet::new();
        let covered = src_images.get(&v).unwrap_or(&empty);
        self.d_vertex(v)
            .into_iter()
            .filter(|i| !covered.contains(i))
            .collect()
    }

    /// `D_A \ D_{A n Y}`: points owned inside `A` but outside `Y`.
    fn term_plain(&self, a: &VertexSet, y: &VertexSet) -> BTreeSet<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, sp)| a.member(sp.owner) && !y.member(sp.owner))
            .map(|(i, _)| i)
            .collect()
    }

    /// Union of `R_g` over edges `g` with `s(g) in A n Y`.
    fn term_ranges(&self, a: &VertexSet, y: &VertexSet) -> Result<BTreeSet<usize>, RepError> {
        let mut out = BTreeSet::new();
        for (key, pairs) in &self.pairings {
            let src = self.graph.edge_source(key)?;
            if a.member(src) && y.member(src) {
                out.extend(pairs.values().copied());
            }
        }
        Ok(out)
    }

    /// Union of `D_v \ U R_g` over `v in B n Y`, the union running
    /// over edges `g` with `s(g) = v`.
    fn term_defect(&self, b: &VertexSet, y: &VertexSet) -> Result<BTreeSet<usize>, RepError> {
        let src_images = self.source_images()?;
        Ok(self
            .points
            .iter()
            .enumerate()
            .filter(|(i, sp)| {
                b.member(sp.owner)
                    && y.member(sp.owner)
                    && !src_images.get(&sp.owner).is_some_and(|s| s.contains(i))
            })
            .map(|(i, _)| i)
            .collect())
    }
}

fn b_terms<S: Scalar>(
    bs: &BranchingSystem<S>,
    z: &EXSet,
    y: &VertexSet,
) -> Result<BTreeSet<usize>, RepError> {
    let a = z.unprimed_part();
    let b = z.primed_part().clone().unprimed();
    let mut out = bs.term_plain(a, y);
    out.extend(bs.term_ranges(a, y)?);
    out.extend(bs.term_defect(&b, y)?);
    Ok(out)
}

fn check_same_graph<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
) -> Result<(), RepError> {
    if bs.graph != rel.graph {
        return Err(RepError::BadSystem(
            "the relative structure describes a different graph".into(),
        ));
    }
    Ok(())
}

/// Check the branching-system axioms on the truncated point space:
/// ranges of distinct edges are disjoint, each pairing lands in its
/// source and departs from its range, covers the range wherever the
/// next level survives the depth cut, composes with its inverse to
/// the identity, `A -> D_A` respects Boolean operations on the scope
/// sets, and `D_v` is exhausted by the `R_e` at every `v in X` (again
/// up to the one-level guard band).
pub fn validate_branching<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
    max_index: u64,
) -> Result<Report, RepError> {
    check_same_graph(bs, rel)?;
    let mut report = Report::new();
    let keys: Vec<EdgeKey> = bs.pairings.keys().cloned().collect();

    for (ai, a) in keys.iter().enumerate() {
        for b in keys.iter().skip(ai + 1) {
            let item = format!("{a} vs {b}");
            let ra = bs.r_of(a);
            let rb = bs.r_of(b);
            report.push(match ra.intersection(&rb).next() {
                None => CheckRecord::pass("range-disjoint", item),
                Some(&i) => CheckRecord::fail("range-disjoint", item, bs.point_label(i)),
            });
        }
    }

    for key in &keys {
        let src = rel.graph.edge_source(key)?;
        let range = rel.graph.edge_range(key)?;
        let pairs = &bs.pairings[key];
        let item = key.to_string();

        report.push(
            match pairs.values().find(|&&b| bs.points[b].owner != src) {
                None => CheckRecord::pass("range-in-source", item.clone()),
                Some(&b) => CheckRecord::fail(
                    "range-in-source",
                    item.clone(),
                    format!("{} sits in I{}", bs.point_label(b), bs.points[b].owner),
                ),
            },
        );

        report.push(
            match pairs.keys().find(|&&a| !range.member(bs.points[a].owner)) {
                None => CheckRecord::pass("pairing-domain", item.clone()),
                Some(&a) => CheckRecord::fail(
                    "pairing-domain",
                    item.clone(),
                    format!("{} sits in I{}", bs.point_label(a), bs.points[a].owner),
                ),
            },
        );

        let unpaired = bs
            .d_of(&range)
            .into_iter()
            .find(|i| bs.points[*i].depth < bs.depth_bound && !pairs.contains_key(i));
        report.push(match unpaired {
            None => CheckRecord::pass("pairing-total", item.clone()),
            Some(i) => CheckRecord::fail("pairing-total", item.clone(), bs.point_label(i)),
        });

        let inj = bs.injection(key);
        let round = inj.inverse().compose(&inj);
        report.push(match pairs.keys().find(|&&a| round.apply(a) != Some(a)) {
            None => CheckRecord::pass("pairing-inverse", item.clone()),
            Some(&a) => CheckRecord::fail("pairing-inverse", item, bs.point_label(a)),
        });
    }

    report.push(match bs.d_of(&VertexSet::empty()).into_iter().next() {
        None => CheckRecord::pass("d-empty", "empty set"),
        Some(i) => CheckRecord::fail("d-empty", "empty set", bs.point_label(i)),
    });
    let scope = RelationScope::default_scope(rel, max_index);
    for (ai, s) in scope.sets.iter().enumerate() {
        for t in scope.sets.iter().skip(ai) {
            let item = format!("{s} vs {t}");
            let ds = bs.d_of(s);
            let dt = bs.d_of(t);
            let meet_direct: BTreeSet<usize> = ds.intersection(&dt).copied().collect();
            let meet_set = bs.d_of(&s.intersect(t)?);
            report.push(set_equality(
                "d-boolean-meet",
                item.clone(),
                &meet_set,
                &meet_direct,
                bs,
            ));
            let join_direct: BTreeSet<usize> = ds.union(&dt).copied().collect();
            let join_set = bs.d_of(&s.union(t)?);
            report.push(set_equality(
                "d-boolean-join",
                item,
                &join_set,
                &join_direct,
                bs,
            ));
        }
    }

    let src_images = bs.source_images()?;
    for v in rel.x.enumerate_up_to(max_index) {
        let item = format!("v{v}");
        let empty = BTreeSet::new();
        let covered = src_images.get(&v).unwrap_or(&empty);
        let stray = bs
            .d_vertex(v)
            .into_iter()
            .find(|i| bs.points[*i].depth < bs.depth_bound && !covered.contains(i));
        report.push(match stray {
            None => CheckRecord::pass("x-complete", item),
            Some(i) => CheckRecord::fail("x-complete", item, bs.point_label(i)),
        });
    }
    Ok(report.sorted())
}

fn set_equality<S: Scalar>(
    check: &str,
    item: String,
    lhs: &BTreeSet<usize>,
    rhs: &BTreeSet<usize>,
    bs: &BranchingSystem<S>,
) -> CheckRecord {
    match lhs.symmetric_difference(rhs).next() {
        None => CheckRecord::pass(check, item),
        Some(&i) => CheckRecord::fail(check, item, bs.point_label(i)),
    }
}

/// Lift of a branching system along a relative structure: the points
/// are unchanged, but ownership splits along `Y`, and every pairing
/// whose edge range meets `Y` splits into a plain and a primed
/// restriction.
#[derive(Debug, Clone)]
pub struct LiftedBranchingSystem<S> {
    base: BranchingSystem<S>,
    y: VertexSet,
    lifted_owners: Vec<Owner>,
    q_sets: BTreeMap<EdgeRef, BTreeSet<usize>>,
    g_maps: BTreeMap<EdgeRef, BTreeMap<usize, usize>>,
    lemma: Report,
}

impl<S: Scalar> LiftedBranchingSystem<S> {
    pub fn base(&self) -> &BranchingSystem<S> {
        &self.base
    }

    pub fn y(&self) -> &VertexSet {
        &self.y
    }

    pub fn lifted_owners(&self) -> &[Owner] {
        &self.lifted_owners
    }

    pub fn edge_refs(&self) -> Vec<EdgeRef> {
        self.g_maps.keys().cloned().collect()
    }

    /// Indices of the points in `B_Z`, computed from the defining
    /// three-term union rather than from the owner relabelling.
    pub fn b_of(&self, z: &EXSet) -> Result<BTreeSet<usize>, RepError> {
        b_terms(&self.base, z, &self.y)
    }

    /// Indices of the points in `Q_f`.
    pub fn q_set(&self, er: &EdgeRef) -> Option<&BTreeSet<usize>> {
        self.q_sets.get(er)
    }

    /// The restricted pairing `g_f`.
    pub fn g_map(&self, er: &EdgeRef) -> Option<&BTreeMap<usize, usize>> {
        self.g_maps.get(er)
    }

    /// Disjointness and splitting facts checked at construction.
    pub fn lemma_report(&self) -> &Report {
        &self.lemma
    }
}

/// Lift a branching system along `rel`. Ownership moves to the primed
/// copy `v'` exactly on the defect `D_v \ U R_g` for `v in Y`; each
/// pairing restricts to the plain domain `B_{r(e)}` and, where the
/// range meets `Y`, to the primed domain `B_{(r(e) n Y)'}`. The
/// returned lemma report certifies on the point space that the three
/// constituent term families of `B_Z` are pairwise disjoint, that the
/// two restrictions split each pairing image, and that `B_Z` agrees
/// with the owner relabelling on every scope set.
pub fn lift_branching<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
    max_index: u64,
) -> Result<LiftedBranchingSystem<S>, RepError> {
    check_same_graph(bs, rel)?;
    rel.graph
        .ranges_meet_finitely(&rel.y)
        .map_err(RepError::InfiniteMeet)?;
    let y = rel.y.clone();
    let src_images = bs.source_images()?;
    let lifted_owners: Vec<Owner> = bs
        .points
        .iter()
        .enumerate()
        .map(|(i, sp)| {
            let covered = src_images.get(&sp.owner).is_some_and(|s| s.contains(&i));
            if y.member(sp.owner) && !covered {
                Owner::Primed(sp.owner)
            } else {
                Owner::Plain(sp.owner)
            }
        })
        .collect();

    let mut q_sets = BTreeMap::new();
    let mut g_maps = BTreeMap::new();
    for (key, pairs) in &bs.pairings {
        let range = rel.graph.edge_range(key)?;
        let mut plain_dom = bs.term_plain(&range, &y);
        plain_dom.extend(bs.term_ranges(&range, &y)?);
        let g_plain: BTreeMap<usize, usize> = pairs
            .iter()
            .filter(|(a, _)| plain_dom.contains(a))
            .map(|(&a, &b)| (a, b))
            .collect();
        q_sets.insert(
            EdgeRef::plain(key.clone()),
            g_plain.values().copied().collect(),
        );
        g_maps.insert(EdgeRef::plain(key.clone()), g_plain);
        if !range.intersect(&y)?.is_empty() {
            let primed_dom = bs.term_defect(&range, &y)?;
            let g_primed: BTreeMap<usize, usize> = pairs
                .iter()
                .filter(|(a, _)| primed_dom.contains(a))
                .map(|(&a, &b)| (a, b))
                .collect();
            q_sets.insert(
                EdgeRef::primed(key.clone()),
                g_primed.values().copied().collect(),
            );
            g_maps.insert(EdgeRef::primed(key.clone()), g_primed);
        }
    }

    let lemma = lift_lemma(bs, rel, &lifted_owners, &g_maps, max_index)?;
    Ok(LiftedBranchingSystem {
        base: bs.clone(),
        y,
        lifted_owners,
        q_sets,
        g_maps,
        lemma,
    })
}

fn lift_lemma<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
    lifted_owners: &[Owner],
    g_maps: &BTreeMap<EdgeRef, BTreeMap<usize, usize>>,
    max_index: u64,
) -> Result<Report, RepError> {
    let mut report = Report::new();
    let y = &rel.y;
    let scope = RelationScope::default_scope(rel, max_index);

    fn meet_witness(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Option<usize> {
        a.intersection(b).next().copied()
    }
    fn disjointness<S: Scalar>(
        check: &str,
        item: String,
        a: &BTreeSet<usize>,
        b: &BTreeSet<usize>,
        bs: &BranchingSystem<S>,
    ) -> CheckRecord {
        match meet_witness(a, b) {
            None => CheckRecord::pass(check, item),
            Some(i) => CheckRecord::fail(check, item, bs.point_label(i)),
        }
    }

    for s in &scope.sets {
        let sp = bs.term_plain(s, y);
        let sr = bs.term_ranges(s, y)?;
        for t in &scope.sets {
            let item = format!("{s} vs {t}");
            let tr = bs.term_ranges(t, y)?;
            let td = bs.term_defect(t, y)?;
            report.push(disjointness(
                "lift-disjoint-plain-ranges",
                item.clone(),
                &sp,
                &tr,
                bs,
            ));
            report.push(disjointness(
                "lift-disjoint-plain-defect",
                item.clone(),
                &sp,
                &td,
                bs,
            ));
            report.push(disjointness(
                "lift-disjoint-ranges-defect",
                item,
                &sr,
                &td,
                bs,
            ));
        }
    }

    let keys: Vec<EdgeKey> = bs.pairings.keys().cloned().collect();
    for (ai, a) in keys.iter().enumerate() {
        for b in keys.iter().skip(ai + 1) {
            report.push(disjointness(
                "lift-disjoint-range-pair",
                format!("{a} vs {b}"),
                &bs.r_of(a),
                &bs.r_of(b),
                bs,
            ));
        }
    }

    let src_images = bs.source_images()?;
    let yy = y.enumerate_up_to(max_index);
    for (ai, &v) in yy.iter().enumerate() {
        for &w in yy.iter().skip(ai + 1) {
            report.push(disjointness(
                "lift-disjoint-defect-pair",
                format!("v{v} vs v{w}"),
                &bs.defect_vertex(v, &src_images),
                &bs.defect_vertex(w, &src_images),
                bs,
            ));
        }
    }

    for (key, pairs) in &bs.pairings {
        let item = key.to_string();
        let mut joined: BTreeSet<usize> = g_maps
            .get(&EdgeRef::plain(key.clone()))
            .map(|m| m.values().copied().collect())
            .unwrap_or_default();
        if let Some(mp) = g_maps.get(&EdgeRef::primed(key.clone())) {
            joined.extend(mp.values().copied());
        }
        let full: BTreeSet<usize> = pairs.values().copied().collect();
        report.push(set_equality("lift-image-split", item, &joined, &full, bs));
    }

    for z in &lift_scope_sets(&scope, y)? {
        let lhs = b_terms(bs, z, y)?;
        let rhs: BTreeSet<usize> = lifted_owners
            .iter()
            .enumerate()
            .filter(|(_, o)| o.in_set(z))
            .map(|(i, _)| i)
            .collect();
        report.push(set_equality(
            "lift-owner-encodes",
            format!("{z}"),
            &lhs,
            &rhs,
            bs,
        ));
    }

    Ok(report.sorted())
}

/// Lifted scope sets assembled from the base scope: each set unprimed,
/// each nonempty meet with `Y` primed, and one mixed pair.
fn lift_scope_sets(scope: &RelationScope, y: &VertexSet) -> Result<Vec<EXSet>, RepError> {
    let mut zs: Vec<EXSet> = Vec::new();
    let push = |z: EXSet, zs: &mut Vec<EXSet>| {
        if !zs.contains(&z) {
            zs.push(z);
        }
    };
    for s in &scope.sets {
        push(EXSet::from_unprimed(s.clone())?, &mut zs);
        let meet = s.intersect(y)?;
        if !meet.is_empty() {
            push(EXSet::from_primed(meet.primed())?, &mut zs);
        }
    }
    if let (Some(s1), Some(s2)) = (scope.sets.first(), scope.sets.get(1)) {
        let meet = s2.intersect(y)?;
        if !meet.is_empty() {
            push(EXSet::new(s1.clone(), meet.primed())?, &mut zs);
        }
    }
    Ok(zs)
}

/// Matrix model carried by a branching system: point masses form the
/// basis, each pairing acts as an isometry, and a vertex set projects
/// onto the points it owns.
pub fn rep_from_branching<S: Scalar>(bs: &BranchingSystem<S>) -> MatrixRep<S> {
    let labels = bs.points.iter().map(|sp| sp.point.ratio_string()).collect();
    let depths = bs.points.iter().map(|sp| sp.depth).collect();
    let owners = bs.points.iter().map(|sp| Owner::Plain(sp.owner)).collect();
    let mut rep = MatrixRep::new(labels, depths, owners, bs.depth_bound, Algebra::Rel);
    for key in bs.pairings.keys() {
        rep.assign_isometry(EdgeRef::plain(key.clone()), bs.injection(key));
    }
    rep
}

/// Matrix model carried by a lifted branching system, on the same
/// point basis but with split ownership and one isometry per lifted
/// edge.
pub fn rep_from_lifted<S: Scalar>(lifted: &LiftedBranchingSystem<S>) -> MatrixRep<S> {
    let bs = &lifted.base;
    let labels = bs.points.iter().map(|sp| sp.point.ratio_string()).collect();
    let depths = bs.points.iter().map(|sp| sp.depth).collect();
    let mut rep = MatrixRep::new(
        labels,
        depths,
        lifted.lifted_owners.clone(),
        bs.depth_bound,
        Algebra::Abs,
    );
    for (er, mp) in &lifted.g_maps {
        let mut image = vec![None; bs.points.len()];
        for (&a, &b) in mp {
            image[a] = Some(b);
        }
        rep.assign_isometry(
            er.clone(),
            PartialInjection::new(image).expect("pairings are injective"),
        );
    }
    rep
}

fn orbit_points<S: Scalar>(tree: &OrbitTree<S>) -> Vec<SystemPoint<S>> {
    tree.nodes
        .iter()
        .map(|nd| SystemPoint {
            point: nd.point.clone(),
            depth: nd.depth,
            owner: nd.interval,
        })
        .collect()
}

fn point_index<S: Scalar>(points: &[SystemPoint<S>]) -> BTreeMap<S, usize> {
    points
        .iter()
        .enumerate()
        .map(|(i, sp)| (sp.point.clone(), i))
        .collect()
}

/// All edges the truncation can see: everything sourced below the
/// horizon plus the out-edges of every interval the orbit touched.
fn edge_scope<S: Scalar>(
    graph: &Ultragraph,
    points: &[SystemPoint<S>],
    horizon: u64,
) -> BTreeSet<EdgeKey> {
    let mut keys: BTreeSet<EdgeKey> = graph.edges_up_to(horizon).into_iter().collect();
    for sp in points {
        keys.extend(graph.out_edges(sp.owner));
    }
    keys
}

fn hypothesis_gate<S: Scalar>(
    m: &MarkovMap<S>,
    escape: &EscapeData<S>,
    x_set: &VertexSet,
    horizon: u64,
) -> Result<(), RepError> {
    let hyp = m.x_hypothesis_check(escape, x_set, horizon)?;
    if let Some(bad) = hyp.failures().next() {
        return Err(RepError::Hypothesis {
            item: bad.item.clone(),
            witness: bad.witness.clone().unwrap_or_default(),
        });
    }
    Ok(())
}

/// Branching system read off a backward orbit: the orbit points are
/// the point space, owned by their intervals, and the pairing for
/// `e_i` links each point to its branch preimage one level deeper.
/// Recurrent orbits (possible when the target sits inside the domain)
/// contribute their revisit links as well, so the pairings are exact
/// on the recorded point space. No escape hypothesis is assumed here;
/// [`validate_branching`] reports how the result fares against a
/// chosen `X`.
pub fn branching_from_markov<S: Scalar>(
    m: &MarkovMap<S>,
    escape: &EscapeData<S>,
    depth: u32,
    horizon: u64,
) -> Result<BranchingSystem<S>, RepError> {
    let tree = m.backward_orbit(&escape.target, depth, horizon)?;
    if tree.nodes.is_empty() {
        return Err(RepError::EmptyOrbit {
            target: escape.target.ratio_string(),
            depth,
        });
    }
    let graph = m.induced_ultragraph()?;
    let points = orbit_points(&tree);
    let index = point_index(&points);
    let mut pairings: BTreeMap<EdgeKey, BTreeMap<usize, usize>> =
        edge_scope(&graph, &points, horizon)
            .into_iter()
            .map(|k| (k, BTreeMap::new()))
            .collect();
    {
        let link = |pairings: &mut BTreeMap<EdgeKey, BTreeMap<usize, usize>>, child: usize| {
            let sp = &points[child];
            let parent = m.eval(&sp.point).expect("orbit points stay in the domain");
            let Some(&pi) = index.get(&parent) else {
                return;
            };
            let key = graph
                .out_edges(sp.owner)
                .into_iter()
                .next()
                .expect("orbit intervals emit an edge");
            pairings.entry(key).or_default().insert(pi, child);
        };
        for (child, sp) in points.iter().enumerate() {
            if sp.depth >= 2 {
                link(&mut pairings, child);
            }
        }
        for rec in &tree.recurrences {
            if let Some(&child) = index.get(&rec.point) {
                link(&mut pairings, child);
            }
        }
    }
    Ok(BranchingSystem {
        graph,
        points,
        index,
        pairings,
        depth_bound: tree.depth,
    })
}

/// Matrix model built directly from the displayed operator actions:
/// the basis is the backward orbit of the escape target, a vertex set
/// acts as the indicator of the intervals it names, and the isometry
/// for `e_i` moves a point mass to the interior branch preimage at
/// interval `i`, solved afresh per point rather than read off the
/// orbit tree. The escape hypothesis for `x_set` is enforced first.
pub fn build_markov_rep<S: Scalar>(
    m: &MarkovMap<S>,
    escape: &EscapeData<S>,
    x_set: &VertexSet,
    depth: u32,
    horizon: u64,
) -> Result<MatrixRep<S>, RepError> {
    hypothesis_gate(m, escape, x_set, horizon)?;
    let tree = m.backward_orbit(&escape.target, depth, horizon)?;
    if tree.nodes.is_empty() {
        return Err(RepError::EmptyOrbit {
            target: escape.target.ratio_string(),
            depth,
        });
    }
    let graph = m.induced_ultragraph()?;
    let points = orbit_points(&tree);
    let index = point_index(&points);
    let labels = points.iter().map(|sp| sp.point.ratio_string()).collect();
    let depths = points.iter().map(|sp| sp.depth).collect();
    let owners = points.iter().map(|sp| Owner::Plain(sp.owner)).collect();
    let mut rep = MatrixRep::new(labels, depths, owners, tree.depth, Algebra::Rel);
    for key in edge_scope(&graph, &points, horizon) {
        let branch = graph.edge_source(&key)?;
        let row = graph.edge_range(&key)?;
        let mut image = vec![None; points.len()];
        for (col, sp) in points.iter().enumerate() {
            if !row.member(sp.owner) {
                continue;
            }
            image[col] = m
                .branch_preimages(branch, &sp.point)
                .into_iter()
                .find(|p| m.partition().interior_index_of(p) == Some(branch))
                .and_then(|p| index.get(&p).copied());
        }
        rep.assign_isometry(
            EdgeRef::plain(key),
            PartialInjection::new(image).expect("inverse branches are injective"),
        );
    }
    Ok(rep)
}

/// Pull the escape gap opening after interval `j` back through every
/// branch below the horizon: the pairs `(i, J)` with `J` a nonempty
/// part of `I_i n g^{-1}(E_j)`. Override points mapping into the gap
/// contribute degenerate intervals; override points sitting inside an
/// affine pullback are not excised from it.
pub fn escape_gap_preimage<S: Scalar>(
    m: &MarkovMap<S>,
    j: u64,
    horizon: u64,
) -> Result<Vec<(u64, Interval<S>)>, RepError> {
    let gap = m.partition().escape_gap(j).ok_or(RepError::NoGap(j))?;
    let mut out = Vec::new();
    for i in m.partition().index_set().enumerate_up_to(horizon) {
        if let Some(pieces) = m.map().pieces_at(i) {
            for pc in &pieces {
                let inv = pc.map.inverse().expect("branch slopes are nonzero");
                if let Some(hit) = gap.affine_image(&inv).intersect(&pc.domain) {
                    out.push((i, hit));
                }
            }
        }
        if let Some(interval) = m.partition().interval_at(i) {
            for (p, v) in m.map().overrides() {
                if gap.contains(v) && interval.contains(p) {
                    out.push((i, Interval::point(p.clone())));
                }
            }
        }
    }
    Ok(out)
}

fn record_full_equality<S: Scalar>(
    check: &str,
    item: String,
    lhs: Result<Evaluation<S>, RelError>,
    rhs: Result<Evaluation<S>, RelError>,
    rep: &MatrixRep<S>,
) -> CheckRecord {
    let (l, r) = match (lhs, rhs) {
        (Ok(l), Ok(r)) => (l, r),
        (Err(e), _) | (_, Err(e)) => return CheckRecord::error(check, item, e.to_string()),
    };
    let diff = l
        .matrix
        .sub(&r.matrix)
        .expect("both sides act on the same basis");
    let hit = diff.triples().next().map(|(i, j, _)| (i, j));
    match hit {
        None => CheckRecord::pass(check, item),
        Some((i, j)) => CheckRecord::fail(
            check,
            item,
            format!(
                "column {} (depth {}) row {}",
                rep.labels[j], rep.depths[j], rep.labels[i]
            ),
        ),
    }
}

fn record_guarded_equality<S: Scalar>(
    check: &str,
    item: String,
    lhs: Result<Evaluation<S>, RelError>,
    rhs: Result<Evaluation<S>, RelError>,
    rep: &MatrixRep<S>,
) -> CheckRecord {
    let (l, r) = match (lhs, rhs) {
        (Ok(l), Ok(r)) => (l, r),
        (Err(e), _) | (_, Err(e)) => return CheckRecord::error(check, item, e.to_string()),
    };
    let diff = l
        .matrix
        .sub(&r.matrix)
        .expect("both sides act on the same basis");
    let safe: Vec<bool> = l
        .safe_cols
        .iter()
        .zip(&r.safe_cols)
        .map(|(a, b)| *a && *b)
        .collect();
    let hit = diff
        .triples()
        .find(|&(_, j, _)| safe[j])
        .map(|(i, j, _)| (i, j));
    match hit {
        None => CheckRecord::pass(check, item),
        Some((i, j)) => CheckRecord::fail(
            check,
            item,
            format!(
                "column {} (depth {}) row {}",
                rep.labels[j], rep.depths[j], rep.labels[i]
            ),
        ),
    }
}

/// Compare the display-built model against the orbit-built one on
/// every scoped generator by full exact matrix equality: the two
/// constructions solve for preimages independently, but on a shared
/// truncation they must agree entry for entry, unsafe columns
/// included.
pub fn check_nu_equals_pi<S: Scalar>(
    m: &MarkovMap<S>,
    escape: &EscapeData<S>,
    x_set: &VertexSet,
    depth: u32,
    horizon: u64,
) -> Result<Report, RepError> {
    let nu = build_markov_rep(m, escape, x_set, depth, horizon)?;
    let bs = branching_from_markov(m, escape, depth, horizon)?;
    let pi = rep_from_branching(&bs);
    let rel = RelativeUltragraph::new(bs.graph.clone(), x_set.clone())?;
    let scope = RelationScope::default_scope(&rel, horizon.min(u64::from(depth)));
    let mut report = Report::new();
    for a in &scope.sets {
        let poly = StarPolynomial::symbol(Algebra::Rel, GenSym::proj(a.clone()));
        report.push(record_full_equality(
            "nu-equals-pi",
            format!("p({a})"),
            evaluate(&poly, &nu),
            evaluate(&poly, &pi),
            &nu,
        ));
    }
    for key in &scope.edges {
        for (item, sym) in [
            (format!("s({key})"), GenSym::iso(key.clone())),
            (format!("s*({key})"), GenSym::iso_star(key.clone())),
        ] {
            let poly = StarPolynomial::symbol(Algebra::Rel, sym);
            report.push(record_full_equality(
                "nu-equals-pi",
                item,
                evaluate(&poly, &nu),
                evaluate(&poly, &pi),
                &nu,
            ));
        }
    }
    Ok(report.sorted())
}

/// Certify that the generator translation closes the triangle between
/// the two models of a branching system: for every scoped generator of
/// the lifted graph, evaluating its translate on the base model equals
/// evaluating it directly on the lifted model, exactly, on all columns
/// safe for both sides.
pub fn check_diagram<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
    max_index: u64,
) -> Result<Report, RepError> {
    check_same_graph(bs, rel)?;
    let lift = rel.lift();
    let lifted = lift_branching(bs, rel, max_index)?;
    let eta = rep_from_branching(bs);
    let pi = rep_from_lifted(&lifted);
    let scope = RelationScope::default_scope(rel, max_index);

    let mut syms: Vec<(String, GenSym)> = vec![{
        let z = lift.vertices();
        (format!("P({z})"), GenSym::proj_lifted(z))
    }];
    for z in lift_scope_sets(&scope, &rel.y)? {
        let item = format!("P({z})");
        if syms.iter().all(|(existing, _)| existing != &item) {
            syms.push((item, GenSym::proj_lifted(z)));
        }
    }
    for key in rel.graph.edges_up_to(max_index) {
        let mut refs = vec![EdgeRef::plain(key.clone())];
        if lift.has_primed(&key) {
            refs.push(EdgeRef::primed(key));
        }
        for er in refs {
            syms.push((format!("S({er})"), GenSym::Iso(er.clone())));
            syms.push((format!("S*({er})"), GenSym::Star(er)));
        }
    }

    let mut report = Report::new();
    for (item, sym) in syms {
        let rec = match psi_image(&sym, &lift) {
            Err(e) => CheckRecord::error("diagram-commutes", item, e.to_string()),
            Ok(poly) => record_guarded_equality(
                "diagram-commutes",
                item,
                evaluate(&poly, &eta),
                evaluate(&StarPolynomial::symbol(Algebra::Abs, sym), &pi),
                &eta,
            ),
        };
        report.push(rec);
    }
    Ok(report.sorted())
}

/// Three-way outcome of one checked item. Certifying either way takes
/// a witness; what the truncation cannot decide stays undetermined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Holds,
    Undetermined,
    Fails,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Holds => "holds",
            Status::Undetermined => "undetermined",
            Status::Fails => "fails",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemVerdict {
    pub item: String,
    pub status: Status,
    pub witness: Option<String>,
}

impl ItemVerdict {
    pub fn holds(item: impl Into<String>, witness: impl Into<String>) -> Self {
        ItemVerdict {
            item: item.into(),
            status: Status::Holds,
            witness: Some(witness.into()),
        }
    }

    pub fn fails(item: impl Into<String>, witness: impl Into<String>) -> Self {
        ItemVerdict {
            item: item.into(),
            status: Status::Fails,
            witness: Some(witness.into()),
        }
    }

    pub fn undetermined(item: impl Into<String>) -> Self {
        ItemVerdict {
            item: item.into(),
            status: Status::Undetermined,
            witness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionVerdict {
    pub name: &'static str,
    pub items: Vec<ItemVerdict>,
}

impl ConditionVerdict {
    /// Worst item status: any failure wins, then any undetermined.
    pub fn status(&self) -> Status {
        self.items
            .iter()
            .map(|it| it.status)
            .max()
            .unwrap_or(Status::Holds)
    }

    pub fn item(&self, item: &str) -> Option<&ItemVerdict> {
        self.items.iter().find(|it| it.item == item)
    }
}

/// Enumeration bounds a verdict was computed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerdictScope {
    pub depth: u32,
    pub horizon: u64,
    pub cycle_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectivityVerdict {
    pub scope: VerdictScope,
    pub conditions: Vec<ConditionVerdict>,
}

impl InjectivityVerdict {
    pub fn overall(&self) -> Status {
        self.conditions
            .iter()
            .map(|c| c.status())
            .max()
            .unwrap_or(Status::Holds)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionVerdict> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn text(&self) -> String {
        let mut out = format!(
            "scope: depth={} horizon={} cycles={}\n",
            self.scope.depth, self.scope.horizon, self.scope.cycle_bound
        );
        for cond in &self.conditions {
            for it in &cond.items {
                out.push_str(&format!(
                    "condition={} item=\"{}\" status={}",
                    cond.name, it.item, it.status
                ));
                if let Some(w) = &it.witness {
                    out.push_str(&format!(" witness=\"{w}\""));
                }
                out.push('\n');
            }
        }
        out.push_str(&format!("overall: {}", self.overall()));
        out
    }
}

pub const COND_MEETS_X: &str = "orbit-meets-x-interval";
pub const COND_REACHES: &str = "y-interval-reaches-orbit";
pub const COND_ESCAPES: &str = "y-interval-escapes";
pub const COND_CYCLES: &str = "exitless-cycle-aperiodic";
pub const COND_DOMAIN: &str = "domain-inhabited";
pub const COND_RANGE: &str = "edge-range-inhabited";
pub const COND_DEFECT: &str = "defect-inhabited";

fn or_vacuous(items: Vec<ItemVerdict>, note: &str) -> Vec<ItemVerdict> {
    if items.is_empty() {
        vec![ItemVerdict::holds("scope", note)]
    } else {
        items
    }
}

/// Injectivity certificate for an interval map against a relative
/// vertex set, checked on the backward orbit of the escape target.
///
/// Four conditions are examined below the horizon. Every interval
/// named by `X` must meet the orbit; every interval outside `X` must
/// carry a point that the map sends back into the orbit along its
/// transition row; every interval outside `X` must contain an interior
/// point mapping straight onto the escape target, a condition exact
/// interval arithmetic decides outright, so its failures are certified
/// rather than undetermined; and over every exitless cycle avoiding
/// `Y` the composed inverse branch must admit an aperiodic point, with
/// the affine classification deciding identity and involution cases
/// exactly.
pub fn injectivity_markov<S: Scalar>(
    m: &MarkovMap<S>,
    escape: &EscapeData<S>,
    x_set: &VertexSet,
    depth: u32,
    horizon: u64,
    cycle_bound: usize,
) -> Result<InjectivityVerdict, RepError> {
    let graph = m.induced_ultragraph()?;
    let rel = RelativeUltragraph::new(graph, x_set.clone())?;
    rel.graph
        .ranges_meet_finitely(&rel.y)
        .map_err(RepError::InfiniteMeet)?;
    hypothesis_gate(m, escape, x_set, horizon)?;
    let tree = m.backward_orbit(&escape.target, depth, horizon)?;

    let mut meets = Vec::new();
    for i in x_set.enumerate_up_to(horizon) {
        let item = format!("v{i}");
        match tree.nodes.iter().find(|nd| nd.interval == i) {
            Some(nd) => meets.push(ItemVerdict::holds(item, nd.point.ratio_string())),
            None => meets.push(ItemVerdict::undetermined(item)),
        }
    }

    let mut reaches = Vec::new();
    let mut escapes = Vec::new();
    for i in rel.y.enumerate_up_to(horizon) {
        let item = format!("v{i}");
        let key = rel
            .graph
            .out_edges(i)
            .into_iter()
            .next()
            .expect("vertices outside X are regular");
        let row = rel.graph.edge_range(&key)?;
        let reach = tree.nodes.iter().find_map(|nd| {
            if !row.member(nd.interval) {
                return None;
            }
            m.branch_preimages(i, &nd.point)
                .into_iter()
                .next()
                .map(|y| (y, nd))
        });
        match reach {
            Some((y, nd)) => reaches.push(ItemVerdict::holds(
                item.clone(),
                format!(
                    "y={} with g(y)={} in I{}",
                    y.ratio_string(),
                    nd.point.ratio_string(),
                    nd.interval
                ),
            )),
            None => reaches.push(ItemVerdict::undetermined(item.clone())),
        }

        let interior = m
            .branch_preimages(i, &escape.target)
            .into_iter()
            .find(|p| m.partition().interior_index_of(p) == Some(i));
        match interior {
            Some(p) => escapes.push(ItemVerdict::holds(item, p.ratio_string())),
            None => {
                let witness = if interior_gap_hits(m, escape.j, i) {
                    format!(
                        "no point of the interior of I{i} maps to {}",
                        escape.target.ratio_string()
                    )
                } else {
                    format!("the interior of I{i} misses the escape-gap preimage")
                };
                escapes.push(ItemVerdict::fails(item, witness));
            }
        }
    }

    let cycles = markov_cycle_items(m, &rel, &tree, horizon, cycle_bound)?;

    Ok(InjectivityVerdict {
        scope: VerdictScope {
            depth,
            horizon,
            cycle_bound,
        },
        conditions: vec![
            ConditionVerdict {
                name: COND_MEETS_X,
                items: or_vacuous(meets, "X has no vertices at this horizon"),
            },
            ConditionVerdict {
                name: COND_REACHES,
                items: or_vacuous(reaches, "Y has no vertices at this horizon"),
            },
            ConditionVerdict {
                name: COND_ESCAPES,
                items: or_vacuous(escapes, "Y has no vertices at this horizon"),
            },
            ConditionVerdict {
                name: COND_CYCLES,
                items: cycles,
            },
        ],
    })
}

/// Does `I_i` carry any interior piece of the pullback of the escape
/// gap after interval `j`?
fn interior_gap_hits<S: Scalar>(m: &MarkovMap<S>, j: u64, i: u64) -> bool {
    let Some(gap) = m.partition().escape_gap(j) else {
        return false;
    };
    let Some(interval) = m.partition().interval_at(i) else {
        return false;
    };
    let Some(interior) = interval.interior() else {
        return false;
    };
    if let Some(pieces) = m.map().pieces_at(i) {
        for pc in &pieces {
            let inv = pc.map.inverse().expect("branch slopes are nonzero");
            let pull = gap.affine_image(&inv);
            if pull
                .intersect(&pc.domain)
                .and_then(|h| h.intersect(&interior))
                .is_some()
            {
                return true;
            }
        }
    }
    for (p, v) in m.map().overrides() {
        if gap.contains(v) && interior.contains(p) {
            return true;
        }
    }
    false
}

fn qualifying_cycle(
    rel: &RelativeUltragraph,
    cy: &Cycle,
    horizon: u64,
) -> Result<bool, RepError> {
    if !cy.is_primitive() || rel.graph.cycle_exit(cy, horizon).is_some() {
        return Ok(false);
    }
    for key in &cy.edges {
        if !rel.graph.edge_range(key)?.intersect(&rel.y)?.is_empty() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn markov_cycle_items<S: Scalar>(
    m: &MarkovMap<S>,
    rel: &RelativeUltragraph,
    tree: &OrbitTree<S>,
    horizon: u64,
    cycle_bound: usize,
) -> Result<Vec<ItemVerdict>, RepError> {
    let mut items = Vec::new();
    for cy in rel.graph.cycles(horizon, cycle_bound) {
        if !qualifying_cycle(rel, &cy, horizon)? {
            continue;
        }
        items.push(markov_cycle_item(m, rel, tree, &cy)?);
    }
    Ok(or_vacuous(
        items,
        &format!("every cycle up to length {cycle_bound} has an exit or meets Y"),
    ))
}

/// Classify the composed inverse branch around one exitless cycle.
/// The composite is affine, so periodicity is decided exactly: the
/// identity fixes everything and an involution returns everything at
/// the second step, certified failures both; any other slope leaves at
/// most one fixed point, so any other orbit point witnesses
/// aperiodicity for every exponent at once.
fn markov_cycle_item<S: Scalar>(
    m: &MarkovMap<S>,
    rel: &RelativeUltragraph,
    tree: &OrbitTree<S>,
    cy: &Cycle,
) -> Result<ItemVerdict, RepError> {
    let item = cy.to_string();
    let n = cy.edges.len();
    let mut comp = Affine::identity();
    for k in 0..n {
        let branch = rel.graph.edge_source(&cy.edges[k])?;
        let incoming = rel.graph.edge_source(&cy.edges[(k + 1) % n])?;
        let Some(piece) = branch_piece_onto(m, branch, incoming) else {
            return Ok(ItemVerdict::undetermined(item));
        };
        let inv = piece.map.inverse().expect("branch slopes are nonzero");
        comp = comp.compose(&inv);
    }
    if comp.is_identity() {
        return Ok(ItemVerdict::fails(
            item,
            "the composed inverse branch is the identity",
        ));
    }
    if comp.slope == -S::one() {
        return Ok(ItemVerdict::fails(
            item,
            "the composed inverse branch is an involution",
        ));
    }
    let base = cy.base(&rel.graph);
    let fixed = comp.fixed_point();
    for nd in tree.nodes.iter().filter(|nd| nd.interval == base) {
        if fixed.as_ref() != Some(&nd.point) {
            return Ok(ItemVerdict::holds(
                item,
                format!("x={} is never periodic", nd.point.ratio_string()),
            ));
        }
    }
    Ok(ItemVerdict::undetermined(item))
}

/// The piece of the branch at `branch` whose image covers the interior
/// of `I_{incoming}`.
fn branch_piece_onto<S: Scalar>(
    m: &MarkovMap<S>,
    branch: u64,
    incoming: u64,
) -> Option<Piece<S>> {
    let interior = m.partition().interval_at(incoming)?.interior()?;
    m.map()
        .pieces_at(branch)?
        .into_iter()
        .find(|pc| pc.domain.affine_image(&pc.map).contains_interval(&interior))
}

/// Counting-measure certificate for a branching system: every `D_v`
/// off `Y` and every `R_e` sourced in `Y` must be inhabited, every
/// defect `D_v \ U R_e` over `Y` must be inhabited, and the composed
/// pairing around every exitless cycle avoiding `Y` must admit an
/// aperiodic point, chased through `witness_bound` steps. Emptiness of
/// a truncated set is never certified, so the first three conditions
/// fail only vacuously never explicitly; the cycle condition fails
/// outright when the composed pairing is the identity on its full
/// recorded domain.
pub fn injectivity_counting<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
    cycle_bound: usize,
    witness_bound: usize,
) -> Result<InjectivityVerdict, RepError> {
    check_same_graph(bs, rel)?;
    rel.graph
        .ranges_meet_finitely(&rel.y)
        .map_err(RepError::InfiniteMeet)?;
    let mut horizon = bs.points.iter().map(|sp| sp.owner).max().unwrap_or(0);
    for key in bs.pairings.keys() {
        horizon = horizon.max(rel.graph.edge_source(key)?);
    }

    let mut inhabited = Vec::new();
    for v in rel.graph.vertices.enumerate_up_to(horizon) {
        if rel.y.member(v) {
            continue;
        }
        let item = format!("v{v}");
        match bs.d_vertex(v).into_iter().next() {
            Some(i) => inhabited.push(ItemVerdict::holds(item, bs.point_label(i))),
            None => inhabited.push(ItemVerdict::undetermined(item)),
        }
    }

    let mut ranges = Vec::new();
    for key in bs.pairings.keys() {
        if !rel.y.member(rel.graph.edge_source(key)?) {
            continue;
        }
        let item = key.to_string();
        match bs.r_of(key).into_iter().next() {
            Some(i) => ranges.push(ItemVerdict::holds(item, bs.point_label(i))),
            None => ranges.push(ItemVerdict::undetermined(item)),
        }
    }

    let mut defects = Vec::new();
    let src_images = bs.source_images()?;
    for v in rel.y.enumerate_up_to(horizon) {
        let item = format!("v{v}");
        match bs.defect_vertex(v, &src_images).into_iter().next() {
            Some(i) => defects.push(ItemVerdict::holds(item, bs.point_label(i))),
            None => defects.push(ItemVerdict::undetermined(item)),
        }
    }

    let cycles = counting_cycle_items(bs, rel, horizon, cycle_bound, witness_bound)?;

    Ok(InjectivityVerdict {
        scope: VerdictScope {
            depth: bs.depth_bound,
            horizon,
            cycle_bound,
        },
        conditions: vec![
            ConditionVerdict {
                name: COND_DOMAIN,
                items: or_vacuous(inhabited, "every vertex at this horizon lies in Y"),
            },
            ConditionVerdict {
                name: COND_RANGE,
                items: or_vacuous(ranges, "no edges are sourced in Y"),
            },
            ConditionVerdict {
                name: COND_DEFECT,
                items: or_vacuous(defects, "Y has no vertices at this horizon"),
            },
            ConditionVerdict {
                name: COND_CYCLES,
                items: cycles,
            },
        ],
    })
}

fn counting_cycle_items<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
    horizon: u64,
    cycle_bound: usize,
    witness_bound: usize,
) -> Result<Vec<ItemVerdict>, RepError> {
    let mut items = Vec::new();
    for cy in rel.graph.cycles(horizon, cycle_bound) {
        if !qualifying_cycle(rel, &cy, horizon)? {
            continue;
        }
        items.push(counting_cycle_item(bs, rel, &cy, witness_bound));
    }
    Ok(or_vacuous(
        items,
        &format!("every cycle up to length {cycle_bound} has an exit or meets Y"),
    ))
}

fn counting_cycle_item<S: Scalar>(
    bs: &BranchingSystem<S>,
    rel: &RelativeUltragraph,
    cy: &Cycle,
    witness_bound: usize,
) -> ItemVerdict {
    let item = cy.to_string();
    let maps: Option<Vec<&BTreeMap<usize, usize>>> =
        cy.edges.iter().map(|k| bs.pairing(k)).collect();
    let Some(maps) = maps else {
        return ItemVerdict::undetermined(item);
    };
    let step = |i: usize| -> Option<usize> {
        let mut cur = i;
        for mp in maps.iter().rev() {
            cur = *mp.get(&cur)?;
        }
        Some(cur)
    };
    let domain = bs.d_vertex(cy.base(&rel.graph));
    if !domain.is_empty() && domain.iter().all(|&i| step(i) == Some(i)) {
        return ItemVerdict::fails(item, "the composed pairing fixes its whole domain");
    }
    for &start in &domain {
        let mut cur = start;
        let mut good = true;
        for _ in 0..witness_bound {
            match step(cur) {
                Some(next) if next != start => cur = next,
                _ => {
                    good = false;
                    break;
                }
            }
        }
        if good {
            return ItemVerdict::holds(
                item,
                format!(
                    "x={} stays off itself through n={witness_bound}",
                    bs.point_label(start)
                ),
            );
        }
    }
    ItemVerdict::undetermined(item)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{accumulation_map, alternating_map, swap_map, tripling_map};
    use crate::num::{int, ratio};
    use crate::report::Verdict;
    use crate::ultragraph::Edge;
    use crate::Q;

    fn tail(n: u64) -> VertexSet {
        VertexSet::tail(n).unwrap()
    }

    fn singleton(v: u64) -> VertexSet {
        VertexSet::singleton(v).unwrap()
    }

    fn e(n: u64) -> EdgeKey {
        EdgeKey::Named(format!("e{n}"))
    }

    fn fe(n: u64) -> EdgeKey {
        EdgeKey::Indexed("e".into(), n)
    }

    fn tripling_escape() -> (MarkovMap<Q>, EscapeData<Q>) {
        let m = tripling_map();
        let escape = match m.escape_data(&ratio::<Q>(1, 2), 32).unwrap() {
            crate::markov::EscapeOutcome::Escaped(data) => data,
            other => panic!("expected escape, got {other:?}"),
        };
        (m, escape)
    }

    fn accumulation_escape() -> (MarkovMap<Q>, EscapeData<Q>) {
        let m = accumulation_map();
        let escape = match m.escape_data(&ratio::<Q>(17, 8), 32).unwrap() {
            crate::markov::EscapeOutcome::Escaped(data) => data,
            other => panic!("expected escape, got {other:?}"),
        };
        (m, escape)
    }

    fn alternating_escape() -> (MarkovMap<Q>, EscapeData<Q>) {
        let m = alternating_map();
        let escape = match m.escape_data(&ratio::<Q>(5, 2), 32).unwrap() {
            crate::markov::EscapeOutcome::Escaped(data) => data,
            other => panic!("expected escape, got {other:?}"),
        };
        (m, escape)
    }

    fn single_loop() -> (BranchingSystem<Q>, RelativeUltragraph) {
        let graph = Ultragraph::new(
            singleton(1),
            vec![Edge {
                id: "e1".into(),
                source: 1,
                range: singleton(1),
            }],
            vec![],
        )
        .unwrap();
        let points = vec![
            SystemPoint {
                point: int::<Q>(0),
                depth: 1,
                owner: 1,
            },
            SystemPoint {
                point: int::<Q>(1),
                depth: 2,
                owner: 1,
            },
        ];
        let mut pairs = BTreeMap::new();
        pairs.insert(
            e(1),
            vec![(int::<Q>(0), int::<Q>(0)), (int::<Q>(1), int::<Q>(1))],
        );
        let bs = BranchingSystem::new(graph.clone(), points, pairs).unwrap();
        let rel = RelativeUltragraph::new(graph, singleton(1)).unwrap();
        (bs, rel)
    }

    #[test]
    fn orbit_system_freezes_tripling_sets() {
        let (m, escape) = tripling_escape();
        let bs = branching_from_markov(&m, &escape, 3, 12).unwrap();
        let labels: Vec<String> = (0..bs.len()).map(|i| bs.point_label(i)).collect();
        assert_eq!(
            labels,
            ["1/2", "1/6", "5/2", "1/18", "5/6", "13/6", "9/2"]
        );
        assert_eq!(bs.d_vertex(1), BTreeSet::from([0, 1, 3, 4]));
        assert_eq!(bs.d_vertex(2), BTreeSet::from([2, 5]));
        assert_eq!(bs.d_vertex(3), BTreeSet::from([6]));
        assert_eq!(bs.r_of(&e(1)), BTreeSet::from([1, 3, 4]));
        assert_eq!(bs.r_of(&fe(2)), BTreeSet::from([2, 5]));
        assert_eq!(bs.r_of(&fe(3)), BTreeSet::from([6]));
        assert_eq!(bs.depth_bound(), 3);
    }

    #[test]
    fn markov_rep_matches_displayed_actions() {
        let (m, escape) = tripling_escape();
        let rep = build_markov_rep(&m, &escape, &tail(2), 3, 12).unwrap();
        let t1 = rep.isometry(&EdgeRef::plain(e(1))).unwrap();
        let t2 = rep.isometry(&EdgeRef::plain(fe(2))).unwrap();
        assert_eq!(t2.apply(0), Some(2));
        assert_eq!(t2.apply(1), Some(5));
        assert_eq!(t2.apply(2), None);
        assert_eq!(t2.apply(3), None);
        assert_eq!(t1.apply(0), Some(1));
        assert_eq!(t1.apply(1), Some(3));
        assert_eq!(t1.apply(2), Some(4));

        let star = rep
            .word_injection(&[GenSym::iso_star(e(1))])
            .unwrap();
        assert_eq!(star.apply(0), None);
        assert_eq!(star.apply(1), Some(0));

        let round = rep
            .word_injection(&[GenSym::iso_star(fe(2)), GenSym::iso(fe(2))])
            .unwrap();
        assert_eq!(round.apply(0), Some(0));
        assert_eq!(round.apply(1), Some(1));
        assert_eq!(round.apply(3), None);

        let mask = rep.proj_mask(&EXSet::from_unprimed(singleton(1)).unwrap());
        assert_eq!(mask, [true, true, false, true, true, false, false]);
        let zero = evaluate(
            &StarPolynomial::<Q>::symbol(
                Algebra::Rel,
                GenSym::proj(VertexSet::empty()),
            ),
            &rep,
        )
        .unwrap();
        assert!(zero.matrix.is_zero());
    }

    #[test]
    fn validation_passes_and_catches_hypothesis_breaks() {
        let (m, escape) = tripling_escape();
        let bs = branching_from_markov(&m, &escape, 4, 12).unwrap();
        let rel = RelativeUltragraph::new(bs.graph().clone(), tail(2)).unwrap();
        let report = validate_branching(&bs, &rel, 6).unwrap();
        assert!(report.all_pass(), "{}", report.text());

        let off = RelativeUltragraph::new(bs.graph().clone(), tail(1)).unwrap();
        let report = validate_branching(&bs, &off, 6).unwrap();
        let bad = report
            .records
            .iter()
            .find(|r| r.check == "x-complete" && r.item == "v1")
            .unwrap();
        assert_eq!(bad.verdict, Verdict::Fail);
        assert_eq!(bad.witness.as_deref(), Some("1/2"));
    }

    #[test]
    fn constructor_rejects_malformed_systems() {
        let (m, escape) = tripling_escape();
        let bs = branching_from_markov(&m, &escape, 2, 12).unwrap();
        let graph = bs.graph().clone();
        let dup = BranchingSystem::new(
            graph.clone(),
            vec![
                SystemPoint {
                    point: ratio::<Q>(1, 2),
                    depth: 1,
                    owner: 1,
                },
                SystemPoint {
                    point: ratio::<Q>(1, 2),
                    depth: 2,
                    owner: 1,
                },
            ],
            BTreeMap::new(),
        );
        assert!(matches!(dup, Err(RepError::BadSystem(_))));

        let mut pairs = BTreeMap::new();
        pairs.insert(
            e(1),
            vec![
                (ratio::<Q>(1, 2), ratio::<Q>(1, 6)),
                (ratio::<Q>(5, 2), ratio::<Q>(1, 6)),
            ],
        );
        let clash = BranchingSystem::new(
            graph,
            vec![
                SystemPoint {
                    point: ratio::<Q>(1, 2),
                    depth: 1,
                    owner: 1,
                },
                SystemPoint {
                    point: ratio::<Q>(5, 2),
                    depth: 2,
                    owner: 2,
                },
                SystemPoint {
                    point: ratio::<Q>(1, 6),
                    depth: 2,
                    owner: 1,
                },
            ],
            pairs,
        );
        assert!(matches!(clash, Err(RepError::BadSystem(_))));
    }

    #[test]
    fn relation_suite_passes_and_mutation_fails() {
        let (m, escape) = tripling_escape();
        let mut rep = build_markov_rep(&m, &escape, &tail(2), 6, 12).unwrap();
        let rel = RelativeUltragraph::new(m.induced_ultragraph().unwrap(), tail(2)).unwrap();
        let scope = RelationScope::default_scope(&rel, 6);
        let report = crate::relations::relation_suite(&rep, &rel, &scope);
        assert!(report.all_pass(), "{}", report.text());

        rep.assign_isometry(
            EdgeRef::plain(fe(2)),
            PartialInjection::undefined(rep.dim()),
        );
        let broken = crate::relations::relation_suite(&rep, &rel, &scope);
        let failure = broken.failures().next().expect("mutation must surface");
        assert!(failure.witness.is_some());
    }

    #[test]
    fn escape_gap_preimages_are_exact() {
        let m = tripling_map();
        let hits = escape_gap_preimage(&m, 1, 12).unwrap();
        assert_eq!(
            hits,
            vec![(
                1,
                Interval::open(ratio::<Q>(1, 3), ratio::<Q>(2, 3)).unwrap()
            )]
        );

        let m = accumulation_map();
        let hits = escape_gap_preimage(&m, 1, 12).unwrap();
        assert_eq!(
            hits,
            vec![(1, Interval::open(int::<Q>(0), ratio::<Q>(1, 2)).unwrap())]
        );

        assert!(matches!(
            escape_gap_preimage(&swap_map(), 2, 12),
            Err(RepError::NoGap(2))
        ));
    }

    #[test]
    fn lift_splits_accumulation_system() {
        let (m, escape) = accumulation_escape();
        let bs = branching_from_markov(&m, &escape, 4, 12).unwrap();
        let labels: Vec<String> = (0..bs.len()).map(|i| bs.point_label(i)).collect();
        assert_eq!(
            labels,
            ["1/4", "17/8", "9/16", "41/16", "25/32", "73/32", "89/32"]
        );
        let rel = RelativeUltragraph::new(bs.graph().clone(), tail(2)).unwrap();
        let lifted = lift_branching(&bs, &rel, 5).unwrap();
        assert!(lifted.lemma_report().all_pass(), "{}", lifted.lemma_report().text());
        assert_eq!(lifted.lifted_owners()[0], Owner::Primed(1));
        assert_eq!(lifted.lifted_owners()[2], Owner::Plain(1));
        assert_eq!(
            lifted.q_set(&EdgeRef::primed(e(2))),
            Some(&BTreeSet::from([1]))
        );
        assert_eq!(
            lifted.q_set(&EdgeRef::plain(e(2))),
            Some(&BTreeSet::from([5]))
        );
        let primed_one = EXSet::from_primed(singleton(1).primed()).unwrap();
        assert_eq!(lifted.b_of(&primed_one).unwrap(), BTreeSet::from([0]));
        assert!(lifted.g_map(&EdgeRef::primed(e(1))).is_none());

        let report = validate_branching(&bs, &rel, 6).unwrap();
        assert!(report.all_pass(), "{}", report.text());
    }

    #[test]
    fn diagram_commutes_on_accumulation() {
        let (m, escape) = accumulation_escape();
        let bs = branching_from_markov(&m, &escape, 6, 12).unwrap();
        let rel = RelativeUltragraph::new(bs.graph().clone(), tail(2)).unwrap();
        let report = check_diagram(&bs, &rel, 5).unwrap();
        assert!(report.all_pass(), "{}", report.text());
    }

    #[test]
    fn nu_equals_pi_on_tripling_and_alternating() {
        let (m, escape) = tripling_escape();
        let report = check_nu_equals_pi(&m, &escape, &tail(2), 5, 8).unwrap();
        assert!(report.all_pass(), "{}", report.text());

        let (m, escape) = alternating_escape();
        let odds = VertexSet::progression(1, 2).unwrap();
        let report = check_nu_equals_pi(&m, &escape, &odds, 5, 8).unwrap();
        assert!(report.all_pass(), "{}", report.text());
    }

    #[test]
    fn recurrent_orbit_keeps_both_models_equal() {
        let m = swap_map();
        let escape = EscapeData {
            x: ratio::<Q>(1, 2),
            tau: 0,
            j: 1,
            target: ratio::<Q>(1, 2),
            iterates: vec![ratio::<Q>(1, 2)],
        };
        let bs = branching_from_markov(&m, &escape, 3, 8).unwrap();
        let labels: Vec<String> = (0..bs.len()).map(|i| bs.point_label(i)).collect();
        assert_eq!(labels, ["5/2", "1/2"]);
        assert_eq!(bs.pairing(&e(1)).unwrap(), &BTreeMap::from([(0, 1)]));
        assert_eq!(bs.pairing(&e(2)).unwrap(), &BTreeMap::from([(1, 0)]));

        let report = check_nu_equals_pi(&m, &escape, &VertexSet::empty(), 3, 8).unwrap();
        assert!(report.all_pass(), "{}", report.text());
    }

    #[test]
    fn tripling_injectivity_holds_with_witnesses() {
        let (m, escape) = tripling_escape();
        let verdict = injectivity_markov(&m, &escape, &tail(2), 12, 12, 4).unwrap();
        assert_eq!(verdict.overall(), Status::Holds, "{}", verdict.text());
        let meets = verdict.condition(COND_MEETS_X).unwrap();
        assert_eq!(
            meets.item("v2").unwrap().witness.as_deref(),
            Some("5/2")
        );
        assert_eq!(meets.item("v12").unwrap().status, Status::Holds);
        let reaches = verdict.condition(COND_REACHES).unwrap();
        let w = reaches.item("v1").unwrap().witness.clone().unwrap();
        assert!(w.contains("1/6") && w.contains("1/2"), "{w}");
        let escapes = verdict.condition(COND_ESCAPES).unwrap();
        assert_eq!(
            escapes.item("v1").unwrap().witness.as_deref(),
            Some("1/2")
        );
        let cycles = verdict.condition(COND_CYCLES).unwrap();
        assert_eq!(cycles.status(), Status::Holds);
        assert_eq!(cycles.items[0].item, "scope");
    }

    #[test]
    fn accumulation_escape_condition_fails_off_support() {
        let (m, escape) = accumulation_escape();
        let verdict = injectivity_markov(&m, &escape, &tail(3), 6, 12, 4).unwrap();
        assert_eq!(verdict.overall(), Status::Fails);
        let escapes = verdict.condition(COND_ESCAPES).unwrap();
        assert_eq!(
            escapes.item("v1").unwrap().witness.as_deref(),
            Some("1/4")
        );
        let v2 = escapes.item("v2").unwrap();
        assert_eq!(v2.status, Status::Fails);
        assert!(
            v2.witness
                .as_deref()
                .unwrap()
                .contains("misses the escape-gap preimage"),
            "{:?}",
            v2.witness
        );
        let reaches = verdict.condition(COND_REACHES).unwrap();
        let w = reaches.item("v1").unwrap().witness.clone().unwrap();
        assert!(w.contains("9/16") && w.contains("17/8"), "{w}");
    }

    #[test]
    fn alternating_injectivity_holds_for_odds() {
        let (m, escape) = alternating_escape();
        let odds = VertexSet::progression(1, 2).unwrap();
        let verdict = injectivity_markov(&m, &escape, &odds, 6, 12, 4).unwrap();
        assert_eq!(verdict.overall(), Status::Holds, "{}", verdict.text());
        let escapes = verdict.condition(COND_ESCAPES).unwrap();
        assert_eq!(
            escapes.item("v2").unwrap().witness.as_deref(),
            Some("5/2")
        );
        assert_eq!(
            escapes.item("v4").unwrap().witness.as_deref(),
            Some("11/2")
        );
    }

    #[test]
    fn counting_certificate_agrees_with_markov_route() {
        let (m, escape) = tripling_escape();
        let verdict = injectivity_markov(&m, &escape, &tail(2), 6, 6, 4).unwrap();
        assert_eq!(verdict.overall(), Status::Holds, "{}", verdict.text());

        let bs = branching_from_markov(&m, &escape, 6, 6).unwrap();
        let rel = RelativeUltragraph::new(bs.graph().clone(), tail(2)).unwrap();
        let counting = injectivity_counting(&bs, &rel, 4, 8).unwrap();
        assert_eq!(counting.overall(), Status::Holds, "{}", counting.text());

        let meets = verdict.condition(COND_MEETS_X).unwrap();
        let domain = counting.condition(COND_DOMAIN).unwrap();
        for it in &domain.items {
            assert_eq!(
                Some(it.witness.as_deref().unwrap()),
                meets.item(&it.item).unwrap().witness.as_deref(),
                "domain witness diverges at {}",
                it.item
            );
        }
        let range = counting.condition(COND_RANGE).unwrap();
        let reach_witness = verdict
            .condition(COND_REACHES)
            .unwrap()
            .item("v1")
            .unwrap()
            .witness
            .clone()
            .unwrap();
        assert!(reach_witness.contains(range.item("e1").unwrap().witness.as_deref().unwrap()));
        let defect = counting.condition(COND_DEFECT).unwrap();
        assert_eq!(
            defect.item("v1").unwrap().witness.as_deref(),
            verdict
                .condition(COND_ESCAPES)
                .unwrap()
                .item("v1")
                .unwrap()
                .witness
                .as_deref()
        );
    }

    #[test]
    fn identity_loop_fails_counting_cycle_condition() {
        let (bs, rel) = single_loop();
        let report = validate_branching(&bs, &rel, 2).unwrap();
        assert!(report.all_pass(), "{}", report.text());

        let verdict = injectivity_counting(&bs, &rel, 3, 5).unwrap();
        assert_eq!(verdict.overall(), Status::Fails);
        let cycles = verdict.condition(COND_CYCLES).unwrap();
        assert_eq!(cycles.items[0].status, Status::Fails);
        assert_eq!(
            verdict.condition(COND_DOMAIN).unwrap().status(),
            Status::Holds
        );
        assert_eq!(
            verdict.condition(COND_RANGE).unwrap().items[0].item,
            "scope"
        );
    }

    #[test]
    fn period_two_loop_stays_undetermined() {
        let (bs, rel) = single_loop();
        let graph = bs.graph().clone();
        let points = bs.points().to_vec();
        let mut pairs = BTreeMap::new();
        pairs.insert(
            e(1),
            vec![(int::<Q>(0), int::<Q>(1)), (int::<Q>(1), int::<Q>(0))],
        );
        let swapped = BranchingSystem::new(graph, points, pairs).unwrap();
        let verdict = injectivity_counting(&swapped, &rel, 3, 5).unwrap();
        let cycles = verdict.condition(COND_CYCLES).unwrap();
        assert_eq!(cycles.items[0].status, Status::Undetermined);
    }

    #[test]
    fn degenerate_lift_without_y_keeps_plain_data() {
        let (bs, rel) = single_loop();
        let lifted = lift_branching(&bs, &rel, 2).unwrap();
        assert!(lifted.lemma_report().all_pass());
        assert!(lifted
            .lifted_owners()
            .iter()
            .all(|o| matches!(o, Owner::Plain(_))));
        assert_eq!(lifted.edge_refs(), vec![EdgeRef::plain(e(1))]);
        let all = EXSet::from_unprimed(singleton(1)).unwrap();
        assert_eq!(lifted.b_of(&all).unwrap(), BTreeSet::from([0, 1]));
        assert_eq!(
            lifted.q_set(&EdgeRef::plain(e(1))),
            Some(&BTreeSet::from([0, 1]))
        );

        let report = check_diagram(&bs, &rel, 2).unwrap();
        assert!(report.all_pass(), "{}", report.text());
    }

    #[test]
    fn infinite_meet_is_rejected() {
        let graph = Ultragraph::new(
            tail(1),
            vec![Edge {
                id: "e1".into(),
                source: 1,
                range: tail(1),
            }],
            vec![crate::ultragraph::EdgeFamily {
                prefix: "f".into(),
                class: crate::interval::IndexClass::new(1, 1),
                offsets: vec![1],
                extra: VertexSet::empty(),
            }],
        )
        .unwrap();
        let points = vec![SystemPoint {
            point: int::<Q>(0),
            depth: 1,
            owner: 1,
        }];
        let bs = BranchingSystem::new(graph.clone(), points, BTreeMap::new()).unwrap();
        let rel = RelativeUltragraph::new(graph, VertexSet::empty()).unwrap();
        assert!(matches!(
            lift_branching(&bs, &rel, 3),
            Err(RepError::InfiniteMeet(_))
        ));
    }

    #[test]
    fn hypothesis_gate_blocks_bad_x() {
        let (m, escape) = tripling_escape();
        let err = build_markov_rep(&m, &escape, &tail(1), 3, 12).unwrap_err();
        match err {
            RepError::Hypothesis { item, .. } => assert_eq!(item, "v1"),
            other => panic!("expected hypothesis error, got {other}"),
        }
    }

    #[test]
    fn empty_orbit_is_rejected() {
        let (m, escape) = tripling_escape();
        assert!(matches!(
            branching_from_markov(&m, &escape, 0, 12),
            Err(RepError::EmptyOrbit { .. })
        ));
    }
}
