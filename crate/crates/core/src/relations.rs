//! Formal *-polynomials over the generators of the two algebras attached to
//! a relative ultragraph: projections `p_A` and partial isometries `s_e` on
//! the relative side, and their lifted counterparts `P_Z`, `S_f` (with `f`
//! possibly primed) on the absolute side.
//!
//! The generator-level maps both ways are implemented as polynomial-valued
//! images: the forward map sends `p_B` to `P_B + P_{(B∩Y)'}` and `s_e` to
//! `S_e + S_{e'}` whenever the primed copy exists, while the backward map
//! translates each lifted generator into the correction polynomial built
//! from `q_w = p_w − Σ_{s(e)=w} s_e s_e*`. Both are verified against matrix
//! representations by exact evaluation: every generator acts as a partial
//! injection of basis points, so a word evaluates by composition, a
//! polynomial by summation, and equality is asserted on the columns whose
//! depth survives the word's excursion into a depth-truncated basis.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::num::Scalar;
use crate::report::{CheckRecord, Report};
use crate::sparse::{PartialInjection, SparseMat};
use crate::ultragraph::{EdgeKey, EdgeRef, GraphError, LiftedUltragraph, RelativeUltragraph};
use crate::vertexset::{EXSet, VertexSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("symbol belongs to the other algebra")]
    WrongAlgebra,
    #[error("infinite sum over {0}; the translation needs the finite-meet hypothesis")]
    InfiniteSum(String),
    #[error("generator `{0}` has no assignment in the representation")]
    Unassigned(String),
    #[error("truncation too shallow: safe depth {safe} below minimum basis depth {min}")]
    TruncationTooShallow { safe: i64, min: u32 },
    #[error("empty basis")]
    EmptyBasis,
}

/// Which algebra a polynomial lives in: the relative algebra of `(G, X)` or
/// the full algebra of the lifted graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algebra {
    Rel,
    Abs,
}

/// One generator symbol. Projections carry a lifted set (with empty primed
/// part on the relative side); isometries carry an edge reference (never
/// primed on the relative side).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GenSym {
    Proj(EXSet),
    Iso(EdgeRef),
    Star(EdgeRef),
}

impl GenSym {
    pub fn proj(a: VertexSet) -> Self {
        GenSym::Proj(EXSet::from_unprimed(a).expect("relative projections are unprimed"))
    }

    pub fn proj_lifted(z: EXSet) -> Self {
        GenSym::Proj(z)
    }

    pub fn iso(key: EdgeKey) -> Self {
        GenSym::Iso(EdgeRef::plain(key))
    }

    pub fn iso_star(key: EdgeKey) -> Self {
        GenSym::Star(EdgeRef::plain(key))
    }

    pub fn star(&self) -> Self {
        match self {
            GenSym::Proj(z) => GenSym::Proj(z.clone()),
            GenSym::Iso(e) => GenSym::Star(e.clone()),
            GenSym::Star(e) => GenSym::Iso(e.clone()),
        }
    }

    /// Depth change when the symbol acts: isometries push one level deeper,
    /// their adjoints one level up, projections stay.
    pub fn excursion(&self) -> i64 {
        match self {
            GenSym::Proj(_) => 0,
            GenSym::Iso(_) => 1,
            GenSym::Star(_) => -1,
        }
    }

    fn is_empty_proj(&self) -> bool {
        matches!(self, GenSym::Proj(z) if z.is_empty())
    }

    fn render(&self, algebra: Algebra) -> String {
        let (p, s) = match algebra {
            Algebra::Rel => ("p", "s"),
            Algebra::Abs => ("P", "S"),
        };
        match self {
            GenSym::Proj(z) => format!("{p}({z})"),
            GenSym::Iso(e) => format!("{s}({e})"),
            GenSym::Star(e) => format!("{s}*({e})"),
        }
    }
}

pub type Word = Vec<GenSym>;

/// Finite rational combination of generator words, tagged by algebra.
/// Like words merge; zero coefficients and words containing an empty
/// projection (the zero element) are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarPolynomial<S> {
    pub algebra: Algebra,
    terms: BTreeMap<Word, S>,
}

impl<S: Scalar> StarPolynomial<S> {
    pub fn zero(algebra: Algebra) -> Self {
        StarPolynomial {
            algebra,
            terms: BTreeMap::new(),
        }
    }

    pub fn symbol(algebra: Algebra, sym: GenSym) -> Self {
        Self::word(algebra, vec![sym])
    }

    pub fn word(algebra: Algebra, word: Word) -> Self {
        let mut p = Self::zero(algebra);
        p.add_term(word, S::one());
        p
    }

    fn add_term(&mut self, word: Word, coeff: S) {
        if coeff.is_zero() || word.iter().any(|s| s.is_empty_proj()) {
            return;
        }
        let entry = self.terms.entry(word).or_insert_with(S::zero);
        *entry = entry.clone() + coeff;
        if entry.is_zero() {
            let dead: Vec<Word> = self
                .terms
                .iter()
                .filter(|(_, c)| c.is_zero())
                .map(|(w, _)| w.clone())
                .collect();
            for w in dead {
                self.terms.remove(&w);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &S)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// No terms left after normalization. This is formal zero, not zero in
    /// the algebra.
    pub fn is_formally_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.algebra, other.algebra, "algebra tags must match");
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(&-S::one())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &S) -> Self {
        let mut out = Self::zero(self.algebra);
        for (w, k) in &self.terms {
            out.add_term(w.clone(), c.clone() * k.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.algebra, other.algebra, "algebra tags must match");
        let mut out = Self::zero(self.algebra);
        for (w1, c1) in &self.terms {
            for (w2, c2) in &other.terms {
                let mut w = w1.clone();
                w.extend(w2.iter().cloned());
                out.add_term(w, c1.clone() * c2.clone());
            }
        }
        out
    }

    /// Adjoint: reverse each word, star each symbol; rational coefficients
    /// are their own conjugates.
    pub fn star(&self) -> Self {
        let mut out = Self::zero(self.algebra);
        for (w, c) in &self.terms {
            let sw: Word = w.iter().rev().map(GenSym::star).collect();
            out.add_term(sw, c.clone());
        }
        out
    }

    /// Replace every symbol by a polynomial in the target algebra,
    /// multiplying along each word.
    pub fn substitute<E>(
        &self,
        target: Algebra,
        f: impl Fn(&GenSym) -> Result<StarPolynomial<S>, E>,
    ) -> Result<StarPolynomial<S>, E> {
        let mut out = StarPolynomial::zero(target);
        for (w, c) in &self.terms {
            let mut acc: Option<StarPolynomial<S>> = None;
            for sym in w {
                let img = f(sym)?;
                acc = Some(match acc {
                    None => img,
                    Some(a) => a.mul(&img),
                });
            }
            let word_poly = acc.expect("words are nonempty");
            out = out.add(&word_poly.scale(c));
        }
        Ok(out)
    }
}

impl<S: Scalar> fmt::Display for StarPolynomial<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if *c < S::zero() {
                    write!(f, "-")?;
                }
            } else if *c < S::zero() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if !mag.is_one() {
                write!(f, "{}·", mag.ratio_string())?;
            }
            let rendered: Vec<String> = w.iter().map(|s| s.render(self.algebra)).collect();
            write!(f, "{}", rendered.join(" "))?;
        }
        Ok(())
    }
}

/// `q_w = p_w − Σ_{s(e)=w} s_e s_e*`, the defect of the full relation at a
/// regular vertex.
pub fn q_of<S: Scalar>(
    v: u64,
    rel: &RelativeUltragraph,
) -> Result<StarPolynomial<S>, RelError> {
    if !rel.graph.regular_vertices().member(v) {
        return Err(RelError::Graph(GraphError::NotRegular(v)));
    }
    let mut p = StarPolynomial::symbol(
        Algebra::Rel,
        GenSym::proj(VertexSet::singleton(v).expect("vertex indices are positive")),
    );
    for key in rel.graph.out_edges(v) {
        let range_proj = StarPolynomial::word(
            Algebra::Rel,
            vec![GenSym::iso(key.clone()), GenSym::iso_star(key)],
        );
        p = p.sub(&range_proj);
    }
    Ok(p)
}

/// `Σ_{e : s(e) ∈ A∩Y} s_e s_e*`; needs `A ∩ Y` finite.
fn source_range_sum<S: Scalar>(
    a: &VertexSet,
    rel: &RelativeUltragraph,
) -> Result<StarPolynomial<S>, RelError> {
    let meet = a.intersect(&rel.y).map_err(GraphError::from)?;
    if !meet.is_finite() {
        return Err(RelError::InfiniteSum(format!("edges sourced in {meet}")));
    }
    let mut p = StarPolynomial::zero(Algebra::Rel);
    let bound = meet.explicit_part().iter().next_back().copied().unwrap_or(0);
    for w in meet.enumerate_up_to(bound) {
        for key in rel.graph.out_edges(w) {
            p = p.add(&StarPolynomial::word(
                Algebra::Rel,
                vec![GenSym::iso(key.clone()), GenSym::iso_star(key)],
            ));
        }
    }
    Ok(p)
}

/// `Σ_{w ∈ B∩Y} q_w`; needs `B ∩ Y` finite.
fn q_sum<S: Scalar>(
    b: &VertexSet,
    rel: &RelativeUltragraph,
) -> Result<StarPolynomial<S>, RelError> {
    let meet = b.intersect(&rel.y).map_err(GraphError::from)?;
    if !meet.is_finite() {
        return Err(RelError::InfiniteSum(format!("defects over {meet}")));
    }
    let mut p = StarPolynomial::zero(Algebra::Rel);
    let bound = meet.explicit_part().iter().next_back().copied().unwrap_or(0);
    for w in meet.enumerate_up_to(bound) {
        p = p.add(&q_of(w, rel)?);
    }
    Ok(p)
}

/// Forward generator map into the lifted algebra.
pub fn phi_image<S: Scalar>(
    sym: &GenSym,
    lift: &LiftedUltragraph,
) -> Result<StarPolynomial<S>, RelError> {
    match sym {
        GenSym::Proj(z) => {
            if !z.primed_part().is_empty() {
                return Err(RelError::WrongAlgebra);
            }
            let b = z.unprimed_part();
            let meet = b.intersect(lift.y()).map_err(GraphError::from)?;
            let mut p = StarPolynomial::symbol(
                Algebra::Abs,
                GenSym::proj_lifted(EXSet::from_unprimed(b.clone()).map_err(GraphError::from)?),
            );
            p = p.add(&StarPolynomial::symbol(
                Algebra::Abs,
                GenSym::proj_lifted(
                    EXSet::from_primed(meet.primed()).map_err(GraphError::from)?,
                ),
            ));
            Ok(p)
        }
        GenSym::Iso(e) => {
            if e.primed {
                return Err(RelError::WrongAlgebra);
            }
            let mut p = StarPolynomial::symbol(Algebra::Abs, GenSym::Iso(e.clone()));
            if lift.has_primed(&e.key) {
                p = p.add(&StarPolynomial::symbol(
                    Algebra::Abs,
                    GenSym::Iso(EdgeRef::primed(e.key.clone())),
                ));
            }
            Ok(p)
        }
        GenSym::Star(e) => Ok(phi_image::<S>(&GenSym::Iso(e.clone()), lift)?.star()),
    }
}

/// Backward generator map from the lifted algebra, defined under the
/// hypothesis that every range meets `Y` finitely.
pub fn psi_image<S: Scalar>(
    sym: &GenSym,
    lift: &LiftedUltragraph,
) -> Result<StarPolynomial<S>, RelError> {
    let rel = &lift.base;
    match sym {
        GenSym::Proj(z) => {
            let (a, b_meet_y) = lift.decompose(z)?;
            // p_A − p_{A∩Y} + Σ_{s(e) ∈ A∩Y} s_e s_e* + Σ_{w ∈ B∩Y} q_w
            let a_meet_y = a.intersect(&rel.y).map_err(GraphError::from)?;
            let mut p = StarPolynomial::symbol(Algebra::Rel, GenSym::proj(a.clone()));
            p = p.sub(&StarPolynomial::symbol(
                Algebra::Rel,
                GenSym::proj(a_meet_y),
            ));
            p = p.add(&source_range_sum(&a, rel)?);
            p = p.add(&q_sum(&b_meet_y, rel)?);
            Ok(p)
        }
        GenSym::Iso(f) => {
            let range = rel.graph.edge_range(&f.key)?;
            let range_meet_y = range.intersect(&rel.y).map_err(GraphError::from)?;
            if !range_meet_y.is_finite() {
                return Err(RelError::InfiniteSum(format!(
                    "range of {} against Y",
                    f.key
                )));
            }
            let s_f = StarPolynomial::symbol(Algebra::Rel, GenSym::iso(f.key.clone()));
            if f.primed {
                if !lift.has_primed(&f.key) {
                    return Err(RelError::Graph(GraphError::UnknownEdge(f.to_string())));
                }
                // s_e (p_{r(e)∩Y} − Σ_{s(g) ∈ r(e)∩Y} s_g s_g*)
                let inner = StarPolynomial::symbol(Algebra::Rel, GenSym::proj(range_meet_y))
                    .sub(&source_range_sum(&range, rel)?);
                Ok(s_f.mul(&inner))
            } else {
                // s_f (p_{r(f)} − p_{r(f)∩Y} + Σ_{s(g) ∈ r(f)∩Y} s_g s_g*)
                let inner = StarPolynomial::symbol(Algebra::Rel, GenSym::proj(range))
                    .sub(&StarPolynomial::symbol(
                        Algebra::Rel,
                        GenSym::proj(range_meet_y),
                    ))
                    .add(&source_range_sum(
                        &rel.graph.edge_range(&f.key)?,
                        rel,
                    )?);
                Ok(s_f.mul(&inner))
            }
        }
        GenSym::Star(f) => Ok(psi_image::<S>(&GenSym::Iso(f.clone()), lift)?.star()),
    }
}

/// The round trip `backward ∘ forward` of one relative generator, composed
/// at the formal level.
pub fn psi_phi_roundtrip<S: Scalar>(
    sym: &GenSym,
    lift: &LiftedUltragraph,
) -> Result<StarPolynomial<S>, RelError> {
    phi_image::<S>(sym, lift)?.substitute(Algebra::Rel, |s| psi_image(s, lift))
}

/// Point owners: every basis point lives in the domain of exactly one
/// vertex, possibly a primed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Plain(u64),
    Primed(u64),
}

impl Owner {
    pub fn in_set(&self, z: &EXSet) -> bool {
        match self {
            Owner::Plain(v) => z.unprimed_part().member(*v),
            Owner::Primed(v) => z.primed_part().member(*v),
        }
    }
}

/// Exact matrix representation on a finite depth-labeled basis: projections
/// act diagonally through point owners, isometries as partial injections.
#[derive(Debug, Clone)]
pub struct MatrixRep<S> {
    pub algebra: Algebra,
    pub labels: Vec<String>,
    pub depths: Vec<u32>,
    pub owners: Vec<Owner>,
    pub depth_bound: u32,
    isometries: BTreeMap<EdgeRef, PartialInjection>,
    _scalar: std::marker::PhantomData<S>,
}

impl<S: Scalar> MatrixRep<S> {
    pub fn new(
        labels: Vec<String>,
        depths: Vec<u32>,
        owners: Vec<Owner>,
        depth_bound: u32,
        algebra: Algebra,
    ) -> Self {
        assert_eq!(labels.len(), depths.len());
        assert_eq!(labels.len(), owners.len());
        MatrixRep {
            algebra,
            labels,
            depths,
            owners,
            depth_bound,
            isometries: BTreeMap::new(),
            _scalar: std::marker::PhantomData,
        }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn assign_isometry(&mut self, edge: EdgeRef, inj: PartialInjection) {
        assert_eq!(inj.len(), self.dim(), "injection must act on the basis");
        self.isometries.insert(edge, inj);
    }

    pub fn isometry(&self, edge: &EdgeRef) -> Option<&PartialInjection> {
        self.isometries.get(edge)
    }

    pub fn assigned_edges(&self) -> impl Iterator<Item = &EdgeRef> {
        self.isometries.keys()
    }

    pub fn proj_mask(&self, z: &EXSet) -> Vec<bool> {
        self.owners.iter().map(|o| o.in_set(z)).collect()
    }

    fn injection_of(&self, sym: &GenSym) -> Result<PartialInjection, RelError> {
        match sym {
            GenSym::Proj(z) => {
                let mask = self.proj_mask(z);
                Ok(PartialInjection::new(
                    mask.iter()
                        .enumerate()
                        .map(|(i, &b)| if b { Some(i) } else { None })
                        .collect(),
                )
                .expect("diagonal masks are injective"))
            }
            GenSym::Iso(e) => self
                .isometries
                .get(e)
                .cloned()
                .ok_or_else(|| RelError::Unassigned(e.to_string())),
            GenSym::Star(e) => self
                .isometries
                .get(e)
                .map(PartialInjection::inverse)
                .ok_or_else(|| RelError::Unassigned(format!("{e}*"))),
        }
    }

    /// Evaluate one word as a partial injection, composing right to left.
    pub fn word_injection(&self, word: &[GenSym]) -> Result<PartialInjection, RelError> {
        let mut acc = PartialInjection::identity(self.dim());
        for sym in word.iter().rev() {
            acc = self.injection_of(sym)?.compose(&acc);
        }
        Ok(acc)
    }

    /// Maximum prefix excursion of a word applied right to left: how far
    /// above its starting depth an intermediate vector can climb.
    pub fn word_excursion(word: &[GenSym]) -> i64 {
        let mut cur = 0i64;
        let mut max = 0i64;
        for sym in word.iter().rev() {
            cur += sym.excursion();
            max = max.max(cur);
        }
        max
    }

    pub fn min_depth(&self) -> u32 {
        self.depths.iter().copied().min().unwrap_or(0)
    }
}

/// Result of evaluating a polynomial: the exact matrix, and the depth up to
/// which basis columns are unaffected by truncation.
#[derive(Debug, Clone)]
pub struct Evaluation<S> {
    pub matrix: SparseMat<S>,
    pub safe_depth: u32,
    pub safe_cols: Vec<bool>,
}

impl<S: Scalar> Evaluation<S> {
    /// First nonzero entry in a safe column, as (row, col).
    pub fn first_violation(&self) -> Option<(usize, usize)> {
        self.matrix
            .triples()
            .find(|&(_, j, _)| self.safe_cols[j])
            .map(|(i, j, _)| (i, j))
    }

    pub fn is_zero_on_safe(&self) -> bool {
        self.first_violation().is_none()
    }
}

pub fn evaluate<S: Scalar>(
    poly: &StarPolynomial<S>,
    rep: &MatrixRep<S>,
) -> Result<Evaluation<S>, RelError> {
    if rep.dim() == 0 {
        return Err(RelError::EmptyBasis);
    }
    assert_eq!(poly.algebra, rep.algebra, "algebra tags must match");
    let mut matrix = SparseMat::zero(rep.dim(), rep.dim());
    let mut excursion = 0i64;
    for (word, coeff) in poly.terms() {
        excursion = excursion.max(MatrixRep::<S>::word_excursion(word));
        let inj = rep.word_injection(word)?;
        matrix = matrix
            .add(&inj.matrix::<S>().scale(coeff))
            .expect("dimensions agree on the common basis");
    }
    let safe = rep.depth_bound as i64 - excursion;
    let min = rep.min_depth();
    if safe < min as i64 {
        return Err(RelError::TruncationTooShallow { safe, min });
    }
    let safe_depth = safe as u32;
    let safe_cols = rep.depths.iter().map(|&d| d <= safe_depth).collect();
    Ok(Evaluation {
        matrix,
        safe_depth,
        safe_cols,
    })
}

/// Evaluate `lhs − rhs` and report where it fails to vanish.
fn check_identity<S: Scalar>(
    name: &str,
    item: String,
    lhs: &StarPolynomial<S>,
    rhs: &StarPolynomial<S>,
    rep: &MatrixRep<S>,
) -> CheckRecord {
    match evaluate(&lhs.sub(rhs), rep) {
        Err(e) => CheckRecord::error(name, item, e.to_string()),
        Ok(eval) => match eval.first_violation() {
            None => CheckRecord::pass(name, item),
            Some((i, j)) => CheckRecord::fail(
                name,
                item,
                format!(
                    "column {} (depth {}) row {}",
                    rep.labels[j], rep.depths[j], rep.labels[i]
                ),
            ),
        },
    }
}

/// Test scope for the relation suite: which sets, edges, vertices, and
/// set decompositions to exercise.
#[derive(Debug, Clone)]
pub struct RelationScope {
    pub sets: Vec<VertexSet>,
    pub edges: Vec<EdgeKey>,
    pub ck_vertices: Vec<u64>,
    pub z_pairs: Vec<(VertexSet, VertexSet)>,
}

impl RelationScope {
    /// Everything reachable below the index bound: vertex singletons, edge
    /// ranges, and their meets with small tails, paired up for the
    /// decomposition identities.
    pub fn default_scope(rel: &RelativeUltragraph, max_index: u64) -> Self {
        let mut sets: Vec<VertexSet> = Vec::new();
        let push_unique = |s: VertexSet, sets: &mut Vec<VertexSet>| {
            if !sets.contains(&s) {
                sets.push(s);
            }
        };
        for v in rel.graph.vertices.enumerate_up_to(max_index) {
            push_unique(
                VertexSet::singleton(v).expect("vertex indices are positive"),
                &mut sets,
            );
        }
        let edges = rel.graph.edges_up_to(max_index);
        for key in &edges {
            push_unique(rel.graph.edge_range(key).expect("scoped edge"), &mut sets);
        }
        if let Some(first) = sets.first().cloned() {
            if let Some(second) = sets.get(1).cloned() {
                let u = first.union(&second).expect("scope sets are unprimed");
                push_unique(u, &mut sets);
            }
        }
        let ck_vertices = rel.x.enumerate_up_to(max_index);
        let mut z_pairs = Vec::new();
        for (i, a) in sets.iter().enumerate() {
            if let Some(b) = sets.get(i + 1).or(sets.first()) {
                z_pairs.push((a.clone(), b.clone()));
            }
        }
        z_pairs.truncate(6);
        RelationScope {
            sets,
            edges,
            ck_vertices,
            z_pairs,
        }
    }
}

fn proj<S: Scalar>(a: &VertexSet) -> StarPolynomial<S> {
    StarPolynomial::symbol(Algebra::Rel, GenSym::proj(a.clone()))
}

fn range_proj<S: Scalar>(key: &EdgeKey) -> StarPolynomial<S> {
    StarPolynomial::word(
        Algebra::Rel,
        vec![GenSym::iso(key.clone()), GenSym::iso_star(key.clone())],
    )
}

/// Run every relation and correction-identity check against a matrix
/// representation of the relative algebra.
pub fn relation_suite<S: Scalar>(
    rep: &MatrixRep<S>,
    rel: &RelativeUltragraph,
    scope: &RelationScope,
) -> Report {
    let mut report = Report::new();
    let zero = StarPolynomial::zero(Algebra::Rel);

    report.push(check_identity(
        "p-empty",
        "p({})".into(),
        &proj(&VertexSet::empty()),
        &zero,
        rep,
    ));

    for a in &scope.sets {
        for b in &scope.sets {
            let meet = a.intersect(b).expect("scope sets are unprimed");
            let join = a.union(b).expect("scope sets are unprimed");
            report.push(check_identity(
                "p-intersection",
                format!("A={a} B={b}"),
                &proj(a).mul(&proj(b)),
                &proj(&meet),
                rep,
            ));
            report.push(check_identity(
                "p-union",
                format!("A={a} B={b}"),
                &proj(&join),
                &proj(a).add(&proj(b)).sub(&proj(&meet)),
                rep,
            ));
        }
    }

    for key in &scope.edges {
        let range = rel.graph.edge_range(key).expect("scoped edge");
        let source = rel.graph.edge_source(key).expect("scoped edge");
        let s = StarPolynomial::symbol(Algebra::Rel, GenSym::iso(key.clone()));
        let s_star = StarPolynomial::symbol(Algebra::Rel, GenSym::iso_star(key.clone()));
        report.push(check_identity(
            "s-domain",
            key.id(),
            &s_star.mul(&s),
            &proj(&range),
            rep,
        ));
        let src_proj = proj(&VertexSet::singleton(source).expect("sources are positive"));
        report.push(check_identity(
            "s-range-absorb",
            key.id(),
            &src_proj.mul(&range_proj(key)),
            &range_proj(key),
            rep,
        ));
    }

    for e in &scope.edges {
        for f in &scope.edges {
            if e == f {
                continue;
            }
            let se_star = StarPolynomial::symbol(Algebra::Rel, GenSym::iso_star(e.clone()));
            let sf = StarPolynomial::symbol(Algebra::Rel, GenSym::iso(f.clone()));
            report.push(check_identity(
                "s-orthogonal",
                format!("{e} {f}"),
                &se_star.mul(&sf),
                &zero,
                rep,
            ));
            report.push(check_identity(
                "range-orthogonal",
                format!("{e} {f}"),
                &range_proj(e).mul(&range_proj(f)),
                &zero,
                rep,
            ));
        }
    }

    for &v in &scope.ck_vertices {
        let mut sum = StarPolynomial::zero(Algebra::Rel);
        for key in rel.graph.out_edges(v) {
            sum = sum.add(&range_proj(&key));
        }
        report.push(check_identity(
            "ck-at-x",
            format!("v{v}"),
            &proj(&VertexSet::singleton(v).expect("vertices are positive")),
            &sum,
            rep,
        ));
    }

    for (a1, b1) in &scope.z_pairs {
        for (a2, b2) in &scope.z_pairs {
            let item = format!("A1={a1} B1={b1} A2={a2} B2={b2}");
            let parts = (|| -> Result<_, RelError> {
                let y = &rel.y;
                let a1y = a1.intersect(y).map_err(GraphError::from)?;
                let a2y = a2.intersect(y).map_err(GraphError::from)?;
                Ok((
                    source_range_sum::<S>(a1, rel)?,
                    source_range_sum::<S>(a2, rel)?,
                    q_sum::<S>(b1, rel)?,
                    q_sum::<S>(b2, rel)?,
                    a1y,
                    a2y,
                ))
            })();
            let (se1, se2, q1, q2, a1y, a2y) = match parts {
                Ok(t) => t,
                Err(e) => {
                    report.push(CheckRecord::error("contas1", item, e.to_string()));
                    continue;
                }
            };
            report.push(check_identity(
                "contas1-1",
                item.clone(),
                &proj(a1).mul(&se2),
                &proj(&a1y).mul(&se2),
                rep,
            ));
            report.push(check_identity(
                "contas1-2",
                item.clone(),
                &se1.mul(&proj(a2)),
                &se1.mul(&proj(&a2y)),
                rep,
            ));
            report.push(check_identity(
                "contas1-3",
                item.clone(),
                &proj(a1).mul(&q2),
                &proj(&a1y).mul(&q2),
                rep,
            ));
            report.push(check_identity(
                "contas1-4",
                item.clone(),
                &q1.mul(&proj(a2)),
                &q1.mul(&proj(&a2y)),
                rep,
            ));
            report.push(check_identity(
                "contas1-5",
                item.clone(),
                &se1.mul(&q2).add(&q1.mul(&se2)),
                &zero,
                rep,
            ));
            let b12 = b1
                .intersect(b2)
                .expect("scope sets are unprimed");
            let q12 = match q_sum::<S>(&b12, rel) {
                Ok(q) => q,
                Err(e) => {
                    report.push(CheckRecord::error("contas1-6", item, e.to_string()));
                    continue;
                }
            };
            report.push(check_identity(
                "contas1-6",
                item.clone(),
                &q1.mul(&q2),
                &q12,
                rep,
            ));
        }
    }

    for (a, b) in &scope.z_pairs {
        let item = format!("A={a} B={b}");
        let outcome = (|| -> Result<Vec<(String, StarPolynomial<S>)>, RelError> {
            let y = &rel.y;
            let ay = a.intersect(y).map_err(GraphError::from)?;
            if !ay.is_finite() {
                return Err(RelError::InfiniteSum(format!("A∩Y = {ay}")));
            }
            let by = b.intersect(y).map_err(GraphError::from)?;
            if !by.is_finite() {
                return Err(RelError::InfiniteSum(format!("B∩Y = {by}")));
            }
            let mut projections = vec![(
                format!("p({a})-p({ay})"),
                proj::<S>(a).sub(&proj(&ay)),
            )];
            let ay_max = ay.explicit_part().iter().next_back().copied().unwrap_or(0);
            for w in ay.enumerate_up_to(ay_max) {
                for key in rel.graph.out_edges(w) {
                    projections.push((format!("range({key})"), range_proj(&key)));
                }
            }
            let by_max = by.explicit_part().iter().next_back().copied().unwrap_or(0);
            for w in by.enumerate_up_to(by_max) {
                projections.push((format!("q(v{w})"), q_of(w, rel)?));
            }
            Ok(projections)
        })();
        let projections = match outcome {
            Ok(p) => p,
            Err(e) => {
                report.push(CheckRecord::error("ortho-decomposition", item, e.to_string()));
                continue;
            }
        };
        for (i, (ni, pi)) in projections.iter().enumerate() {
            for (j, (nj, pj)) in projections.iter().enumerate() {
                let expected = if i == j { pi.clone() } else { zero.clone() };
                report.push(check_identity(
                    "ortho-decomposition",
                    format!("{item}: {ni}·{nj}"),
                    &pi.mul(pj),
                    &expected,
                    rep,
                ));
            }
        }
    }

    report.sorted()
}

/// Check that the composite of the two generator maps fixes every scoped
/// generator of the relative algebra, by evaluation.
pub fn psi_phi_identity_check<S: Scalar>(
    rep: &MatrixRep<S>,
    lift: &LiftedUltragraph,
    scope: &RelationScope,
) -> Report {
    let mut report = Report::new();
    let mut symbols: Vec<(String, GenSym)> = Vec::new();
    for a in &scope.sets {
        symbols.push((format!("p({a})"), GenSym::proj(a.clone())));
    }
    for key in &scope.edges {
        symbols.push((format!("s({key})"), GenSym::iso(key.clone())));
        symbols.push((format!("s*({key})"), GenSym::iso_star(key.clone())));
    }
    for (name, sym) in symbols {
        match psi_phi_roundtrip::<S>(&sym, lift) {
            Err(e) => report.push(CheckRecord::error("psi-phi-id", name, e.to_string())),
            Ok(round) => {
                let back = round.sub(&StarPolynomial::symbol(Algebra::Rel, sym));
                report.push(check_identity("psi-phi-id", name, &back, &StarPolynomial::zero(Algebra::Rel), rep));
            }
        }
    }
    report.sorted()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;
    use crate::ultragraph::{Edge, Ultragraph};
    use crate::Q;

    fn two_vertex() -> RelativeUltragraph {
        // e1: v1 -> {v2}; e2: v2 -> {v1, v2}; X = {v2}, so Y = {v1}.
        let g = Ultragraph::new(
            VertexSet::finite([1, 2]).unwrap(),
            vec![
                Edge {
                    id: "e1".into(),
                    source: 1,
                    range: VertexSet::singleton(2).unwrap(),
                },
                Edge {
                    id: "e2".into(),
                    source: 2,
                    range: VertexSet::finite([1, 2]).unwrap(),
                },
            ],
            vec![],
        )
        .unwrap();
        RelativeUltragraph::new(g, VertexSet::singleton(2).unwrap()).unwrap()
    }

    #[test]
    fn polynomials_merge_like_words_and_drop_zeros() {
        let e1 = EdgeKey::Named("e1".into());
        let w = StarPolynomial::<Q>::word(
            Algebra::Rel,
            vec![GenSym::iso(e1.clone()), GenSym::iso_star(e1.clone())],
        );
        let sum = w.add(&w).sub(&w.scale(&int(2)));
        assert!(sum.is_formally_zero());
        let with_empty = StarPolynomial::<Q>::word(
            Algebra::Rel,
            vec![GenSym::proj(VertexSet::empty()), GenSym::iso(e1)],
        );
        assert!(with_empty.is_formally_zero());
    }

    #[test]
    fn star_reverses_words() {
        let e1 = EdgeKey::Named("e1".into());
        let a = VertexSet::singleton(1).unwrap();
        let p = StarPolynomial::<Q>::word(
            Algebra::Rel,
            vec![GenSym::iso(e1.clone()), GenSym::proj(a.clone())],
        );
        let starred = p.star();
        let word: Vec<GenSym> = starred.terms().next().unwrap().0.clone();
        assert_eq!(word, vec![GenSym::proj(a), GenSym::iso_star(e1)]);
        assert_eq!(starred.star(), p);
    }

    #[test]
    fn forward_images_follow_the_primed_structure() {
        let rel = two_vertex();
        let lift = rel.lift();
        // r(e1) = {2} misses Y = {1}: no primed copy.
        let img = phi_image::<Q>(&GenSym::iso(EdgeKey::Named("e1".into())), &lift).unwrap();
        assert_eq!(img.term_count(), 1);
        // r(e2) = {1,2} meets Y: primed copy appears.
        let img = phi_image::<Q>(&GenSym::iso(EdgeKey::Named("e2".into())), &lift).unwrap();
        assert_eq!(img.term_count(), 2);
        // p_{v1} with v1 in Y picks up the primed projection.
        let img = phi_image::<Q>(
            &GenSym::proj(VertexSet::singleton(1).unwrap()),
            &lift,
        )
        .unwrap();
        assert_eq!(img.term_count(), 2);
        // p_{v2} with v2 not in Y stays a single term.
        let img = phi_image::<Q>(
            &GenSym::proj(VertexSet::singleton(2).unwrap()),
            &lift,
        )
        .unwrap();
        assert_eq!(img.term_count(), 1);
    }

    #[test]
    fn backward_image_of_a_primed_vertex_projection_is_the_defect() {
        let rel = two_vertex();
        let lift = rel.lift();
        // P_{v1'}: A = {}, B∩Y = {1}; s⁻¹(v1) = {e1}.
        let z = EXSet::from_primed(VertexSet::singleton(1).unwrap().primed()).unwrap();
        let img = psi_image::<Q>(&GenSym::proj_lifted(z), &lift).unwrap();
        let expected = q_of::<Q>(1, &rel).unwrap();
        assert_eq!(img, expected);
        // Plain projection clear of Y translates to itself.
        let z = EXSet::from_unprimed(VertexSet::singleton(2).unwrap()).unwrap();
        let img = psi_image::<Q>(&GenSym::proj_lifted(z.clone()), &lift).unwrap();
        assert_eq!(
            img,
            StarPolynomial::symbol(Algebra::Rel, GenSym::proj(VertexSet::singleton(2).unwrap()))
        );
    }

    #[test]
    fn infinite_meets_are_rejected() {
        // All vertices regular, Y infinite, one range covering Y.
        let g = Ultragraph::new(
            VertexSet::tail(1).unwrap(),
            vec![Edge {
                id: "e1".into(),
                source: 1,
                range: VertexSet::tail(1).unwrap(),
            }],
            vec![crate::ultragraph::EdgeFamily {
                prefix: "e".into(),
                class: crate::interval::IndexClass::new(2, 1),
                offsets: vec![1],
                extra: VertexSet::empty(),
            }],
        )
        .unwrap();
        let rel = RelativeUltragraph::new(g, VertexSet::singleton(1).unwrap()).unwrap();
        let lift = rel.lift();
        let err = psi_image::<Q>(&GenSym::iso(EdgeKey::Named("e1".into())), &lift).unwrap_err();
        assert!(matches!(err, RelError::InfiniteSum(_)));
    }

    #[test]
    fn word_excursion_reads_right_to_left() {
        let e = EdgeKey::Named("e1".into());
        // s* s (apply s first): climbs one before coming back.
        let w = vec![GenSym::iso_star(e.clone()), GenSym::iso(e.clone())];
        assert_eq!(MatrixRep::<Q>::word_excursion(&w), 1);
        // s s* (apply s* first): never climbs above the start.
        let w = vec![GenSym::iso(e.clone()), GenSym::iso_star(e.clone())];
        assert_eq!(MatrixRep::<Q>::word_excursion(&w), 0);
        let w = vec![
            GenSym::iso(e.clone()),
            GenSym::iso(e.clone()),
            GenSym::iso_star(e),
        ];
        assert_eq!(MatrixRep::<Q>::word_excursion(&w), 1);
    }

    /// Hand-built representation of the two-vertex graph on a 4-point basis:
    /// two points per vertex domain, edges acting one level down.
    fn toy_rep() -> MatrixRep<Q> {
        // Points: a (v1, depth 1), b (v2, depth 1), c (v2, depth 2),
        // d (v1, depth 2). f_{e1}: D_{r(e1)} = D_{v2} -> R_{e1}: b..c?
        // Keep it faithful: e1 maps the depth-1 slice of D_{v2} to depth-2
        // points of D_{v1}; e2 maps depth-1 slices of D_{v1} and D_{v2}
        // into depth-2 points of D_{v2}. Only partial data is needed for
        // the formal tests here.
        let mut rep = MatrixRep::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![1, 1, 2, 2],
            vec![
                Owner::Plain(1),
                Owner::Plain(2),
                Owner::Plain(2),
                Owner::Plain(1),
            ],
            2,
            Algebra::Rel,
        );
        // e1: sends D_{v2} points one level deeper into v1 territory.
        rep.assign_isometry(
            EdgeRef::plain(EdgeKey::Named("e1".into())),
            PartialInjection::new(vec![None, Some(3), None, None]).unwrap(),
        );
        // e2: sends D_{v1} and D_{v2} depth-1 points into v2 territory.
        rep.assign_isometry(
            EdgeRef::plain(EdgeKey::Named("e2".into())),
            PartialInjection::new(vec![Some(2), None, None, None]).unwrap(),
        );
        rep
    }

    #[test]
    fn evaluation_guards_columns_by_excursion() {
        let rep = toy_rep();
        let e1 = EdgeKey::Named("e1".into());
        // s*s - p_{r(e1)}: excursion 1, safe depth 1.
        let poly = StarPolynomial::<Q>::word(
            Algebra::Rel,
            vec![GenSym::iso_star(e1.clone()), GenSym::iso(e1.clone())],
        )
        .sub(&StarPolynomial::symbol(
            Algebra::Rel,
            GenSym::proj(VertexSet::singleton(2).unwrap()),
        ));
        let eval = evaluate(&poly, &rep).unwrap();
        assert_eq!(eval.safe_depth, 1);
        // Column c (depth 2, in D_{v2}) is a genuine truncation artifact:
        // s*s sends it to zero but p keeps it. It must be masked out.
        assert_eq!(eval.safe_cols, vec![true, true, false, false]);
        assert!(eval.is_zero_on_safe());
        assert!(!eval.matrix.is_zero());
    }

    #[test]
    fn evaluation_matches_matrix_products() {
        // Three depth levels so a two-isometry word keeps one safe column.
        let mut rep = MatrixRep::<Q>::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into(), "g".into()],
            vec![1, 1, 2, 2, 3],
            vec![
                Owner::Plain(1),
                Owner::Plain(2),
                Owner::Plain(2),
                Owner::Plain(1),
                Owner::Plain(1),
            ],
            3,
            Algebra::Rel,
        );
        let e1 = EdgeKey::Named("e1".into());
        let e2 = EdgeKey::Named("e2".into());
        rep.assign_isometry(
            EdgeRef::plain(e1.clone()),
            PartialInjection::new(vec![None, Some(3), Some(4), None, None]).unwrap(),
        );
        rep.assign_isometry(
            EdgeRef::plain(e2.clone()),
            PartialInjection::new(vec![Some(2), None, None, None, None]).unwrap(),
        );
        let word = StarPolynomial::<Q>::word(
            Algebra::Rel,
            vec![GenSym::iso(e1.clone()), GenSym::iso(e2.clone())],
        );
        let eval = evaluate(&word, &rep).unwrap();
        assert_eq!(eval.safe_depth, 1);
        let m1 = rep.isometry(&EdgeRef::plain(e1)).unwrap().matrix::<Q>();
        let m2 = rep.isometry(&EdgeRef::plain(e2)).unwrap().matrix::<Q>();
        assert_eq!(eval.matrix, m1.mul(&m2).unwrap());
        assert_eq!(eval.matrix.get(4, 0), Q::from_int(1));
        // Adjoint evaluation = conjugate transpose.
        let star = evaluate(&word.star(), &rep).unwrap();
        assert_eq!(star.matrix, eval.matrix.adjoint());
    }

    #[test]
    fn too_shallow_truncation_is_an_error() {
        let rep = toy_rep();
        let e1 = EdgeKey::Named("e1".into());
        let deep = StarPolynomial::<Q>::word(
            Algebra::Rel,
            vec![
                GenSym::iso_star(e1.clone()),
                GenSym::iso_star(e1.clone()),
                GenSym::iso(e1.clone()),
                GenSym::iso(e1),
            ],
        );
        assert!(matches!(
            evaluate(&deep, &rep),
            Err(RelError::TruncationTooShallow { .. })
        ));
    }
}
