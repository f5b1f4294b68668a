//! Sparse exact matrices over the scalar type, plus partial permutations,
//! which is all the operator calculus here ever produces: generators act on
//! basis vectors by partial injections, and projections act diagonally.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatError {
    #[error("shape mismatch: ({0}x{1}) against ({2}x{3})")]
    Shape(usize, usize, usize, usize),
}

/// Sparse matrix with entries stored row-major; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMat<S> {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), S>,
}

impl<S: Scalar> SparseMat<S> {
    pub fn zero(rows: usize, cols: usize) -> Self {
        SparseMat {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    /// Diagonal 0/1 matrix from a membership mask.
    pub fn diag_mask(mask: &[bool]) -> Self {
        let mut m = Self::zero(mask.len(), mask.len());
        for (i, &b) in mask.iter().enumerate() {
            if b {
                m.set(i, i, S::one());
            }
        }
        m
    }

    /// Matrix of the partial map `j ↦ image[j]`: column `j` holds a single 1
    /// in row `image[j]` when defined.
    pub fn from_partial_map(rows: usize, image: &[Option<usize>]) -> Self {
        let mut m = Self::zero(rows, image.len());
        for (j, target) in image.iter().enumerate() {
            if let Some(i) = *target {
                m.set(i, j, S::one());
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.entries.get(&(i, j)).cloned().unwrap_or_else(S::zero)
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        assert!(i < self.rows && j < self.cols, "entry outside the matrix");
        if v.is_zero() {
            self.entries.remove(&(i, j));
        } else {
            self.entries.insert((i, j), v);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, &S)> {
        self.entries.iter().map(|(&(i, j), v)| (i, j, v))
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatError> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatError> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self, MatError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatError::Shape(self.rows, self.cols, other.rows, other.cols));
        }
        let mut out = Self::zero(self.rows, self.cols);
        let keys: std::collections::BTreeSet<(usize, usize)> = self
            .entries
            .keys()
            .chain(other.entries.keys())
            .copied()
            .collect();
        for (i, j) in keys {
            out.set(i, j, f(self.get(i, j), other.get(i, j)));
        }
        Ok(out)
    }

    pub fn scale(&self, c: &S) -> Self {
        let mut out = Self::zero(self.rows, self.cols);
        for (&(i, j), v) in &self.entries {
            out.set(i, j, c.clone() * v.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self, MatError> {
        if self.cols != other.rows {
            return Err(MatError::Shape(self.rows, self.cols, other.rows, other.cols));
        }
        let mut out = Self::zero(self.rows, other.cols);
        // Group the right factor by row for the sparse product.
        let mut by_row: BTreeMap<usize, Vec<(usize, &S)>> = BTreeMap::new();
        for (&(k, j), v) in &other.entries {
            by_row.entry(k).or_default().push((j, v));
        }
        let mut acc: BTreeMap<(usize, usize), S> = BTreeMap::new();
        for (&(i, k), a) in &self.entries {
            if let Some(row) = by_row.get(&k) {
                for &(j, b) in row {
                    let cell = acc.entry((i, j)).or_insert_with(S::zero);
                    *cell = cell.clone() + a.clone() * b.clone();
                }
            }
        }
        for ((i, j), v) in acc {
            out.set(i, j, v);
        }
        Ok(out)
    }

    /// Conjugate transpose; entries here are rational, so just the transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.cols, self.rows);
        for (&(i, j), v) in &self.entries {
            out.set(j, i, v.clone());
        }
        out
    }

    /// Restrict to the rows and columns where `keep` is set, zeroing the
    /// rest but preserving the shape.
    pub fn masked(&self, keep: &[bool]) -> Self {
        let mut out = Self::zero(self.rows, self.cols);
        for (&(i, j), v) in &self.entries {
            if keep.get(i).copied().unwrap_or(false) && keep.get(j).copied().unwrap_or(false) {
                out.set(i, j, v.clone());
            }
        }
        out
    }

    /// Do the two matrices agree on every entry whose row and column are
    /// both kept?
    pub fn agrees_on(&self, other: &Self, keep: &[bool]) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.masked(keep) == other.masked(keep)
    }
}

impl<S: Scalar> fmt::Display for SparseMat<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (i, j, v) in self.triples() {
            writeln!(f, "{} {} {}", i, j, v.ratio_string())?;
        }
        Ok(())
    }
}

/// Partial injection on `0..n`, the exact shape of every generator word in
/// the representations here: a word sends each basis vector to another basis
/// vector or to zero, with distinct sources kept distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialInjection {
    image: Vec<Option<usize>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InjectionError {
    #[error("two indices map to the same target {0}")]
    NotInjective(usize),
    #[error("target {0} outside the domain of size {1}")]
    OutOfRange(usize, usize),
}

impl PartialInjection {
    pub fn identity(n: usize) -> Self {
        PartialInjection {
            image: (0..n).map(Some).collect(),
        }
    }

    pub fn undefined(n: usize) -> Self {
        PartialInjection {
            image: vec![None; n],
        }
    }

    pub fn new(image: Vec<Option<usize>>) -> Result<Self, InjectionError> {
        let n = image.len();
        let mut seen = vec![false; n];
        for t in image.iter().flatten() {
            if *t >= n {
                return Err(InjectionError::OutOfRange(*t, n));
            }
            if seen[*t] {
                return Err(InjectionError::NotInjective(*t));
            }
            seen[*t] = true;
        }
        Ok(PartialInjection { image })
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn apply(&self, j: usize) -> Option<usize> {
        self.image.get(j).copied().flatten()
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        PartialInjection {
            image: (0..other.len())
                .map(|j| other.apply(j).and_then(|k| self.apply(k)))
                .collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut image = vec![None; self.image.len()];
        for (j, t) in self.image.iter().enumerate() {
            if let Some(t) = t {
                image[*t] = Some(j);
            }
        }
        PartialInjection { image }
    }

    /// Keep only sources where `mask` is set.
    pub fn restrict(&self, mask: &[bool]) -> Self {
        PartialInjection {
            image: self
                .image
                .iter()
                .enumerate()
                .map(|(j, t)| if mask.get(j).copied().unwrap_or(false) { *t } else { None })
                .collect(),
        }
    }

    pub fn matrix<S: Scalar>(&self) -> SparseMat<S> {
        SparseMat::from_partial_map(self.image.len(), &self.image)
    }

    pub fn defined_count(&self) -> usize {
        self.image.iter().flatten().count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;
    use crate::Q;

    #[test]
    fn product_matches_hand_computation() {
        let mut a = SparseMat::<Q>::zero(2, 3);
        a.set(0, 0, int(1));
        a.set(0, 2, int(2));
        a.set(1, 1, int(3));
        let mut b = SparseMat::<Q>::zero(3, 2);
        b.set(0, 1, int(5));
        b.set(2, 0, int(7));
        b.set(1, 0, int(1));
        let c = a.mul(&b).unwrap();
        assert_eq!(c.get(0, 0), int(14));
        assert_eq!(c.get(0, 1), int(5));
        assert_eq!(c.get(1, 0), int(3));
        assert_eq!(c.get(1, 1), int(0));
        assert!(a.mul(&a).is_err());
    }

    #[test]
    fn adjoint_and_projection_identities() {
        let p = SparseMat::<Q>::diag_mask(&[true, false, true]);
        assert_eq!(p.mul(&p).unwrap(), p);
        assert_eq!(p.adjoint(), p);
        let perm = PartialInjection::new(vec![Some(2), None, Some(0)]).unwrap();
        let m: SparseMat<Q> = perm.matrix();
        // m* m is the domain projection, m m* the range projection.
        let dom = m.adjoint().mul(&m).unwrap();
        assert_eq!(dom, SparseMat::diag_mask(&[true, false, true]));
        let ran = m.mul(&m.adjoint()).unwrap();
        assert_eq!(ran, SparseMat::diag_mask(&[true, false, true]));
    }

    #[test]
    fn composition_follows_application_order() {
        let f = PartialInjection::new(vec![Some(1), Some(2), None]).unwrap();
        let g = PartialInjection::new(vec![Some(2), None, Some(1)]).unwrap();
        // (g ∘ f)(0) = g(1) = None; (g ∘ f)(1) = g(2) = 1.
        let gf = g.compose(&f);
        assert_eq!(gf.apply(0), None);
        assert_eq!(gf.apply(1), Some(1));
        assert_eq!(gf.apply(2), None);
        // Matrix of the composition = product of matrices.
        let prod = g.matrix::<Q>().mul(&f.matrix()).unwrap();
        assert_eq!(prod, gf.matrix());
    }

    #[test]
    fn inverse_round_trips_on_the_defined_part() {
        let f = PartialInjection::new(vec![Some(3), None, Some(0), Some(1)]).unwrap();
        let back = f.inverse();
        for j in 0..4 {
            if let Some(t) = f.apply(j) {
                assert_eq!(back.apply(t), Some(j));
            }
        }
        assert_eq!(back.matrix::<Q>(), f.matrix::<Q>().adjoint());
    }

    #[test]
    fn rejects_non_injective_maps() {
        assert!(PartialInjection::new(vec![Some(0), Some(0)]).is_err());
        assert!(PartialInjection::new(vec![Some(5)]).is_err());
    }

    #[test]
    fn masked_agreement_ignores_guarded_entries() {
        let mut a = SparseMat::<Q>::zero(2, 2);
        a.set(0, 0, int(1));
        a.set(1, 1, int(9));
        let mut b = SparseMat::<Q>::zero(2, 2);
        b.set(0, 0, int(1));
        assert!(a.agrees_on(&b, &[true, false]));
        assert!(!a.agrees_on(&b, &[true, true]));
    }
}
