//! Canonical worked interval maps used across the documentation, the test
//! suites, and the command-line fixtures: three maps whose orbits escape
//! into a gap and one purely periodic map that never does.

use crate::interval::{Affine, IndexClass, Interval, NExpr, SymInterval};
use crate::markov::{
    FamilyRule, IntervalPartition, MarkovMap, PartitionFamily, Piece, PiecewiseAffineMap, SymPiece,
};
use crate::num::{int, ratio};
use crate::Q;

fn closed(lo: i64, hi: i64) -> Interval<Q> {
    Interval::closed(int(lo), int(hi)).unwrap()
}

/// Tripling on `[0, 1]` followed by the left shift `x − 2` on the family
/// `[2n−2, 2n−1]`: the first row is `{1, 2}` and every later interval
/// maps one step down. The point `1/2` escapes into `(1, 2)` after one
/// step.
pub fn tripling_map() -> MarkovMap<Q> {
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
        vec![],
    )
    .unwrap();
    MarkovMap::certify(partition, map, 12).expect("the tripling map certifies")
}

/// Doubling map on intervals accumulating at 3: `(0, 1)` is doubled up,
/// `[2, 5/2]` is doubled down, and the family `[3 − (1/2)^{n−2},
/// 3 − (1/4)(1/2)^{n−3}]` shifts one step toward the accumulation point.
/// Both endpoint orbits are pinned to 2 by overrides, and `17/8` escapes
/// into `(1, 2)` after two steps.
pub fn accumulation_map() -> MarkovMap<Q> {
    let lo = NExpr::Geo {
        limit: int::<Q>(3),
        coef: ratio(-1, 2),
        ratio: ratio(1, 2),
        base: 3,
    };
    let hi = NExpr::Geo {
        limit: int::<Q>(3),
        coef: ratio(-1, 4),
        ratio: ratio(1, 2),
        base: 3,
    };
    let partition = IntervalPartition::new(
        vec![closed(0, 1), Interval::closed(int(2), ratio(5, 2)).unwrap()],
        Some(PartitionFamily {
            start: 3,
            lo: lo.clone(),
            hi: hi.clone(),
        }),
        int(0),
        Some(int(3)),
    )
    .unwrap();
    let map = PiecewiseAffineMap::new(
        vec![
            vec![Piece {
                domain: Interval::open(int(0), int(1)).unwrap(),
                map: Affine::new(int(2), int(1)),
            }],
            vec![Piece {
                domain: Interval::closed(int(2), ratio(5, 2)).unwrap(),
                map: Affine::new(int(2), int(-4)),
            }],
        ],
        vec![FamilyRule {
            class: IndexClass::new(3, 1),
            pieces: vec![SymPiece {
                domain: SymInterval {
                    lo,
                    hi,
                    lo_closed: true,
                    hi_closed: true,
                },
                slope: int(2),
                intercept: NExpr::constant(int(-3)),
            }],
        }],
        vec![(int(0), int(2)), (int(1), int(2))],
    )
    .unwrap();
    MarkovMap::certify(partition, map, 12).expect("the accumulation map certifies")
}

/// Tripled intervals `[n+1, n+2]` whose middle thirds escape, the even
/// ones into `(3, 4)` and the odd ones into `(1, 2)`, while the outer
/// thirds map to the two neighbor intervals. The point `5/2` escapes
/// into `(3, 4)` in one step.
pub fn alternating_map() -> MarkovMap<Q> {
    let fam_lo = NExpr::affine(int::<Q>(1), int(1));
    let fam_hi = NExpr::affine(int::<Q>(2), int(1));
    let dom1 = SymInterval {
        lo: NExpr::affine(int::<Q>(1), int(1)),
        hi: NExpr::affine(ratio(4, 3), int(1)),
        lo_closed: true,
        hi_closed: true,
    };
    let dom2 = SymInterval {
        lo: NExpr::affine(ratio::<Q>(4, 3), int(1)),
        hi: NExpr::affine(ratio(5, 3), int(1)),
        lo_closed: false,
        hi_closed: false,
    };
    let dom3 = SymInterval {
        lo: NExpr::affine(ratio::<Q>(5, 3), int(1)),
        hi: NExpr::affine(int(2), int(1)),
        lo_closed: true,
        hi_closed: true,
    };
    let partition = IntervalPartition::new(
        vec![closed(0, 1), closed(2, 3), closed(4, 5)],
        Some(PartitionFamily {
            start: 4,
            lo: fam_lo,
            hi: fam_hi,
        }),
        int(0),
        None,
    )
    .unwrap();
    let piece = |lo: Q, lo_c, hi: Q, hi_c, slope: i64, offset: i64| Piece {
        domain: Interval::new(lo, lo_c, hi, hi_c).unwrap(),
        map: Affine::new(int(slope), int(offset)),
    };
    let map = PiecewiseAffineMap::new(
        vec![
            vec![Piece {
                domain: Interval::open(int(0), int(1)).unwrap(),
                map: Affine::new(int(2), int(1)),
            }],
            vec![
                piece(int(2), true, ratio(7, 3), true, 3, -6),
                piece(ratio(7, 3), false, ratio(8, 3), false, 3, -4),
                piece(ratio(8, 3), true, int(3), true, 3, -4),
            ],
            vec![
                piece(int(4), true, ratio(13, 3), true, 3, -10),
                piece(ratio(13, 3), false, ratio(14, 3), false, 3, -12),
                piece(ratio(14, 3), true, int(5), true, 3, -9),
            ],
        ],
        vec![
            FamilyRule {
                class: IndexClass::new(4, 2),
                pieces: vec![
                    SymPiece {
                        domain: dom1.clone(),
                        slope: int(3),
                        intercept: NExpr::affine(int(-3), int(-2)),
                    },
                    SymPiece {
                        domain: dom2.clone(),
                        slope: int(3),
                        intercept: NExpr::affine(int(-1), int(-3)),
                    },
                    SymPiece {
                        domain: dom3.clone(),
                        slope: int(3),
                        intercept: NExpr::affine(int(-3), int(-2)),
                    },
                ],
            },
            FamilyRule {
                class: IndexClass::new(5, 2),
                pieces: vec![
                    SymPiece {
                        domain: dom1,
                        slope: int(3),
                        intercept: NExpr::affine(int(-3), int(-2)),
                    },
                    SymPiece {
                        domain: dom2,
                        slope: int(3),
                        intercept: NExpr::affine(int(-3), int(-3)),
                    },
                    SymPiece {
                        domain: dom3,
                        slope: int(3),
                        intercept: NExpr::affine(int(-3), int(-2)),
                    },
                ],
            },
        ],
        vec![(int(0), int(3)), (int(1), int(3))],
    )
    .unwrap();
    MarkovMap::certify(partition, map, 12).expect("the alternating map certifies")
}

/// Two closed intervals swapped by translations: every orbit is periodic,
/// so no point ever escapes.
pub fn swap_map() -> MarkovMap<Q> {
    let partition =
        IntervalPartition::new(vec![closed(0, 1), closed(2, 3)], None, int(0), Some(int(3)))
            .unwrap();
    let map = PiecewiseAffineMap::new(
        vec![
            vec![Piece {
                domain: closed(0, 1),
                map: Affine::new(int(1), int(2)),
            }],
            vec![Piece {
                domain: closed(2, 3),
                map: Affine::new(int(1), int(-2)),
            }],
        ],
        vec![],
        vec![],
    )
    .unwrap();
    MarkovMap::certify(partition, map, 12).expect("the swap map certifies")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixture_maps_certify() {
        for m in [
            tripling_map(),
            accumulation_map(),
            alternating_map(),
            swap_map(),
        ] {
            assert!(m.certificate().all_pass());
        }
    }
}
