//! Scalar abstraction for the exact numeric kernel.
//!
//! Everything downstream needs ordered field arithmetic with decidable
//! equality, so the bound is a rational-like scalar rather than a float.
//! `Ratio<T>` over any signed big-enough integer satisfies it; the crate
//! root exports concrete aliases.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Num, Signed};

/// Exact ordered scalar used for interval endpoints, orbit points and
/// matrix entries.
///
/// The `Ord` requirement is what rules floating point out: every
/// comparison made by the validators and the orbit walkers must be a
/// decision, not an approximation.
pub trait Scalar: Clone + Ord + Num + Signed + fmt::Debug + fmt::Display {
    fn from_int(n: i64) -> Self;

    fn from_ratio(numer: i64, denom: i64) -> Self;

    /// Parse `"p"` or `"p/q"`.
    fn parse_ratio(s: &str) -> Option<Self>;

    /// Render as `"p"` or `"p/q"` in lowest terms.
    fn ratio_string(&self) -> String {
        self.to_string()
    }
}

impl<T> Scalar for Ratio<T>
where
    T: Clone + Integer + Signed + fmt::Debug + fmt::Display + From<i64> + FromStr,
{
    fn from_int(n: i64) -> Self {
        Ratio::from_integer(T::from(n))
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Ratio::new(T::from(numer), T::from(denom))
    }

    fn parse_ratio(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.split_once('/') {
            None => {
                let n = s.parse::<T>().ok()?;
                Some(Ratio::from_integer(n))
            }
            Some((p, q)) => {
                let p = p.trim().parse::<T>().ok()?;
                let q = q.trim().parse::<T>().ok()?;
                if q.is_zero() {
                    None
                } else {
                    Some(Ratio::new(p, q))
                }
            }
        }
    }
}

/// Convenience: `q(3, 2)` in tests and fixtures.
pub fn ratio<S: Scalar>(numer: i64, denom: i64) -> S {
    S::from_ratio(numer, denom)
}

/// Convenience: integer-valued scalar.
pub fn int<S: Scalar>(n: i64) -> S {
    S::from_int(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Q, Q64};

    #[test]
    fn parses_integers_and_fractions() {
        assert_eq!(Q::parse_ratio("17/8"), Some(ratio::<Q>(17, 8)));
        assert_eq!(Q::parse_ratio("-3"), Some(int::<Q>(-3)));
        assert_eq!(Q::parse_ratio(" 5 / 10 "), Some(ratio::<Q>(1, 2)));
        assert_eq!(Q::parse_ratio("1/0"), None);
        assert_eq!(Q::parse_ratio("0.5"), None);
    }

    #[test]
    fn renders_in_lowest_terms() {
        assert_eq!(ratio::<Q>(6, 4).ratio_string(), "3/2");
        assert_eq!(int::<Q64>(7).ratio_string(), "7");
        assert_eq!(ratio::<Q64>(-9, 6).ratio_string(), "-3/2");
    }
}
