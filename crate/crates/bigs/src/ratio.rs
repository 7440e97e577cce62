//! Exact rational scalars and their canonical text form.
//!
//! Every probability, weight, coefficient and moment in this crate is a
//! [`Ratio`]; nothing is ever rounded. The canonical text form is
//! `"num/den"` in lowest terms with a positive denominator, e.g. `"4/3"`,
//! `"-1/2"`, `"0/1"`. Plain integers are accepted on input.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational number.
pub type Ratio = BigRational;

/// Builds a ratio from machine integers. Panics if `den` is zero.
pub fn ratio(num: i64, den: i64) -> Ratio {
    assert!(den != 0, "zero denominator");
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Builds a whole-number ratio.
pub fn int(n: i64) -> Ratio {
    BigRational::from_integer(BigInt::from(n))
}

pub fn zero() -> Ratio {
    BigRational::zero()
}

pub fn one() -> Ratio {
    BigRational::one()
}

/// Parses `"num/den"` or a plain integer.
pub fn parse_ratio(text: &str) -> Result<Ratio> {
    let bad = || Error::ParseRatio(text.to_string());
    let trimmed = text.trim();
    match trimmed.split_once('/') {
        Some((num, den)) => {
            let num: BigInt = num.trim().parse().map_err(|_| bad())?;
            let den: BigInt = den.trim().parse().map_err(|_| bad())?;
            if den.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(num, den))
        }
        None => {
            let num: BigInt = trimmed.parse().map_err(|_| bad())?;
            Ok(BigRational::from_integer(num))
        }
    }
}

/// Canonical `"num/den"` rendering, lowest terms, positive denominator.
pub fn format_ratio(value: &Ratio) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Sum of a sequence of ratios.
pub fn sum<'a, I: IntoIterator<Item = &'a Ratio>>(values: I) -> Ratio {
    values.into_iter().fold(Ratio::zero(), |acc, v| acc + v)
}
