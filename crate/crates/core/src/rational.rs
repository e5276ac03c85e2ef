//! Exact rational scalars and points.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// A point of R^d with exact rational coordinates.
pub type Point = Vec<Rational>;

/// Parses `"p/q"`, an integer, or a terminating decimal such as `"0.25"`.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let err = || Error::Rational(text.to_string());
    if s.is_empty() {
        return Err(err());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| err())?;
        let den: BigInt = den.trim().parse().map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let negative = int_part.starts_with('-');
        let int_digits = int_part.trim_start_matches(['-', '+']);
        let int_val: BigInt = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            int_digits.parse().map_err(|_| err())?
        };
        let frac_val: BigInt = frac_part.parse().map_err(|_| err())?;
        let scale = num_traits::pow(BigInt::from(10), frac_part.len());
        let mag = Rational::new(int_val * &scale + frac_val, scale);
        return Ok(if negative { -mag } else { mag });
    }
    let n: BigInt = s.parse().map_err(|_| err())?;
    Ok(Rational::from_integer(n))
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

pub fn format_rational(q: &Rational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn frac(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn is_positive(q: &Rational) -> bool {
    q.is_positive()
}

/// A numeral as written in a config document: a string (`"3/5"`) or a bare integer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Numeral {
    Int(i64),
    Text(String),
}

impl Numeral {
    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            Numeral::Int(n) => Ok(int(*n)),
            Numeral::Text(s) => parse_rational(s),
        }
    }

    /// True for the placeholder `"*"` that asks for a recomputed diagonal.
    pub fn is_placeholder(&self) -> bool {
        matches!(self, Numeral::Text(s) if matches!(s.trim(), "*" | "_"))
    }
}

impl From<&Rational> for Numeral {
    fn from(q: &Rational) -> Self {
        Numeral::Text(format_rational(q))
    }
}
