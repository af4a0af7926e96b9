//! Scalar arithmetic in two modes: exact rationals and IEEE `f64`.
//!
//! Every finite-space operation in this crate is generic over [`Scalar`].
//! The rational mode ([`Rat`]) is the ground truth: equalities asserted by
//! the theory hold exactly there, independent of evaluation order. The float
//! mode trades exactness for speed and compares within [`crate::tol::FLOAT_MODE`].

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num::bigint::BigInt;
use num::{BigRational, Signed, ToPrimitive};

use crate::error::{Error, Result};

/// Exact rational scalar backed by arbitrary-precision integers.
pub type Rat = BigRational;

/// Arithmetic interface shared by the two scalar modes.
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + num::Zero
    + num::One
    + Send
    + Sync
    + 'static
{
    /// True when arithmetic is exact and equality needs no tolerance.
    const EXACT: bool;

    /// Human-readable mode name, echoed in reports.
    const MODE_NAME: &'static str;

    /// Comparison tolerance for this mode (zero when exact).
    fn mode_tol() -> f64 {
        if Self::EXACT {
            0.0
        } else {
            crate::tol::FLOAT_MODE
        }
    }

    fn from_int(n: i64) -> Self;

    /// The exact ratio `num / den`; `den` must be nonzero.
    fn ratio(num: i64, den: i64) -> Self;

    fn to_f64(&self) -> f64;

    /// `|self - other|` as an `f64`, computed exactly first in rational mode.
    fn abs_diff(&self, other: &Self) -> f64;

    /// Parse the textual form produced by [`Scalar::render_text`].
    fn parse_text(s: &str) -> Result<Self>;

    /// Round-trip-stable textual form (full decimal precision for floats,
    /// `num/den` for rationals).
    fn render_text(&self) -> String;
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const MODE_NAME: &'static str = "float64";

    fn from_int(n: i64) -> Self {
        n as f64
    }

    fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs_diff(&self, other: &Self) -> f64 {
        (self - other).abs()
    }

    fn parse_text(s: &str) -> Result<Self> {
        // Accept plain floats and the rational notation, so float-mode readers
        // can consume documents written in exact mode.
        if let Some((n, d)) = s.split_once('/') {
            let n: f64 = n
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad numerator `{n}`: {e}")))?;
            let d: f64 = d
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad denominator `{d}`: {e}")))?;
            if d == 0.0 {
                return Err(Error::Parse(format!("zero denominator in `{s}`")));
            }
            return Ok(n / d);
        }
        s.trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad float `{s}`: {e}")))
    }

    fn render_text(&self) -> String {
        // 17 significant digits round-trip any finite f64.
        format!("{:.16e}", self)
    }
}

impl Scalar for Rat {
    const EXACT: bool = true;
    const MODE_NAME: &'static str = "exact-rational";

    fn from_int(n: i64) -> Self {
        Rat::from_integer(BigInt::from(n))
    }

    fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rat::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs_diff(&self, other: &Self) -> f64 {
        Scalar::to_f64(&(self - other).abs())
    }

    fn parse_text(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(r) = Rat::from_str(t) {
            return Ok(r);
        }
        parse_decimal_rational(t)
    }

    fn render_text(&self) -> String {
        self.to_string()
    }
}

/// Parse a decimal literal (optionally with an exponent) into an exact rational.
fn parse_decimal_rational(s: &str) -> Result<Rat> {
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => {
            let exp: i64 = e
                .parse()
                .map_err(|err| Error::Parse(format!("bad exponent in `{s}`: {err}")))?;
            (m, exp)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    if digits.is_empty() || digits == "-" || digits == "+" {
        return Err(Error::Parse(format!("bad rational literal `{s}`")));
    }
    let numer = BigInt::from_str(&digits)
        .map_err(|e| Error::Parse(format!("bad rational literal `{s}`: {e}")))?;
    let shift = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    Ok(if shift >= 0 {
        Rat::from_integer(numer * ten.pow(shift as u32))
    } else {
        Rat::new(numer, ten.pow((-shift) as u32))
    })
}
