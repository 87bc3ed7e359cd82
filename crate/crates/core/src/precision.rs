//! Working precision, the high-precision scalar, and exact decimal inputs.

use std::fmt;
use std::str::FromStr;

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};

/// High-precision binary floating point scalar (MPFR).
pub type Real = Float;

const LOG2_10: f64 = std::f64::consts::LOG2_10;

/// Guard digits kept out of every tolerance.
pub const GUARD_DIGITS: u32 = 10;

/// Working precision in decimal digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Precision {
    digits: u32,
}

impl Precision {
    pub fn new(digits: u32) -> Result<Self> {
        if digits <= GUARD_DIGITS + 5 {
            return Err(Error::InvalidParameter(format!(
                "precision of {digits} digits leaves no room for {GUARD_DIGITS} guard digits"
            )));
        }
        Ok(Precision { digits })
    }

    pub fn digits(self) -> u32 {
        self.digits
    }

    /// Mantissa bits used for every [`Real`] at this precision.
    pub fn bits(self) -> u32 {
        (f64::from(self.digits) * LOG2_10).ceil() as u32 + 4
    }

    pub fn raised(self, extra_digits: u32) -> Precision {
        Precision {
            digits: self.digits + extra_digits,
        }
    }

    pub fn zero(self) -> Real {
        Float::new(self.bits())
    }

    pub fn int(self, v: i64) -> Real {
        Float::with_val(self.bits(), v)
    }

    pub fn real(self, v: &Real) -> Real {
        Float::with_val(self.bits(), v)
    }

    /// `10^(-(digits - 10))`, the relative residual tolerance.
    pub fn tolerance(self) -> Real {
        self.pow10(-i64::from(self.digits - GUARD_DIGITS))
    }

    /// Relative tolerance for reported bracket endpoints: `10^(-min(digits/2, 30))`.
    pub fn root_tolerance(self) -> Real {
        self.pow10(-i64::from((self.digits / 2).min(30)))
    }

    pub fn pow10(self, exp: i64) -> Real {
        let ten = Float::with_val(self.bits(), 10);
        ten.pow(exp)
    }

    pub fn parse(self, text: &str) -> Result<Real> {
        let parsed =
            Float::parse(text.trim()).map_err(|e| Error::InvalidParameter(format!("`{text}` is not a number: {e}")))?;
        Ok(Float::with_val_round(self.bits(), parsed, Round::Nearest).0)
    }
}

/// A validated decimal literal, materialized at whatever precision is in use
/// so that values like `0.02` never pass through binary64.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Decimal(String);

impl Decimal {
    pub fn to_real(&self, prec: Precision) -> Real {
        // validated at construction
        prec.parse(&self.0).unwrap_or_else(|_| prec.zero())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_i64(v: i64) -> Self {
        Decimal(v.to_string())
    }
}

impl FromStr for Decimal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let ok = Float::parse(s).is_ok() && s.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c));
        if !ok || s.is_empty() {
            return Err(Error::InvalidParameter(format!("`{s}` is not a decimal number")));
        }
        Ok(Decimal(s.to_string()))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Formats `x` with `sig` significant digits (rounded to nearest).
///
/// Plain positional notation is used for decimal exponents in `[-8, 40]`,
/// scientific notation otherwise. The output only depends on the value and
/// `sig`, so it is stable across runs.
pub fn format_sig(x: &Real, sig: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let (neg, digits, exp) = x.to_sign_string_exp(10, Some(sig.max(1)));
    let exp = exp.unwrap_or(0);
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if neg { "-" } else { "" };
    // value = 0.d1 d2 ... × 10^exp
    let body = if (-8..=40).contains(&exp) {
        let n = digits.len() as i32;
        if exp <= 0 {
            format!("0.{}{}", "0".repeat((-exp) as usize), digits)
        } else if exp >= n {
            format!("{}{}", digits, "0".repeat((exp - n) as usize))
        } else {
            let (int, frac) = digits.split_at(exp as usize);
            format!("{int}.{frac}")
        }
    } else {
        let (first, rest) = digits.split_at(1);
        if rest.is_empty() {
            format!("{first}e{}", exp - 1)
        } else {
            format!("{first}.{rest}e{}", exp - 1)
        }
    };
    format!("{sign}{body}")
}

/// Exact decimal rendering: enough digits that parsing at the same precision
/// restores the identical binary value.
pub fn format_exact(x: &Real) -> String {
    x.to_string_radix(10, None)
}

/// Rounds `x` to `decimals` digits after the decimal point (nearest) and
/// renders it in positional notation.
pub fn format_fixed(x: &Real, decimals: usize) -> String {
    let prec = x.prec().max(64);
    let scale = Float::with_val(prec, 10).pow(decimals as u32);
    let scaled = Float::with_val(prec, x * &scale).round();
    let int = scaled.to_integer().unwrap_or_default();
    let neg = int < 0;
    let mut digits = int.abs().to_string();
    if digits.len() <= decimals {
        digits = format!("{}{}", "0".repeat(decimals + 1 - digits.len()), digits);
    }
    let split = digits.len() - decimals;
    let body = if decimals == 0 {
        digits
    } else {
        format!("{}.{}", &digits[..split], &digits[split..])
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// `log10 |x|` as an `f64`, for diagnostics only.
pub fn log10_abs(x: &Real) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let (m, e) = x.to_f64_exp();
    m.abs().log10() + f64::from(e) * std::f64::consts::LOG10_2
}
