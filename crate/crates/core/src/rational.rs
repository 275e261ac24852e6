//! Exact rational numbers and their text forms.
//!
//! Every analytical quantity in this crate (normalized sizes, cache sizes,
//! breakpoints, slopes, rates) is a [`Rational`]. The text form is `"p/q"` or
//! `"n"`, which is what the JSON documents carry.

use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

pub type Rational = num_rational::BigRational;

/// Builds `num/den` from machine integers. Panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn from_usize(n: usize) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"n"`, `"-n"`, `"p/q"` or `"-p/q"`. Surrounding ASCII whitespace is
/// tolerated; anything else (decimals, exponents, empty parts) is rejected.
pub fn parse_rational(input: &str) -> Result<Rational, Error> {
    let err = |reason: &str| Error::ParseRational {
        input: input.chars().take(64).collect(),
        reason: reason.to_owned(),
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err("empty"));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (num_str, den_str) = match body.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (body, None),
    };
    let digits = |part: &str| -> Result<BigUint, Error> {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("expected decimal digits"));
        }
        if part.len() > 4096 {
            return Err(err("too many digits"));
        }
        BigUint::parse_bytes(part.as_bytes(), 10).ok_or_else(|| err("expected decimal digits"))
    };
    let num = digits(num_str)?;
    let den = match den_str {
        Some(d) => digits(d)?,
        None => BigUint::one(),
    };
    if den.is_zero() {
        return Err(err("zero denominator"));
    }
    let sign = if neg { Sign::Minus } else { Sign::Plus };
    Ok(Rational::new(
        BigInt::from_biguint(sign, num),
        BigInt::from(den),
    ))
}

/// Canonical `p/q` text (`n` for integers, reduced, sign on the numerator).
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Positional decimal with at most 17 significant digits, rounded half away
/// from zero and with trailing zeros trimmed. Never uses exponent notation or
/// locale-dependent separators.
pub fn to_decimal(value: &Rational) -> String {
    const DIGITS: u32 = 17;
    if value.is_zero() {
        return "0".to_owned();
    }
    let neg = value.is_negative();
    let abs = value.abs();
    let ten = BigInt::from(10);

    // exponent e with 10^e <= abs < 10^(e+1)
    let mut exp: i64 = abs.numer().to_string().len() as i64 - abs.denom().to_string().len() as i64;
    let pow = |e: i64| -> Rational {
        if e >= 0 {
            Rational::from_integer(num_traits::pow(ten.clone(), e as usize))
        } else {
            Rational::new(BigInt::one(), num_traits::pow(ten.clone(), (-e) as usize))
        }
    };
    while pow(exp) > abs {
        exp -= 1;
    }
    while pow(exp + 1) <= abs {
        exp += 1;
    }
    // scaled has DIGITS integer digits (before rounding)
    let shift = DIGITS as i64 - 1 - exp;
    let scaled = &abs * pow(shift);
    let (q, r) = scaled.numer().div_rem(scaled.denom());
    let mut mantissa = q;
    if r * BigInt::from(2) >= *scaled.denom() {
        mantissa += 1;
    }
    let mut digits = mantissa.to_string();
    let mut shift = shift;
    if digits.len() as u32 > DIGITS {
        // rounding carried into a new digit, e.g. 9.99.. -> 10.0..
        digits.pop();
        shift -= 1;
    }
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    let len = digits.len() as i64;
    if shift <= 0 {
        out.push_str(&digits);
        for _ in 0..(-shift) {
            out.push('0');
        }
        return out;
    }
    let int_len = len - shift;
    if int_len > 0 {
        let (ip, fp) = digits.split_at(int_len as usize);
        let fp = fp.trim_end_matches('0');
        out.push_str(ip);
        if !fp.is_empty() {
            let _ = write!(out, ".{fp}");
        }
    } else {
        out.push_str("0.");
        for _ in 0..(-int_len) {
            out.push('0');
        }
        out.push_str(digits.trim_end_matches('0'));
    }
    out
}

/// Least common multiple of the denominators of `values` (1 for an empty set).
pub fn lcm_of_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Binomial coefficient as an exact integer.
pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Serde adapter for a single rational stored as a JSON string.
pub mod serde_str {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(D::Error::custom)
    }
}

/// Serde adapter for a list of rationals stored as JSON strings.
pub mod serde_str_vec {
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format_rational(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        texts
            .iter()
            .map(|t| parse_rational(t).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_plain_and_fraction_forms() {
        assert_eq!(parse_rational("2/5").unwrap(), rat(2, 5));
        assert_eq!(parse_rational("4/10").unwrap(), rat(2, 5));
        assert_eq!(parse_rational("1").unwrap(), int(1));
        assert_eq!(parse_rational(" -3/6 ").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational("0").unwrap(), int(0));
    }

    #[test]
    fn rejects_malformed_text() {
        for bad in [
            "", "/", "1/", "/2", "1/0", "0.4", "1e3", "+1", "1/-2", "--1", "a/b", "1/2/3",
        ] {
            assert!(parse_rational(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(to_decimal(&rat(2, 5)), "0.4");
        assert_eq!(to_decimal(&rat(1, 3)), "0.33333333333333333");
        assert_eq!(to_decimal(&rat(2, 3)), "0.66666666666666667");
        assert_eq!(to_decimal(&rat(-4, 5)), "-0.8");
        assert_eq!(to_decimal(&int(12)), "12");
        assert_eq!(to_decimal(&rat(1, 1000)), "0.001");
        assert_eq!(to_decimal(&rat(123456789, 1)), "123456789");
        assert_eq!(
            to_decimal(&rat(99999999999999999, 10)),
            "9999999999999999.9"
        );
        assert_eq!(
            to_decimal(&rat(999999999999999999, 100)),
            "10000000000000000"
        );
        assert_eq!(to_decimal(&int(0)), "0");
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), BigInt::from(6));
        assert_eq!(binomial(5, 0), BigInt::from(1));
        assert_eq!(binomial(5, 5), BigInt::from(1));
        assert_eq!(binomial(3, 4), BigInt::from(0));
    }

    proptest! {
        #[test]
        fn text_form_round_trips(n in -10_000i64..10_000, d in 1i64..10_000) {
            let q = rat(n, d);
            prop_assert_eq!(parse_rational(&format_rational(&q)).unwrap(), q.clone());
            let dec: f64 = to_decimal(&q).parse().unwrap();
            prop_assert!((dec - to_f64(&q)).abs() <= 1e-12 * to_f64(&q).abs().max(1.0));
        }
    }
}
