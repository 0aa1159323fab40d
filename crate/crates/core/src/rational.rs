//! Exact rational helpers shared by the analytic modules.

use std::str::FromStr;

use num::bigint::BigInt;
use num::traits::{One, Signed, ToPrimitive, Zero};
use num::BigRational;
use thiserror::Error;

/// Exact rational used for every analytic quantity.
pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {input:?} as a rational number")]
pub struct ParseRationalError {
    pub input: String,
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn from_usize(v: usize) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn from_u64(v: u64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Binomial coefficient as an exact rational.
pub fn binomial(n: usize, k: usize) -> Rational {
    if k > n {
        return Rational::zero();
    }
    Rational::from_integer(num::integer::binomial(BigInt::from(n), BigInt::from(k)))
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Parses `7`, `-3/4` or a plain decimal such as `0.125` exactly.
pub fn parse(input: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError {
        input: input.to_string(),
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if !whole_digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let digits = format!("{}{}", whole_digits, frac);
        let numer = BigInt::from_str(&digits).map_err(|_| err())?;
        let denom = num::pow(BigInt::from(10), frac.len());
        let q = Rational::new(numer, denom);
        return Ok(if negative { -q } else { q });
    }
    let q = Rational::from_str(s).map_err(|_| err())?;
    Ok(q)
}

/// `n/d` or `n`, the exact form written to CSV and text reports.
pub fn exact_string(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Decimal rendering with `sig` significant digits, round half away from
/// zero, trailing fractional zeros trimmed. Pure integer arithmetic, so the
/// output does not depend on platform float formatting or locale.
pub fn decimal_string(q: &Rational, sig: usize) -> String {
    assert!(sig >= 1);
    if q.is_zero() {
        return "0".to_string();
    }
    let negative = q.is_negative();
    let a = q.abs();
    let ten = BigInt::from(10);

    // exponent e with 10^e <= a < 10^(e+1)
    let mut e: i64 = a.numer().to_string().len() as i64 - a.denom().to_string().len() as i64;
    let pow10 = |k: i64| -> Rational {
        if k >= 0 {
            Rational::from_integer(num::pow(ten.clone(), k as usize))
        } else {
            Rational::new(BigInt::one(), num::pow(ten.clone(), (-k) as usize))
        }
    };
    while a < pow10(e) {
        e -= 1;
    }
    while a >= pow10(e + 1) {
        e += 1;
    }

    let shift = sig as i64 - 1 - e;
    let scaled = &a * pow10(shift) + ratio(1, 2);
    let mut n = scaled.floor().to_integer();
    if n >= num::pow(ten.clone(), sig) {
        n /= &ten;
        e += 1;
    }
    let digits = n.to_string();
    debug_assert_eq!(digits.len(), sig);

    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if e >= 0 {
        let int_len = e as usize + 1;
        if int_len >= sig {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', int_len - sig));
        } else {
            out.push_str(&digits[..int_len]);
            let frac = digits[int_len..].trim_end_matches('0');
            if !frac.is_empty() {
                out.push('.');
                out.push_str(frac);
            }
        }
    } else {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-e - 1) as usize));
        out.push_str(digits.trim_end_matches('0'));
    }
    out
}
