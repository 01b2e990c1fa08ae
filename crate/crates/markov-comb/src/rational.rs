//! Exact rational scalars and their text forms.
//!
//! Every concrete quantity in this crate is a [`Rat`]: an arbitrary-precision
//! rational kept in lowest terms with a positive denominator. The helpers
//! here cover the textual conventions used across the JSON formats and the
//! command line: `"3/4"`-style fractions, exact decimal literals, fixed
//! precision decimal rendering, and continued-fraction snapping of floats.

use num::bigint::{BigInt, Sign};
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number: arbitrary precision, lowest terms, positive denominator.
pub type Rat = BigRational;

/// Shorthand for a small rational, mostly used in tests and examples.
///
/// # Panics
/// Panics when `den == 0`.
///
/// ```
/// use markov_comb::rational::rat;
/// assert_eq!(rat(2, 8), rat(1, 4));
/// ```
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Shorthand for an integer as a rational.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Error raised when a rational literal cannot be parsed.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseRatError {
    /// The text is not of the form `a`, `a/b`, or `a.b`.
    #[error("malformed rational literal {0:?}")]
    Malformed(String),
    /// The denominator of an `a/b` literal is zero.
    #[error("zero denominator in rational literal {0:?}")]
    ZeroDenominator(String),
}

/// Parses a rational literal.
///
/// Accepted forms: an integer `"-3"`, a fraction `"3/4"`, or an exact decimal
/// `"0.125"`. Decimals are read exactly (`"0.1"` is one tenth, not a float).
///
/// ```
/// use markov_comb::rational::{parse_rat, rat};
/// assert_eq!(parse_rat("3/4").unwrap(), rat(3, 4));
/// assert_eq!(parse_rat("0.125").unwrap(), rat(1, 8));
/// assert_eq!(parse_rat("-2").unwrap(), rat(-2, 1));
/// ```
pub fn parse_rat(text: &str) -> Result<Rat, ParseRatError> {
    let s = text.trim();
    let malformed = || ParseRatError::Malformed(text.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| malformed())?;
        let d: BigInt = den.trim().parse().map_err(|_| malformed())?;
        if d.is_zero() {
            return Err(ParseRatError::ZeroDenominator(text.to_string()));
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let (sign, int_digits) = match int_part.trim() {
            t if t.starts_with('-') => (-1, &t[1..]),
            t if t.starts_with('+') => (1, &t[1..]),
            t => (1, t),
        };
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        if !int_digits.is_empty() && !int_digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let int_val: BigInt = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            int_digits.parse().map_err(|_| malformed())?
        };
        let frac_val: BigInt = frac_part.parse().map_err(|_| malformed())?;
        let scale = BigInt::from(10u8).pow(frac_part.len() as u32);
        let unsigned = Rat::from_integer(int_val) + Rat::new(frac_val, scale);
        return Ok(if sign < 0 { -unsigned } else { unsigned });
    }
    let n: BigInt = s.parse().map_err(|_| malformed())?;
    Ok(Rat::from_integer(n))
}

/// Renders a rational canonically: `"a"` when the denominator is one, else `"a/b"`.
///
/// ```
/// use markov_comb::rational::{format_rat, rat};
/// assert_eq!(format_rat(&rat(3, 4)), "3/4");
/// assert_eq!(format_rat(&rat(8, 4)), "2");
/// ```
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Renders a rational as a decimal with `digits` places after the point,
/// rounding half away from zero and trimming trailing zeros.
///
/// ```
/// use markov_comb::rational::{format_decimal, rat};
/// assert_eq!(format_decimal(&rat(1, 8), 12), "0.125");
/// assert_eq!(format_decimal(&rat(1, 3), 6), "0.333333");
/// assert_eq!(format_decimal(&rat(-1, 2), 3), "-0.5");
/// ```
pub fn format_decimal(r: &Rat, digits: usize) -> String {
    let neg = r.is_negative();
    let abs = r.abs();
    let scale = BigInt::from(10u8).pow(digits as u32);
    let scaled = (abs * Rat::from_integer(scale.clone()) + rat(1, 2)).floor();
    let scaled = scaled.to_integer();
    let int_part = &scaled / &scale;
    let frac_part = &scaled % &scale;
    let mut out = String::new();
    if neg && (!int_part.is_zero() || !frac_part.is_zero()) {
        out.push('-');
    }
    out.push_str(&int_part.to_string());
    if !frac_part.is_zero() {
        let mut frac = format!("{:0width$}", frac_part, width = digits);
        while frac.ends_with('0') {
            frac.pop();
        }
        out.push('.');
        out.push_str(&frac);
    }
    out
}

/// Converts a finite float to the exact rational it represents.
pub fn rat_from_f64(x: f64) -> Option<Rat> {
    Rat::from_float(x)
}

/// Best rational approximation of `x` with denominator at most `max_den`,
/// via continued-fraction convergents and semiconvergents. Returns the
/// snapped value together with the absolute snap error.
///
/// ```
/// use markov_comb::rational::{snap_to_rational, rat};
/// let (v, err) = snap_to_rational(0.333333333333, 1_000_000_000_000).unwrap();
/// assert_eq!(v, rat(1, 3));
/// assert!(err < rat(1, 1_000_000_000));
/// ```
pub fn snap_to_rational(x: f64, max_den: u64) -> Option<(Rat, Rat)> {
    let exact = rat_from_f64(x)?;
    let snapped = best_approximation(&exact, &BigInt::from(max_den));
    let err = (&exact - &snapped).abs();
    Some((snapped, err))
}

/// Best rational approximation of an exact rational with a denominator bound.
pub fn best_approximation(x: &Rat, max_den: &BigInt) -> Rat {
    if x.denom() <= max_den {
        return x.clone();
    }
    // Convergents p/q of the continued fraction of x.
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let mut a0 = x.floor().to_integer();
    let (mut p_cur, mut q_cur) = (a0.clone(), BigInt::one());
    let mut frac = x - Rat::from_integer(a0.clone());
    while !frac.is_zero() {
        let inv = frac.recip();
        a0 = inv.floor().to_integer();
        frac = inv - Rat::from_integer(a0.clone());
        let p_next = &a0 * &p_cur + &p_prev;
        let q_next = &a0 * &q_cur + &q_prev;
        if &q_next > max_den {
            // Best semiconvergent that still fits the bound.
            let t = (max_den - &q_prev) / &q_cur;
            let semi_p = &t * &p_cur + &p_prev;
            let semi_q = &t * &q_cur + &q_prev;
            let semi = Rat::new(semi_p, semi_q.clone());
            let cur = Rat::new(p_cur.clone(), q_cur.clone());
            if semi_q.is_zero() || (x - &cur).abs() <= (x - &semi).abs() {
                return cur;
            }
            return semi;
        }
        p_prev = std::mem::replace(&mut p_cur, p_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
    }
    Rat::new(p_cur, q_cur)
}

/// Integer power with negative exponents allowed.
///
/// # Panics
/// Panics when raising zero to a negative power.
pub fn pow_int(r: &Rat, e: i64) -> Rat {
    if e == 0 {
        return Rat::one();
    }
    let mag = e.unsigned_abs();
    let mut acc = Rat::one();
    let mut base = r.clone();
    let mut left = mag;
    while left > 0 {
        if left & 1 == 1 {
            acc *= &base;
        }
        base = &base * &base;
        left >>= 1;
    }
    if e < 0 {
        acc.recip()
    } else {
        acc
    }
}

/// Converts to `f64`, saturating on overflow.
pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.numer().sign() == Sign::Minus {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rat("7").unwrap(), rat_int(7));
        assert_eq!(parse_rat(" 3/9 ").unwrap(), rat(1, 3));
        assert_eq!(parse_rat("-1/2").unwrap(), rat(-1, 2));
        assert_eq!(parse_rat("1/-2").unwrap(), rat(-1, 2));
        assert_eq!(parse_rat(".5").unwrap(), rat(1, 2));
        assert_eq!(parse_rat("-0.25").unwrap(), rat(-1, 4));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("a/b").is_err());
        assert!(parse_rat("1.2.3").is_err());
        assert!(parse_rat("").is_err());
    }

    #[test]
    fn format_canonical() {
        assert_eq!(format_rat(&rat(0, 5)), "0");
        assert_eq!(format_rat(&rat(-6, 4)), "-3/2");
        for (n, d) in [(3, 4), (-7, 13), (22, 7)] {
            let r = rat(n, d);
            assert_eq!(parse_rat(&format_rat(&r)).unwrap(), r);
        }
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(format_decimal(&rat_int(2), 12), "2");
        assert_eq!(format_decimal(&rat(2, 3), 4), "0.6667");
        assert_eq!(format_decimal(&rat(1, 1000), 2), "0");
    }

    #[test]
    fn snapping_recovers_simple_fractions() {
        let (v, _) = snap_to_rational(0.125, 1_000_000_000_000).unwrap();
        assert_eq!(v, rat(1, 8));
        let (v, err) = snap_to_rational(std::f64::consts::PI, 100).unwrap();
        assert_eq!(v, rat(311, 99));
        assert!(err < rat(1, 5_000));
        // And the next-best candidate with a small denominator is worse.
        let off = (rat_from_f64(std::f64::consts::PI).unwrap() - rat(22, 7)).abs();
        assert!(err < off);
    }

    #[test]
    fn integer_powers() {
        assert_eq!(pow_int(&rat(2, 3), 3), rat(8, 27));
        assert_eq!(pow_int(&rat(2, 3), -2), rat(9, 4));
        assert_eq!(pow_int(&rat(5, 7), 0), rat_int(1));
    }
}
