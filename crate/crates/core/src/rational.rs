//! Arbitrary-precision rational helpers shared by every module.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational number, always kept in lowest terms with a positive denominator.
pub type Rational = BigRational;

/// `n/d` as a [`Rational`]. Panics when `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Integer `n` as a [`Rational`].
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `x^e` for any integer exponent. Returns `None` for `0^e` with `e < 0`.
pub fn pow_i(x: &Rational, e: i32) -> Option<Rational> {
    if e < 0 {
        if x.is_zero() {
            return None;
        }
        return Some(pow_u(&x.recip(), e.unsigned_abs()));
    }
    Some(pow_u(x, e as u32))
}

fn pow_u(x: &Rational, mut e: u32) -> Rational {
    let mut base = x.clone();
    let mut acc = Rational::one();
    while e > 0 {
        if e & 1 == 1 {
            acc *= &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// n! as a rational.
pub fn factorial(n: u32) -> Rational {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= k;
    }
    Rational::from_integer(acc)
}

/// Double factorial with the convention (-1)!! = 0!! = 1!! = 1.
pub fn double_factorial(n: i64) -> Rational {
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    Rational::from_integer(acc)
}

/// Serializes as `"num/den"`, or `"num"` when the denominator is 1.
pub fn fmt_rat(x: &Rational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Parses `"a"`, `"a/b"` or a finite decimal such as `"-0.25"`.
pub fn parse_rat(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        if fp.is_empty() || !fp.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let neg = ip.trim_start().starts_with('-');
        let ip_abs = ip.trim().trim_start_matches(['-', '+']);
        let ip_val: BigInt = if ip_abs.is_empty() {
            BigInt::zero()
        } else {
            ip_abs.parse().ok()?
        };
        let scale = BigInt::from(10u32).pow(fp.len() as u32);
        let fp_val: BigInt = fp.parse().ok()?;
        let mag = Rational::new(ip_val * &scale + fp_val, scale);
        return Some(if neg { -mag } else { mag });
    }
    let n: BigInt = s.parse().ok()?;
    Some(Rational::from_integer(n))
}

/// Lossy conversion used only for float fallbacks and diagnostics.
pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        if x.is_negative() {
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
    fn double_factorial_values() {
        assert_eq!(double_factorial(-1), int(1));
        assert_eq!(double_factorial(1), int(1));
        assert_eq!(double_factorial(5), int(15));
        assert_eq!(double_factorial(6), int(48));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["0", "-3", "7/12", "-5/2"] {
            assert_eq!(fmt_rat(&parse_rat(s).unwrap()), s);
        }
        assert_eq!(parse_rat("0.25"), Some(rat(1, 4)));
        assert_eq!(parse_rat("-1.5"), Some(rat(-3, 2)));
        assert_eq!(parse_rat("4/0"), None);
        assert_eq!(parse_rat("x"), None);
    }

    #[test]
    fn negative_powers() {
        assert_eq!(pow_i(&rat(2, 3), -2), Some(rat(9, 4)));
        assert_eq!(pow_i(&int(0), -1), None);
        assert_eq!(pow_i(&int(0), 0), Some(int(1)));
    }
}
