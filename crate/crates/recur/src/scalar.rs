//! Exact scalar arithmetic for orbit computation.
//!
//! Every number that flows through the orbit pipeline is an element of the
//! rationals or of a real quadratic field Q(sqrt(disc)), stored as
//! `rat + surd * sqrt(disc)` with big-rational coefficients.  Rational
//! systems (integer and rational beta, the Gauss map, the Cantor tripling
//! map) never leave the rationals; the golden-ratio beta system works in
//! Q(sqrt(5)).  Keeping the arithmetic exact means branch membership,
//! hit classification and cylinder geometry are decided by exact sign
//! tests, never by floating-point comparisons.
//!
//! Invariant: `surd == 0` implies `disc == 0`, and a nonzero `disc` is
//! never a perfect square, so equality of components is equality of values.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Exact {
    rat: BigRational,
    surd: BigRational,
    disc: u32,
}

fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl Exact {
    pub fn zero() -> Self {
        Exact { rat: BigRational::zero(), surd: BigRational::zero(), disc: 0 }
    }

    pub fn one() -> Self {
        Exact::from_int(1)
    }

    pub fn from_int(n: i64) -> Self {
        Exact { rat: big(n), surd: BigRational::zero(), disc: 0 }
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0);
        Exact { rat: BigRational::new(BigInt::from(num), BigInt::from(den)), surd: BigRational::zero(), disc: 0 }
    }

    pub fn from_big(r: BigRational) -> Self {
        Exact { rat: r, surd: BigRational::zero(), disc: 0 }
    }

    /// `(a + b*sqrt(disc))`.  `disc` must not be a perfect square.
    pub fn quadratic(a: BigRational, b: BigRational, disc: u32) -> Self {
        debug_assert!(disc > 1 && !is_square(disc), "disc must be a nonsquare > 1");
        let mut v = Exact { rat: a, surd: b, disc };
        v.normalize();
        v
    }

    /// The golden ratio (1 + sqrt(5)) / 2.
    pub fn golden() -> Self {
        Exact::quadratic(BigRational::new(1.into(), 2.into()), BigRational::new(1.into(), 2.into()), 5)
    }

    /// Exact value of a decimal literal such as "2.5" or "0.01".
    pub fn from_decimal_str(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.is_empty() {
            return None;
        }
        let (sign, body) = match s.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let num: BigInt = digits.parse().ok()?;
        let den = BigInt::from(10u32).pow(frac_part.len() as u32);
        Some(Exact::from_big(BigRational::new(num * sign, den)))
    }

    fn normalize(&mut self) {
        if self.surd.is_zero() {
            self.disc = 0;
        }
    }

    pub fn is_rational(&self) -> bool {
        self.surd.is_zero()
    }

    pub fn to_rational(&self) -> Option<&BigRational> {
        if self.surd.is_zero() {
            Some(&self.rat)
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rat.is_zero() && self.surd.is_zero()
    }

    fn join_disc(&self, other: &Exact) -> u32 {
        match (self.disc, other.disc) {
            (0, d) | (d, 0) => d,
            (a, b) => {
                assert!(a == b, "mixed quadratic fields: sqrt({a}) vs sqrt({b})");
                a
            }
        }
    }

    /// Sign of the value: the sign of `a + b*sqrt(d)` is decided exactly by
    /// comparing `a^2` with `b^2 d` when the two terms have opposite signs.
    pub fn signum(&self) -> Ordering {
        if self.surd.is_zero() {
            return self.rat.cmp(&BigRational::zero());
        }
        let a_sign = self.rat.cmp(&BigRational::zero());
        let b_sign = self.surd.cmp(&BigRational::zero());
        match (a_sign, b_sign) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (Ordering::Greater, Ordering::Greater) => Ordering::Greater,
            (Ordering::Less, Ordering::Less) => Ordering::Less,
            (a_s, _) => {
                let lhs = &self.rat * &self.rat;
                let rhs = &self.surd * &self.surd * big(self.disc as i64);
                // a > 0, b < 0: value > 0 iff a^2 > b^2 d.  Mirrored otherwise.
                match (a_s, lhs.cmp(&rhs)) {
                    (Ordering::Greater, c) => c,
                    (Ordering::Less, c) => c.reverse(),
                    _ => unreachable!(),
                }
            }
        }
    }

    pub fn abs(&self) -> Exact {
        if self.signum() == Ordering::Less {
            -self
        } else {
            self.clone()
        }
    }

    pub fn recip(&self) -> Exact {
        assert!(!self.is_zero(), "division by zero");
        if self.surd.is_zero() {
            return Exact::from_big(self.rat.recip());
        }
        // 1/(a + b sqrt(d)) = (a - b sqrt(d)) / (a^2 - b^2 d)
        let denom = &self.rat * &self.rat - &self.surd * &self.surd * big(self.disc as i64);
        debug_assert!(!denom.is_zero());
        Exact::quadratic(&self.rat / &denom, -(&self.surd / &denom), self.disc)
    }

    pub fn pow_i(&self, n: i32) -> Exact {
        if n < 0 {
            return self.recip().pow_i(-n);
        }
        let mut acc = Exact::one();
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn floor_int(&self) -> BigInt {
        if self.surd.is_zero() {
            return self.rat.floor().to_integer();
        }
        let mut k = BigInt::from(self.to_f64().floor() as i64);
        // exact fixup of the float guess
        while self < &Exact::from_big(BigRational::from_integer(k.clone())) {
            k -= 1;
        }
        loop {
            let next = Exact::from_big(BigRational::from_integer(&k + 1));
            if self >= &next {
                k += 1;
            } else {
                return k;
            }
        }
    }

    pub fn to_f64(&self) -> f64 {
        let mut v = ratio_to_f64(&self.rat);
        if !self.surd.is_zero() {
            v += ratio_to_f64(&self.surd) * (self.disc as f64).sqrt();
        }
        v
    }

}

fn is_square(n: u32) -> bool {
    let r = (n as f64).sqrt().round() as u32;
    r.saturating_mul(r) == n || (r + 1).saturating_mul(r + 1) == n
}

/// f64 value of a big rational without overflowing through the components.
/// The quotient is taken after shifting the numerator so it carries ~80
/// significant bits, then rescaled.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let num = r.numer();
    let den = r.denom();
    let sign = if (num.sign() == num_bigint::Sign::Minus) != (den.sign() == num_bigint::Sign::Minus) {
        -1.0
    } else {
        1.0
    };
    let a = num.magnitude();
    let b = den.magnitude();
    let shift = 80i64 - (a.bits() as i64 - b.bits() as i64);
    let q = if shift >= 0 {
        (a << shift as u64) / b
    } else {
        a / (b << (-shift) as u64)
    };
    let q = q.to_f64().unwrap_or(f64::MAX);
    sign * q * 2f64.powi(-shift as i32)
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.surd.is_zero() {
            write!(f, "{}", self.rat)
        } else {
            write!(f, "{} + {}*sqrt({})", self.rat, self.surd, self.disc)
        }
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl PartialOrd for Exact {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Exact {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).signum()
    }
}

impl Neg for &Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact { rat: -&self.rat, surd: -&self.surd, disc: self.disc }
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        -&self
    }
}

impl Add for &Exact {
    type Output = Exact;
    fn add(self, rhs: &Exact) -> Exact {
        let disc = self.join_disc(rhs);
        let mut v = Exact { rat: &self.rat + &rhs.rat, surd: &self.surd + &rhs.surd, disc };
        v.normalize();
        v
    }
}

impl Sub for &Exact {
    type Output = Exact;
    fn sub(self, rhs: &Exact) -> Exact {
        self + &(-rhs)
    }
}

impl Mul for &Exact {
    type Output = Exact;
    fn mul(self, rhs: &Exact) -> Exact {
        let disc = self.join_disc(rhs);
        let d = big(disc as i64);
        let rat = &self.rat * &rhs.rat + &self.surd * &rhs.surd * &d;
        let surd = &self.rat * &rhs.surd + &self.surd * &rhs.rat;
        let mut v = Exact { rat, surd, disc };
        v.normalize();
        v
    }
}

impl Div for &Exact {
    type Output = Exact;
    fn div(self, rhs: &Exact) -> Exact {
        self * &rhs.recip()
    }
}

macro_rules! forward_owned {
    ($($trait:ident :: $method:ident),*) => {$(
        impl $trait for Exact {
            type Output = Exact;
            fn $method(self, rhs: Exact) -> Exact {
                $trait::$method(&self, &rhs)
            }
        }
        impl $trait<&Exact> for Exact {
            type Output = Exact;
            fn $method(self, rhs: &Exact) -> Exact {
                $trait::$method(&self, rhs)
            }
        }
        impl $trait<Exact> for &Exact {
            type Output = Exact;
            fn $method(self, rhs: Exact) -> Exact {
                $trait::$method(self, &rhs)
            }
        }
    )*};
}

forward_owned!(Add::add, Sub::sub, Mul::mul, Div::div);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_ratio_satisfies_its_equation() {
        let phi = Exact::golden();
        let lhs = &phi * &phi;
        let rhs = &phi + &Exact::one();
        assert_eq!(lhs, rhs);
        assert!((phi.to_f64() - 1.618033988749895).abs() < 1e-15);
    }

    #[test]
    fn sign_of_mixed_terms() {
        // 7/5 - (3/5) sqrt(5) < 0 because 49/25 < 45/25 is false -> check: (7/5)^2=1.96, (3/5)^2*5=1.8 -> positive
        let v = Exact::quadratic(BigRational::new(7.into(), 5.into()), BigRational::new((-3).into(), 5.into()), 5);
        assert_eq!(v.signum(), Ordering::Greater);
        // 2 - sqrt(5) < 0
        let w = Exact::quadratic(big(2), big(-1), 5);
        assert_eq!(w.signum(), Ordering::Less);
    }

    #[test]
    fn floor_of_quadratic_values() {
        let phi = Exact::golden();
        assert_eq!(phi.floor_int(), BigInt::from(1));
        assert_eq!((&phi * &phi).floor_int(), BigInt::from(2));
        assert_eq!((-&phi).floor_int(), BigInt::from(-2));
        assert_eq!(phi.recip().floor_int(), BigInt::from(0));
    }

    #[test]
    fn recip_and_division() {
        let phi = Exact::golden();
        // 1/phi = phi - 1
        assert_eq!(phi.recip(), &phi - &Exact::one());
        let r = Exact::from_ratio(7, 3);
        assert_eq!(r.recip(), Exact::from_ratio(3, 7));
        assert_eq!(&r / &r, Exact::one());
    }

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(Exact::from_decimal_str("2.5").unwrap(), Exact::from_ratio(5, 2));
        assert_eq!(Exact::from_decimal_str("0.01").unwrap(), Exact::from_ratio(1, 100));
        assert_eq!(Exact::from_decimal_str("-1.25").unwrap(), Exact::from_ratio(-5, 4));
        assert_eq!(Exact::from_decimal_str("3").unwrap(), Exact::from_int(3));
        assert!(Exact::from_decimal_str("abc").is_none());
        assert!(Exact::from_decimal_str("").is_none());
    }

    #[test]
    fn ratio_to_f64_handles_huge_components() {
        let big_num = BigInt::from(3u32).pow(800);
        let big_den = BigInt::from(2u32).pow(1267);
        let r = BigRational::new(big_num, big_den);
        // 3^800 / 2^1267 = exp(800 ln3 - 1267 ln2) ~ exp(0.624) ~ 1.866
        let v = ratio_to_f64(&r);
        assert!((v - (800.0 * 3f64.ln() - 1267.0 * 2f64.ln()).exp()).abs() < 1e-9);
    }

    #[test]
    fn ordering_is_total_and_exact() {
        let phi = Exact::golden();
        let close = Exact::from_decimal_str("1.618033988749894848204586834365638").unwrap();
        // the decimal truncation is strictly below phi
        assert!(close < phi);
        assert!(phi < Exact::from_decimal_str("1.618033988749894848204586834365639").unwrap());
    }

    #[test]
    fn pow_i_with_negative_exponents() {
        let phi = Exact::golden();
        let p5 = phi.pow_i(5);
        assert!((p5.to_f64() - 11.090169943749474).abs() < 1e-12);
        assert_eq!(&p5 * &phi.pow_i(-5), Exact::one());
    }
}
