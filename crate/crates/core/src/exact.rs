//! Exact dyadic rationals `m * 2^e`, the only numbers the datapaths ever
//! produce. Used by the exact quantizer and to report quire contents.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// `mant * 2^exp`, normalized so that `mant` is odd (or zero with `exp == 0`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic::default()
    }

    pub fn new(mant: impl Into<BigInt>, exp: i64) -> Self {
        let mut d = Dyadic {
            mant: mant.into(),
            exp,
        };
        d.normalize();
        d
    }

    pub fn pow2(exp: i64) -> Self {
        Dyadic {
            mant: BigInt::from(1),
            exp,
        }
    }

    /// Converts a finite double exactly.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value {x}")));
        }
        if x == 0.0 {
            return Ok(Dyadic::zero());
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (sig, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1 << 52), biased - 1075)
        };
        let m = BigInt::from(sig);
        Ok(Dyadic::new(if neg { -m } else { m }, exp))
    }

    fn normalize(&mut self) {
        if self.mant.is_zero() {
            self.exp = 0;
            return;
        }
        let tz = self.mant.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mant >>= tz;
            self.exp += tz as i64;
        }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mant
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mant.is_negative()
    }

    pub fn signum(&self) -> i32 {
        match self.mant.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn abs(&self) -> Self {
        Dyadic {
            mant: self.mant.abs(),
            exp: self.exp,
        }
    }

    /// Multiplies by `2^k`.
    pub fn scale(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        Dyadic {
            mant: self.mant.clone(),
            exp: self.exp + k,
        }
    }

    /// Double approximation, exact whenever the mantissa fits in 53 bits and
    /// the exponent is in range.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mant.bits() as i64;
        let drop = (bits - 64).max(0);
        let m = (&self.mant >> drop as usize).to_f64().unwrap_or(f64::NAN);
        let e = self.exp + drop;
        let e = e.clamp(-3000, 3000) as i32;
        if e < -1000 {
            m * 2f64.powi(-1000) * 2f64.powi(e + 1000)
        } else if e > 1000 {
            m * 2f64.powi(1000) * 2f64.powi(e - 1000)
        } else {
            m * 2f64.powi(e)
        }
    }

    /// Exact integer value of `self * 2^-exp` when that is integral.
    pub fn to_scaled_int(&self, exp: i64) -> Option<BigInt> {
        if self.is_zero() {
            return Some(BigInt::zero());
        }
        if self.exp < exp {
            return None;
        }
        Some(&self.mant << (self.exp - exp) as usize)
    }
}

fn align(a: &Dyadic, b: &Dyadic) -> (BigInt, BigInt, i64) {
    let e = a.exp.min(b.exp);
    (
        &a.mant << (a.exp - e) as usize,
        &b.mant << (b.exp - e) as usize,
        e,
    )
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let sa = self.signum();
        let sb = other.signum();
        if sa != sb || sa == 0 {
            return sa.cmp(&sb);
        }
        let (a, b, _) = align(self, other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let (a, b, e) = align(self, rhs);
        Dyadic::new(a + b, e)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        &self + &rhs
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        self + &(-rhs)
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic::new(&self.mant * &rhs.mant, self.exp + rhs.exp)
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic {
            mant: -&self.mant,
            exp: self.exp,
        }
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        -&self
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^{}", self.mant, self.exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_f64_exact() {
        let d = Dyadic::from_f64(0.375).unwrap();
        assert_eq!((d.mantissa().clone(), d.exponent()), (BigInt::from(3), -3));
        assert_eq!(d.to_f64(), 0.375);
        let tiny = Dyadic::from_f64(f64::from_bits(1)).unwrap();
        assert_eq!(tiny, Dyadic::pow2(-1074));
        assert_eq!(tiny.to_f64(), f64::from_bits(1));
        assert!(Dyadic::from_f64(f64::NAN).is_err());
    }

    #[test]
    fn arithmetic_and_order() {
        let a = Dyadic::from_f64(1.5).unwrap();
        let b = Dyadic::from_f64(-0.25).unwrap();
        assert_eq!((&a + &b).to_f64(), 1.25);
        assert_eq!((&a * &b).to_f64(), -0.375);
        assert_eq!((&a - &a), Dyadic::zero());
        assert!(b < Dyadic::zero() && Dyadic::zero() < a);
        assert!(Dyadic::pow2(-3) < Dyadic::pow2(-2));
        assert_eq!(Dyadic::pow2(240).to_f64(), 2f64.powi(240));
    }

    #[test]
    fn scaled_int() {
        let d = Dyadic::from_f64(0.75).unwrap();
        assert_eq!(d.to_scaled_int(-4), Some(BigInt::from(12)));
        assert_eq!(d.to_scaled_int(-1), None);
    }
}
