//! Signed accumulator storage. Registers up to 128 bits live in an `i128`;
//! wider ones use little-endian two's complement limbs.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Register {
    Narrow(i128),
    Wide(Vec<u64>),
}

impl Register {
    pub(crate) fn new(width: u32) -> Self {
        if width <= 128 {
            Register::Narrow(0)
        } else {
            Register::Wide(vec![0; width.div_ceil(64) as usize + 1])
        }
    }

    pub(crate) fn clear(&mut self) {
        match self {
            Register::Narrow(v) => *v = 0,
            Register::Wide(limbs) => limbs.iter_mut().for_each(|l| *l = 0),
        }
    }

    /// Adds `(-1)^neg * mag * 2^shift`.
    #[inline]
    pub(crate) fn add_shifted(&mut self, neg: bool, mag: u128, shift: u32) {
        if mag == 0 {
            return;
        }
        match self {
            Register::Narrow(v) => {
                debug_assert!(shift < 128 && (mag << shift) >> shift == mag);
                let term = (mag << shift) as i128;
                *v = if neg { v.wrapping_sub(term) } else { v.wrapping_add(term) };
            }
            Register::Wide(limbs) => {
                let word = (shift / 64) as usize;
                let bit = shift % 64;
                // mag << bit spans at most three limbs
                let lo = mag << bit;
                let hi = if bit == 0 { 0 } else { mag >> (128 - bit) };
                let parts = [lo as u64, (lo >> 64) as u64, hi as u64];
                if neg {
                    sub_limbs(limbs, word, &parts);
                } else {
                    add_limbs(limbs, word, &parts);
                }
            }
        }
    }

    pub(crate) fn is_negative(&self) -> bool {
        match self {
            Register::Narrow(v) => *v < 0,
            Register::Wide(limbs) => limbs.last().is_some_and(|l| l >> 63 == 1),
        }
    }

    pub(crate) fn to_bigint(&self) -> BigInt {
        match self {
            Register::Narrow(v) => BigInt::from(*v),
            Register::Wide(limbs) => {
                if self.is_negative() {
                    let inv: Vec<u64> = limbs.iter().map(|l| !l).collect();
                    let mag = BigInt::from_biguint(Sign::Plus, BigUint::from_slice(&to_u32(&inv)));
                    -(mag + BigInt::from(1))
                } else {
                    BigInt::from_biguint(Sign::Plus, BigUint::from_slice(&to_u32(limbs)))
                }
            }
        }
    }

    /// Sign and magnitude of the current contents.
    pub(crate) fn sign_magnitude(&self) -> (bool, Magnitude) {
        match self {
            Register::Narrow(v) => (*v < 0, Magnitude::Small(v.unsigned_abs())),
            Register::Wide(_) => {
                let v = self.to_bigint();
                let neg = v.sign() == Sign::Minus;
                let mag = v.magnitude().clone();
                match mag.to_u128() {
                    Some(m) => (neg, Magnitude::Small(m)),
                    None => (neg, Magnitude::Big(mag)),
                }
            }
        }
    }

    /// True when the contents are representable as a `width`-bit signed integer.
    pub(crate) fn fits(&self, width: u32) -> bool {
        let v = self.to_bigint();
        let bound = BigInt::from(1) << (width - 1) as usize;
        v >= -bound.clone() && v < bound
    }

    /// Two's complement rendering over `width` bits.
    pub(crate) fn hex(&self, width: u32) -> String {
        let digits = width.div_ceil(4) as usize;
        let v = self.to_bigint();
        let modulus = BigInt::from(1) << width as usize;
        let u = if v.sign() == Sign::Minus { v + modulus } else { v };
        format!("{:0digits$x}", u)
    }
}

fn to_u32(limbs: &[u64]) -> Vec<u32> {
    limbs
        .iter()
        .flat_map(|&l| [l as u32, (l >> 32) as u32])
        .collect()
}

fn add_limbs(limbs: &mut [u64], start: usize, parts: &[u64; 3]) {
    let mut carry = 0u64;
    for (i, limb) in limbs.iter_mut().enumerate().skip(start) {
        let p = parts.get(i - start).copied().unwrap_or(0);
        if p == 0 && carry == 0 && i - start >= parts.len() {
            break;
        }
        let (s1, c1) = limb.overflowing_add(p);
        let (s2, c2) = s1.overflowing_add(carry);
        *limb = s2;
        carry = (c1 || c2) as u64;
    }
}

fn sub_limbs(limbs: &mut [u64], start: usize, parts: &[u64; 3]) {
    let mut borrow = 0u64;
    for (i, limb) in limbs.iter_mut().enumerate().skip(start) {
        let p = parts.get(i - start).copied().unwrap_or(0);
        if p == 0 && borrow == 0 && i - start >= parts.len() {
            break;
        }
        let (d1, b1) = limb.overflowing_sub(p);
        let (d2, b2) = d1.overflowing_sub(borrow);
        *limb = d2;
        borrow = (b1 || b2) as u64;
    }
}

/// Unsigned register magnitude with the bit queries the rounding stages need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Magnitude {
    Small(u128),
    Big(BigUint),
}

impl Magnitude {
    pub(crate) fn is_zero(&self) -> bool {
        match self {
            Magnitude::Small(m) => *m == 0,
            Magnitude::Big(m) => m.is_zero(),
        }
    }

    /// Number of significant bits; zero for zero.
    pub(crate) fn bit_len(&self) -> u64 {
        match self {
            Magnitude::Small(m) => 128 - m.leading_zeros() as u64,
            Magnitude::Big(m) => m.bits(),
        }
    }

    pub(crate) fn bit(&self, i: u64) -> bool {
        match self {
            Magnitude::Small(m) => i < 128 && (m >> i) & 1 == 1,
            Magnitude::Big(m) => m.bit(i),
        }
    }

    /// True when any bit strictly below position `i` is set.
    pub(crate) fn any_below(&self, i: u64) -> bool {
        match self {
            Magnitude::Small(m) => {
                if i >= 128 {
                    *m != 0
                } else {
                    m & ((1u128 << i) - 1) != 0
                }
            }
            Magnitude::Big(m) => m.trailing_zeros().is_some_and(|tz| tz < i),
        }
    }

    /// Bits at and above position `lo`, which must fit in 64 bits.
    pub(crate) fn shr(&self, lo: u64) -> u64 {
        match self {
            Magnitude::Small(m) => {
                if lo >= 128 {
                    0
                } else {
                    (m >> lo) as u64
                }
            }
            Magnitude::Big(m) => (m >> lo).to_u64().expect("window wider than 64 bits"),
        }
    }

    /// Compares against `2^a + 2^b`.
    pub(crate) fn cmp_pow2_sum(&self, a: u64, b: u64) -> std::cmp::Ordering {
        let target = (BigUint::from(1u8) << a) + (BigUint::from(1u8) << b);
        match self {
            Magnitude::Small(m) => BigUint::from(*m).cmp(&target),
            Magnitude::Big(m) => m.cmp(&target),
        }
    }

    /// Compares against an arbitrary bound.
    pub(crate) fn cmp_big(&self, bound: &BigUint) -> std::cmp::Ordering {
        match self {
            Magnitude::Small(m) => match bound.to_u128() {
                Some(b) => m.cmp(&b),
                None => std::cmp::Ordering::Less,
            },
            Magnitude::Big(m) => m.cmp(bound),
        }
    }
}
