//! Independent reference: decodes patterns straight from the field layout
//! into exact rationals and finds nearest values by exhaustive tables. Shares
//! nothing with the library beyond the `Format` descriptor.

#![allow(dead_code)]

use emac_core::formats::{Family, Format};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub fn pow2(e: i64) -> BigRational {
    let one = BigInt::one();
    if e >= 0 {
        BigRational::from_integer(one << e as usize)
    } else {
        BigRational::new(one.clone(), one << (-e) as usize)
    }
}

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn int(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Exact value of a pattern; `None` for NaR and reserved float exponents.
pub fn value(fmt: Format, bits: u64) -> Option<BigRational> {
    let n = fmt.n() as usize;
    match fmt.family() {
        Family::Posit => posit(n, fmt.param() as usize, bits),
        Family::Float => float(n, fmt.param() as usize, bits),
        Family::Fixed => {
            let raw = if bits >> (n - 1) & 1 == 1 {
                bits as i64 - (1i64 << n)
            } else {
                bits as i64
            };
            Some(int(raw) * pow2(-(fmt.param() as i64)))
        }
    }
}

fn posit(n: usize, es: usize, bits: u64) -> Option<BigRational> {
    if bits == 0 {
        return Some(BigRational::zero());
    }
    if bits == 1 << (n - 1) {
        return None;
    }
    let neg = bits >> (n - 1) & 1 == 1;
    let mask = (1u64 << n) - 1;
    let x = if neg { ((1u64 << n) - bits) & mask } else { bits };
    let body: Vec<u8> = (0..n - 1).rev().map(|i| (x >> i & 1) as u8).collect();
    let r0 = body[0];
    let m = body.iter().take_while(|&&b| b == r0).count();
    let k = if r0 == 1 { m as i64 - 1 } else { -(m as i64) };
    let rest = &body[(m + 1).min(body.len())..];
    let mut e = 0i64;
    for j in 0..es {
        e = 2 * e + rest.get(j).copied().unwrap_or(0) as i64;
    }
    let frac = &rest[es.min(rest.len())..];
    let mut f = BigInt::zero();
    for &b in frac {
        f = f * 2 + b;
    }
    let sig = BigRational::one() + BigRational::from_integer(f) * pow2(-(frac.len() as i64));
    let v = pow2(k * (1 << es) + e) * sig;
    Some(if neg { -v } else { v })
}

fn float(n: usize, we: usize, bits: u64) -> Option<BigRational> {
    let wf = n - 1 - we;
    let neg = bits >> (n - 1) & 1 == 1;
    let e = (bits >> wf) & ((1 << we) - 1);
    let f = bits & ((1 << wf) - 1);
    if e == (1 << we) - 1 {
        return None;
    }
    let bias = (1i64 << (we - 1)) - 1;
    let frac = int(f as i64) * pow2(-(wf as i64));
    let v = if e == 0 {
        pow2(1 - bias) * frac
    } else {
        pow2(e as i64 - bias) * (BigRational::one() + frac)
    };
    Some(if neg { -v } else { v })
}

/// The redundant float pattern with only the sign bit set.
pub fn is_negative_zero(fmt: Format, bits: u64) -> bool {
    fmt.family() == Family::Float && bits == 1 << (fmt.n() - 1)
}

pub struct Nearest {
    pub bits: u64,
    pub value: BigRational,
    pub saturated: bool,
    /// `x` sat exactly halfway between two neighbours.
    pub tie: bool,
}

/// Every distinct real value of a format, ascending.
pub struct Table {
    pub fmt: Format,
    pub values: Vec<(u64, BigRational)>,
    pub floats: Vec<f64>,
}

impl Table {
    pub fn new(fmt: Format) -> Self {
        let mut values: Vec<(u64, BigRational)> = (0..1u64 << fmt.n())
            .filter(|&b| !is_negative_zero(fmt, b))
            .filter_map(|b| value(fmt, b).map(|v| (b, v)))
            .collect();
        values.sort_by(|a, b| a.1.cmp(&b.1));
        let floats = values
            .iter()
            .map(|(_, v)| {
                let f = v.to_f64().unwrap();
                assert_eq!(&rat(f), v, "{fmt} value not exact in f64");
                f
            })
            .collect();
        Table { fmt, values, floats }
    }

    pub fn max(&self) -> &(u64, BigRational) {
        self.values.last().unwrap()
    }

    pub fn lowest(&self) -> &(u64, BigRational) {
        &self.values[0]
    }

    pub fn min_positive(&self) -> &(u64, BigRational) {
        self.values.iter().find(|(_, v)| v.is_positive()).unwrap()
    }

    pub fn zero_index(&self) -> usize {
        self.values.iter().position(|(_, v)| v.is_zero()).unwrap()
    }

    /// Round-to-nearest, ties to the even pattern, saturating at both ends;
    /// posits never round a nonzero value to zero.
    pub fn nearest(&self, x: &BigRational) -> Nearest {
        let (hi_b, hi_v) = self.max();
        let (lo_b, lo_v) = self.lowest();
        if x > hi_v {
            return Nearest { bits: *hi_b, value: hi_v.clone(), saturated: true, tie: false };
        }
        if x < lo_v {
            return Nearest { bits: *lo_b, value: lo_v.clone(), saturated: true, tie: false };
        }
        let i = self.values.partition_point(|(_, v)| v <= x);
        let (a_b, a_v) = &self.values[i - 1];
        let (mut bits, mut value, mut tie) = (*a_b, a_v.clone(), false);
        if a_v != x {
            let (b_b, b_v) = &self.values[i];
            let da = x - a_v;
            let db = b_v - x;
            if db < da || (db == da && b_b & 1 == 0) {
                bits = *b_b;
                value = b_v.clone();
            }
            tie = da == db;
        }
        if self.fmt.family() == Family::Posit && value.is_zero() && !x.is_zero() {
            let (b, v) = if x.is_positive() {
                self.min_positive().clone()
            } else {
                let p = self.values.iter().rev().find(|(_, v)| v.is_negative()).unwrap();
                p.clone()
            };
            bits = b;
            value = v;
        }
        Nearest { bits, value, saturated: false, tie }
    }
}

/// Every legal format of a family with width in `ns`.
pub fn formats(family: Family, ns: std::ops::RangeInclusive<u32>) -> Vec<Format> {
    let mut out = Vec::new();
    for n in ns {
        for p in 0..=n {
            if let Ok(f) = Format::new(family, n, p) {
                out.push(f);
            }
        }
    }
    out
}

/// Smallest `d` with `2^d >= r` for positive `r`.
pub fn ceil_log2(r: &BigRational) -> i64 {
    let mut d = 0i64;
    while &pow2(d) < r {
        d += 1;
    }
    while d > 0 && &pow2(d - 1) >= r {
        d -= 1;
    }
    d
}
