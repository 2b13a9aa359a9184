//! Number-format descriptors and bit-exact conversion between bit patterns and
//! real values.
//!
//! Three families are modelled, each parameterized by its total width `n`:
//!
//! * posit `(n, es)`: sign, run-length regime, up to `es` exponent bits and a
//!   fraction. `00..0` is zero and `10..0` is NaR ("not a real").
//! * float `(we, wf)`: sign, `we` exponent bits, `wf` fraction bits, with
//!   subnormals. The all-ones exponent is reserved; the largest normal biased
//!   exponent is `2^we - 2`. There are no infinities and no NaNs, so the
//!   reserved patterns decode to [`Value::NaR`].
//! * fixed `(n, q)`: two's complement integer scaled by `2^-q`.
//!
//! Every representable value of every valid format is exactly representable as
//! an `f64`, which is why [`value_of`] can return plain doubles.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest format accepted by any family.
pub const MAX_BITS: u32 = 32;
/// Narrowest format accepted by any family.
pub const MIN_BITS: u32 = 3;
/// Largest posit exponent-field width.
pub const MAX_POSIT_ES: u32 = 3;
/// Largest float exponent-field width. Wider exponents leave the `f64` range.
pub const MAX_FLOAT_WE: u32 = 11;
/// Largest width [`enumerate_values`] will walk.
pub const MAX_ENUMERATION_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Posit,
    Float,
    Fixed,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Posit, Family::Float, Family::Fixed];

    /// Name of the swept parameter (`es`, `we` or `q`).
    pub fn param_name(self) -> &'static str {
        match self {
            Family::Posit => "es",
            Family::Float => "we",
            Family::Fixed => "q",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Posit => "posit",
            Family::Float => "float",
            Family::Fixed => "fixed",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "posit" => Ok(Family::Posit),
            "float" => Ok(Family::Float),
            "fixed" => Ok(Family::Fixed),
            _ => Err(Error::Parse {
                what: "format family",
                input: s.to_string(),
            }),
        }
    }
}

/// A validated format descriptor.
///
/// `param` is `es` for posits, `we` for floats and `q` for fixed point; the
/// float fraction width is derived as `wf = n - 1 - we`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Format {
    family: Family,
    n: u32,
    param: u32,
}

impl Format {
    pub fn new(family: Family, n: u32, param: u32) -> Result<Self> {
        if !(MIN_BITS..=MAX_BITS).contains(&n) {
            return Err(Error::Constraint(format!(
                "{family} width {n} outside [{MIN_BITS}, {MAX_BITS}]"
            )));
        }
        match family {
            Family::Posit => {
                if param > MAX_POSIT_ES || param + 3 > n {
                    return Err(Error::Constraint(format!(
                        "posit es={param} needs es <= {MAX_POSIT_ES} and es <= n - 3 (n={n})"
                    )));
                }
            }
            Family::Float => {
                if !(2..=MAX_FLOAT_WE).contains(&param) || param + 2 > n {
                    return Err(Error::Constraint(format!(
                        "float we={param} needs 2 <= we <= {MAX_FLOAT_WE} and wf >= 1 (n={n})"
                    )));
                }
            }
            Family::Fixed => {
                if param >= n {
                    return Err(Error::Constraint(format!(
                        "fixed q={param} needs q <= n - 1 (n={n})"
                    )));
                }
            }
        }
        Ok(Format { family, n, param })
    }

    pub fn posit(n: u32, es: u32) -> Result<Self> {
        Self::new(Family::Posit, n, es)
    }

    /// Float with `we` exponent and `wf` fraction bits (`n = 1 + we + wf`).
    pub fn float(we: u32, wf: u32) -> Result<Self> {
        if wf == 0 {
            return Err(Error::Constraint("float needs wf >= 1".into()));
        }
        Self::new(Family::Float, 1 + we + wf, we)
    }

    pub fn fixed(n: u32, q: u32) -> Result<Self> {
        Self::new(Family::Fixed, n, q)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Total width in bits.
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn param(&self) -> u32 {
        self.param
    }

    pub fn es(&self) -> Option<u32> {
        (self.family == Family::Posit).then_some(self.param)
    }

    pub fn we(&self) -> Option<u32> {
        (self.family == Family::Float).then_some(self.param)
    }

    pub fn wf(&self) -> Option<u32> {
        (self.family == Family::Float).then(|| self.n - 1 - self.param)
    }

    pub fn q(&self) -> Option<u32> {
        (self.family == Family::Fixed).then_some(self.param)
    }

    pub fn mask(&self) -> u64 {
        low_mask(self.n)
    }

    /// `log2(min)`; the smallest nonzero magnitude is a power of two in every family.
    pub fn min_exponent(&self) -> i32 {
        match self.family {
            Family::Posit => -((self.n as i32 - 2) << self.param),
            Family::Float => {
                let (bias, _) = float_bias_expmax(self.param);
                1 - bias - (self.n - 1 - self.param) as i32
            }
            Family::Fixed => -(self.param as i32),
        }
    }

    /// `ceil(log2(max / min))`, computed in integers.
    pub fn dynamic_range_bits(&self) -> u32 {
        match self.family {
            Family::Posit => 2 * ((self.n - 2) << self.param),
            // max/min = (2^(wf+1) - 1) * 2^(exp_max - 1)
            Family::Float => {
                let (_, exp_max) = float_bias_expmax(self.param);
                exp_max as u32 + (self.n - 1 - self.param)
            }
            // max/min = 2^(n-1) - 1
            Family::Fixed => self.n - 1,
        }
    }

    pub fn characteristics(&self) -> Characteristics {
        characteristics(*self)
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Posit => write!(f, "posit{}es{}", self.n, self.param),
            Family::Float => write!(f, "float{}_e{}", self.n, self.param),
            Family::Fixed => write!(f, "fixed{}q{}", self.n, self.param),
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    /// Parses `posit<n>es<es>`, `float<n>_e<we>` or `fixed<n>q<q>`.
    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::Parse {
            what: "format descriptor",
            input: s.to_string(),
        };
        let t = s.trim().to_ascii_lowercase();
        let (family, rest, sep) = if let Some(r) = t.strip_prefix("posit") {
            (Family::Posit, r, "es")
        } else if let Some(r) = t.strip_prefix("float") {
            (Family::Float, r, "_e")
        } else if let Some(r) = t.strip_prefix("fixed") {
            (Family::Fixed, r, "q")
        } else {
            return Err(err());
        };
        let (n, p) = rest.split_once(sep).ok_or_else(err)?;
        let digits = |d: &str| -> Result<u32> {
            if d.is_empty() || !d.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            d.parse().map_err(|_| err())
        };
        Format::new(family, digits(n)?, digits(p)?)
    }
}

impl Serialize for Format {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Format {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Derived characteristics of a format. Family-specific fields are `None`
/// for the other families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Characteristics {
    /// Largest representable magnitude.
    pub max: f64,
    /// Smallest nonzero magnitude.
    pub min: f64,
    pub useed: Option<f64>,
    pub bias: Option<i32>,
    pub exp_max: Option<i32>,
}

fn float_bias_expmax(we: u32) -> (i32, i32) {
    ((1 << (we - 1)) - 1, (1 << we) - 2)
}

pub fn characteristics(fmt: Format) -> Characteristics {
    let n = fmt.n as i32;
    match fmt.family {
        Family::Posit => {
            let es = fmt.param;
            let scale = (n - 2) << es;
            Characteristics {
                max: pow2(scale),
                min: pow2(-scale),
                useed: Some(pow2(1 << es)),
                bias: None,
                exp_max: None,
            }
        }
        Family::Float => {
            let wf = fmt.n - 1 - fmt.param;
            let (bias, exp_max) = float_bias_expmax(fmt.param);
            let top = ((1u64 << (wf + 1)) - 1) as f64;
            Characteristics {
                max: top * pow2(exp_max - bias - wf as i32),
                min: pow2(1 - bias - wf as i32),
                useed: None,
                bias: Some(bias),
                exp_max: Some(exp_max),
            }
        }
        Family::Fixed => {
            let q = fmt.param as i32;
            Characteristics {
                max: ((1u64 << (n - 1)) - 1) as f64 * pow2(-q),
                min: pow2(-q),
                useed: None,
                bias: None,
                exp_max: None,
            }
        }
    }
}

/// A raw bit pattern tagged with its format. Bits above `n` are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitValue {
    fmt: Format,
    bits: u64,
}

impl BitValue {
    pub fn new(fmt: Format, bits: u64) -> Result<Self> {
        if bits & !fmt.mask() != 0 {
            return Err(Error::Constraint(format!(
                "bit pattern {bits:#x} wider than {} bits",
                fmt.n
            )));
        }
        Ok(BitValue { fmt, bits })
    }

    pub(crate) fn from_masked(fmt: Format, bits: u64) -> Self {
        BitValue {
            fmt,
            bits: bits & fmt.mask(),
        }
    }

    pub fn zero(fmt: Format) -> Self {
        BitValue { fmt, bits: 0 }
    }

    pub fn format(&self) -> Format {
        self.fmt
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn sign_bit(&self) -> bool {
        (self.bits >> (self.fmt.n - 1)) & 1 == 1
    }

    /// True when the pattern encodes a value below zero.
    pub fn is_negative(&self) -> bool {
        matches!(value_of(*self), Value::Real(v) if v < 0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(value_of(*self), Value::Zero)
    }

    /// Additive inverse as a bit pattern: two's complement for posit and
    /// fixed, sign flip for float. Zero maps to zero; the fixed-point minimum
    /// and the posit NaR map to themselves.
    pub fn negate(&self) -> BitValue {
        let bits = match self.fmt.family {
            Family::Posit | Family::Fixed => self.bits.wrapping_neg() & self.fmt.mask(),
            Family::Float => {
                if self.is_zero() {
                    0
                } else {
                    self.bits ^ (1 << (self.fmt.n - 1))
                }
            }
        };
        BitValue { fmt: self.fmt, bits }
    }

    pub fn value(&self) -> Value {
        value_of(*self)
    }

    /// The real value, or `None` for NaR / reserved patterns.
    pub fn to_f64(&self) -> Option<f64> {
        value_of(*self).to_f64()
    }

    /// Hex rendering padded to the format width.
    pub fn hex(&self) -> String {
        let digits = self.fmt.n.div_ceil(4) as usize;
        format!("0x{:0width$x}", self.bits, width = digits)
    }
}

impl fmt::Display for BitValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.fmt, self.hex())
    }
}

/// Result of interpreting a bit pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Zero,
    Real(f64),
    /// Posit NaR, or a float pattern with the reserved all-ones exponent.
    NaR,
}

impl Value {
    pub fn to_f64(self) -> Option<f64> {
        match self {
            Value::Zero => Some(0.0),
            Value::Real(v) => Some(v),
            Value::NaR => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PositClass {
    Zero,
    NaR,
    Normal,
}

/// Fields of a posit after data extraction.
///
/// `fraction` holds the fraction field left-aligned in `n - es - 3` bits, the
/// layout the decoder produces; the hidden bit is not included. For
/// [`PositClass::Zero`] and [`PositClass::NaR`] the other fields are
/// whatever the datapath produced and carry no meaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecodedPosit {
    pub class: PositClass,
    pub negative: bool,
    pub regime: i32,
    pub exponent: u32,
    pub fraction: u64,
}

impl DecodedPosit {
    pub fn zero() -> Self {
        DecodedPosit {
            class: PositClass::Zero,
            negative: false,
            regime: 0,
            exponent: 0,
            fraction: 0,
        }
    }

    pub fn nar() -> Self {
        DecodedPosit {
            class: PositClass::NaR,
            negative: true,
            regime: 0,
            exponent: 0,
            fraction: 0,
        }
    }

    pub fn normal(negative: bool, regime: i32, exponent: u32, fraction: u64) -> Self {
        DecodedPosit {
            class: PositClass::Normal,
            negative,
            regime,
            exponent,
            fraction,
        }
    }

    /// Scale factor `k * 2^es + e`.
    pub fn scale(&self, es: u32) -> i32 {
        (self.regime << es) + self.exponent as i32
    }

    /// Fraction with the hidden bit prepended: `1.f` as an integer over
    /// `2^(n - es - 3)`.
    pub fn significand(&self, fraction_bits: u32) -> u64 {
        (1u64 << fraction_bits) | self.fraction
    }
}

pub(crate) fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Leading-zeros detector over an `width`-bit word; returns `width` for zero.
pub fn lzd(word: u64, width: u32) -> u32 {
    debug_assert!(width <= 64 && word & !low_mask(width) == 0);
    if word == 0 {
        width
    } else {
        word.leading_zeros() - (64 - width)
    }
}

/// Width of the fraction field in the posit decoder output.
pub(crate) fn posit_fraction_bits(n: u32, es: u32) -> u32 {
    n - es - 3
}

/// Posit data extraction: two's complement, regime check, inversion, leading
/// zero count, regime shift-out, then exponent and fraction extraction.
pub fn posit_decode(v: BitValue) -> Result<DecodedPosit> {
    let fmt = v.fmt;
    let Some(es) = fmt.es() else {
        return Err(Error::InvalidInput(format!("{fmt} is not a posit format")));
    };
    Ok(posit_decode_fields(v.bits, fmt.n, es))
}

pub(crate) fn posit_decode_fields(input: u64, n: u32, es: u32) -> DecodedPosit {
    let body = low_mask(n - 1);
    let nzero = input != 0;
    let sign = (input >> (n - 1)) & 1 == 1;
    let sign_fill = if sign { body } else { 0 };
    let twos = ((sign_fill ^ (input & body)) + sign as u64) & body;
    let rc = (twos >> (n - 2)) & 1 == 1;
    let inv = (if rc { body } else { 0 }) ^ twos;
    let zc = lzd(inv, n - 1);
    // twos[n-4:0] << (zc - 1), kept at n-3 bits
    let tail_width = n - 3;
    let shift = zc - 1;
    let tmp = if shift >= tail_width {
        0
    } else {
        ((twos & low_mask(tail_width)) << shift) & low_mask(tail_width)
    };
    let fbits = posit_fraction_bits(n, es);
    let fraction = tmp & low_mask(fbits);
    let exponent = ((tmp >> fbits) & low_mask(es)) as u32;
    let regime = if rc { zc as i32 - 1 } else { -(zc as i32) };

    let class = if !nzero {
        PositClass::Zero
    } else if sign && twos == 0 {
        PositClass::NaR
    } else {
        PositClass::Normal
    };
    DecodedPosit {
        class,
        negative: sign,
        regime,
        exponent,
        fraction,
    }
}

/// Inverse of [`posit_decode`] for exactly representable fields.
pub fn encode_from_decoded(d: &DecodedPosit, fmt: Format) -> Result<BitValue> {
    let Some(es) = fmt.es() else {
        return Err(Error::InvalidInput(format!("{fmt} is not a posit format")));
    };
    let n = fmt.n;
    match d.class {
        PositClass::Zero => return Ok(BitValue::zero(fmt)),
        PositClass::NaR => return Ok(BitValue { fmt, bits: 1 << (n - 1) }),
        PositClass::Normal => {}
    }
    let limit = n as i32 - 2;
    if d.regime > limit || d.regime < -limit {
        return Err(Error::Range(format!(
            "regime {} outside [-{limit}, {limit}] for {fmt}",
            d.regime
        )));
    }
    if u64::from(d.exponent) > low_mask(es) {
        return Err(Error::Range(format!("exponent {} wider than es={es}", d.exponent)));
    }
    let fbits = posit_fraction_bits(n, es);
    if d.fraction > low_mask(fbits) {
        return Err(Error::Range(format!(
            "fraction {:#x} wider than {fbits} bits",
            d.fraction
        )));
    }

    // regime ++ exponent ++ fraction, then keep the top n-1 bits
    let (run, run_len) = if d.regime >= 0 {
        let ones = d.regime as u32 + 1;
        (low_mask(ones) << 1, ones + 1)
    } else {
        let zeros = (-d.regime) as u32;
        (1u64, zeros + 1)
    };
    let total = run_len + es + fbits;
    let mut string: u128 = u128::from(run);
    string = (string << es) | u128::from(d.exponent);
    string = (string << fbits) | u128::from(d.fraction);
    let dropped = total - (n - 1);
    if string & ((1u128 << dropped) - 1) != 0 {
        return Err(Error::Range(format!(
            "fields do not fit in {fmt}: {dropped} trailing bits would be lost"
        )));
    }
    let body = (string >> dropped) as u64;
    let bits = if d.negative {
        body.wrapping_neg() & fmt.mask()
    } else {
        body
    };
    Ok(BitValue { fmt, bits })
}

/// `2^e` for any exponent in the `f64` range, including subnormal powers.
pub(crate) fn pow2(e: i32) -> f64 {
    if e >= -1022 {
        assert!(e <= 1023, "2^{e} overflows f64");
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        assert!(e >= -1074, "2^{e} underflows f64");
        f64::from_bits(1u64 << (e + 1074))
    }
}

/// Integer significand and binary exponent of a pattern: `(negative, sig, exp)`
/// with value `(-1)^negative * sig * 2^exp`. `None` for zero and non-real patterns.
pub(crate) fn significand_exponent(v: BitValue) -> Option<(bool, u64, i32)> {
    let fmt = v.fmt;
    let n = fmt.n;
    match fmt.family {
        Family::Posit => {
            let es = fmt.param;
            let d = posit_decode_fields(v.bits, n, es);
            if d.class != PositClass::Normal {
                return None;
            }
            let fbits = posit_fraction_bits(n, es);
            Some((d.negative, d.significand(fbits), d.scale(es) - fbits as i32))
        }
        Family::Float => {
            let we = fmt.param;
            let wf = n - 1 - we;
            let (bias, _) = float_bias_expmax(we);
            let negative = v.sign_bit();
            let e = (v.bits >> wf) & low_mask(we);
            let m = v.bits & low_mask(wf);
            if e == low_mask(we) {
                return None;
            }
            if e == 0 {
                if m == 0 {
                    return None;
                }
                Some((negative, m, 1 - bias - wf as i32))
            } else {
                Some((negative, (1 << wf) | m, e as i32 - bias - wf as i32))
            }
        }
        Family::Fixed => {
            let raw = sign_extend(v.bits, n);
            if raw == 0 {
                return None;
            }
            Some((raw < 0, raw.unsigned_abs(), -(fmt.param as i32)))
        }
    }
}

pub(crate) fn sign_extend(bits: u64, n: u32) -> i64 {
    let shift = 64 - n;
    ((bits << shift) as i64) >> shift
}

/// Exact real value of a pattern.
pub fn value_of(v: BitValue) -> Value {
    if let Some((negative, sig, exp)) = significand_exponent(v) {
        let magnitude = sig as f64 * pow2(exp);
        return Value::Real(if negative { -magnitude } else { magnitude });
    }
    let fmt = v.fmt;
    let reserved = match fmt.family {
        Family::Posit => v.bits == 1 << (fmt.n - 1),
        Family::Float => {
            let wf = fmt.n - 1 - fmt.param;
            (v.bits >> wf) & low_mask(fmt.param) == low_mask(fmt.param)
        }
        Family::Fixed => false,
    };
    if reserved {
        Value::NaR
    } else {
        Value::Zero
    }
}

/// All finite values of a format, ascending, plus the patterns left out.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub values: Vec<(BitValue, f64)>,
    /// NaR, reserved float exponents, and the redundant float negative zero.
    pub excluded: Vec<BitValue>,
}

pub fn enumerate_values(fmt: Format) -> Result<Enumeration> {
    if fmt.n > MAX_ENUMERATION_BITS {
        return Err(Error::Capacity(format!(
            "enumeration limited to n <= {MAX_ENUMERATION_BITS}, got {fmt}"
        )));
    }
    let mut values = Vec::with_capacity(1 << fmt.n);
    let mut excluded = Vec::new();
    for bits in 0..(1u64 << fmt.n) {
        let v = BitValue { fmt, bits };
        match value_of(v) {
            Value::Real(x) => values.push((v, x)),
            Value::Zero if bits == 0 => values.push((v, 0.0)),
            Value::Zero | Value::NaR => excluded.push(v),
        }
    }
    values.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
    Ok(Enumeration { values, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posit(n: u32, es: u32, bits: u64) -> BitValue {
        BitValue::new(Format::posit(n, es).unwrap(), bits).unwrap()
    }

    #[test]
    fn descriptor_validation() {
        assert!(Format::posit(8, 0).is_ok());
        assert!(Format::posit(3, 0).is_ok());
        assert!(Format::posit(3, 1).is_err());
        assert!(Format::posit(8, 4).is_err());
        assert!(Format::posit(2, 0).is_err());
        assert!(Format::posit(33, 0).is_err());
        assert!(Format::float(1, 3).is_err());
        assert!(Format::float(4, 0).is_err());
        assert!(Format::float(12, 3).is_err());
        assert!(Format::fixed(8, 7).is_ok());
        assert!(Format::fixed(8, 8).is_err());
    }

    #[test]
    fn descriptor_strings() {
        for s in ["posit8es1", "float8_e4", "fixed8q5", "posit32es3", "fixed3q0"] {
            let f: Format = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!("float8_e4".parse::<Format>().unwrap().wf(), Some(3));
        for bad in ["posit8", "posit8es", "float8e4", "fixed8q", "int8q2", "posit8es-1", "fixed8q9"] {
            assert!(bad.parse::<Format>().is_err(), "{bad}");
        }
    }

    #[test]
    fn characteristics_examples() {
        let c = characteristics(Format::posit(8, 0).unwrap());
        assert_eq!(c.useed, Some(2.0));
        assert_eq!(c.max, 64.0);
        assert_eq!(c.min, 2f64.powi(-6));
        assert_eq!(c.max * c.min, 1.0);

        let c = characteristics(Format::float(4, 3).unwrap());
        assert_eq!(c.bias, Some(7));
        assert_eq!(c.exp_max, Some(14));
        assert_eq!(c.max, 240.0);
        assert_eq!(c.min, 2f64.powi(-9));

        let c = characteristics(Format::fixed(8, 0).unwrap());
        assert_eq!((c.max, c.min), (127.0, 1.0));
    }

    #[test]
    fn posit_reciprocal_extremes() {
        for n in MIN_BITS..=MAX_BITS {
            for es in 0..=MAX_POSIT_ES.min(n - 3) {
                let c = characteristics(Format::posit(n, es).unwrap());
                assert_eq!(c.max * c.min, 1.0, "posit{n}es{es}");
            }
        }
    }

    #[test]
    fn dynamic_range_bits_matches_f64_log() {
        for s in ["posit8es0", "posit8es2", "float8_e4", "float16_e5", "fixed8q4", "fixed16q3"] {
            let f: Format = s.parse().unwrap();
            let c = f.characteristics();
            assert_eq!(f.dynamic_range_bits(), (c.max / c.min).log2().ceil() as u32, "{s}");
            assert_eq!(pow2(f.min_exponent()), c.min);
        }
    }

    #[test]
    fn decode_specials() {
        let z = posit_decode(posit(8, 0, 0)).unwrap();
        assert_eq!(z.class, PositClass::Zero);
        let nar = posit_decode(posit(8, 0, 0x80)).unwrap();
        assert_eq!(nar.class, PositClass::NaR);
        assert_eq!(value_of(posit(8, 0, 0x80)), Value::NaR);
        assert_eq!(value_of(posit(8, 0, 0)), Value::Zero);
    }

    #[test]
    fn decode_one() {
        let d = posit_decode(posit(8, 0, 0b0100_0000)).unwrap();
        assert_eq!(d, DecodedPosit::normal(false, 0, 0, 0));
        assert_eq!(value_of(posit(8, 0, 0b0100_0000)), Value::Real(1.0));
    }

    #[test]
    fn decode_posit8es1_example() {
        // 0 | 110 | 0 | 010: k = 2, e = 0, 1.f = 1.5 -> 4^2 * 1.5
        let d = posit_decode(posit(8, 1, 0b0111_0010)).unwrap();
        assert_eq!(d.class, PositClass::Normal);
        assert!(!d.negative);
        assert_eq!((d.regime, d.exponent), (2, 0));
        assert_eq!(d.fraction, 0b1000);
        assert_eq!(value_of(posit(8, 1, 0b0111_0010)), Value::Real(24.0));
    }

    #[test]
    fn encode_examples() {
        let f80 = Format::posit(8, 0).unwrap();
        let one = encode_from_decoded(&DecodedPosit::normal(false, 0, 0, 0), f80).unwrap();
        assert_eq!(one.bits(), 0b0100_0000);
        assert_eq!(encode_from_decoded(&DecodedPosit::zero(), f80).unwrap().bits(), 0);
        let f81 = Format::posit(8, 1).unwrap();
        let v = encode_from_decoded(&DecodedPosit::normal(false, 2, 0, 0b1000), f81).unwrap();
        assert_eq!(v.bits(), 0b0111_0010);
    }

    #[test]
    fn encode_rejects_unrepresentable() {
        let f81 = Format::posit(8, 1).unwrap();
        // k = 5 leaves no room for the exponent bit
        assert!(encode_from_decoded(&DecodedPosit::normal(false, 5, 1, 0), f81).is_err());
        assert!(encode_from_decoded(&DecodedPosit::normal(false, 7, 0, 0), f81).is_err());
        assert!(encode_from_decoded(&DecodedPosit::normal(false, 0, 2, 0), f81).is_err());
        // k = 2 keeps 2 fraction bits of the 4-bit field
        assert!(encode_from_decoded(&DecodedPosit::normal(false, 2, 0, 0b0001), f81).is_err());
    }

    #[test]
    fn float_and_fixed_values() {
        let fx = Format::fixed(8, 5).unwrap();
        assert_eq!(value_of(BitValue::new(fx, 0b0010_0000).unwrap()), Value::Real(1.0));
        assert_eq!(value_of(BitValue::new(fx, 0x80).unwrap()), Value::Real(-4.0));

        let fl = Format::float(4, 3).unwrap();
        assert_eq!(value_of(BitValue::new(fl, 0b0_0000_001).unwrap()), Value::Real(2f64.powi(-9)));
        assert_eq!(value_of(BitValue::new(fl, 0b0_1110_111).unwrap()), Value::Real(240.0));
        assert_eq!(value_of(BitValue::new(fl, 0b1_0111_000).unwrap()), Value::Real(-1.0));
        assert_eq!(value_of(BitValue::new(fl, 0b0_1111_000).unwrap()), Value::NaR);
        assert_eq!(value_of(BitValue::new(fl, 0b1_0000_000).unwrap()), Value::Zero);
    }

    #[test]
    fn extreme_formats_stay_in_f64() {
        let c = characteristics(Format::posit(32, 3).unwrap());
        assert_eq!(c.max, 2f64.powi(240));
        let f = Format::float(11, 20).unwrap();
        let c = f.characteristics();
        assert_eq!(c.min, pow2(-1042));
        assert_eq!(value_of(BitValue::new(f, 1).unwrap()), Value::Real(pow2(-1042)));
    }

    #[test]
    fn enumeration_counts() {
        let e = enumerate_values(Format::posit(8, 0).unwrap()).unwrap();
        assert_eq!(e.values.len(), 255);
        assert_eq!(e.excluded.len(), 1);

        let e = enumerate_values(Format::posit(3, 0).unwrap()).unwrap();
        let vals: Vec<f64> = e.values.iter().map(|p| p.1).collect();
        assert_eq!(vals, vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]);

        let e = enumerate_values(Format::fixed(4, 2).unwrap()).unwrap();
        let vals: Vec<f64> = e.values.iter().map(|p| p.1).collect();
        let grid: Vec<f64> = (-8..8).map(|i| i as f64 * 0.25).collect();
        assert_eq!(vals, grid);

        // float8_e4: 256 patterns, minus -0, minus 16 reserved-exponent patterns
        let e = enumerate_values(Format::float(4, 3).unwrap()).unwrap();
        assert_eq!(e.values.len(), 256 - 1 - 16);

        assert!(enumerate_values(Format::posit(17, 1).unwrap()).is_err());
    }

    #[test]
    fn lzd_total() {
        assert_eq!(lzd(0, 7), 7);
        assert_eq!(lzd(1, 7), 6);
        assert_eq!(lzd(0b100_0000, 7), 0);
    }

    #[test]
    fn negate_patterns() {
        let fl = Format::float(4, 3).unwrap();
        let one = BitValue::new(fl, 0b0_0111_000).unwrap();
        assert_eq!(one.negate().to_f64(), Some(-1.0));
        assert_eq!(BitValue::zero(fl).negate().bits(), 0);
        let p = posit(8, 1, 0b0111_0010);
        assert_eq!(p.negate().to_f64(), Some(-24.0));
    }
}
