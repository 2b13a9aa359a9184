//! Exact multiply-and-accumulate units.
//!
//! Every product is added without rounding to a wide two's complement
//! register (the quire) and a single rounding happens in [`QuireAccumulator::finalize`].
//! The register width follows
//!
//! ```text
//! w_a = ceil(log2 k) + 2 * ceil(log2(max / min)) + 2
//! ```
//!
//! and its least significant bit weighs `min^2`, the smallest nonzero product
//! magnitude, for all three families. With that scale:
//!
//! * fixed: the raw integer product lands at bit 0;
//! * float: the product of the hidden-bit mantissas is shifted left by
//!   `e_p - 3`, where `e_p = e_w + e_a + 1` on the effective (subnormal
//!   adjusted) exponents, so the smallest possible product sits at bit 0;
//! * posit: the fraction product is shifted by its biased scale factor,
//!   with `bias = 2 * (n - 2) * 2^es`, the magnitude of the smallest product
//!   scale.
//!
//! # Trace format
//!
//! With tracing enabled every accumulation appends one line:
//!
//! ```text
//! <index> w=<weight hex> a=<activation hex> q=<register hex>
//! <index> b=<bias hex> q=<register hex>
//! ```
//!
//! `index` counts from 0, operand patterns are padded to the format width and
//! the register is printed as `w_a`-bit two's complement. Operands that were
//! pre-decoded print as `-`.

mod register;

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};

use crate::error::{Error, Result};
use crate::exact::Dyadic;
use crate::formats::{
    low_mask, posit_decode_fields, posit_fraction_bits, sign_extend, BitValue, Family, Format,
    PositClass,
};
use register::{Magnitude, Register};

/// Accumulator width for `k` products in `fmt`.
pub fn quire_width(fmt: Format, k: u64) -> Result<u32> {
    if k == 0 {
        return Err(Error::Constraint("quire capacity must be at least 1".into()));
    }
    Ok(ceil_log2(k) + 2 * fmt.dynamic_range_bits() + 2)
}

fn ceil_log2(k: u64) -> u32 {
    if k <= 1 {
        0
    } else {
        64 - (k - 1).leading_zeros()
    }
}

/// Output of [`QuireAccumulator::finalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmacResult {
    pub out: BitValue,
    /// The exact sum lay strictly outside the representable range.
    pub saturated: bool,
    /// The result magnitude exceeds the exact magnitude.
    pub rounded_up: bool,
}

/// A decoded operand: `(-1)^neg * sig * 2^(min_exponent + offset)`.
///
/// Decoding once and reusing the operand across many accumulations is what
/// the inference path does with weights. `sig == 0` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Operand {
    pub neg: bool,
    pub sig: u64,
    pub offset: u32,
}

impl Operand {
    pub const ZERO: Operand = Operand {
        neg: false,
        sig: 0,
        offset: 0,
    };

    /// Decodes a pattern. NaR and reserved float patterns are rejected.
    pub fn decode(v: BitValue) -> Result<Operand> {
        let fmt = v.format();
        let min_exp = fmt.min_exponent();
        match crate::formats::significand_exponent(v) {
            Some((neg, sig, exp)) => {
                // posit significands keep the full fraction width even where
                // the regime has pushed fraction bits out; those bits are zero
                let (sig, exp) = if exp < min_exp {
                    let drop = (min_exp - exp) as u32;
                    debug_assert_eq!(sig & low_mask(drop), 0);
                    (sig >> drop, min_exp)
                } else {
                    (sig, exp)
                };
                Ok(Operand {
                    neg,
                    sig,
                    offset: (exp - min_exp) as u32,
                })
            }
            None if v.is_zero() => Ok(Operand::ZERO),
            None => Err(Error::InvalidOperand(format!("{v} is not a real value"))),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sig == 0
    }
}

/// Wide exact accumulator for one format.
#[derive(Debug, Clone)]
pub struct QuireAccumulator {
    fmt: Format,
    k_capacity: u64,
    width: u32,
    count: u64,
    register: Register,
    /// `-log2(min)`: shifting a single operand by this many bits expresses it
    /// in register units.
    unit_shift: u32,
    /// Largest representable value, in register units.
    max_units: BigUint,
    /// Magnitude of the most negative representable value, in register units.
    lowest_units: BigUint,
    trace: Option<Vec<String>>,
}

impl QuireAccumulator {
    pub fn new(fmt: Format, k_capacity: u64) -> Result<Self> {
        let width = quire_width(fmt, k_capacity)?;
        let unit_shift = (-fmt.min_exponent()) as u32;
        let (max_units, lowest_units) = range_units(fmt, unit_shift);
        Ok(QuireAccumulator {
            fmt,
            k_capacity,
            width,
            count: 0,
            register: Register::new(width),
            unit_shift,
            max_units,
            lowest_units,
            trace: None,
        })
    }

    pub fn format(&self) -> Format {
        self.fmt
    }

    pub fn capacity(&self) -> u64 {
        self.k_capacity
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Starts recording trace lines (clears any previous trace).
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[String]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<String>> {
        self.trace.take()
    }

    /// Zeroes the register and the product count, keeping trace settings.
    pub fn reset(&mut self) {
        self.register.clear();
        self.count = 0;
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
    }

    /// Register contents as a signed integer in units of `min^2`.
    pub fn register_value(&self) -> BigInt {
        self.register.to_bigint()
    }

    pub fn register_hex(&self) -> String {
        self.register.hex(self.width)
    }

    /// The exact sum accumulated so far.
    pub fn exact_value(&self) -> Dyadic {
        Dyadic::new(self.register.to_bigint(), 2 * self.fmt.min_exponent() as i64)
    }

    fn reserve(&mut self) -> Result<()> {
        if self.count >= self.k_capacity {
            return Err(Error::Capacity(format!(
                "quire for {} holds {} products",
                self.fmt, self.k_capacity
            )));
        }
        self.count += 1;
        Ok(())
    }

    fn check_format(&self, v: &BitValue) -> Result<()> {
        if v.format() != self.fmt {
            return Err(Error::FormatMismatch {
                expected: self.fmt,
                found: v.format(),
            });
        }
        Ok(())
    }

    #[inline]
    fn add(&mut self, neg: bool, mag: u128, shift: u32) {
        self.register.add_shifted(neg, mag, shift);
        debug_assert!(
            matches!(self.register, Register::Narrow(_)) || self.register.fits(self.width),
            "quire wrapped"
        );
        #[cfg(debug_assertions)]
        if let Register::Narrow(v) = self.register {
            if self.width < 128 {
                let bound = 1i128 << (self.width - 1);
                assert!((-bound..bound).contains(&v), "quire wrapped");
            }
        }
    }

    /// Multiplies two patterns exactly and adds the product to the register.
    pub fn accumulate(&mut self, weight: BitValue, activation: BitValue) -> Result<()> {
        self.check_format(&weight)?;
        self.check_format(&activation)?;
        let (neg, mag, shift) = match self.fmt.family() {
            Family::Fixed => fixed_product(self.fmt, weight, activation),
            Family::Float => float_product(self.fmt, weight, activation)?,
            Family::Posit => posit_product(self.fmt, weight, activation)?,
        };
        self.reserve()?;
        self.add(neg, mag, shift);
        if self.trace.is_some() {
            let line = format!(
                "{} w={} a={} q={}",
                self.count - 1,
                weight.hex(),
                activation.hex(),
                self.register_hex()
            );
            self.trace.as_mut().unwrap().push(line);
        }
        Ok(())
    }

    /// Same as [`accumulate`](Self::accumulate) for operands decoded ahead of time.
    #[inline]
    pub fn accumulate_prepared(&mut self, weight: &Operand, activation: &Operand) -> Result<()> {
        self.reserve()?;
        self.add_prepared(weight, activation);
        self.trace_prepared("w=- a=-");
        Ok(())
    }

    #[inline]
    fn add_prepared(&mut self, w: &Operand, a: &Operand) {
        let prod = w.sig as u128 * a.sig as u128;
        self.add(w.neg != a.neg, prod, w.offset + a.offset);
    }

    fn trace_prepared(&mut self, what: &str) {
        if self.trace.is_some() {
            let line = format!("{} {what} q={}", self.count - 1, self.register_hex());
            self.trace.as_mut().unwrap().push(line);
        }
    }

    /// Accumulates a whole dot product of pre-decoded operands. Counts one
    /// product per pair.
    pub fn accumulate_dot(&mut self, weights: &[Operand], activations: &[Operand]) -> Result<()> {
        if weights.len() != activations.len() {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: activations.len(),
            });
        }
        let n = weights.len() as u64;
        if self.count + n > self.k_capacity {
            return Err(Error::Capacity(format!(
                "quire for {} holds {} products",
                self.fmt, self.k_capacity
            )));
        }
        if self.trace.is_some() {
            for (w, a) in weights.iter().zip(activations) {
                self.accumulate_prepared(w, a)?;
            }
            return Ok(());
        }
        self.count += n;
        if let Register::Narrow(ref mut reg) = self.register {
            // Capacity bounds every partial sum, so plain i128 arithmetic
            // cannot overflow here.
            let mut acc = *reg;
            for (w, a) in weights.iter().zip(activations) {
                if a.sig == 0 || w.sig == 0 {
                    continue;
                }
                let term = ((w.sig as u128 * a.sig as u128) << (w.offset + a.offset)) as i128;
                acc = if w.neg != a.neg { acc - term } else { acc + term };
            }
            *reg = acc;
            if self.width < 128 {
                debug_assert!((acc.unsigned_abs()) <= 1u128 << (self.width - 1), "quire wrapped");
            }
        } else {
            for (w, a) in weights.iter().zip(activations) {
                self.add_prepared(w, a);
            }
        }
        Ok(())
    }

    /// Adds `bias * 1` as one product, the way neurons fold in their bias.
    pub fn accumulate_bias(&mut self, bias: &Operand) -> Result<()> {
        self.reserve()?;
        self.add(bias.neg, bias.sig as u128, bias.offset + self.unit_shift);
        self.trace_prepared("b=-");
        Ok(())
    }

    /// Pattern form of [`accumulate_bias`](Self::accumulate_bias).
    pub fn accumulate_bias_bits(&mut self, bias: BitValue) -> Result<()> {
        self.check_format(&bias)?;
        let op = Operand::decode(bias)?;
        self.reserve()?;
        self.add(op.neg, op.sig as u128, op.offset + self.unit_shift);
        if self.trace.is_some() {
            let line = format!("{} b={} q={}", self.count - 1, bias.hex(), self.register_hex());
            self.trace.as_mut().unwrap().push(line);
        }
        Ok(())
    }

    /// Rounds the register to the format. The register is left untouched.
    pub fn finalize(&self) -> EmacResult {
        let (neg, mag) = self.register.sign_magnitude();
        if mag.is_zero() {
            return EmacResult {
                out: BitValue::zero(self.fmt),
                saturated: false,
                rounded_up: false,
            };
        }
        let bound = if neg { &self.lowest_units } else { &self.max_units };
        let saturated = mag.cmp_big(bound) == Ordering::Greater;
        let (bits, rounded_up) = match self.fmt.family() {
            Family::Fixed => fixed_round(self.fmt, neg, &mag),
            Family::Float => float_round(self.fmt, neg, &mag),
            Family::Posit => posit_round(self.fmt, neg, &mag),
        };
        EmacResult {
            out: BitValue::from_masked(self.fmt, bits),
            saturated,
            rounded_up: rounded_up && !saturated,
        }
    }
}

fn range_units(fmt: Format, unit_shift: u32) -> (BigUint, BigUint) {
    let n = fmt.n();
    let one = BigUint::from(1u8);
    match fmt.family() {
        Family::Fixed => {
            // raw r is r * 2^-Q, i.e. r << Q units
            let q = fmt.param() as usize;
            let max = ((&one << (n - 1) as usize) - 1u8) << q;
            let lowest = &one << (n - 1) as usize + q;
            (max, lowest)
        }
        Family::Float => {
            let wf = fmt.wf().unwrap();
            let exp_max = (1u32 << fmt.param()) - 2;
            // max = (2^(wf+1) - 1) * 2^(exp_max - 1) * min
            let max = ((&one << (wf + 1) as usize) - 1u8) << (exp_max - 1 + unit_shift) as usize;
            (max.clone(), max)
        }
        Family::Posit => {
            // max = 2^maxscale and the unit is min^2 = 2^(-2 maxscale)
            let max = &one << (3 * unit_shift) as usize;
            (max.clone(), max)
        }
    }
}

/// Fixed point multiplication: the raw two's complement product.
fn fixed_product(fmt: Format, w: BitValue, a: BitValue) -> (bool, u128, u32) {
    let prod = sign_extend(w.bits(), fmt.n()) * sign_extend(a.bits(), fmt.n());
    (prod < 0, prod.unsigned_abs() as u128, 0)
}

/// Float multiplication and conversion to fixed point.
fn float_product(fmt: Format, w: BitValue, a: BitValue) -> Result<(bool, u128, u32)> {
    let we = fmt.param();
    let wf = fmt.n() - 1 - we;
    let fields = |v: BitValue| -> Result<(bool, u64, u32)> {
        let bits = v.bits();
        let s = v.sign_bit();
        let e = ((bits >> wf) & low_mask(we)) as u32;
        let m = bits & low_mask(wf);
        if u64::from(e) == low_mask(we) {
            return Err(Error::InvalidOperand(format!("{v} has the reserved exponent")));
        }
        // subnormal detection: the hidden bit is the OR of the exponent field
        let normal = e != 0;
        let ms = ((normal as u64) << wf) | m;
        // subnormals share the exponent of the smallest normal
        Ok((s, ms, e + !normal as u32))
    };
    let (s_w, ms_w, e_w) = fields(w)?;
    let (s_a, ms_a, e_a) = fields(a)?;
    let s_p = s_w ^ s_a;
    let m_p = ms_w as u128 * ms_a as u128;
    let e_p = e_w + e_a + 1;
    // min exponent is 3
    Ok((s_p, m_p, e_p - 3))
}

/// Posit multiplication: fraction product, overflow renormalization, biased
/// scale factor.
fn posit_product(fmt: Format, w: BitValue, a: BitValue) -> Result<(bool, u128, u32)> {
    let n = fmt.n();
    let es = fmt.param();
    let dw = posit_decode_fields(w.bits(), n, es);
    let da = posit_decode_fields(a.bits(), n, es);
    for (d, v) in [(&dw, w), (&da, a)] {
        if d.class == PositClass::NaR {
            return Err(Error::InvalidOperand(format!("{v} is NaR")));
        }
    }
    if dw.class == PositClass::Zero || da.class == PositClass::Zero {
        return Ok((false, 0, 0));
    }
    let f = posit_fraction_bits(n, es) as i32;
    let sf_w = dw.scale(es);
    let sf_a = da.scale(es);
    let sign_mult = dw.negative ^ da.negative;
    let frac_mult = u128::from(dw.significand(f as u32)) * u128::from(da.significand(f as u32));
    let ovf = ((frac_mult >> (2 * f + 1)) & 1) as i32;
    let sf_mult = sf_w + sf_a + ovf;
    let bias = 2 * ((n as i32 - 2) << es);
    let sf_biased = sf_mult + bias;
    // frac_mult carries 2F fraction bits (2F + 1 after an overflow), so the
    // fixed-point position of its LSB is sf_biased - ovf - 2F.
    let shift = sf_biased - ovf - 2 * f;
    if shift >= 0 {
        Ok((sign_mult, frac_mult, shift as u32))
    } else {
        let drop = (-shift) as u32;
        debug_assert_eq!(frac_mult & ((1u128 << drop) - 1), 0);
        Ok((sign_mult, frac_mult >> drop, 0))
    }
}

/// Round-to-nearest-even of `mag / 2^cut`: kept bits and whether they were
/// incremented.
fn rne_window(mag: &Magnitude, cut: u64) -> (u64, bool, bool) {
    rne_window_parity(mag, cut, |kept| kept & 1 == 1)
}

/// As [`rne_window`], with the tie broken by `odd(kept)` instead of the kept
/// LSB. Needed when the LSB of the encoding is not the LSB of `kept`.
fn rne_window_parity(mag: &Magnitude, cut: u64, odd: impl Fn(u64) -> bool) -> (u64, bool, bool) {
    if cut == 0 {
        return (mag.shr(0), false, false);
    }
    let kept = mag.shr(cut);
    let guard = mag.bit(cut - 1);
    let sticky = mag.any_below(cut - 1);
    let round = guard && (sticky || odd(kept));
    (kept + round as u64, round, guard || sticky)
}

/// Rounding and clipping of the fixed-point sum, then the shift by Q.
fn fixed_round(fmt: Format, neg: bool, mag: &Magnitude) -> (u64, bool) {
    let n = fmt.n() as u64;
    let q = fmt.param() as u64;
    let max_raw = (1u64 << (n - 1)) - 1;
    let min_raw = 1u64 << (n - 1);
    // clip branches: |sum| beyond 2^(n-1+Q) cannot come back into range
    let top = n - 1 + q;
    if !neg && mag.bit_len() > top {
        return (max_raw, false);
    }
    // 2^(top-1) + 2^(top-1) = 2^top
    if neg && mag.cmp_pow2_sum(top - 1, top - 1) == Ordering::Greater {
        return (encode_signed(min_raw, true, n), false);
    }
    let (mut raw, rounded, inexact) = rne_window(mag, q);
    // rounding can still carry one step past the limits
    let mut up = rounded && inexact;
    let limit = if neg { min_raw } else { max_raw };
    if raw > limit {
        raw = limit;
        up = false;
    }
    (encode_signed(raw, neg, n), up)
}

fn encode_signed(mag: u64, neg: bool, n: u64) -> u64 {
    if neg {
        mag.wrapping_neg() & low_mask(n as u32)
    } else {
        mag
    }
}

/// Conversion of the quire back to a float: leading one, wf + 1 mantissa
/// bits, guard/sticky rounding, saturation on exponent overflow.
fn float_round(fmt: Format, neg: bool, mag: &Magnitude) -> (u64, bool) {
    let n = fmt.n();
    let we = fmt.param();
    let wf = n - 1 - we;
    let unit_shift = (-fmt.min_exponent()) as u64;
    let p = mag.bit_len() - 1;
    // LSB position of the kept mantissa: wf bits below the leading one, but
    // never finer than min (the subnormal spacing), which sits at unit_shift
    let cut = (p.saturating_sub(wf as u64)).max(unit_shift);
    let (m, rounded, inexact) = rne_window(mag, cut);
    // {e, m} as one integer so a mantissa carry bumps the exponent
    let biased_minus_one = cut - unit_shift;
    let max_pattern = (low_mask(we) << wf) - 1;
    let pattern = (biased_minus_one as u128) << wf;
    let pattern = pattern + m as u128;
    let sign = (neg as u64) << (n - 1);
    if pattern > max_pattern as u128 {
        return (sign | max_pattern, false);
    }
    if pattern == 0 {
        return (0, false);
    }
    (sign | pattern as u64, rounded && inexact)
}

/// Conversion of the quire back to a posit.
fn posit_round(fmt: Format, neg: bool, mag: &Magnitude) -> (u64, bool) {
    let n = fmt.n();
    let es = fmt.param();
    let max_scale = (n as i64 - 2) << es;
    let bias = 2 * max_scale;
    let max_body = low_mask(n - 1);
    let p = mag.bit_len() as i64 - 1;
    let sf = p - bias;
    let finish = |body: u64, up: bool| (encode_signed(body, neg, n as u64), up);
    if sf >= max_scale {
        return finish(max_body, false);
    }
    if sf < -max_scale {
        // posits never round a nonzero value to zero
        return finish(1, true);
    }
    let k = sf >> es;
    let e = (sf & ((1 << es) - 1)) as u64;
    let (regime, run) = if k >= 0 {
        (low_mask(k as u32 + 1) << 1, k as u32 + 2)
    } else {
        (1u64, (-k) as u32 + 1)
    };
    let avail = n - 1 - run;
    if avail >= es {
        let fb = avail - es;
        let cut = (p - fb as i64) as u64;
        let head = ((regime << es) | e) << fb;
        // ties go to the even body; with no fraction bits left its LSB is
        // the last exponent or regime bit, not the hidden bit
        let (kept, rounded, inexact) =
            rne_window_parity(mag, cut, |kept| (head + (kept - (1u64 << fb))) & 1 == 1);
        // kept includes the hidden bit at position fb; a carry out of the
        // fraction propagates into the exponent and regime as in the bit string
        let body = head + (kept - (1u64 << fb));
        finish(body.min(max_body), rounded && inexact)
    } else {
        // the exponent field is cut: both neighbours are powers of two, so
        // compare against their midpoint directly
        let drop = es - avail;
        let e_hi = e >> drop;
        let body = (regime << avail) | e_hi;
        let lower = (k << es) + ((e_hi << drop) as i64);
        let upper = lower + (1 << drop);
        let exact = p == lower + bias && !mag.any_below(p as u64);
        if exact {
            return finish(body, false);
        }
        let a = (lower + bias - 1) as u64;
        let b = (upper + bias - 1) as u64;
        let up = match mag.cmp_pow2_sum(a, b) {
            Ordering::Less => false,
            Ordering::Greater => true,
            Ordering::Equal => body & 1 == 1,
        };
        finish(body + up as u64, up)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt(s: &str) -> Format {
        s.parse().unwrap()
    }

    fn bits_of(f: Format, x: f64) -> BitValue {
        crate::quantize::quantize_rne(x, f).unwrap()
    }

    #[test]
    fn widths() {
        assert_eq!(quire_width(fmt("posit8es0"), 64).unwrap(), 32);
        assert_eq!(quire_width(fmt("fixed8q4"), 16).unwrap(), 20);
        assert_eq!(quire_width(fmt("fixed8q4"), 1).unwrap(), 16);
        assert_eq!(quire_width(fmt("posit8es2"), 100).unwrap(), 7 + 96 + 2);
        assert!(quire_width(fmt("posit8es0"), 0).is_err());
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(64), 6);
        assert_eq!(ceil_log2(65), 7);
    }

    #[test]
    fn posit_tie_without_fraction_bits() {
        // 3/32 lies halfway between 0x02 (1/16) and 0x03 (1/8) in posit5es1;
        // the even pattern wins for both signs
        let f = fmt("posit5es1");
        for (w, want) in [(0x03u64, 0x02u64), (0x1d, 0x1e)] {
            let mut acc = QuireAccumulator::new(f, 2).unwrap();
            let one = bits_of(f, 1.0);
            acc.accumulate(BitValue::new(f, w).unwrap(), one).unwrap();
            let minpos = BitValue::new(f, if w == 0x03 { 0x1f } else { 0x01 }).unwrap();
            let two = bits_of(f, 2.0);
            acc.accumulate(minpos, two).unwrap();
            assert_eq!(acc.finalize().out.bits(), want);
        }
    }

    #[test]
    fn identity_product() {
        let f = fmt("posit8es0");
        let mut acc = QuireAccumulator::new(f, 64).unwrap();
        let one = bits_of(f, 1.0);
        acc.accumulate(one, one).unwrap();
        let r = acc.finalize();
        assert_eq!(r.out, one);
        assert!(!r.saturated && !r.rounded_up);
    }

    #[test]
    fn fixed_half_squared_twice() {
        let f = fmt("fixed8q5");
        let mut acc = QuireAccumulator::new(f, 2).unwrap();
        let half = bits_of(f, 0.5);
        acc.accumulate(half, half).unwrap();
        acc.accumulate(half, half).unwrap();
        assert_eq!(acc.finalize().out, half);
        assert!(acc.accumulate(half, half).is_err());
    }

    #[test]
    fn fixed_saturation() {
        let f = fmt("fixed8q5");
        let mut acc = QuireAccumulator::new(f, 200).unwrap();
        let max = BitValue::new(f, 0x7f).unwrap();
        for _ in 0..200 {
            acc.accumulate(max, max).unwrap();
        }
        let r = acc.finalize();
        assert_eq!(r.out.bits(), 0x7f);
        assert_eq!(r.out.to_f64(), Some(3.96875));
        assert!(r.saturated);
    }

    #[test]
    fn empty_finalize_is_zero() {
        for s in ["posit8es1", "float8_e4", "fixed8q3"] {
            let acc = QuireAccumulator::new(fmt(s), 4).unwrap();
            let r = acc.finalize();
            assert_eq!(r.out.bits(), 0);
            assert!(!r.saturated && !r.rounded_up);
        }
    }

    #[test]
    fn nar_rejected() {
        let f = fmt("posit8es0");
        let mut acc = QuireAccumulator::new(f, 4).unwrap();
        let nar = BitValue::new(f, 0x80).unwrap();
        let one = bits_of(f, 1.0);
        assert!(matches!(acc.accumulate(nar, one), Err(Error::InvalidOperand(_))));
        assert_eq!(acc.count(), 0);
        let g = fmt("float8_e4");
        let mut acc = QuireAccumulator::new(g, 4).unwrap();
        let reserved = BitValue::new(g, 0b0_1111_000).unwrap();
        assert!(acc.accumulate(reserved, bits_of(g, 1.0)).is_err());
    }

    #[test]
    fn format_mismatch() {
        let mut acc = QuireAccumulator::new(fmt("posit8es0"), 4).unwrap();
        let x = bits_of(fmt("posit8es1"), 1.0);
        assert!(matches!(acc.accumulate(x, x), Err(Error::FormatMismatch { .. })));
    }

    #[test]
    fn posit_tie_goes_to_even() {
        // 1 + 1/64 is halfway between 1 (0x40) and 1 + 1/32 (0x41) in posit8es0
        let f = fmt("posit8es0");
        let mut acc = QuireAccumulator::new(f, 4).unwrap();
        let one = bits_of(f, 1.0);
        let eighth = bits_of(f, 0.125);
        let quarter = bits_of(f, 0.25);
        acc.accumulate(one, one).unwrap();
        acc.accumulate(eighth, eighth).unwrap();
        assert_eq!(acc.finalize().out.bits(), 0x40);
        // 1 + 3/64 is halfway between 0x41 and 0x42: even is 0x42
        acc.accumulate(quarter, eighth).unwrap();
        let r = acc.finalize();
        assert_eq!(r.out.bits(), 0x42);
        assert!(r.rounded_up);
    }

    #[test]
    fn prepared_matches_patterns() {
        for s in ["posit6es1", "float7_e3", "fixed6q2", "posit8es2"] {
            let f = fmt(s);
            let mut a1 = QuireAccumulator::new(f, 1 << 12).unwrap();
            let mut a2 = QuireAccumulator::new(f, 1 << 12).unwrap();
            for w in 0..(1u64 << f.n()) {
                for x in (0..(1u64 << f.n())).step_by(3) {
                    let (wv, xv) = (BitValue::new(f, w).unwrap(), BitValue::new(f, x).unwrap());
                    let (Ok(ow), Ok(ox)) = (Operand::decode(wv), Operand::decode(xv)) else {
                        continue;
                    };
                    a1.reset();
                    a2.reset();
                    a1.accumulate(wv, xv).unwrap();
                    a2.accumulate_prepared(&ow, &ox).unwrap();
                    assert_eq!(a1.register_value(), a2.register_value(), "{s} {w:#x} {x:#x}");
                }
            }
        }
    }

    #[test]
    fn bias_is_times_one() {
        let f = fmt("fixed8q7");
        let mut acc = QuireAccumulator::new(f, 2).unwrap();
        let b = bits_of(f, -0.5);
        acc.accumulate_bias_bits(b).unwrap();
        assert_eq!(acc.exact_value().to_f64(), -0.5);
        assert_eq!(acc.finalize().out, b);
    }

    #[test]
    fn trace_lines() {
        let f = fmt("posit8es0");
        let mut acc = QuireAccumulator::new(f, 64).unwrap();
        acc.enable_trace();
        let one = bits_of(f, 1.0);
        acc.accumulate(one, one).unwrap();
        acc.accumulate_bias_bits(one).unwrap();
        let t = acc.trace().unwrap();
        assert_eq!(t[0], "0 w=0x40 a=0x40 q=00001000");
        assert_eq!(t[1], "1 b=0x40 q=00002000");
    }

    #[test]
    fn wide_register_path() {
        // posit16es2 quires exceed 128 bits
        let f = fmt("posit16es2");
        let mut acc = QuireAccumulator::new(f, 8).unwrap();
        assert!(acc.width() > 128);
        let max = BitValue::new(f, 0x7fff).unwrap();
        let min = BitValue::new(f, 0x0001).unwrap();
        acc.accumulate(max, max).unwrap();
        acc.accumulate(min, min).unwrap();
        let r = acc.finalize();
        assert_eq!(r.out, max);
        assert!(r.saturated);
        acc.reset();
        acc.accumulate(max, min).unwrap();
        assert_eq!(acc.finalize().out, bits_of(f, 1.0));
    }
}
