//! Round-to-nearest-even quantization, quantization error and parameter sweeps.
//!
//! Quantization walks the format's values in ascending order. Posit patterns
//! read as signed integers are already ordered; fixed point is ordered the
//! same way; float patterns are ordered as sign and magnitude with the
//! negative zero dropped. A binary search finds the two neighbours of `x` and
//! an exact midpoint comparison picks between them.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::Dyadic;
use crate::formats::{low_mask, value_of, BitValue, Family, Format, MAX_FLOAT_WE};
use crate::network::NetworkModel;

/// A quantized value with the same diagnostic flags an EMAC reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rounded {
    pub out: BitValue,
    /// The input lay strictly outside the representable range.
    pub saturated: bool,
    /// The result magnitude exceeds the input magnitude.
    pub rounded_up: bool,
}

/// Ordered index space over the real-valued patterns of a format.
#[derive(Debug, Clone, Copy)]
struct Codes {
    fmt: Format,
    lo: i64,
    hi: i64,
}

impl Codes {
    fn new(fmt: Format) -> Self {
        let n = fmt.n();
        let half = 1i64 << (n - 1);
        let (lo, hi) = match fmt.family() {
            // NaR (-2^(n-1)) is not a value
            Family::Posit => (-(half - 1), half - 1),
            Family::Fixed => (-half, half - 1),
            Family::Float => {
                let wf = fmt.wf().unwrap();
                let top = ((low_mask(fmt.param()) << wf) - 1) as i64;
                (-top, top)
            }
        };
        Codes { fmt, lo, hi }
    }

    fn bits(&self, i: i64) -> u64 {
        let n = self.fmt.n();
        match self.fmt.family() {
            Family::Posit | Family::Fixed => (i as u64) & low_mask(n),
            Family::Float => {
                if i >= 0 {
                    i as u64
                } else {
                    (1u64 << (n - 1)) | i.unsigned_abs()
                }
            }
        }
    }

    fn bit_value(&self, i: i64) -> BitValue {
        BitValue::from_masked(self.fmt, self.bits(i))
    }

    fn value(&self, i: i64) -> f64 {
        value_of(self.bit_value(i)).to_f64().expect("code space holds only reals")
    }
}

/// Something that can be compared with format values: a double or an exact
/// dyadic.
trait Target {
    fn sign(&self) -> Ordering;
    /// Ordering of the target relative to the value of code `i`.
    fn cmp_code(&self, codes: &Codes, i: i64) -> Ordering;
    /// Ordering of the target relative to the midpoint of codes `i` and `i + 1`.
    fn cmp_mid(&self, codes: &Codes, i: i64) -> Ordering;
}

impl Target for f64 {
    fn sign(&self) -> Ordering {
        self.partial_cmp(&0.0).unwrap()
    }

    fn cmp_code(&self, codes: &Codes, i: i64) -> Ordering {
        self.partial_cmp(&codes.value(i)).unwrap()
    }

    fn cmp_mid(&self, codes: &Codes, i: i64) -> Ordering {
        // adjacent values carry at most 32 significant bits between them and
        // halving stays above the f64 subnormal floor, so this is exact
        let mid = codes.value(i) * 0.5 + codes.value(i + 1) * 0.5;
        self.partial_cmp(&mid).unwrap()
    }
}

impl Target for Dyadic {
    fn sign(&self) -> Ordering {
        self.signum().cmp(&0)
    }

    fn cmp_code(&self, codes: &Codes, i: i64) -> Ordering {
        self.cmp(&exact_value(codes.bit_value(i)))
    }

    fn cmp_mid(&self, codes: &Codes, i: i64) -> Ordering {
        let sum = &exact_value(codes.bit_value(i)) + &exact_value(codes.bit_value(i + 1));
        self.cmp(&sum.scale(-1))
    }
}

/// Exact value of a real pattern; zero for NaR.
pub fn exact_value(v: BitValue) -> Dyadic {
    match crate::formats::significand_exponent(v) {
        Some((neg, sig, exp)) => {
            let d = Dyadic::new(sig, exp as i64);
            if neg {
                -d
            } else {
                d
            }
        }
        None => Dyadic::zero(),
    }
}

fn round_target<T: Target>(x: &T, fmt: Format) -> Rounded {
    let codes = Codes::new(fmt);
    let done = |i: i64, saturated: bool, rounded_up: bool| Rounded {
        out: codes.bit_value(i),
        saturated,
        rounded_up,
    };
    let sign = x.sign();
    if sign == Ordering::Equal {
        return done(0, false, false);
    }
    match x.cmp_code(&codes, codes.lo) {
        Ordering::Less => return done(codes.lo, true, false),
        Ordering::Equal => return done(codes.lo, false, false),
        Ordering::Greater => {}
    }
    match x.cmp_code(&codes, codes.hi) {
        Ordering::Greater => return done(codes.hi, true, false),
        Ordering::Equal => return done(codes.hi, false, false),
        Ordering::Less => {}
    }
    // value(lo) < x < value(hi): find i with value(i) <= x < value(i + 1)
    let (mut a, mut b) = (codes.lo, codes.hi);
    while b - a > 1 {
        let m = a + (b - a) / 2;
        if x.cmp_code(&codes, m) == Ordering::Less {
            b = m;
        } else {
            a = m;
        }
    }
    if x.cmp_code(&codes, a) == Ordering::Equal {
        return done(a, false, false);
    }
    let upper = match x.cmp_mid(&codes, a) {
        Ordering::Less => false,
        Ordering::Greater => true,
        Ordering::Equal => codes.bits(a) & 1 == 1,
    };
    let mut i = if upper { a + 1 } else { a };
    // rounding away from zero: positive input chose the upper neighbour, or
    // negative input the lower one
    let mut rounded_up = upper == (sign == Ordering::Greater);
    if i == 0 {
        rounded_up = false;
        if fmt.family() == Family::Posit {
            // posits never round a nonzero value to zero
            i = if sign == Ordering::Greater { 1 } else { -1 };
            rounded_up = true;
        }
    }
    done(i, false, rounded_up)
}

/// Nearest representable value of `x`, ties to the even pattern, with range
/// flags.
pub fn quantize_rne_flags(x: f64, fmt: Format) -> Result<Rounded> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("cannot quantize non-finite value {x}")));
    }
    Ok(round_target(&x, fmt))
}

/// Nearest representable value of `x`, ties to the even pattern. Values past
/// the range saturate; posits never round a nonzero value to zero.
pub fn quantize_rne(x: f64, fmt: Format) -> Result<BitValue> {
    Ok(quantize_rne_flags(x, fmt)?.out)
}

/// [`quantize_rne_flags`] for an exact dyadic input.
pub fn quantize_rne_exact(x: &Dyadic, fmt: Format) -> Rounded {
    round_target(x, fmt)
}

/// A flat tensor of quantized values together with the originals.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    fmt: Format,
    shape: Vec<usize>,
    bits: Vec<BitValue>,
    reference: Vec<f64>,
}

impl QuantizedTensor {
    pub fn quantize(fmt: Format, shape: &[usize], reference: &[f64]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != reference.len() {
            return Err(Error::LengthMismatch {
                left: len,
                right: reference.len(),
            });
        }
        let bits = reference
            .iter()
            .map(|&x| quantize_rne(x, fmt))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantizedTensor {
            fmt,
            shape: shape.to_vec(),
            bits,
            reference: reference.to_vec(),
        })
    }

    pub fn format(&self) -> Format {
        self.fmt
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[BitValue] {
        &self.bits
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|b| b.to_f64().expect("quantizer emits only reals"))
            .collect()
    }
}

/// Mean squared error between `x` and the values of `xq`.
pub fn mse(x: &[f64], xq: &QuantizedTensor) -> Result<f64> {
    if x.len() != xq.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: xq.len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(squared_error_sum(x, &xq.dequantize()) / x.len() as f64)
}

fn squared_error_sum(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Version tag written in the first line of every CSV this crate emits.
pub const MSEMAP_SCHEMA: &str = "# schema: emac-msemap/1";

/// Per-layer quantization error for a list of formats.
#[derive(Debug, Clone, PartialEq)]
pub struct MseMap {
    pub rows: Vec<Format>,
    /// Layer identifiers (`layer1`, `layer2`, ...).
    pub layers: Vec<String>,
    /// One row per format: per-layer MSE followed by the average.
    pub cells: Vec<Vec<f64>>,
    pub weights_only: bool,
}

impl MseMap {
    pub fn average(&self, row: usize) -> f64 {
        *self.cells[row].last().unwrap()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{MSEMAP_SCHEMA} params={}",
            if self.weights_only { "weights" } else { "weights+biases" }
        );
        out.push_str("format");
        for l in &self.layers {
            out.push(',');
            out.push_str(l);
        }
        out.push_str(",average\n");
        for (fmt, row) in self.rows.iter().zip(&self.cells) {
            out.push_str(&fmt.to_string());
            for v in row {
                let _ = write!(out, ",{v:.8e}");
            }
            out.push('\n');
        }
        out
    }
}

fn layer_params(model: &NetworkModel, weights_only: bool) -> Vec<Vec<f64>> {
    model
        .layers
        .iter()
        .map(|l| {
            let mut p = l.weights.clone();
            if !weights_only {
                p.extend_from_slice(&l.biases);
            }
            p
        })
        .collect()
}

/// One row per format, one column per layer, plus the parameter-weighted average.
pub fn layer_mse_map(model: &NetworkModel, fmts: &[Format], weights_only: bool) -> Result<MseMap> {
    let params = layer_params(model, weights_only);
    let total: usize = params.iter().map(Vec::len).sum();
    let cells = fmts
        .par_iter()
        .map(|&fmt| -> Result<Vec<f64>> {
            let mut row = Vec::with_capacity(params.len() + 1);
            let mut sum = 0.0;
            for p in &params {
                let q = QuantizedTensor::quantize(fmt, &[p.len()], p)?;
                let se = squared_error_sum(p, &q.dequantize());
                sum += se;
                row.push(if p.is_empty() { 0.0 } else { se / p.len() as f64 });
            }
            row.push(if total == 0 { 0.0 } else { sum / total as f64 });
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MseMap {
        rows: fmts.to_vec(),
        layers: (1..=params.len()).map(|i| format!("layer{i}")).collect(),
        cells,
        weights_only,
    })
}

/// Sweep bounds on the bit width.
pub const SWEEP_MIN_BITS: u32 = 3;
pub const SWEEP_MAX_BITS: u32 = 16;

/// Legal parameter values of a family at `n_bits`, ascending.
pub fn sweep_params(family: Family, n_bits: u32) -> Result<Vec<u32>> {
    if !(SWEEP_MIN_BITS..=SWEEP_MAX_BITS).contains(&n_bits) {
        return Err(Error::Constraint(format!(
            "sweep width {n_bits} outside [{SWEEP_MIN_BITS}, {SWEEP_MAX_BITS}]"
        )));
    }
    let params: Vec<u32> = match family {
        Family::Posit => (0..=2).filter(|&es| es + 3 <= n_bits).collect(),
        Family::Float => (2..=n_bits.saturating_sub(2).min(MAX_FLOAT_WE)).collect(),
        Family::Fixed => (0..n_bits).collect(),
    };
    if params.is_empty() {
        return Err(Error::Constraint(format!(
            "no legal {} parameter for {family} at {n_bits} bits",
            family.param_name()
        )));
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Maximize,
    Minimize,
}

/// Outcome of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best: Format,
    pub score: f64,
    /// Every evaluated point, ascending by parameter.
    pub points: Vec<(Format, f64)>,
}

impl SweepResult {
    pub fn param(&self) -> u32 {
        self.best.param()
    }
}

/// Evaluates `objective` at every legal parameter and returns the best; ties
/// go to the smaller parameter. Points are evaluated in parallel and reduced
/// in parameter order.
pub fn sweep_best<F>(family: Family, n_bits: u32, goal: Goal, objective: F) -> Result<SweepResult>
where
    F: Fn(Format) -> Result<f64> + Sync,
{
    let fmts = sweep_params(family, n_bits)?
        .into_iter()
        .map(|p| Format::new(family, n_bits, p))
        .collect::<Result<Vec<_>>>()?;
    let scores = fmts
        .par_iter()
        .map(|&f| objective(f))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            return Err(Error::InvalidInput(format!("objective returned NaN for {}", fmts[i])));
        }
        let better = match goal {
            Goal::Maximize => s > scores[best],
            Goal::Minimize => s < scores[best],
        };
        if better {
            best = i;
        }
    }
    Ok(SweepResult {
        best: fmts[best],
        score: scores[best],
        points: fmts.into_iter().zip(scores).collect(),
    })
}
