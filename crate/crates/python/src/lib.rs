//! Python module `emac`: formats, quantization, the exact accumulator and
//! quantized inference.

use std::path::PathBuf;

use emac_core::emac::{quire_width as core_quire_width, QuireAccumulator};
use emac_core::formats::{enumerate_values, BitValue as CoreBitValue, Format as CoreFormat, Value};
use emac_core::network::{infer_reference, NetworkModel, QuantizedNetwork};
use emac_core::quantize::{layer_mse_map, mse as core_mse, quantize_rne_flags, QuantizedTensor};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: emac_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A number format, e.g. `Format("posit8es1")`.
#[pyclass(frozen, eq, hash, from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Format(CoreFormat);

#[pymethods]
impl Format {
    #[new]
    fn new(descriptor: &str) -> PyResult<Self> {
        descriptor.parse().map(Format).map_err(err)
    }

    #[getter]
    fn family(&self) -> String {
        self.0.family().to_string()
    }

    #[getter]
    fn n(&self) -> u32 {
        self.0.n()
    }

    /// `es`, `we` or `q` depending on the family.
    #[getter]
    fn param(&self) -> u32 {
        self.0.param()
    }

    #[getter]
    fn max(&self) -> f64 {
        self.0.characteristics().max
    }

    /// Smallest positive value.
    #[getter]
    fn min(&self) -> f64 {
        self.0.characteristics().min
    }

    #[getter]
    fn dynamic_range_bits(&self) -> u32 {
        self.0.dynamic_range_bits()
    }

    fn quire_width(&self, k: u64) -> PyResult<u32> {
        core_quire_width(self.0, k).map_err(err)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Format('{}')", self.0)
    }
}

/// A bit pattern in a format.
#[pyclass(frozen, eq, hash, from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct BitValue(CoreBitValue);

#[pymethods]
impl BitValue {
    #[new]
    fn new(fmt: Format, bits: u64) -> PyResult<Self> {
        CoreBitValue::new(fmt.0, bits).map(BitValue).map_err(err)
    }

    #[getter]
    fn format(&self) -> Format {
        Format(self.0.format())
    }

    #[getter]
    fn bits(&self) -> u64 {
        self.0.bits()
    }

    #[getter]
    fn hex(&self) -> String {
        self.0.hex()
    }

    /// The real value; `None` for NaR and reserved float patterns.
    #[getter]
    fn value(&self) -> Option<f64> {
        match self.0.value() {
            Value::Zero => Some(0.0),
            Value::Real(x) => Some(x),
            Value::NaR => None,
        }
    }

    fn negate(&self) -> Self {
        BitValue(self.0.negate())
    }

    fn __float__(&self) -> PyResult<f64> {
        self.value().ok_or_else(|| PyValueError::new_err("not a real value"))
    }

    fn __repr__(&self) -> String {
        format!("BitValue('{}', {})", self.0.format(), self.0.hex())
    }
}

/// Round-to-nearest-even; returns `(value, saturated, rounded_up)`.
#[pyfunction]
fn quantize_flags(x: f64, fmt: Format) -> PyResult<(BitValue, bool, bool)> {
    let r = quantize_rne_flags(x, fmt.0).map_err(err)?;
    Ok((BitValue(r.out), r.saturated, r.rounded_up))
}

/// Round-to-nearest-even into `fmt`.
#[pyfunction]
fn quantize(x: f64, fmt: Format) -> PyResult<BitValue> {
    Ok(quantize_flags(x, fmt)?.0)
}

/// Mean squared error of quantizing `xs` into `fmt`.
#[pyfunction]
fn mse(xs: Vec<f64>, fmt: Format) -> PyResult<f64> {
    let q = QuantizedTensor::quantize(fmt.0, &[xs.len()], &xs).map_err(err)?;
    core_mse(&xs, &q).map_err(err)
}

/// Every real value of `fmt`, ascending, as `(bits, value)` pairs.
#[pyfunction]
fn enumerate(fmt: Format) -> PyResult<Vec<(u64, f64)>> {
    Ok(enumerate_values(fmt.0)
        .map_err(err)?
        .values
        .into_iter()
        .map(|(b, v)| (b.bits(), v))
        .collect())
}

#[pyfunction]
fn quire_width(fmt: Format, k: u64) -> PyResult<u32> {
    fmt.quire_width(k)
}

/// Exact multiply-and-accumulate for up to `k` products.
#[pyclass(unsendable)]
struct Emac(QuireAccumulator);

#[pymethods]
impl Emac {
    #[new]
    #[pyo3(signature = (fmt, k, trace = false))]
    fn new(fmt: Format, k: u64, trace: bool) -> PyResult<Self> {
        let mut acc = QuireAccumulator::new(fmt.0, k).map_err(err)?;
        if trace {
            acc.enable_trace();
        }
        Ok(Emac(acc))
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width()
    }

    #[getter]
    fn count(&self) -> u64 {
        self.0.count()
    }

    fn accumulate(&mut self, weight: BitValue, activation: BitValue) -> PyResult<()> {
        self.0.accumulate(weight.0, activation.0).map_err(err)
    }

    /// Adds `bias * 1`.
    fn accumulate_bias(&mut self, bias: BitValue) -> PyResult<()> {
        self.0.accumulate_bias_bits(bias.0).map_err(err)
    }

    /// Rounds the register once: `(value, saturated, rounded_up)`.
    fn finalize(&self) -> (BitValue, bool, bool) {
        let r = self.0.finalize();
        (BitValue(r.out), r.saturated, r.rounded_up)
    }

    fn reset(&mut self) {
        self.0.reset();
    }

    /// Register contents in two's complement hex.
    fn register_hex(&self) -> String {
        self.0.register_hex()
    }

    /// The exact sum as `(mantissa, exponent)`: `mantissa * 2**exponent`.
    fn exact(&self) -> (String, i64) {
        let d = self.0.exact_value();
        (d.mantissa().to_string(), d.exponent())
    }

    fn trace(&self) -> Vec<String> {
        self.0.trace().map(|t| t.to_vec()).unwrap_or_default()
    }
}

/// A trained network loaded from a model file.
#[pyclass(frozen)]
struct Model(NetworkModel);

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        NetworkModel::load(&path).map(Model).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        NetworkModel::from_json(text).map(Model).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn arch(&self) -> Vec<usize> {
        std::iter::once(self.0.input_len())
            .chain(self.0.layers.iter().map(|l| l.rows))
            .collect()
    }

    /// Class predicted through EMACs in `fmt`.
    fn infer(&self, fmt: Format, input: Vec<f64>) -> PyResult<usize> {
        QuantizedNetwork::new(&self.0, fmt.0)
            .and_then(|n| n.infer(&input))
            .map_err(err)
    }

    /// Class predicted in double precision.
    fn infer_reference(&self, input: Vec<f64>) -> PyResult<usize> {
        infer_reference(&self.0, &input).map_err(err)
    }

    /// Per-layer MSE rows (`[layer1, ..., average]`) for each format.
    #[pyo3(signature = (formats, weights_only = false))]
    fn mse_map(&self, formats: Vec<Format>, weights_only: bool) -> PyResult<Vec<Vec<f64>>> {
        let fmts: Vec<CoreFormat> = formats.iter().map(|f| f.0).collect();
        Ok(layer_mse_map(&self.0, &fmts, weights_only).map_err(err)?.cells)
    }
}

#[pymodule]
fn emac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Format>()?;
    m.add_class::<BitValue>()?;
    m.add_class::<Emac>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_flags, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(quire_width, m)?)?;
    Ok(())
}
