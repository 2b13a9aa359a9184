//! Low-precision inference. Every neuron is one EMAC: the weighted sum and the
//! bias (as `bias * 1`) accumulate exactly and round once, so a layer with
//! fan-in `m` uses a quire sized for `m + 1` products. Hidden activations
//! stay in the low-precision format between layers.

use rayon::prelude::*;

use super::{Activation, Dataset, NetworkModel};
use crate::emac::{Operand, QuireAccumulator};
use crate::error::{Error, Result};
use crate::formats::{BitValue, Format};
use crate::quantize::quantize_rne;

#[derive(Debug, Clone)]
struct QLayer {
    rows: usize,
    cols: usize,
    weights: Vec<BitValue>,
    weight_ops: Vec<Operand>,
    biases: Vec<BitValue>,
    bias_ops: Vec<Operand>,
    activation: Activation,
}

/// A model whose parameters have been quantized to one format.
#[derive(Debug, Clone)]
pub struct QuantizedNetwork {
    fmt: Format,
    layers: Vec<QLayer>,
}

impl QuantizedNetwork {
    pub fn new(model: &NetworkModel, fmt: Format) -> Result<Self> {
        model.validate()?;
        let quant = |v: &[f64]| -> Result<Vec<BitValue>> {
            v.iter().map(|&x| quantize_rne(x, fmt)).collect()
        };
        let decode = |v: &[BitValue]| -> Result<Vec<Operand>> {
            v.iter().map(|&b| Operand::decode(b)).collect()
        };
        let layers = model
            .layers
            .iter()
            .map(|l| -> Result<QLayer> {
                let weights = quant(&l.weights)?;
                let biases = quant(&l.biases)?;
                Ok(QLayer {
                    rows: l.rows,
                    cols: l.cols,
                    weight_ops: decode(&weights)?,
                    bias_ops: decode(&biases)?,
                    weights,
                    biases,
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantizedNetwork { fmt, layers })
    }

    pub fn format(&self) -> Format {
        self.fmt
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].cols
    }

    /// Quantized weights of layer `l` (0-based), row-major.
    pub fn weights(&self, l: usize) -> &[BitValue] {
        &self.layers[l].weights
    }

    pub fn biases(&self, l: usize) -> &[BitValue] {
        &self.layers[l].biases
    }

    /// Quantizes a real input vector to the network format.
    pub fn quantize_input(&self, input: &[f64]) -> Result<Vec<BitValue>> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_len()
            )));
        }
        input.iter().map(|&x| quantize_rne(x, self.fmt)).collect()
    }

    /// Outputs of every layer (after activation) for a quantized input.
    pub fn forward(&self, input: &[BitValue]) -> Result<Vec<Vec<BitValue>>> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_len()
            )));
        }
        let mut acts: Vec<Operand> = input
            .iter()
            .map(|&b| {
                if b.format() != self.fmt {
                    return Err(Error::FormatMismatch {
                        expected: self.fmt,
                        found: b.format(),
                    });
                }
                Operand::decode(b)
            })
            .collect::<Result<_>>()?;
        let mut outputs = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let mut acc = QuireAccumulator::new(self.fmt, l.cols as u64 + 1)?;
            let mut out = Vec::with_capacity(l.rows);
            for r in 0..l.rows {
                acc.reset();
                acc.accumulate_dot(&l.weight_ops[r * l.cols..(r + 1) * l.cols], &acts)?;
                acc.accumulate_bias(&l.bias_ops[r])?;
                let mut y = acc.finalize().out;
                if l.activation == Activation::Relu && y.is_negative() {
                    y = BitValue::zero(self.fmt);
                }
                out.push(y);
            }
            acts = out.iter().map(|&b| Operand::decode(b)).collect::<Result<_>>()?;
            outputs.push(out);
        }
        Ok(outputs)
    }

    /// Predicted class: argmax of the final layer, lowest index on ties.
    pub fn infer(&self, input: &[f64]) -> Result<usize> {
        let q = self.quantize_input(input)?;
        let outputs = self.forward(&q)?;
        let last = outputs.last().unwrap();
        let values: Vec<f64> = last
            .iter()
            .map(|b| b.to_f64().expect("EMAC output is real"))
            .collect();
        Ok(argmax(&values))
    }

    /// Fraction of the test split classified correctly.
    pub fn evaluate(&self, data: &Dataset) -> Result<f64> {
        if data.test.is_empty() {
            return Err(Error::InvalidInput(format!("{} has no test split", data.name)));
        }
        let correct = data
            .test
            .par_iter()
            .map(|&i| Ok((self.infer(data.sample(i))? == data.labels[i] as usize) as usize))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(correct as f64 / data.test.len() as f64)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Quantizes `model` to `fmt` and classifies one input.
pub fn infer(model: &NetworkModel, fmt: Format, input: &[f64]) -> Result<usize> {
    QuantizedNetwork::new(model, fmt)?.infer(input)
}

/// Test accuracy of `model` quantized to `fmt`.
pub fn evaluate(model: &NetworkModel, fmt: Format, data: &Dataset) -> Result<f64> {
    QuantizedNetwork::new(model, fmt)?.evaluate(data)
}

/// Double-precision forward pass.
pub fn infer_reference(model: &NetworkModel, input: &[f64]) -> Result<usize> {
    if input.len() != model.input_len() {
        return Err(Error::Dimension(format!(
            "input has {} values, network expects {}",
            input.len(),
            model.input_len()
        )));
    }
    let mut x = input.to_vec();
    for l in &model.layers {
        x = (0..l.rows)
            .map(|r| {
                let z: f64 = l.row(r).iter().zip(&x).map(|(w, a)| w * a).sum::<f64>() + l.biases[r];
                match l.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::None => z,
                }
            })
            .collect();
    }
    Ok(argmax(&x))
}

/// Double-precision test accuracy.
pub fn evaluate_reference(model: &NetworkModel, data: &Dataset) -> Result<f64> {
    if data.test.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no test split", data.name)));
    }
    let correct = data
        .test
        .par_iter()
        .map(|&i| Ok((infer_reference(model, data.sample(i))? == data.labels[i] as usize) as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / data.test.len() as f64)
}
