//! Fully connected classifiers: reference double-precision parameters,
//! training, JSON model files and low-precision inference through the EMAC.

mod dataset;
mod infer;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{uci_test_len, Dataset};
pub use infer::{evaluate, evaluate_reference, infer, infer_reference, QuantizedNetwork};
pub use train::{train_reference, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// One dense layer. `weights` is row-major `rows x cols` (outputs by inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize, activation: Activation) -> Self {
        Layer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
            activation,
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub dataset: String,
    pub seed: u64,
    /// Layer sizes including the input, e.g. `[4, 16, 3]`.
    pub arch: Vec<usize>,
    /// How raw inputs were normalized before entering the network.
    pub norm: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub meta: ModelMeta,
    pub layers: Vec<Layer>,
}

impl NetworkModel {
    pub fn new(meta: ModelMeta, layers: Vec<Layer>) -> Result<Self> {
        let m = NetworkModel { meta, layers };
        m.validate()?;
        Ok(m)
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.cols)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Checks shapes, the layer chain, the final activation and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Dimension("model has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let id = i + 1;
            if l.rows == 0 || l.cols == 0 {
                return Err(Error::Dimension(format!("layer{id} has an empty dimension")));
            }
            if l.weights.len() != l.rows * l.cols || l.biases.len() != l.rows {
                return Err(Error::Dimension(format!(
                    "layer{id}: {}x{} needs {} weights and {} biases, found {} and {}",
                    l.rows,
                    l.cols,
                    l.rows * l.cols,
                    l.rows,
                    l.weights.len(),
                    l.biases.len()
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|x| !x.is_finite()) {
                return Err(Error::ModelFile(format!("layer{id} has non-finite parameters")));
            }
            if i > 0 && l.cols != self.layers[i - 1].rows {
                return Err(Error::Dimension(format!(
                    "layer{id} takes {} inputs but layer{} produces {}",
                    l.cols,
                    i,
                    self.layers[i - 1].rows
                )));
            }
        }
        if self.layers.last().unwrap().activation != Activation::None {
            return Err(Error::Dimension("final layer must have no activation".into()));
        }
        if !self.meta.arch.is_empty() {
            let arch: Vec<usize> = std::iter::once(self.input_len())
                .chain(self.layers.iter().map(|l| l.rows))
                .collect();
            if arch != self.meta.arch {
                return Err(Error::Dimension(format!(
                    "metadata arch {:?} disagrees with layers {:?}",
                    self.meta.arch, arch
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            meta: self.meta.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.rows,
                    cols: l.cols,
                    weights_hex: l.weights.iter().map(|&x| f64_hex(x)).collect(),
                    biases_hex: l.biases.iter().map(|&x| f64_hex(x)).collect(),
                    activation: l.activation,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, l) in file.layers.into_iter().enumerate() {
            let parse = |v: &[String]| -> Result<Vec<f64>> {
                v.iter()
                    .map(|s| {
                        hex_f64(s).ok_or_else(|| {
                            Error::ModelFile(format!("layer{}: bad parameter {s:?}", i + 1))
                        })
                    })
                    .collect()
            };
            layers.push(Layer {
                rows: l.rows,
                cols: l.cols,
                weights: parse(&l.weights_hex)?,
                biases: parse(&l.biases_hex)?,
                activation: l.activation,
            });
        }
        NetworkModel::new(file.meta, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    meta: ModelMeta,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights_hex: Vec<String>,
    biases_hex: Vec<String>,
    activation: Activation,
}

fn f64_hex(x: f64) -> String {
    hex::encode(x.to_be_bytes())
}

fn hex_f64(s: &str) -> Option<f64> {
    let bytes: [u8; 8] = hex::decode(s).ok()?.try_into().ok()?;
    Some(f64::from_be_bytes(bytes))
}
