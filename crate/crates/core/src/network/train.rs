//! Double-precision reference training: mini-batch SGD with momentum on
//! softmax cross-entropy, He-initialized weights, fully deterministic for a
//! given seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Activation, Dataset, Layer, ModelMeta, NetworkModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.05,
            momentum: 0.9,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    /// Defaults per dataset name; unknown names get [`TrainConfig::default`].
    pub fn for_dataset(name: &str) -> Self {
        match name {
            "iris" => TrainConfig {
                epochs: 300,
                batch_size: 8,
                learning_rate: 0.02,
                momentum: 0.9,
                lr_decay: 1.0,
            },
            "wdbc" => TrainConfig {
                epochs: 100,
                batch_size: 16,
                learning_rate: 0.02,
                momentum: 0.9,
                lr_decay: 1.0,
            },
            "mushroom" => TrainConfig {
                epochs: 20,
                batch_size: 32,
                learning_rate: 0.02,
                momentum: 0.9,
                lr_decay: 1.0,
            },
            "mnist" | "fashion" => TrainConfig {
                epochs: 12,
                batch_size: 64,
                learning_rate: 0.05,
                momentum: 0.9,
                lr_decay: 0.85,
            },
            _ => TrainConfig::default(),
        }
    }
}

/// Trains a ReLU network with the given layer sizes (input first).
pub fn train_reference(
    data: &Dataset,
    arch: &[usize],
    seed: u64,
    cfg: &TrainConfig,
) -> Result<NetworkModel> {
    if !(3..=4).contains(&arch.len()) {
        return Err(Error::Constraint(format!(
            "architecture {arch:?} must have three or four layers"
        )));
    }
    if arch[0] != data.n_features || *arch.last().unwrap() != data.n_classes {
        return Err(Error::Dimension(format!(
            "architecture {arch:?} does not fit {} features / {} classes",
            data.n_features, data.n_classes
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || data.train.is_empty() {
        return Err(Error::Constraint("empty training schedule".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers: Vec<Layer> = arch
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == arch.len() {
                Activation::None
            } else {
                Activation::Relu
            };
            let mut l = Layer::zeros(w[1], w[0], act);
            let he = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).unwrap();
            l.weights.iter_mut().for_each(|x| *x = he.sample(&mut rng));
            l
        })
        .collect();

    let mut velocity: Vec<Layer> = layers
        .iter()
        .map(|l| Layer::zeros(l.rows, l.cols, l.activation))
        .collect();
    let mut grad = velocity.clone();
    let mut order = data.train.clone();
    let mut lr = cfg.learning_rate;
    let mut acts: Vec<Vec<f64>> = arch.iter().map(|&n| vec![0.0; n]).collect();
    let mut deltas: Vec<Vec<f64>> = arch.iter().map(|&n| vec![0.0; n]).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| {
                g.weights.iter_mut().for_each(|x| *x = 0.0);
                g.biases.iter_mut().for_each(|x| *x = 0.0);
            });
            for &s in batch {
                acts[0].copy_from_slice(data.sample(s));
                forward(&layers, &mut acts);
                loss_sum += softmax_delta(
                    acts.last().unwrap(),
                    data.labels[s] as usize,
                    deltas.last_mut().unwrap(),
                );
                backward(&layers, &acts, &mut deltas, &mut grad);
            }
            let scale = lr / batch.len() as f64;
            for ((l, v), g) in layers.iter_mut().zip(&mut velocity).zip(&grad) {
                let update = |p: &mut [f64], v: &mut [f64], g: &[f64]| {
                    for ((p, v), g) in p.iter_mut().zip(v).zip(g) {
                        *v = cfg.momentum * *v - scale * g;
                        *p += *v;
                    }
                };
                update(&mut l.weights, &mut v.weights, &g.weights);
                update(&mut l.biases, &mut v.biases, &g.biases);
            }
        }
        if !loss_sum.is_finite() || layers.iter().any(|l| l.weights.iter().any(|x| !x.is_finite())) {
            return Err(Error::Training {
                seed,
                epoch,
                msg: format!("loss became {loss_sum}"),
            });
        }
        lr *= cfg.lr_decay;
    }

    NetworkModel::new(
        ModelMeta {
            dataset: data.name.clone(),
            seed,
            arch: arch.to_vec(),
            norm: data.norm.clone(),
        },
        layers,
    )
}

fn forward(layers: &[Layer], acts: &mut [Vec<f64>]) {
    for (i, l) in layers.iter().enumerate() {
        let (head, tail) = acts.split_at_mut(i + 1);
        let x = &head[i];
        let y = &mut tail[0];
        for (r, out) in y.iter_mut().enumerate() {
            let z = dot(l.row(r), x) + l.biases[r];
            *out = match l.activation {
                Activation::Relu => z.max(0.0),
                Activation::None => z,
            };
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes dLoss/dLogits into `delta` and returns the loss.
fn softmax_delta(logits: &[f64], label: usize, delta: &mut [f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (d, &x) in delta.iter_mut().zip(logits) {
        *d = (x - m).exp();
        z += *d;
    }
    for d in delta.iter_mut() {
        *d /= z;
    }
    let loss = -(delta[label].max(1e-300)).ln();
    delta[label] -= 1.0;
    loss
}

fn backward(layers: &[Layer], acts: &[Vec<f64>], deltas: &mut [Vec<f64>], grad: &mut [Layer]) {
    for i in (0..layers.len()).rev() {
        let l = &layers[i];
        let (lower, upper) = deltas.split_at_mut(i + 1);
        let delta = &upper[0];
        let x = &acts[i];
        let g = &mut grad[i];
        for r in 0..l.rows {
            let d = delta[r];
            if d == 0.0 {
                continue;
            }
            g.biases[r] += d;
            let row = &mut g.weights[r * l.cols..(r + 1) * l.cols];
            for (gw, &xv) in row.iter_mut().zip(x) {
                *gw += d * xv;
            }
        }
        if i > 0 {
            let prev = &mut lower[i];
            prev.iter_mut().for_each(|p| *p = 0.0);
            for r in 0..l.rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                for (p, &w) in prev.iter_mut().zip(l.row(r)) {
                    *p += d * w;
                }
            }
            // ReLU derivative on the hidden activation
            if layers[i - 1].activation == Activation::Relu {
                for (p, &a) in prev.iter_mut().zip(&acts[i]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Dataset {
        // two separable clusters in the unit square
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let t = i as f64 / 60.0;
            if i % 2 == 0 {
                features.extend([0.1 + 0.2 * t, 0.2 + 0.1 * t]);
                labels.push(0);
            } else {
                features.extend([0.8 - 0.2 * t, 0.9 - 0.1 * t]);
                labels.push(1);
            }
        }
        let mut d = Dataset {
            name: "blobs".into(),
            n_features: 2,
            n_classes: 2,
            features,
            labels,
            train: vec![],
            test: vec![],
            norm: "none".into(),
        };
        d.shuffle_split(20, 1).unwrap();
        d
    }

    #[test]
    fn learns_separable_data_deterministically() {
        let d = blobs();
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        let m1 = train_reference(&d, &[2, 8, 2], 5, &cfg).unwrap();
        let m2 = train_reference(&d, &[2, 8, 2], 5, &cfg).unwrap();
        assert_eq!(m1.to_json().unwrap(), m2.to_json().unwrap());
        assert_eq!(super::super::evaluate_reference(&m1, &d).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_architectures() {
        let d = blobs();
        let cfg = TrainConfig::default();
        assert!(train_reference(&d, &[2, 2], 0, &cfg).is_err());
        assert!(train_reference(&d, &[3, 8, 2], 0, &cfg).is_err());
        assert!(train_reference(&d, &[2, 4, 4, 4, 2], 0, &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let d = blobs();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 5,
            ..TrainConfig::default()
        };
        match train_reference(&d, &[2, 8, 2], 9, &cfg) {
            Err(Error::Training { seed: 9, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let d = blobs();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let m = train_reference(&d, &[2, 5, 3, 2], 2, &cfg).unwrap();
        let s = d.train[0];
        let label = d.labels[s] as usize;
        let loss = |layers: &[Layer]| {
            let mut acts: Vec<Vec<f64>> = [2, 5, 3, 2].iter().map(|&n| vec![0.0; n]).collect();
            acts[0].copy_from_slice(d.sample(s));
            forward(layers, &mut acts);
            let mut delta = vec![0.0; 2];
            softmax_delta(acts.last().unwrap(), label, &mut delta)
        };
        let mut acts: Vec<Vec<f64>> = [2, 5, 3, 2].iter().map(|&n| vec![0.0; n]).collect();
        let mut deltas = acts.clone();
        acts[0].copy_from_slice(d.sample(s));
        forward(&m.layers, &mut acts);
        softmax_delta(acts.last().unwrap(), label, deltas.last_mut().unwrap());
        let mut grad: Vec<Layer> = m.layers.iter().map(|l| Layer::zeros(l.rows, l.cols, l.activation)).collect();
        backward(&m.layers, &acts, &mut deltas, &mut grad);
        for li in 0..3 {
            for wi in 0..m.layers[li].weights.len() {
                let mut plus = m.layers.clone();
                plus[li].weights[wi] += 1e-6;
                let mut minus = m.layers.clone();
                minus[li].weights[wi] -= 1e-6;
                let fd = (loss(&plus) - loss(&minus)) / 2e-6;
                assert!((fd - grad[li].weights[wi]).abs() < 1e-5, "layer {li} weight {wi}");
            }
        }
    }
}
