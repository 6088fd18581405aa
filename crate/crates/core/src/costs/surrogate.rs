//! Learned self-collision distance: a small ReLU network over the positional
//! encoding `[sin θ, cos θ]`, trained on the capsule oracle.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::KinematicChain;

/// `[sin θ₀ … sin θ_{d−1}, cos θ₀ … cos θ_{d−1}]`.
pub fn positional_encoding(q: &[f64]) -> DVector<f64> {
    let d = q.len();
    DVector::from_fn(2 * d, |i, _| if i < d { q[i].sin() } else { q[i - d].cos() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub samples: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            samples: 50_000,
            hidden: vec![256, 128, 64],
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub final_train_loss: f64,
    pub holdout_mae: f64,
    pub holdout_sign_agreement: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Dense {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

impl Dense {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionSurrogate {
    dof: usize,
    layers: Vec<Dense>,
    target_mean: f64,
    target_std: f64,
    pub report: Option<SurrogateReport>,
}

impl CollisionSurrogate {
    fn init(dof: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![2 * dof];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let he = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
                Dense {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| he.sample(rng)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        CollisionSurrogate {
            dof,
            layers,
            target_mean: 0.0,
            target_std: 1.0,
            report: None,
        }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// Layer widths from input to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.ncols()];
        s.extend(self.layers.iter().map(|l| l.weights.nrows()));
        s
    }

    /// Network output in standardized units, one column per sample.
    fn forward(&self, x: DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut a = x;
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a);
            if i < last {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        a
    }

    /// Predicted penetration depth (m) for one configuration.
    pub fn predict(&self, q: &[f64]) -> f64 {
        let x = positional_encoding(q);
        let y = self.forward(DMatrix::from_column_slice(x.len(), 1, x.as_slice()));
        y[(0, 0)] * self.target_std + self.target_mean
    }

    pub fn predict_batch(&self, qs: &[Vec<f64>]) -> Vec<f64> {
        let x = encode_batch(qs.iter().map(|q| q.as_slice()), 2 * self.dof);
        let y = self.forward(x);
        y.iter().map(|v| v * self.target_std + self.target_mean).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            kind: "surrogate",
            message: e.to_string(),
        })
    }
}

fn encode_batch<'a>(qs: impl Iterator<Item = &'a [f64]>, rows: usize) -> DMatrix<f64> {
    let cols: Vec<f64> = qs.flat_map(|q| positional_encoding(q).iter().copied().collect::<Vec<f64>>()).collect();
    DMatrix::from_vec(rows, cols.len() / rows, cols)
}

struct Adam {
    m: Vec<(DMatrix<f64>, DVector<f64>)>,
    v: Vec<(DMatrix<f64>, DVector<f64>)>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &CollisionSurrogate) -> Self {
        let zeros: Vec<_> = net
            .layers
            .iter()
            .map(|l| (l.weights.map(|_| 0.0), l.bias.map(|_| 0.0)))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut CollisionSurrogate, grads: &[(DMatrix<f64>, DVector<f64>)], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[k];
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            update(layer.weights.as_mut_slice(), gw.as_slice(), mw.as_mut_slice(), vw.as_mut_slice());
            update(layer.bias.as_mut_slice(), gb.as_slice(), mb.as_mut_slice(), vb.as_mut_slice());
        }
    }
}

/// Mean-squared-error gradient for one mini-batch; returns the batch loss.
fn backprop(
    net: &CollisionSurrogate,
    x: DMatrix<f64>,
    y: &DMatrix<f64>,
) -> (f64, Vec<(DMatrix<f64>, DVector<f64>)>) {
    let last = net.layers.len() - 1;
    let mut acts = vec![x];
    for (i, layer) in net.layers.iter().enumerate() {
        let mut a = layer.apply(acts.last().expect("input present"));
        if i < last {
            a.apply(|v| *v = v.max(0.0));
        }
        acts.push(a);
    }
    let b = y.ncols() as f64;
    let err = &acts[last + 1] - y;
    let loss = err.norm_squared() / b;
    let mut delta = err * (2.0 / b);
    let mut grads = Vec::with_capacity(net.layers.len());
    for i in (0..=last).rev() {
        let gw = &delta * acts[i].transpose();
        let gb = delta.column_sum();
        if i > 0 {
            let mut back = net.layers[i].weights.transpose() * &delta;
            back.zip_apply(&acts[i], |d, a| {
                if a <= 0.0 {
                    *d = 0.0
                }
            });
            delta = back;
        }
        grads.push((gw, gb));
    }
    grads.reverse();
    (loss, grads)
}

/// Uniform configurations within the joint limits and their oracle
/// penetration depths.
pub fn oracle_samples(chain: &KinematicChain, count: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let qs: Vec<Vec<f64>> = (0..count).map(|_| chain.sample_configuration(rng)).collect();
    let ds = qs
        .iter()
        .map(|q| chain.self_collision_distance(q).expect("sampled configuration has chain length"))
        .collect();
    (qs, ds)
}

/// Mean absolute error and sign agreement against the oracle.
pub fn compare_to_oracle(net: &CollisionSurrogate, qs: &[Vec<f64>], oracle: &[f64]) -> (f64, f64) {
    let pred = net.predict_batch(qs);
    let n = oracle.len() as f64;
    let mae = pred.iter().zip(oracle).map(|(p, o)| (p - o).abs()).sum::<f64>() / n;
    let agree = pred.iter().zip(oracle).filter(|(p, o)| (**p > 0.0) == (**o > 0.0)).count() as f64 / n;
    (mae, agree)
}

pub fn train_collision_surrogate(chain: &KinematicChain, config: &TrainingConfig) -> Result<CollisionSurrogate> {
    if config.samples < 1000 {
        return Err(Error::Config(format!("need at least 1000 samples, got {}", config.samples)));
    }
    if chain.self_collision_pairs.is_empty() {
        return Err(Error::Config(format!("chain `{}` has no self-collision pairs", chain.name)));
    }
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) || config.batch_size == 0 {
        return Err(Error::Config("holdout_fraction must lie in (0, 1) and batch_size be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (qs, ds) = oracle_samples(chain, config.samples, &mut rng);
    let holdout = ((config.samples as f64) * config.holdout_fraction).round() as usize;
    let split = config.samples - holdout;
    let (train_q, test_q) = qs.split_at(split);
    let (train_d, test_d) = ds.split_at(split);

    let mut net = CollisionSurrogate::init(chain.dof(), &config.hidden, &mut rng);
    let mean = train_d.iter().sum::<f64>() / split as f64;
    let var = train_d.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / split as f64;
    net.target_mean = mean;
    net.target_std = var.sqrt().max(1e-9);

    let inputs = encode_batch(train_q.iter().map(|q| q.as_slice()), 2 * chain.dof());
    let targets: Vec<f64> = train_d.iter().map(|d| (d - mean) / net.target_std).collect();
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..split).collect();
    let mut last_finite = f64::NAN;
    for epoch in 0..config.epochs {
        let lr = config.learning_rate
            * if epoch >= config.epochs * 3 / 4 {
                0.25
            } else if epoch >= config.epochs / 2 {
                0.5
            } else {
                1.0
            };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = DMatrix::from_fn(inputs.nrows(), chunk.len(), |r, c| inputs[(r, chunk[c])]);
            let y = DMatrix::from_fn(1, chunk.len(), |_, c| targets[chunk[c]]);
            let (loss, grads) = backprop(&net, x, &y);
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut net, &grads, lr);
        }
        epoch_loss /= split as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                last_finite_loss: last_finite,
            });
        }
        last_finite = epoch_loss;
        log::debug!("surrogate epoch {epoch}: loss {epoch_loss:.5}");
    }
    let (mae, agree) = compare_to_oracle(&net, test_q, test_d);
    net.report = Some(SurrogateReport {
        train_samples: split,
        holdout_samples: holdout,
        final_train_loss: last_finite,
        holdout_mae: mae,
        holdout_sign_agreement: agree,
    });
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn encoding_of_zero() {
        let e = positional_encoding(&[0.0, 0.0, 0.0]);
        assert_eq!(e.as_slice(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn architecture_and_scalar_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = CollisionSurrogate::init(2, &[256, 128, 64], &mut rng);
        assert_eq!(net.layer_sizes(), vec![4, 256, 128, 64, 1]);
        assert!(net.predict(&[0.1, 0.2]).is_finite());
        assert_eq!(net.predict_batch(&[vec![0.0, 0.0], vec![1.0, 1.0]]).len(), 2);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = CollisionSurrogate::init(2, &[5, 3], &mut rng);
        let x = encode_batch([[0.3, -0.4].as_slice(), [1.1, 0.2].as_slice()].into_iter(), 4);
        let y = DMatrix::from_row_slice(1, 2, &[0.5, -0.2]);
        let (_, grads) = backprop(&net, x.clone(), &y);
        let loss = |n: &CollisionSurrogate| (n.forward(x.clone()) - &y).norm_squared() / 2.0;
        let h = 1e-6;
        for (k, (r, c)) in [(0, (1, 2)), (1, (2, 0)), (2, (0, 1))] {
            let orig = net.layers[k].weights[(r, c)];
            net.layers[k].weights[(r, c)] = orig + h;
            let up = loss(&net);
            net.layers[k].weights[(r, c)] = orig - h;
            let down = loss(&net);
            net.layers[k].weights[(r, c)] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grads[k].0[(r, c)]).abs() < 1e-6, "layer {k}: {fd} vs {}", grads[k].0[(r, c)]);
        }
    }

    #[test]
    fn rejects_small_sample_counts() {
        let cfg = TrainingConfig {
            samples: 10,
            ..TrainingConfig::default()
        };
        assert!(matches!(train_collision_surrogate(&fixtures::planar2(), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn diverging_training_reports_last_loss() {
        let cfg = TrainingConfig {
            samples: 1000,
            hidden: vec![8],
            epochs: 50,
            learning_rate: 1e300,
            ..TrainingConfig::default()
        };
        match train_collision_surrogate(&fixtures::planar2(), &cfg) {
            Err(Error::TrainingDiverged { .. }) => {}
            other => panic!("expected divergence, got {:?}", other.map(|n| n.report)),
        }
    }

    #[test]
    fn short_training_round_trips_through_json() {
        let cfg = TrainingConfig {
            samples: 2000,
            hidden: vec![32, 16],
            epochs: 5,
            ..TrainingConfig::default()
        };
        let net = train_collision_surrogate(&fixtures::planar2(), &cfg).unwrap();
        let report = net.report.clone().unwrap();
        assert_eq!(report.train_samples + report.holdout_samples, 2000);
        let dir = std::env::temp_dir().join(format!("surrogate-{}.json", std::process::id()));
        net.save(&dir).unwrap();
        let back = CollisionSurrogate::load(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(back.predict(&[0.4, 2.9]), net.predict(&[0.4, 2.9]));
    }
}
