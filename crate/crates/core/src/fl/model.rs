//! Small differentiable models over flat parameter vectors, and local SGD.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::FlError;

pub type ModelVector = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelFamily {
    /// Multinomial logistic regression: `W[c][f]` then `b[c]`.
    Logistic,
    /// One tanh hidden layer: `W1[h][f]`, `b1[h]`, `W2[c][h]`, `b2[c]`.
    Mlp { hidden: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub num_features: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn logistic(num_features: usize, num_classes: usize) -> Self {
        ModelSpec {
            family: ModelFamily::Logistic,
            num_features,
            num_classes,
        }
    }

    pub fn dimension(&self) -> usize {
        let (f, c) = (self.num_features, self.num_classes);
        match self.family {
            ModelFamily::Logistic => f * c + c,
            ModelFamily::Mlp { hidden: h } => h * f + h + c * h + c,
        }
    }

    /// Zeros for logistic regression; small seeded uniform weights for the MLP.
    pub fn initial(&self, seed: u64) -> ModelVector {
        match self.family {
            ModelFamily::Logistic => vec![0.0; self.dimension()],
            ModelFamily::Mlp { hidden } => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let s1 = (1.0 / self.num_features as f64).sqrt();
                let s2 = (1.0 / hidden as f64).sqrt();
                let (f, c) = (self.num_features, self.num_classes);
                let mut w = Vec::with_capacity(self.dimension());
                w.extend((0..hidden * f).map(|_| rng.random_range(-s1..s1)));
                w.extend(std::iter::repeat_n(0.0, hidden));
                w.extend((0..c * hidden).map(|_| rng.random_range(-s2..s2)));
                w.extend(std::iter::repeat_n(0.0, c));
                w
            }
        }
    }

    fn check(&self, params: &[f64], data: &Dataset) -> Result<(), FlError> {
        if params.len() != self.dimension() {
            return Err(FlError::Dimension {
                expected: self.dimension(),
                actual: params.len(),
            });
        }
        if data.num_features() != self.num_features || data.num_classes() != self.num_classes {
            return Err(FlError::DataShape);
        }
        Ok(())
    }

    /// Class scores for one sample; `hidden` receives the MLP activations.
    fn forward(&self, params: &[f64], x: &[f64], hidden: &mut Vec<f64>, logits: &mut Vec<f64>) {
        let (f, c) = (self.num_features, self.num_classes);
        logits.clear();
        match self.family {
            ModelFamily::Logistic => {
                let (w, b) = params.split_at(f * c);
                for k in 0..c {
                    logits.push(b[k] + dot(&w[k * f..(k + 1) * f], x));
                }
            }
            ModelFamily::Mlp { hidden: h } => {
                let (w1, rest) = params.split_at(h * f);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                hidden.clear();
                for j in 0..h {
                    hidden.push((b1[j] + dot(&w1[j * f..(j + 1) * f], x)).tanh());
                }
                for k in 0..c {
                    logits.push(b2[k] + dot(&w2[k * h..(k + 1) * h], hidden));
                }
            }
        }
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        let (mut h, mut z) = (Vec::new(), Vec::new());
        self.forward(params, x, &mut h, &mut z);
        argmax(&z)
    }

    /// Mean cross-entropy over `data`.
    pub fn loss(&self, params: &[f64], data: &Dataset) -> Result<f64, FlError> {
        self.check(params, data)?;
        if data.is_empty() {
            return Err(FlError::EmptyDataset);
        }
        let (mut h, mut z) = (Vec::new(), Vec::new());
        let mut total = 0.0;
        for i in 0..data.len() {
            self.forward(params, data.row(i), &mut h, &mut z);
            total += log_sum_exp(&z) - z[data.label(i)];
        }
        Ok(total / data.len() as f64)
    }

    /// Adds the mean cross-entropy gradient over `batch` into `grad`.
    fn accumulate_gradient(&self, params: &[f64], data: &Dataset, batch: &[usize], grad: &mut [f64]) {
        let (f, c) = (self.num_features, self.num_classes);
        let scale = 1.0 / batch.len() as f64;
        let (mut h, mut z) = (Vec::new(), Vec::new());
        for &i in batch {
            let x = data.row(i);
            self.forward(params, x, &mut h, &mut z);
            softmax_in_place(&mut z);
            z[data.label(i)] -= 1.0;
            match self.family {
                ModelFamily::Logistic => {
                    let (gw, gb) = grad.split_at_mut(f * c);
                    for k in 0..c {
                        let e = z[k] * scale;
                        axpy(&mut gw[k * f..(k + 1) * f], e, x);
                        gb[k] += e;
                    }
                }
                ModelFamily::Mlp { hidden: nh } => {
                    let w2 = &params[nh * f + nh..nh * f + nh + c * nh];
                    let (gw1, rest) = grad.split_at_mut(nh * f);
                    let (gb1, rest) = rest.split_at_mut(nh);
                    let (gw2, gb2) = rest.split_at_mut(c * nh);
                    let mut dh = vec![0.0; nh];
                    for k in 0..c {
                        let e = z[k] * scale;
                        axpy(&mut gw2[k * nh..(k + 1) * nh], e, &h);
                        gb2[k] += e;
                        axpy(&mut dh, e, &w2[k * nh..(k + 1) * nh]);
                    }
                    for j in 0..nh {
                        let d = dh[j] * (1.0 - h[j] * h[j]);
                        axpy(&mut gw1[j * f..(j + 1) * f], d, x);
                        gb1[j] += d;
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Clamps every coordinate into `[-bound, bound]`; returns how many moved.
pub fn clip(w: &mut [f64], bound: f64) -> usize {
    let mut n = 0;
    for v in w.iter_mut() {
        let c = v.clamp(-bound, bound);
        if c != *v {
            n += 1;
            *v = c;
        }
    }
    n
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTask {
    pub model: ModelSpec,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Parameters are projected onto `[-W_max, W_max]` after every step.
    pub weight_bound: f64,
}

impl TrainingTask {
    pub fn new(model: ModelSpec) -> Self {
        TrainingTask {
            model,
            epochs: 5,
            learning_rate: 0.1,
            batch_size: 16,
            weight_decay: 0.0,
            weight_bound: crate::fixed::DEFAULT_WEIGHT_BOUND,
        }
    }
}

/// Minibatch SGD from `start` for `task.epochs` passes over `data`.
pub fn train_local(
    task: &TrainingTask,
    data: &Dataset,
    start: &[f64],
    seed: u64,
) -> Result<ModelVector, FlError> {
    let spec = &task.model;
    spec.check(start, data)?;
    if data.is_empty() {
        return Err(FlError::EmptyDataset);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w = start.to_vec();
    clip(&mut w, task.weight_bound);
    let mut grad = vec![0.0; w.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = task.batch_size.max(1);
    for _ in 0..task.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            spec.accumulate_gradient(&w, data, chunk, &mut grad);
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= task.learning_rate * (gi + task.weight_decay * *wi);
            }
            clip(&mut w, task.weight_bound);
        }
    }
    Ok(w)
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn evaluate(spec: &ModelSpec, params: &[f64], data: &Dataset) -> Result<f64, FlError> {
    spec.check(params, data)?;
    if data.is_empty() {
        return Err(FlError::EmptyDataset);
    }
    let correct = (0..data.len())
        .filter(|&i| spec.predict(params, data.row(i)) == data.label(i))
        .count();
    Ok(correct as f64 / data.len() as f64)
}
