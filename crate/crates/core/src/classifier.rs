//! One-vs-rest linear SVM trained with Pegasos-style stochastic subgradient
//! descent on standardized features.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::tensor::{axpy, dot, read_tensors, write_tensors, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    /// l2 regularization weight.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Per-class linear scorers over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// One row per class; the last entry of each row is the bias.
    weights: Vec<Vec<f64>>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    params: SvmParams,
    /// Best full-batch objective after each epoch, per class.
    objective_trace: Vec<Vec<f64>>,
    training_accuracy: f64,
}

fn standardization(features: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = features[0].len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for f in features {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect();
    out.push(1.0);
    out
}

fn objective(w: &[f64], xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * dot(w, x)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / xs.len() as f64
}

/// Binary Pegasos: returns the epoch-averaged iterate with the lowest
/// full-batch objective and the running-best objective per epoch.
fn pegasos(xs: &[Vec<f64>], ys: &[f64], params: &SvmParams, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let d = xs[0].len();
    let n = xs.len();
    let mut rng = seeded_rng(seed);
    let mut w = vec![0.0; d];
    let mut best_w = w.clone();
    let mut best = objective(&w, xs, ys, params.lambda);
    let mut trace = Vec::with_capacity(params.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    // Step 1 / (lambda (t + t0)) with the first step 1 / E||x||^2.
    let r2 = xs.iter().map(|x| dot(x, x)).sum::<f64>() / n as f64;
    let t0 = r2 / params.lambda;
    let radius = 1.0 / params.lambda.sqrt();
    let mut t = 0usize;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut avg = vec![0.0; d];
        for &i in &order {
            let eta = 1.0 / (params.lambda * (t as f64 + t0));
            t += 1;
            let margin = ys[i] * dot(&w, &xs[i]);
            let shrink = 1.0 - eta * params.lambda;
            w.iter_mut().for_each(|wj| *wj *= shrink);
            if margin < 1.0 {
                axpy(&mut w, eta * ys[i], &xs[i]);
            }
            // The optimum lies in the ball of radius 1 / sqrt(lambda).
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                w.iter_mut().for_each(|wj| *wj *= radius / norm);
            }
            axpy(&mut avg, 1.0, &w);
        }
        avg.iter_mut().for_each(|a| *a /= n as f64);
        for cand in [avg, w.clone()] {
            let f = objective(&cand, xs, ys, params.lambda);
            if f < best {
                best = f;
                best_w = cand;
            }
        }
        trace.push(best);
    }
    (best_w, trace)
}

/// Trains one binary scorer per class (class vs rest).
pub fn svm_fit(features: &[Vec<f64>], labels: &[usize], params: &SvmParams) -> Result<LinearModel> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let d = features[0].len();
    if let Some(i) = features.iter().position(|f| f.len() != d) {
        return Err(Error::InvalidArgument(format!("feature row {i} has the wrong length")));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    if !(params.lambda > 0.0) || params.epochs == 0 {
        return Err(Error::InvalidArgument("lambda and epochs must be positive".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; n_classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::InvalidArgument("training data has a single class".into()));
    }
    let (mean, scale) = standardization(features);
    let xs: Vec<Vec<f64>> = features.iter().map(|f| standardize(f, &mean, &scale)).collect();
    let fitted: Vec<(Vec<f64>, Vec<f64>)> = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let ys: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            pegasos(&xs, &ys, params, params.seed ^ c as u64)
        })
        .collect();
    let (weights, objective_trace) = fitted.into_iter().unzip();
    let mut model = LinearModel {
        weights,
        mean,
        scale,
        params: *params,
        objective_trace,
        training_accuracy: 0.0,
    };
    let predicted = svm_predict(&model, features)?;
    model.training_accuracy = accuracy(&predicted, labels);
    Ok(model)
}

/// Predicted class per row: highest score, lowest class index on ties.
pub fn svm_predict(model: &LinearModel, features: &[Vec<f64>]) -> Result<Vec<usize>> {
    features
        .par_iter()
        .map(|f| model.scores(f).map(|s| argmax(&s)))
        .collect()
}

pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len().max(1) as f64
}

impl LinearModel {
    /// Builds a model from raw parts (weights rows end with the bias).
    pub fn from_parts(weights: Vec<Vec<f64>>, mean: Vec<f64>, scale: Vec<f64>, params: SvmParams) -> Result<Self> {
        let d = mean.len();
        if scale.len() != d || weights.iter().any(|w| w.len() != d + 1) || weights.is_empty() {
            return Err(Error::InvalidArgument("inconsistent model dimensions".into()));
        }
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("scale entries must be positive".into()));
        }
        Ok(Self {
            weights,
            mean,
            scale,
            params,
            objective_trace: Vec::new(),
            training_accuracy: f64::NAN,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn params(&self) -> &SvmParams {
        &self.params
    }

    pub fn objective_trace(&self) -> &[Vec<f64>] {
        &self.objective_trace
    }

    pub fn training_accuracy(&self) -> f64 {
        self.training_accuracy
    }

    /// Per-class scores of one raw (unstandardized) feature vector.
    pub fn scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                left: vec![features.len()],
                right: vec![self.dim()],
            });
        }
        let x = standardize(features, &self.mean, &self.scale);
        Ok(self.weights.iter().map(|w| dot(w, &x)).collect())
    }

    /// Tensor stream: mean, scale, weights `[classes, dim + 1]`, `[lambda, epochs, seed]`.
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let k = self.n_classes();
        let tensors = [
            Tensor::from_vec(self.mean.clone())?,
            Tensor::from_vec(self.scale.clone())?,
            Tensor::new(&[k, self.dim() + 1], self.weights.concat())?,
            Tensor::from_vec(vec![self.params.lambda, self.params.epochs as f64, self.params.seed as f64])?,
        ];
        Ok(write_tensors(w, &tensors)?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let t = read_tensors(r)?;
        if t.len() != 4 || t[2].rank() != 2 || t[3].len() != 3 {
            return Err(Error::Data("malformed model file".into()));
        }
        let (k, cols) = t[2].dims2();
        let weights = (0..k).map(|i| t[2].data()[i * cols..(i + 1) * cols].to_vec()).collect();
        let p = t[3].data();
        let params = SvmParams {
            lambda: p[0],
            epochs: p[1] as usize,
            seed: p[2] as u64,
        };
        Self::from_parts(weights, t[0].data().to_vec(), t[1].data().to_vec(), params)
    }
}
