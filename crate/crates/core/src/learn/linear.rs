use serde::{Deserialize, Serialize};

use super::{Classifier, Dataset, LearnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub l2: f64,
    pub epochs: usize,
    /// Gradient step; `None` picks `1 / (2 (d + 1))`, which is below the
    /// inverse Lipschitz constant of the loss on standardised features.
    pub step: Option<f64>,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self { l2: 1e-3, epochs: 2000, step: None }
    }
}

/// One-vs-rest squared-hinge classifiers on z-scored features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub features: Vec<String>,
    pub classes: Vec<String>,
    pub params: LinearParams,
    pub seed: u64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Per class: weights followed by the bias.
    pub weights: Vec<Vec<f64>>,
}

impl LinearModel {
    fn standardise(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    /// Raw one-vs-rest margins.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardise(x);
        self.weights
            .iter()
            .map(|w| {
                let (b, w) = w.split_last().expect("bias present");
                w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b
            })
            .collect()
    }
}

impl Classifier for LinearModel {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn feature_names(&self) -> &[String] {
        &self.features
    }

    /// Softmax of the margins. This is a ranking score, not a calibrated probability.
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scores(x);
        let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (v - top).exp()).collect();
        let sum: f64 = e.iter().sum();
        e.into_iter().map(|v| v / sum).collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        super::argmax(&self.scores(x))
    }
}

/// Full-batch gradient descent from zero weights, so training is
/// deterministic; the seed is recorded for provenance only.
pub fn train_linear(data: &Dataset, params: &LinearParams, seed: u64) -> Result<LinearModel, LearnError> {
    data.check_trainable()?;
    let d = data.n_features();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for row in &data.x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for row in &data.x {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let z: Vec<Vec<f64>> = data
        .x
        .iter()
        .map(|row| row.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let step = params.step.unwrap_or(1.0 / (2.0 * (d as f64 + 1.0)));

    let weights = (0..data.classes.len())
        .map(|k| {
            let target: Vec<f64> = data.y.iter().map(|&c| if c == k { 1.0 } else { -1.0 }).collect();
            let mut w = vec![0.0; d + 1];
            let mut grad = vec![0.0; d + 1];
            for _ in 0..params.epochs {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for (zi, &yi) in z.iter().zip(&target) {
                    let margin = zi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d];
                    let slack = 1.0 - yi * margin;
                    if slack > 0.0 {
                        let c = -2.0 * slack * yi / n;
                        for (g, v) in grad.iter_mut().zip(zi) {
                            *g += c * v;
                        }
                        grad[d] += c;
                    }
                }
                for j in 0..d {
                    grad[j] += params.l2 * w[j];
                }
                for (wj, g) in w.iter_mut().zip(&grad) {
                    *wj -= step * g;
                }
            }
            w
        })
        .collect();

    Ok(LinearModel {
        features: data.registry.names.clone(),
        classes: data.classes.clone(),
        params: *params,
        seed,
        mean,
        scale,
        weights,
    })
}
