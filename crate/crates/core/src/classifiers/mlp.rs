//! Single-hidden-layer perceptron: logistic hidden units, softmax outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, ClassProbabilities, Classifier};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softmax};

/// Flat parameter gradient, laid out like [`MlpModel::params`].
pub type MlpGradient = Vec<f64>;

/// `N -> H -> K` network. Inputs are standardized with stored offsets and
/// scales before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
    pub input_offset: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// Hidden weights, row-major `H x N`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Output weights, row-major `K x H`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

pub(crate) struct Activations {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

impl MlpModel {
    pub(crate) fn init<R: Rng>(
        n_inputs: usize,
        n_hidden: usize,
        n_outputs: usize,
        input_offset: Vec<f64>,
        input_scale: Vec<f64>,
        rng: &mut R,
    ) -> Self {
        let r1 = 1.0 / (n_inputs as f64).sqrt();
        let r2 = 1.0 / (n_hidden as f64).sqrt();
        let w1 = (0..n_hidden * n_inputs).map(|_| rng.random_range(-r1..r1)).collect();
        let b1 = (0..n_hidden).map(|_| rng.random_range(-r1..r1)).collect();
        let w2 = (0..n_outputs * n_hidden).map(|_| rng.random_range(-r2..r2)).collect();
        let b2 = vec![0.0; n_outputs];
        MlpModel {
            n_inputs,
            n_hidden,
            n_outputs,
            input_offset,
            input_scale,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, h, k) = (self.n_inputs, self.n_hidden, self.n_outputs);
        if n == 0 || h == 0 || k < 2 {
            return Err(Error::Validation(format!("invalid layer sizes {n} -> {h} -> {k}")));
        }
        let shapes_ok = self.input_offset.len() == n
            && self.input_scale.len() == n
            && self.w1.len() == h * n
            && self.b1.len() == h
            && self.w2.len() == k * h
            && self.b2.len() == k;
        if !shapes_ok {
            return Err(Error::Validation("parameter arrays do not match layer sizes".into()));
        }
        if self.params().iter().chain(&self.input_offset).any(|v| !v.is_finite())
            || self.input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::Validation("non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All trainable parameters as `[w1, b1, w2, b2]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.extend_from_slice(&self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, b2) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2.copy_from_slice(b2);
    }

    /// Mask selecting the weight (non-bias) entries of the parameter vector.
    pub(crate) fn weight_mask(&self) -> Vec<bool> {
        let mut m = vec![true; self.w1.len()];
        m.extend(std::iter::repeat_n(false, self.b1.len()));
        m.extend(std::iter::repeat_n(true, self.w2.len()));
        m.extend(std::iter::repeat_n(false, self.b2.len()));
        m
    }

    /// Output-layer pre-activations.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (_, hidden) = self.hidden_layer(x);
        self.output_logits(&hidden)
    }

    fn hidden_layer(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let input: Vec<f64> = x
            .iter()
            .zip(&self.input_offset)
            .zip(&self.input_scale)
            .map(|((v, o), s)| (v - o) / s)
            .collect();
        let hidden = (0..self.n_hidden)
            .map(|m| {
                let row = &self.w1[m * self.n_inputs..(m + 1) * self.n_inputs];
                sigmoid(row.iter().zip(&input).map(|(w, v)| w * v).sum::<f64>() + self.b1[m])
            })
            .collect();
        (input, hidden)
    }

    fn output_logits(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.n_outputs)
            .map(|j| {
                let row = &self.w2[j * self.n_hidden..(j + 1) * self.n_hidden];
                row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[j]
            })
            .collect()
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Activations {
        let (input, hidden) = self.hidden_layer(x);
        let probs = softmax(&self.output_logits(&hidden));
        Activations { input, hidden, probs }
    }

    /// Accumulates into `grad` the parameter gradient given `d_probs`, the
    /// derivative of the case loss with respect to the output probabilities.
    pub(crate) fn backward(&self, act: &Activations, d_probs: &[f64], scale: f64, grad: &mut [f64]) {
        let (n, h, k) = (self.n_inputs, self.n_hidden, self.n_outputs);
        let mean_g: f64 = act.probs.iter().zip(d_probs).map(|(p, g)| p * g).sum();
        let d_logits: Vec<f64> = act
            .probs
            .iter()
            .zip(d_probs)
            .map(|(p, g)| scale * p * (g - mean_g))
            .collect();
        let (g_w1, rest) = grad.split_at_mut(h * n);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(k * h);
        let mut d_hidden = vec![0.0; h];
        for j in 0..k {
            let dz = d_logits[j];
            g_b2[j] += dz;
            for m in 0..h {
                g_w2[j * h + m] += dz * act.hidden[m];
                d_hidden[m] += dz * self.w2[j * h + m];
            }
        }
        for m in 0..h {
            let da = d_hidden[m] * act.hidden[m] * (1.0 - act.hidden[m]);
            g_b1[m] += da;
            for i in 0..n {
                g_w1[m * n + i] += da * act.input[i];
            }
        }
    }
}

impl Classifier for MlpModel {
    fn n_classes(&self) -> usize {
        self.n_outputs
    }
    fn n_features(&self) -> usize {
        self.n_inputs
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        check_dim(self.n_inputs, x)?;
        Ok(ClassProbabilities::from_normalized(self.forward(x).probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        MlpModel::init(3, 4, 3, vec![0.0; 3], vec![1.0; 3], &mut rng)
    }

    #[test]
    fn logit_shift_invariance() {
        let m = net();
        let mut shifted = m.clone();
        for b in &mut shifted.b2 {
            *b += 37.25;
        }
        for x in [[0.1, -2.0, 3.0], [10.0, 0.0, -7.5]] {
            let p = m.predict(&x).unwrap();
            let q = shifted.predict(&x).unwrap();
            for (a, b) in p.iter().zip(q.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let mut m = net();
        let p: Vec<f64> = (0..m.n_params()).map(|i| i as f64 * 0.01).collect();
        m.set_params(&p);
        assert_eq!(m.params(), p);
        assert_eq!(m.weight_mask().iter().filter(|w| **w).count(), 12 + 12);
    }

    #[test]
    fn extreme_inputs_stay_normalized() {
        let m = net();
        let p = m.predict(&[1e6, -1e6, 1e6]).unwrap();
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(m.validate().is_ok());
    }
}
