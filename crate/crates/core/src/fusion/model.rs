use rand::Rng;

use super::input::{hidden_size, input_dim, FusionInput};
use crate::error::{Error, Result};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// One-hidden-layer network: ReLU hidden units, sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub window: usize,
    pub input_dim: usize,
    pub hidden_size: usize,
    /// `hidden_size x input_dim`, row-major.
    pub weights_1: Vec<f64>,
    pub bias_1: Vec<f64>,
    pub weights_2: Vec<f64>,
    pub bias_2: f64,
}

/// Gradient of a loss with respect to every [`FusionModel`] parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights_1: Vec<f64>,
    pub bias_1: Vec<f64>,
    pub weights_2: Vec<f64>,
    pub bias_2: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl FusionModel {
    /// All-zero parameters for window `window` with the default hidden width.
    pub fn zeros(window: usize) -> Self {
        Self::zeros_with_hidden(input_dim(window), hidden_size(window), window)
    }

    pub(crate) fn zeros_with_hidden(input_dim: usize, hidden_size: usize, window: usize) -> Self {
        FusionModel {
            window,
            input_dim,
            hidden_size,
            weights_1: vec![0.0; hidden_size * input_dim],
            bias_1: vec![0.0; hidden_size],
            weights_2: vec![0.0; hidden_size],
            bias_2: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(window: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(window);
        let limit_1 = (6.0 / (m.input_dim + m.hidden_size) as f64).sqrt();
        let limit_2 = (6.0 / (m.hidden_size + 1) as f64).sqrt();
        m.weights_1.iter_mut().for_each(|w| *w = rng.random_range(-limit_1..limit_1));
        m.weights_2.iter_mut().for_each(|w| *w = rng.random_range(-limit_2..limit_2));
        m
    }

    pub fn parameter_count(&self) -> usize {
        self.weights_1.len() + self.bias_1.len() + self.weights_2.len() + 1
    }

    /// Parameters in export order: weights_1, bias_1, weights_2, bias_2.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        p.extend_from_slice(&self.weights_1);
        p.extend_from_slice(&self.bias_1);
        p.extend_from_slice(&self.weights_2);
        p.push(self.bias_2);
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.parameter_count() {
            return Err(Error::Shape {
                expected: self.parameter_count(),
                actual: p.len(),
            });
        }
        let (w1, rest) = p.split_at(self.weights_1.len());
        let (b1, rest) = rest.split_at(self.bias_1.len());
        let (w2, rest) = rest.split_at(self.weights_2.len());
        self.weights_1.copy_from_slice(w1);
        self.bias_1.copy_from_slice(b1);
        self.weights_2.copy_from_slice(w2);
        self.bias_2 = rest[0];
        Ok(())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual: len,
            });
        }
        Ok(())
    }

    /// Output logit; `hidden` receives the post-ReLU activations.
    fn logit_into(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let mut z = self.bias_2;
        for (h, slot) in hidden.iter_mut().enumerate() {
            let row = &self.weights_1[h * self.input_dim..(h + 1) * self.input_dim];
            let pre: f64 = self.bias_1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *slot = pre.max(0.0);
            z += self.weights_2[h] * *slot;
        }
        z
    }

    pub fn forward_slice(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let mut hidden = vec![0.0; self.hidden_size];
        Ok(sigmoid(self.logit_into(x, &mut hidden)))
    }

    /// Fused similarity in `[0, 1]`.
    pub fn forward(&self, x: &FusionInput) -> Result<f64> {
        self.check_dim(x.dim())?;
        let mut buf = vec![0.0; self.input_dim];
        x.write_into(&mut buf);
        self.forward_slice(&buf)
    }

    /// Mean binary cross-entropy over `batch` and its gradient.
    pub fn loss_and_gradients(&self, batch: &[(&[f64], f64)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let mut g = Gradients {
            weights_1: vec![0.0; self.weights_1.len()],
            bias_1: vec![0.0; self.hidden_size],
            weights_2: vec![0.0; self.hidden_size],
            bias_2: 0.0,
        };
        let mut hidden = vec![0.0; self.hidden_size];
        let mut total = 0.0;
        for &(x, y) in batch {
            self.check_dim(x.len())?;
            let s = sigmoid(self.logit_into(x, &mut hidden));
            total += bce(s, y);
            // d loss / d logit; zero where the clamp is active
            let dz = if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&s) { s - y } else { 0.0 };
            if dz == 0.0 {
                continue;
            }
            g.bias_2 += dz;
            for h in 0..self.hidden_size {
                g.weights_2[h] += dz * hidden[h];
                if hidden[h] > 0.0 {
                    let dpre = dz * self.weights_2[h];
                    g.bias_1[h] += dpre;
                    let row = &mut g.weights_1[h * self.input_dim..(h + 1) * self.input_dim];
                    row.iter_mut().zip(x).for_each(|(gw, v)| *gw += dpre * v);
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        g.weights_1.iter_mut().for_each(|v| *v *= scale);
        g.bias_1.iter_mut().for_each(|v| *v *= scale);
        g.weights_2.iter_mut().for_each(|v| *v *= scale);
        g.bias_2 *= scale;
        Ok((total * scale, g))
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.weights_1.len() + 2 * self.bias_1.len() + 1);
        p.extend_from_slice(&self.weights_1);
        p.extend_from_slice(&self.bias_1);
        p.extend_from_slice(&self.weights_2);
        p.push(self.bias_2);
        p
    }
}

/// Binary cross-entropy of one prediction with the clamp applied.
pub fn bce(prediction: f64, label: f64) -> f64 {
    let s = prediction.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(label * s.ln() + (1.0 - label) * (1.0 - s).ln())
}

/// Summed (unnormalized) binary cross-entropy of `model` over `batch`.
pub fn loss(batch: &[(FusionInput, f64)], model: &FusionModel) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    batch
        .iter()
        .map(|(x, y)| model.forward(x).map(|s| bce(s, *y)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(v: &[f64]) -> FusionInput {
        FusionInput {
            s_a: v[0],
            s_t: v[1..].to_vec(),
        }
    }

    #[test]
    fn zero_model_outputs_one_half() {
        let m = FusionModel::zeros(3);
        let x = input(&[0.9, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        assert_eq!(m.forward(&x).unwrap(), 0.5);
    }

    #[test]
    fn large_output_bias_saturates() {
        let mut m = FusionModel::zeros(0);
        m.bias_2 = 50.0;
        let s = m.forward(&input(&[0.2, 0.3])).unwrap();
        assert!((1.0 - s) < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let m = FusionModel::zeros(2);
        assert!(matches!(
            m.forward(&input(&[0.1, 0.2])),
            Err(Error::Shape { expected: 6, actual: 2 })
        ));
    }

    #[test]
    fn matches_straight_line_evaluation() {
        // 3 inputs, 2 hidden units
        let mut m = FusionModel::zeros_with_hidden(3, 2, 0);
        m.weights_1 = vec![0.3, -0.8, 1.1, -0.4, 0.25, 0.6];
        m.bias_1 = vec![0.05, -0.1];
        m.weights_2 = vec![1.7, -0.9];
        m.bias_2 = 0.2;
        let x = [0.7, 0.2, 0.45];
        let h0 = (0.05 + 0.3 * 0.7 + -0.8 * 0.2 + 1.1 * 0.45_f64).max(0.0);
        let h1 = (-0.1 + -0.4 * 0.7 + 0.25 * 0.2 + 0.6 * 0.45_f64).max(0.0);
        let z = 0.2 + 1.7 * h0 + -0.9 * h1;
        let expected = 1.0 / (1.0 + (-z as f64).exp());
        assert!((m.forward_slice(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_cases() {
        let mut m = FusionModel::zeros(0);
        let x = input(&[0.5, 0.5]);
        // S_F = 0.5, y = 1: ln 2
        let l = loss(&[(x.clone(), 1.0)], &m).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        // duplicating the batch doubles the sum
        let two = loss(&[(x.clone(), 1.0), (x.clone(), 1.0)], &m).unwrap();
        assert_eq!(two, 2.0 * l);
        m.bias_2 = 800.0;
        let perfect = loss(&[(x, 1.0)], &m).unwrap();
        assert!(perfect <= 1e-6);
        assert!(loss(&[], &m).is_err());
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = FusionModel::init(2, &mut rng);
            let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let s = m.forward_slice(&x).unwrap();
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn monotone_in_appearance_for_non_negative_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut m = FusionModel::init(2, &mut rng);
            m.weights_1.iter_mut().for_each(|w| *w = w.abs());
            m.weights_2.iter_mut().for_each(|w| *w = w.abs());
            let mut x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let mut last = 0.0;
            for step in 0..=10 {
                x[0] = step as f64 / 10.0;
                let s = m.forward_slice(&x).unwrap();
                assert!(s >= last);
                last = s;
            }
        }
    }
}
