use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::FusionInput;
use super::model::{bce, FusionModel, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Negative pairs sampled per positive pair.
    pub negative_ratio: f64,
    /// Share of labeled pairs held out to pick the best epoch.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            negative_ratio: 1.0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.eps > 0.0
            && self.negative_ratio > 0.0;
        if !positive {
            return Err(Error::Config(
                "epochs, batch_size, learning_rate, eps and negative_ratio must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub input: FusionInput,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FusionModel,
    /// Epoch 0 is the untrained model.
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

fn mean_loss(model: &FusionModel, rows: &[(Vec<f64>, f64)]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (x, y) in rows {
        total += bce(model.forward_slice(x)?, *y);
    }
    Ok(total / rows.len() as f64)
}

/// Trains a fusion network with Adam on mean-reduced cross-entropy and
/// returns the parameters from the epoch with the lowest validation loss.
pub fn train(pairs: &[LabeledPair], window: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !pairs.iter().any(|p| p.label >= 0.5) {
        return Err(Error::Training("no positive pairs to train on".into()));
    }
    let dim = super::input::input_dim(window);
    if let Some(bad) = pairs.iter().find(|p| p.input.dim() != dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: bad.input.dim(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<(Vec<f64>, f64)> = pairs.iter().map(|p| (p.input.to_vec(), p.label)).collect();
    rows.shuffle(&mut rng);
    let n_val = if rows.len() >= 2 {
        ((rows.len() as f64 * cfg.validation_fraction).round() as usize).min(rows.len() - 1)
    } else {
        0
    };
    let val = rows.split_off(rows.len() - n_val);
    let train_rows = rows;
    // selection falls back to training loss when nothing is held out
    let select = |m: &FusionModel, train_loss: f64| -> Result<f64> {
        if val.is_empty() {
            Ok(train_loss)
        } else {
            mean_loss(m, &val)
        }
    };

    let mut model = FusionModel::init(window, &mut rng);
    let mut params = model.parameters();
    let mut adam = Adam::new(params.len());
    let batch_size = cfg.batch_size.min(train_rows.len());

    let initial_train = mean_loss(&model, &train_rows)?;
    let initial_val = select(&model, initial_train)?;
    let mut curve = vec![EpochRecord {
        epoch: 0,
        train_loss: initial_train,
        val_loss: initial_val,
    }];
    let mut best = (initial_val, 0, model.clone());

    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| (train_rows[i].0.as_slice(), train_rows[i].1)).collect();
            let (l, g) = model.loss_and_gradients(&batch)?;
            epoch_loss += l * chunk.len() as f64;
            adam.step(&mut params, &g.flatten(), cfg);
            model.set_parameters(&params)?;
        }
        let train_loss = epoch_loss / train_rows.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
        }
        let val_loss = select(&model, train_loss)?;
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        curve,
        best_epoch: best.1,
    })
}

/// Largest relative difference between the analytic gradient of the mean
/// loss and central finite differences with step `epsilon`.
pub fn grad_check(model: &FusionModel, batch: &[(FusionInput, f64)], epsilon: f64) -> Result<f64> {
    Ok(grad_check_detail(model, batch, epsilon)?
        .iter()
        .map(|&(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max))
}

/// Per-parameter `(analytic, numeric)` gradients in export order. The
/// numeric side is the fourth-order central difference with step `epsilon`.
pub fn grad_check_detail(model: &FusionModel, batch: &[(FusionInput, f64)], epsilon: f64) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<(Vec<f64>, f64)> = batch.iter().map(|(x, y)| (x.to_vec(), *y)).collect();
    let view: Vec<(&[f64], f64)> = rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
    let (_, g): (f64, Gradients) = model.loss_and_gradients(&view)?;
    let analytic = g.flatten();
    let base = model.parameters();
    let mut probe = model.clone();
    let mut p = base.clone();
    let mut loss_at = |i: usize, offset: f64| -> Result<f64> {
        p[i] = base[i] + offset;
        probe.set_parameters(&p)?;
        let l = probe.loss_and_gradients(&view)?.0;
        p[i] = base[i];
        Ok(l)
    };
    let mut out = Vec::with_capacity(base.len());
    for (i, &a) in analytic.iter().enumerate() {
        let (u1, d1) = (loss_at(i, epsilon)?, loss_at(i, -epsilon)?);
        let (u2, d2) = (loss_at(i, 2.0 * epsilon)?, loss_at(i, -2.0 * epsilon)?);
        out.push((a, (8.0 * (u1 - d1) - (u2 - d2)) / (12.0 * epsilon)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_batch(rng: &mut ChaCha8Rng, window: usize, n: usize) -> Vec<(FusionInput, f64)> {
        (0..n)
            .map(|_| {
                let x = FusionInput {
                    s_a: rng.random(),
                    s_t: (0..2 * window + 1).map(|_| rng.random()).collect(),
                };
                (x, if rng.random::<bool>() { 1.0 } else { 0.0 })
            })
            .collect()
    }

    fn threshold_pairs(n: usize, seed: u64) -> Vec<LabeledPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s_a: f64 = rng.random();
                LabeledPair {
                    input: FusionInput {
                        s_a,
                        s_t: (0..5).map(|_| rng.random::<f64>() * 0.05).collect(),
                    },
                    label: if s_a > 0.5 { 1.0 } else { 0.0 },
                }
            })
            .collect()
    }

    fn accuracy(model: &FusionModel, pairs: &[LabeledPair]) -> f64 {
        let hits = pairs
            .iter()
            .filter(|p| (model.forward(&p.input).unwrap() > 0.5) == (p.label > 0.5))
            .count();
        hits as f64 / pairs.len() as f64
    }

    #[test]
    fn gradient_check_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let model = FusionModel::init(2, &mut rng);
            let batch = random_batch(&mut rng, 2, 8);
            assert!(grad_check(&model, &batch, 1e-5).unwrap() < 1e-4);
        }
    }

    #[test]
    fn dead_relu_gradients_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = FusionModel::init(1, &mut rng);
        // hidden unit 0 never activates on non-negative inputs
        for c in 0..model.input_dim {
            model.weights_1[c] = -1.0;
        }
        model.bias_1[0] = -1.0;
        let batch = random_batch(&mut rng, 1, 6);
        let detail = grad_check_detail(&model, &batch, 1e-5).unwrap();
        for c in 0..model.input_dim {
            let (a, n) = detail[c];
            assert!(a.abs() < 1e-8 && n.abs() < 1e-8);
        }
    }

    #[test]
    fn halving_epsilon_keeps_error_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = FusionModel::init(2, &mut rng);
        let batch = random_batch(&mut rng, 2, 8);
        let e1 = grad_check(&model, &batch, 1e-4).unwrap();
        let e2 = grad_check(&model, &batch, 5e-5).unwrap();
        assert!(e2 <= 4.0 * e1.max(1e-9));
    }

    #[test]
    fn learns_an_appearance_threshold() {
        let pairs = threshold_pairs(4000, 1);
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 4,
            ..TrainConfig::default()
        };
        let out = train(&pairs, 2, &cfg).unwrap();
        assert!(accuracy(&out.model, &pairs) >= 0.99);
        assert!(out.curve.last().unwrap().train_loss < out.curve[0].train_loss);
    }

    #[test]
    fn learns_from_the_temporal_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<LabeledPair> = (0..3000)
            .map(|_| {
                let centre: f64 = rng.random();
                let s_t = vec![rng.random::<f64>(), centre, rng.random::<f64>()];
                LabeledPair {
                    input: FusionInput { s_a: 0.5, s_t },
                    label: if centre > 0.5 { 1.0 } else { 0.0 },
                }
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 9,
            ..TrainConfig::default()
        };
        let out = train(&pairs, 1, &cfg).unwrap();
        assert!(accuracy(&out.model, &pairs) >= 0.95);
    }

    #[test]
    fn training_is_deterministic() {
        let pairs = threshold_pairs(500, 6);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 77,
            ..TrainConfig::default()
        };
        let a = train(&pairs, 2, &cfg).unwrap();
        let b = train(&pairs, 2, &cfg).unwrap();
        let bits = |o: &TrainOutcome| o.curve.iter().map(|r| (r.train_loss.to_bits(), r.val_loss.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.model, b.model);
        assert_eq!(a.curve.len(), 6);
    }

    #[test]
    fn no_positives_is_a_training_error() {
        let mut pairs = threshold_pairs(50, 1);
        pairs.iter_mut().for_each(|p| p.label = 0.0);
        assert!(matches!(train(&pairs, 2, &TrainConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn returned_model_has_the_best_validation_loss() {
        let pairs = threshold_pairs(600, 12);
        let out = train(&pairs, 2, &TrainConfig { epochs: 8, seed: 1, ..TrainConfig::default() }).unwrap();
        let best = out.curve.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.curve[out.best_epoch].val_loss, best);
    }
}
