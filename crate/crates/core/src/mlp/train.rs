use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{FeatureMatrix, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, batch_size: 32, l2_lambda: 0.001, max_epochs: 200, patience: 20, seed: 0 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    Empty,
    #[error("feature width {data} does not match model input {model}")]
    Width { data: usize, model: usize },
    #[error("loss diverged at epoch {epoch}")]
    Diverged { epoch: usize },
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be finite and non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub model: MlpModel,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    /// 1-based epoch of the returned snapshot; 0 means the initial parameters.
    pub best_epoch: usize,
}

fn mse(model: &MlpModel, x: &FeatureMatrix, y: &[f64]) -> f64 {
    let idx: Vec<usize> = (0..y.len()).collect();
    model.loss(x, y, &idx, 0.0)
}

/// Mini-batch SGD on `MSE + l2 ‖W‖²` with early stopping on validation MSE.
pub fn train(
    model: &MlpModel,
    x_train: &FeatureMatrix,
    y_train: &[f64],
    x_val: &FeatureMatrix,
    y_val: &[f64],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if y_train.is_empty() {
        return Err(TrainError::Empty);
    }
    for x in [x_train, x_val] {
        if x.n_cols() != model.n_inputs() {
            return Err(TrainError::Width { data: x.n_cols(), model: model.n_inputs() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = model.clone();
    let mut params = current.params();
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let has_val = !y_val.is_empty();
    let score = |m: &MlpModel| if has_val { mse(m, x_val, y_val) } else { mse(m, x_train, y_train) };

    let mut best = (score(&current), 0usize, current.clone());
    let mut since_best = 0;
    let (mut train_curve, mut val_curve) = (Vec::new(), Vec::new());

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = current.loss_and_gradient(x_train, y_train, batch, config.l2_lambda);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            current.set_params(&params).map_err(|_| TrainError::Diverged { epoch })?;
        }
        let tr = mse(&current, x_train, y_train);
        let va = score(&current);
        if !tr.is_finite() || !va.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        train_curve.push(tr);
        val_curve.push(va);
        if va < best.0 {
            best = (va, epoch, current.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { model: best.2, train_mse: train_curve, val_mse: val_curve, best_epoch: best.1 })
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-5;

/// Largest relative gap between analytic and central-difference gradients.
///
/// Parameters whose ±step perturbation flips any hidden ReLU are skipped. The
/// denominator is `max(|analytic|, |numeric|, floor)` so exact zeros compare cleanly.
pub fn gradient_check(model: &MlpModel, x: &FeatureMatrix, y: &[f64], l2: f64) -> f64 {
    const FLOOR: f64 = 1e-8;
    let idx: Vec<usize> = (0..y.len()).collect();
    let (_, analytic) = model.loss_and_gradient(x, y, &idx, l2);
    let base = model.params();
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for (i, a) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + GRADIENT_CHECK_STEP;
        probe.set_params(&p).expect("finite");
        let (lp, mp) = (probe.loss(x, y, &idx, l2), probe.activation_mask(x, &idx));
        p[i] = base[i] - GRADIENT_CHECK_STEP;
        probe.set_params(&p).expect("finite");
        let (lm, mm) = (probe.loss(x, y, &idx, l2), probe.activation_mask(x, &idx));
        if mp != mm {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * GRADIENT_CHECK_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(rel);
    }
    worst
}
