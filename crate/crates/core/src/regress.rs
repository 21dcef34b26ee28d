//! Accuracy regressor: a fully connected network from a flat dataset
//! representation to an accuracy estimate in (0, 1).

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;
use crate::nn::{Adam, AdamConfig, Mlp};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 128];

/// Finite-difference step used by [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
/// Minimum number of parameters compared by [`gradient_check`].
pub const GRADIENT_CHECK_SAMPLES: usize = 256;

// Keeps the validation split independent of the weight-init stream.
const SPLIT_SEED_SALT: u64 = 0x5eed_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of pairs held out for checkpoint selection when [`fit`] is not
    /// given an explicit validation split.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 100,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training example: a flat representation and its true accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub representation: Vec<f64>,
    pub accuracy: f64,
}

impl Pair {
    pub fn new(representation: Vec<f64>, accuracy: f64) -> Self {
        Pair {
            representation,
            accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub network: Mlp,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: RegressorModel,
    pub history: Vec<EpochLoss>,
    /// Epoch (1-based) of the returned checkpoint.
    pub best_epoch: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl RegressorModel {
    /// Network with every weight and bias at zero; predicts exactly 0.5.
    pub fn zeros(layer_dims: &[usize]) -> Self {
        let input = layer_dims[0];
        RegressorModel {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: layer_dims.to_vec(),
            network: Mlp::zeros(layer_dims),
            input_mean: vec![0.0; input],
            input_scale: vec![1.0; input],
        }
    }

    /// Randomly initialized network with identity input normalization.
    pub fn random(layer_dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RegressorModel {
            network: Mlp::random(layer_dims, &mut rng),
            ..Self::zeros(layer_dims)
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    fn normalize_into(&self, rep: &[f64], out: &mut Vec<f64>) {
        out.extend(
            rep.iter()
                .zip(self.input_mean.iter().zip(&self.input_scale))
                .map(|(&x, (&m, &s))| (x - m) / s),
        );
    }

    fn check_input(&self, rep: &[f64]) -> Result<()> {
        if rep.len() != self.input_dim() {
            return Err(Error::Input(format!(
                "representation has length {}, model expects {}",
                rep.len(),
                self.input_dim()
            )));
        }
        if let Some(i) = rep.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("representation entry {i} is not finite")));
        }
        Ok(())
    }

    pub fn predict(&self, rep: &[f64]) -> Result<f64> {
        self.check_input(rep)?;
        let mut x = Vec::with_capacity(rep.len());
        self.normalize_into(rep, &mut x);
        Ok(sigmoid(self.network.forward(&x, 1)[0]))
    }

    pub fn predict_many(&self, reps: &[Vec<f64>]) -> Result<Vec<f64>> {
        for rep in reps {
            self.check_input(rep)?;
        }
        let mut x = Vec::with_capacity(reps.len() * self.input_dim());
        for rep in reps {
            self.normalize_into(rep, &mut x);
        }
        Ok(self.network.forward(&x, reps.len()).into_iter().map(sigmoid).collect())
    }

    /// Mean squared error of the predictions on `pairs`.
    pub fn mse(&self, pairs: &[Pair]) -> Result<f64> {
        let reps: Vec<Vec<f64>> = pairs.iter().map(|p| p.representation.clone()).collect();
        let preds = self.predict_many(&reps)?;
        Ok(preds
            .iter()
            .zip(pairs)
            .map(|(p, pair)| (p - pair.accuracy).powi(2))
            .sum::<f64>()
            / pairs.len() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if self.format_version != MODEL_FORMAT_VERSION {
            return bad(format!("unsupported model version {}", self.format_version));
        }
        if self.layer_dims.len() < 2 || *self.layer_dims.last().unwrap() != 1 {
            return bad(format!("layer_dims {:?} must end in a single output", self.layer_dims));
        }
        if self.network.layers.len() != self.layer_dims.len() - 1 {
            return bad("layer count does not match layer_dims".into());
        }
        for (i, layer) in self.network.layers.iter().enumerate() {
            let (inp, out) = (self.layer_dims[i], self.layer_dims[i + 1]);
            if layer.inputs != inp
                || layer.outputs != out
                || layer.weights.len() != inp * out
                || layer.bias.len() != out
            {
                return bad(format!("layer {i} parameters do not match dims {inp} x {out}"));
            }
        }
        let input = self.layer_dims[0];
        if self.input_mean.len() != input || self.input_scale.len() != input {
            return bad("normalization vectors do not match the input dimension".into());
        }
        if self.input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("input scales must be positive".into());
        }
        Ok(())
    }
}

fn check_pairs(pairs: &[Pair], dim: usize, what: &str) -> Result<()> {
    for (i, p) in pairs.iter().enumerate() {
        if p.representation.len() != dim {
            return Err(Error::Input(format!(
                "{what} pair {i} has length {}, expected {dim}",
                p.representation.len()
            )));
        }
        if !(0.0..=1.0).contains(&p.accuracy) {
            return Err(Error::Input(format!(
                "{what} pair {i} accuracy {} outside [0, 1]",
                p.accuracy
            )));
        }
        if p.representation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("{what} pair {i} has non-finite entries")));
        }
    }
    Ok(())
}

fn pair_order(a: &Pair, b: &Pair) -> Ordering {
    a.accuracy.total_cmp(&b.accuracy).then_with(|| {
        a.representation
            .iter()
            .zip(&b.representation)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Canonical order so that results do not depend on how pairs were listed.
fn canonical(pairs: &[Pair]) -> Vec<Pair> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(pair_order);
    sorted
}

/// Fits on `pairs`, holding out `cfg.validation_fraction` of them (seeded)
/// for checkpoint selection.
pub fn fit(pairs: &[Pair], cfg: &TrainConfig) -> Result<FitOutcome> {
    if pairs.len() < 2 {
        return Err(Error::Input(format!("need at least 2 pairs, got {}", pairs.len())));
    }
    cfg.validate()?;
    let mut sorted = canonical(pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SPLIT_SEED_SALT);
    sorted.shuffle(&mut rng);
    let n_val = ((pairs.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, pairs.len() - 1);
    let val = sorted.split_off(pairs.len() - n_val);
    fit_with_validation(&sorted, &val, cfg)
}

/// The untrained model `fit_with_validation` starts from: seeded weights and
/// input normalization frozen from `train`.
pub fn initial_model(train: &[Pair], cfg: &TrainConfig) -> Result<RegressorModel> {
    cfg.validate()?;
    let dim = train.first().map_or(0, |p| p.representation.len());
    if dim == 0 {
        return Err(Error::Input("representations are empty".into()));
    }
    check_pairs(train, dim, "training")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(initial_model_with(&canonical(train), cfg, &mut rng))
}

fn initial_model_with(train: &[Pair], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> RegressorModel {
    let dim = train[0].representation.len();
    let mut dims = vec![dim];
    dims.extend(&cfg.hidden);
    dims.push(1);

    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in train {
        for (m, &v) in mean.iter_mut().zip(&p.representation) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for p in train {
        for ((s, &v), &m) in var.iter_mut().zip(&p.representation).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    // Per-feature standardization, then a common 1/sqrt(dim) factor so the
    // size of one Adam step on the first layer does not grow with input width.
    let width = (dim as f64).sqrt();
    let scale: Vec<f64> = var
        .iter()
        .map(|&s| {
            let sd = (s / n).sqrt();
            width * if sd > 1e-12 { sd } else { 1.0 }
        })
        .collect();

    RegressorModel {
        format_version: MODEL_FORMAT_VERSION,
        network: Mlp::random(&dims, rng),
        layer_dims: dims,
        input_mean: mean,
        input_scale: scale,
    }
}

/// Fits on `train` and returns the epoch checkpoint with the lowest loss on
/// `validation`. Input normalization is frozen from `train` only.
pub fn fit_with_validation(train: &[Pair], validation: &[Pair], cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Input("training and validation splits must be non-empty".into()));
    }
    let dim = train[0].representation.len();
    if dim == 0 {
        return Err(Error::Input("representations are empty".into()));
    }
    check_pairs(train, dim, "training")?;
    check_pairs(validation, dim, "validation")?;
    let train = canonical(train);
    let validation = canonical(validation);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = initial_model_with(&train, cfg, &mut rng);

    let mut x_train = Vec::with_capacity(train.len() * dim);
    for p in &train {
        model.normalize_into(&p.representation, &mut x_train);
    }
    let y_train: Vec<f64> = train.iter().map(|p| p.accuracy).collect();

    let mut adam = Adam::new(&model.network, cfg.adam);
    let mut scratch = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Mlp)> = None;
    let mut batch_x = Vec::with_capacity(cfg.batch_size * dim);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            for &i in chunk {
                batch_x.extend_from_slice(&x_train[i * dim..(i + 1) * dim]);
            }
            let b = chunk.len();
            let trace = model.network.forward_trace(&batch_x, b);
            let mut grad = Vec::with_capacity(b);
            for (&z, &i) in trace.logits.iter().zip(chunk) {
                let p = sigmoid(z);
                let err = p - y_train[i];
                loss_sum += err * err;
                grad.push(2.0 * err * p * (1.0 - p) / b as f64);
            }
            adam.backward_step(&mut model.network, &trace, grad, &mut scratch);
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = model.mse(&validation)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at epoch {epoch} (train {train_loss}, validation {val_loss})"
            )));
        }
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            validation: val_loss,
        });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, model.network.clone()));
        }
    }

    let (_, best_epoch, network) = best.expect("at least one epoch");
    model.network = network;
    Ok(FitOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Largest relative error between backpropagated and central-difference
/// gradients of the squared error `(g(rep) - target)^2`, over a seeded
/// subsample of at least [`GRADIENT_CHECK_SAMPLES`] parameters (all of them
/// for smaller models).
pub fn gradient_check(model: &RegressorModel, rep: &[f64], target: f64, seed: u64) -> Result<f64> {
    model.check_input(rep)?;
    let mut x = Vec::with_capacity(rep.len());
    model.normalize_into(rep, &mut x);

    let loss = |net: &Mlp| (sigmoid(net.forward(&x, 1)[0]) - target).powi(2);
    let trace = model.network.forward_trace(&x, 1);
    let p = sigmoid(trace.logits[0]);
    let grads = model.network.backward(&trace, vec![2.0 * (p - target) * p * (1.0 - p)]);

    let total = model.param_count();
    let indices: Vec<usize> = if total <= GRADIENT_CHECK_SAMPLES {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, total, GRADIENT_CHECK_SAMPLES).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut net = model.network.clone();
    let mut worst = 0.0f64;
    for idx in indices {
        let original = *net.param_mut(idx);
        *net.param_mut(idx) = original + GRADIENT_CHECK_STEP;
        let up = loss(&net);
        *net.param_mut(idx) = original - GRADIENT_CHECK_STEP;
        let down = loss(&net);
        *net.param_mut(idx) = original;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let analytic = grads.get(idx);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

pub fn save_model(model: &RegressorModel, path: impl AsRef<Path>) -> Result<()> {
    io_util::write_json(path.as_ref(), model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RegressorModel> {
    let model: RegressorModel = io_util::read_json(path.as_ref())?;
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: vec![16, 8],
            epochs: 50,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_network_predicts_one_half() {
        let m = RegressorModel::zeros(&[4, 8, 1]);
        assert_eq!(m.predict(&[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn predict_rejects_bad_input() {
        let m = RegressorModel::zeros(&[2, 1]);
        assert!(matches!(m.predict(&[1.0]), Err(Error::Input(_))));
        assert!(matches!(m.predict(&[1.0, f64::NAN]), Err(Error::Input(_))));
    }

    #[test]
    fn fit_needs_two_consistent_pairs() {
        let one = [Pair::new(vec![0.0], 0.5)];
        assert!(matches!(fit(&one, &quick_cfg(0)), Err(Error::Input(_))));
        let ragged = [Pair::new(vec![0.0], 0.5), Pair::new(vec![0.0, 1.0], 0.5)];
        assert!(matches!(fit(&ragged, &quick_cfg(0)), Err(Error::Input(_))));
        let out_of_range = [Pair::new(vec![0.0], 0.5), Pair::new(vec![1.0], 1.5)];
        assert!(matches!(fit(&out_of_range, &quick_cfg(0)), Err(Error::Input(_))));
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let pairs: Vec<Pair> = (0..12)
            .map(|i| Pair::new(vec![i as f64, (i * i) as f64], i as f64 / 12.0))
            .collect();
        let a = fit(&pairs, &quick_cfg(9)).unwrap();
        let b = fit(&pairs, &quick_cfg(9)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn pair_order_does_not_matter() {
        let pairs: Vec<Pair> = (0..12)
            .map(|i| Pair::new(vec![(i as f64).sin(), i as f64], (i % 5) as f64 / 5.0))
            .collect();
        let mut reversed = pairs.clone();
        reversed.reverse();
        let a = fit(&pairs, &quick_cfg(2)).unwrap();
        let b = fit(&reversed, &quick_cfg(2)).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn small_model_gradient_check() {
        let model = RegressorModel::random(&[8, 16, 8, 1], 4);
        let rep: Vec<f64> = (0..8).map(|i| (i as f64 * 1.3).cos()).collect();
        let err = gradient_check(&model, &rep, 0.3, 1).unwrap();
        assert!(err < 1e-4, "{err}");
        let err0 = gradient_check(&model, &[0.0; 8], 0.0, 1).unwrap();
        assert!(err0.is_finite() && err0 < 1e-4, "{err0}");
        assert_eq!(err, gradient_check(&model, &rep, 0.3, 1).unwrap());
    }

    #[test]
    fn json_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = RegressorModel::random(&[3, 4, 1], 8);
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        let mut wrong = model.clone();
        wrong.layer_dims = vec![3, 5, 1];
        save_model(&wrong, &path).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }
}
