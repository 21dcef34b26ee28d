//! Synthetic classification task and the small classifier whose hidden layer
//! supplies the features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureset::FeatureSet;
use crate::matrix::{distance, Matrix};
use crate::nn::{Adam, AdamConfig, Mlp};

/// Gaussian classes with identity covariance around seeded means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTask {
    pub raw_dim: usize,
    pub classes: usize,
    /// Mean pairwise distance between class means, in units of the
    /// per-coordinate class standard deviation.
    pub class_separation: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for ToyTask {
    fn default() -> Self {
        ToyTask {
            raw_dim: 32,
            classes: 10,
            class_separation: 6.0,
            train_size: 5000,
            test_size: 2000,
            seed: 0,
        }
    }
}

/// Labelled raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl ToyTask {
    pub fn validate(&self) -> Result<()> {
        if self.raw_dim < 2 {
            return Err(Error::Config("raw_dim must be >= 2".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("classes must be >= 2".into()));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::Config("class_separation must be positive".into()));
        }
        if self.train_size < self.classes || self.test_size < self.classes {
            return Err(Error::Config("train and test sizes must cover every class".into()));
        }
        Ok(())
    }

    /// `classes x raw_dim` class means, rescaled to the target mean separation.
    pub fn class_means(&self) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let data: Vec<f64> = (0..self.classes * self.raw_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut means = Matrix::from_vec(self.classes, self.raw_dim, data);
        let mut total = 0.0;
        let mut pairs = 0usize;
        for a in 0..self.classes {
            for b in a + 1..self.classes {
                total += distance(means.row(a), means.row(b));
                pairs += 1;
            }
        }
        let factor = self.class_separation / (total / pairs as f64);
        means.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        means
    }

    /// `n` points with balanced labels in shuffled order.
    pub fn draw(&self, n: usize, seed: u64) -> Draw {
        let means = self.class_means();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..n).map(|i| i % self.classes).collect();
        labels.shuffle(&mut rng);
        let mut inputs = Matrix::zeros(n, self.raw_dim);
        for (i, &y) in labels.iter().enumerate() {
            let mean = means.row(y);
            for (x, &m) in inputs.row_mut(i).iter_mut().zip(mean) {
                *x = m + rng.sample::<f64, _>(StandardNormal);
            }
        }
        Draw { inputs, labels }
    }

    pub fn train_split(&self) -> Draw {
        self.draw(self.train_size, self.seed.wrapping_add(1))
    }

    pub fn test_split(&self) -> Draw {
        self.draw(self.test_size, self.seed.wrapping_add(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Width of the hidden layer, i.e. the feature dimension.
    pub feature_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            feature_dim: 64,
            epochs: 15,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

/// Minimum clean accuracy below which training is retried, then abandoned.
pub const MIN_CLEAN_ACCURACY: f64 = 0.8;

/// One hidden leaky-rectifier layer followed by a softmax over the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyClassifier {
    pub network: Mlp,
    pub classes: usize,
    /// Accuracy on the task's clean test split.
    pub clean_accuracy: f64,
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

impl ToyClassifier {
    pub fn feature_dim(&self) -> usize {
        self.network.layers[0].outputs
    }

    pub fn raw_dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Hidden-layer activations, `n x feature_dim`.
    pub fn features(&self, inputs: &Matrix) -> Matrix {
        let h = self.network.hidden(inputs.as_slice(), inputs.rows(), 0);
        Matrix::from_vec(inputs.rows(), self.feature_dim(), h)
    }

    /// Class probabilities, `n x classes`.
    pub fn probabilities(&self, inputs: &Matrix) -> Matrix {
        let mut logits = self.network.forward(inputs.as_slice(), inputs.rows());
        for row in logits.chunks_exact_mut(self.classes) {
            softmax_in_place(row);
        }
        Matrix::from_vec(inputs.rows(), self.classes, logits)
    }

    pub fn accuracy(&self, draw: &Draw) -> f64 {
        let probs = self.probabilities(&draw.inputs);
        let correct = probs
            .iter_rows()
            .zip(&draw.labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        correct as f64 / draw.labels.len() as f64
    }

    /// Runs the classifier on `draw` and packages features, softmax outputs
    /// and labels in storage precision.
    pub fn feature_set(&self, draw: &Draw, source_id: impl Into<String>) -> Result<FeatureSet> {
        let n = draw.inputs.rows();
        let features: Vec<f32> = self
            .features(&draw.inputs)
            .as_slice()
            .iter()
            .map(|&v| v as f32)
            .collect();
        let softmax: Vec<f32> = self
            .probabilities(&draw.inputs)
            .as_slice()
            .iter()
            .map(|&v| v as f32)
            .collect();
        let labels = draw.labels.iter().map(|&y| y as i32).collect();
        FeatureSet::new(n, self.feature_dim(), features, source_id)?
            .with_softmax(self.classes, softmax)?
            .with_labels(self.classes, labels)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn train_once(task: &ToyTask, cfg: &ClassifierConfig, lr: f64, seed: u64) -> ToyClassifier {
    let train = task.train_split();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [task.raw_dim, cfg.feature_dim, task.classes];
    let mut network = Mlp::random(&dims, &mut rng);
    let mut adam = Adam::new(
        &network,
        AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        },
    );
    let mut scratch = Vec::new();
    let d = task.raw_dim;
    let mut order: Vec<usize> = (0..train.labels.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size * d);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            for &i in chunk {
                batch.extend_from_slice(train.inputs.row(i));
            }
            let trace = network.forward_trace(&batch, chunk.len());
            // softmax cross-entropy: d loss / d logits = p - onehot
            let mut grad = trace.logits.clone();
            for (row, &i) in grad.chunks_exact_mut(task.classes).zip(chunk) {
                softmax_in_place(row);
                row[train.labels[i]] -= 1.0;
                row.iter_mut().for_each(|g| *g /= chunk.len() as f64);
            }
            adam.backward_step(&mut network, &trace, grad, &mut scratch);
        }
    }
    let mut clf = ToyClassifier {
        network,
        classes: task.classes,
        clean_accuracy: 0.0,
    };
    clf.clean_accuracy = clf.accuracy(&task.test_split());
    clf
}

/// Trains with Adam on softmax cross-entropy. Retries once with half the
/// learning rate if clean accuracy stays below [`MIN_CLEAN_ACCURACY`].
pub fn train_toy_classifier(task: &ToyTask, cfg: &ClassifierConfig, seed: u64) -> Result<ToyClassifier> {
    task.validate()?;
    if cfg.feature_dim == 0
        || cfg.epochs == 0
        || cfg.batch_size == 0
        || cfg.learning_rate.is_nan()
        || cfg.learning_rate <= 0.0
    {
        return Err(Error::Config("classifier config has a zero or negative field".into()));
    }
    let first = train_once(task, cfg, cfg.learning_rate, seed);
    if first.clean_accuracy >= MIN_CLEAN_ACCURACY {
        return Ok(first);
    }
    let retry = train_once(task, cfg, cfg.learning_rate / 2.0, seed);
    if retry.clean_accuracy >= MIN_CLEAN_ACCURACY {
        return Ok(retry);
    }
    Err(Error::Training(format!(
        "toy classifier reached only {:.3} clean accuracy (after retry with halved learning rate)",
        retry.clean_accuracy
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_means_hit_target_separation() {
        let task = ToyTask::default();
        let means = task.class_means();
        let mut total = 0.0;
        let mut count = 0;
        for a in 0..task.classes {
            for b in a + 1..task.classes {
                let d = distance(means.row(a), means.row(b));
                assert!(d > 0.0);
                total += d;
                count += 1;
            }
        }
        assert!((total / count as f64 - task.class_separation).abs() < 1e-9);
    }

    #[test]
    fn draws_are_reproducible_and_balanced() {
        let task = ToyTask::default();
        let a = task.draw(100, 7);
        assert_eq!(a, task.draw(100, 7));
        for c in 0..task.classes {
            assert_eq!(a.labels.iter().filter(|&&y| y == c).count(), 10);
        }
    }

    #[test]
    fn separable_binary_task_is_nearly_perfect() {
        let task = ToyTask {
            classes: 2,
            class_separation: 8.0,
            train_size: 1000,
            test_size: 1000,
            ..Default::default()
        };
        let clf = train_toy_classifier(&task, &ClassifierConfig::default(), 1).unwrap();
        assert!(clf.clean_accuracy >= 0.99, "{}", clf.clean_accuracy);
    }

    #[test]
    fn softmax_rows_are_normalized() {
        let task = ToyTask {
            train_size: 200,
            test_size: 100,
            ..Default::default()
        };
        let cfg = ClassifierConfig {
            epochs: 1,
            ..Default::default()
        };
        let clf = train_once(&task, &cfg, 1e-3, 0);
        let probs = clf.probabilities(&task.test_split().inputs);
        for row in probs.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
