//! Distribution-shift primitives applied to raw toy inputs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAX_STEPS: usize = 3;

pub const NOISE_RANGE: (f64, f64) = (0.1, 2.0);
pub const SCALE_RANGE: (f64, f64) = (0.5, 1.8);
pub const SHIFT_RANGE: (f64, f64) = (0.2, 3.0);
pub const ANGLE_RANGE: (f64, f64) = (5.0, 60.0);
pub const DROP_RANGE: (f64, f64) = (0.05, 0.4);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Primitive {
    /// Additive isotropic Gaussian noise.
    AddNoise {
        sigma: f64,
    },
    Scale {
        factor: f64,
    },
    /// Translation along a seeded random unit direction.
    Shift {
        magnitude: f64,
    },
    /// Givens rotations on `pairs` disjoint, randomly chosen coordinate pairs.
    Rotate {
        pairs: usize,
        angle_degrees: f64,
    },
    /// Zeroes `round(fraction * d)` randomly chosen coordinates (at least one).
    DropDims {
        fraction: f64,
    },
    /// Resamples rows with replacement to Dirichlet(1) class proportions.
    ClassPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformStep {
    #[serde(flatten)]
    pub primitive: Primitive,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub steps: Vec<TransformStep>,
}

fn in_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::Spec(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

impl Primitive {
    pub fn validate(&self, raw_dim: usize) -> Result<()> {
        match *self {
            Primitive::AddNoise { sigma } => in_range("noise sigma", sigma, NOISE_RANGE),
            Primitive::Scale { factor } => in_range("scale factor", factor, SCALE_RANGE),
            Primitive::Shift { magnitude } => in_range("shift magnitude", magnitude, SHIFT_RANGE),
            Primitive::Rotate { pairs, angle_degrees } => {
                if pairs == 0 || pairs > raw_dim / 2 {
                    return Err(Error::Spec(format!(
                        "rotation pair count {pairs} outside [1, {}]",
                        raw_dim / 2
                    )));
                }
                in_range("rotation angle", angle_degrees, ANGLE_RANGE)
            }
            Primitive::DropDims { fraction } => in_range("drop fraction", fraction, DROP_RANGE),
            Primitive::ClassPrior => Ok(()),
        }
    }

    fn apply(&self, x: &mut Matrix, labels: &mut Vec<usize>, rng: &mut ChaCha8Rng) {
        let d = x.cols();
        match *self {
            Primitive::AddNoise { sigma } => {
                for v in x.as_mut_slice() {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Primitive::Scale { factor } => {
                x.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
            }
            Primitive::Shift { magnitude } => {
                let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                dir.iter_mut().for_each(|v| *v *= magnitude / norm);
                for row in x.as_mut_slice().chunks_exact_mut(d) {
                    row.iter_mut().zip(&dir).for_each(|(v, s)| *v += s);
                }
            }
            Primitive::Rotate { pairs, angle_degrees } => {
                let mut coords: Vec<usize> = (0..d).collect();
                coords.shuffle(rng);
                let (sin, cos) = angle_degrees.to_radians().sin_cos();
                for row in x.as_mut_slice().chunks_exact_mut(d) {
                    for p in coords[..2 * pairs].chunks_exact(2) {
                        let (a, b) = (row[p[0]], row[p[1]]);
                        row[p[0]] = cos * a - sin * b;
                        row[p[1]] = sin * a + cos * b;
                    }
                }
            }
            Primitive::DropDims { fraction } => {
                let count = ((fraction * d as f64).round() as usize).clamp(1, d);
                let dropped = rand::seq::index::sample(rng, d, count).into_vec();
                for row in x.as_mut_slice().chunks_exact_mut(d) {
                    for &j in &dropped {
                        row[j] = 0.0;
                    }
                }
            }
            Primitive::ClassPrior => resample_class_prior(x, labels, rng),
        }
    }
}

fn resample_class_prior(x: &mut Matrix, labels: &mut Vec<usize>, rng: &mut ChaCha8Rng) {
    let n = labels.len();
    if n == 0 {
        return;
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let members: Vec<&Vec<usize>> = by_class.values().collect();
    // Dirichlet(1) as normalized unit exponentials
    let weights: Vec<f64> = members.iter().map(|_| Exp1.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u = rng.random::<f64>() * total;
        let mut c = members.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                c = k;
                break;
            }
            u -= w;
        }
        let pool = members[c];
        chosen.push(pool[rng.random_range(0..pool.len())]);
    }
    *x = x.select_rows(&chosen);
    *labels = chosen.iter().map(|&i| labels[i]).collect();
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec::default()
    }

    pub fn validate(&self, raw_dim: usize) -> Result<()> {
        if self.steps.len() > MAX_STEPS {
            return Err(Error::Spec(format!(
                "{} transform steps, at most {MAX_STEPS} allowed",
                self.steps.len()
            )));
        }
        self.steps.iter().try_for_each(|s| s.primitive.validate(raw_dim))
    }
}

/// Applies the steps in order, each with its own seeded generator.
pub fn apply_transform(raw: &Matrix, labels: &[usize], spec: &TransformSpec) -> Result<(Matrix, Vec<usize>)> {
    if raw.rows() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", raw.rows(), labels.len())));
    }
    spec.validate(raw.cols())?;
    let mut x = raw.clone();
    let mut y = labels.to_vec();
    for step in &spec.steps {
        let mut rng = ChaCha8Rng::seed_from_u64(step.seed);
        step.primitive.apply(&mut x, &mut y, &mut rng);
    }
    Ok((x, y))
}
