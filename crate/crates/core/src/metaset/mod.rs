//! Meta-set synthesis: a toy classifier, shifted variants of its input
//! distribution, and feature sets labelled with their true accuracy.

mod toy;
mod transform;

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureset::{self, FeatureSet};
use crate::io_util::{read_json, write_json};

pub use toy::{train_toy_classifier, ClassifierConfig, Draw, ToyClassifier, ToyTask, MIN_CLEAN_ACCURACY};
pub use transform::{
    apply_transform, Primitive, TransformSpec, TransformStep, ANGLE_RANGE, DROP_RANGE, MAX_STEPS, NOISE_RANGE,
    SCALE_RANGE, SHIFT_RANGE,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SOURCE_FILE: &str = "source.fset";
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const SETS_DIR: &str = "sets";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    TrainMeta,
    ValMeta,
    TestMeta,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::TrainMeta, Split::ValMeta, Split::TestMeta];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::TrainMeta => "TRAIN_META",
            Split::ValMeta => "VAL_META",
            Split::TestMeta => "TEST_META",
        }
    }

    fn file_prefix(self) -> &'static str {
        match self {
            Split::TrainMeta => "train",
            Split::ValMeta => "val",
            Split::TestMeta => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed parameter intervals for one family of splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterRanges {
    pub noise_sigma: (f64, f64),
    pub scale_factor: (f64, f64),
    pub shift_magnitude: (f64, f64),
    pub rotate_angle: (f64, f64),
    pub drop_fraction: (f64, f64),
}

/// Sample-set ranges (TRAIN_META and VAL_META) and test-set ranges
/// (TEST_META). Every primitive's two intervals must be disjoint. By default
/// sample sets take the harsher end of each primitive and test sets the
/// milder end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRanges {
    pub sample: ParameterRanges,
    pub test: ParameterRanges,
}

impl Default for SplitRanges {
    fn default() -> Self {
        SplitRanges {
            sample: ParameterRanges {
                noise_sigma: (0.8, 2.0),
                scale_factor: (1.0, 1.8),
                shift_magnitude: (1.2, 3.0),
                rotate_angle: (30.0, 60.0),
                drop_fraction: (0.25, 0.4),
            },
            test: ParameterRanges {
                noise_sigma: (0.1, 0.7),
                scale_factor: (0.5, 0.9),
                shift_magnitude: (0.2, 1.0),
                rotate_angle: (5.0, 25.0),
                drop_fraction: (0.05, 0.2),
            },
        }
    }
}

type Interval = (f64, f64);

impl ParameterRanges {
    /// `(name, chosen interval, full interval)` per primitive.
    fn named(&self) -> [(&'static str, Interval, Interval); 5] {
        [
            ("noise_sigma", self.noise_sigma, NOISE_RANGE),
            ("scale_factor", self.scale_factor, SCALE_RANGE),
            ("shift_magnitude", self.shift_magnitude, SHIFT_RANGE),
            ("rotate_angle", self.rotate_angle, ANGLE_RANGE),
            ("drop_fraction", self.drop_fraction, DROP_RANGE),
        ]
    }
}

impl SplitRanges {
    pub fn validate(&self) -> Result<()> {
        for ((name, a, full), (_, b, _)) in self.sample.named().into_iter().zip(self.test.named()) {
            for (lo, hi) in [a, b] {
                if !(lo <= hi && lo >= full.0 && hi <= full.1) {
                    return Err(Error::Config(format!(
                        "{name} range [{lo}, {hi}] not inside [{}, {}]",
                        full.0, full.1
                    )));
                }
            }
            if a.0 <= b.1 && b.0 <= a.1 {
                return Err(Error::Config(format!(
                    "{name} sample range [{}, {}] overlaps test range [{}, {}]",
                    a.0, a.1, b.0, b.1
                )));
            }
        }
        Ok(())
    }

    pub fn for_split(&self, split: Split) -> &ParameterRanges {
        match split {
            Split::TestMeta => &self.test,
            _ => &self.sample,
        }
    }
}

/// Everything `synthesize` needs besides the workspace path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub task: ToyTask,
    pub classifier: ClassifierConfig,
    pub n_train_meta: usize,
    pub n_val_meta: usize,
    pub n_test_meta: usize,
    /// Rows per generated set.
    pub set_size: usize,
    pub ranges: SplitRanges,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            task: ToyTask::default(),
            classifier: ClassifierConfig::default(),
            n_train_meta: 200,
            n_val_meta: 50,
            n_test_meta: 50,
            set_size: 1000,
            ranges: SplitRanges::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n-train", self.n_train_meta),
            ("n-val", self.n_val_meta),
            ("n-test", self.n_test_meta),
            ("set-size", self.set_size),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be ≥ 1")));
            }
        }
        self.task.validate()?;
        self.ranges.validate()
    }

    fn count(&self, split: Split) -> usize {
        match split {
            Split::TrainMeta => self.n_train_meta,
            Split::ValMeta => self.n_val_meta,
            Split::TestMeta => self.n_test_meta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSetRecord {
    pub id: String,
    pub split: Split,
    pub spec: TransformSpec,
    /// Relative to the workspace root.
    pub path: String,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: SynthConfig,
    pub clean_accuracy: f64,
    pub source: String,
    pub classifier: String,
    pub records: Vec<SampleSetRecord>,
}

impl Manifest {
    pub fn load(workspace: &Path) -> Result<Manifest> {
        let path = workspace.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::Workspace(format!("no manifest at {}", path.display())));
        }
        let m: Manifest = read_json(&path)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} unsupported",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleSetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn source_path(&self, workspace: &Path) -> PathBuf {
        workspace.join(&self.source)
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws 1 to [`MAX_STEPS`] distinct primitives with parameters from `ranges`.
pub fn random_spec(rng: &mut ChaCha8Rng, ranges: &ParameterRanges, raw_dim: usize) -> TransformSpec {
    let steps = rng.random_range(1..=MAX_STEPS);
    let kinds = index::sample(rng, 6, steps).into_vec();
    let steps = kinds
        .into_iter()
        .map(|k| {
            let primitive = match k {
                0 => Primitive::AddNoise {
                    sigma: uniform(rng, ranges.noise_sigma),
                },
                1 => Primitive::Scale {
                    factor: uniform(rng, ranges.scale_factor),
                },
                2 => Primitive::Shift {
                    magnitude: uniform(rng, ranges.shift_magnitude),
                },
                3 => Primitive::Rotate {
                    pairs: rng.random_range(1..=raw_dim / 2),
                    angle_degrees: uniform(rng, ranges.rotate_angle),
                },
                4 => Primitive::DropDims {
                    fraction: uniform(rng, ranges.drop_fraction),
                },
                _ => Primitive::ClassPrior,
            };
            TransformStep {
                primitive,
                seed: rng.random(),
            }
        })
        .collect();
    TransformSpec { steps }
}

/// Transforms `base`, runs the classifier and returns the feature set with
/// the number of correct predictions.
pub fn build_set(
    classifier: &ToyClassifier,
    base: &Draw,
    spec: &TransformSpec,
    source_id: &str,
) -> Result<(FeatureSet, u64)> {
    let (inputs, labels) = apply_transform(&base.inputs, &base.labels, spec)?;
    let set = classifier.feature_set(&Draw { inputs, labels }, source_id)?;
    let (correct, _) = set
        .accuracy_fraction()
        .ok_or_else(|| Error::Validation("generated set lacks softmax or labels".into()))?;
    Ok((set, correct as u64))
}

fn record_seed(seed: u64, split: Split, idx: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((split as u64) << 32) | idx as u64);
    rng.random()
}

/// Writes one feature set per record plus the manifest into `workspace`.
/// Each record owns a seed derived from `seed`, its split and its index.
pub fn generate_sets(workspace: &Path, classifier: &ToyClassifier, cfg: &SynthConfig) -> Result<Vec<SampleSetRecord>> {
    cfg.validate()?;
    let task = &cfg.task;
    let mut records = Vec::new();
    for split in Split::ALL {
        for idx in 0..cfg.count(split) {
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(cfg.seed, split, idx));
            let spec = random_spec(&mut rng, cfg.ranges.for_split(split), task.raw_dim);
            let base = task.draw(cfg.set_size, rng.random());
            let id = format!("{}_{idx:04}", split.file_prefix());
            let (set, correct) = build_set(classifier, &base, &spec, &id)?;
            let rel = format!("{SETS_DIR}/{id}.fset");
            featureset::save(&set, workspace.join(&rel))?;
            records.push(SampleSetRecord {
                id,
                split,
                spec,
                path: rel,
                correct,
                total: set.n as u64,
                accuracy: correct as f64 / set.n as f64,
            });
        }
    }
    Ok(records)
}

/// Trains the toy classifier, writes the source features, the classifier,
/// every meta set and finally the manifest.
pub fn synthesize(workspace: &Path, cfg: &SynthConfig) -> Result<Manifest> {
    cfg.validate()?;
    let classifier = train_toy_classifier(&cfg.task, &cfg.classifier, cfg.seed)?;
    let source = classifier.feature_set(&cfg.task.train_split(), "source")?;
    featureset::save(&source, workspace.join(SOURCE_FILE))?;
    write_json(&workspace.join(CLASSIFIER_FILE), &classifier)?;
    let records = generate_sets(workspace, &classifier, cfg)?;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        config: cfg.clone(),
        clean_accuracy: classifier.clean_accuracy,
        source: SOURCE_FILE.into(),
        classifier: CLASSIFIER_FILE.into(),
        records,
    };
    write_json(&workspace.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ranges_are_disjoint_and_inside_full_ranges() {
        SplitRanges::default().validate().unwrap();
    }

    #[test]
    fn overlapping_ranges_are_config_errors() {
        let mut r = SplitRanges::default();
        r.test.noise_sigma = (0.1, 0.9);
        assert!(matches!(r.validate(), Err(Error::Config(_))));
        let mut r = SplitRanges::default();
        r.sample.rotate_angle = (20.0, 60.0);
        assert!(matches!(r.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_counts_are_rejected() {
        let cfg = SynthConfig {
            n_train_meta: 0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("n-train must be ≥ 1"));
    }

    #[test]
    fn random_specs_respect_split_ranges() {
        let ranges = SplitRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let spec = random_spec(&mut rng, &ranges.test, 32);
            assert!((1..=MAX_STEPS).contains(&spec.steps.len()));
            spec.validate(32).unwrap();
            for s in &spec.steps {
                match s.primitive {
                    Primitive::AddNoise { sigma } => assert!(sigma <= 0.7),
                    Primitive::Scale { factor } => assert!(factor <= 0.9),
                    Primitive::Shift { magnitude } => assert!(magnitude <= 1.0),
                    Primitive::Rotate { angle_degrees, .. } => assert!(angle_degrees <= 25.0),
                    Primitive::DropDims { fraction } => assert!(fraction <= 0.2),
                    Primitive::ClassPrior => {}
                }
            }
        }
    }

    #[test]
    fn record_seeds_differ_across_splits_and_indices() {
        let a = record_seed(0, Split::TrainMeta, 0);
        assert_ne!(a, record_seed(0, Split::TrainMeta, 1));
        assert_ne!(a, record_seed(0, Split::TestMeta, 0));
        assert_ne!(a, record_seed(1, Split::TrainMeta, 0));
        assert_eq!(a, record_seed(0, Split::TrainMeta, 0));
    }
}
