//! Toy classifier, transforms and workspace generation end to end.

use std::path::Path;
use std::sync::OnceLock;

use autoeval::featureset;
use autoeval::metaset::{
    build_set, generate_sets, synthesize, train_toy_classifier, ClassifierConfig, Manifest, Primitive, Split,
    SynthConfig, ToyClassifier, ToyTask, TransformSpec, TransformStep,
};

fn classifier() -> &'static ToyClassifier {
    static CLF: OnceLock<ToyClassifier> = OnceLock::new();
    CLF.get_or_init(|| train_toy_classifier(&ToyTask::default(), &ClassifierConfig::default(), 0).unwrap())
}

struct Workspace {
    dir: tempfile::TempDir,
    manifest: Manifest,
}

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let manifest = synthesize(dir.path(), &SynthConfig::default()).unwrap();
        Workspace { dir, manifest }
    })
}

fn noise(sigma: f64, seed: u64) -> TransformSpec {
    TransformSpec {
        steps: vec![TransformStep {
            primitive: Primitive::AddNoise { sigma },
            seed,
        }],
    }
}

#[test]
fn default_classifier_is_accurate_and_deterministic() {
    let clf = classifier();
    assert!(clf.clean_accuracy >= 0.95, "clean accuracy {}", clf.clean_accuracy);
    let again = train_toy_classifier(&ToyTask::default(), &ClassifierConfig::default(), 0).unwrap();
    assert_eq!(&again, clf);
}

#[test]
fn identity_spec_reproduces_clean_accuracy() {
    let task = ToyTask::default();
    let test = task.test_split();
    let (set, correct) = build_set(classifier(), &test, &TransformSpec::identity(), "clean").unwrap();
    assert_eq!(correct as f64 / set.n as f64, classifier().clean_accuracy);
}

#[test]
fn strong_noise_is_never_easier_than_weak_noise() {
    let task = ToyTask::default();
    for seed in 0..5 {
        let draw = task.draw(1000, 100 + seed);
        let (_, weak) = build_set(classifier(), &draw, &noise(0.1, seed), "weak").unwrap();
        let (_, strong) = build_set(classifier(), &draw, &noise(2.0, seed), "strong").unwrap();
        assert!(strong <= weak, "seed {seed}: {strong} correct at 2.0 vs {weak} at 0.1");
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let task = ToyTask::default();
    let probs = classifier().probabilities(&task.draw(200, 9).inputs);
    for row in probs.iter_rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn default_workspace_has_expected_counts_and_spread() {
    let m = &workspace().manifest;
    assert_eq!(m.records.len(), 300);
    let counts: Vec<usize> = Split::ALL.iter().map(|&s| m.records_in(s).count()).collect();
    assert_eq!(counts, [200, 50, 50]);
    let train: Vec<f64> = m.records_in(Split::TrainMeta).map(|r| r.accuracy).collect();
    let lo = train.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo >= 0.3, "TRAIN_META accuracies span only [{lo}, {hi}]");
}

#[test]
fn stored_accuracy_matches_stored_predictions() {
    let ws = workspace();
    for r in &ws.manifest.records {
        let set = featureset::load(ws.dir.path().join(&r.path)).unwrap();
        assert!(set.validate().is_empty(), "{}", r.id);
        let (correct, total) = set.accuracy_fraction().unwrap();
        assert_eq!((correct as u64, total as u64), (r.correct, r.total), "{}", r.id);
        assert_eq!(r.accuracy, r.correct as f64 / r.total as f64);
    }
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

#[test]
fn regenerating_sets_is_bit_identical() {
    let ws = workspace();
    let clf: ToyClassifier =
        serde_json::from_slice(&std::fs::read(ws.dir.path().join(&ws.manifest.classifier)).unwrap()).unwrap();
    let other = tempfile::tempdir().unwrap();
    let records = generate_sets(other.path(), &clf, &ws.manifest.config).unwrap();
    assert_eq!(records, ws.manifest.records);
    for r in &records {
        assert!(
            same_bytes(&ws.dir.path().join(&r.path), &other.path().join(&r.path)),
            "{}",
            r.id
        );
    }
}

#[test]
fn stored_classifier_round_trips_through_json() {
    let ws = workspace();
    let clf: ToyClassifier =
        serde_json::from_slice(&std::fs::read(ws.dir.path().join(&ws.manifest.classifier)).unwrap()).unwrap();
    assert_eq!(clf.clean_accuracy, ws.manifest.clean_accuracy);
    assert_eq!(&clf, classifier());
}

#[test]
fn test_split_specs_come_from_the_test_ranges() {
    let m = &workspace().manifest;
    let sample = m.config.ranges.sample;
    for r in m.records_in(Split::TestMeta) {
        for step in &r.spec.steps {
            let inside_sample = match step.primitive {
                Primitive::AddNoise { sigma } => (sample.noise_sigma.0..=sample.noise_sigma.1).contains(&sigma),
                Primitive::Scale { factor } => (sample.scale_factor.0..=sample.scale_factor.1).contains(&factor),
                Primitive::Shift { magnitude } => {
                    (sample.shift_magnitude.0..=sample.shift_magnitude.1).contains(&magnitude)
                }
                Primitive::Rotate { angle_degrees, .. } => {
                    (sample.rotate_angle.0..=sample.rotate_angle.1).contains(&angle_degrees)
                }
                Primitive::DropDims { fraction } => {
                    (sample.drop_fraction.0..=sample.drop_fraction.1).contains(&fraction)
                }
                Primitive::ClassPrior => false,
            };
            assert!(
                !inside_sample,
                "{} uses a sample-range parameter: {:?}",
                r.id, step.primitive
            );
        }
    }
}
