//! Every example compiles against the public API and runs to completion.

mod featureset_io {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/featureset_io.rs"));
}
mod representation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/representation.rs"));
}
mod baselines {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/baselines.rs"));
}
mod regressor {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/regressor.rs"));
}
mod synthesize {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/synthesize.rs"));
}
mod evaluate {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/evaluate.rs"));
}

use autoeval::harness::{ExperimentConfig, Method};
use autoeval::metaset::{SynthConfig, ToyTask};
use autoeval::regress::TrainConfig;
use autoeval::represent::RepresentationOptions;

#[test]
fn featureset_example_runs() {
    featureset_io::run_example().expect("featureset example should run");
}

#[test]
fn representation_example_runs() {
    representation::run_example().expect("representation example should run");
}

#[test]
fn baselines_example_runs() {
    baselines::run_example().expect("baselines example should run");
}

#[test]
fn regressor_example_runs() {
    regressor::run_example().expect("regressor example should run");
}

#[test]
fn synthesize_then_evaluate_examples_run() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        task: ToyTask {
            train_size: 1000,
            test_size: 500,
            ..ToyTask::default()
        },
        n_train_meta: 12,
        n_val_meta: 4,
        n_test_meta: 4,
        set_size: 200,
        ..SynthConfig::default()
    };
    let manifest = synthesize::run_example(dir.path(), &synth).expect("synthesize example should run");
    assert_eq!(manifest.records.len(), 20);

    let cfg = ExperimentConfig {
        workspace: dir.path().to_path_buf(),
        representation: RepresentationOptions {
            bins: 8,
            samples: 10,
            ..RepresentationOptions::default()
        },
        methods: vec![Method::Ours, Method::FdOnly, Method::PredScore(0.8)],
        train: TrainConfig {
            hidden: vec![16, 8],
            epochs: 3,
            ..TrainConfig::default()
        },
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    let report = evaluate::run_example(&cfg).expect("evaluate example should run");
    assert!(report
        .mean_rmse(Method::Ours, autoeval::metaset::Split::TestMeta)
        .is_some());
}
