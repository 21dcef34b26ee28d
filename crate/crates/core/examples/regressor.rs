// Fits the accuracy regressor on synthetic representation/accuracy pairs,
// checks its gradients against finite differences and round-trips the
// model through JSON.
//
// cargo run --release --example regressor

use autoeval::regress::{fit, gradient_check, load_model, save_model, Pair, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> autoeval::Result<()> {
    // accuracy is a smooth function of the first two coordinates
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<Pair> = (0..120)
        .map(|_| {
            let rep: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let acc = 0.5 + 0.3 * (rep[0] * 1.5).tanh() - 0.1 * rep[1];
            Pair::new(rep, acc)
        })
        .collect();
    let cfg = TrainConfig {
        hidden: vec![32, 16],
        epochs: 60,
        ..TrainConfig::default()
    };
    let outcome = fit(&pairs, &cfg)?;
    let best = &outcome.history[outcome.best_epoch - 1];
    println!(
        "best epoch {} train RMSE {:.2}% validation RMSE {:.2}%",
        outcome.best_epoch,
        100.0 * best.train.sqrt(),
        100.0 * best.validation.sqrt()
    );

    let err = gradient_check(&outcome.model, &pairs[0].representation, pairs[0].accuracy, 0)?;
    println!("max relative gradient error {err:.2e}");

    let dir = tempfile::tempdir().map_err(|e| autoeval::Error::Workspace(e.to_string()))?;
    let path = dir.path().join("model.json");
    save_model(&outcome.model, &path)?;
    let loaded = load_model(&path)?;
    let p = loaded.predict(&pairs[1].representation)?;
    assert_eq!(p, outcome.model.predict(&pairs[1].representation)?);
    println!("reloaded model predicts {p:.4} (truth {:.4})", pairs[1].accuracy);
    Ok(())
}

#[allow(dead_code)]
fn main() -> autoeval::Result<()> {
    run_example()
}
