// Scalar accuracy estimators on a small softmax table, and the Frechet
// distance between two Gaussian feature summaries.
//
// cargo run --example baselines

use autoeval::baselines::{
    average_confidence, entropy_score_estimate, frechet_distance, gaussian_summary, prediction_score_estimate,
};
use autoeval::FeatureSet;

pub fn run_example() -> autoeval::Result<()> {
    let softmax = vec![
        0.97, 0.02, 0.01, //
        0.85, 0.10, 0.05, //
        0.40, 0.35, 0.25, //
        0.60, 0.30, 0.10,
    ];
    let features = vec![0.0, 1.0, 1.0, 0.5, 2.0, 0.0, 1.5, 1.5];
    let set = FeatureSet::new(4, 2, features, "toy")?.with_softmax(3, softmax)?;

    println!("average confidence {:.4}", average_confidence(&set)?);
    for tau in [0.8, 0.9] {
        println!(
            "prediction score tau={tau}: {:.2}",
            prediction_score_estimate(&set, tau)?
        );
    }
    for tau in [0.3, 0.6] {
        println!("entropy score tau={tau}: {:.2}", entropy_score_estimate(&set, tau)?);
    }

    let shifted: Vec<f32> = set.features.iter().map(|v| v + 1.0).collect();
    let other = FeatureSet::new(4, 2, shifted, "shifted")?;
    let a = gaussian_summary(&set)?;
    let b = gaussian_summary(&other)?;
    // same covariance, mean moved by (1, 1): distance is |delta|^2 = 2
    println!("FD(set, set) = {:.2e}", frechet_distance(&a, &a)?);
    println!("FD(set, shifted) = {:.6}", frechet_distance(&a, &b)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> autoeval::Result<()> {
    run_example()
}
