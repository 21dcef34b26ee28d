// Trains the toy classifier and writes a meta-set workspace, then prints
// the accuracy range of each split.
//
// cargo run --release --example synthesize -- [workspace] [seed]

use std::path::{Path, PathBuf};

use autoeval::metaset::{synthesize, Manifest, Split, SynthConfig};

pub fn run_example(workspace: &Path, cfg: &SynthConfig) -> autoeval::Result<Manifest> {
    let manifest = synthesize(workspace, cfg)?;
    println!("clean accuracy {:.4}", manifest.clean_accuracy);
    for split in Split::ALL {
        let accs: Vec<f64> = manifest.records_in(split).map(|r| r.accuracy).collect();
        let lo = accs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!(
            "{split}: {} sets, accuracy min {lo:.3} mean {mean:.3} max {hi:.3}",
            accs.len()
        );
    }
    Ok(manifest)
}

#[allow(dead_code)]
fn main() -> autoeval::Result<()> {
    let mut args = std::env::args().skip(1);
    let workspace = PathBuf::from(args.next().unwrap_or_else(|| "target/example-workspace".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    run_example(
        &workspace,
        &SynthConfig {
            seed,
            ..SynthConfig::default()
        },
    )?;
    println!("workspace written to {}", workspace.display());
    Ok(())
}
