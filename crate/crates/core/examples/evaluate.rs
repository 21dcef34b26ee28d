// Runs an experiment on a synthesized workspace, writes the report files
// and prints the mean RMSE per method and split.
//
// cargo run --release --example evaluate -- <workspace> [METHOD ...]
//
// Seeds default to 0..5; set `SEEDS=0,1` to change them.

use std::path::PathBuf;

use autoeval::harness::{default_methods, run_experiment, write_reports, ExperimentConfig, ExperimentReport, Method};
use autoeval::metaset::Split;

pub fn run_example(cfg: &ExperimentConfig) -> autoeval::Result<ExperimentReport> {
    let report = run_experiment(cfg)?;
    let table = write_reports(&cfg.workspace, &report)?;
    println!("{:<24} {:>10} {:>10} {:>10}", "method", "train", "val", "test");
    for &m in &cfg.methods {
        let cell = |s| report.mean_rmse(m, s).map_or("-".into(), |v| format!("{v:.4}"));
        println!(
            "{:<24} {:>10} {:>10} {:>10}",
            m.to_string(),
            cell(Split::TrainMeta),
            cell(Split::ValMeta),
            cell(Split::TestMeta)
        );
    }
    for r in table.iter().flat_map(|t| &t.rows) {
        println!("remove {:<9} {}: mean delta {:+.4}", r.component, r.split, r.mean_delta);
    }
    println!("total {:.1}s", report.metadata.total_seconds);
    Ok(report)
}

#[allow(dead_code)]
fn main() -> autoeval::Result<()> {
    let mut args = std::env::args().skip(1);
    let workspace = PathBuf::from(args.next().unwrap_or_else(|| "target/example-workspace".into()));
    let methods: Vec<Method> = args.map(|m| m.parse()).collect::<autoeval::Result<_>>()?;
    let mut cfg = ExperimentConfig {
        workspace,
        methods: if methods.is_empty() { default_methods() } else { methods },
        ..ExperimentConfig::default()
    };
    if let Ok(seeds) = std::env::var("SEEDS") {
        cfg.seeds = seeds.split(',').filter_map(|s| s.trim().parse().ok()).collect();
    }
    run_example(&cfg)?;
    Ok(())
}
