// Builds a reference frame from a labelled source set and assembles the
// representation of a shifted copy: histograms, aligned cluster centers and
// farthest-point samples.
//
// cargo run --example representation

use autoeval::represent::{assemble, build_reference_frame, RepresentationOptions};
use autoeval::FeatureSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn blobs(n: usize, offset: f32, seed: u64) -> autoeval::Result<FeatureSet> {
    let centers = [[0.0f32, 0.0, 0.0], [4.0, 0.0, 1.0], [0.0, 4.0, -1.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        for &m in &centers[c] {
            features.push(m + offset + rng.sample::<f32, _>(StandardNormal) * 0.5);
        }
        labels.push(c as i32);
    }
    FeatureSet::new(n, 3, features, format!("blobs+{offset}"))?.with_labels(3, labels)
}

pub fn run_example() -> autoeval::Result<()> {
    let source = blobs(600, 0.0, 1)?;
    let opts = RepresentationOptions {
        bins: 10,
        samples: 8,
        ..Default::default()
    };
    let frame = build_reference_frame(&source, &opts)?;
    println!(
        "frame: {} bins, {} clusters, built from {}",
        frame.bins, frame.clusters, frame.built_from
    );

    let shifted = blobs(300, 0.75, 2)?;
    let rep = assemble(&shifted, &frame, &opts)?;
    for (d, row) in rep.shape.iter_rows().enumerate() {
        let bars: String = row
            .iter()
            .map(|&f| {
                if f > 0.15 {
                    '#'
                } else if f > 0.02 {
                    '+'
                } else {
                    '.'
                }
            })
            .collect();
        println!("dim {d} histogram {bars}");
    }
    for (k, c) in rep.clusters.iter_rows().enumerate() {
        println!(
            "cluster {k} -> {:?}",
            c.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
    println!("first sample {:?}", rep.samples.row(0));
    println!(
        "flat length {} = 3 x ({} + {} + {})",
        rep.flat.len(),
        opts.bins,
        frame.clusters,
        opts.samples
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> autoeval::Result<()> {
    run_example()
}
