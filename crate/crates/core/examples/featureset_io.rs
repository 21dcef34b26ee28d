// Writes a feature set to the FSET container, reads it back bit-exactly
// and shows what the validator reports for a damaged copy.
//
// cargo run --example featureset_io

use autoeval::featureset::{self, FeatureSet, HEADER_LEN};

pub fn run_example() -> autoeval::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| autoeval::Error::Workspace(e.to_string()))?;
    let features = vec![0.5, -1.25, 3.0, 0.0, 2.5, 1.0];
    let softmax = vec![0.9, 0.1, 0.3, 0.7, 0.5, 0.5];
    let set = FeatureSet::new(3, 2, features, "demo")?
        .with_softmax(2, softmax)?
        .with_labels(2, vec![0, 1, 1])?;

    let path = dir.path().join("demo.fset");
    featureset::save(&set, &path)?;
    let bytes = std::fs::read(&path).map_err(|e| autoeval::Error::Workspace(e.to_string()))?;
    println!("{} bytes ({HEADER_LEN}-byte header)", bytes.len());

    let back = featureset::load(&path)?;
    assert_eq!(back, set);
    let (correct, total) = back.accuracy_fraction().expect("labels and softmax present");
    println!("round trip ok, accuracy {correct}/{total}");

    // a NaN feature and a label outside [0, C)
    let mut broken = set.clone();
    broken.features[1] = f32::NAN;
    broken.labels.as_mut().unwrap()[2] = 5;
    for v in broken.validate() {
        println!("violation: {v}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> autoeval::Result<()> {
    run_example()
}
