//! Scalar and low-dimensional accuracy estimators used for comparison:
//! softmax-threshold counts, average confidence and the Fréchet distance
//! between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureset::FeatureSet;
use crate::matrix::Matrix;

/// Diagonal loading added to every sample covariance.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

impl GaussianSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.covariance.get(i, i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BaselineKind {
    FdOnly,
    AcOnly,
    /// FD followed by the feature mean and per-dimension variance.
    FdSigmaTau,
}

fn softmax_rows(set: &FeatureSet) -> Result<impl Iterator<Item = &[f32]>> {
    let softmax = set
        .softmax
        .as_ref()
        .ok_or_else(|| Error::Input(format!("set {:?} has no softmax outputs", set.source_id)))?;
    Ok(softmax.chunks_exact(set.classes))
}

fn check_threshold(name: &str, tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must lie in (0, 1], got {tau}")))
    }
}

fn max_prob(row: &[f32]) -> f64 {
    row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64
}

/// Fraction of rows whose top softmax score reaches `tau1`.
pub fn prediction_score_estimate(set: &FeatureSet, tau1: f64) -> Result<f64> {
    check_threshold("tau1", tau1)?;
    let passed = softmax_rows(set)?.filter(|r| max_prob(r) >= tau1).count();
    Ok(passed as f64 / set.n as f64)
}

/// Softmax entropy normalized by `ln C`, with `0 ln 0 = 0`.
pub fn normalized_entropy(row: &[f32]) -> f64 {
    let h: f64 = row
        .iter()
        .map(|&p| p as f64)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    h / (row.len() as f64).ln()
}

/// Fraction of rows whose normalized entropy is below `tau2`.
pub fn entropy_score_estimate(set: &FeatureSet, tau2: f64) -> Result<f64> {
    check_threshold("tau2", tau2)?;
    if set.softmax.is_some() && set.classes < 2 {
        return Err(Error::Input("entropy score needs at least two classes".into()));
    }
    let passed = softmax_rows(set)?.filter(|r| normalized_entropy(r) < tau2).count();
    Ok(passed as f64 / set.n as f64)
}

/// Mean of the per-row maximum softmax probability.
pub fn average_confidence(set: &FeatureSet) -> Result<f64> {
    let total: f64 = softmax_rows(set)?.map(max_prob).sum();
    Ok(total / set.n as f64)
}

/// Sample mean and unbiased covariance plus [`COVARIANCE_RIDGE`] on the diagonal.
pub fn gaussian_summary(set: &FeatureSet) -> Result<GaussianSummary> {
    if set.n < 2 {
        return Err(Error::Input(format!(
            "covariance needs at least 2 rows, set {:?} has {}",
            set.source_id, set.n
        )));
    }
    let d = set.d;
    let points = set.features_f64();
    let mut mean = vec![0.0; d];
    for row in points.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= set.n as f64);

    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in points.chunks_exact(d) {
        for (c, (&v, &m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            let out = cov.row_mut(i);
            for j in i..d {
                out[j] += ci * centered[j];
            }
        }
    }
    let denom = (set.n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
        cov.set(i, i, cov.get(i, i) + COVARIANCE_RIDGE);
    }
    Ok(GaussianSummary { mean, covariance: cov })
}

fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Square root of a symmetric PSD matrix, negative eigenvalues clamped to 0.
fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The cross term is evaluated as `tr sqrt(S_a^(1/2) S_b S_a^(1/2))`, which
/// has the same trace and keeps the eigenproblem symmetric.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() || a.covariance.rows() != a.dim() || b.covariance.rows() != b.dim() {
        return Err(Error::Input(format!(
            "cannot compare {}-dimensional and {}-dimensional summaries",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let cov_a = to_nalgebra(&a.covariance);
    let cov_b = to_nalgebra(&b.covariance);
    let root_a = psd_sqrt(cov_a.clone());
    let inner = &root_a * &cov_b * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let fd = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    if !fd.is_finite() {
        return Err(Error::Numeric(format!("Fréchet distance evaluated to {fd}")));
    }
    Ok(fd.max(0.0))
}

pub fn baseline_representation(
    set: &FeatureSet,
    train_summary: &GaussianSummary,
    kind: BaselineKind,
) -> Result<Vec<f64>> {
    match kind {
        BaselineKind::AcOnly => Ok(vec![average_confidence(set)?]),
        BaselineKind::FdOnly => {
            let summary = gaussian_summary(set)?;
            Ok(vec![frechet_distance(&summary, train_summary)?])
        }
        BaselineKind::FdSigmaTau => {
            let summary = gaussian_summary(set)?;
            let mut out = Vec::with_capacity(1 + 2 * set.d);
            out.push(frechet_distance(&summary, train_summary)?);
            out.extend_from_slice(&summary.mean);
            out.extend(summary.variances());
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_softmax(rows: &[&[f32]]) -> FeatureSet {
        let c = rows[0].len();
        FeatureSet::new(rows.len(), 1, vec![0.0; rows.len()], "t")
            .unwrap()
            .with_softmax(c, rows.concat())
            .unwrap()
    }

    fn summary_1d(mean: f64, var: f64) -> GaussianSummary {
        GaussianSummary {
            mean: vec![mean],
            covariance: Matrix::from_vec(1, 1, vec![var]),
        }
    }

    #[test]
    fn prediction_score_counts_confident_rows() {
        let set = with_softmax(&[&[0.95, 0.05], &[0.6, 0.4]]);
        assert_eq!(prediction_score_estimate(&set, 0.9).unwrap(), 0.5);
        let onehot = with_softmax(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(prediction_score_estimate(&onehot, 1.0).unwrap(), 1.0);
        let uniform = with_softmax(&[&[0.1; 10], &[0.1; 10]]);
        assert_eq!(prediction_score_estimate(&uniform, 0.8).unwrap(), 0.0);
    }

    #[test]
    fn entropy_extremes() {
        assert_eq!(normalized_entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert_eq!(normalized_entropy(&[0.5, 0.5]), 1.0);
        let onehot = with_softmax(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(entropy_score_estimate(&onehot, 0.01).unwrap(), 1.0);
        let uniform = with_softmax(&[&[0.25; 4]]);
        assert_eq!(entropy_score_estimate(&uniform, 0.99).unwrap(), 0.0);
    }

    #[test]
    fn average_confidence_is_mean_of_maxima() {
        let set = with_softmax(&[&[0.9, 0.1], &[0.7, 0.3]]);
        assert!((average_confidence(&set).unwrap() - 0.8).abs() < 1e-7);
        let uniform = with_softmax(&[&[0.25; 4], &[0.25; 4]]);
        assert_eq!(average_confidence(&uniform).unwrap(), 0.25);
    }

    #[test]
    fn missing_softmax_is_input_error() {
        let set = FeatureSet::new(1, 1, vec![0.0], "t").unwrap();
        assert!(matches!(average_confidence(&set), Err(Error::Input(_))));
        assert!(matches!(prediction_score_estimate(&set, 0.5), Err(Error::Input(_))));
        assert!(matches!(entropy_score_estimate(&set, 0.5), Err(Error::Input(_))));
    }

    #[test]
    fn two_point_covariance() {
        let set = FeatureSet::new(2, 2, vec![0.0, 0.0, 2.0, 0.0], "t").unwrap();
        let g = gaussian_summary(&set).unwrap();
        assert_eq!(g.mean, vec![1.0, 0.0]);
        assert_eq!(
            g.covariance.as_slice(),
            &[2.0 + COVARIANCE_RIDGE, 0.0, 0.0, COVARIANCE_RIDGE]
        );
    }

    #[test]
    fn repeated_point_covariance_is_ridge() {
        let set = FeatureSet::new(5, 2, [3.0, -1.0].repeat(5), "t").unwrap();
        let g = gaussian_summary(&set).unwrap();
        assert_eq!(g.covariance.as_slice(), &[COVARIANCE_RIDGE, 0.0, 0.0, COVARIANCE_RIDGE]);
        let single = FeatureSet::new(1, 2, vec![0.0, 0.0], "t").unwrap();
        assert!(matches!(gaussian_summary(&single), Err(Error::Input(_))));
    }

    #[test]
    fn frechet_one_dimensional_closed_forms() {
        let fd = frechet_distance(&summary_1d(0.0, 1.0), &summary_1d(1.0, 1.0)).unwrap();
        assert!((fd - 1.0).abs() < 1e-8);
        let fd = frechet_distance(&summary_1d(0.0, 1.0), &summary_1d(0.0, 4.0)).unwrap();
        assert!((fd - 1.0).abs() < 1e-8);
        let a = summary_1d(0.3, 2.0);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-8);
    }

    #[test]
    fn frechet_rejects_dimension_mismatch() {
        let b = GaussianSummary {
            mean: vec![0.0, 0.0],
            covariance: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
        };
        assert!(matches!(
            frechet_distance(&summary_1d(0.0, 1.0), &b),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn baseline_vectors() {
        let set = FeatureSet::new(3, 2, vec![0.0, 1.0, 2.0, 0.5, 1.0, -1.0], "t")
            .unwrap()
            .with_softmax(2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0])
            .unwrap();
        let train = gaussian_summary(&set).unwrap();
        let fd = baseline_representation(&set, &train, BaselineKind::FdOnly).unwrap();
        assert_eq!(fd.len(), 1);
        assert!(fd[0] < 1e-8);
        let full = baseline_representation(&set, &train, BaselineKind::FdSigmaTau).unwrap();
        assert_eq!(full.len(), 1 + 2 * 2);
        assert_eq!(
            baseline_representation(&set, &train, BaselineKind::AcOnly).unwrap(),
            vec![1.0]
        );
    }
}
