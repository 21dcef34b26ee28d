//! Semi-structured dataset representation: per-dimension histograms,
//! canonically ordered cluster centers and farthest-point samples,
//! concatenated into one flat vector.
//!
//! All components are computed against a [`ReferenceFrame`] built once from
//! the source (training) features, so that bin `b` and cluster row `k` mean
//! the same thing for every dataset that is represented.

pub mod hungarian;
pub mod kmeans;
pub mod sampling;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureset::FeatureSet;
use crate::matrix::{distance, Matrix};

pub use kmeans::{KMeansParams, KMeansResult};

pub const DEFAULT_BINS: usize = 30;
pub const DEFAULT_SAMPLES: usize = 100;
/// Relative margin added on both sides of the source range when placing bins.
pub const EDGE_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Fps,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentationOptions {
    /// Histogram bins per dimension.
    pub bins: usize,
    /// Cluster count; `None` means one cluster per class.
    pub clusters: Option<usize>,
    /// Number of sampled rows.
    pub samples: usize,
    pub include_global_mean: bool,
    pub sampler: Sampler,
    pub kmeans_seed: u64,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
}

impl Default for RepresentationOptions {
    fn default() -> Self {
        RepresentationOptions {
            bins: DEFAULT_BINS,
            clusters: None,
            samples: DEFAULT_SAMPLES,
            include_global_mean: false,
            sampler: Sampler::Fps,
            kmeans_seed: 0,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
        }
    }
}

impl RepresentationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!("bins must be >= 2, got {}", self.bins)));
        }
        if self.clusters == Some(0) {
            return Err(Error::Config("clusters must be >= 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        if self.kmeans_max_iters == 0 {
            return Err(Error::Config("kmeans_max_iters must be >= 1".into()));
        }
        if !(self.kmeans_tol.is_finite() && self.kmeans_tol >= 0.0) {
            return Err(Error::Config("kmeans_tol must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Length of the flat vector for `d`-dimensional features and `k` clusters.
    pub fn flat_len(&self, d: usize, k: usize) -> usize {
        d * (self.bins + k + self.samples) + if self.include_global_mean { d } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    /// `D x (B + 1)`, each row strictly increasing.
    pub bin_edges: Matrix,
    /// `K x D`; row `k` is the mean source feature of class `k`.
    pub class_centroids: Matrix,
    pub bins: usize,
    pub clusters: usize,
    pub built_from: String,
}

impl ReferenceFrame {
    pub fn dim(&self) -> usize {
        self.bin_edges.rows()
    }

    /// Structural checks for frames read from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Reference(m));
        if self.bins < 2 || self.bin_edges.cols() != self.bins + 1 {
            return bad(format!(
                "bin_edges has {} columns for {} bins",
                self.bin_edges.cols(),
                self.bins
            ));
        }
        for (d, row) in self.bin_edges.iter_rows().enumerate() {
            if row
                .windows(2)
                .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
            {
                return bad(format!("bin edges of dimension {d} are not strictly increasing"));
            }
        }
        if self.class_centroids.rows() != self.clusters || self.clusters == 0 {
            return bad(format!(
                "{} class centroids for K = {}",
                self.class_centroids.rows(),
                self.clusters
            ));
        }
        if self.class_centroids.cols() != self.dim() {
            return bad("class centroid width differs from bin edge rows".into());
        }
        for a in 0..self.clusters {
            for b in a + 1..self.clusters {
                let gap = distance(self.class_centroids.row(a), self.class_centroids.row(b));
                if gap.is_nan() || gap <= 0.0 {
                    return bad(format!("class centroids {a} and {b} coincide"));
                }
            }
        }
        Ok(())
    }
}

/// Representation of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRepresentation {
    pub source_id: String,
    pub options: RepresentationOptions,
    /// `D x B` histogram fractions.
    pub shape: Matrix,
    /// `K x D`, row `k` matched to reference class `k`.
    pub clusters: Matrix,
    /// `S x D` in selection order.
    pub samples: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_mean: Option<Vec<f64>>,
    pub flat: Vec<f64>,
}

impl DatasetRepresentation {
    fn from_parts(
        source_id: String,
        options: RepresentationOptions,
        shape: Matrix,
        clusters: Matrix,
        samples: Matrix,
        global_mean: Option<Vec<f64>>,
    ) -> Self {
        let mut flat = Vec::with_capacity(
            shape.as_slice().len()
                + clusters.as_slice().len()
                + samples.as_slice().len()
                + global_mean.as_ref().map_or(0, Vec::len),
        );
        flat.extend_from_slice(shape.as_slice());
        flat.extend_from_slice(clusters.as_slice());
        flat.extend_from_slice(samples.as_slice());
        if let Some(gm) = &global_mean {
            flat.extend_from_slice(gm);
        }
        DatasetRepresentation {
            source_id,
            options,
            shape,
            clusters,
            samples,
            global_mean,
            flat,
        }
    }
}

fn check_options_against_frame(opts: &RepresentationOptions, frame: &ReferenceFrame) -> Result<()> {
    opts.validate()?;
    if opts.bins != frame.bins {
        return Err(Error::Shape(format!(
            "options ask for {} bins but the reference frame has {}",
            opts.bins, frame.bins
        )));
    }
    if let Some(k) = opts.clusters {
        if k != frame.clusters {
            return Err(Error::Cluster(format!(
                "options ask for {k} clusters but the reference frame has {}",
                frame.clusters
            )));
        }
    }
    Ok(())
}

fn as_matrix(set: &FeatureSet) -> Matrix {
    Matrix::from_vec(set.n, set.d, set.features_f64())
}

/// Bin edges from the source feature range and per-class centroids.
pub fn build_reference_frame(source: &FeatureSet, opts: &RepresentationOptions) -> Result<ReferenceFrame> {
    opts.validate()?;
    let labels = source
        .labels
        .as_ref()
        .ok_or_else(|| Error::Reference("source set has no labels".into()))?;
    let k = opts.clusters.unwrap_or(source.classes);
    if k == 0 {
        return Err(Error::Reference("source set declares zero classes".into()));
    }
    if k > source.n {
        return Err(Error::Reference(format!("K = {k} exceeds N = {}", source.n)));
    }

    let points = as_matrix(source);
    let (d, b) = (source.d, opts.bins);
    let mut edges = Matrix::zeros(d, b + 1);
    for dim in 0..d {
        let (lo, hi) = points
            .iter_rows()
            .map(|r| r[dim])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        let margin = if range > 0.0 { EDGE_MARGIN * range } else { EDGE_MARGIN };
        let (start, end) = (lo - margin, hi + margin);
        let row = edges.row_mut(dim);
        for (j, e) in row.iter_mut().enumerate() {
            *e = start + (end - start) * j as f64 / b as f64;
        }
        row[b] = end;
    }

    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &label) in labels.iter().enumerate() {
        if label < 0 || label as usize >= k {
            return Err(Error::Reference(format!(
                "label {label} at row {i} is outside [0, {k})"
            )));
        }
        let l = label as usize;
        counts[l] += 1;
        for (s, &v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Reference(format!(
            "class {missing} is absent from the source labels"
        )));
    }
    for (c, &count) in counts.iter().enumerate() {
        sums.row_mut(c).iter_mut().for_each(|v| *v /= count as f64);
    }

    let frame = ReferenceFrame {
        bin_edges: edges,
        class_centroids: sums,
        bins: b,
        clusters: k,
        built_from: source.source_id.clone(),
    };
    frame.validate()?;
    Ok(frame)
}

/// Histogram bin of `v`: left-closed bins, last bin closed, out-of-range
/// values clipped into the edge bins.
fn bin_index(edges: &[f64], v: f64) -> usize {
    let b = edges.len() - 1;
    // number of inner edges (edges[1..b]) that are <= v
    edges[1..b].partition_point(|&e| e <= v)
}

pub fn shape_of_points(points: &Matrix, frame: &ReferenceFrame) -> Result<Matrix> {
    if points.cols() != frame.dim() {
        return Err(Error::Shape(format!(
            "features have {} dimensions, reference frame has {}",
            points.cols(),
            frame.dim()
        )));
    }
    if points.rows() == 0 {
        return Err(Error::Shape("empty feature set".into()));
    }
    let b = frame.bins;
    let mut counts = vec![0usize; points.cols() * b];
    for row in points.iter_rows() {
        for (dim, &v) in row.iter().enumerate() {
            counts[dim * b + bin_index(frame.bin_edges.row(dim), v)] += 1;
        }
    }
    let n = points.rows() as f64;
    Ok(Matrix::from_vec(
        points.cols(),
        b,
        counts.into_iter().map(|c| c as f64 / n).collect(),
    ))
}

/// Fraction of rows per bin, per dimension.
pub fn compute_shape(set: &FeatureSet, frame: &ReferenceFrame) -> Result<Matrix> {
    shape_of_points(&as_matrix(set), frame)
}

/// k-means centers reordered so that row `k` is the center matched to
/// reference class `k` under minimum total Euclidean cost.
pub fn clusters_of_points(points: &Matrix, frame: &ReferenceFrame, opts: &RepresentationOptions) -> Result<Matrix> {
    if points.cols() != frame.dim() {
        return Err(Error::Shape(format!(
            "features have {} dimensions, reference frame has {}",
            points.cols(),
            frame.dim()
        )));
    }
    let k = frame.clusters;
    let result = kmeans::kmeans(
        points,
        &KMeansParams {
            k,
            seed: opts.kmeans_seed,
            max_iters: opts.kmeans_max_iters,
            tol: opts.kmeans_tol,
        },
    )?;
    Ok(align_to_reference(&result.centers, &frame.class_centroids))
}

pub fn align_to_reference(centers: &Matrix, reference: &Matrix) -> Matrix {
    let k = centers.rows();
    let mut cost = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost.set(i, j, distance(centers.row(i), reference.row(j)));
        }
    }
    let assignment = hungarian::min_cost_assignment(&cost);
    let mut ordered = Matrix::zeros(k, centers.cols());
    for (i, &slot) in assignment.iter().enumerate() {
        ordered.row_mut(slot).copy_from_slice(centers.row(i));
    }
    ordered
}

pub fn compute_clusters(set: &FeatureSet, frame: &ReferenceFrame, opts: &RepresentationOptions) -> Result<Matrix> {
    check_options_against_frame(opts, frame)?;
    clusters_of_points(&as_matrix(set), frame, opts)
}

pub fn fps_sample(set: &FeatureSet, s: usize) -> Result<Matrix> {
    sampling::farthest_point_sample(&as_matrix(set), s)
}

pub fn random_sample(set: &FeatureSet, s: usize, seed: u64) -> Result<Matrix> {
    sampling::random_sample(&as_matrix(set), s, seed)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Rows sorted lexicographically. Every component computed from this order
/// is independent of how the input rows were arranged.
pub fn canonical_rows(points: &Matrix) -> Matrix {
    let mut order: Vec<usize> = (0..points.rows()).collect();
    order.sort_by(|&a, &b| lexicographic(points.row(a), points.row(b)));
    points.select_rows(&order)
}

/// Full representation `[shape, clusters, samples, global_mean?]`.
pub fn assemble(
    set: &FeatureSet,
    frame: &ReferenceFrame,
    opts: &RepresentationOptions,
) -> Result<DatasetRepresentation> {
    check_options_against_frame(opts, frame)?;
    if set.d != frame.dim() {
        return Err(Error::Shape(format!(
            "features have {} dimensions, reference frame has {}",
            set.d,
            frame.dim()
        )));
    }
    let points = canonical_rows(&as_matrix(set));
    let shape = shape_of_points(&points, frame)?;
    let clusters = clusters_of_points(&points, frame, opts)?;
    let samples = match opts.sampler {
        Sampler::Fps => sampling::farthest_point_sample(&points, opts.samples)?,
        Sampler::Random { seed } => sampling::random_sample(&points, opts.samples, seed)?,
    };
    let global_mean = opts.include_global_mean.then(|| points.column_means());
    let mut options = opts.clone();
    options.clusters = Some(frame.clusters);
    Ok(DatasetRepresentation::from_parts(
        set.source_id.clone(),
        options,
        shape,
        clusters,
        samples,
        global_mean,
    ))
}
