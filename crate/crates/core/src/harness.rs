//! Experiments over a synthesized workspace: per-method representations,
//! regressor fits, RMSE reports and leave-one-out ablations.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{
    average_confidence, baseline_representation, entropy_score_estimate, gaussian_summary, prediction_score_estimate,
    BaselineKind, GaussianSummary,
};
use crate::error::{Error, Result};
use crate::featureset::{self, FeatureSet};
use crate::io_util::{write_atomic, write_json};
use crate::matrix::Matrix;
use crate::metaset::{Manifest, SampleSetRecord, Split};
use crate::regress::{fit_with_validation, Pair, TrainConfig};
use crate::represent::{
    assemble, build_reference_frame, canonical_rows, sampling, ReferenceFrame, RepresentationOptions, Sampler,
};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Ours,
    OursPlusGm,
    OursRandomSampler,
    ShapeOnly,
    ClusterOnly,
    SampleOnly,
    OursMinusShape,
    OursMinusCluster,
    OursMinusSample,
    FdOnly,
    AcOnly,
    FdSigmaTau,
    /// Fraction of rows with top softmax score at least tau.
    PredScore(f64),
    /// Fraction of rows with normalized entropy below tau.
    EntropyScore(f64),
    OursPlusAc,
}

impl Method {
    /// Threshold estimators read the accuracy off the set directly.
    pub fn is_threshold(self) -> bool {
        matches!(self, Method::PredScore(_) | Method::EntropyScore(_))
    }

    /// The full representation and the leave-one-out variants.
    pub const ABLATIONS: [(&'static str, Method); 3] = [
        ("shape", Method::OursMinusShape),
        ("clusters", Method::OursMinusCluster),
        ("samples", Method::OursMinusSample),
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ours => f.write_str("OURS"),
            Method::OursPlusGm => f.write_str("OURS_PLUS_GM"),
            Method::OursRandomSampler => f.write_str("OURS_RANDOM_SAMPLER"),
            Method::ShapeOnly => f.write_str("SHAPE_ONLY"),
            Method::ClusterOnly => f.write_str("CLUSTER_ONLY"),
            Method::SampleOnly => f.write_str("SAMPLE_ONLY"),
            Method::OursMinusShape => f.write_str("OURS_MINUS_SHAPE"),
            Method::OursMinusCluster => f.write_str("OURS_MINUS_CLUSTER"),
            Method::OursMinusSample => f.write_str("OURS_MINUS_SAMPLE"),
            Method::FdOnly => f.write_str("FD_ONLY"),
            Method::AcOnly => f.write_str("AC_ONLY"),
            Method::FdSigmaTau => f.write_str("FD_SIGMA_TAU"),
            Method::PredScore(t) => write!(f, "PRED_SCORE({t})"),
            Method::EntropyScore(t) => write!(f, "ENTROPY_SCORE({t})"),
            Method::OursPlusAc => f.write_str("OURS_PLUS_AC"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let threshold = |inner: &str| -> Result<f64> {
            let tau: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad threshold in method {s:?}")))?;
            if tau.is_finite() && tau > 0.0 && tau <= 1.0 {
                Ok(tau)
            } else {
                Err(Error::Config(format!("threshold in {s:?} must lie in (0, 1]")))
            }
        };
        if let Some(inner) = s.strip_prefix("PRED_SCORE(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Method::PredScore(threshold(inner)?));
        }
        if let Some(inner) = s.strip_prefix("ENTROPY_SCORE(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Method::EntropyScore(threshold(inner)?));
        }
        Ok(match s {
            "OURS" => Method::Ours,
            "OURS_PLUS_GM" => Method::OursPlusGm,
            "OURS_RANDOM_SAMPLER" => Method::OursRandomSampler,
            "SHAPE_ONLY" => Method::ShapeOnly,
            "CLUSTER_ONLY" => Method::ClusterOnly,
            "SAMPLE_ONLY" => Method::SampleOnly,
            "OURS_MINUS_SHAPE" => Method::OursMinusShape,
            "OURS_MINUS_CLUSTER" => Method::OursMinusCluster,
            "OURS_MINUS_SAMPLE" => Method::OursMinusSample,
            "FD_ONLY" => Method::FdOnly,
            "AC_ONLY" => Method::AcOnly,
            "FD_SIGMA_TAU" => Method::FdSigmaTau,
            "OURS_PLUS_AC" => Method::OursPlusAc,
            _ => return Err(Error::Config(format!("unknown method {s:?}"))),
        })
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn default_methods() -> Vec<Method> {
    vec![
        Method::Ours,
        Method::OursRandomSampler,
        Method::OursMinusShape,
        Method::OursMinusCluster,
        Method::OursMinusSample,
        Method::FdOnly,
        Method::AcOnly,
        Method::FdSigmaTau,
        Method::PredScore(0.8),
        Method::PredScore(0.9),
        Method::EntropyScore(0.1),
        Method::EntropyScore(0.2),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub workspace: PathBuf,
    pub representation: RepresentationOptions,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Random-sampler draws per seed for OURS_RANDOM_SAMPLER. Draws are
    /// derived from the seed, so every seed contributes different draws.
    pub random_draws: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            workspace: PathBuf::from("workspace"),
            representation: RepresentationOptions::default(),
            methods: default_methods(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            random_draws: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.random_draws == 0 {
            return Err(Error::Config("random_draws must be >= 1".into()));
        }
        if self.representation.sampler != Sampler::Fps {
            return Err(Error::Config(
                "representation sampler must be fps; OURS_RANDOM_SAMPLER selects random sampling".into(),
            ));
        }
        self.representation.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetPrediction {
    pub id: String,
    pub split: Split,
    pub truth: f64,
    pub prediction: f64,
}

/// One fit (or one threshold evaluation) of one method under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub seed: u64,
    /// Random-sampler draw index, for OURS_RANDOM_SAMPLER only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    pub input_dim: usize,
    /// Percent, per split.
    pub rmse: BTreeMap<Split, f64>,
    pub predictions: Vec<SetPrediction>,
}

/// RMSE of one method, split and seed. Random-sampler rows average the
/// per-draw RMSEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub method: Method,
    pub split: Split,
    pub seed: u64,
    pub rmse_percent: f64,
}

/// Run-specific facts that are not reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_seconds: u64,
    pub representation_seconds: f64,
    pub fit_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<RmseRow>,
    pub runs: Vec<MethodRun>,
    pub metadata: RunMetadata,
}

impl ExperimentReport {
    pub fn rmse(&self, method: Method, split: Split, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.split == split && r.seed == seed)
            .map(|r| r.rmse_percent)
    }

    /// Mean over seeds.
    pub fn mean_rmse(&self, method: Method, split: Split) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.split == split)
            .map(|r| r.rmse_percent)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `method,split,seed,rmse_percent` with four decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,split,seed,rmse_percent\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.4}", r.method, r.split, r.seed, r.rmse_percent);
        }
        out
    }
}

/// Root mean squared error, in percent.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::Input(format!(
            "rmse needs equal non-zero lengths, got {} and {}",
            predictions.len(),
            truths.len()
        )));
    }
    let mse = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(100.0 * mse.sqrt())
}

/// Per-set quantities shared by every method and seed.
struct SetCache {
    record: SampleSetRecord,
    shape: Vec<f64>,
    clusters: Vec<f64>,
    fps: Vec<f64>,
    global_mean: Vec<f64>,
    average_confidence: f64,
    fd: f64,
    fd_sigma_tau: Vec<f64>,
}

fn load_record(workspace: &Path, record: &SampleSetRecord) -> Result<FeatureSet> {
    let path = workspace.join(&record.path);
    if !path.exists() {
        return Err(Error::Workspace(format!(
            "missing feature set {} for record {}",
            path.display(),
            record.id
        )));
    }
    featureset::load(&path)
}

fn build_cache(
    workspace: &Path,
    record: &SampleSetRecord,
    frame: &ReferenceFrame,
    opts: &RepresentationOptions,
    train_summary: &GaussianSummary,
) -> Result<SetCache> {
    let set = load_record(workspace, record)?;
    let mut opts = opts.clone();
    opts.include_global_mean = true;
    let rep = assemble(&set, frame, &opts)?;
    let fd_sigma_tau = baseline_representation(&set, train_summary, BaselineKind::FdSigmaTau)?;
    Ok(SetCache {
        record: record.clone(),
        shape: rep.shape.into_vec(),
        clusters: rep.clusters.into_vec(),
        fps: rep.samples.into_vec(),
        global_mean: rep.global_mean.unwrap_or_default(),
        average_confidence: average_confidence(&set)?,
        fd: fd_sigma_tau[0],
        fd_sigma_tau,
    })
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.concat()
}

fn vector_for(method: Method, c: &SetCache, random: Option<&[f64]>) -> Vec<f64> {
    match method {
        Method::Ours => concat(&[&c.shape, &c.clusters, &c.fps]),
        Method::OursPlusGm => concat(&[&c.shape, &c.clusters, &c.fps, &c.global_mean]),
        Method::OursRandomSampler => concat(&[&c.shape, &c.clusters, random.expect("random samples")]),
        Method::ShapeOnly => c.shape.clone(),
        Method::ClusterOnly => c.clusters.clone(),
        Method::SampleOnly => c.fps.clone(),
        Method::OursMinusShape => concat(&[&c.clusters, &c.fps]),
        Method::OursMinusCluster => concat(&[&c.shape, &c.fps]),
        Method::OursMinusSample => concat(&[&c.shape, &c.clusters]),
        Method::FdOnly => vec![c.fd],
        Method::AcOnly => vec![c.average_confidence],
        Method::FdSigmaTau => c.fd_sigma_tau.clone(),
        Method::OursPlusAc => concat(&[&c.shape, &c.clusters, &c.fps, &[c.average_confidence]]),
        Method::PredScore(_) | Method::EntropyScore(_) => unreachable!("threshold methods skip regression"),
    }
}

fn draw_seed(seed: u64, draw: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64 + 1);
    rng.random()
}

/// Random-sampler rows for every set, drawn on canonically ordered points
/// exactly as a random-sampler [`assemble`] would.
fn random_samples(workspace: &Path, cache: &[SetCache], samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    cache
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let set = load_record(workspace, &c.record)?;
            let points = canonical_rows(&Matrix::from_vec(set.n, set.d, set.features_f64()));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Ok(sampling::random_sample(&points, samples, rng.random())?.into_vec())
        })
        .collect()
}

fn finish_run(
    method: Method,
    seed: u64,
    draw: Option<usize>,
    best_epoch: Option<usize>,
    input_dim: usize,
    cache: &[SetCache],
    estimates: Vec<f64>,
) -> Result<MethodRun> {
    let predictions: Vec<SetPrediction> = cache
        .iter()
        .zip(estimates)
        .map(|(c, p)| SetPrediction {
            id: c.record.id.clone(),
            split: c.record.split,
            truth: c.record.accuracy,
            prediction: p,
        })
        .collect();
    let mut by_split = BTreeMap::new();
    for split in Split::ALL {
        let (p, t): (Vec<f64>, Vec<f64>) = predictions
            .iter()
            .filter(|s| s.split == split)
            .map(|s| (s.prediction, s.truth))
            .unzip();
        if p.is_empty() {
            continue;
        }
        let value = rmse(&p, &t)?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "{method} produced a non-finite RMSE on {split} (seed {seed})"
            )));
        }
        by_split.insert(split, value);
    }
    Ok(MethodRun {
        method,
        seed,
        draw,
        best_epoch,
        input_dim,
        rmse: by_split,
        predictions,
    })
}

fn regression_run(
    method: Method,
    seed: u64,
    draw: Option<usize>,
    cache: &[SetCache],
    vectors: Vec<Vec<f64>>,
    train_cfg: &TrainConfig,
) -> Result<MethodRun> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (c, v) in cache.iter().zip(&vectors) {
        let pair = Pair::new(v.clone(), c.record.accuracy);
        match c.record.split {
            Split::TrainMeta => train.push(pair),
            Split::ValMeta => val.push(pair),
            Split::TestMeta => {}
        }
    }
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let outcome = fit_with_validation(&train, &val, &cfg).map_err(|e| match e {
        Error::Numeric(m) => Error::Numeric(format!("{method}: {m}")),
        other => other,
    })?;
    let estimates = outcome.model.predict_many(&vectors)?;
    let input_dim = vectors[0].len();
    finish_run(
        method,
        seed,
        draw,
        Some(outcome.best_epoch),
        input_dim,
        cache,
        estimates,
    )
}

fn threshold_run(workspace: &Path, method: Method, seed: u64, cache: &[SetCache]) -> Result<MethodRun> {
    let estimates = cache
        .iter()
        .map(|c| {
            let set = load_record(workspace, &c.record)?;
            match method {
                Method::PredScore(t) => prediction_score_estimate(&set, t),
                Method::EntropyScore(t) => entropy_score_estimate(&set, t),
                _ => unreachable!(),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    finish_run(method, seed, None, None, 0, cache, estimates)
}

/// Builds every set's representation once, then evaluates each method under
/// each seed. Threshold methods bypass the regressor; every other method is
/// fitted on TRAIN_META with VAL_META checkpoint selection.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix_seconds = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let ws = &cfg.workspace;
    let manifest = Manifest::load(ws)?;
    let source_path = manifest.source_path(ws);
    if !source_path.exists() {
        return Err(Error::Workspace(format!(
            "missing source set {}",
            source_path.display()
        )));
    }
    let source = featureset::load(&source_path)?;
    let frame = build_reference_frame(&source, &cfg.representation)?;
    let train_summary = gaussian_summary(&source)?;
    let cache = manifest
        .records
        .iter()
        .map(|r| build_cache(ws, r, &frame, &cfg.representation, &train_summary))
        .collect::<Result<Vec<_>>>()?;
    let representation_seconds = started.elapsed().as_secs_f64();

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &seed in &cfg.seeds {
            if method.is_threshold() {
                runs.push(threshold_run(ws, method, seed, &cache)?);
            } else if method == Method::OursRandomSampler {
                for draw in 0..cfg.random_draws {
                    let random = random_samples(ws, &cache, cfg.representation.samples, draw_seed(seed, draw))?;
                    let vectors = cache
                        .iter()
                        .zip(&random)
                        .map(|(c, r)| vector_for(method, c, Some(r)))
                        .collect();
                    runs.push(regression_run(method, seed, Some(draw), &cache, vectors, &cfg.train)?);
                }
            } else {
                let vectors = cache.iter().map(|c| vector_for(method, c, None)).collect();
                runs.push(regression_run(method, seed, None, &cache, vectors, &cfg.train)?);
            }
            for split in Split::ALL {
                let values: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.method == method && r.seed == seed)
                    .filter_map(|r| r.rmse.get(&split).copied())
                    .collect();
                if !values.is_empty() {
                    rows.push(RmseRow {
                        method,
                        split,
                        seed,
                        rmse_percent: values.iter().sum::<f64>() / values.len() as f64,
                    });
                }
            }
        }
    }
    let total_seconds = started.elapsed().as_secs_f64();
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        runs,
        metadata: RunMetadata {
            started_unix_seconds,
            representation_seconds,
            fit_seconds: total_seconds - representation_seconds,
            total_seconds,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub component: String,
    pub split: Split,
    /// Leave-one-out RMSE minus full RMSE, percent, per seed.
    pub deltas: Vec<(u64, f64)>,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, component: &str, split: Split) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.component == component && r.split == split)
    }

    /// `component,split,seed,delta_percent`; the per-component mean uses the
    /// seed column value `mean`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,split,seed,delta_percent\n");
        for r in &self.rows {
            for (seed, d) in &r.deltas {
                let _ = writeln!(out, "{},{},{seed},{d:.4}", r.component, r.split);
            }
            let _ = writeln!(out, "{},{},mean,{:.4}", r.component, r.split, r.mean_delta);
        }
        out
    }
}

/// Leave-one-out deltas against OURS on VAL_META and TEST_META.
pub fn ablation_table(report: &ExperimentReport) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for split in [Split::ValMeta, Split::TestMeta] {
        for (component, method) in Method::ABLATIONS {
            let mut deltas = Vec::new();
            for &seed in &report.config.seeds {
                let full = report
                    .rmse(Method::Ours, split, seed)
                    .ok_or_else(|| Error::Input(format!("report lacks OURS for seed {seed}")))?;
                let without = report
                    .rmse(method, split, seed)
                    .ok_or_else(|| Error::Input(format!("report lacks {method} for seed {seed}")))?;
                deltas.push((seed, without - full));
            }
            let mean_delta = deltas.iter().map(|(_, d)| d).sum::<f64>() / deltas.len() as f64;
            rows.push(AblationRow {
                component: component.into(),
                split,
                deltas,
                mean_delta,
            });
        }
    }
    Ok(AblationTable { rows })
}

/// Writes `report.json`, `report.csv` and, when the roster allows it,
/// `ablation.csv` into `dir`.
pub fn write_reports(dir: &Path, report: &ExperimentReport) -> Result<Option<AblationTable>> {
    write_json(&dir.join(REPORT_JSON), report)?;
    write_atomic(&dir.join(REPORT_CSV), report.to_csv().as_bytes())?;
    let has_ablation = report.config.methods.contains(&Method::Ours)
        && Method::ABLATIONS.iter().all(|(_, m)| report.config.methods.contains(m));
    if !has_ablation {
        return Ok(None);
    }
    let table = ablation_table(report)?;
    write_atomic(&dir.join(ABLATION_CSV), table.to_csv().as_bytes())?;
    Ok(Some(table))
}
