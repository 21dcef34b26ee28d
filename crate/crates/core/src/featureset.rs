//! Per-dataset feature collections and the `FSET` binary container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FSET"
//!      4     2  version (u16, currently 1)
//!      6     2  flags (bit0 softmax present, bit1 labels present)
//!      8     4  N (u32)
//!     12     4  D (u32)
//!     16     4  C (u32)
//!     20   4ND  features, f32 row-major
//!      .   4NC  softmax, f32 row-major (if bit0)
//!      .    4N  labels, i32 (if bit1)
//! ```

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util;

pub const MAGIC: &[u8; 4] = b"FSET";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
pub const FLAG_SOFTMAX: u16 = 1 << 0;
pub const FLAG_LABELS: u16 = 1 << 1;

/// Allowed deviation of a stored softmax row from unit sum.
pub const SOFTMAX_SUM_TOLERANCE: f64 = 1e-5;

/// Features a classifier produced for one dataset, plus its softmax outputs
/// and ground-truth labels when known.
///
/// Values are kept in their stored `f32` precision so that saving and loading
/// is lossless; numerical code reads them through [`FeatureSet::features_f64`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n: usize,
    pub d: usize,
    /// Number of classes. Zero when neither softmax nor labels are present.
    pub classes: usize,
    /// Row-major `n x d`.
    pub features: Vec<f32>,
    /// Row-major `n x classes`.
    pub softmax: Option<Vec<f32>>,
    pub labels: Option<Vec<i32>>,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub row: Option<usize>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "{}[row {}]: {}", self.field, row, self.rule),
            None => write!(f, "{}: {}", self.field, self.rule),
        }
    }
}

impl FeatureSet {
    /// Builds a feature-only set and validates it.
    pub fn new(n: usize, d: usize, features: Vec<f32>, source_id: impl Into<String>) -> Result<Self> {
        let set = FeatureSet {
            n,
            d,
            classes: 0,
            features,
            softmax: None,
            labels: None,
            source_id: source_id.into(),
        };
        set.check()?;
        Ok(set)
    }

    pub fn with_softmax(mut self, classes: usize, softmax: Vec<f32>) -> Result<Self> {
        self.classes = classes;
        self.softmax = Some(softmax);
        self.check()?;
        Ok(self)
    }

    pub fn with_labels(mut self, classes: usize, labels: Vec<i32>) -> Result<Self> {
        if self.softmax.is_some() && classes != self.classes {
            return Err(Error::Validation(format!(
                "labels declare {classes} classes but softmax has {}",
                self.classes
            )));
        }
        self.classes = classes;
        self.labels = Some(labels);
        self.check()?;
        Ok(self)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn softmax_row(&self, i: usize) -> Option<&[f32]> {
        self.softmax
            .as_ref()
            .map(|s| &s[i * self.classes..(i + 1) * self.classes])
    }

    /// Row-major `n x d` copy of the features in `f64`.
    pub fn features_f64(&self) -> Vec<f64> {
        self.features.iter().map(|&v| v as f64).collect()
    }

    /// Index of the largest softmax entry per row (lowest index on ties).
    pub fn predicted_classes(&self) -> Option<Vec<usize>> {
        self.softmax.as_ref()?;
        Some((0..self.n).map(|i| argmax(self.softmax_row(i).unwrap())).collect())
    }

    /// Fraction of rows whose predicted class matches the label, as an exact
    /// `(correct, total)` pair.
    pub fn accuracy_fraction(&self) -> Option<(usize, usize)> {
        let predicted = self.predicted_classes()?;
        let labels = self.labels.as_ref()?;
        let correct = predicted
            .iter()
            .zip(labels)
            .filter(|(&p, &l)| l >= 0 && p == l as usize)
            .count();
        Some((correct, self.n))
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    fn check(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(summarize(&violations)))
        }
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn summarize(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    let mut msg = shown.join("; ");
    if violations.len() > 5 {
        msg.push_str(&format!("; ... {} more", violations.len() - 5));
    }
    msg
}

/// Checks every invariant of a feature set and reports each failure.
pub fn validate(set: &FeatureSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let v = |field, row, rule: &str| Violation {
        field,
        row,
        rule: rule.to_string(),
    };
    if set.n == 0 {
        out.push(v("n", None, "N must be at least 1"));
    }
    if set.d == 0 {
        out.push(v("d", None, "D must be at least 1"));
    }
    if set.features.len() != set.n * set.d {
        out.push(v("features", None, "length must equal N*D"));
    } else if set.d > 0 {
        for (i, row) in set.features.chunks_exact(set.d).enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                out.push(v("features", Some(i), "entries must be finite"));
            }
        }
    }

    if let Some(softmax) = &set.softmax {
        if set.classes == 0 {
            out.push(v("softmax", None, "C must be at least 1 when softmax is present"));
        } else if softmax.len() != set.n * set.classes {
            out.push(v("softmax", None, "length must equal N*C"));
        } else {
            for (i, row) in softmax.chunks_exact(set.classes).enumerate() {
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    out.push(v("softmax", Some(i), "entries must lie in [0, 1]"));
                    continue;
                }
                let sum: f64 = row.iter().map(|&p| p as f64).sum();
                if (sum - 1.0).abs() > SOFTMAX_SUM_TOLERANCE {
                    out.push(v(
                        "softmax",
                        Some(i),
                        &format!("row sums to {sum}, expected 1 within 1e-5"),
                    ));
                }
            }
        }
    }

    if let Some(labels) = &set.labels {
        if labels.len() != set.n {
            out.push(v("labels", None, "length must equal N"));
        }
        if set.classes == 0 {
            out.push(v("labels", None, "C must be at least 1 when labels are present"));
        } else {
            for (i, &l) in labels.iter().enumerate() {
                if l < 0 || l as usize >= set.classes {
                    out.push(v(
                        "labels",
                        Some(i),
                        &format!("label {l} outside [0, C) with C = {}", set.classes),
                    ));
                }
            }
        }
    }
    out
}

/// Encodes a set into its `FSET` byte representation.
pub fn encode(set: &FeatureSet) -> Result<Vec<u8>> {
    let violations = validate(set);
    if !violations.is_empty() {
        return Err(Error::Validation(summarize(&violations)));
    }
    let to_u32 = |x: usize, what: &str| {
        u32::try_from(x).map_err(|_| Error::Validation(format!("{what} = {x} does not fit in u32")))
    };
    let mut flags = 0u16;
    if set.softmax.is_some() {
        flags |= FLAG_SOFTMAX;
    }
    if set.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    let payload =
        4 * (set.features.len() + set.softmax.as_ref().map_or(0, Vec::len) + set.labels.as_ref().map_or(0, Vec::len));
    let mut buf = Vec::with_capacity(HEADER_LEN + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&to_u32(set.n, "N")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(set.d, "D")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(set.classes, "C")?.to_le_bytes());
    for x in &set.features {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(s) = &set.softmax {
        for x in s {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(labels) = &set.labels {
        for x in labels {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Parses the container without checking the data invariants.
pub fn decode_unvalidated(bytes: &[u8], source_id: impl Into<String>) -> Result<FeatureSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"FSET\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let version = u16_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let flags = u16_at(6);
    if flags & !(FLAG_SOFTMAX | FLAG_LABELS) != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#06x}")));
    }
    let (n, d, classes) = (u32_at(8), u32_at(12), u32_at(16));
    let has_softmax = flags & FLAG_SOFTMAX != 0;
    let has_labels = flags & FLAG_LABELS != 0;

    let words = (n as u128) * (d as u128)
        + if has_softmax {
            (n as u128) * (classes as u128)
        } else {
            0
        }
        + if has_labels { n as u128 } else { 0 };
    let expected = HEADER_LEN as u128 + 4 * words;
    if (bytes.len() as u128) < expected {
        return Err(Error::Format(format!(
            "truncated payload: header declares {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    if (bytes.len() as u128) > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() as u128 - expected
        )));
    }

    let mut cursor = HEADER_LEN;
    let mut take_f32 = |count: usize| {
        let out: Vec<f32> = bytes[cursor..cursor + 4 * count]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += 4 * count;
        out
    };
    let features = take_f32(n * d);
    let softmax = has_softmax.then(|| take_f32(n * classes));
    let labels = has_labels.then(|| {
        bytes[cursor..cursor + 4 * n]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    });
    Ok(FeatureSet {
        n,
        d,
        classes,
        features,
        softmax,
        labels,
        source_id: source_id.into(),
    })
}

pub fn decode(bytes: &[u8], source_id: impl Into<String>) -> Result<FeatureSet> {
    let set = decode_unvalidated(bytes, source_id)?;
    set.check()?;
    Ok(set)
}

pub fn save(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(set)?;
    io_util::write_atomic(path.as_ref(), &bytes)
}

/// Reads and validates a set. `source_id` is taken from the file stem, since
/// the container does not store it.
pub fn load(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, stem(path))
}

pub fn load_unvalidated(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_unvalidated(&bytes, stem(path))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
