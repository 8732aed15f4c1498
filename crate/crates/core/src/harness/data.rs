//! Synthetic 2-D datasets and CSV ingestion with a seeded train/val/test
//! split.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{derived_rng, Stream};
use crate::diffcore::Tensor;

/// Distance of blob centers from the origin.
pub const BLOB_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetKind {
    Blobs,
    Moons,
    Rings,
    Csv(PathBuf),
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Blobs => "blobs",
            DatasetKind::Moons => "moons",
            DatasetKind::Rings => "rings",
            DatasetKind::Csv(_) => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub samples: usize,
    pub classes: usize,
    /// Standard deviation of the Gaussian feature noise.
    pub noise: f64,
    /// Fraction of labels flipped uniformly to another class.
    pub label_noise: f64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Blobs,
            samples: 1000,
            classes: 2,
            noise: 1.0,
            label_noise: 0.0,
            split: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid dataset: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Spec(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.kind == DatasetKind::Moons && self.classes != 2 {
            return bad("moons has exactly 2 classes".into());
        }
        if !matches!(self.kind, DatasetKind::Csv(_)) && self.samples < 3 {
            return bad(format!("need at least 3 samples, got {}", self.samples));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be a nonnegative number, got {}", self.noise));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!("label_noise must lie in [0, 0.5), got {}", self.label_noise));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!(
                "split fractions must be nonnegative and sum to 1, got {:?}",
                self.split
            ));
        }
        Ok(())
    }
}

/// One partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Tensor,
    pub y: Vec<usize>,
    /// Row index in the generated (or loaded) dataset.
    pub ids: Vec<usize>,
    /// Generating blob for each row, used by augmentation. Empty for other
    /// kinds.
    pub component: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Split {
        Split {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            component: if self.component.is_empty() {
                Vec::new()
            } else {
                rows.iter().map(|&r| self.component[r]).collect()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub features: usize,
    pub classes: usize,
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

/// Centers of the blob components, evenly spaced on a circle.
pub fn blob_centers(classes: usize) -> Vec<[f64; 2]> {
    (0..classes)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / classes as f64;
            [BLOB_RADIUS * a.cos(), BLOB_RADIUS * a.sin()]
        })
        .collect()
}

struct Raw {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    component: Vec<usize>,
}

fn gaussian(noise: f64) -> Normal<f64> {
    Normal::new(0.0, noise).expect("noise validated")
}

fn generate<R: Rng>(spec: &DatasetSpec, rng: &mut R) -> Result<Raw, DataError> {
    let n = spec.samples;
    let m = spec.classes;
    let jitter = gaussian(spec.noise);
    let mut raw = Raw {
        rows: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        component: Vec::new(),
    };
    match &spec.kind {
        DatasetKind::Blobs => {
            let centers = blob_centers(m);
            for i in 0..n {
                let k = i % m;
                raw.rows
                    .push(centers[k].iter().map(|c| c + jitter.sample(rng)).collect());
                raw.labels.push(k);
                raw.component.push(k);
            }
        }
        DatasetKind::Moons => {
            for i in 0..n {
                let k = i % 2;
                let t = PI * rng.random::<f64>();
                let (x, y) = if k == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                raw.rows.push(vec![x + jitter.sample(rng), y + jitter.sample(rng)]);
                raw.labels.push(k);
            }
        }
        DatasetKind::Rings => {
            for i in 0..n {
                let k = i % m;
                let a = 2.0 * PI * rng.random::<f64>();
                let r = (k + 1) as f64 + jitter.sample(rng);
                raw.rows.push(vec![r * a.cos(), r * a.sin()]);
                raw.labels.push(k);
            }
        }
        DatasetKind::Csv(path) => return read_csv(path, m),
    }
    Ok(raw)
}

fn read_csv(path: &Path, classes: usize) -> Result<Raw, DataError> {
    let parse_err = |line: usize, reason: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = (0..d)
        .map(|i| format!("feat_{i}"))
        .chain(["label".to_string()])
        .collect();
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_err(1, format!("header must be `{}`", expected.join(","))));
    }
    let mut raw = Raw {
        rows: Vec::new(),
        labels: Vec::new(),
        component: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != d + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", d + 1, record.len()),
            ));
        }
        let row = record
            .iter()
            .take(d)
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("feat_{j}: `{f}` is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let label_field = record[d].trim();
        let label: usize = label_field
            .parse()
            .map_err(|_| parse_err(line, format!("label `{label_field}` is not a nonnegative integer")))?;
        if label >= classes {
            return Err(parse_err(
                line,
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        raw.rows.push(row);
        raw.labels.push(label);
    }
    if raw.rows.len() < 3 {
        return Err(DataError::Spec(format!(
            "{} holds fewer than 3 samples",
            path.display()
        )));
    }
    Ok(raw)
}

/// Generates (or loads), corrupts and splits a dataset. Fully determined by
/// the spec.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = derived_rng(spec.seed, Stream::Data);
    let mut raw = generate(spec, &mut rng)?;
    let m = spec.classes;
    for label in raw.labels.iter_mut() {
        if rng.random::<f64>() < spec.label_noise {
            let shift = rng.random_range(1..m);
            *label = (*label + shift) % m;
        }
    }
    let n = raw.rows.len();
    let features = raw.rows[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (spec.split[0] * n as f64).round() as usize;
    let n_val = ((spec.split[1] * n as f64).round() as usize).min(n - n_train);
    let flat: Vec<f64> = raw.rows.iter().flatten().copied().collect();
    let all = Split {
        x: Tensor::matrix(n, features, flat).map_err(|e| DataError::Spec(e.to_string()))?,
        y: raw.labels,
        ids: (0..n).collect(),
        component: raw.component,
    };
    Ok(Dataset {
        spec: spec.clone(),
        features,
        classes: m,
        train: all.subset(&order[..n_train]),
        val: all.subset(&order[n_train..n_train + n_val]),
        test: all.subset(&order[n_train + n_val..]),
    })
}
