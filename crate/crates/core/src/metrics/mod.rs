//! Accuracy and calibration metrics over prediction records.

mod bins;

pub use bins::{reliability_bins, Bin, BinScheme, BinTable};

use serde::{Deserialize, Serialize};

use crate::losses::argmax;

pub const DEFAULT_BINS: usize = 10;
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no prediction records")]
    Empty,
    #[error("number of bins must be at least 1")]
    NoBins,
    #[error("adaptive binning needs at least {bins} records, got {records}")]
    TooFewRecords { records: usize, bins: usize },
    #[error("record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("records disagree on class count: {expected} vs {found}")]
    ClassCount { expected: usize, found: usize },
}

/// One test-set prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub confidence: f64,
    pub uncertainty: f64,
    pub label: usize,
}

impl PredictionRecord {
    /// Builds a record whose prediction and confidence come from `probs`.
    pub fn from_probs(probs: Vec<f64>, label: usize, uncertainty: f64) -> Result<Self, String> {
        let predicted = argmax(&probs);
        let confidence = probs.get(predicted).copied().unwrap_or(f64::NAN);
        let rec = Self {
            probs,
            predicted,
            confidence,
            uncertainty,
            label,
        };
        rec.check()?;
        Ok(rec)
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.label
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Checks the record invariants, describing the first violation.
    pub fn check(&self) -> Result<(), String> {
        let m = self.probs.len();
        if m < 2 {
            return Err(format!("need at least 2 class probabilities, got {m}"));
        }
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err("probabilities must be finite and nonnegative".into());
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(format!("probabilities sum to {total}"));
        }
        if self.label >= m {
            return Err(format!("label {} out of range for {m} classes", self.label));
        }
        if self.predicted != argmax(&self.probs) {
            return Err(format!("predicted class {} is not the argmax", self.predicted));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if !(0.0..=1.0).contains(&self.uncertainty) {
            return Err(format!("uncertainty {} outside [0, 1]", self.uncertainty));
        }
        Ok(())
    }
}

/// Validates every record and returns the shared class count.
pub fn check_records(records: &[PredictionRecord]) -> Result<usize, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    let m = first.classes();
    for (index, r) in records.iter().enumerate() {
        if r.classes() != m {
            return Err(MetricsError::ClassCount {
                expected: m,
                found: r.classes(),
            });
        }
        r.check().map_err(|reason| MetricsError::BadRecord { index, reason })?;
    }
    Ok(m)
}

/// Mean per-class recall over the classes that occur among the labels.
pub fn balanced_accuracy(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    let m = records.iter().map(|r| r.classes()).max().ok_or(MetricsError::Empty)?;
    let mut hits = vec![0usize; m];
    let mut totals = vec![0usize; m];
    for r in records {
        totals[r.label] += 1;
        if r.is_correct() {
            hits[r.label] += 1;
        }
    }
    let recalls: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

pub fn ece(records: &[PredictionRecord], n_bins: usize) -> Result<f64, MetricsError> {
    Ok(reliability_bins(records, BinScheme::Fixed, n_bins)?.expected_error())
}

pub fn mce(records: &[PredictionRecord], n_bins: usize) -> Result<f64, MetricsError> {
    Ok(reliability_bins(records, BinScheme::Fixed, n_bins)?.max_error())
}

pub fn adaptive_ece(records: &[PredictionRecord], n_bins: usize) -> Result<f64, MetricsError> {
    Ok(reliability_bins(records, BinScheme::Adaptive, n_bins)?.expected_error())
}

pub fn overconfidence_error(records: &[PredictionRecord], n_bins: usize) -> Result<f64, MetricsError> {
    Ok(reliability_bins(records, BinScheme::Fixed, n_bins)?.overconfidence())
}

/// Multiclass Brier score: mean over samples of the squared distance to the
/// one-hot label.
pub fn brier_score(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            r.probs
                .iter()
                .enumerate()
                .map(|(c, &p)| {
                    let d = p - if c == r.label { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// Every metric plus the bin tables behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bacc: f64,
    pub ece: f64,
    pub aece: f64,
    pub mce: f64,
    pub oe: f64,
    pub brier: f64,
    pub n_bins: usize,
    pub n_samples: usize,
    pub fixed_bins: BinTable,
    pub adaptive_bins: BinTable,
}

impl CalibrationReport {
    pub fn compute(records: &[PredictionRecord], n_bins: usize) -> Result<Self, MetricsError> {
        check_records(records)?;
        let fixed = reliability_bins(records, BinScheme::Fixed, n_bins)?;
        let adaptive = reliability_bins(records, BinScheme::Adaptive, n_bins)?;
        Ok(Self {
            bacc: balanced_accuracy(records)?,
            ece: fixed.expected_error(),
            aece: adaptive.expected_error(),
            mce: fixed.max_error(),
            oe: fixed.overconfidence(),
            brier: brier_score(records)?,
            n_bins,
            n_samples: records.len(),
            fixed_bins: fixed,
            adaptive_bins: adaptive,
        })
    }

    /// Names and values of the scalar metrics, in report order.
    pub fn scalars(&self) -> [(&'static str, f64); 6] {
        [
            ("bacc", self.bacc),
            ("ece", self.ece),
            ("aece", self.aece),
            ("mce", self.mce),
            ("oe", self.oe),
            ("brier", self.brier),
        ]
    }
}

#[cfg(test)]
/// Four-class record predicting class 0 with confidence `c > 0.25`.
pub(crate) fn record(conf_correct: (f64, bool)) -> PredictionRecord {
    let (c, ok) = conf_correct;
    let rest = (1.0 - c) / 3.0;
    PredictionRecord::from_probs(vec![c, rest, rest, 1.0 - c - 2.0 * rest], usize::from(!ok), 1.0 - c).unwrap()
}
