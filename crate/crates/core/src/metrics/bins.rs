use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{MetricsError, PredictionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinScheme {
    /// Equal-width intervals over [0, 1].
    Fixed,
    /// Equal-mass bins over the sorted confidences.
    Adaptive,
}

impl std::str::FromStr for BinScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(BinScheme::Fixed),
            "adaptive" => Ok(BinScheme::Adaptive),
            other => Err(format!("unknown bin scheme `{other}` (expected fixed or adaptive)")),
        }
    }
}

/// Statistics for one bin. For fixed bins `lo`/`hi` are the interval
/// bounds; for adaptive bins they are the smallest and largest confidence
/// inside the bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_conf: f64,
    pub accuracy: f64,
}

impl Bin {
    pub fn gap(&self) -> f64 {
        (self.accuracy - self.mean_conf).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    pub scheme: BinScheme,
    pub n_samples: usize,
    /// Every bin in order, including empty ones (count 0, NaN-free zeros).
    pub bins: Vec<Bin>,
}

impl BinTable {
    pub fn nonempty(&self) -> impl Iterator<Item = &Bin> {
        self.bins.iter().filter(|b| b.count > 0)
    }

    fn weight(&self, b: &Bin) -> f64 {
        b.count as f64 / self.n_samples as f64
    }

    /// Count-weighted mean gap between accuracy and confidence.
    pub fn expected_error(&self) -> f64 {
        self.nonempty().map(|b| self.weight(b) * b.gap()).sum()
    }

    pub fn max_error(&self) -> f64 {
        self.nonempty().map(Bin::gap).fold(0.0, f64::max)
    }

    pub fn overconfidence(&self) -> f64 {
        self.nonempty()
            .map(|b| self.weight(b) * b.mean_conf * (b.mean_conf - b.accuracy).max(0.0))
            .sum()
    }
}

/// Index of the fixed-width bin `[k/n, (k+1)/n)` holding `conf`; the last bin
/// is closed on the right.
fn fixed_index(conf: f64, n: usize) -> usize {
    let mut k = ((conf * n as f64).floor() as usize).min(n - 1);
    if k > 0 && conf < k as f64 / n as f64 {
        k -= 1;
    } else if k + 1 < n && conf >= (k + 1) as f64 / n as f64 {
        k += 1;
    }
    k
}

fn summarize<'a>(lo: f64, hi: f64, members: impl Iterator<Item = &'a PredictionRecord>) -> Bin {
    let (mut count, mut conf, mut hits) = (0usize, 0.0, 0usize);
    for r in members {
        count += 1;
        conf += r.confidence;
        hits += r.is_correct() as usize;
    }
    let (mean_conf, accuracy) = if count == 0 {
        (0.0, 0.0)
    } else {
        (conf / count as f64, hits as f64 / count as f64)
    };
    Bin {
        lo,
        hi,
        count,
        mean_conf,
        accuracy,
    }
}

/// The bin statistics every binned metric is computed from.
pub fn reliability_bins(
    records: &[PredictionRecord],
    scheme: BinScheme,
    n_bins: usize,
) -> Result<BinTable, MetricsError> {
    if n_bins == 0 {
        return Err(MetricsError::NoBins);
    }
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let bins = match scheme {
        BinScheme::Fixed => {
            let mut members: Vec<Vec<&PredictionRecord>> = vec![Vec::new(); n_bins];
            for r in records {
                members[fixed_index(r.confidence, n_bins)].push(r);
            }
            members
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    summarize(
                        k as f64 / n_bins as f64,
                        (k + 1) as f64 / n_bins as f64,
                        m.iter().copied(),
                    )
                })
                .collect()
        }
        BinScheme::Adaptive => {
            if records.len() < n_bins {
                return Err(MetricsError::TooFewRecords {
                    records: records.len(),
                    bins: n_bins,
                });
            }
            let mut order: Vec<&PredictionRecord> = records.iter().collect();
            order.sort_by(|a, b| a.confidence.partial_cmp(&b.confidence).unwrap_or(Ordering::Equal));
            let base = records.len() / n_bins;
            let extra = records.len() % n_bins;
            let mut start = 0;
            (0..n_bins)
                .map(|k| {
                    let size = base + usize::from(k < extra);
                    let chunk = &order[start..start + size];
                    start += size;
                    summarize(chunk[0].confidence, chunk[size - 1].confidence, chunk.iter().copied())
                })
                .collect()
        }
    };
    Ok(BinTable {
        scheme,
        n_samples: records.len(),
        bins,
    })
}
