use rayon::prelude::*;
use serde::Serialize;

use super::{train, Dataset, PredictionLog, RunResult, TrainError, TrainingConfig};
use crate::metrics::{CalibrationReport, MetricsError, PredictionRecord};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("grid search space is empty")]
    EmptySpace,
    #[error("grid key `{key}` has no values")]
    EmptyValues { key: String },
    #[error("grid candidate {index}: {reason}")]
    Candidate { index: usize, reason: String },
    #[error("validation split is empty")]
    NoValidation,
    #[error("need at least 2 seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: TrainError,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// One evaluated grid candidate.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub assignment: Vec<(String, String)>,
    pub config: TrainingConfig,
    pub val_bacc: f64,
    pub val_ece: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: usize,
    pub trace: Vec<GridPoint>,
}

impl GridOutcome {
    pub fn best_config(&self) -> &TrainingConfig {
        &self.trace[self.best].config
    }
}

/// Exhaustive search over the Cartesian product of `space`, the last key
/// varying fastest. The winner has the highest validation BACC, then the
/// lowest validation ECE, then comes first.
pub fn grid_search(
    space: &[(String, Vec<String>)],
    base: &TrainingConfig,
    data: &Dataset,
) -> Result<GridOutcome, HarnessError> {
    if space.is_empty() {
        return Err(HarnessError::EmptySpace);
    }
    if let Some((key, _)) = space.iter().find(|(_, v)| v.is_empty()) {
        return Err(HarnessError::EmptyValues { key: key.clone() });
    }
    if data.val.is_empty() {
        return Err(HarnessError::NoValidation);
    }
    let total: usize = space.iter().map(|(_, v)| v.len()).product();
    let mut candidates = Vec::with_capacity(total);
    for index in 0..total {
        let mut rest = index;
        let mut picks = vec![0; space.len()];
        for (slot, (_, values)) in picks.iter_mut().zip(space).rev() {
            *slot = rest % values.len();
            rest /= values.len();
        }
        let mut config = base.clone();
        let mut assignment = Vec::with_capacity(space.len());
        for ((key, values), &p) in space.iter().zip(&picks) {
            config
                .set(key, &values[p])
                .map_err(|reason| HarnessError::Candidate { index, reason })?;
            assignment.push((key.clone(), values[p].clone()));
        }
        config
            .validate()
            .map_err(|reason| HarnessError::Candidate { index, reason })?;
        candidates.push((assignment, config));
    }
    let scored: Vec<Result<GridPoint, HarnessError>> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(index, (assignment, config))| {
            let run = train(&config, data).map_err(|e| HarnessError::Candidate {
                index,
                reason: e.to_string(),
            })?;
            let v = run.validation.ok_or(HarnessError::NoValidation)?;
            Ok(GridPoint {
                assignment,
                config,
                val_bacc: v.bacc,
                val_ece: v.ece,
            })
        })
        .collect();
    let trace = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(GridOutcome {
        best: select_best(&trace),
        trace,
    })
}

fn select_best(trace: &[GridPoint]) -> usize {
    let mut best = 0;
    for (i, p) in trace.iter().enumerate().skip(1) {
        let b = &trace[best];
        if p.val_bacc > b.val_bacc || (p.val_bacc == b.val_bacc && p.val_ece < b.val_ece) {
            best = i;
        }
    }
    best
}

/// Mean and sample standard deviation of one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-metric statistics over reports; needs at least two.
pub fn aggregate(reports: &[CalibrationReport]) -> Vec<MetricStat> {
    let k = reports.len() as f64;
    let names = reports.first().map(|r| r.scalars()).unwrap_or_default();
    names
        .iter()
        .enumerate()
        .map(|(j, (name, _))| {
            let values: Vec<f64> = reports.iter().map(|r| r.scalars()[j].1).collect();
            // Shifted by the first value so identical runs give exactly zero.
            let shift = values[0];
            let offset = values.iter().map(|v| v - shift).sum::<f64>() / k;
            let mean = shift + offset;
            let var = values.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / (k - 1.0);
            MetricStat {
                name: name.to_string(),
                mean,
                std: var.sqrt(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub stats: Vec<MetricStat>,
}

impl AggregateReport {
    pub fn stat(&self, name: &str) -> Option<&MetricStat> {
        self.stats.iter().find(|s| s.name == name)
    }
}

/// Trains once per seed (runs may execute concurrently) and aggregates the
/// test reports.
pub fn multi_seed(config: &TrainingConfig, data: &Dataset, seeds: &[u64]) -> Result<AggregateReport, HarnessError> {
    if seeds.len() < 2 {
        return Err(HarnessError::TooFewSeeds(seeds.len()));
    }
    let results: Vec<Result<RunResult, HarnessError>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            train(&c, data).map_err(|source| HarnessError::Seed { seed, source })
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<CalibrationReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(AggregateReport {
        seeds: seeds.to_vec(),
        stats: aggregate(&reports),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnsembleError {
    #[error("need at least 2 logs, got {0}")]
    TooFewLogs(usize),
    #[error("log {log} has {found} rows, expected {expected}")]
    RowCount { log: usize, expected: usize, found: usize },
    #[error("log {log}, row {row}: sample id {found} does not match {expected}")]
    Misaligned {
        log: usize,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("log {log}, row {row}: {reason}")]
    Mismatch { log: usize, row: usize, reason: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Averages member probabilities per sample. Rows are renormalized, the
/// prediction is the argmax and the uncertainty is the member mean.
pub fn ensemble(logs: &[&PredictionLog]) -> Result<PredictionLog, EnsembleError> {
    if logs.len() < 2 {
        return Err(EnsembleError::TooFewLogs(logs.len()));
    }
    let first = logs[0];
    for (j, log) in logs.iter().enumerate().skip(1) {
        if log.len() != first.len() || log.ids.len() != first.ids.len() {
            return Err(EnsembleError::RowCount {
                log: j,
                expected: first.len(),
                found: log.len(),
            });
        }
        for (row, (&a, &b)) in first.ids.iter().zip(&log.ids).enumerate() {
            if a != b {
                return Err(EnsembleError::Misaligned {
                    log: j,
                    row,
                    expected: a,
                    found: b,
                });
            }
            let (ra, rb) = (&first.records[row], &log.records[row]);
            if ra.label != rb.label {
                return Err(EnsembleError::Mismatch {
                    log: j,
                    row,
                    reason: format!("label {} differs from {}", rb.label, ra.label),
                });
            }
            if ra.classes() != rb.classes() {
                return Err(EnsembleError::Mismatch {
                    log: j,
                    row,
                    reason: format!("{} classes instead of {}", rb.classes(), ra.classes()),
                });
            }
        }
    }
    let k = logs.len() as f64;
    let records = (0..first.len())
        .map(|row| {
            let m = first.records[row].classes();
            let mut probs = vec![0.0; m];
            let mut unc = 0.0;
            for log in logs {
                let r = &log.records[row];
                for (acc, p) in probs.iter_mut().zip(&r.probs) {
                    *acc += p;
                }
                unc += r.uncertainty;
            }
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            PredictionRecord::from_probs(probs, first.records[row].label, (unc / k).clamp(0.0, 1.0))
                .map_err(|reason| EnsembleError::Mismatch { log: 0, row, reason })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictionLog {
        ids: first.ids.clone(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(rows: &[(usize, [f64; 2], usize)]) -> PredictionLog {
        PredictionLog {
            ids: rows.iter().map(|r| r.0).collect(),
            records: rows
                .iter()
                .map(|&(_, p, y)| PredictionRecord::from_probs(p.to_vec(), y, 1.0 - p[0].max(p[1])).unwrap())
                .collect(),
        }
    }

    fn point(bacc: f64, ece: f64) -> GridPoint {
        GridPoint {
            assignment: Vec::new(),
            config: TrainingConfig::default(),
            val_bacc: bacc,
            val_ece: ece,
        }
    }

    #[test]
    fn tie_break() {
        assert_eq!(select_best(&[point(0.9, 0.2), point(0.9, 0.1)]), 1);
        assert_eq!(select_best(&[point(0.9, 0.1), point(0.9, 0.1)]), 0);
        assert_eq!(select_best(&[point(0.8, 0.0), point(0.9, 0.3)]), 1);
    }

    #[test]
    fn aggregate_sample_std() {
        let mut a = CalibrationReport::compute(&log(&[(0, [0.9, 0.1], 0)]).records, 1).unwrap();
        let mut b = a.clone();
        a.ece = 0.2;
        b.ece = 0.4;
        let stats = aggregate(&[a.clone(), b]);
        let e = stats.iter().find(|s| s.name == "ece").unwrap();
        assert!((e.mean - 0.3).abs() < 1e-15);
        assert!((e.std - 0.02f64.sqrt()).abs() < 1e-15);
        let same = aggregate(&[a.clone(), a.clone(), a]);
        assert!(same.iter().all(|s| s.std == 0.0));
    }

    #[test]
    fn ensemble_arithmetic_and_alignment() {
        let a = log(&[(3, [0.9, 0.1], 0), (5, [0.2, 0.8], 1)]);
        let b = log(&[(3, [0.5, 0.5], 0), (5, [0.4, 0.6], 0)]);
        let e = ensemble(&[&a, &b]).unwrap_err();
        assert!(matches!(e, EnsembleError::Mismatch { log: 1, row: 1, .. }), "{e}");
        let b = log(&[(3, [0.5, 0.5], 0), (5, [0.4, 0.6], 1)]);
        let e = ensemble(&[&a, &b]).unwrap();
        assert!((e.records[0].probs[0] - 0.7).abs() < 1e-15);
        assert!((e.records[0].probs[1] - 0.3).abs() < 1e-15);
        let c = log(&[(3, [0.5, 0.5], 0), (6, [0.4, 0.6], 1)]);
        assert_eq!(
            ensemble(&[&a, &c]).unwrap_err(),
            EnsembleError::Misaligned {
                log: 1,
                row: 1,
                expected: 5,
                found: 6
            }
        );
        assert_eq!(ensemble(&[&a]).unwrap_err(), EnsembleError::TooFewLogs(1));
    }

    #[test]
    fn ensemble_of_copies_is_idempotent() {
        let a = log(&[
            (0, [0.9, 0.1], 0),
            (1, [0.3, 0.7], 0),
            (2, [0.6, 0.4], 1),
            (3, [0.15, 0.85], 1),
        ]);
        let e = ensemble(&[&a, &a, &a]).unwrap();
        let single = CalibrationReport::compute(&a.records, 2).unwrap();
        let ens = CalibrationReport::compute(&e.records, 2).unwrap();
        for ((_, x), (_, y)) in single.scalars().iter().zip(ens.scalars()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
