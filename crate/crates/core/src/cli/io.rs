//! Prediction logs, JSON reports and reliability diagrams on disk.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::PredictionLog;
use crate::metrics::{BinTable, CalibrationReport, PredictionRecord};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, row {row}: {reason}")]
    Row { path: PathBuf, row: usize, reason: String },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes every file to a temporary sibling first and renames them into
/// place only once all contents are on disk.
pub fn write_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<(), IoError> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).map_err(fs_err(dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fs_err(path))?;
        tmp.write_all(bytes).map_err(fs_err(path))?;
        tmp.as_file().sync_all().map_err(fs_err(path))?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| fs_err(path)(e.error))?;
    }
    Ok(())
}

/// CSV text of a prediction log. Floats use 17 significant digits so they
/// read back bit-for-bit.
pub fn log_to_csv(log: &PredictionLog) -> String {
    let m = log.records.first().map_or(0, |r| r.classes());
    let mut out = String::from("sample_id,true_label,pred_label,confidence,uncertainty");
    for c in 0..m {
        let _ = write!(out, ",p_{c}");
    }
    out.push('\n');
    for (id, r) in log.ids.iter().zip(&log.records) {
        let _ = write!(
            out,
            "{id},{},{},{:.16e},{:.16e}",
            r.label, r.predicted, r.confidence, r.uncertainty
        );
        for p in &r.probs {
            let _ = write!(out, ",{p:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str, path: &Path) -> Result<PredictionLog, IoError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();
    let fixed = ["sample_id", "true_label", "pred_label", "confidence", "uncertainty"];
    let m = header.len().saturating_sub(fixed.len());
    let header_ok = m >= 2
        && header.iter().take(5).eq(fixed.iter().copied())
        && header.iter().skip(5).enumerate().all(|(c, h)| h == format!("p_{c}"));
    if !header_ok {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            reason: "header must be `sample_id,true_label,pred_label,confidence,uncertainty,p_0,...` with at least 2 classes"
                .into(),
        });
    }
    let mut log = PredictionLog {
        ids: Vec::new(),
        records: Vec::new(),
    };
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let bad = |reason: String| IoError::Row {
            path: path.to_path_buf(),
            row: row_no,
            reason,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != header.len() {
            return Err(bad(format!("expected {} fields, found {}", header.len(), row.len())));
        }
        let int = |j: usize| -> Result<usize, IoError> {
            row[j]
                .trim()
                .parse()
                .map_err(|_| bad(format!("{}: `{}` is not a nonnegative integer", fixed[j], &row[j])))
        };
        let float = |j: usize| -> Result<f64, IoError> {
            row[j]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("{}: `{}` is not a finite number", &header[j], &row[j])))
        };
        let record = PredictionRecord {
            label: int(1)?,
            predicted: int(2)?,
            confidence: float(3)?,
            uncertainty: float(4)?,
            probs: (5..row.len()).map(float).collect::<Result<_, _>>()?,
        };
        record.check().map_err(bad)?;
        log.ids.push(int(0)?);
        log.records.push(record);
    }
    if log.records.is_empty() {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            reason: "log has no rows".into(),
        });
    }
    Ok(log)
}

pub fn read_log(path: &Path) -> Result<PredictionLog, IoError> {
    let text = std::fs::read_to_string(path).map_err(fs_err(path))?;
    parse_log(&text, path)
}

/// Provenance attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<usize>,
}

/// On-disk report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub bacc: f64,
    pub ece: f64,
    pub aece: f64,
    pub mce: f64,
    pub oe: f64,
    pub brier: f64,
    pub n_bins: usize,
    pub n_samples: usize,
    pub bins: ReportBins,
    pub meta: RunMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBins {
    pub fixed: BinTable,
    pub adaptive: BinTable,
}

impl ReportFile {
    pub fn new(report: &CalibrationReport, meta: RunMeta) -> Self {
        Self {
            bacc: report.bacc,
            ece: report.ece,
            aece: report.aece,
            mce: report.mce,
            oe: report.oe,
            brier: report.brier,
            n_bins: report.n_bins,
            n_samples: report.n_samples,
            bins: ReportBins {
                fixed: report.fixed_bins.clone(),
                adaptive: report.adaptive_bins.clone(),
            },
            meta,
        }
    }

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

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn read_report(path: &Path) -> Result<ReportFile, IoError> {
    let text = std::fs::read_to_string(path).map_err(fs_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reliability CSV: one row per nonempty bin.
pub fn diagram_csv(table: &BinTable) -> String {
    let mut out = String::from("bin_lo,bin_hi,count,mean_conf,accuracy\n");
    for b in table.nonempty() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{},{:.16e},{:.16e}",
            b.lo, b.hi, b.count, b.mean_conf, b.accuracy
        );
    }
    out
}

/// Parses [`diagram_csv`] output back into `(lo, hi, count, mean_conf,
/// accuracy)` rows.
pub fn parse_diagram_csv(text: &str) -> Result<Vec<(f64, f64, usize, f64, f64)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("bin_lo,bin_hi,count,mean_conf,accuracy") {
        return Err("bad reliability header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |j: usize| f.get(j).and_then(|v| v.parse::<f64>().ok());
            match (num(0), num(1), f.get(2).and_then(|v| v.parse().ok()), num(3), num(4)) {
                (Some(a), Some(b), Some(c), Some(d), Some(e)) => Ok((a, b, c, d, e)),
                _ => Err(format!("row {}: malformed", i + 1)),
            }
        })
        .collect()
}

/// Reliability diagram as a standalone SVG: identity diagonal plus one
/// accuracy bar per nonempty bin, with a marker at the bin's mean
/// confidence.
pub fn diagram_svg(table: &BinTable) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let plot = SIZE - 2.0 * PAD;
    let x = |v: f64| PAD + v * plot;
    let y = |v: f64| SIZE - PAD - v * plot;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
    );
    for b in table.nonempty() {
        let (lo, hi) = if b.hi - b.lo < 0.01 {
            let mid = (b.lo + b.hi) / 2.0;
            ((mid - 0.005).max(0.0), (mid + 0.005).min(1.0))
        } else {
            (b.lo, b.hi)
        };
        let _ = writeln!(
            s,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="steelblue" fill-opacity="0.7" stroke="navy"><title>n={} conf={:.4} acc={:.4}</title></rect>"#,
            x(lo),
            y(b.accuracy),
            x(hi) - x(lo),
            b.accuracy * plot,
            b.count,
            b.mean_conf,
            b.accuracy
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="crimson"/>"#,
            x(b.mean_conf),
            y(b.accuracy)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">confidence</text>"#,
        SIZE / 2.0,
        SIZE - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">accuracy</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    s.push_str("</svg>\n");
    s
}
