//! Experiment configuration files: `key = value` lines in `[section]`
//! groups, `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::harness::{parse_num, DatasetKind, DatasetSpec, TrainingConfig, TRAINING_KEYS};

const SECTIONS: &[&str] = &["model", "loss", "optimizer", "data", "run", "grid"];
const REQUIRED: &[&str] = &["model.head", "optimizer.lr", "run.epochs", "data.kind"];
pub const DATA_KEYS: &[&str] = &[
    "data.kind",
    "data.path",
    "data.samples",
    "data.classes",
    "data.noise",
    "data.label_noise",
    "data.split",
    "data.seed",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn whole(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub training: TrainingConfig,
    pub data: DatasetSpec,
    /// Grid axes in file order.
    pub grid: Vec<(String, Vec<String>)>,
}

fn set_data(spec: &mut DatasetSpec, key: &str, value: &str, base_dir: &Path) -> Result<(), String> {
    match key {
        "data.kind" => {
            spec.kind = match value {
                "blobs" => DatasetKind::Blobs,
                "moons" => DatasetKind::Moons,
                "rings" => DatasetKind::Rings,
                "csv" => match &spec.kind {
                    DatasetKind::Csv(p) => DatasetKind::Csv(p.clone()),
                    _ => DatasetKind::Csv(PathBuf::new()),
                },
                other => {
                    return Err(format!(
                        "{key}: unknown kind `{other}` (expected blobs, moons, rings or csv)"
                    ))
                }
            }
        }
        "data.path" => spec.kind = DatasetKind::Csv(base_dir.join(value)),
        "data.samples" => spec.samples = parse_num(key, value)?,
        "data.classes" => spec.classes = parse_num(key, value)?,
        "data.noise" => spec.noise = parse_num(key, value)?,
        "data.label_noise" => spec.label_noise = parse_num(key, value)?,
        "data.split" => {
            let parts: Vec<f64> = value
                .split(',')
                .map(|v| parse_num(key, v.trim()))
                .collect::<Result<_, _>>()?;
            spec.split = parts
                .try_into()
                .map_err(|_| format!("{key}: expected three fractions train, val, test"))?;
        }
        "data.seed" => spec.seed = parse_num(key, value)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

fn split_values(value: &str) -> Vec<String> {
    let sep = if value.contains('|') { '|' } else { ',' };
    value
        .split(sep)
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect()
}

/// Parses configuration text. Relative CSV paths resolve against
/// `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig {
        training: TrainingConfig::default(),
        data: DatasetSpec::default(),
        grid: Vec::new(),
    };
    let mut section: Option<&str> = None;
    let mut seen: Vec<String> = Vec::new();
    let mut csv_path = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                .trim();
            section = Some(
                SECTIONS
                    .iter()
                    .find(|s| **s == name)
                    .ok_or_else(|| ConfigError::at(line_no, format!("unknown section [{name}]")))?,
            );
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line_no, format!("expected `key = value`, found `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| ConfigError::at(line_no, format!("key `{key}` appears before any section")))?;
        let full = if sec == "grid" {
            key.to_string()
        } else {
            format!("{sec}.{key}")
        };
        let dup_key = if sec == "grid" {
            format!("grid.{key}")
        } else {
            full.clone()
        };
        if seen.contains(&dup_key) {
            return Err(ConfigError::at(line_no, format!("duplicate key `{full}`")));
        }
        seen.push(dup_key);
        match sec {
            "grid" => {
                if !TRAINING_KEYS.contains(&key) {
                    return Err(ConfigError::at(
                        line_no,
                        format!("grid key `{key}` is not a model, loss, optimizer or run key"),
                    ));
                }
                let values = split_values(value);
                if values.is_empty() {
                    return Err(ConfigError::at(line_no, format!("grid key `{key}` has no values")));
                }
                let mut probe = cfg.training.clone();
                for v in &values {
                    probe.set(key, v).map_err(|e| ConfigError::at(line_no, e))?;
                }
                cfg.grid.push((key.to_string(), values));
            }
            "data" => {
                csv_path |= full == "data.path";
                set_data(&mut cfg.data, &full, value, base_dir).map_err(|e| ConfigError::at(line_no, e))?
            }
            _ => cfg
                .training
                .set(&full, value)
                .map_err(|e| ConfigError::at(line_no, e))?,
        }
    }
    for key in REQUIRED {
        if !seen.iter().any(|s| s == key) {
            return Err(ConfigError::whole(format!("missing required key `{key}`")));
        }
    }
    if let DatasetKind::Csv(p) = &cfg.data.kind {
        if !csv_path || p.as_os_str().is_empty() {
            return Err(ConfigError::whole("missing required key `data.path` for kind = csv"));
        }
    } else if csv_path {
        return Err(ConfigError::whole("data.path requires kind = csv"));
    }
    cfg.training.validate().map_err(ConfigError::whole)?;
    cfg.data.validate().map_err(|e| ConfigError::whole(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::whole(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new("."))).map_err(|e| ConfigError {
        line: e.line,
        message: format!("{}: {}", path.display(), e.message),
    })
}

/// Renders a configuration that [`parse_config`] reads back to an equal
/// value (grid section omitted).
pub fn render_config(training: &TrainingConfig, data: &DatasetSpec) -> String {
    let mut out = String::new();
    let mut current = "";
    for key in TRAINING_KEYS {
        let (sec, name) = key.split_once('.').expect("dotted key");
        if sec == "run" && current == "optimizer" {
            render_data(&mut out, data);
        }
        if sec != current {
            let _ = writeln!(out, "{}[{sec}]", if out.is_empty() { "" } else { "\n" });
            current = sec;
        }
        let value = training.get(key).expect("known key");
        if name == "sn_coeff" && value == "none" {
            continue;
        }
        let _ = writeln!(out, "{name} = {value}");
    }
    out
}

fn render_data(out: &mut String, d: &DatasetSpec) {
    let _ = writeln!(out, "\n[data]");
    let _ = writeln!(out, "kind = {}", d.kind.name());
    if let DatasetKind::Csv(p) = &d.kind {
        let _ = writeln!(out, "path = {}", p.display());
    }
    let _ = writeln!(out, "samples = {}", d.samples);
    let _ = writeln!(out, "classes = {}", d.classes);
    let _ = writeln!(out, "noise = {}", d.noise);
    let _ = writeln!(out, "label_noise = {}", d.label_noise);
    let _ = writeln!(out, "split = {}, {}, {}", d.split[0], d.split[1], d.split[2]);
    let _ = writeln!(out, "seed = {}", d.seed);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dum::HeadKind;

    const BASE: &str = "\
[model]
head = softmax
hidden = 16, 16

[loss]
lambda_a = 0.6

[optimizer]
lr = 1e-4

[data]
kind = blobs
samples = 300

[run]
epochs = 100
";

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        parse_config(text, Path::new("."))
    }

    #[test]
    fn parses_and_defaults() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.training.head, HeadKind::Softmax);
        assert_eq!(c.training.hidden, vec![16, 16]);
        assert_eq!(c.training.loss.weights.avuc, 0.6);
        assert_eq!(c.training.loss.weights.mmce, 0.0);
        assert_eq!(c.training.epochs, 100);
        assert_eq!(c.data.samples, 300);
    }

    #[test]
    fn render_roundtrip() {
        let mut c = parse(BASE).unwrap();
        c.training.sn_coeff = Some(0.9);
        c.data.label_noise = 0.15;
        let again = parse(&render_config(&c.training, &c.data)).unwrap();
        assert_eq!(again.training, c.training);
        assert_eq!(again.data, c.data);
    }

    #[test]
    fn errors_name_line_or_key() {
        let unknown = BASE.replace("lambda_a = 0.6", "lambda_x = 0.6");
        let e = parse(&unknown).unwrap_err();
        assert_eq!(e.line, Some(6));
        assert!(e.to_string().contains("loss.lambda_x"), "{e}");

        let missing = BASE.replace("epochs = 100", "");
        assert!(parse(&missing).unwrap_err().to_string().contains("run.epochs"));

        let inconsistent = BASE.replace("lambda_a = 0.6", "lambda_e = 0.5");
        let e = parse(&inconsistent).unwrap_err();
        assert!(
            e.to_string().contains("lambda_e") && e.to_string().contains("dm"),
            "{e}"
        );

        let dup = format!("{BASE}epochs = 3\n");
        assert!(parse(&dup).unwrap_err().to_string().contains("duplicate"));
        assert_eq!(parse("x = 1").unwrap_err().line, Some(1));
        assert!(parse("[bogus]").unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn grid_axes() {
        let text = format!("{BASE}\n[grid]\nloss.lambda_m = 0, 10, 25, 50\nmodel.hidden = 8 | 8, 8\n");
        let c = parse(&text).unwrap();
        assert_eq!(c.grid[0].1, vec!["0", "10", "25", "50"]);
        assert_eq!(c.grid[1].1, vec!["8", "8, 8"]);
        let bad = format!("{BASE}\n[grid]\ndata.noise = 1, 2\n");
        assert!(parse(&bad).is_err());
        let bad_value = format!("{BASE}\n[grid]\noptimizer.lr = 1e-3, fast\n");
        assert!(parse(&bad_value).unwrap_err().to_string().contains("fast"));
    }

    #[test]
    fn csv_needs_path() {
        let text = BASE.replace("kind = blobs", "kind = csv");
        assert!(parse(&text).unwrap_err().to_string().contains("data.path"));
        let text = BASE.replace("kind = blobs", "kind = csv\npath = points.csv");
        let c = parse_config(&text, Path::new("/tmp/exp")).unwrap();
        assert_eq!(c.data.kind, DatasetKind::Csv(PathBuf::from("/tmp/exp/points.csv")));
    }
}
