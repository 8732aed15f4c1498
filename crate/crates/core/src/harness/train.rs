//! Training configuration and the mini-batch training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::augment::augment;
use super::{derived_rng, Dataset, PredictionLog, Stream};
use crate::diffcore::{OptimError, OptimState, OptimizerKind, Tape, TensorError};
use crate::dum::HeadKind;
use crate::losses::{total_loss, LossConfig, LossError};
use crate::metrics::{balanced_accuracy, ece, CalibrationReport, MetricsError, PredictionRecord, DEFAULT_BINS};
use crate::model::{ModelError, ModelSpec, Network, SpectralSpec};

/// Everything that determines a training run apart from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub head: HeadKind,
    pub hidden: Vec<usize>,
    /// Spectral normalization bound; `None` disables it.
    pub sn_coeff: Option<f64>,
    pub sn_iterations: usize,
    pub loss: LossConfig,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Momentum S_m for SGD.
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: bool,
    pub bins: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            head: HeadKind::Softmax,
            hidden: vec![32, 32],
            sn_coeff: None,
            sn_iterations: 1,
            loss: LossConfig::default(),
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            momentum: 0.0,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            augment: false,
            bins: DEFAULT_BINS,
        }
    }
}

/// Dotted keys accepted by [`TrainingConfig::set`], in canonical order.
pub const TRAINING_KEYS: &[&str] = &[
    "model.head",
    "model.hidden",
    "model.sn_coeff",
    "model.sn_iterations",
    "loss.lambda_enn",
    "loss.lambda_a",
    "loss.lambda_m",
    "loss.lambda_e",
    "loss.lambda_d",
    "loss.lambda_u",
    "loss.avuc_conf_threshold",
    "loss.avuc_unc_threshold",
    "loss.avuc_tau",
    "loss.mmce_width",
    "optimizer.kind",
    "optimizer.lr",
    "optimizer.momentum",
    "run.epochs",
    "run.batch_size",
    "run.seed",
    "run.augment",
    "run.bins",
];

pub(crate) fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse `{value}` as a number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got `{value}`")),
    }
}

fn optimizer_name(kind: OptimizerKind) -> &'static str {
    match kind {
        OptimizerKind::Adam => "adam",
        OptimizerKind::SgdMomentum => "sgd-momentum",
    }
}

impl TrainingConfig {
    /// Sets one dotted key such as `loss.lambda_m`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        let w = &mut self.loss.weights;
        match key {
            "model.head" => self.head = value.parse().map_err(|e| format!("{key}: {e}"))?,
            "model.hidden" => {
                self.hidden = if value.is_empty() || value == "none" {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse_num(key, v.trim()))
                        .collect::<Result<_, _>>()?
                }
            }
            "model.sn_coeff" => {
                self.sn_coeff = if value == "none" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "model.sn_iterations" => self.sn_iterations = parse_num(key, value)?,
            "loss.lambda_enn" => w.enn = parse_num(key, value)?,
            "loss.lambda_a" => w.avuc = parse_num(key, value)?,
            "loss.lambda_m" => w.mmce = parse_num(key, value)?,
            "loss.lambda_e" => w.entropy = parse_num(key, value)?,
            "loss.lambda_d" => w.dissimilarity = parse_num(key, value)?,
            "loss.lambda_u" => w.uncertainty = parse_num(key, value)?,
            "loss.avuc_conf_threshold" => self.loss.avuc.conf_threshold = parse_num(key, value)?,
            "loss.avuc_unc_threshold" => self.loss.avuc.unc_threshold = parse_num(key, value)?,
            "loss.avuc_tau" => self.loss.avuc.tau = parse_num(key, value)?,
            "loss.mmce_width" => self.loss.kernel_width = parse_num(key, value)?,
            "optimizer.kind" => {
                self.optimizer = match value {
                    "adam" => OptimizerKind::Adam,
                    "sgd-momentum" => OptimizerKind::SgdMomentum,
                    _ => return Err(format!("{key}: expected adam or sgd-momentum, got `{value}`")),
                }
            }
            "optimizer.lr" => self.lr = parse_num(key, value)?,
            "optimizer.momentum" => self.momentum = parse_num(key, value)?,
            "run.epochs" => self.epochs = parse_num(key, value)?,
            "run.batch_size" => self.batch_size = parse_num(key, value)?,
            "run.seed" => self.seed = parse_num(key, value)?,
            "run.augment" => self.augment = parse_bool(key, value)?,
            "run.bins" => self.bins = parse_num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Current value of a dotted key, formatted so that `set` reads it back
    /// unchanged.
    pub fn get(&self, key: &str) -> Option<String> {
        let w = &self.loss.weights;
        Some(match key {
            "model.head" => self.head.to_string(),
            "model.hidden" => {
                if self.hidden.is_empty() {
                    "none".into()
                } else {
                    self.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
                }
            }
            "model.sn_coeff" => self.sn_coeff.map_or("none".into(), |c| c.to_string()),
            "model.sn_iterations" => self.sn_iterations.to_string(),
            "loss.lambda_enn" => w.enn.to_string(),
            "loss.lambda_a" => w.avuc.to_string(),
            "loss.lambda_m" => w.mmce.to_string(),
            "loss.lambda_e" => w.entropy.to_string(),
            "loss.lambda_d" => w.dissimilarity.to_string(),
            "loss.lambda_u" => w.uncertainty.to_string(),
            "loss.avuc_conf_threshold" => self.loss.avuc.conf_threshold.to_string(),
            "loss.avuc_unc_threshold" => self.loss.avuc.unc_threshold.to_string(),
            "loss.avuc_tau" => self.loss.avuc.tau.to_string(),
            "loss.mmce_width" => self.loss.kernel_width.to_string(),
            "optimizer.kind" => optimizer_name(self.optimizer).into(),
            "optimizer.lr" => self.lr.to_string(),
            "optimizer.momentum" => self.momentum.to_string(),
            "run.epochs" => self.epochs.to_string(),
            "run.batch_size" => self.batch_size.to_string(),
            "run.seed" => self.seed.to_string(),
            "run.augment" => self.augment.to_string(),
            "run.bins" => self.bins.to_string(),
            _ => return None,
        })
    }

    /// SHA-256 over the canonical `key = value` listing.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for key in TRAINING_KEYS {
            h.update(format!("{key} = {}\n", self.get(key).unwrap_or_default()));
        }
        hex::encode(h.finalize())
    }

    pub fn model_spec(&self, input_dim: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            input_dim,
            hidden: self.hidden.clone(),
            classes,
            head: self.head,
            spectral: self.sn_coeff.map(|coeff| SpectralSpec {
                coeff,
                iterations: self.sn_iterations,
            }),
        }
    }

    fn optimizer_state(&self) -> OptimState {
        match self.optimizer {
            OptimizerKind::Adam => OptimState::adam(self.lr),
            OptimizerKind::SgdMomentum => OptimState::sgd_momentum(self.lr, self.momentum),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 {
            return Err("run.epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("run.batch_size must be at least 1".into());
        }
        if self.bins == 0 {
            return Err("run.bins must be at least 1".into());
        }
        if self.optimizer == OptimizerKind::Adam && self.momentum != 0.0 {
            return Err("optimizer.momentum applies only to kind = sgd-momentum".into());
        }
        self.optimizer_state().validate().map_err(|e| e.to_string())?;
        self.loss.validate(self.head).map_err(|e| e.to_string())?;
        if self.loss.avuc.tau <= 0.0 {
            return Err(format!("loss.avuc_tau must be positive, got {}", self.loss.avuc.tau));
        }
        self.model_spec(1, 2).validate()
    }
}

/// Validation-split scores used by grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationScores {
    pub bacc: f64,
    pub ece: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: PredictionLog,
    pub report: CalibrationReport,
    pub validation: Option<ValidationScores>,
    pub model: Network,
    pub params_digest: String,
    pub seed: u64,
    pub steps: u64,
    pub wall_time_secs: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Loss {
        epoch: usize,
        batch: usize,
        #[source]
        source: LossError,
    },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Optim {
        epoch: usize,
        batch: usize,
        #[source]
        source: OptimError,
    },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("evaluation failed: {0}")]
    Metrics(#[from] MetricsError),
}

fn step_error(epoch: usize, batch: usize, e: LossError) -> TrainError {
    match e {
        LossError::Tensor(TensorError::NonFinite { .. }) => TrainError::NonFinite {
            epoch,
            batch,
            detail: e.to_string(),
        },
        other => TrainError::Loss {
            epoch,
            batch,
            source: other,
        },
    }
}

/// Predictions of `model` on a split.
pub fn predict_split(model: &Network, split: &super::Split) -> Result<PredictionLog, TrainError> {
    let preds = model.predict(&split.x)?;
    let records = preds
        .into_iter()
        .zip(&split.y)
        .enumerate()
        .map(|(index, (p, &label))| {
            PredictionRecord::from_probs(p.probs, label, p.uncertainty.clamp(0.0, 1.0))
                .map_err(|reason| MetricsError::BadRecord { index, reason })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictionLog {
        ids: split.ids.clone(),
        records,
    })
}

fn params_digest(model: &Network) -> String {
    let mut h = Sha256::new();
    for p in model.parameters() {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Trains a fresh model and evaluates it on the test split.
pub fn train(config: &TrainingConfig, data: &Dataset) -> Result<RunResult, TrainError> {
    let started = Instant::now();
    config.validate().map_err(TrainError::Config)?;
    if data.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if data.test.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }
    let mut init_rng = derived_rng(config.seed, Stream::Init);
    let mut shuffle_rng = derived_rng(config.seed, Stream::Shuffle);
    let mut augment_rng = derived_rng(config.seed, Stream::Augment);
    let mut model = Network::init(config.model_spec(data.features, data.classes), &mut init_rng)?;
    let mut opt = config.optimizer_state();

    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let batch_no = b + 1;
            let mut batch = data.train.subset(rows);
            if config.augment {
                batch = augment(&batch, &data.spec.kind, data.classes, data.spec.noise, &mut augment_rng);
            }
            let mut tape = Tape::new();
            let x = tape.constant(batch.x);
            let fwd = model.forward(&mut tape, x).map_err(|e| match e {
                ModelError::Tensor(t) => step_error(epoch, batch_no, t.into()),
                other => other.into(),
            })?;
            let loss =
                total_loss(&mut tape, &config.loss, &fwd.head, &batch.y).map_err(|e| step_error(epoch, batch_no, e))?;
            let grads = tape
                .backprop(loss.total)
                .map_err(|e| step_error(epoch, batch_no, e.into()))?;
            let grads: Vec<_> = fwd
                .params
                .iter()
                .map(|&p| grads.wrt(p).cloned().expect("every parameter leaf has a gradient"))
                .collect();
            opt.step(&mut model.parameters_mut(), &grads)
                .map_err(|source| TrainError::Optim {
                    epoch,
                    batch: batch_no,
                    source,
                })?;
            model.refresh_spectral()?;
        }
    }

    let validation = if data.val.is_empty() {
        None
    } else {
        let val = predict_split(&model, &data.val)?;
        Some(ValidationScores {
            bacc: balanced_accuracy(&val.records)?,
            ece: ece(&val.records, config.bins)?,
        })
    };
    let log = predict_split(&model, &data.test)?;
    let report = CalibrationReport::compute(&log.records, config.bins)?;
    Ok(RunResult {
        log,
        report,
        validation,
        params_digest: params_digest(&model),
        model,
        seed: config.seed,
        steps: opt.steps_taken(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{make_dataset, DatasetSpec};

    fn data(noise: f64, samples: usize) -> Dataset {
        make_dataset(&DatasetSpec {
            samples,
            noise,
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    fn quick() -> TrainingConfig {
        TrainingConfig {
            hidden: vec![8],
            epochs: 10,
            lr: 1e-2,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let run = train(&quick(), &data(0.3, 400)).unwrap();
        assert!(run.report.bacc >= 0.95, "{}", run.report.bacc);
        assert_eq!(run.log.len(), 40);
    }

    #[test]
    fn step_count_and_epoch_guard() {
        let d = data(0.5, 205);
        let mut c = quick();
        c.epochs = 1;
        c.batch_size = 16;
        let run = train(&c, &d).unwrap();
        assert_eq!(run.steps, d.train.len().div_ceil(16) as u64);
        c.epochs = 0;
        assert!(matches!(train(&c, &d), Err(TrainError::Config(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let d = data(1.0, 200);
        let mut c = quick();
        c.augment = true;
        let a = train(&c, &d).unwrap();
        let b = train(&c, &d).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params_digest, b.params_digest);
        c.seed = 1;
        assert_ne!(train(&c, &d).unwrap().params_digest, a.params_digest);
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let mut c = quick();
        c.optimizer = OptimizerKind::SgdMomentum;
        c.lr = 1e200;
        let err = train(&c, &data(1.0, 200)).unwrap_err();
        match &err {
            TrainError::NonFinite { epoch, batch, .. } => assert!(*epoch >= 1 && *batch >= 1),
            TrainError::Optim { .. } => {}
            other => panic!("unexpected error {other}"),
        }
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn key_roundtrip() {
        let mut c = TrainingConfig::default();
        c.set("loss.lambda_a", "0.6").unwrap();
        c.set("model.sn_coeff", "0.9").unwrap();
        c.set("model.hidden", "16, 4").unwrap();
        let mut copy = TrainingConfig::default();
        for key in TRAINING_KEYS {
            copy.set(key, &c.get(key).unwrap()).unwrap();
        }
        assert_eq!(copy, c);
        assert_eq!(copy.digest(), c.digest());
        assert!(c.set("loss.lambda_q", "1").is_err());
        assert!(c.set("optimizer.lr", "fast").unwrap_err().contains("optimizer.lr"));
    }

    #[test]
    fn head_consistency_is_checked() {
        let mut c = quick();
        c.loss.weights.entropy = 0.5;
        let err = c.validate().unwrap_err();
        assert!(err.contains("lambda_e"), "{err}");
        c.head = HeadKind::Prototype;
        assert!(c.validate().is_ok());
    }
}
