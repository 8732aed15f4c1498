//! Calibration laboratory for small classifiers.
//!
//! Three deterministic uncertainty heads (evidential, spectrally normalized,
//! distance-to-prototype), two calibration-aware training terms (AvUC and
//! MMCE), the usual calibration metrics, and a harness for grid search,
//! multi-seed aggregation and probability-averaging ensembles.

pub mod cli;
pub mod diffcore;
pub mod dum;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod special;
