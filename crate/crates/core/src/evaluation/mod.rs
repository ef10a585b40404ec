//! NMAE and the three validation protocols.
//!
//! - [`run_all_but_one`] hides each rating in turn and predicts it.
//! - [`run_given_random_x`] traces error against the number of ratings a
//!   user has given, i = 1..99.
//! - [`run_production`] replays half the data as live insertions from
//!   concurrent clients, predicting each rating just before storing it.

mod all_but_one;
mod given_random_x;
mod production;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predict::{AlgorithmSpec, Prediction};
use crate::ratings::RatingScale;

pub use all_but_one::{all_but_one_predictions, run_all_but_one, AllButOneOptions, Route};
pub use given_random_x::{given_random_x_curve, run_given_random_x, GivenRandomXConfig};
pub use production::{
    block_curve, replay_production, run_production, run_production_remote, split_for_production, LogEntry,
    ProductionConfig, ProductionRun, RemoteTarget, ReplayCheck,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("metric undefined: no prediction was counted")]
    UndefinedMetric,
    #[error("matrix has no ratings")]
    EmptyMatrix,
    #[error("no user has more than {0} ratings")]
    NoQualifyingUser(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Running sums for NMAE. Skipped predictions only bump `skipped`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NmaeAccumulator {
    pub abs_error_sum: f64,
    pub counted: u64,
    pub skipped: u64,
}

impl NmaeAccumulator {
    #[inline]
    pub fn add(&mut self, p: &Prediction, truth: i32) {
        match p {
            Prediction::Value(v) => {
                self.abs_error_sum += (v - truth as f64).abs();
                self.counted += 1;
            }
            Prediction::Skipped(_) => self.skipped += 1,
        }
    }

    pub fn merge(&mut self, other: &NmaeAccumulator) {
        self.abs_error_sum += other.abs_error_sum;
        self.counted += other.counted;
        self.skipped += other.skipped;
    }

    pub fn attempted(&self) -> u64 {
        self.counted + self.skipped
    }
}

/// Mean absolute error over counted predictions, divided by the scale width,
/// in percent.
pub fn nmae(acc: &NmaeAccumulator, scale: RatingScale) -> Result<f64, EvalError> {
    if acc.counted == 0 {
        return Err(EvalError::UndefinedMetric);
    }
    Ok(acc.abs_error_sum / (acc.counted as f64 * scale.width()) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    AllButOne,
    GivenRandomX,
    Production,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::AllButOne => "all_but_one",
            Protocol::GivenRandomX => "given_random_x",
            Protocol::Production => "production",
        })
    }
}

/// One curve point. `nmae` is `None` where nothing was counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: u32,
    pub nmae: Option<f64>,
    pub counted: u64,
    pub skipped: u64,
}

impl CurvePoint {
    fn from_acc(x: u32, acc: &NmaeAccumulator, scale: RatingScale) -> Self {
        CurvePoint {
            x,
            nmae: nmae(acc, scale).ok(),
            counted: acc.counted,
            skipped: acc.skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub protocol: Protocol,
    pub algorithm: AlgorithmSpec,
    /// NMAE over every counted prediction of the run.
    pub overall_nmae: Option<f64>,
    pub counted: u64,
    pub skipped: u64,
    pub curve: Vec<CurvePoint>,
    /// Configuration echo, written into the report header.
    pub config: Vec<(String, String)>,
    /// Protocol-specific figures such as leak counts.
    pub extra: Vec<(String, String)>,
    /// False when the run was cut short.
    pub valid: bool,
}

impl ValidationReport {
    pub(crate) fn new(protocol: Protocol, algorithm: AlgorithmSpec, total: &NmaeAccumulator, scale: RatingScale) -> Self {
        ValidationReport {
            protocol,
            algorithm,
            overall_nmae: nmae(total, scale).ok(),
            counted: total.counted,
            skipped: total.skipped,
            curve: Vec::new(),
            config: vec![("scale".into(), scale.to_string())],
            extra: Vec::new(),
            valid: true,
        }
    }

    pub fn with_config(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.config.push((key.into(), value.to_string()));
        self
    }

    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Mean of the defined curve values with `lo <= x <= hi`.
    pub fn curve_mean(&self, lo: u32, hi: u32) -> Option<f64> {
        let vals: Vec<f64> = self
            .curve
            .iter()
            .filter(|p| (lo..=hi).contains(&p.x))
            .filter_map(|p| p.nmae)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn fmt_nmae(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

impl fmt::Display for ValidationReport {
    /// `#`-prefixed header with the configuration, a summary line, then one
    /// `step<TAB>nmae<TAB>skipped` line per curve point.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# protocol\t{}", self.protocol)?;
        writeln!(f, "# algorithm\t{}", self.algorithm)?;
        for (k, v) in &self.config {
            writeln!(f, "# {k}\t{v}")?;
        }
        write!(
            f,
            "summary\tnmae={}\tcounted={}\tskipped={}\tvalid={}",
            fmt_nmae(self.overall_nmae),
            self.counted,
            self.skipped,
            self.valid
        )?;
        for (k, v) in &self.extra {
            write!(f, "\t{k}={v}")?;
        }
        writeln!(f)?;
        if !self.curve.is_empty() {
            writeln!(f, "step\tnmae\tskipped")?;
            for p in &self.curve {
                writeln!(f, "{}\t{}\t{}", p.x, fmt_nmae(p.nmae), p.skipped)?;
            }
        }
        Ok(())
    }
}
