//! Threshold selection on held-out streams.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{DetectorConfig, Model};
use crate::evaluation::{evaluate_run, EvalError, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuneError {
    #[error("empty {0} grid")]
    EmptyGrid(&'static str),
    #[error("{0} candidates must be finite")]
    NonFinite(&'static str),
    #[error("no held-out streams")]
    NoStreams,
    #[error("no alertable events in held-out data")]
    NoAlertableEvents,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Candidate thresholds (and, for EWMA, smoothing constants) for one model.
/// Candidates are held sorted ascending with duplicates removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub model: Model,
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
}

fn normalise(mut v: Vec<f64>, what: &'static str) -> Result<Vec<f64>, TuneError> {
    if v.is_empty() {
        return Err(TuneError::EmptyGrid(what));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(TuneError::NonFinite(what));
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

impl TuneGrid {
    pub fn new(
        model: Model,
        thresholds: Vec<f64>,
        lambdas: Option<Vec<f64>>,
    ) -> Result<Self, TuneError> {
        Ok(Self {
            model,
            thresholds: normalise(thresholds, "threshold")?,
            lambdas: lambdas.map(|l| normalise(l, "lambda")).transpose()?,
        })
    }

    /// Thresholds 0.1 to 3.0 in steps of 0.1; for EWMA also lambda 0.1 to 0.9.
    pub fn default_for(model: Model) -> Self {
        let thresholds = (1..=30).map(|i| i as f64 / 10.0).collect();
        let lambdas = (model == Model::Ewma).then(|| (1..=9).map(|i| i as f64 / 10.0).collect());
        Self {
            model,
            thresholds,
            lambdas,
        }
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        TuneGrid::new(self.model, self.thresholds.clone(), self.lambdas.clone()).map(|_| ())
    }
}

/// Held-out score for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub threshold: f64,
    pub lambda: f64,
    pub f1: Option<f64>,
    pub timeliness_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub config: DetectorConfig,
    pub points: Vec<GridPoint>,
}

/// Preference order: higher F1, then earlier alerting, then the larger
/// threshold, then the smaller lambda.
fn prefer(a: &GridPoint, b: &GridPoint) -> Ordering {
    let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    key(a.f1)
        .total_cmp(&key(b.f1))
        .then(key(a.timeliness_days).total_cmp(&key(b.timeliness_days)))
        .then(a.threshold.total_cmp(&b.threshold))
        .then(b.lambda.total_cmp(&a.lambda))
}

/// Evaluates every grid point on the held-out streams and returns the config
/// with the best pooled F1, ties broken by mean lead time and then by the
/// larger threshold.
pub fn grid_search(
    held_out: &[Stream],
    grid: &TuneGrid,
    base: &DetectorConfig,
) -> Result<TuneOutcome, TuneError> {
    grid.validate()?;
    if held_out.is_empty() {
        return Err(TuneError::NoStreams);
    }
    let lambdas = match (&grid.lambdas, grid.model) {
        (Some(l), Model::Ewma) => l.clone(),
        _ => vec![base.lambda],
    };
    let mut points = Vec::with_capacity(grid.thresholds.len() * lambdas.len());
    for &lambda in &lambdas {
        for &threshold in &grid.thresholds {
            let cfg = DetectorConfig {
                model: grid.model,
                threshold,
                lambda,
                ..base.clone()
            };
            let r = evaluate_run(held_out, &cfg)?;
            points.push(GridPoint {
                threshold,
                lambda,
                f1: r.f1,
                timeliness_days: r.timeliness_days,
            });
        }
    }
    let best = points
        .iter()
        .filter(|p| p.f1.is_some())
        .max_by(|a, b| prefer(a, b))
        .ok_or(TuneError::NoAlertableEvents)?;
    let config = DetectorConfig {
        model: grid.model,
        threshold: best.threshold,
        lambda: best.lambda,
        ..base.clone()
    };
    Ok(TuneOutcome { config, points })
}
