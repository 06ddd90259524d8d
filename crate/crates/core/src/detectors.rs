//! Snapshot aberration detectors.
//!
//! Every model compares the target day `t` against a short baseline window
//! that ends `guard_len` days before `t`:
//!
//! ```text
//! [ baseline (baseline_len days) ][ guard (guard_len days) ][ t ]
//! ```
//!
//! With the defaults (7-day baseline, 2-day guard) the first day that can
//! carry a statistic is index 9 of the series.
//!
//! | model | statistic                                                      |
//! |-------|----------------------------------------------------------------|
//! | C2    | `max(0, (C_t - (mu + k*sigma)) / sigma)`                        |
//! | C3    | C2 at `t` plus the gated C2 values of the two preceding days    |
//! | W2    | C2 with Saturdays and Sundays dropped from the baseline         |
//! | FSTAT | test-window and baseline-window variances about the baseline mean |
//! | EWMA  | `(Y_t - mu) / (sigma * sqrt(lambda / (2 - lambda)))`            |

use std::fmt;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{CountSeries, DayRange, TopicKey};

/// Number of days immediately before `t` whose C2 values C3 may add in.
const C3_LOOKBACK: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    C2,
    C3,
    W2,
    #[serde(rename = "FSTAT")]
    Fstat,
    #[serde(rename = "EWMA")]
    Ewma,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::C2, Model::C3, Model::W2, Model::Fstat, Model::Ewma];

    /// Alarm thresholds tuned on held-out streams.
    pub fn default_threshold(self) -> f64 {
        match self {
            Model::C2 | Model::W2 => 0.2,
            Model::C3 => 0.3,
            Model::Fstat => 0.6,
            Model::Ewma => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::C2 => "C2",
            Model::C3 => "C3",
            Model::W2 => "W2",
            Model::Fstat => "FSTAT",
            Model::Ewma => "EWMA",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C2" => Ok(Model::C2),
            "C3" => Ok(Model::C3),
            "W2" => Ok(Model::W2),
            "FSTAT" | "F-STAT" | "F" => Ok(Model::Fstat),
            "EWMA" => Ok(Model::Ewma),
            _ => Err(format!("unknown model {s:?}")),
        }
    }
}

/// How the F-statistic combines its two variance estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FstatCombine {
    /// `sigma_t^2 + sigma_b^2`
    #[default]
    VarianceSum,
    /// `sigma_t^2 / max(sigma_b^2, min_sigma^2)`
    VarianceRatio,
}

/// A detector model together with all of its tunables.
///
/// Deserialisation fills unspecified fields from [`DetectorConfig::new`], so a
/// document holding only `model = "EWMA"` gets the EWMA threshold of 2.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct DetectorConfig {
    pub model: Model,
    pub threshold: f64,
    pub baseline_len: usize,
    pub guard_len: usize,
    pub k: f64,
    pub lambda: f64,
    pub min_sigma: f64,
    pub c3_gate_sigma: f64,
    pub fstat_test_len: usize,
    pub fstat_combine: FstatCombine,
}

impl DetectorConfig {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            threshold: model.default_threshold(),
            baseline_len: 7,
            guard_len: 2,
            k: 1.0,
            lambda: 0.2,
            min_sigma: 0.2,
            c3_gate_sigma: 3.0,
            fstat_test_len: 3,
            fstat_combine: FstatCombine::VarianceSum,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_combine(mut self, combine: FstatCombine) -> Self {
        self.fstat_combine = combine;
        self
    }

    /// Days at the head of a series that cannot carry a statistic.
    pub fn warmup(&self) -> usize {
        self.baseline_len + self.guard_len
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |msg: &str| Err(DetectError::InvalidConfig(msg.to_string()));
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad("lambda must lie strictly between 0 and 1");
        }
        if self.baseline_len < 2 {
            return bad("baseline_len must be at least 2");
        }
        if !(self.min_sigma > 0.0 && self.min_sigma.is_finite()) {
            return bad("min_sigma must be positive");
        }
        if self.fstat_test_len == 0 {
            return bad("fstat_test_len must be at least 1");
        }
        if !self.threshold.is_finite() || !self.k.is_finite() || !self.c3_gate_sigma.is_finite() {
            return bad("threshold, k and c3_gate_sigma must be finite");
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::new(Model::C2)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Model,
    threshold: Option<f64>,
    baseline_len: Option<usize>,
    guard_len: Option<usize>,
    k: Option<f64>,
    lambda: Option<f64>,
    min_sigma: Option<f64>,
    c3_gate_sigma: Option<f64>,
    fstat_test_len: Option<usize>,
    fstat_combine: Option<FstatCombine>,
}

impl TryFrom<RawConfig> for DetectorConfig {
    type Error = DetectError;

    fn try_from(raw: RawConfig) -> Result<Self, Self::Error> {
        let d = DetectorConfig::new(raw.model);
        let cfg = DetectorConfig {
            model: raw.model,
            threshold: raw.threshold.unwrap_or(d.threshold),
            baseline_len: raw.baseline_len.unwrap_or(d.baseline_len),
            guard_len: raw.guard_len.unwrap_or(d.guard_len),
            k: raw.k.unwrap_or(d.k),
            lambda: raw.lambda.unwrap_or(d.lambda),
            min_sigma: raw.min_sigma.unwrap_or(d.min_sigma),
            c3_gate_sigma: raw.c3_gate_sigma.unwrap_or(d.c3_gate_sigma),
            fstat_test_len: raw.fstat_test_len.unwrap_or(d.fstat_test_len),
            fstat_combine: raw.fstat_combine.unwrap_or(d.fstat_combine),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("day index {t} lies inside the {warmup}-day warmup")]
    Warmup { t: usize, warmup: usize },
    #[error("day index {t}: only {weekdays} weekday(s) left in the baseline window")]
    DegenerateWindow { t: usize, weekdays: usize },
    #[error("series of {len} days is too short; need more than {warmup}")]
    SeriesTooShort { len: usize, warmup: usize },
    #[error("day index {t} is past the end of the series")]
    OutOfRange { t: usize },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

/// Mean and (clamped) standard deviation of the baseline window for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStats {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub window_days: Vec<NaiveDate>,
}

fn is_weekend(day: NaiveDate) -> bool {
    matches!(day.weekday(), Weekday::Sat | Weekday::Sun)
}

fn check_day(series: &CountSeries, t: usize, cfg: &DetectorConfig) -> Result<(), DetectError> {
    if t >= series.len() {
        return Err(DetectError::OutOfRange { t });
    }
    if t < cfg.warmup() {
        return Err(DetectError::Warmup {
            t,
            warmup: cfg.warmup(),
        });
    }
    Ok(())
}

fn baseline_with(
    series: &CountSeries,
    t: usize,
    cfg: &DetectorConfig,
    skip_weekends: bool,
) -> Result<BaselineStats, DetectError> {
    check_day(series, t, cfg)?;
    let start = t - cfg.warmup();
    let end = t - cfg.guard_len;
    let (values, window_days): (Vec<f64>, Vec<NaiveDate>) = (start..end)
        .map(|i| (series.counts[i] as f64, series.day(i)))
        .filter(|(_, day)| !(skip_weekends && is_weekend(*day)))
        .unzip();
    let n = values.len();
    if n < 2 {
        return Err(DetectError::DegenerateWindow { t, weekdays: n });
    }
    let mu = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(BaselineStats {
        mu,
        sigma: var.sqrt().max(cfg.min_sigma),
        n,
        window_days,
    })
}

/// Baseline mean and sample standard deviation (clamped to `min_sigma`) for
/// target day index `t`. W2 drops weekend days from the window first.
pub fn baseline_stats(
    series: &CountSeries,
    t: usize,
    cfg: &DetectorConfig,
) -> Result<BaselineStats, DetectError> {
    baseline_with(series, t, cfg, cfg.model == Model::W2)
}

/// The C2 statistic for count `count` against `base`.
pub fn c2_stat(count: f64, base: &BaselineStats, cfg: &DetectorConfig) -> f64 {
    ((count - (base.mu + cfg.k * base.sigma)) / base.sigma).max(0.0)
}

/// C2 at `t`, plus the C2 value of each of the two preceding days whose
/// count stays below that day's own `mu + c3_gate_sigma * sigma`.
pub fn c3_stat(series: &CountSeries, t: usize, cfg: &DetectorConfig) -> Result<f64, DetectError> {
    let base = baseline_with(series, t, cfg, false)?;
    let mut stat = c2_stat(series.counts[t] as f64, &base, cfg);
    for back in 1..=C3_LOOKBACK.min(t) {
        let day = t - back;
        let Ok(b) = baseline_with(series, day, cfg, false) else {
            continue;
        };
        let count = series.counts[day] as f64;
        if count < b.mu + cfg.c3_gate_sigma * b.sigma {
            stat += c2_stat(count, &b, cfg);
        }
    }
    Ok(stat)
}

/// C2 against the weekday-only baseline.
pub fn w2_stat(series: &CountSeries, t: usize, cfg: &DetectorConfig) -> Result<f64, DetectError> {
    let base = baseline_with(series, t, cfg, true)?;
    Ok(c2_stat(series.counts[t] as f64, &base, cfg))
}

/// F-statistic over the `fstat_test_len` days ending at `t` and the baseline
/// window, both measured about the baseline mean.
pub fn f_stat(series: &CountSeries, t: usize, cfg: &DetectorConfig) -> Result<f64, DetectError> {
    check_day(series, t, cfg)?;
    if t + 1 < cfg.fstat_test_len {
        return Err(DetectError::Warmup {
            t,
            warmup: cfg.fstat_test_len - 1,
        });
    }
    let baseline = &series.counts[t - cfg.warmup()..t - cfg.guard_len];
    let mu_b = baseline.iter().map(|&c| c as f64).sum::<f64>() / baseline.len() as f64;
    let mean_sq_dev = |xs: &[u32]| {
        xs.iter().map(|&c| (c as f64 - mu_b).powi(2)).sum::<f64>() / xs.len() as f64
    };
    let test = &series.counts[t + 1 - cfg.fstat_test_len..=t];
    let var_test = mean_sq_dev(test);
    let var_base = mean_sq_dev(baseline);
    Ok(match cfg.fstat_combine {
        FstatCombine::VarianceSum => var_test + var_base,
        FstatCombine::VarianceRatio => var_test / var_base.max(cfg.min_sigma * cfg.min_sigma),
    })
}

/// The EWMA recursion `Y_1 = C_1`, `Y_t = lambda*C_t + (1-lambda)*Y_{t-1}`.
pub fn ewma_path(counts: &[u32], lambda: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(counts.len());
    let mut prev: Option<f64> = None;
    for &c in counts {
        let y = match prev {
            None => c as f64,
            Some(p) => lambda * c as f64 + (1.0 - lambda) * p,
        };
        out.push(y);
        prev = Some(y);
    }
    out
}

fn ewma_from(y: f64, base: &BaselineStats, lambda: f64) -> f64 {
    (y - base.mu) / (base.sigma * (lambda / (2.0 - lambda)).sqrt())
}

/// Standardised EWMA at `t`, with the recursion started at the first day of
/// the series and `mu`, `sigma` taken from the raw-count baseline.
pub fn ewma_stat(series: &CountSeries, t: usize, cfg: &DetectorConfig) -> Result<f64, DetectError> {
    let base = baseline_with(series, t, cfg, false)?;
    let y = ewma_path(&series.counts[..=t], cfg.lambda)[t];
    Ok(ewma_from(y, &base, cfg.lambda))
}

/// One day of detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: NaiveDate,
    pub count: u32,
    /// `None` during warmup and on degenerate W2 windows.
    pub statistic: Option<f64>,
    pub alarm: bool,
}

/// Per-day statistics and alarm flags for one topic under one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmSeries {
    pub topic: TopicKey,
    pub config: DetectorConfig,
    pub records: Vec<DayRecord>,
}

impl AlarmSeries {
    pub fn range(&self) -> Option<DayRange> {
        let first = self.records.first()?;
        let last = self.records.last()?;
        DayRange::new(first.day, last.day)
    }

    pub fn alarm_days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.records.iter().filter(|r| r.alarm).map(|r| r.day)
    }

    pub fn alarm_count(&self) -> usize {
        self.records.iter().filter(|r| r.alarm).count()
    }
}

/// Runs the configured model over every day of `series`. Warmup days and
/// degenerate W2 windows carry no statistic and never alarm; elsewhere a day
/// alarms iff its statistic is strictly above the threshold.
pub fn run_detector(series: &CountSeries, cfg: &DetectorConfig) -> Result<AlarmSeries, DetectError> {
    cfg.validate()?;
    if series.len() <= cfg.warmup() {
        return Err(DetectError::SeriesTooShort {
            len: series.len(),
            warmup: cfg.warmup(),
        });
    }
    let ewma = (cfg.model == Model::Ewma).then(|| ewma_path(&series.counts, cfg.lambda));
    let records = (0..series.len())
        .map(|t| {
            let statistic = if t < cfg.warmup() {
                None
            } else {
                let stat = match cfg.model {
                    Model::C2 => baseline_with(series, t, cfg, false)
                        .map(|b| c2_stat(series.counts[t] as f64, &b, cfg)),
                    Model::C3 => c3_stat(series, t, cfg),
                    Model::W2 => w2_stat(series, t, cfg),
                    Model::Fstat => f_stat(series, t, cfg),
                    Model::Ewma => baseline_with(series, t, cfg, false).map(|b| {
                        ewma_from(ewma.as_ref().expect("ewma path")[t], &b, cfg.lambda)
                    }),
                };
                stat.ok()
            };
            DayRecord {
                day: series.day(t),
                count: series.counts[t],
                statistic,
                alarm: statistic.is_some_and(|s| s > cfg.threshold),
            }
        })
        .collect();
    Ok(AlarmSeries {
        topic: series.topic.clone(),
        config: cfg.clone(),
        records,
    })
}
