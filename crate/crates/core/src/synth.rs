//! Seeded synthetic event streams.
//!
//! Each topic gets Poisson background counts per language. Every outbreak
//! adds `magnitude` events per day for `burst_len` days to each language that
//! covers it; coverage is drawn independently per language with probability
//! `coverage`. A silver report lands `report_lag` days after the burst starts.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{write_silver_csv, SilverReport};
use crate::event_model::{Language, TopicKey, WireFrame};

const DISEASES: [&str; 8] = [
    "cholera", "dengue", "influenza", "measles", "fmd", "anthrax", "malaria", "rabies",
];
const COUNTRIES: [&str; 16] = [
    "ao", "br", "bo", "cn", "ro", "us", "vn", "th", "id", "ph", "in", "ng", "cd", "pe", "mx", "kh",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub start_day: NaiveDate,
    pub days: usize,
    pub topics: usize,
    pub languages: Vec<Language>,
    /// Mean background events per day, per language.
    pub background_rate: f64,
    /// Burst start offsets (days from `start_day`), applied to every topic.
    pub outbreak_days: Vec<usize>,
    pub burst_len: usize,
    /// Extra events per day, per covering language, during a burst.
    pub magnitude: u32,
    /// Probability that a given language covers a given outbreak.
    pub coverage: f64,
    pub report_lag: usize,
    /// Zero all counts on Saturdays and Sundays.
    pub weekend_outage: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            start_day: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            days: 151,
            topics: 1,
            languages: vec![Language::En],
            background_rate: 1.0,
            outbreak_days: vec![60],
            burst_len: 4,
            magnitude: 10,
            coverage: 1.0,
            report_lag: 3,
            weekend_outage: false,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("background rate must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("coverage must lie in [0, 1], got {0}")]
    BadCoverage(f64),
    #[error("need at least one day, one topic and one language")]
    Empty,
    #[error("outbreak at day {day} with report lag {lag} runs past the {days}-day range")]
    OutbreakOutOfRange { day: usize, lag: usize, days: usize },
}

/// Ground truth for one injected outbreak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outbreak {
    pub topic: TopicKey,
    pub start_day: NaiveDate,
    pub report_day: NaiveDate,
    pub languages: BTreeSet<Language>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub frames: Vec<WireFrame>,
    pub reports: Vec<SilverReport>,
    pub outbreaks: Vec<Outbreak>,
}

impl SynthOutput {
    pub fn events_ndjson(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            let _ = writeln!(out, "{}", serde_json::to_string(f).expect("frame serialises"));
        }
        out
    }

    pub fn silver_csv(&self) -> String {
        write_silver_csv(&self.reports)
    }
}

pub fn topic_name(i: usize) -> TopicKey {
    let country = if i < COUNTRIES.len() {
        COUNTRIES[i].to_string()
    } else {
        format!("{}{}", COUNTRIES[i % COUNTRIES.len()], i / COUNTRIES.len())
    };
    TopicKey::new(DISEASES[i % DISEASES.len()], &country)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.background_rate.is_finite() && self.background_rate >= 0.0) {
            return Err(SynthError::BadRate(self.background_rate));
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(SynthError::BadCoverage(self.coverage));
        }
        if self.days == 0 || self.topics == 0 || self.languages.is_empty() {
            return Err(SynthError::Empty);
        }
        for &day in &self.outbreak_days {
            if day + self.report_lag.max(self.burst_len.saturating_sub(1)) >= self.days {
                return Err(SynthError::OutbreakOutOfRange {
                    day,
                    lag: self.report_lag,
                    days: self.days,
                });
            }
        }
        Ok(())
    }
}

/// Generates events and silver reports. Identical specs give identical output.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = (spec.background_rate > 0.0)
        .then(|| Poisson::new(spec.background_rate).expect("positive rate"));
    let langs = &spec.languages;

    let mut outbreaks = Vec::new();
    // extra[topic][lang][day]
    let mut extra = vec![vec![vec![0u32; spec.days]; langs.len()]; spec.topics];
    if spec.magnitude > 0 {
        for (ti, per_lang) in extra.iter_mut().enumerate() {
            let topic = topic_name(ti);
            for &start in &spec.outbreak_days {
                let mut covering = BTreeSet::new();
                for (li, lang) in langs.iter().enumerate() {
                    if rng.random_bool(spec.coverage) {
                        covering.insert(*lang);
                        let end = (start + spec.burst_len).min(spec.days);
                        for d in &mut per_lang[li][start..end] {
                            *d += spec.magnitude;
                        }
                    }
                }
                outbreaks.push(Outbreak {
                    topic: topic.clone(),
                    start_day: spec.start_day + Days::new(start as u64),
                    report_day: spec.start_day + Days::new((start + spec.report_lag) as u64),
                    languages: covering,
                });
            }
        }
    }

    let mut frames = Vec::new();
    for d in 0..spec.days {
        let day = spec.start_day + Days::new(d as u64);
        let outage = spec.weekend_outage && matches!(day.weekday(), Weekday::Sat | Weekday::Sun);
        for (ti, per_lang) in extra.iter().enumerate() {
            let topic = topic_name(ti);
            for (li, lang) in langs.iter().enumerate() {
                let bg = background.map_or(0, |p| p.sample(&mut rng) as u32);
                let n = if outage { 0 } else { bg + per_lang[li][d] };
                for _ in 0..n {
                    let hour: u32 = rng.random_range(0..24);
                    frames.push(WireFrame {
                        disease: topic.disease.clone(),
                        country: topic.country.clone(),
                        province: None,
                        language: lang.code().to_string(),
                        timestamp: format!("{day}T{hour:02}:00:00Z"),
                    });
                }
            }
        }
    }

    let mut reports: Vec<SilverReport> = outbreaks
        .iter()
        .map(|o| SilverReport {
            topic: o.topic.clone(),
            report_day: o.report_day,
        })
        .collect();
    reports.sort();
    Ok(SynthOutput {
        frames,
        reports,
        outbreaks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{baseline_stats, c2_stat, run_detector, DetectorConfig, Model};
    use crate::event_model::{bucket_counts, parse_event_frames, DayRange, InputFormat};

    #[test]
    fn zero_magnitude_has_no_reports() {
        let out = generate(&SynthSpec {
            magnitude: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(out.reports.is_empty());
        assert!(out.outbreaks.is_empty());
        assert!(!out.frames.is_empty());
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let spec = SynthSpec {
            languages: vec![Language::En, Language::Es],
            coverage: 0.5,
            topics: 3,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.events_ndjson(), b.events_ndjson());
        assert_eq!(a.silver_csv(), b.silver_csv());
        let c = generate(&SynthSpec { seed: 7, ..spec }).unwrap();
        assert_ne!(a.events_ndjson(), c.events_ndjson());
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(
            generate(&SynthSpec {
                background_rate: -1.0,
                ..Default::default()
            }),
            Err(SynthError::BadRate(-1.0))
        );
        assert!(matches!(
            generate(&SynthSpec {
                coverage: 1.5,
                ..Default::default()
            }),
            Err(SynthError::BadCoverage(_))
        ));
        assert!(matches!(
            generate(&SynthSpec {
                outbreak_days: vec![149],
                ..Default::default()
            }),
            Err(SynthError::OutbreakOutOfRange { .. })
        ));
    }

    #[test]
    fn weekend_outage_zeroes_weekends() {
        let out = generate(&SynthSpec {
            weekend_outage: true,
            ..Default::default()
        })
        .unwrap();
        let parsed = parse_event_frames(&out.events_ndjson(), InputFormat::Ndjson);
        assert!(parsed.errors.is_empty());
        assert!(parsed
            .frames
            .iter()
            .all(|f| !matches!(f.observed_day.weekday(), Weekday::Sat | Weekday::Sun)));
    }

    #[test]
    fn burst_over_background_trips_c2() {
        let spec = SynthSpec::default();
        let out = generate(&spec).unwrap();
        let parsed = parse_event_frames(&out.events_ndjson(), InputFormat::Ndjson);
        let range = DayRange::from_len(spec.start_day, spec.days).unwrap();
        let topic = topic_name(0);
        let series = bucket_counts(&parsed.frames, &topic, &Language::all(), range);
        let cfg = DetectorConfig::new(Model::C2);
        let alarms = run_detector(&series, &cfg).unwrap();

        let first = spec.outbreak_days[0];
        // hand evaluation of the C2 statistic on the first burst day
        let window: Vec<f64> = series.counts[first - 9..first - 2]
            .iter()
            .map(|&c| c as f64)
            .collect();
        let mu = window.iter().sum::<f64>() / 7.0;
        let sd = (window.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 6.0)
            .sqrt()
            .max(0.2);
        let expected = ((series.counts[first] as f64 - (mu + sd)) / sd).max(0.0);
        let base = baseline_stats(&series, first, &cfg).unwrap();
        assert!((c2_stat(series.counts[first] as f64, &base, &cfg) - expected).abs() < 1e-12);
        assert!(series.counts[first] >= 10);
        assert!(expected > 0.2);
        assert!(alarms.records[first].alarm);

        let report = out.reports[0].report_day;
        assert_eq!(report, spec.start_day + Days::new((first + spec.report_lag) as u64));
    }
}
