//! Scoring alarms against a silver-standard report timeline.
//!
//! Each silver report opens a qualifying window covering the report day and
//! the seven days before it. A window with at least one alarm day is a true
//! positive, a window without one a false negative. Alarm days outside every
//! window are false positives and quiet days outside every window are true
//! negatives.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::AddAssign;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{run_detector, AlarmSeries, DetectError, DetectorConfig};
use crate::event_model::{parse_day, CountSeries, DayRange, TopicKey};

/// Days before the report day that still qualify.
pub const WINDOW_LEAD_DAYS: u64 = 7;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SilverReport {
    pub topic: TopicKey,
    pub report_day: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no streams to evaluate")]
    NoStreams,
    #[error("stream for {0} has no days")]
    EmptySeries(TopicKey),
    #[error("report for {report} paired with alarms for {alarms}")]
    TopicMismatch { alarms: TopicKey, report: TopicKey },
    #[error("report for {topic} on {day} lies outside the surveillance range")]
    ReportOutOfRange { topic: TopicKey, day: NaiveDate },
    #[error("silver line {line}: {message}")]
    Silver { line: u64, message: String },
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Parses `topic_disease,topic_country,report_date` rows. A first row whose
/// first cell is `topic_disease` is skipped as a header.
pub fn parse_silver_csv(input: &str) -> Result<Vec<SilverReport>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| EvalError::Silver {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if i == 0 && record.get(0) == Some("topic_disease") {
            continue;
        }
        if record.len() != 3 {
            return Err(EvalError::Silver {
                line,
                message: format!("expected 3 columns, found {}", record.len()),
            });
        }
        let report_day =
            parse_day(&record[2]).map_err(|message| EvalError::Silver { line, message })?;
        out.push(SilverReport {
            topic: TopicKey::new(&record[0], &record[1]),
            report_day,
        });
    }
    Ok(out)
}

/// Renders reports in the silver CSV format, with header.
pub fn write_silver_csv(reports: &[SilverReport]) -> String {
    let mut out = String::from("topic_disease,topic_country,report_date\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.topic.disease, r.topic.country, r.report_day
        );
    }
    out
}

/// The eight calendar days ending at (and including) a silver report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualifyingWindow {
    pub topic: TopicKey,
    pub report_day: NaiveDate,
    pub start_day: NaiveDate,
    pub end_day: NaiveDate,
}

impl QualifyingWindow {
    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start_day <= day && day <= self.end_day
    }
}

pub fn qualifying_windows(reports: &[SilverReport]) -> Vec<QualifyingWindow> {
    let mut sorted: Vec<&SilverReport> = reports.iter().collect();
    sorted.sort_by(|a, b| (a.report_day, &a.topic).cmp(&(b.report_day, &b.topic)));
    sorted
        .into_iter()
        .map(|r| QualifyingWindow {
            topic: r.topic.clone(),
            report_day: r.report_day,
            start_day: r.report_day - Days::new(WINDOW_LEAD_DAYS),
            end_day: r.report_day,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub surveillance_days: u64,
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.surveillance_days += o.surveillance_days;
    }
}

fn check_windows(
    alarms: &AlarmSeries,
    windows: &[QualifyingWindow],
    range: DayRange,
) -> Result<(), EvalError> {
    for w in windows {
        if w.topic != alarms.topic {
            return Err(EvalError::TopicMismatch {
                alarms: alarms.topic.clone(),
                report: w.topic.clone(),
            });
        }
        if !range.contains(w.report_day) {
            return Err(EvalError::ReportOutOfRange {
                topic: w.topic.clone(),
                day: w.report_day,
            });
        }
    }
    Ok(())
}

/// Confusion counts for one topic over `range`. Windows reaching back before
/// the start of the range are clipped to it; a report day outside the range
/// is an error.
pub fn confusion(
    alarms: &AlarmSeries,
    windows: &[QualifyingWindow],
    range: DayRange,
) -> Result<ConfusionCounts, EvalError> {
    check_windows(alarms, windows, range)?;
    let alarm_days: BTreeSet<NaiveDate> =
        alarms.alarm_days().filter(|d| range.contains(*d)).collect();

    let mut c = ConfusionCounts {
        surveillance_days: range.len() as u64,
        ..Default::default()
    };
    for w in windows {
        if alarm_days.range(w.start_day..=w.end_day).next().is_some() {
            c.tp += 1;
        } else {
            c.fn_ += 1;
        }
    }
    for day in range.days() {
        if windows.iter().any(|w| w.contains(day)) {
            continue;
        }
        if alarm_days.contains(&day) {
            c.fp += 1;
        } else {
            c.tn += 1;
        }
    }
    Ok(c)
}

/// Harmonic mean of sensitivity and PPV.
pub fn f1_score(se: f64, ppv: f64) -> Option<f64> {
    (se + ppv > 0.0).then(|| 2.0 * se * ppv / (se + ppv))
}

/// Point estimates; `None` wherever the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub se: Option<f64>,
    pub sp: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let se = ratio(c.tp, c.tp + c.fn_);
    let ppv = ratio(c.tp, c.tp + c.fp);
    Metrics {
        se,
        sp: ratio(c.tn, c.tn + c.fp),
        ppv,
        npv: ratio(c.tn, c.tn + c.fn_),
        f1: se.zip(ppv).and_then(|(s, p)| f1_score(s, p)),
    }
}

/// Alarm days per 100 surveillance days.
pub fn alarm_rate(alarm_days: u64, surveillance_days: u64) -> Option<f64> {
    (surveillance_days > 0).then(|| 100.0 * alarm_days as f64 / surveillance_days as f64)
}

/// For each window holding an alarm, days between its earliest alarm and the
/// report day.
fn lead_times(alarms: &AlarmSeries, windows: &[QualifyingWindow]) -> Vec<i64> {
    let days: BTreeSet<NaiveDate> = alarms.alarm_days().collect();
    windows
        .iter()
        .filter_map(|w| {
            let first = days.range(w.start_day..=w.end_day).next()?;
            Some((w.report_day - *first).num_days())
        })
        .collect()
}

/// Mean lead time over windows holding at least one alarm.
pub fn timeliness(alarms: &AlarmSeries, windows: &[QualifyingWindow]) -> Option<f64> {
    let leads = lead_times(alarms, windows);
    (!leads.is_empty()).then(|| leads.iter().sum::<i64>() as f64 / leads.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, trials: u64, z: f64) -> Option<Interval> {
    if trials == 0 || successes > trials {
        return None;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // the exact interval always contains p; guard against rounding at 0 and 1
    Some(Interval {
        lo: (centre - half).clamp(0.0, p),
        hi: (centre + half).clamp(p, 1.0),
    })
}

/// z for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci: Interval,
}

fn estimate(num: u64, den: u64) -> Option<Estimate> {
    Some(Estimate {
        value: ratio(num, den)?,
        ci: wilson_ci(num, den, Z_95)?,
    })
}

/// Pooled evaluation of one detector config across one or more streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub config: DetectorConfig,
    pub streams: usize,
    pub confusion: ConfusionCounts,
    pub se: Option<Estimate>,
    pub sp: Option<Estimate>,
    pub ppv: Option<Estimate>,
    pub npv: Option<Estimate>,
    pub f1: Option<f64>,
    pub alarm_days: u64,
    pub alarms_per_100: Option<f64>,
    pub timeliness_days: Option<f64>,
    pub alarmed_windows: u64,
}

impl EvalResult {
    pub fn metrics(&self) -> Metrics {
        metrics(&self.confusion)
    }
}

/// A count series paired with the silver reports for its topic.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub series: CountSeries,
    pub reports: Vec<SilverReport>,
}

/// Micro-aggregated evaluation of precomputed alarm series: confusion counts
/// and alarm days are summed across streams before any ratio is taken, and
/// timeliness averages over every alarmed window.
pub fn evaluate_alarms(runs: &[(AlarmSeries, Vec<SilverReport>)]) -> Result<EvalResult, EvalError> {
    let (first, _) = runs.first().ok_or(EvalError::NoStreams)?;
    let mut total = ConfusionCounts::default();
    let mut alarm_days = 0u64;
    let mut leads = Vec::new();
    for (alarms, reports) in runs {
        let range = alarms
            .range()
            .ok_or_else(|| EvalError::EmptySeries(alarms.topic.clone()))?;
        let windows = qualifying_windows(reports);
        total += confusion(alarms, &windows, range)?;
        alarm_days += alarms.alarm_days().filter(|d| range.contains(*d)).count() as u64;
        leads.extend(lead_times(alarms, &windows));
    }
    let m = metrics(&total);
    let c = &total;
    Ok(EvalResult {
        config: first.config.clone(),
        streams: runs.len(),
        confusion: total,
        se: estimate(c.tp, c.tp + c.fn_),
        sp: estimate(c.tn, c.tn + c.fp),
        ppv: estimate(c.tp, c.tp + c.fp),
        npv: estimate(c.tn, c.tn + c.fn_),
        f1: m.f1,
        alarm_days,
        alarms_per_100: alarm_rate(alarm_days, c.surveillance_days),
        timeliness_days: (!leads.is_empty())
            .then(|| leads.iter().sum::<i64>() as f64 / leads.len() as f64),
        alarmed_windows: leads.len() as u64,
    })
}

/// Runs `cfg` over every stream and evaluates the pooled result.
pub fn evaluate_run(streams: &[Stream], cfg: &DetectorConfig) -> Result<EvalResult, EvalError> {
    let runs = streams
        .iter()
        .map(|s| Ok((run_detector(&s.series, cfg)?, s.reports.clone())))
        .collect::<Result<Vec<_>, EvalError>>()?;
    evaluate_alarms(&runs)
}

fn fmt_estimate(e: &Option<Estimate>) -> String {
    match e {
        Some(e) => format!("{:.2} ({:.2},{:.2})", e.value, e.ci.lo, e.ci.hi),
        None => "N/A".to_string(),
    }
}

fn fmt_opt(v: Option<f64>, places: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.places$}"))
}

/// Plain-text table with one row per labelled result: Se, Sp, PPV, NPV (each
/// with its 95% interval), alarms per 100 days, mean lead days and F1.
pub fn render_table(rows: &[(String, EvalResult)]) -> String {
    let header = [
        "model", "Se", "Sp", "PPV", "NPV", "Alarms/100d", "LeadDays", "F1",
    ];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|(label, r)| {
            [
                label.clone(),
                fmt_estimate(&r.se),
                fmt_estimate(&r.sp),
                fmt_estimate(&r.ppv),
                fmt_estimate(&r.npv),
                fmt_opt(r.alarms_per_100, 1),
                fmt_opt(r.timeliness_days, 1),
                fmt_opt(r.f1, 2),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let joined: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(joined.join("  ").trim_end());
        out.push('\n');
    };
    line(&header);
    for row in &body {
        line(&row.each_ref().map(String::as_str));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{DayRecord, Model};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn day(n: u64) -> NaiveDate {
        // day 1 of the fixtures
        NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + Days::new(n - 1)
    }

    fn topic() -> TopicKey {
        TopicKey::new("cholera", "ao")
    }

    fn alarms_on(len: u64, alarm: &[u64]) -> AlarmSeries {
        AlarmSeries {
            topic: topic(),
            config: DetectorConfig::new(Model::C2),
            records: (1..=len)
                .map(|d| DayRecord {
                    day: day(d),
                    count: 0,
                    statistic: Some(0.0),
                    alarm: alarm.contains(&d),
                })
                .collect(),
        }
    }

    fn reports(days: &[u64]) -> Vec<SilverReport> {
        days.iter()
            .map(|&d| SilverReport {
                topic: topic(),
                report_day: day(d),
            })
            .collect()
    }

    fn range(len: u64) -> DayRange {
        DayRange::new(day(1), day(len)).unwrap()
    }

    /// Day-by-day enumeration, independent of `confusion`.
    fn brute_force(len: u64, alarm: &[u64], report_days: &[u64]) -> ConfusionCounts {
        let in_window = |d: u64, r: u64| d + 7 >= r && d <= r;
        let mut c = ConfusionCounts {
            surveillance_days: len,
            ..Default::default()
        };
        for &r in report_days {
            if alarm.iter().any(|&a| in_window(a, r)) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
            }
        }
        for d in 1..=len {
            if report_days.iter().any(|&r| in_window(d, r)) {
                continue;
            }
            if alarm.contains(&d) {
                c.fp += 1;
            } else {
                c.tn += 1;
            }
        }
        c
    }

    #[test]
    fn window_spans_eight_days() {
        let w = qualifying_windows(&reports(&[10]));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].start_day, day(3));
        assert_eq!(w[0].end_day, day(10));
        assert_eq!((w[0].end_day - w[0].start_day).num_days() + 1, 8);

        let w = qualifying_windows(&reports(&[12, 10]));
        assert_eq!((w[0].start_day, w[0].end_day), (day(3), day(10)));
        assert_eq!((w[1].start_day, w[1].end_day), (day(5), day(12)));
        assert!(qualifying_windows(&[]).is_empty());
    }

    #[test]
    fn confusion_twenty_day_fixture() {
        let a = alarms_on(20, &[5, 12]);
        let w = qualifying_windows(&reports(&[10]));
        let c = confusion(&a, &w, range(20)).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 0, 11));
        assert_eq!(c, brute_force(20, &[5, 12], &[10]));
    }

    #[test]
    fn confusion_without_alarms() {
        let a = alarms_on(20, &[]);
        let w = qualifying_windows(&reports(&[10]));
        let c = confusion(&a, &w, range(20)).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (0, 0, 1, 20 - 8));
    }

    #[test]
    fn alarm_in_overlap_credits_both_windows() {
        let a = alarms_on(20, &[8]);
        let w = qualifying_windows(&reports(&[10, 12]));
        let c = confusion(&a, &w, range(20)).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 0, 0));
        assert_eq!(c, brute_force(20, &[8], &[10, 12]));
    }

    #[test]
    fn confusion_errors() {
        let a = alarms_on(20, &[]);
        let w = qualifying_windows(&reports(&[25]));
        assert!(matches!(
            confusion(&a, &w, range(20)),
            Err(EvalError::ReportOutOfRange { .. })
        ));
        let other = qualifying_windows(&[SilverReport {
            topic: TopicKey::new("dengue", "br"),
            report_day: day(5),
        }]);
        assert!(matches!(
            confusion(&a, &other, range(20)),
            Err(EvalError::TopicMismatch { .. })
        ));
        // early report: window clipped to the range start
        let c = confusion(&a, &qualifying_windows(&reports(&[3])), range(20)).unwrap();
        assert_eq!((c.fn_, c.tn), (1, 17));
    }

    #[test]
    fn metric_examples() {
        assert_abs_diff_eq!(f1_score(0.52, 0.54).unwrap(), 0.53, epsilon = 0.005);
        assert_abs_diff_eq!(f1_score(0.67, 0.48).unwrap(), 0.56, epsilon = 0.005);

        let m = metrics(&ConfusionCounts {
            tn: 30,
            surveillance_days: 30,
            ..Default::default()
        });
        assert_eq!(m.se, None);
        assert_eq!(m.ppv, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.sp, Some(1.0));

        let m = metrics(&ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 11,
            surveillance_days: 20,
        });
        assert_eq!(m.se, Some(1.0));
        assert_eq!(m.ppv, Some(0.5));
        assert_abs_diff_eq!(m.f1.unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(m.sp, Some(11.0 / 12.0));
        assert_eq!(m.npv, Some(1.0));
    }

    #[test]
    fn alarm_rate_examples() {
        assert_abs_diff_eq!(alarm_rate(153, 2064).unwrap(), 7.41, epsilon = 0.005);
        assert_eq!(alarm_rate(0, 100), Some(0.0));
        assert_abs_diff_eq!(alarm_rate(21, 129).unwrap(), 16.28, epsilon = 0.005);
        assert_eq!(alarm_rate(3, 0), None);
    }

    #[test]
    fn timeliness_examples() {
        let w = qualifying_windows(&reports(&[10]));
        assert_eq!(timeliness(&alarms_on(20, &[5, 12]), &w), Some(5.0));
        assert_eq!(timeliness(&alarms_on(20, &[10]), &w), Some(0.0));
        assert_eq!(timeliness(&alarms_on(20, &[12]), &w), None);
        let w2 = qualifying_windows(&reports(&[10, 20]));
        assert_eq!(timeliness(&alarms_on(20, &[4, 16, 18]), &w2), Some(5.0));
    }

    #[test]
    fn wilson_examples() {
        let ci = wilson_ci(50, 100, Z_95).unwrap();
        assert_abs_diff_eq!(ci.lo, 0.404, epsilon = 5e-4);
        assert_abs_diff_eq!(ci.hi, 0.596, epsilon = 5e-4);
        assert_eq!(wilson_ci(0, 10, Z_95).unwrap().lo, 0.0);
        assert_eq!(wilson_ci(10, 10, Z_95).unwrap().hi, 1.0);
        assert_eq!(wilson_ci(0, 0, Z_95), None);
    }

    fn stream_series(counts: &[u32]) -> CountSeries {
        CountSeries::new(topic(), day(1), counts.to_vec(), BTreeSet::new())
    }

    #[test]
    fn evaluate_run_aggregation() {
        let mut counts = vec![2u32; 20];
        counts[12] = 6;
        counts[17] = 7;
        let s = Stream {
            series: stream_series(&counts),
            reports: reports(&[15]),
        };
        let cfg = DetectorConfig::new(Model::C2);
        let one = evaluate_run(std::slice::from_ref(&s), &cfg).unwrap();
        let two = evaluate_run(&[s.clone(), s.clone()], &cfg).unwrap();
        assert_eq!(one.confusion.tp * 2, two.confusion.tp);
        assert_eq!(one.metrics(), two.metrics());
        assert_eq!(one.alarms_per_100, two.alarms_per_100);
        assert_eq!(one.timeliness_days, two.timeliness_days);

        let alarms = run_detector(&s.series, &cfg).unwrap();
        let w = qualifying_windows(&s.reports);
        assert_eq!(one.confusion, confusion(&alarms, &w, s.series.range().unwrap()).unwrap());
        assert_eq!(one.timeliness_days, timeliness(&alarms, &w));
        assert_eq!((one.confusion.tp, one.confusion.fp), (1, 1));
        assert_eq!(one.timeliness_days, Some(2.0));
        assert!(matches!(evaluate_run(&[], &cfg), Err(EvalError::NoStreams)));
    }

    #[test]
    fn pooled_matches_brute_force() {
        let a = alarms_on(30, &[4, 9, 20, 28]);
        let b = alarms_on(30, &[2, 15, 16]);
        let pooled = evaluate_alarms(&[(a, reports(&[10, 29])), (b, reports(&[16]))]).unwrap();
        let mut expected = brute_force(30, &[4, 9, 20, 28], &[10, 29]);
        expected += brute_force(30, &[2, 15, 16], &[16]);
        assert_eq!(pooled.confusion, expected);
        assert_eq!(pooled.alarm_days, 7);
        // leads: 10-4, 29-28, 16-15
        assert_eq!(pooled.timeliness_days, Some(8.0 / 3.0));
    }

    #[test]
    fn silver_csv_round_trip_and_errors() {
        let text = "topic_disease,topic_country,report_date\ncholera,AO,2010-03-06\n";
        let r = parse_silver_csv(text).unwrap();
        assert_eq!(r[0].topic, topic());
        assert_eq!(parse_silver_csv(&write_silver_csv(&r)).unwrap(), r);
        assert!(matches!(
            parse_silver_csv("cholera,ao,not-a-date\n"),
            Err(EvalError::Silver { line: 1, .. })
        ));
        assert!(parse_silver_csv("").unwrap().is_empty());
    }

    #[test]
    fn table_shows_na_for_undefined() {
        let r = evaluate_alarms(&[(alarms_on(20, &[]), vec![])]).unwrap();
        let t = render_table(&[("C2".into(), r)]);
        let row = t.lines().nth(1).unwrap();
        assert!(row.starts_with("C2"));
        // Se, PPV, lead days and F1
        assert_eq!(row.matches("N/A").count(), 4, "{row}");
    }

    fn arb_fixture() -> impl Strategy<Value = (u64, Vec<u64>, Vec<u64>)> {
        (1u64..=60).prop_flat_map(|len| {
            (
                Just(len),
                prop::collection::btree_set(1..=len, 0..=len as usize).prop_map(|s| s.into_iter().collect()),
                prop::collection::vec(1..=len, 0..=4),
            )
        })
    }

    proptest! {
        #[test]
        fn confusion_matches_enumeration((len, alarm, rep) in arb_fixture()) {
            let a = alarms_on(len, &alarm);
            let w = qualifying_windows(&reports(&rep));
            let c = confusion(&a, &w, range(len)).unwrap();
            prop_assert_eq!(c, brute_force(len, &alarm, &rep));
            prop_assert_eq!(c.tp + c.fn_, rep.len() as u64);
            let outside = (1..=len).filter(|&d| !rep.iter().any(|&r| d + 7 >= r && d <= r)).count();
            prop_assert_eq!(c.fp + c.tn, outside as u64);
        }

        #[test]
        fn extra_alarm_in_alarmed_window_changes_nothing((len, alarm, rep) in arb_fixture()) {
            let w = qualifying_windows(&reports(&rep));
            let base = confusion(&alarms_on(len, &alarm), &w, range(len)).unwrap();
            for win in &w {
                let covered: Vec<u64> = (1..=len).filter(|&d| win.contains(day(d))).collect();
                // only windows whose alarms already touch every window they share days with
                if !covered.iter().any(|d| alarm.contains(d)) {
                    continue;
                }
                for &d in &covered {
                    let touched_all = w.iter().filter(|o| o.contains(day(d))).all(|o| {
                        (1..=len).any(|x| o.contains(day(x)) && alarm.contains(&x))
                    });
                    if !touched_all {
                        continue;
                    }
                    let mut more = alarm.clone();
                    more.push(d);
                    let c = confusion(&alarms_on(len, &more), &w, range(len)).unwrap();
                    prop_assert_eq!(c, base);
                }
            }
        }

        #[test]
        fn moving_alarm_outside_adds_one_fp((len, alarm, rep) in arb_fixture()) {
            let w = qualifying_windows(&reports(&rep));
            let outside_quiet: Vec<u64> = (1..=len)
                .filter(|&d| !alarm.contains(&d) && !w.iter().any(|x| x.contains(day(d))))
                .collect();
            let inside: Vec<u64> = alarm.iter().copied().filter(|&d| w.iter().any(|x| x.contains(day(d)))).collect();
            if let (Some(&from), Some(&to)) = (inside.first(), outside_quiet.first()) {
                let before = confusion(&alarms_on(len, &alarm), &w, range(len)).unwrap();
                let moved: Vec<u64> = alarm.iter().map(|&d| if d == from { to } else { d }).collect();
                let after = confusion(&alarms_on(len, &moved), &w, range(len)).unwrap();
                prop_assert_eq!(after.fp, before.fp + 1);
                prop_assert_eq!(after.tn + 1, before.tn);
                prop_assert!(after.tp <= before.tp);
                prop_assert_eq!(after.tp + after.fn_, before.tp + before.fn_);
            }
        }

        #[test]
        fn metric_bounds(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let m = metrics(&ConfusionCounts { tp, fp, fn_, tn, surveillance_days: fp + tn + 8 });
            for v in [m.se, m.sp, m.ppv, m.npv, m.f1].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if let (Some(se), Some(ppv), Some(f1)) = (m.se, m.ppv, m.f1) {
                prop_assert!(f1 <= (se + ppv) / 2.0 + 1e-12);
                prop_assert!(f1 <= 2.0 * se.min(ppv) + 1e-12);
            }
        }

        #[test]
        fn wilson_contains_point(trials in 1u64..500, frac in 0.0f64..=1.0) {
            let s = ((trials as f64) * frac).round() as u64;
            let ci = wilson_ci(s, trials, Z_95).unwrap();
            prop_assert!(ci.contains(s as f64 / trials as f64));
            prop_assert!(0.0 <= ci.lo && ci.hi <= 1.0);
        }
    }
}
